"""Loss of a driven pair: Zeno suppression by drive, enhancement by exchange.

Run: python3 demos/zeno_loss.py
"""

import numpy as np

from rydiss.scenarios import simulate


def loss_after_1us(**params):
    cfg = {"scenario": "pair_exchange", "engine": "lindblad", "initial_state": "00",
           "outputs": ["loss_fraction"], "parameters": params, "grid": {"t1": 1.0, "n_steps": 10}}
    return simulate(cfg).tracks["loss_fraction"][-1]


print("drive strength (gamma = 0.13 MHz, no exchange)")
for r in np.linspace(0.25, 6.0, 9):
    print(f"  wc/gamma = {r:4.2f}: per-atom loss at 1 us = {loss_after_1us(gamma=0.13, V=0.0, wc_over_gamma=r):.3f}")

print("exchange strength (w = 0.2 MHz, gamma = 0.08 MHz)")
for v in np.linspace(0, 8, 5):
    print(f"  V = {v:3.1f} MHz: per-atom loss at 1 us = {loss_after_1us(w=0.2, gamma=0.08, V=v):.3f}")
