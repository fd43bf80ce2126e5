"""Exceptional points of the lossy pair and how exchange interactions move them.

Run: python3 demos/exceptional_points.py
"""

import math

import numpy as np

from rydiss.spectra import ParamAxis, family, locate_ep, pt_breaking_threshold, sweep_spectrum


def along(name, axis, **fixed):
    b = family(name, **fixed)
    return lambda x: b(**{axis: x})


single = locate_ep(along("single_atom", "w_over_gamma"), (0.0, 1.0))
print(f"single atom: branches coalesce at w/gamma = {single.location:.6f}")

pair = locate_ep(along("pair_exchange", "wc_over_gamma", V_over_gamma=0.0), (0.0, 1.0))
print(f"pair, no exchange: wc/gamma = {pair.location:.6f} (sqrt(2)/4 = {math.sqrt(2) / 4:.6f})")

for v in (10.0, 40.0, 86.0):
    ep = locate_ep(along("pair_exchange", "wc_over_gamma", V_over_gamma=v), (0.5, 15.0))
    print(f"pair, V/gamma = {v:5.1f}: EP at wc/gamma = {ep.location:.4f}")

thr = pt_breaking_threshold(along("pair_exchange", "V_over_gamma", wc_over_gamma=3.5), (0.0, 100.0))
print(f"at wc/gamma = 3.5 the decay rates split once V/gamma exceeds {thr:.3f}")

grid = sweep_spectrum(family("pair_exchange", V_over_gamma=0.0), [ParamAxis.linspace("wc_over_gamma", 0, 1, 6)])
for x, lam in zip(grid.axes[0].values, grid.eigenvalues):
    rates = np.sort(np.abs(lam.imag) / (2 * math.pi))
    print(f"  wc/gamma = {x:.1f}: decay rates / gamma = {np.round(rates, 4)}")
