"""Momentum-selective loss distills W states in a three-atom ring.

Run: python3 demos/w_state_distillation.py
"""

from pathlib import Path

from rydiss.cli import load_config
from rydiss.scenarios import simulate

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "w_state_distillation.toml")
for d in (1.0, -2.0):
    run = simulate(dict(cfg, parameters=dict(cfg["parameters"], Delta_over_V=d))).tracks
    finals = {k: run[k][-1] for k in ("overlap_W0", "overlap_W+1", "overlap_W-1")}
    print(f"Delta/V = {d:+.0f}: final overlaps " + ", ".join(f"{k[8:]}={v:.4f}" for k, v in finals.items()))
