"""A chain with strong effective loss protects the polarized state and drains a single flip.

Run: python3 demos/chain_protection.py
"""

from pathlib import Path

from rydiss.cli import load_config
from rydiss.scenarios import simulate

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "chain_protection.toml")
for state in ("polarized", "single-flip:3"):
    run = simulate(dict(cfg, initial_state=state))
    print(f"{state:>14}: survival {run.tracks['norm'][-1]:.4f}, "
          f"normalized up fraction {run.tracks['up_fraction_normalized'][-1]:.4f}")
