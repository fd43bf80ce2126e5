"""From ideal populations to detector counts and back: SPAM, shot noise and fits.

Run: python3 demos/measurement_pipeline.py
"""

import math

import numpy as np

from rydiss.measurement import SpamParams, fit_exponential_loss, forward_bare, renormalize, sample_shots

gamma, n_shots = 0.11, 500
spam = SpamParams(P_u=0.93, P_l=0.35)
t = np.linspace(0, 5, 26)
ideal = 1 - np.exp(-2 * math.pi * gamma * t)

bare = forward_bare(ideal, spam)
counts, _ = sample_shots(bare, n_shots, seed=7)
recovered = renormalize(counts, spam)

fit = fit_exponential_loss((t, np.clip(recovered, 0, 1)))
print(f"true loss rate {gamma} MHz, fitted {fit.params['Gamma']:.4f} +- {fit.uncertainties['Gamma']:.4f} MHz")

naive = fit_exponential_loss((t, counts))
print(f"fitting raw detector counts without SPAM correction gives {naive.params['Gamma']:.4f} MHz")
