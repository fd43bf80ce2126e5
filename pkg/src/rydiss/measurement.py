"""SPAM renormalization, shot sampling, and the loss/Rabi curve fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import lombscargle

from .dynamics import TimeSeries

__all__ = [
    "SpamParams",
    "FitResult",
    "renormalize",
    "renormalize_uncertainty",
    "forward_bare",
    "sample_shots",
    "fit_exponential_loss",
    "fit_cosine",
    "DEFAULT_SHOTS",
]

TWO_PI = 2.0 * math.pi
DEFAULT_SHOTS = 500
# tracks that are bookkeeping rather than measured signals
_AUX_TRACKS = ("norm", "trace")

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class SpamParams:
    """Readout ceiling ``P_u`` and background floor ``P_l`` with optional one-sigma spreads."""

    P_u: float
    P_l: float
    sigma_u: float = 0.0
    sigma_l: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.P_l < self.P_u <= 1.0:
            raise ValueError(f"need 0 <= P_l < P_u <= 1, got P_l={self.P_l}, P_u={self.P_u}")
        if self.sigma_u < 0 or self.sigma_l < 0:
            raise ValueError("SPAM uncertainties must be non-negative")

    @property
    def span(self) -> float:
        return self.P_u - self.P_l


def renormalize(p_bare: ArrayLike, spam: SpamParams, return_flag: bool = False):
    """Map a bare probability onto the ideal scale: ``(p - P_l)/(P_u - P_l)``.

    The result is not clamped. With ``return_flag`` a boolean (array) marking
    values outside [0, 1] is returned alongside.
    """
    value = (np.asarray(p_bare, dtype=float) - spam.P_l) / spam.span
    value = float(value) if value.ndim == 0 else value
    if return_flag:
        outside = np.logical_or(np.asarray(value) < 0.0, np.asarray(value) > 1.0)
        return value, (bool(outside) if outside.ndim == 0 else outside)
    return value


def renormalize_uncertainty(p_bare: ArrayLike, p_err: ArrayLike, spam: SpamParams) -> ArrayLike:
    """Linear error propagation through :func:`renormalize`, including SPAM spreads."""
    p = np.asarray(p_bare, dtype=float)
    d = spam.span
    du = -(p - spam.P_l) / d**2
    dl = (p - spam.P_u) / d**2
    return np.sqrt((np.asarray(p_err) / d) ** 2 + (du * spam.sigma_u) ** 2 + (dl * spam.sigma_l) ** 2)


def forward_bare(p_ideal: ArrayLike, spam: SpamParams) -> ArrayLike:
    """What a detector with the given SPAM would report: ``P_l + (P_u - P_l) p``."""
    out = spam.P_l + spam.span * np.asarray(p_ideal, dtype=float)
    return float(out) if out.ndim == 0 else out


def sample_shots(p: ArrayLike, n_shots: int, seed: int):
    """Binomial shot estimate of ``p`` and its standard error.

    Works elementwise on arrays with a single seeded counter-based generator.
    """
    if int(n_shots) <= 0:
        raise ValueError("n_shots must be positive")
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    est = rng.binomial(int(n_shots), p_arr) / int(n_shots)
    err = np.sqrt(est * (1.0 - est) / int(n_shots))
    if p_arr.ndim == 0:
        return float(est), float(err)
    return est, err


@dataclass
class FitResult:
    model: str
    params: dict
    uncertainties: dict
    residual_norm: float
    converged: bool
    message: str = ""
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"model": self.model, "params": dict(self.params),
                "uncertainties": dict(self.uncertainties),
                "residual_norm": self.residual_norm, "converged": self.converged,
                "message": self.message}


def _xy(series, track: Optional[str], default: str):
    if isinstance(series, TimeSeries):
        if track is None:
            names = [k for k in series.tracks if k not in _AUX_TRACKS]
            track = default if default in series.tracks else (names[0] if len(names) == 1 else None)
            if track is None:
                raise ValueError(f"cannot choose a track from {sorted(series.tracks)}; pass track=")
        return np.asarray(series.times, float), np.asarray(series.tracks[track], float)
    t, y = series
    return np.asarray(t, float), np.asarray(y, float)


def _lm(model, jac, x0, t, y, w):
    return least_squares(lambda x: w * (model(x, t) - y), x0, jac=lambda x: w[:, None] * jac(x, t),
                         method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)


def _solve(model, jac, x0, t, y, sigma=None, n_shots=None):
    """Damped least squares; returns ``(x, sigma_x, residual_norm, converged, message)``.

    With ``sigma`` the fit is weighted and the covariance absolute. With
    ``n_shots`` (and no ``sigma``) a second pass reweights by the binomial
    variance of the first-pass model, which calibrates error bars for shot data.
    """
    absolute = sigma is not None
    w = 1.0 / np.asarray(sigma, float) if absolute else np.ones_like(y)
    res = _lm(model, jac, x0, t, y, w)
    if not absolute and n_shots:
        n = int(n_shots)
        p = np.clip(model(res.x, t), 0.5 / n, 1.0 - 0.5 / n)
        w = 1.0 / np.sqrt(p * (1.0 - p) / n)
        absolute = True
        res = _lm(model, jac, res.x, t, y, w)
    x = res.x
    resid = float(np.linalg.norm(model(x, t) - y))
    J = res.jac
    sv = np.linalg.svd(J, compute_uv=False)
    identifiable = sv.size > 0 and sv[-1] > 1e-10 * sv[0]
    converged = bool(res.status > 0 and np.all(np.isfinite(x)) and np.isfinite(resid) and identifiable)
    if identifiable:
        cov = np.linalg.pinv(J.T @ J)
        if not absolute:
            cov *= float(np.sum(res.fun**2)) / max(len(y) - len(x), 1)
        sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    else:
        sig = np.full(len(x), np.nan)
    msg = res.message if identifiable else "parameters not identifiable from the data"
    return x, sig, resid, converged, msg


def _exp_model(x, t):
    a, g = x
    return a * (1.0 - np.exp(-TWO_PI * g * t))


def _exp_jac(x, t):
    a, g = x
    e = np.exp(-TWO_PI * g * t)
    return np.column_stack([1.0 - e, a * TWO_PI * t * e])


def fit_exponential_loss(series, track: Optional[str] = None, sigma=None,
                         n_shots: Optional[int] = None) -> FitResult:
    """Least-squares fit of ``A (1 - exp(-2 pi G t))``; ``G`` is reported in MHz.

    ``sigma`` gives per-point standard errors; ``n_shots`` marks the data as
    shot estimates and enables binomial reweighting.
    """
    t, y = _xy(series, track, "loss_fraction")
    if len(t) < 4:
        raise ValueError("exponential fit needs at least 4 points")
    ymax = float(np.max(y))
    if ymax <= 0:
        return FitResult("exp_loss", {"A": 0.0, "Gamma": float("nan")},
                         {"A": float("nan"), "Gamma": float("nan")}, float(np.linalg.norm(y)),
                         False, "no loss signal")
    a0 = ymax * 1.01 if ymax >= 0.99 else 1.0
    # log-linearization: log(1 - y/A) = -2 pi G t
    frac = np.clip(1.0 - y / a0, 1e-12, None)
    mask = t > t.min()
    slope = np.polyfit(t[mask] - t.min(), np.log(frac[mask]), 1)[0] if mask.sum() >= 2 else -1.0
    g0 = max(-slope / TWO_PI, 1e-6)
    x, sig, resid, ok, msg = _solve(_exp_model, _exp_jac, np.array([a0, g0]), t, y, sigma, n_shots)
    ok = bool(ok and x[1] > 0)
    return FitResult("exp_loss", {"A": float(x[0]), "Gamma": float(x[1])},
                     {"A": float(sig[0]), "Gamma": float(sig[1])}, resid, ok, msg)


def _periodogram_guess(t, y):
    span = t.max() - t.min()
    dt = float(np.median(np.diff(np.sort(t))))
    nus = np.linspace(1.0 / (8.0 * span), 1.0 / (4.0 * dt), 4000)
    power = lombscargle(t, y - y.mean(), 2.0 * TWO_PI * nus)
    return float(nus[int(np.argmax(power))])


def _cos_model(x, t):
    b, c, nu, phi = x
    return b + c * np.cos(2.0 * TWO_PI * nu * t + phi)


def _cos_jac(x, t):
    b, c, nu, phi = x
    arg = 2.0 * TWO_PI * nu * t + phi
    s = np.sin(arg)
    return np.column_stack([np.ones_like(t), np.cos(arg), -c * 2.0 * TWO_PI * t * s, -c * s])


def fit_cosine(series, track: Optional[str] = None, sigma=None,
               n_shots: Optional[int] = None) -> FitResult:
    """Least-squares fit of ``B + C cos(4 pi nu t + phi)``; ``nu`` is the coupling in MHz.

    The population oscillates at twice ``nu``, so ``1/(4 nu)`` is the pi time.
    """
    t, y = _xy(series, track, "P_1_site0")
    if len(t) < 6:
        raise ValueError("cosine fit needs at least 6 points")
    nan = float("nan")
    if np.ptp(y) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        return FitResult("cosine", {"B": float(np.mean(y)), "C": 0.0, "nu": nan, "phi": nan},
                         dict.fromkeys(("B", "C", "nu", "phi"), nan), 0.0, False,
                         "constant data: frequency unidentifiable")
    nu0 = _periodogram_guess(t, y)
    w = 2.0 * TWO_PI * nu0
    design = np.column_stack([np.ones_like(t), np.cos(w * t), np.sin(w * t)])
    b0, ca, cb = np.linalg.lstsq(design, y, rcond=None)[0]
    x0 = np.array([b0, math.hypot(ca, cb), nu0, math.atan2(-cb, ca)])
    x, sig, resid, ok, msg = _solve(_cos_model, _cos_jac, x0, t, y, sigma, n_shots)
    b, c, nu, phi = x
    if c < 0:
        c, phi = -c, phi + math.pi
    if nu < 0:
        nu, phi = -nu, -phi
    phi = math.remainder(phi, TWO_PI)
    names = ("B", "C", "nu", "phi")
    return FitResult("cosine", dict(zip(names, map(float, (b, c, nu, phi)))),
                     dict(zip(names, map(float, sig))), resid, bool(ok and nu > 0), msg)
