"""Spectral sweeps of non-Hermitian model families and exceptional-point search."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from . import models
from .operators import DEFAULT_EIG_TOL, EigenSolverError, Operator, eig_general

__all__ = [
    "ParamAxis",
    "SweepGrid",
    "EPEstimate",
    "NoEPError",
    "FAMILIES",
    "family",
    "sweep_spectrum",
    "gap_function",
    "locate_ep",
    "pt_breaking_threshold",
    "imag_spread",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
COARSE_POINTS = 400
EP_TOL = 1e-6
# minimum |<v_i|v_j>| of the two closest eigenvectors for a gap minimum to count as an EP
COALESCENCE_MIN = 0.9


class NoEPError(ValueError):
    """No exceptional point (or symmetry-breaking threshold) in the scanned range."""


@dataclass(frozen=True)
class ParamAxis:
    name: str
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 2:
            raise ValueError(f"axis {self.name!r} needs at least two points")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError(f"axis {self.name!r} must be strictly increasing")

    @classmethod
    def linspace(cls, name: str, start: float, stop: float, num: int) -> "ParamAxis":
        return cls(name, tuple(np.linspace(start, stop, int(num))))

    def __len__(self):
        return len(self.values)


@dataclass
class SweepGrid:
    axes: tuple
    spectra: np.ndarray
    builder_id: str = ""
    errors: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Complex array of shape ``shape + (n_branches,)``; failed points are NaN."""
        n = next(len(s) for s in self.spectra.flat if s is not None)
        out = np.full(self.shape + (n,), np.nan + 1j * np.nan)
        for idx in np.ndindex(*self.shape):
            s = self.spectra[idx]
            if s is not None:
                out[idx] = s.eigenvalues
        return out

    def rows(self):
        """Yield ``(axis values..., branch, eigenvalue)`` in grid-index order."""
        for idx in np.ndindex(*self.shape):
            s = self.spectra[idx]
            if s is None:
                continue
            coords = tuple(ax.values[i] for ax, i in zip(self.axes, idx))
            for b, lam in enumerate(s.eigenvalues):
                yield coords + (b, lam)


@dataclass(frozen=True)
class EPEstimate:
    location: float
    gap_at_location: float
    bracket: tuple
    method: str = "scan+golden"
    coalescence: float = float("nan")

    def as_dict(self) -> dict:
        return {"location": self.location, "gap_at_location": self.gap_at_location,
                "bracket": list(self.bracket), "method": self.method,
                "coalescence": self.coalescence}


def _matrix(op) -> np.ndarray:
    return op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)


# Model families parametrized by dimensionless ratios; ``gamma`` sets the MHz scale.

def _single_atom(w_over_gamma: float, gamma: float = 1.0) -> Operator:
    return models.build_single_atom_nh(w_over_gamma * gamma, gamma)


def _pair_exchange(wc_over_gamma: float = 0.0, V_over_gamma: float = 0.0, gamma: float = 1.0) -> Operator:
    w = wc_over_gamma * gamma / math.sqrt(2.0)
    return models.build_pair_exchange_nh(models.PairParams(w=w, gamma=gamma, V=V_over_gamma * gamma))


def _spin_params(wc_over_w0, w_over_gamma, Vup_over_gamma, Delta_over_gamma, Vdown_over_gamma, gamma):
    w = w_over_gamma * gamma
    w0 = math.sqrt(2.0) * w / wc_over_w0
    v_up = Vup_over_gamma * gamma
    delta = v_up if Delta_over_gamma is None else Delta_over_gamma * gamma
    v_down = 0.5 * v_up if Vdown_over_gamma is None else Vdown_over_gamma * gamma
    return models.PairParams(w=w, w0=w0, gamma=gamma, V_up=v_up, V_down=v_down, Delta=delta)


def _pair_spin_reduced(wc_over_w0: float, w_over_gamma: float = 1.0, Vup_over_gamma: float = 500.0,
                       Delta_over_gamma: Optional[float] = None,
                       Vdown_over_gamma: Optional[float] = None, gamma: float = 1.0) -> Operator:
    p = _spin_params(wc_over_w0, w_over_gamma, Vup_over_gamma, Delta_over_gamma, Vdown_over_gamma, gamma)
    return models.build_pair_spin_nh_reduced(p, warn=False)


def _pair_spin_full(wc_over_w0: float, w_over_gamma: float = 1.0, Vup_over_gamma: float = 500.0,
                    Delta_over_gamma: Optional[float] = None,
                    Vdown_over_gamma: Optional[float] = None, gamma: float = 1.0) -> Operator:
    p = _spin_params(wc_over_w0, w_over_gamma, Vup_over_gamma, Delta_over_gamma, Vdown_over_gamma, gamma)
    return models.build_pair_spin_nh_full(p)


def _effective_pair(w_over_geff: float, g_eff: float = 1.0) -> Operator:
    return models.build_pair_effective_nh(w_over_geff * g_eff, g_eff)


FAMILIES: dict[str, Callable[..., Operator]] = {
    "single_atom": _single_atom,
    "pair_exchange": _pair_exchange,
    "pair_spin_reduced": _pair_spin_reduced,
    "pair_spin_full": _pair_spin_full,
    "effective_pair": _effective_pair,
}


def family(name: str, **fixed) -> Callable[..., Operator]:
    """Builder for a named family with some parameters held fixed."""
    try:
        fn = FAMILIES[name]
    except KeyError:
        raise KeyError(f"unknown model family {name!r}; known: {sorted(FAMILIES)}") from None
    builder = partial(fn, **fixed)
    builder.family_name = name
    return builder


def sweep_spectrum(builder: Callable[..., Operator], axes: Sequence[ParamAxis],
                   tol: float = DEFAULT_EIG_TOL, jobs: int = 1) -> SweepGrid:
    """Eigenvalues of ``builder(**{axis.name: value, ...})`` on the grid spanned by ``axes``.

    Branches are sorted per point (imaginary part descending, then real part
    ascending); they are not continuity-tracked. Eigensolver failures are
    recorded in ``errors`` and the sweep continues.
    """
    axes = tuple(axes)
    if not 1 <= len(axes) <= 2:
        raise ValueError("sweeps take one or two axes")
    shape = tuple(len(a) for a in axes)
    indices = list(np.ndindex(*shape))

    def point(idx):
        kwargs = {ax.name: ax.values[i] for ax, i in zip(axes, idx)}
        try:
            return idx, eig_general(builder(**kwargs), tol), None
        except EigenSolverError as exc:
            return idx, None, str(exc)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(point, indices))
    else:
        results = [point(idx) for idx in indices]
    spectra = np.empty(shape, dtype=object)
    errors = {}
    for idx, spec, err in results:
        spectra[idx] = spec
        if err is not None:
            errors[idx] = err
    return SweepGrid(axes, spectra, getattr(builder, "family_name", getattr(builder, "__name__", "")), errors)


def gap_function(builder: Callable[[float], Operator], x: float, tol: float = DEFAULT_EIG_TOL) -> float:
    """Smallest pairwise eigenvalue distance of ``builder(x)``."""
    return eig_general(builder(x), tol).min_gap()


def _coalescence(m: np.ndarray) -> float:
    spec = eig_general(m, vectors=True)
    lam, vec = spec.eigenvalues, spec.vectors
    d = np.abs(lam[:, None] - lam[None, :])
    d[np.diag_indices_from(d)] = np.inf
    i, j = np.unravel_index(np.argmin(d), d.shape)
    return float(abs(np.vdot(vec[:, i], vec[:, j])))


def locate_ep(builder: Callable[[float], Operator], axis_range: tuple,
              coarse_points: int = COARSE_POINTS, tol: float = EP_TOL) -> EPEstimate:
    """Locate an exceptional point of a one-parameter family.

    Minimizes the pairwise eigenvalue gap by a coarse scan followed by
    golden-section refinement until the bracket is narrower than ``tol``.
    A minimum on the scan boundary, or one where the two closest
    eigenvectors are not nearly parallel (an avoided crossing), raises
    :class:`NoEPError`.
    """
    lo, hi = map(float, axis_range)
    if not hi > lo:
        raise ValueError("axis_range must be increasing")
    xs = np.linspace(lo, hi, int(coarse_points))
    gs = np.array([gap_function(builder, x) for x in xs])
    i = int(np.argmin(gs))
    if i == 0 or i == len(xs) - 1:
        raise NoEPError(f"gap minimum lies on the boundary of [{lo}, {hi}]")
    a, b = xs[i - 1], xs[i + 1]
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    gc, gd = gap_function(builder, c), gap_function(builder, d)
    while b - a > tol:
        if gc <= gd:
            b, d, gd = d, c, gc
            c = b - GOLDEN * (b - a)
            gc = gap_function(builder, c)
        else:
            a, c, gc = c, d, gd
            d = a + GOLDEN * (b - a)
            gd = gap_function(builder, d)
    x, gx = (c, gc) if gc <= gd else (d, gd)
    coal = _coalescence(_matrix(builder(x)))
    if coal < COALESCENCE_MIN:
        raise NoEPError(f"gap minimum at {x:.6g} is an avoided crossing (eigenvector overlap {coal:.3f})")
    return EPEstimate(float(x), float(gx), (float(a), float(b)), "scan+golden", coal)


def imag_spread(m) -> float:
    """``max Im(lambda) - min Im(lambda)``."""
    lam = eig_general(m).eigenvalues
    return float(lam.imag.max() - lam.imag.min())


def pt_breaking_threshold(builder: Callable[[float], Operator], axis_range: tuple,
                          spread_tol: Optional[float] = None, coarse_points: int = COARSE_POINTS,
                          tol: float = EP_TOL) -> float:
    """Smallest parameter where the Im-spread exceeds its starting value by ``spread_tol``.

    ``spread_tol`` defaults to ``1e-9 * |M(lo)|_F``. The first exceeding scan
    point is refined by bisection down to ``tol``; the returned value is the
    upper end of the final bracket.
    """
    lo, hi = map(float, axis_range)
    m0 = _matrix(builder(lo))
    if spread_tol is None:
        spread_tol = 1e-9 * max(np.linalg.norm(m0), 1.0)
    base = imag_spread(m0)

    def broken(x):
        return imag_spread(builder(x)) - base > spread_tol

    xs = np.linspace(lo, hi, int(coarse_points))
    hit = next((k for k, x in enumerate(xs) if broken(x)), None)
    if hit is None:
        raise NoEPError(f"no symmetry-breaking threshold in [{lo}, {hi}]")
    if hit == 0:
        return float(lo)
    a, b = xs[hit - 1], xs[hit]
    while b - a > tol:
        mid = 0.5 * (a + b)
        if broken(mid):
            b = mid
        else:
            a = mid
    return float(b)
