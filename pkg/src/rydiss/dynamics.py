"""Time evolution: Lindblad integrator, non-Hermitian propagator, jump trajectories.

Both deterministic engines use the classical fixed-step fourth-order
Runge-Kutta scheme. The generators here are time independent, so one RK4
step is the matrix polynomial ``1 + z + z^2/2 + z^3/6 + z^4/24`` of
``z = h * A``; we build that step matrix once and raise it to the number of
substeps per grid interval. This is arithmetically the same scheme as
looping over substeps, only cheaper.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .models import LindbladModel
from .operators import Operator, PureState, SectorBasis, TensorBasis, bloch_state

__all__ = [
    "IntegrationError",
    "TimeGrid",
    "TimeSeries",
    "DensityMatrix",
    "Observable",
    "evolve_lindblad",
    "evolve_nonhermitian",
    "trajectory_oracle",
    "population",
    "loss_fraction",
    "loss_any",
    "overlap",
    "total_up_fraction",
    "pi_time",
    "default_dt",
    "bloch_observables",
    "reachable_indices",
    "trajectory_rng",
]

DT_FACTOR = 0.01
SUPEROP_MAX_DIM = 32
TRACE_DRIFT_TOL = 1e-6
POSITIVITY_TOL = 1e-8
HERMITICITY_TOL = 1e-10
POP_SLACK = 1e-9


class IntegrationError(RuntimeError):
    """The integrator left its stability region; rerun with a smaller ``dt``."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform output grid in μs."""

    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be a positive integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        if not self.t1 > self.t0:
            raise ValueError("time grid must be strictly increasing (t1 > t0)")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    @property
    def span(self) -> float:
        return self.t1 - self.t0

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass
class TimeSeries:
    """Observable tracks sampled on a time grid (μs)."""

    times: np.ndarray
    tracks: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    states: Optional[list] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name, vals in list(self.tracks.items()):
            vals = np.asarray(vals, dtype=float)
            if vals.shape != self.times.shape:
                raise ValueError(f"track {name!r} has {vals.shape[0]} points, times has {len(self.times)}")
            self.tracks[name] = vals

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tracks[name]

    @property
    def names(self) -> list[str]:
        return list(self.tracks)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    basis: object
    matrix: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex, copy=True)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ValueError("density matrix shape does not match basis")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_pure(cls, psi: PureState) -> "DensityMatrix":
        return cls(psi.basis, psi.density(), psi.time)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def check(self, trace_tol: float = 1e-8) -> None:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(self.trace - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {self.trace} != 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -POSITIVITY_TOL:
            raise ValueError("density matrix is not positive semidefinite")


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian observable stored as a diagonal, a ket (rank-1 projector) or a dense matrix."""

    name: str
    kind: str
    data: np.ndarray
    bounded: bool = True

    def on_state(self, psi: np.ndarray) -> float:
        if self.kind == "diag":
            return float(np.dot(self.data, np.abs(psi) ** 2))
        if self.kind == "ket":
            return float(abs(np.vdot(self.data, psi)) ** 2)
        return float(np.vdot(psi, self.data @ psi).real)

    def on_batch(self, psis: np.ndarray) -> np.ndarray:
        """Unnormalized expectations for the columns of ``psis``."""
        if self.kind == "diag":
            return self.data @ (np.abs(psis) ** 2)
        if self.kind == "ket":
            return np.abs(self.data.conj() @ psis) ** 2
        return np.einsum("ij,ij->j", psis.conj(), self.data @ psis).real

    def on_density(self, rho: np.ndarray) -> float:
        if self.kind == "diag":
            return float(np.dot(self.data, np.diag(rho).real))
        if self.kind == "ket":
            v = self.data
            return float(np.vdot(v, rho @ v).real)
        return float(np.sum(self.data.T * rho).real)

    @classmethod
    def norm(cls, dim: int) -> "Observable":
        return cls("norm", "diag", np.ones(dim), bounded=False)

    @classmethod
    def population(cls, basis: TensorBasis, level: str, site: int, name: str = None) -> "Observable":
        _require_tensor(basis)
        if not 0 <= site < basis.n_sites:
            raise IndexError(f"site {site} out of range")
        digits = basis.site_digits()
        d = (digits[:, site] == basis.levels.index(level)).astype(float)
        return cls(name or f"P_{level}_site{site}", "diag", d)

    @classmethod
    def level_fraction(cls, basis: TensorBasis, level: str, name: str = None) -> "Observable":
        """``(1/N) sum_j |level><level|_j``."""
        _require_tensor(basis)
        if level not in basis.levels:
            raise KeyError(f"level {level!r} not in basis")
        digits = basis.site_digits()
        d = (digits == basis.levels.index(level)).mean(axis=1)
        return cls(name or f"{level}_fraction", "diag", d)

    @classmethod
    def any_level(cls, basis: TensorBasis, level: str, name: str = None) -> "Observable":
        """Probability that at least one site is in ``level``."""
        _require_tensor(basis)
        if level not in basis.levels:
            raise KeyError(f"level {level!r} not in basis")
        d = (basis.site_digits() == basis.levels.index(level)).any(axis=1).astype(float)
        return cls(name or f"any_{level}", "diag", d)

    @classmethod
    def configuration(cls, basis, label, name: str = None) -> "Observable":
        d = np.zeros(basis.dim)
        d[basis.index(label)] = 1.0
        lab = label if isinstance(label, str) else "-".join(label)
        return cls(name or f"pop:{lab}", "diag", d)

    @classmethod
    def projector(cls, target: PureState, name: str) -> "Observable":
        v = np.asarray(target.amplitudes)
        return cls(name, "ket", v / np.linalg.norm(v))


def _require_tensor(basis) -> None:
    if not isinstance(basis, TensorBasis):
        raise TypeError("site-resolved observables need a tensor-product basis")


def _amplitudes(state) -> tuple[object, np.ndarray, bool]:
    if isinstance(state, PureState):
        return state.basis, state.amplitudes, True
    if isinstance(state, DensityMatrix):
        return state.basis, state.matrix, False
    raise TypeError(f"unsupported state type {type(state).__name__}")


def _expect(state, obs: Observable) -> float:
    basis, data, pure = _amplitudes(state)
    if len(obs.data) != basis.dim:
        raise ValueError("observable and state bases differ")
    return obs.on_state(data) if pure else obs.on_density(data)


def population(state, level: str, site: int) -> float:
    """Probability of finding ``level`` on ``site``."""
    basis, _, _ = _amplitudes(state)
    return _expect(state, Observable.population(basis, level, site))


def loss_fraction(state) -> float:
    """Per-atom mean population of the ground (loss) level ``g``."""
    basis, _, _ = _amplitudes(state)
    return _expect(state, Observable.level_fraction(basis, "g"))


def loss_any(state) -> float:
    """Probability that at least one atom has been lost to ``g``."""
    basis, _, _ = _amplitudes(state)
    return _expect(state, Observable.any_level(basis, "g"))


def overlap(state, target: PureState) -> float:
    """``<t|rho|t>`` or ``|<t|psi>|^2``."""
    basis, _, _ = _amplitudes(state)
    if target.basis != basis:
        raise ValueError("target and state bases differ")
    return _expect(state, Observable.projector(target, "overlap"))


def total_up_fraction(state, normalize: bool = False) -> float:
    """``<(1/N) sum_j |up><up|_j>``, optionally divided by the surviving norm."""
    basis, data, pure = _amplitudes(state)
    val = _expect(state, Observable.level_fraction(basis, "up"))
    if normalize:
        total = float(np.vdot(data, data).real) if pure else float(np.trace(data).real)
        val /= total
    return val


def pi_time(w: float) -> float:
    """Time (μs) for full population transfer at coupling ``w`` (MHz): ``1/(4w)``."""
    if not w > 0:
        raise ValueError("coupling must be positive")
    return 1.0 / (4.0 * w)


def default_dt(omega_max: float, span: float, factor: float = DT_FACTOR) -> float:
    """Largest substep: ``min(factor/omega_max, span/1000)``."""
    if omega_max <= 0:
        return span / 1000.0
    return min(factor / omega_max, span / 1000.0)


def _norm_bound(a: np.ndarray) -> float:
    return float(min(np.abs(a).sum(axis=0).max(), np.abs(a).sum(axis=1).max()))


def _rk4_step_matrix(a: np.ndarray, h: float) -> np.ndarray:
    z = h * a
    eye = np.eye(a.shape[0], dtype=complex)
    return eye + z @ (eye + z @ (eye + z @ (eye + z / 4) / 3) / 2)


def _substeps(grid: TimeGrid, dt: float) -> int:
    return max(1, int(math.ceil(grid.dt / dt * (1 - 1e-12))))


def _interval_propagator(a: np.ndarray, grid: TimeGrid, dt: float) -> tuple[np.ndarray, int]:
    m = _substeps(grid, dt)
    step = _rk4_step_matrix(a, grid.dt / m)
    return np.linalg.matrix_power(step, m), m


def reachable_indices(generators: Iterable[np.ndarray], support: np.ndarray) -> np.ndarray:
    """Basis indices reachable from ``support`` through nonzero matrix entries.

    Amplitudes outside this set stay exactly zero, so evolving on it alone is
    exact and drops unreachable (often stiff) sectors from the step-size bound.
    """
    pattern = None
    for g in generators:
        nz = np.abs(g) > 0
        pattern = nz if pattern is None else (pattern | nz)
    seen = np.zeros(pattern.shape[0], dtype=bool)
    seen[support] = True
    frontier = seen.copy()
    while frontier.any():
        new = pattern[:, frontier].any(axis=1) & ~seen
        seen |= new
        frontier = new
    return np.flatnonzero(seen)


def _restrict(obs: Sequence[Observable], keep: np.ndarray) -> list[Observable]:
    out = []
    for o in obs:
        data = o.data[np.ix_(keep, keep)] if o.kind == "dense" else o.data[keep]
        out.append(Observable(o.name, o.kind, data, o.bounded))
    return out


def _as_operator_matrix(h) -> tuple[object, np.ndarray]:
    if isinstance(h, Operator):
        return h.basis, h.matrix
    m = np.asarray(h, dtype=complex)
    return SectorBasis(tuple(str(i) for i in range(m.shape[0]))), m


def evolve_nonhermitian(h: Union[Operator, np.ndarray], psi0: PureState, grid: TimeGrid,
                        observables: Sequence[Observable] = (), dt: Optional[float] = None,
                        store_states: bool = False) -> TimeSeries:
    """Integrate ``d psi/dt = -i H psi`` without renormalization.

    A ``norm`` track (squared norm, i.e. survival probability) is always
    recorded.
    """
    basis, hm = _as_operator_matrix(h)
    psi_full = np.array(psi0.amplitudes, dtype=complex)
    if psi_full.shape[0] != hm.shape[0]:
        raise ValueError("initial state and Hamiltonian dimensions differ")
    anti = (hm - hm.conj().T) / 2j
    dissipative = np.linalg.eigvalsh(anti).max() <= 1e-12 * max(_norm_bound(hm), 1.0)
    if not dissipative:
        warnings.warn("anti-Hermitian part is not negative semidefinite; norm may grow",
                      RuntimeWarning, stacklevel=2)
    keep = reachable_indices([hm], np.flatnonzero(psi_full))
    hr = hm[np.ix_(keep, keep)]
    psi = psi_full[keep]
    if dt is None:
        dt = default_dt(_norm_bound(hr), grid.span)
    prop, m = _interval_propagator(-1j * hr, grid, dt)

    obs = [Observable.norm(hm.shape[0])] + [o for o in observables if o.name != "norm"]
    robs = _restrict(obs, keep)
    out = np.empty((len(obs), grid.n_steps + 1))
    states = [] if store_states else None
    n2_prev = float(np.vdot(psi, psi).real)
    for k in range(grid.n_steps + 1):
        if k:
            psi = prop @ psi
        n2 = float(np.vdot(psi, psi).real)
        if not np.isfinite(n2) or (dissipative and n2 > n2_prev + 1e-9):
            raise IntegrationError(f"norm grew to {n2:.6g} at t={grid.times[k]:.6g} us; "
                                   f"reduce dt (currently {grid.dt / m:.3g} us)")
        n2_prev = n2
        for i, o in enumerate(robs):
            out[i, k] = o.on_state(psi)
        if store_states:
            full = np.zeros(hm.shape[0], dtype=complex)
            full[keep] = psi
            states.append(PureState(basis, full, float(grid.times[k])))
    _check_bounds(obs, out)
    return TimeSeries(grid.times, {o.name: out[i] for i, o in enumerate(obs)}, states=states,
                      meta={"engine": "nonhermitian", "dt": grid.dt / m, "active_dim": len(keep)})


def _check_bounds(obs: Sequence[Observable], out: np.ndarray) -> None:
    for i, o in enumerate(obs):
        if o.bounded and (out[i].min() < -POP_SLACK or out[i].max() > 1 + POP_SLACK):
            raise IntegrationError(f"observable {o.name!r} left [0, 1]; reduce dt")


def _lindblad_superoperator(k: np.ndarray, ls: Sequence[np.ndarray]) -> np.ndarray:
    # row-major vectorization: vec(A rho B) = kron(A, B.T) vec(rho)
    eye = np.eye(k.shape[0])
    sup = np.kron(k, eye) + np.kron(eye, k.conj())
    for L in ls:
        sup += np.kron(L, L.conj())
    return sup


def evolve_lindblad(model: LindbladModel, rho0, grid: TimeGrid,
                    observables: Sequence[Observable] = (), dt: Optional[float] = None,
                    store_states: bool = False) -> TimeSeries:
    """Integrate the Lindblad master equation with fixed-step RK4.

    ``rho0`` may be a :class:`DensityMatrix` or a :class:`PureState`. Trace,
    Hermiticity and positivity are checked at every grid point; violations
    raise :class:`IntegrationError` rather than being clamped.
    """
    if isinstance(rho0, PureState):
        rho0 = DensityMatrix.from_pure(rho0)
    if rho0.basis != model.basis:
        raise ValueError("initial state basis differs from model basis")
    rho0.check()
    heff = model.effective_hamiltonian().matrix
    ls_full = [L.matrix for L in model.collapse_ops]
    support = np.flatnonzero(np.abs(rho0.matrix).sum(axis=1) > 0)
    keep = reachable_indices([heff] + ls_full, support)
    d = len(keep)
    kmat = -1j * heff[np.ix_(keep, keep)]
    ls = [L[np.ix_(keep, keep)] for L in ls_full]
    ls = [L for L in ls if np.any(L)]
    if dt is None:
        omega = 2.0 * _norm_bound(kmat) + sum((_norm_bound(L) ** 2 for L in ls), 0.0)
        dt = default_dt(omega, grid.span)
    m = _substeps(grid, dt)
    h = grid.dt / m

    path = "superoperator" if d <= SUPEROP_MAX_DIM else "matrix"
    if path == "superoperator":
        prop = np.linalg.matrix_power(_rk4_step_matrix(_lindblad_superoperator(kmat, ls), h), m)

        def advance(rho):
            return (prop @ rho.reshape(-1)).reshape(d, d)
    else:
        def rhs(r):
            kr = kmat @ r
            out = kr + kr.conj().T
            for L in ls:
                out += L @ r @ L.conj().T
            return out

        def advance(rho):
            for _ in range(m):
                k1 = rhs(rho)
                k2 = rhs(rho + 0.5 * h * k1)
                k3 = rhs(rho + 0.5 * h * k2)
                k4 = rhs(rho + h * k3)
                rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            return rho

    obs = [Observable("trace", "diag", np.ones(model.dim), bounded=False)]
    obs += [o for o in observables if o.name != "trace"]
    robs = _restrict(obs, keep)
    out = np.empty((len(obs), grid.n_steps + 1))
    states = [] if store_states else None
    rho = np.array(rho0.matrix[np.ix_(keep, keep)])
    tr0 = np.trace(rho).real
    for k in range(grid.n_steps + 1):
        if k:
            rho = advance(rho)
        _check_density(rho, tr0, grid.times[k], h)
        for i, o in enumerate(robs):
            out[i, k] = o.on_density(rho)
        if store_states:
            full = np.zeros((model.dim, model.dim), dtype=complex)
            full[np.ix_(keep, keep)] = rho
            states.append(DensityMatrix(model.basis, full, float(grid.times[k])))
    _check_bounds(obs, out)
    return TimeSeries(grid.times, {o.name: out[i] for i, o in enumerate(obs)}, states=states,
                      meta={"engine": "lindblad", "path": path, "dt": h, "active_dim": d})


def _check_density(rho: np.ndarray, tr0: float, t: float, h: float) -> None:
    hint = f"at t={t:.6g} us; reduce dt (currently {h:.3g} us)"
    if not np.all(np.isfinite(rho)):
        raise IntegrationError("non-finite density matrix " + hint)
    if abs(np.trace(rho).real - tr0) > TRACE_DRIFT_TOL:
        raise IntegrationError("trace drift " + hint)
    if np.max(np.abs(rho - rho.conj().T)) > HERMITICITY_TOL:
        raise IntegrationError("density matrix lost Hermiticity " + hint)
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -POSITIVITY_TOL:
        raise IntegrationError("density matrix lost positivity " + hint)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for trajectory ``index`` of master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


TRAJ_CHUNK = 250


def _run_chunk(step, m, ls, psi0, n_out, obs, seed, start, count):
    rngs = [trajectory_rng(seed, start + i) for i in range(count)]
    psis = np.repeat(psi0[:, None], count, axis=1)
    thresholds = np.array([r.random() for r in rngs])
    values = np.empty((len(obs), n_out, count))
    n_jumps = 0
    for k in range(n_out):
        if k:
            for _ in range(m):
                psis = step @ psis
                if not ls:
                    continue
                n2 = np.einsum("ij,ij->j", psis.conj(), psis).real
                for j in np.flatnonzero(n2 < thresholds):
                    psi = psis[:, j]
                    cand = [L @ psi for L in ls]
                    weights = np.array([np.vdot(c, c).real for c in cand])
                    total = weights.sum()
                    if total > 0:
                        u = rngs[j].random() * total
                        ch = int(np.searchsorted(np.cumsum(weights), u, side="right"))
                        new = cand[min(ch, len(ls) - 1)]
                        n_jumps += 1
                    else:
                        new = psi
                    psis[:, j] = new / np.linalg.norm(new)
                    thresholds[j] = rngs[j].random()
        n2 = np.einsum("ij,ij->j", psis.conj(), psis).real
        for i, o in enumerate(obs):
            values[i, k] = o.on_batch(psis) / n2
    return values, n_jumps


def trajectory_oracle(model: LindbladModel, psi0: PureState, grid: TimeGrid, n_traj: int,
                      seed: int, observables: Sequence[Observable] = (), dt: Optional[float] = None,
                      jobs: int = 1) -> TimeSeries:
    """Monte Carlo wave-function unraveling of ``model``.

    Trajectories evolve under ``H - (i/2) sum L^dag L`` and jump when their
    squared norm drops below a uniform random threshold; the jump channel is
    drawn with weights ``|L_k psi|^2``. Trajectory ``i`` uses its own
    generator derived from ``(seed, i)`` and trajectories are processed in
    fixed-size chunks, so results do not depend on ``jobs``.
    Returns trajectory means with standard errors in ``stderr``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    if psi0.basis != model.basis:
        raise ValueError("initial state basis differs from model basis")
    heff_full = model.effective_hamiltonian().matrix
    ls_full = [L.matrix for L in model.collapse_ops]
    keep = reachable_indices([heff_full] + ls_full, np.flatnonzero(psi0.amplitudes))
    heff = heff_full[np.ix_(keep, keep)]
    ls = [L[np.ix_(keep, keep)] for L in ls_full]
    ls = [L for L in ls if np.any(L)]
    psi = np.array(psi0.amplitudes)[keep] / psi0.norm
    if dt is None:
        dt = default_dt(_norm_bound(heff), grid.span)
    m = _substeps(grid, dt)
    step = _rk4_step_matrix(-1j * heff, grid.dt / m)
    obs = _restrict(observables, keep)

    starts = list(range(0, n_traj, TRAJ_CHUNK))
    args = [(step, m, ls, psi, grid.n_steps + 1, obs, seed, s, min(TRAJ_CHUNK, n_traj - s))
            for s in starts]
    if jobs > 1 and len(args) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda a: _run_chunk(*a), args))
    else:
        results = [_run_chunk(*a) for a in args]
    values = np.concatenate([r[0] for r in results], axis=2)
    mean = values.mean(axis=2)
    se = values.std(axis=2, ddof=1) / math.sqrt(n_traj) if n_traj > 1 else np.zeros_like(mean)
    names = [o.name for o in observables]
    return TimeSeries(grid.times, dict(zip(names, mean)), dict(zip(names, se)),
                      meta={"engine": "trajectories", "n_traj": n_traj, "seed": seed,
                            "n_jumps": sum(r[1] for r in results), "dt": grid.dt / m})


def bloch_observables(basis: TensorBasis, excited: str = "up", background: str = "down") -> list[Observable]:
    """``overlap_W<n>`` projectors for every Bloch momentum ``k = 2 pi n / N``."""
    n = basis.n_sites
    out = []
    for j in _momentum_indices(n):
        name = "overlap_W0" if j == 0 else f"overlap_W{j:+d}"
        out.append(Observable.projector(bloch_state(basis, 2 * math.pi * j / n, excited, background), name))
    return out


def _momentum_indices(n: int) -> list[int]:
    half = n // 2
    idx = list(range(-half, n - half))
    return sorted(idx, key=lambda j: (abs(j), -j))
