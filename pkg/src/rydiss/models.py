"""Hamiltonians and collapse operators for the dissipative Rydberg models.

All user-facing rates are ordinary frequencies in MHz. Matrix elements are
angular frequencies in rad/μs (``2*pi*MHz``) and times are in μs, so a
collapse operator for a loss rate ``gamma`` carries ``sqrt(2*pi*gamma)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .operators import (
    LevelSet,
    Operator,
    SectorBasis,
    TensorBasis,
    embed,
    embed_many,
    projector,
    symmetric_pair_state,
    transition,
)

TWO_PI = 2.0 * math.pi

C3_UP = 1502.0  # MHz um^3, |up>=42P3/2 <-> 42S1/2
C3_DOWN = 756.0  # MHz um^3, |down>=42P1/2 <-> 42S1/2

LOSSY_QUBIT_LEVELS = LevelSet(("1", "0", "g"))
SPIN_LEVELS = LevelSet(("up", "down", "0", "g"))
SPIN_HALF_LEVELS = LevelSet(("up", "down"))

PAIR_EXCHANGE_SECTOR = SectorBasis(("00", "+", "11"))
PAIR_SPIN_SECTOR = SectorBasis(("upup", "+updown", "downdown", "+up0", "+down0", "00"))
PAIR_SPIN_REDUCED_SECTOR = SectorBasis(PAIR_SPIN_SECTOR.labels[:4])


class ReductionWarning(UserWarning):
    """The parameters are outside the regime where a reduced model is valid."""


def _nonneg(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite")
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return value


@dataclass(frozen=True)
class PairParams:
    """Rates in MHz. ``V`` is the 0<->1 exchange; ``V_up``/``V_down`` the spin-scheme ones."""

    w: float = 0.0
    w0: float = 0.0
    gamma: float = 0.0
    V: float = 0.0
    V_up: float = 0.0
    V_down: float = 0.0
    Delta: float = 0.0

    def __post_init__(self):
        for name in ("w", "w0", "gamma", "V", "V_up", "V_down", "Delta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        _nonneg("gamma", self.gamma)

    @property
    def wc(self) -> float:
        """Collective coupling ``sqrt(2) w``."""
        return math.sqrt(2.0) * self.w


@dataclass(frozen=True)
class GeometryParams:
    C3: float
    R: float


@dataclass(frozen=True)
class ChainParams:
    n: int
    V: float = 0.0
    w: float = 0.0
    w0: float = 0.0
    gamma: float = 0.0
    Delta: float = 0.0
    gamma_eff: float = 0.0
    boundary: str = "periodic"
    connectivity: str = "nearest-neighbor"

    def __post_init__(self):
        if int(self.n) < 2:
            raise ValueError("a chain needs n >= 2 atoms")
        _nonneg("gamma", self.gamma)
        _nonneg("gamma_eff", self.gamma_eff)
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.connectivity not in ("nearest-neighbor", "all-to-all"):
            raise ValueError(f"unknown connectivity {self.connectivity!r}")

    def bonds(self) -> list[tuple[int, int]]:
        n = int(self.n)
        if self.connectivity == "all-to-all":
            return list(combinations(range(n), 2))
        if self.boundary == "open" or n == 2:
            # a two-site ring has a single distinct bond
            return [(j, j + 1) for j in range(n - 1)]
        return [(j, (j + 1) % n) for j in range(n)]


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hermitian Hamiltonian plus collapse operators, all on one tensor basis."""

    H: Operator
    collapse_ops: tuple[Operator, ...] = ()
    basis: Optional[TensorBasis] = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        basis = self.basis if self.basis is not None else self.H.basis
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "collapse_ops", tuple(self.collapse_ops))
        if self.H.basis != basis:
            raise ValueError("Hamiltonian basis differs from model basis")
        if not self.H.is_hermitian(1e-12):
            raise ValueError("Lindblad Hamiltonian must be Hermitian")
        for L in self.collapse_ops:
            if L.basis != basis:
                raise ValueError("collapse operator basis differs from model basis")

    @property
    def dim(self) -> int:
        return self.basis.dim

    def decay_operator(self) -> np.ndarray:
        """``sum_k L_k^dag L_k``."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for L in self.collapse_ops:
            out += L.matrix.conj().T @ L.matrix
        return out

    def effective_hamiltonian(self) -> Operator:
        """No-jump generator ``H - (i/2) sum L^dag L`` on the full basis."""
        return Operator(self.basis, self.H.matrix - 0.5j * self.decay_operator())

    def manifold_indices(self, dark: str = "g") -> np.ndarray:
        digits = self.basis.site_digits()
        return np.flatnonzero(np.all(digits != self.basis.levels.index(dark), axis=1))

    def manifold_hamiltonian(self, dark: str = "g") -> Operator:
        """Effective Hamiltonian restricted to configurations free of the dark level.

        The restriction is exact for the dynamics of the retained manifold
        because no term in the model repopulates it from the dark level.
        """
        keep = self.manifold_indices(dark)
        sub = TensorBasis(self.basis.n_sites, self.basis.levels.without(dark))
        heff = self.effective_hamiltonian().matrix
        return Operator(sub, heff[np.ix_(keep, keep)])


def with_extra_decay(model: LindbladModel, rate: float,
                     levels: Optional[Sequence[str]] = None, target: str = "g") -> LindbladModel:
    """Add independent per-atom decay ``level -> target`` at ``rate`` (MHz)."""
    rate = _nonneg("rate", rate)
    if rate == 0:
        return model
    basis = model.basis
    if levels is None:
        levels = [lab for lab in basis.levels.labels if lab not in ("0", target)]
    amp = math.sqrt(TWO_PI * rate)
    extra = [amp * embed(transition(basis.levels, target, lev), s, basis)
             for lev in levels for s in range(basis.n_sites)]
    return replace(model, collapse_ops=model.collapse_ops + tuple(extra))


def _loss_ops(basis: TensorBasis, gamma: float, collective: bool,
              source: str = "0", target: str = "g") -> tuple[Operator, ...]:
    if gamma == 0:
        return ()
    amp = math.sqrt(TWO_PI * gamma)
    jump = transition(basis.levels, target, source)
    per_site = [embed(jump, s, basis) for s in range(basis.n_sites)]
    if collective:
        total = per_site[0]
        for op in per_site[1:]:
            total = total + op
        return (amp * total,)
    return tuple(amp * op for op in per_site)


def _hc(op: Operator) -> Operator:
    return op + op.dag()


def _zero(basis) -> Operator:
    return Operator(basis, np.zeros((basis.dim, basis.dim)))


def build_single_atom_lossy(w: float, gamma: float) -> LindbladModel:
    """Driven lossy qubit on levels ``(1, 0, g)`` with decay ``|0> -> |g>``."""
    gamma = _nonneg("gamma", gamma)
    basis = TensorBasis(1, LOSSY_QUBIT_LEVELS)
    lv = basis.levels
    H = TWO_PI * w * _hc(Operator(basis, transition(lv, "0", "1")))
    return LindbladModel(H, _loss_ops(basis, gamma, True), basis, name="single_atom_loss",
                         meta={"w": w, "gamma": gamma})


def build_single_atom_nh(w: float, gamma: float) -> Operator:
    """``[[0, w], [w, -i gamma/2]]`` in the ``(1, 0)`` basis, angular units."""
    gamma = _nonneg("gamma", gamma)
    basis = TensorBasis(1, LevelSet(("1", "0")))
    m = TWO_PI * np.array([[0.0, w], [w, -0.5j * gamma]])
    return Operator(basis, m)


def build_pair_exchange_nh(p: PairParams) -> Operator:
    """Symmetric-sector pair Hamiltonian on ``{|00>, |+>, |11>}``."""
    wc, g = p.wc, p.gamma
    m = np.array([
        [-1j * g, wc, 0.0],
        [wc, p.V - 0.5j * g, wc],
        [0.0, wc, 0.0],
    ])
    return Operator(PAIR_EXCHANGE_SECTOR, TWO_PI * m)


def build_pair_exchange_lindblad(p: PairParams, collective: bool = True) -> LindbladModel:
    """Two lossy qubits ``(1, 0, g)`` with microwave drive and 0<->1 exchange."""
    basis = TensorBasis(2, LOSSY_QUBIT_LEVELS)
    lv = basis.levels
    drive = sum((embed(transition(lv, "0", "1"), s, basis) for s in range(2)), _zero(basis))
    exch = embed_many({0: transition(lv, "0", "1"), 1: transition(lv, "1", "0")}, basis)
    H = TWO_PI * (_hc(p.w * drive) + _hc(p.V * exch))
    return LindbladModel(H, _loss_ops(basis, p.gamma, collective), basis, name="pair_exchange",
                         meta={"params": p, "collective": collective})


def _spin_single_site_terms(lv: LevelSet, w: float, w0: float, Delta: float,
                            lossy_from: str = "down") -> np.ndarray:
    h = w * (transition(lv, "up", "down") + transition(lv, "down", "up"))
    h = h + w0 * (transition(lv, "0", lossy_from) + transition(lv, lossy_from, "0"))
    return h - Delta * projector(lv, "0")


def build_selective_single_atom(w: float, w0: float, gamma: float, Delta: float) -> LindbladModel:
    """Single atom of the selective-loss scheme: levels ``(up, down, 0, g)``."""
    gamma = _nonneg("gamma", gamma)
    basis = TensorBasis(1, SPIN_LEVELS)
    H = Operator(basis, TWO_PI * _spin_single_site_terms(basis.levels, w, w0, Delta))
    return LindbladModel(H, _loss_ops(basis, gamma, True), basis, name="selective_single",
                         meta={"w": w, "w0": w0, "gamma": gamma, "Delta": Delta})


def build_selective_pair_full(p: PairParams, collective: bool = True) -> LindbladModel:
    """16-dimensional pair model with spin-dependent exchange with the lossy level."""
    basis = TensorBasis(2, SPIN_LEVELS)
    lv = basis.levels
    single = _spin_single_site_terms(lv, p.w, p.w0, p.Delta)
    H = embed(single, 0, basis) + embed(single, 1, basis)
    ex_up = embed_many({0: transition(lv, "up", "0"), 1: transition(lv, "0", "up")}, basis)
    ex_dn = embed_many({0: transition(lv, "down", "0"), 1: transition(lv, "0", "down")}, basis)
    H = H + _hc(p.V_up * ex_up) + _hc(p.V_down * ex_dn)
    return LindbladModel(TWO_PI * H, _loss_ops(basis, p.gamma, collective), basis,
                         name="selective_pair", meta={"params": p, "collective": collective})


def build_pair_spin_nh_full(p: PairParams) -> Operator:
    """Six-state symmetric-sector Hamiltonian of the selective-loss pair."""
    wc, w, w0, g, D = p.wc, p.w, p.w0, p.gamma, p.Delta
    r2 = math.sqrt(2.0)
    m = np.zeros((6, 6), dtype=complex)
    m[0, 1] = m[1, 0] = wc
    m[1, 2] = m[2, 1] = wc
    m[1, 3] = m[3, 1] = w0
    m[2, 4] = m[4, 2] = r2 * w0
    m[3, 4] = m[4, 3] = w
    m[4, 5] = m[5, 4] = r2 * w0
    m[3, 3] = p.V_up - D - 0.5j * g
    m[4, 4] = p.V_down - D - 0.5j * g
    m[5, 5] = -2 * D - 1j * g
    return Operator(PAIR_SPIN_SECTOR, TWO_PI * m)


def reduction_violations(p: PairParams, factor: float = 10.0) -> list[str]:
    """Which ``|a| >> b`` conditions of the four-state reduction fail by ``factor``."""
    out = []
    gap_spin = abs(p.V_up - p.V_down)
    gap_loss = abs(p.Delta - p.V_down)
    for label, big, small in (("|V_up-V_down| >> w", gap_spin, p.w),
                              ("|V_up-V_down| >> gamma", gap_spin, p.gamma),
                              ("|Delta-V_down| >> w0", gap_loss, p.w0),
                              ("|Delta-V_down| >> gamma", gap_loss, p.gamma)):
        if small > 0 and big < factor * small:
            out.append(label)
    return out


def build_pair_spin_nh_reduced(p: PairParams, warn: bool = True) -> Operator:
    """Four-state reduced Hamiltonian on ``{upup, +updown, downdown, +up0}``."""
    if warn:
        bad = reduction_violations(p)
        if bad:
            warnings.warn("reduced model outside validity: " + ", ".join(bad), ReductionWarning,
                          stacklevel=2)
    wc, w0 = p.wc, p.w0
    m = np.zeros((4, 4), dtype=complex)
    m[0, 1] = m[1, 0] = wc
    m[1, 2] = m[2, 1] = wc
    m[1, 3] = m[3, 1] = w0
    m[3, 3] = p.V_up - p.Delta - 0.5j * p.gamma
    return Operator(PAIR_SPIN_REDUCED_SECTOR, TWO_PI * m)


def gamma_eff(w0: float, gamma: float) -> float:
    """Adiabatically eliminated loss rate ``4 w0^2 / gamma`` (MHz)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive for adiabatic elimination")
    return 4.0 * w0 * w0 / gamma


def _pauli(levels: LevelSet) -> dict[str, np.ndarray]:
    up, dn = levels.index("up"), levels.index("down")
    d = levels.dim
    sx = np.zeros((d, d), dtype=complex)
    sy = np.zeros((d, d), dtype=complex)
    sz = np.zeros((d, d), dtype=complex)
    sx[up, dn] = sx[dn, up] = 1.0
    sy[up, dn], sy[dn, up] = -1j, 1j
    sz[up, up], sz[dn, dn] = 1.0, -1.0
    return {"x": sx, "y": sy, "z": sz, "i": np.eye(d)}


def bond_loss_projector(basis: TensorBasis, i: int, j: int) -> Operator:
    """``(XX + YY + II - ZZ)/4`` on sites ``i, j``: the projector onto their triplet ``|+>``."""
    p = _pauli(basis.levels)
    terms = [embed_many({i: p[a], j: p[a]}, basis) for a in ("x", "y", "i")]
    zz = embed_many({i: p["z"], j: p["z"]}, basis)
    return 0.25 * (terms[0] + terms[1] + terms[2] - zz)


def build_pair_effective_nh(w: float, g_eff: float) -> Operator:
    """``w (X_A + X_B) - i g_eff |+><+|`` on two spin-1/2 atoms."""
    basis = TensorBasis(2, SPIN_HALF_LEVELS)
    sx = _pauli(basis.levels)["x"]
    plus = symmetric_pair_state("up", "down", basis).amplitudes
    m = w * (embed(sx, 0, basis).matrix + embed(sx, 1, basis).matrix)
    m = m - 1j * g_eff * np.outer(plus, plus.conj())
    return Operator(basis, TWO_PI * m)


def build_chain_nh(p: ChainParams) -> Operator:
    """Spin-1/2 chain with transverse drive and imaginary nearest-neighbour exchange."""
    basis = TensorBasis(int(p.n), SPIN_HALF_LEVELS)
    sx = _pauli(basis.levels)["x"]
    m = sum((embed(sx, j, basis).matrix for j in range(basis.n_sites)), np.zeros((basis.dim,) * 2))
    m = p.w * m.astype(complex)
    for i, j in p.bonds():
        m = m - 1j * p.gamma_eff * bond_loss_projector(basis, i, j).matrix
    return Operator(basis, TWO_PI * m)


def build_distillation_model(p: ChainParams, collective: bool = True) -> LindbladModel:
    """Multi-atom ``(up, down, 0, g)`` model with up<->down exchange and lossy ``|0>``."""
    n = int(p.n)
    if p.connectivity == "all-to-all" and n > 3:
        raise ValueError("equal all-to-all exchange is only supported for n <= 3")
    basis = TensorBasis(n, SPIN_LEVELS)
    lv = basis.levels
    single = _spin_single_site_terms(lv, p.w, p.w0, p.Delta, lossy_from="up")
    m = sum((embed(single, s, basis).matrix for s in range(n)), np.zeros((basis.dim,) * 2))
    flip = {0: transition(lv, "up", "down"), 1: transition(lv, "down", "up")}
    for a, b in p.bonds():
        hop = embed_many({a: flip[0], b: flip[1]}, basis).matrix
        m = m + p.V * (hop + hop.conj().T)
    H = Operator(basis, TWO_PI * m)
    return LindbladModel(H, _loss_ops(basis, p.gamma, collective), basis, name="distillation",
                         meta={"params": p, "collective": collective})


def exchange_strength(g: GeometryParams) -> float:
    """Dipolar exchange ``C3 / (2 R^3)`` in MHz."""
    if not g.R > 0:
        raise ValueError("interatomic distance must be positive")
    return g.C3 / (2.0 * g.R ** 3)


def sample_interaction_factors(sigma: float, n: int, seed: int) -> np.ndarray:
    """Multiplicative Gaussian jitter factors shared by all exchange strengths.

    All exchange strengths scale as ``R**-3``, so one common factor per
    realization models a fluctuating interatomic distance.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return 1.0 + sigma * rng.standard_normal(n)
