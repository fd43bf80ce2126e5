"""Dense operator algebra over multi-level, multi-atom tensor-product bases.

Site 0 is the leftmost (most significant) tensor factor, so a configuration
string such as ``down-up-down`` maps onto the basis index by mixed-radix
encoding read left to right.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ALLOWED_LEVELS",
    "LevelSet",
    "TensorBasis",
    "SectorBasis",
    "Operator",
    "PureState",
    "Spectrum",
    "EigenSolverError",
    "kron",
    "embed",
    "identity",
    "transition",
    "projector",
    "eig_general",
    "basis_state",
    "symmetric_pair_state",
    "antisymmetric_pair_state",
    "bloch_state",
    "parse_momentum",
]

ALLOWED_LEVELS = ("g", "0", "1", "up", "down")

DEFAULT_EIG_TOL = 1e-10


class EigenSolverError(RuntimeError):
    """Raised when the eigensolver fails or violates its residual contract."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LevelSet:
    """Ordered per-atom level names, e.g. ``LevelSet(("up", "down", "0", "g"))``."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a level set needs at least two levels")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate level labels in {labels}")
        bad = [lab for lab in labels if lab not in ALLOWED_LEVELS]
        if bad:
            raise ValueError(f"unknown level labels {bad}; allowed: {ALLOWED_LEVELS}")

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"level {label!r} not in {self.labels}") from None

    def without(self, label: str) -> "LevelSet":
        return LevelSet(tuple(lab for lab in self.labels if lab != label))

    def __contains__(self, label) -> bool:
        return label in self.labels


@dataclass(frozen=True)
class TensorBasis:
    """``n_sites`` copies of the same :class:`LevelSet`."""

    n_sites: int
    levels: LevelSet

    def __post_init__(self):
        if not isinstance(self.levels, LevelSet):
            object.__setattr__(self, "levels", LevelSet(tuple(self.levels)))
        if int(self.n_sites) < 1:
            raise ValueError("n_sites must be positive")
        object.__setattr__(self, "n_sites", int(self.n_sites))

    @property
    def dim(self) -> int:
        return self.levels.dim ** self.n_sites

    @property
    def site_dim(self) -> int:
        return self.levels.dim

    def parse(self, config: Union[str, Sequence[str]]) -> tuple[str, ...]:
        """Split a configuration string into per-site level labels.

        Accepts ``"down-up-down"``, ``"up,down"``, a sequence of labels, or a
        run-together string such as ``"upup"`` / ``"00"`` which is tokenized
        greedily against the level names.
        """
        if not isinstance(config, str):
            labels = tuple(config)
        elif "-" in config or "," in config:
            labels = tuple(tok for tok in re.split(r"[-,]", config) if tok)
        else:
            names = sorted(self.levels.labels, key=len, reverse=True)
            labels, rest = [], config
            while rest:
                for name in names:
                    if rest.startswith(name):
                        labels.append(name)
                        rest = rest[len(name):]
                        break
                else:
                    raise KeyError(f"cannot tokenize {config!r} over levels {self.levels.labels}")
            labels = tuple(labels)
        if len(labels) != self.n_sites:
            raise ValueError(f"configuration {config!r} has {len(labels)} sites, basis has {self.n_sites}")
        for lab in labels:
            self.levels.index(lab)
        return labels

    def index(self, config: Union[str, Sequence[str]]) -> int:
        idx = 0
        for lab in self.parse(config):
            idx = idx * self.site_dim + self.levels.index(lab)
        return idx

    def config(self, index: int) -> tuple[str, ...]:
        if not 0 <= index < self.dim:
            raise IndexError(index)
        digits = []
        for _ in range(self.n_sites):
            index, r = divmod(index, self.site_dim)
            digits.append(self.levels.labels[r])
        return tuple(reversed(digits))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple("-".join(self.config(i)) for i in range(self.dim))

    def site_digits(self) -> np.ndarray:
        """(dim, n_sites) integer array of level indices per basis state."""
        idx = np.arange(self.dim)
        out = np.empty((self.dim, self.n_sites), dtype=int)
        for s in range(self.n_sites - 1, -1, -1):
            idx, out[:, s] = np.divmod(idx, self.site_dim)
        return out


@dataclass(frozen=True)
class SectorBasis:
    """Named kets spanning a symmetry sector, e.g. ``("00", "+", "11")``."""

    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate sector labels")

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"state {label!r} not in sector basis {self.labels}") from None


Basis = Union[TensorBasis, SectorBasis]


@dataclass(frozen=True, eq=False)
class Operator:
    """Immutable dense square matrix attached to a basis."""

    basis: Basis
    matrix: np.ndarray

    def __post_init__(self):
        m = _readonly(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        if m.shape[0] != self.basis.dim:
            raise ValueError(f"matrix dim {m.shape[0]} does not match basis dim {self.basis.dim}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> "Operator":
        return Operator(self.basis, self.matrix.conj().T)

    @property
    def hermitian_part(self) -> "Operator":
        return Operator(self.basis, 0.5 * (self.matrix + self.matrix.conj().T))

    @property
    def antihermitian_part(self) -> "Operator":
        return Operator(self.basis, 0.5 * (self.matrix - self.matrix.conj().T))

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        scale = max(np.linalg.norm(self.matrix), 1.0)
        return np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= rtol * scale

    def _check(self, other: "Operator") -> None:
        if other.basis != self.basis:
            raise ValueError("operators live on different bases")

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.basis, self.matrix + other.matrix)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.basis, self.matrix - other.matrix)
        return NotImplemented

    def __neg__(self):
        return Operator(self.basis, -self.matrix)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return Operator(self.basis, scalar * self.matrix)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.basis, self.matrix @ other.matrix)
        return NotImplemented

    def __repr__(self):
        return f"Operator(dim={self.dim}, basis={self.basis!r})"


@dataclass(frozen=True, eq=False)
class PureState:
    """State vector (not necessarily normalized) on a basis, at time ``time`` in μs."""

    basis: Basis
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex, copy=True).reshape(-1)
        if a.shape[0] != self.basis.dim:
            raise ValueError(f"state length {a.shape[0]} does not match basis dim {self.basis.dim}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def inner(self, other: "PureState") -> complex:
        """``<self|other>``."""
        if other.basis != self.basis:
            raise ValueError("states live on different bases")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    vectors: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.eigenvalues)

    def min_gap(self) -> float:
        """Smallest pairwise distance between eigenvalues."""
        lam = self.eigenvalues
        d = np.abs(lam[:, None] - lam[None, :])
        d[np.diag_indices_from(d)] = np.inf
        return float(d.min())


def identity(basis: Basis) -> Operator:
    return Operator(basis, np.eye(basis.dim))


def kron(a: Operator, b: Operator) -> Operator:
    """Tensor product with ``a`` as the more significant factor."""
    ba, bb = a.basis, b.basis
    if not (isinstance(ba, TensorBasis) and isinstance(bb, TensorBasis)):
        raise TypeError("kron needs tensor-basis operands")
    if ba.levels != bb.levels:
        raise ValueError("kron operands must share the per-site level set")
    basis = TensorBasis(ba.n_sites + bb.n_sites, ba.levels)
    return Operator(basis, np.kron(a.matrix, b.matrix))


def embed(op: Union[Operator, np.ndarray], site: int, basis: TensorBasis) -> Operator:
    """Act with the single-site ``op`` on ``site`` and identity elsewhere."""
    m = op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    if m.shape != (basis.site_dim, basis.site_dim):
        raise ValueError(f"single-site operator must be {basis.site_dim}x{basis.site_dim}")
    if not 0 <= site < basis.n_sites:
        raise IndexError(f"site {site} out of range for {basis.n_sites} sites")
    eye = np.eye(basis.site_dim)
    factors = [m if s == site else eye for s in range(basis.n_sites)]
    return Operator(basis, reduce(np.kron, factors))


def embed_many(ops: dict, basis: TensorBasis) -> Operator:
    """Product of single-site operators ``{site: op}`` (identity on the rest)."""
    eye = np.eye(basis.site_dim)
    factors = []
    for s in range(basis.n_sites):
        m = ops.get(s, eye)
        factors.append(m.matrix if isinstance(m, Operator) else np.asarray(m, dtype=complex))
    return Operator(basis, reduce(np.kron, factors))


def transition(levels: LevelSet, to: str, frm: str) -> np.ndarray:
    """Single-site ``|to><frm|``."""
    m = np.zeros((levels.dim, levels.dim), dtype=complex)
    m[levels.index(to), levels.index(frm)] = 1.0
    return m


def projector(levels: LevelSet, level: str) -> np.ndarray:
    return transition(levels, level, level)


def eig_general(m: Union[Operator, np.ndarray], tol: float = DEFAULT_EIG_TOL,
                vectors: bool = False) -> Spectrum:
    """Eigenvalues of a general (possibly non-normal) complex matrix.

    Eigenvalues are sorted by imaginary part descending, then real part
    ascending. Every eigenpair must satisfy ``|Mv - lv| <= tol * |M|_F``;
    otherwise :class:`EigenSolverError` is raised.
    """
    a = m.matrix if isinstance(m, Operator) else np.asarray(m, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise EigenSolverError("matrix has non-finite entries")
    try:
        lam, vec = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigensolver did not converge: {exc}") from exc
    vec = vec / np.linalg.norm(vec, axis=0, keepdims=True)
    residuals = np.linalg.norm(a @ vec - vec * lam[None, :], axis=0)
    fro = np.linalg.norm(a)
    if np.any(residuals > tol * max(fro, np.finfo(float).tiny)):
        raise EigenSolverError(f"residual {residuals.max():.3e} exceeds {tol:g} * |M|_F = {tol * fro:.3e}")
    order = np.lexsort((lam.real, -lam.imag))
    return Spectrum(lam[order], residuals[order], vec[:, order] if vectors else None)


def basis_state(basis: Basis, label) -> PureState:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index(label)] = 1.0
    return PureState(basis, amps)


def symmetric_pair_state(r: str, s: str, basis: TensorBasis) -> PureState:
    """``(|rs> + |sr>)/sqrt(2)``, or ``|rr>`` when ``r == s``."""
    if basis.n_sites != 2:
        raise ValueError("pair states need a two-site basis")
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index((r, s))] += 1.0
    amps[basis.index((s, r))] += 1.0
    return PureState(basis, amps / np.linalg.norm(amps))


def antisymmetric_pair_state(r: str, s: str, basis: TensorBasis) -> PureState:
    """Singlet ``(|rs> - |sr>)/sqrt(2)``."""
    if basis.n_sites != 2:
        raise ValueError("pair states need a two-site basis")
    if r == s:
        raise ValueError("singlet needs two distinct levels")
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index((r, s))] = 1.0
    amps[basis.index((s, r))] = -1.0
    return PureState(basis, amps / math.sqrt(2.0))


def bloch_state(basis: TensorBasis, k: float, excited: str = "up",
                background: str = "down") -> PureState:
    """Single-excitation Bloch state ``sum_j exp(i j k) |..excited_j..> / sqrt(N)``."""
    n = basis.n_sites
    if n < 2:
        raise ValueError("Bloch states need at least two sites")
    m = k * n / (2 * math.pi)
    if abs(m - round(m)) > 1e-9:
        raise ValueError(f"k={k} is not a multiple of 2*pi/{n}")
    amps = np.zeros(basis.dim, dtype=complex)
    for j in range(n):
        conf = [background] * n
        conf[j] = excited
        amps[basis.index(conf)] = cmath.exp(1j * j * k) / math.sqrt(n)
    return PureState(basis, amps)


_MOMENTUM = re.compile(r"^([+-]?)(\d*\.?\d*)(pi)?(?:/(\d+\.?\d*))?$")


def parse_momentum(text: str) -> float:
    """Parse ``"0"``, ``"2pi/3"``, ``"-4pi/5"``, ``"pi"`` or a plain float."""
    s = text.replace(" ", "").replace("π", "pi")
    mt = _MOMENTUM.match(s)
    if not mt or not (mt.group(2) or mt.group(3)):
        raise ValueError(f"cannot parse momentum {text!r}")
    sign, num, pi, den = mt.groups()
    val = float(num) if num else 1.0
    if pi:
        val *= math.pi
    if den:
        val /= float(den)
    return -val if sign == "-" else val
