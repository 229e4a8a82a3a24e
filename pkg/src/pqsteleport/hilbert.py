"""Dense operator algebra on small composite Hilbert spaces.

Everything here works on plain complex numpy arrays wrapped in thin,
layout-tagged containers.  The composite ordering used throughout the
package is ``(qubit A, qubit B, cavity)`` for the full system and
``(qubit A, cavity)`` for the backward (retrodiction) pass.

Qubit convention: ``|0>`` is the ground state and
``sigma_z = |1><1| - |0><0|`` so the excited state has eigenvalue +1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Iterable

import numpy as np
from scipy.linalg import expm

__all__ = [
    "HilbertSpaceLayout",
    "Ket",
    "DensityOperator",
    "OperatorMatrix",
    "TruncationWarning",
    "fock_annihilation",
    "coherent_state",
    "coherent_overlap",
    "displacement_operator",
    "embed",
    "partial_trace",
    "haar_random_qubit",
    "fidelity",
    "qubit_basis",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "HADAMARD",
    "IDENTITY_2",
    "top_level_population",
    "check_truncation",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)
IDENTITY_2 = np.eye(2, dtype=complex)

# Fraction of population allowed in the two highest Fock levels.
TRUNCATION_TOLERANCE = 1e-6


class TruncationWarning(UserWarning):
    """Emitted when a cavity state leaks into the top of the Fock space."""


@dataclass(frozen=True)
class HilbertSpaceLayout:
    """Ordered tensor-product structure, e.g. ``(2, 2, n_fock)``."""

    factors: tuple[int, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        factors = tuple(int(d) for d in self.factors)
        if not factors or any(d < 1 for d in factors):
            raise ValueError(f"invalid factor dimensions {self.factors!r}")
        object.__setattr__(self, "factors", factors)
        names = tuple(self.names) or tuple(f"s{i}" for i in range(len(factors)))
        if len(names) != len(factors):
            raise ValueError("one name per factor is required")
        object.__setattr__(self, "names", names)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factors))

    def index(self, subsystem: int | str) -> int:
        if isinstance(subsystem, str):
            try:
                return self.names.index(subsystem)
            except ValueError:
                raise KeyError(f"no subsystem named {subsystem!r} in {self.names}") from None
        if not 0 <= subsystem < len(self.factors):
            raise IndexError(f"subsystem index {subsystem} out of range")
        return subsystem

    def sub(self, keep: Iterable[int | str]) -> "HilbertSpaceLayout":
        idx = sorted({self.index(k) for k in keep})
        return HilbertSpaceLayout(
            tuple(self.factors[i] for i in idx), tuple(self.names[i] for i in idx)
        )

    @classmethod
    def full(cls, n_fock: int) -> "HilbertSpaceLayout":
        return cls((2, 2, n_fock), ("A", "B", "C"))

    @classmethod
    def qubit_cavity(cls, n_fock: int) -> "HilbertSpaceLayout":
        return cls((2, n_fock), ("A", "C"))


def _check_dim(array: np.ndarray, layout: HilbertSpaceLayout, square: bool):
    d = layout.total_dim
    if square:
        if array.shape != (d, d):
            raise ValueError(f"matrix shape {array.shape} does not match layout dim {d}")
    elif array.shape != (d,):
        raise ValueError(f"vector shape {array.shape} does not match layout dim {d}")


@dataclass(frozen=True, eq=False)
class Ket:
    amplitudes: np.ndarray
    layout: HilbertSpaceLayout

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        _check_dim(amps, self.layout, square=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "Ket":
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return Ket(self.amplitudes / n, self.layout)

    def dm(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()), self.layout)

    def tensor(self, other: "Ket") -> "Ket":
        layout = HilbertSpaceLayout(
            self.layout.factors + other.layout.factors, self.layout.names + other.layout.names
        )
        return Ket(np.kron(self.amplitudes, other.amplitudes), layout)

    def inner(self, other: "Ket") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray
    layout: HilbertSpaceLayout

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        _check_dim(m, self.layout, square=True)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalized(self) -> "DensityOperator":
        m = 0.5 * (self.matrix + self.matrix.conj().T)
        return DensityOperator(m / np.trace(m).real, self.layout)

    def validate(self, atol: float = 1e-8) -> None:
        """Raise ``ValueError`` unless Hermitian, unit trace and positive."""
        m = self.matrix
        herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if herm > 1e-10:
            raise ValueError(f"not Hermitian (deviation {herm:.2e})")
        if abs(self.trace - 1.0) > atol:
            raise ValueError(f"trace {self.trace!r} differs from 1")
        lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
        if lo < -atol:
            raise ValueError(f"negative eigenvalue {lo:.2e}")

    def expect(self, op: "OperatorMatrix | np.ndarray") -> complex:
        m = op.matrix if isinstance(op, OperatorMatrix) else op
        return complex(np.trace(m @ self.matrix))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    matrix: np.ndarray
    layout: HilbertSpaceLayout
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        _check_dim(m, self.layout, square=True)
        object.__setattr__(self, "matrix", m)

    @property
    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix.conj().T, self.layout, f"{self.label}^dag")

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.matrix @ other.matrix, self.layout)
        if isinstance(other, Ket):
            return Ket(self.matrix @ other.amplitudes, other.layout)
        return NotImplemented


def _cavity_layout(n_fock: int) -> HilbertSpaceLayout:
    return HilbertSpaceLayout((n_fock,), ("C",))


def _qubit_layout(name: str = "q") -> HilbertSpaceLayout:
    return HilbertSpaceLayout((2,), (name,))


def fock_annihilation(n_fock: int) -> OperatorMatrix:
    """Truncated annihilation operator with ``<n-1|a|n> = sqrt(n)``."""
    if int(n_fock) != n_fock or n_fock < 2:
        raise ValueError(f"n_fock must be an integer >= 2, got {n_fock!r}")
    n_fock = int(n_fock)
    a = np.diag(np.sqrt(np.arange(1, n_fock, dtype=float)), k=1).astype(complex)
    return OperatorMatrix(a, _cavity_layout(n_fock), "a")


def _check_truncation_bound(beta: complex, n_fock: int) -> None:
    if n_fock < 2:
        raise ValueError(f"n_fock must be >= 2, got {n_fock}")
    if abs(beta) ** 2 > n_fock / 4.0:
        raise ValueError(
            f"|beta|^2 = {abs(beta) ** 2:.3g} exceeds n_fock/4 = {n_fock / 4:.3g}; "
            "increase n_fock"
        )


def coherent_state(beta: complex, n_fock: int) -> Ket:
    """Coherent state ``|beta>`` in the truncated Fock basis, renormalized."""
    _check_truncation_bound(beta, n_fock)
    n = np.arange(n_fock)
    # log-space keeps n! finite for large cutoffs
    log_fact = np.array([math.lgamma(k + 1) for k in n])
    if beta == 0:
        amps = np.zeros(n_fock, dtype=complex)
        amps[0] = 1.0
    else:
        r, phi = abs(beta), np.angle(beta)
        mags = np.exp(-0.5 * r * r + n * math.log(r) - 0.5 * log_fact)
        amps = mags * np.exp(1j * phi * n)
    amps = amps / np.linalg.norm(amps)
    return Ket(amps, _cavity_layout(n_fock))


def coherent_overlap(beta1: complex, beta2: complex) -> complex:
    """Closed-form ``<beta1|beta2>`` of untruncated coherent states."""
    return complex(
        np.exp(-0.5 * abs(beta1) ** 2 - 0.5 * abs(beta2) ** 2 + np.conj(beta1) * beta2)
    )


def displacement_operator(beta: complex, n_fock: int) -> OperatorMatrix:
    """``exp(beta a^dag - beta^* a)`` evaluated at the truncated dimension.

    Unitary by construction; the truncation error lives in the top Fock
    levels only.
    """
    _check_truncation_bound(beta, n_fock)
    a = fock_annihilation(n_fock).matrix
    gen = beta * a.conj().T - np.conj(beta) * a
    return OperatorMatrix(expm(gen), _cavity_layout(n_fock), f"D({beta})")


def embed(op: OperatorMatrix | np.ndarray, subsystem: int | str, layout: HilbertSpaceLayout) -> OperatorMatrix:
    """Place a single-factor operator into ``layout`` (identity elsewhere)."""
    idx = layout.index(subsystem)
    m = op.matrix if isinstance(op, OperatorMatrix) else np.asarray(op, dtype=complex)
    if m.shape != (layout.factors[idx],) * 2:
        raise ValueError(
            f"operator of shape {m.shape} does not fit factor {layout.names[idx]} "
            f"of dimension {layout.factors[idx]}"
        )
    parts = [m if i == idx else np.eye(d, dtype=complex) for i, d in enumerate(layout.factors)]
    label = op.label if isinstance(op, OperatorMatrix) else ""
    return OperatorMatrix(reduce(np.kron, parts), layout, f"{label}_{layout.names[idx]}")


def partial_trace(rho: DensityOperator, keep: Iterable[int | str]) -> DensityOperator:
    """Reduced density operator on the factors listed in ``keep``."""
    layout = rho.layout
    keep_idx = sorted({layout.index(k) for k in keep})
    if not keep_idx:
        raise ValueError("keep must name at least one subsystem")
    dims = layout.factors
    n = len(dims)
    t = rho.matrix.reshape(dims + dims)
    # einsum labels: row indices 0..n-1, column indices n..2n-1
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(n)]
    col = [letters[i] if i not in keep_idx else letters[n + i].upper() for i in range(n)]
    out = "".join(row[i] for i in keep_idx) + "".join(col[i] for i in keep_idx)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    sub = layout.sub(keep_idx)
    return DensityOperator(reduced.reshape(sub.total_dim, sub.total_dim), sub)


def qubit_basis(bit: int, name: str = "q") -> Ket:
    v = np.zeros(2, dtype=complex)
    v[int(bit)] = 1.0
    return Ket(v, _qubit_layout(name))


def haar_random_qubit(rng: np.random.Generator) -> Ket:
    """Pure qubit state uniformly distributed on the Bloch sphere.

    The global phase is fixed so that the ``|0>`` amplitude is real and
    nonnegative.
    """
    cos_theta = rng.uniform(-1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    c = math.sqrt(0.5 * (1.0 + cos_theta))
    s = math.sqrt(max(0.0, 0.5 * (1.0 - cos_theta)))
    return Ket(np.array([c, s * np.exp(1j * phi)]), _qubit_layout("A"))


def fidelity(psi: Ket | np.ndarray, rho: DensityOperator | np.ndarray) -> float:
    """``<psi|rho|psi>`` clamped to [0, 1]."""
    v = psi.amplitudes if isinstance(psi, Ket) else np.asarray(psi, dtype=complex)
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    if m.shape != (v.size, v.size):
        raise ValueError(f"dimension mismatch: state {v.size}, operator {m.shape}")
    f = float(np.real(np.vdot(v, m @ v)))
    return min(1.0, max(0.0, f))


def top_level_population(cavity_weights: np.ndarray, levels: int = 2) -> float:
    """Population in the highest ``levels`` Fock states.

    ``cavity_weights`` is the photon-number distribution (last axis is
    the Fock index; leading axes are summed).
    """
    w = np.asarray(cavity_weights, dtype=float)
    return float(w[..., -levels:].sum())


def check_truncation(population: float, context: str = "") -> bool:
    """Warn (``TruncationWarning``) when the top-level population is too large."""
    if population >= TRUNCATION_TOLERANCE:
        warnings.warn(
            f"Fock truncation: top-level population {population:.2e}{' in ' + context if context else ''}"
            " exceeds tolerance; increase n_fock",
            TruncationWarning,
            stacklevel=2,
        )
        return False
    return True
