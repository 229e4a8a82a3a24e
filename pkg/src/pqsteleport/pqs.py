"""Past-quantum-state retrodiction of the initial Bell-measurement outcome.

The effect matrix ``E(t)`` is propagated backwards from ``E(T) = 1``
through the recorded current with the adjoint of the forward step in
:mod:`.sme`::

    E <- P^dag [ M^dag (P^dag E P) M + (1 - eta) kappa dt a^dag (P^dag E P) a ] P

To first order in ``dt`` this is

    dE = (i[H, E] + kappa (a^dag E a - {n, E}/2)) dt
         + sqrt(eta kappa) J (a^dag E + E a) dt,

and because the forward and backward maps are exact adjoints, ``Tr(rho0 E(0))``
is proportional to the likelihood of the record for any initial state.
``E`` only lives on (qubit A, cavity): qubit B never couples to the field.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .hilbert import (
    DensityOperator,
    HilbertSpaceLayout,
    Ket,
    OperatorMatrix,
    coherent_state,
    qubit_basis,
)
from .sme import (
    HomodyneRecord,
    IntegrationError,
    PhaseSpec,
    SectorPropagator,
    SmeParams,
    _cavity_ops,
    split_ops,
)

__all__ = [
    "BellOutcome",
    "BELL_OUTCOMES",
    "EffectMatrix",
    "BellPovm",
    "RetrodictionResult",
    "DegenerateRetrodiction",
    "backward_step",
    "propagate_backward",
    "build_bell_povm",
    "uniform_prior",
    "retrodict",
    "write_retrodictions",
    "read_retrodictions",
]

# Largest tolerated trace growth of E in one step.
MAX_STEP_GROWTH = 10.0


class BellOutcome(NamedTuple):
    qubit: int  # 0 or 1
    field: int  # +1 for +beta, -1 for -beta

    @property
    def label(self) -> str:
        return f"{self.qubit}{'+' if self.field > 0 else '-'}"

    @property
    def index(self) -> int:
        return BELL_OUTCOMES.index(self)

    @classmethod
    def from_label(cls, label: str) -> "BellOutcome":
        for o in BELL_OUTCOMES:
            if o.label == label:
                return o
        raise ValueError(f"unknown Bell outcome label {label!r}")

    @classmethod
    def from_signs(cls, s_a: int, s_beta: int) -> "BellOutcome":
        """Direct-signal decision: negative qubit signal means ``|1>``."""
        return cls(1 if s_a < 0 else 0, 1 if s_beta >= 0 else -1)


BELL_OUTCOMES: tuple[BellOutcome, ...] = (
    BellOutcome(0, 1),
    BellOutcome(0, -1),
    BellOutcome(1, 1),
    BellOutcome(1, -1),
)


class DegenerateRetrodiction(ArithmeticError):
    """All four retrodicted weights vanished; no outcome can be chosen."""


@dataclass(frozen=True, eq=False)
class EffectMatrix:
    matrix: np.ndarray
    layout: HilbertSpaceLayout

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.layout.total_dim,) * 2:
            raise ValueError(f"effect matrix shape {m.shape} does not match layout")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, layout: HilbertSpaceLayout) -> "EffectMatrix":
        d = layout.total_dim
        return cls(np.eye(d, dtype=complex) / d, layout)

    def normalized(self) -> "EffectMatrix":
        m = 0.5 * (self.matrix + self.matrix.conj().T)
        return EffectMatrix(m / np.trace(m).real, self.layout)

    def scaled(self, c: float) -> "EffectMatrix":
        return EffectMatrix(c * self.matrix, self.layout)


@dataclass(frozen=True, eq=False)
class BellPovm:
    """Four rank-one elements ``|i, X><i, X|`` on (qubit A, cavity)."""

    elements: tuple[OperatorMatrix, ...]
    outcomes: tuple[BellOutcome, ...]
    vectors: tuple[Ket, ...] = ()

    def completeness_deficit(self) -> float:
        """Largest deviation of ``sum M^dag M`` from 1 on the span of the elements."""
        total = sum(m.matrix.conj().T @ m.matrix for m in self.elements)
        if not self.vectors:
            return float(np.linalg.norm(total - np.eye(total.shape[0]), 2))
        basis = np.stack([v.amplitudes for v in self.vectors], axis=1)
        q, _ = np.linalg.qr(basis)
        restricted = q.conj().T @ total @ q
        return float(np.linalg.norm(restricted - np.eye(restricted.shape[0]), 2))


@dataclass(frozen=True)
class RetrodictionResult:
    probabilities: tuple[float, float, float, float]
    outcome: BellOutcome
    margin: float

    def to_row(self, trajectory_id) -> list[str]:
        return [str(trajectory_id)] + [repr(p) for p in self.probabilities] + [
            self.outcome.label,
            repr(self.margin),
        ]


RETRODICTION_HEADER = ["trajectory", "p_0+", "p_0-", "p_1+", "p_1-", "argmax", "margin"]


def write_retrodictions(path: str | Path, rows: Iterable[tuple[object, RetrodictionResult]]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RETRODICTION_HEADER)
        for tid, res in rows:
            w.writerow(res.to_row(tid))
    return path


def read_retrodictions(path: str | Path) -> list[tuple[str, RetrodictionResult]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != RETRODICTION_HEADER:
        raise ValueError(f"unexpected header {rows[0]}")
    out = []
    for r in rows[1:]:
        probs = tuple(float(x) for x in r[1:5])
        out.append((r[0], RetrodictionResult(probs, BellOutcome.from_label(r[5]), float(r[6]))))
    return out


def backward_step(
    E: EffectMatrix,
    H: OperatorMatrix,
    params: SmeParams,
    J: float,
    lo_phase: float = 0.0,
) -> EffectMatrix:
    """One reverse-time step of the effect matrix (dense reference path)."""
    a, a_lo = _cavity_ops(E.layout, lo_phase)
    k, eta, dt = params.kappa, params.eta, params.dt
    ops = split_ops(H.matrix, a, k, dt)
    f = ops.last.conj().T @ E.matrix @ ops.last
    m = np.eye(f.shape[0], dtype=complex)
    if eta > 0:
        dY = J * dt
        m = m + math.sqrt(k * eta) * dY * a_lo + 0.5 * k * eta * (dY * dY - dt) * (a_lo @ a_lo)
    g = m.conj().T @ f @ m
    if eta < 1:
        a2 = a @ a
        g = g + (1.0 - eta) * k * dt * (a.conj().T @ f @ a)
        g = g + 0.5 * (1.0 - eta * eta) * (k * dt) ** 2 * (a2.conj().T @ f @ a2)
    out = ops.first.conj().T @ g @ ops.first
    out = 0.5 * (out + out.conj().T)
    before, after = np.trace(E.matrix).real, np.trace(out).real
    if not (math.isfinite(after) and after > 0) or after > MAX_STEP_GROWTH * before:
        raise IntegrationError(f"effect-matrix trace grew from {before:.3e} to {after:.3e}")
    return EffectMatrix(out / after, E.layout)


def _sandwich(F, c1, c2, rot, w1, w2, w11, w22, dissip, dissip2):
    """``M^dag F M + dissip a^dag F a + dissip2 a^dag^2 F a^2`` for a stack of cavity matrices.

    ``M = 1 + c1 a_lo + c2 a_lo^2`` with ``a_lo = rot * a``; the ladder
    operators are applied as banded shifts.  ``w1[k] = sqrt(k)``,
    ``w2[k] = sqrt(k (k-1))`` (k >= 1, 2), ``w11 = outer(w1, w1)`` and
    ``w22 = outer(w2, w2)``.
    """
    if c1 == 0 and c2 == 0:
        G = F.copy()
    else:
        b1, b2 = c1 * rot, c2 * rot * rot
        Y = F.copy()
        Y[..., :, 1:] += b1 * F[..., :, :-1] * w1
        Y[..., :, 2:] += b2 * F[..., :, :-2] * w2
        G = Y.copy()
        G[..., 1:, :] += np.conj(b1) * Y[..., :-1, :] * w1[:, None]
        G[..., 2:, :] += np.conj(b2) * Y[..., :-2, :] * w2[:, None]
    if dissip:
        G[..., 1:, 1:] += dissip * F[..., :-1, :-1] * w11
        G[..., 2:, 2:] += dissip2 * F[..., :-2, :-2] * w22
    return G


def propagate_backward(
    record: HomodyneRecord,
    phases: Sequence[PhaseSpec],
    n_fock: int,
) -> EffectMatrix:
    """``E(0)`` on (qubit A, cavity) from ``E(T) = 1`` over the full record.

    The Hamiltonian switches at ``record.phase_boundaries``.  Qubit B must
    be uncoupled (``chi_B == 0``) in every phase.
    """
    layout = HilbertSpaceLayout.qubit_cavity(n_fock)
    steps_per_phase = []
    for ph in phases:
        if ph.chi_B != 0:
            raise ValueError("backward pass acts on (A, C) only; chi_B must be zero")
        steps_per_phase.append(int(round(ph.duration / record.dt)))
    nonempty = [(ph, s) for ph, s in zip(phases, steps_per_phase) if s > 0]
    expected = tuple(np.cumsum([s for _, s in nonempty]).tolist())
    if expected != tuple(record.phase_boundaries):
        raise ValueError(
            f"record boundaries {record.phase_boundaries} do not match phases {expected}"
        )
    if record.n_samples == 0:
        return EffectMatrix.identity(layout)

    params = SmeParams(kappa=record.kappa, eta=record.eta, dt=record.dt)
    k, eta, dt = params.kappa, params.eta, params.dt
    props = [SectorPropagator(ph, params, n_fock, (ph.chi_A,)) for ph, _ in nonempty]
    firsts = [pr.first for pr in props]
    lasts = [pr.last for pr in props]
    rots = [np.exp(-1j * ph.lo_phase) for ph, _ in nonempty]
    phase_of = np.repeat(np.arange(len(nonempty)), [s for _, s in nonempty])
    # between steps i and i+1 the state sees first[phase i+1] @ last[phase i]
    full = [np.matmul(f, h) for f, h in zip(firsts, lasts)]
    n_idx = np.arange(1, n_fock, dtype=float)
    w1 = np.sqrt(n_idx)
    w2 = np.sqrt(n_idx[1:] * (n_idx[1:] - 1.0))
    w11 = np.outer(w1, w1)
    w22 = np.outer(w2, w2)
    sqk = math.sqrt(k * eta)
    dissip = (1.0 - eta) * k * dt
    dissip2 = 0.5 * (1.0 - eta * eta) * (k * dt) ** 2

    n_steps = record.n_samples
    h_last = lasts[phase_of[-1]]
    X = np.broadcast_to(np.eye(n_fock, dtype=complex), (2, n_fock, n_fock)) / (2 * n_fock)
    if not (dissip == 0 and eta > 0):
        X = np.matmul(h_last.conj().transpose(0, 2, 1), np.matmul(X, h_last))
    # with no undetected output, M is folded into the propagator:
    # X <- (Q M)^dag X (Q M),  Q M = Q + c1 Q a_lo + c2 Q a_lo^2
    a_stack = np.diag(w1, k=1).astype(complex)
    fused = dissip == 0 and eta > 0
    if fused:
        ladders = {}

        def ladder(key, Q, p):
            if key not in ladders:
                qa = np.matmul(Q, a_stack * rots[p])
                ladders[key] = (qa, np.matmul(qa, a_stack * rots[p]))
            return ladders[key]

    for i in range(n_steps - 1, -1, -1):
        p = phase_of[i]
        if eta > 0:
            dY = record.samples[i] * dt
            c1, c2 = sqk * dY, 0.5 * k * eta * (dY * dY - dt)
        else:
            c1 = c2 = 0.0
        if i < n_steps - 1:
            q = phase_of[i + 1]
            Q = full[p] if q == p else np.matmul(firsts[q], lasts[p])
        else:
            q = -1
            Q = lasts[p]  # X currently holds 1
        if fused:
            qa, qaa = ladder((q, p), Q, p)
            R = Q + c1 * qa
            R += c2 * qaa
            G = np.matmul(R.conj().transpose(0, 2, 1), np.matmul(X, R))
        else:
            if i < n_steps - 1:
                X = np.matmul(Q.conj().transpose(0, 2, 1), np.matmul(X, Q))
            G = _sandwich(X, c1, c2, rots[p], w1, w2, w11, w22, dissip, dissip2)
        tr = np.trace(G, axis1=1, axis2=2).real.sum()
        if not (math.isfinite(tr) and 0 < tr < MAX_STEP_GROWTH):
            raise IntegrationError(f"effect-matrix trace {tr!r} at step {i}")
        X = G / tr
    h0 = firsts[phase_of[0]]
    blocks = np.matmul(h0.conj().transpose(0, 2, 1), np.matmul(X, h0))
    E = np.zeros((2 * n_fock, 2 * n_fock), dtype=complex)
    E[:n_fock, :n_fock] = blocks[0]
    E[n_fock:, n_fock:] = blocks[1]
    return EffectMatrix(E, layout).normalized()


def build_bell_povm(beta: complex, n_fock: int) -> BellPovm:
    """Elements ``|i>_A|X>_C <X|_C <i|_A`` for ``i in {0,1}``, ``X = +-beta``."""
    layout = HilbertSpaceLayout.qubit_cavity(n_fock)
    vecs, elems = [], []
    for o in BELL_OUTCOMES:
        q = qubit_basis(o.qubit, "A")
        c = coherent_state(o.field * beta, n_fock)
        v = Ket(np.kron(q.amplitudes, c.amplitudes), layout)
        vecs.append(v)
        elems.append(OperatorMatrix(np.outer(v.amplitudes, v.amplitudes.conj()), layout, o.label))
    return BellPovm(tuple(elems), BELL_OUTCOMES, tuple(vecs))


def uniform_prior(povm: BellPovm) -> DensityOperator:
    """Equal mixture of the four (non-orthogonal) product states."""
    layout = povm.vectors[0].layout
    m = sum(np.outer(v.amplitudes, v.amplitudes.conj()) for v in povm.vectors) / len(povm.vectors)
    return DensityOperator(m, layout)


def retrodict(rho_prior: DensityOperator, E0: EffectMatrix, povm: BellPovm) -> RetrodictionResult:
    """``p(i) = Tr(M_i rho M_i^dag E) / sum_j Tr(M_j rho M_j^dag E)``.

    Ties resolve to the lowest outcome index.  Raises
    :class:`DegenerateRetrodiction` if every weight is zero.
    """
    if rho_prior.matrix.shape != E0.matrix.shape:
        raise ValueError("prior and effect matrix live on different spaces")
    weights = []
    for m in povm.elements:
        mm = m.matrix
        post = mm @ rho_prior.matrix @ mm.conj().T
        weights.append(float(np.real(np.sum(post * E0.matrix.T))))
    w = np.clip(np.array(weights), 0.0, None)
    total = math.fsum(w)
    if not (math.isfinite(total) and total > 0):
        raise DegenerateRetrodiction(f"retrodicted weights {weights}")
    probs = w / total
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    best = order[0]
    margin = float(probs[best] - probs[order[1]])
    return RetrodictionResult(tuple(float(p) for p in probs), povm.outcomes[best], margin)
