"""Conditional (homodyne) evolution of the qubit-cavity system.

The diffusive stochastic master equation

    d rho = -i[H, rho] dt + kappa D[a] rho dt
            + sqrt(kappa eta) (a rho + rho a^dag - <X> rho) dW

is integrated in Kraus form.  One step of length ``dt`` is a Strang
split around the measurement update::

    rho_1 = R rho R^dag                     R = P S^(-1/2)
    rho_2 = M rho_1 M^dag + D(rho_1)
    rho'  = P rho_2 P^dag / Tr(...)         P = exp((-iH - kappa/2 n) dt/2)

with ``M = 1 + sqrt(kappa eta) a dY + (kappa eta / 2) a^2 (dY^2 - dt)``,
``dY = J dt`` the recorded current increment, and the unmonitored
fraction of the output

    D(rho) = (1 - eta) kappa dt a rho a^dag
             + (1 - eta^2) (kappa dt)^2 / 2 a^2 rho a^dag^2.

Averaged over ``dY ~ N(0, dt)`` the jump part is ``1 + L dt + (L dt)^2 / 2``
with ``L rho = kappa a rho a^dag``, so the split is second order.  ``S`` is
that average of ``sum K^dag K`` for the bare Kraus set ``K = P M P``; it
differs from the identity at third order in ``dt`` and dividing it out
makes the noise-averaged map exactly trace preserving.  Using the exact exponential for the no-jump part keeps the
large dispersive phases (``chi * n * dt`` approaches 1 in the top Fock
levels) stable, and the scheme is positivity preserving.  The backward
pass in :mod:`.pqs` uses the exact adjoint of this map.

Times are in units of ``1/kappa`` when ``kappa == 1`` (the default).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .hilbert import (
    SIGMA_Z,
    DensityOperator,
    HilbertSpaceLayout,
    OperatorMatrix,
    embed,
    fock_annihilation,
)

__all__ = [
    "IntegrationError",
    "PhaseSpec",
    "SmeParams",
    "HomodyneRecord",
    "build_hamiltonian",
    "sme_step",
    "simulate_phase",
    "integrate_s_beta",
    "integrate_s_a",
    "trace_defect",
    "sector_shifts",
    "SectorPropagator",
    "SplitOps",
    "split_ops",
    "KetTrajectory",
    "simulate_ket_phases",
]

# Largest allowed deterministic trace defect in one step.
MAX_TRACE_DEFECT = 1e-2


class IntegrationError(ArithmeticError):
    """Raised when a step is too coarse or the state stops being finite."""


@dataclass(frozen=True)
class PhaseSpec:
    """One constant-Hamiltonian probing interval.

    ``lo_phase`` is the local-oscillator phase; 0 measures ``a + a^dag``.
    """

    duration: float
    chi_A: float = 0.0
    chi_B: float = 0.0
    drive: complex = 0.0
    lo_phase: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.duration) or self.duration < 0:
            raise ValueError(f"phase duration must be >= 0, got {self.duration}")
        if not (math.isfinite(self.chi_A) and math.isfinite(self.chi_B)):
            raise ValueError("dispersive shifts must be finite")


@dataclass(frozen=True)
class SmeParams:
    kappa: float = 1.0
    eta: float = 1.0
    dt: float = 1e-3

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.kappa * self.dt > 0.01 + 1e-12:
            raise ValueError(f"kappa*dt = {self.kappa * self.dt:g} exceeds 0.01")

    def n_steps(self, duration: float) -> int:
        return int(round(duration / self.dt))


@dataclass(eq=False)
class HomodyneRecord:
    """Sampled homodyne current ``J(t_k)`` on a uniform grid.

    ``phase_boundaries`` holds the cumulative end index of every probing
    phase, so for the teleportation protocol it is ``(n_beta, n_total)``.
    """

    dt: float
    samples: np.ndarray
    phase_boundaries: tuple[int, ...]
    eta: float
    kappa: float = 1.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.phase_boundaries = tuple(int(b) for b in self.phase_boundaries)
        prev = -1
        for b in self.phase_boundaries:
            if b <= prev or b > self.samples.size:
                raise ValueError(
                    f"phase boundaries {self.phase_boundaries} not strictly increasing "
                    f"within 0..{self.samples.size}"
                )
            prev = b
        if self.phase_boundaries and self.phase_boundaries[-1] != self.samples.size:
            raise ValueError("last phase boundary must equal the sample count")

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def total_time(self) -> float:
        return self.n_samples * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    @classmethod
    def concatenate(cls, segments: Sequence["HomodyneRecord"]) -> "HomodyneRecord":
        if not segments:
            raise ValueError("no segments to concatenate")
        first = segments[0]
        for s in segments[1:]:
            if (s.dt, s.eta, s.kappa) != (first.dt, first.eta, first.kappa):
                raise ValueError("segments disagree on dt, eta or kappa")
        samples = np.concatenate([s.samples for s in segments])
        bounds, total = [], 0
        for s in segments:
            total += s.n_samples
            if s.n_samples:
                bounds.append(total)
        return cls(first.dt, samples, tuple(bounds), first.eta, first.kappa)

    def meta(self) -> dict[str, str]:
        out = {"dt": repr(self.dt), "eta": repr(self.eta), "kappa": repr(self.kappa)}
        b = self.phase_boundaries
        if len(b) >= 1:
            out["t_beta"] = repr(b[0] * self.dt)
        if len(b) >= 2:
            out["t_m"] = repr((b[1] - b[0]) * self.dt)
        out["boundaries"] = ",".join(str(i) for i in b)
        return out

    def to_csv(self, path: str | Path) -> Path:
        """Write ``t,J`` rows to ``path`` and a ``.meta`` key-value sidecar."""
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "J"])
            for k, j in enumerate(self.samples):
                w.writerow([repr(k * self.dt), repr(float(j))])
        meta = path.with_suffix(".meta")
        meta.write_text("".join(f"{k}={v}\n" for k, v in self.meta().items()), encoding="utf-8")
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "HomodyneRecord":
        path = Path(path)
        meta = {}
        for line in path.with_suffix(".meta").read_text(encoding="utf-8").splitlines():
            if line.strip():
                k, _, v = line.partition("=")
                meta[k.strip()] = v.strip()
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["t", "J"]:
            raise ValueError(f"{path}: expected header t,J, got {rows[0]}")
        samples = np.array([float(r[1]) for r in rows[1:]])
        bounds = tuple(int(x) for x in meta.get("boundaries", "").split(",") if x)
        return cls(float(meta["dt"]), samples, bounds, float(meta["eta"]), float(meta["kappa"]))


def _cavity_index(layout: HilbertSpaceLayout) -> int:
    if "C" not in layout.names:
        raise ValueError(f"layout {layout.names} has no cavity factor 'C'")
    return layout.index("C")


def _cavity_ops(layout: HilbertSpaceLayout, lo_phase: float = 0.0):
    n_fock = layout.factors[_cavity_index(layout)]
    a = embed(fock_annihilation(n_fock), "C", layout).matrix
    return a, a * np.exp(-1j * lo_phase)


def build_hamiltonian(phase: PhaseSpec, layout: HilbertSpaceLayout) -> OperatorMatrix:
    """``chi_A sz_A n + chi_B sz_B n + eps a^dag + eps^* a`` in the cavity frame."""
    a, _ = _cavity_ops(layout)
    n = a.conj().T @ a
    h = phase.drive * a.conj().T + np.conj(phase.drive) * a
    for name, chi in (("A", phase.chi_A), ("B", phase.chi_B)):
        if chi == 0:
            continue
        if name not in layout.names:
            raise ValueError(f"chi_{name} = {chi} but layout has no qubit {name}")
        h = h + chi * embed(SIGMA_Z, name, layout).matrix @ n
    return OperatorMatrix(h, layout, "H")


def _half_step(h: np.ndarray, n: np.ndarray, kappa: float, dt: float) -> np.ndarray:
    return expm((-1j * h - 0.5 * kappa * n) * (0.5 * dt))


@dataclass(frozen=True)
class SplitOps:
    """Propagators of one normalized split step.

    A step maps ``rho`` to ``last M first rho first^dag M^dag last^dag``
    (plus the unmonitored jump term).  ``norm`` is the unnormalized
    ``S``; ``Tr(S rho) - 1`` is the step's trace defect.
    """

    first: np.ndarray
    last: np.ndarray
    norm: np.ndarray


def split_ops(h: np.ndarray, a: np.ndarray, kappa: float, dt: float) -> SplitOps:
    """Normalized split propagators for Hamiltonian ``h`` and annihilation operator ``a``."""
    ad = a.conj().T
    a2 = a @ a
    P = _half_step(h, ad @ a, kappa, dt)
    Q = P.conj().T @ P
    inner = Q + kappa * dt * (ad @ Q @ a) + 0.5 * (kappa * dt) ** 2 * (a2.conj().T @ Q @ a2)
    S = P.conj().T @ inner @ P
    S = 0.5 * (S + S.conj().T)
    w, V = np.linalg.eigh(S)
    if w.min() <= 0:
        raise IntegrationError("split-step normalization is not positive definite; reduce dt")
    first = P @ (V * w**-0.5) @ V.conj().T
    return SplitOps(first, P, S)


def _kraus_update(rho, a_lo, a, dY, params: SmeParams):
    """Measurement/jump part of a step applied to an already half-propagated state."""
    k, eta, dt = params.kappa, params.eta, params.dt
    m = np.eye(rho.shape[0], dtype=complex)
    if eta > 0:
        m = m + math.sqrt(k * eta) * dY * a_lo + 0.5 * k * eta * (dY * dY - dt) * (a_lo @ a_lo)
    out = m @ rho @ m.conj().T
    if eta < 1:
        a2 = a @ a
        out = out + (1.0 - eta) * k * dt * (a @ rho @ a.conj().T)
        out = out + 0.5 * (1.0 - eta * eta) * (k * dt) ** 2 * (a2 @ rho @ a2.conj().T)
    return out


def _defect(rho, norm) -> float:
    return float(np.real(np.sum(norm.T * rho))) - 1.0


def trace_defect(rho: DensityOperator, H: OperatorMatrix, params: SmeParams) -> float:
    """Average trace change of one step before the split is normalized.

    The bare split step is trace preserving only to second order in
    ``dt``.  The normalization removes this defect, and its size, bounded
    by ``MAX_TRACE_DEFECT``, is the test for a step that is too coarse.
    """
    a, _ = _cavity_ops(rho.layout)
    ops = split_ops(H.matrix, a, params.kappa, params.dt)
    return _defect(rho.matrix, ops.norm)


def _step(rho, ops: SplitOps, a_lo, a, params: SmeParams, dW: float):
    k, eta, dt = params.kappa, params.eta, params.dt
    x = 2.0 * np.real(np.trace(a_lo @ rho))
    J = math.sqrt(k * eta) * x + dW / dt
    defect = _defect(rho, ops.norm)
    if abs(defect) > MAX_TRACE_DEFECT:
        raise IntegrationError(f"trace defect {defect:.3e} in one step; reduce dt")
    r1 = ops.first @ rho @ ops.first.conj().T
    r2 = _kraus_update(r1, a_lo, a, J * dt, params)
    r3 = ops.last @ r2 @ ops.last.conj().T
    r3 = 0.5 * (r3 + r3.conj().T)
    tr = np.real(np.trace(r3))
    if not (math.isfinite(tr) and tr > 0):
        raise IntegrationError(f"non-positive trace {tr!r} after step")
    return r3 / tr, J


def sme_step(
    rho: DensityOperator,
    H: OperatorMatrix,
    params: SmeParams,
    dW: float,
    lo_phase: float = 0.0,
) -> tuple[DensityOperator, float]:
    """Advance ``rho`` by one step; return the new state and the current ``J``.

    ``J`` uses the pre-step state.  With ``eta == 0`` the noise is ignored
    and the update is the deterministic Lindblad step.
    """
    a, a_lo = _cavity_ops(rho.layout, lo_phase)
    ops = split_ops(H.matrix, a, params.kappa, params.dt)
    new, J = _step(rho.matrix, ops, a_lo, a, params, dW)
    return DensityOperator(new, rho.layout), J


def simulate_phase(
    rho0: DensityOperator,
    phase: PhaseSpec,
    params: SmeParams,
    rng: np.random.Generator | None,
) -> tuple[DensityOperator, HomodyneRecord]:
    """Integrate one phase with dense density matrices (reference path).

    ``rng`` may be ``None`` when ``params.eta == 0``; the current then
    carries no noise and the evolution is the deterministic Lindblad one.
    """
    n_steps = params.n_steps(phase.duration)
    if rng is None:
        if params.eta > 0:
            raise ValueError("a random generator is required when eta > 0")
        dW = np.zeros(n_steps)
    else:
        dW = rng.normal(0.0, math.sqrt(params.dt), n_steps)
    layout = rho0.layout
    a, a_lo = _cavity_ops(layout, phase.lo_phase)
    H = build_hamiltonian(phase, layout)
    ops = split_ops(H.matrix, a, params.kappa, params.dt)
    rho = rho0.matrix
    J = np.empty(n_steps)
    for k in range(n_steps):
        rho, J[k] = _step(rho, ops, a_lo, a, params, dW[k])
    bounds = (n_steps,) if n_steps else ()
    record = HomodyneRecord(params.dt, J, bounds, params.eta, params.kappa)
    return DensityOperator(rho, layout), record


def _window_sign(samples: np.ndarray, dt: float) -> int:
    return 1 if float(np.sum(samples)) * dt >= 0.0 else -1


def integrate_s_beta(record: HomodyneRecord) -> int:
    """Sign of the integrated current over the first probing phase.

    +1 selects ``+beta``; an exact zero resolves to +1.
    """
    end = record.phase_boundaries[0] if record.phase_boundaries else record.n_samples
    return _window_sign(record.samples[:end], record.dt)


def integrate_s_a(record: HomodyneRecord, wait_time: float) -> int:
    """Sign of the integrated current over ``[T_beta + T_w, T_beta + T_m]``.

    Negative means qubit A in ``|1>``, positive ``|0>``.
    """
    if len(record.phase_boundaries) < 2:
        raise ValueError("record has no second probing phase")
    start = record.phase_boundaries[0] + int(round(wait_time / record.dt))
    end = record.phase_boundaries[1]
    if wait_time < 0 or start >= end:
        raise ValueError(
            f"empty or inverted qubit-readout window (wait_time={wait_time}, "
            f"phase length={(end - record.phase_boundaries[0]) * record.dt})"
        )
    return _window_sign(record.samples[start:end], record.dt)


# --- sector form --------------------------------------------------------
#
# All couplings are diagonal in the qubit basis, so a state on
# (qubits..., cavity) splits into one cavity vector per qubit basis
# configuration ("sector").  Each sector evolves with its own cavity
# Hamiltonian  h_s = (sum_q chi_q s_q) n + eps a^dag + eps^* a,  s_q = +-1.


def sector_shifts(qubit_chis: Sequence[float]) -> np.ndarray:
    """Total dispersive shift per sector, C-ordered over the qubit indices."""
    chis = np.asarray(qubit_chis, dtype=float)
    signs = np.array([-1.0, 1.0])  # sigma_z eigenvalues of |0>, |1>
    grids = np.meshgrid(*([signs] * chis.size), indexing="ij")
    total = sum(c * g for c, g in zip(chis, grids)) if chis.size else np.zeros(())
    return np.asarray(total, dtype=float).reshape(-1)


@dataclass
class SectorPropagator:
    """Per-sector split-step propagators for one phase.

    ``first`` and ``last`` are stacks over the sectors of
    :attr:`SplitOps.first` and :attr:`SplitOps.last`.
    """

    phase: PhaseSpec
    params: SmeParams
    n_fock: int
    qubit_chis: tuple[float, ...]
    first: np.ndarray = field(init=False, repr=False)
    last: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = fock_annihilation(self.n_fock).matrix
        n = np.diag(np.arange(self.n_fock, dtype=float)).astype(complex)
        drive = self.phase.drive * a.conj().T + np.conj(self.phase.drive) * a
        p = self.params
        cache: dict[float, SplitOps] = {}
        ops = []
        for s in sector_shifts(self.qubit_chis):
            if s not in cache:
                cache[s] = split_ops(s * n + drive, a, p.kappa, p.dt)
            ops.append(cache[s])
        self.first = np.stack([o.first for o in ops])
        self.last = np.stack([o.last for o in ops])


def _shift_down(v: np.ndarray, sqrt_n: np.ndarray) -> np.ndarray:
    """Apply the annihilation operator along the last axis."""
    out = np.zeros_like(v)
    out[..., :-1] = v[..., 1:] * sqrt_n[1:]
    return out


@dataclass
class KetTrajectory:
    """Result of a pure-state trajectory in sector form."""

    psi: np.ndarray
    record: HomodyneRecord
    max_top_population: float


def simulate_ket_phases(
    psi0: np.ndarray,
    phases: Sequence[tuple[PhaseSpec, Sequence[float]]],
    params: SmeParams,
    rng: np.random.Generator,
) -> KetTrajectory:
    """Pure-state trajectory with the undetected output unravelled as a hidden channel.

    ``psi0`` has shape ``(*qubit_dims, n_fock)`` and is normalized; each
    entry of ``phases`` pairs a :class:`PhaseSpec` with the per-qubit
    dispersive shifts active during it.  For ``eta < 1`` the fraction
    ``1 - eta`` of the cavity output is monitored by a second homodyne
    detector whose current is discarded.  Averaging over that hidden
    record reproduces the density-matrix evolution conditioned on the
    observed current alone, so ensemble averages are unchanged while each
    trajectory costs matrix-vector work only.  At ``eta == 1`` the step
    coincides with :func:`sme_step` applied to ``|psi><psi|``.
    """
    psi = np.array(psi0, dtype=complex)
    qshape, n_fock = psi.shape[:-1], psi.shape[-1]
    psi = psi.reshape(-1, n_fock)
    k, eta, dt = params.kappa, params.eta, params.dt
    sqrt_n = np.sqrt(np.arange(n_fock, dtype=float))
    sk = math.sqrt(k)
    samples, bounds, total = [], [], 0
    max_top = float(np.sum(np.abs(psi[:, -2:]) ** 2))
    for phase, chis in phases:
        n_steps = params.n_steps(phase.duration)
        dW1 = rng.normal(0.0, math.sqrt(dt), n_steps)
        dW2 = rng.normal(0.0, math.sqrt(dt), n_steps) if eta < 1 else np.zeros(n_steps)
        if n_steps == 0:
            continue
        prop = SectorPropagator(phase, params, n_fock, tuple(chis))
        first, last = prop.first, prop.last
        rot = np.exp(-1j * phase.lo_phase)
        J = np.empty(n_steps)
        se, sh = math.sqrt(eta), math.sqrt(1.0 - eta)
        for i in range(n_steps):
            a_psi = _shift_down(psi, sqrt_n) * rot
            x = 2.0 * float(np.real(np.vdot(psi, a_psi)))
            J[i] = math.sqrt(k * eta) * x + dW1[i] / dt
            dY = sk * x * dt + se * dW1[i] + sh * dW2[i]
            p1 = np.matmul(first, psi[..., None])[..., 0]
            a1 = _shift_down(p1, sqrt_n) * rot
            a2 = _shift_down(a1, sqrt_n) * rot
            p2 = p1 + sk * dY * a1 + 0.5 * k * (dY * dY - dt) * a2
            psi = np.matmul(last, p2[..., None])[..., 0]
            nrm = math.sqrt(float(np.real(np.vdot(psi, psi))))
            if not (math.isfinite(nrm) and nrm > 0):
                raise IntegrationError("state norm collapsed during ket integration")
            psi /= nrm
            top = float(np.sum(psi[:, -2:].real ** 2 + psi[:, -2:].imag ** 2))
            if top > max_top:
                max_top = top
        samples.append(J)
        total += n_steps
        bounds.append(total)
    all_samples = np.concatenate(samples) if samples else np.zeros(0)
    record = HomodyneRecord(dt, all_samples, tuple(bounds), eta, k)
    return KetTrajectory(psi.reshape(qshape + (n_fock,)), record, max_top)
