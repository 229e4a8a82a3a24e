"""Teleportation of a qubit through a leaky cavity with continuous readout.

Pipeline for one trajectory:

1. ``phi_BC = (|0>|beta> + |1>|-beta>)/sqrt(2)``
2. ideal gates ``H_A U_AC`` on ``|psi>_A phi_BC``
3. probe the leaking field (no drive, no dispersive shift) for ``T_beta``
4. drive the cavity with qubit A dispersively coupled for ``T_m``
5. choose a Bell outcome from the current alone, either from the signs of
   the integrated signal ("direct") or by retrodiction ("pqs")
6. apply the Pauli correction to B and score ``<psi|rho_B|psi>``
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .hilbert import (
    HADAMARD,
    IDENTITY_2,
    SIGMA_X,
    SIGMA_Z,
    DensityOperator,
    HilbertSpaceLayout,
    Ket,
    OperatorMatrix,
    check_truncation,
    coherent_state,
    fidelity,
    haar_random_qubit,
    partial_trace,
)
from .pqs import (
    BellOutcome,
    BellPovm,
    DegenerateRetrodiction,
    RetrodictionResult,
    build_bell_povm,
    propagate_backward,
    retrodict,
    uniform_prior,
)
from .sme import (
    HomodyneRecord,
    PhaseSpec,
    SmeParams,
    integrate_s_a,
    integrate_s_beta,
    simulate_ket_phases,
    simulate_phase,
)

__all__ = [
    "ProtocolConfig",
    "BellOutcome",
    "RunResult",
    "FidelityEstimate",
    "STRATEGIES",
    "prepare_entangled_state",
    "controlled_phase_unitary",
    "apply_bell_gates",
    "choose_correction",
    "decide_direct",
    "decide_pqs",
    "run_trajectory",
    "projective_oracle_fidelity",
    "estimate_protocol_fidelity",
    "simulate_ensemble",
    "summarize",
    "sweep_efficiency",
    "sweep_time",
    "retrodict_prepared_label",
    "state_rng",
    "trajectory_rng",
]

STRATEGIES = ("direct", "pqs")


@dataclass(frozen=True)
class ProtocolConfig:
    """Physical and numerical parameters of one teleportation experiment.

    Times are in units of ``1/kappa``; ``chi_over_kappa`` and
    ``drive_over_chi`` fix the readout drive ``eps_r = drive_over_chi * chi``.
    """

    beta: float = 2.0
    chi_over_kappa: float = 13.5
    drive_over_chi: float = 2.0
    total_time: float = 2.0
    beta_fraction: float = 0.4
    wait_time: float = 0.3
    eta: float = 1.0
    n_fock: int = 60
    dt: float = 1e-3
    kappa: float = 1.0
    seed: int = 0
    n_states: int = 500
    n_trajectories_per_state: int = 1

    def __post_init__(self):
        if not self.total_time > 0:
            raise ValueError("total_time must be positive")
        if not 0 < self.beta_fraction < 1:
            raise ValueError("beta_fraction must lie strictly between 0 and 1")
        if not 0 <= self.wait_time < self.t_m:
            raise ValueError(f"wait_time {self.wait_time} must lie in [0, T_m = {self.t_m})")
        if not 0 <= self.eta <= 1:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.n_states < 1 or self.n_trajectories_per_state < 1:
            raise ValueError("n_states and n_trajectories_per_state must be >= 1")
        if self.beta ** 2 > self.n_fock / 4:
            raise ValueError("beta^2 exceeds n_fock/4")
        SmeParams(self.kappa, self.eta, self.dt)

    @property
    def t_beta(self) -> float:
        return self.beta_fraction * self.total_time

    @property
    def t_m(self) -> float:
        return self.total_time - self.t_beta

    @property
    def chi(self) -> float:
        return self.chi_over_kappa * self.kappa

    @property
    def drive(self) -> float:
        return self.drive_over_chi * self.chi

    def sme_params(self) -> SmeParams:
        return SmeParams(self.kappa, self.eta, self.dt)

    def phases(self) -> list[PhaseSpec]:
        return [
            PhaseSpec(self.t_beta),
            PhaseSpec(self.t_m, chi_A=self.chi, chi_B=0.0, drive=self.drive),
        ]

    def with_(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)


@dataclass
class RunResult:
    input_state: np.ndarray
    s_beta: int
    s_a: int
    outcome_direct: BellOutcome
    outcome_pqs: BellOutcome
    retrodiction: RetrodictionResult | None
    fidelity_direct: float
    fidelity_pqs: float
    pqs_fallback: bool = False
    max_top_population: float = 0.0
    state_index: int = 0
    trajectory_index: int = 0
    record: HomodyneRecord | None = field(default=None, repr=False)

    def fidelity(self, strategy: str) -> float:
        return {"direct": self.fidelity_direct, "pqs": self.fidelity_pqs}[strategy]

    def outcome(self, strategy: str) -> BellOutcome:
        return {"direct": self.outcome_direct, "pqs": self.outcome_pqs}[strategy]


@dataclass(frozen=True)
class FidelityEstimate:
    mean: float
    stderr: float
    n: int
    fallbacks: int = 0


# --- states and gates -----------------------------------------------------


def prepare_entangled_state(beta: float, n_fock: int) -> Ket:
    """``(|0>_B|beta> + |1>_B|-beta>) / sqrt(2)``, normalized after truncation."""
    plus = coherent_state(beta, n_fock).amplitudes
    minus = coherent_state(-beta, n_fock).amplitudes
    layout = HilbertSpaceLayout((2, n_fock), ("B", "C"))
    v = np.concatenate([plus, minus]) / math.sqrt(2.0)
    return Ket(v, layout).normalized()


def _parity(n_fock: int) -> np.ndarray:
    return np.where(np.arange(n_fock) % 2 == 0, 1.0, -1.0)


def controlled_phase_unitary(n_fock: int, qubit: str = "A") -> OperatorMatrix:
    """``|0><0| x 1 + |1><1| x exp(i pi n)`` on (qubit, cavity)."""
    layout = HilbertSpaceLayout((2, n_fock), (qubit, "C"))
    diag = np.concatenate([np.ones(n_fock), _parity(n_fock)]).astype(complex)
    return OperatorMatrix(np.diag(diag), layout, f"U_{qubit}C")


def _gates_sector(psi_a: np.ndarray, phi_bc: np.ndarray) -> np.ndarray:
    """``H_A U_AC (psi_A x phi_BC)`` as an array indexed ``[a, b, n]``."""
    n_fock = phi_bc.shape[-1]
    t = psi_a[:, None, None] * phi_bc[None, :, :]
    t[1] = t[1] * _parity(n_fock)
    return np.einsum("ij,jbn->ibn", HADAMARD, t)


def apply_bell_gates(psi_a: Ket, phi_bc: Ket) -> Ket:
    """Hadamard on A after the A-controlled cavity parity, on (A, B, C)."""
    n_fock = phi_bc.layout.factors[-1]
    t = _gates_sector(psi_a.amplitudes, phi_bc.amplitudes.reshape(2, n_fock))
    return Ket(t.reshape(-1), HilbertSpaceLayout.full(n_fock))


_CORRECTIONS = {
    BellOutcome(0, 1): IDENTITY_2,
    BellOutcome(0, -1): SIGMA_X,
    BellOutcome(1, 1): SIGMA_Z,
    BellOutcome(1, -1): SIGMA_Z @ SIGMA_X,
}


def choose_correction(outcome: BellOutcome) -> np.ndarray:
    """Pauli correction on B for a Bell outcome."""
    return _CORRECTIONS[BellOutcome(*outcome)]


def _corrected_fidelity(psi: np.ndarray, rho_b: np.ndarray, outcome: BellOutcome) -> float:
    c = choose_correction(outcome)
    return fidelity(psi, c @ rho_b @ c.conj().T)


@lru_cache(maxsize=8)
def _povm_and_prior(beta: float, n_fock: int) -> tuple[BellPovm, DensityOperator]:
    povm = build_bell_povm(beta, n_fock)
    return povm, uniform_prior(povm)


@lru_cache(maxsize=8)
def _phi_bc(beta: float, n_fock: int) -> np.ndarray:
    return prepare_entangled_state(beta, n_fock).amplitudes.reshape(2, n_fock)


# --- decisions (functions of the record only) ------------------------------


def decide_direct(record: HomodyneRecord, config: ProtocolConfig) -> tuple[BellOutcome, int, int]:
    s_beta = integrate_s_beta(record)
    s_a = integrate_s_a(record, config.wait_time)
    return BellOutcome.from_signs(s_a, s_beta), s_beta, s_a


def decide_pqs(record: HomodyneRecord, config: ProtocolConfig) -> RetrodictionResult:
    """Most likely initial Bell outcome given the whole record.

    May raise :class:`~pqsteleport.pqs.DegenerateRetrodiction`.
    """
    povm, prior = _povm_and_prior(config.beta, config.n_fock)
    E0 = propagate_backward(record, config.phases(), config.n_fock)
    return retrodict(prior, E0, povm)


def decide(record: HomodyneRecord, config: ProtocolConfig) -> dict:
    """Both strategies' choices, recomputed from a record alone."""
    direct, s_beta, s_a = decide_direct(record, config)
    try:
        retro = decide_pqs(record, config)
        pqs, fallback = retro.outcome, False
    except DegenerateRetrodiction:
        retro, pqs, fallback = None, direct, True
    return {
        "direct": direct,
        "pqs": pqs,
        "retrodiction": retro,
        "fallback": fallback,
        "s_beta": s_beta,
        "s_a": s_a,
    }


# --- trajectories -----------------------------------------------------------


def _ket_phases(config: ProtocolConfig, with_b: bool = True):
    out = []
    for ph in config.phases():
        chis = (ph.chi_A, ph.chi_B) if with_b else (ph.chi_A,)
        out.append((ph, chis))
    return out


def _forward_density(config: ProtocolConfig, psi0: np.ndarray, rng) -> tuple[np.ndarray, HomodyneRecord, float]:
    layout = HilbertSpaceLayout.full(config.n_fock)
    v = psi0.reshape(-1)
    rho = DensityOperator(np.outer(v, v.conj()), layout)
    params = config.sme_params()
    segments = []
    for ph in config.phases():
        rho, seg = simulate_phase(rho, ph, params, rng)
        if seg.n_samples:
            segments.append(seg)
    record = HomodyneRecord.concatenate(segments)
    diag = np.real(np.diag(rho.matrix)).reshape(2, 2, config.n_fock)
    top = float(diag[..., -2:].sum())
    return partial_trace(rho, ["B"]).matrix, record, top


def run_trajectory(
    config: ProtocolConfig,
    psi_a: Ket | np.ndarray,
    rng: np.random.Generator,
    forward: str = "ket",
    keep_record: bool = True,
) -> RunResult:
    """Simulate one trajectory and score both strategies on the same record.

    ``forward="ket"`` integrates pure states with the undetected output
    unravelled by a hidden detector (unbiased for ensemble fidelities);
    ``forward="density"`` integrates the full conditional density matrix
    and is meant for small validation runs.
    """
    psi = psi_a.amplitudes if isinstance(psi_a, Ket) else np.asarray(psi_a, dtype=complex)
    psi0 = _gates_sector(psi, _phi_bc(config.beta, config.n_fock))
    if forward == "ket":
        traj = simulate_ket_phases(psi0, _ket_phases(config), config.sme_params(), rng)
        record, top = traj.record, traj.max_top_population
        rho_b = np.einsum("abn,acn->bc", traj.psi, traj.psi.conj())
    elif forward == "density":
        rho_b, record, top = _forward_density(config, psi0, rng)
    else:
        raise ValueError(f"unknown forward mode {forward!r}")
    check_truncation(top, "forward trajectory")
    d = decide(record, config)
    return RunResult(
        input_state=psi,
        s_beta=d["s_beta"],
        s_a=d["s_a"],
        outcome_direct=d["direct"],
        outcome_pqs=d["pqs"],
        retrodiction=d["retrodiction"],
        fidelity_direct=_corrected_fidelity(psi, rho_b, d["direct"]),
        fidelity_pqs=_corrected_fidelity(psi, rho_b, d["pqs"]),
        pqs_fallback=d["fallback"],
        max_top_population=top,
        record=record if keep_record else None,
    )


def _branch_weights(psi0: np.ndarray, povm: BellPovm) -> tuple[np.ndarray, np.ndarray]:
    """Born weights of the four outcomes and the (unnormalized) B states."""
    # psi0[a, b, n] -> per-b vectors on (A, C)
    per_b = psi0.transpose(1, 0, 2).reshape(2, -1)
    amps = np.array([[np.vdot(v.amplitudes, per_b[b]) for b in range(2)] for v in povm.vectors])
    w = np.sum(np.abs(amps) ** 2, axis=1)
    return w / w.sum(), amps


def projective_oracle_fidelity(
    config: ProtocolConfig,
    psi_a: Ket | np.ndarray,
    rng: np.random.Generator | None = None,
) -> float:
    """Fidelity with an ideal Bell measurement in place of the probing.

    With ``rng`` one branch is sampled; without it the branch-averaged
    fidelity is returned.
    """
    psi = psi_a.amplitudes if isinstance(psi_a, Ket) else np.asarray(psi_a, dtype=complex)
    psi0 = _gates_sector(psi, _phi_bc(config.beta, config.n_fock))
    povm, _ = _povm_and_prior(config.beta, config.n_fock)
    probs, amps = _branch_weights(psi0, povm)

    def branch_fid(i):
        b = amps[i] / np.linalg.norm(amps[i])
        return _corrected_fidelity(psi, np.outer(b, b.conj()), povm.outcomes[i])

    if rng is None:
        return float(sum(p * branch_fid(i) for i, p in enumerate(probs)))
    i = int(rng.choice(4, p=probs))
    return branch_fid(i)


def retrodict_prepared_label(
    config: ProtocolConfig, outcome: BellOutcome, rng: np.random.Generator
) -> RetrodictionResult:
    """Start from ``|i>_A|X>_C``, probe, and retrodict the initial label."""
    outcome = BellOutcome(*outcome)
    psi0 = np.zeros((2, config.n_fock), dtype=complex)
    psi0[outcome.qubit] = coherent_state(outcome.field * config.beta, config.n_fock).amplitudes
    traj = simulate_ket_phases(psi0, _ket_phases(config, with_b=False), config.sme_params(), rng)
    check_truncation(traj.max_top_population, "label trajectory")
    return decide_pqs(traj.record, config)


# --- ensembles --------------------------------------------------------------


def state_rng(seed: int, state_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0, state_index])


def trajectory_rng(seed: int, state_index: int, trajectory_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1, state_index, trajectory_index])


def _limit_threads():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return
    threadpool_limits(1)


def _run_task(task):
    config, state_index, traj_index, psi, keep_record = task
    if psi is None:
        psi = haar_random_qubit(state_rng(config.seed, state_index)).amplitudes
    res = run_trajectory(
        config, psi, trajectory_rng(config.seed, state_index, traj_index), keep_record=keep_record
    )
    res.state_index, res.trajectory_index = state_index, traj_index
    return res


def _map(func, tasks: list, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_limit_threads) as pool:
        return list(pool.map(func, tasks, chunksize=chunk))


def simulate_ensemble(
    config: ProtocolConfig,
    workers: int = 1,
    inputs: Sequence[np.ndarray] | None = None,
    keep_records: bool = False,
) -> list[RunResult]:
    """Run ``n_states x n_trajectories_per_state`` trajectories.

    Inputs are Haar-random per state index unless ``inputs`` fixes them.
    Every trajectory draws from its own stream keyed by
    ``(seed, state_index, trajectory_index)``, so results do not depend on
    ``workers``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    n_states = len(inputs) if inputs is not None else config.n_states
    tasks = [
        (config, s, t, None if inputs is None else np.asarray(inputs[s], dtype=complex), keep_records)
        for s in range(n_states)
        for t in range(config.n_trajectories_per_state)
    ]
    return _map(_run_task, tasks, workers)


def summarize(results: Sequence[RunResult], strategy: str) -> FidelityEstimate:
    """Mean fidelity and its standard error, independent of result order."""
    ordered = sorted(results, key=lambda r: (r.state_index, r.trajectory_index))
    f = np.array([r.fidelity(strategy) for r in ordered])
    n = f.size
    mean = math.fsum(f) / n
    var = math.fsum((f - mean) ** 2) / (n - 1) if n > 1 else 0.0
    fallbacks = sum(r.pqs_fallback for r in ordered) if strategy == "pqs" else 0
    return FidelityEstimate(mean, math.sqrt(var / n), n, fallbacks)


def estimate_protocol_fidelity(config: ProtocolConfig, strategy: str, workers: int = 1) -> FidelityEstimate:
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    return summarize(simulate_ensemble(config, workers), strategy)


def _sweep(config: ProtocolConfig, axis: str, values: Iterable[float], workers: int):
    values = list(values)
    if not values:
        raise ValueError("sweep grid is empty")
    field_name = {"eta": "eta", "time": "total_time"}[axis]
    rows = []
    for v in values:
        results = simulate_ensemble(config.with_(**{field_name: float(v)}), workers)
        for strategy in STRATEGIES:
            rows.append((float(v), strategy, summarize(results, strategy)))
    return rows


def sweep_efficiency(config: ProtocolConfig, etas: Iterable[float], workers: int = 1):
    """``[(eta, strategy, FidelityEstimate), ...]`` over a grid of efficiencies."""
    return _sweep(config, "eta", etas, workers)


def sweep_time(config: ProtocolConfig, totals: Iterable[float], workers: int = 1):
    """``[(T, strategy, FidelityEstimate), ...]`` over total probing times."""
    return _sweep(config, "time", totals, workers)
