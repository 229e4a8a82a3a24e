"""Acceptance criteria 1 to 10 at their pinned sizes and tolerances.

Each test records one PASS/FAIL line that is printed in the terminal
summary.  Ensemble sizes and seeds are fixed constants chosen before any
acceptance run; the Monte-Carlo criteria take minutes to an hour each on
one core.
"""

import math

import numpy as np
import pytest
from scipy import stats

from pqsteleport.cli import main
from pqsteleport.hilbert import (
    DensityOperator,
    HilbertSpaceLayout,
    OperatorMatrix,
    coherent_state,
    fock_annihilation,
    haar_random_qubit,
)
from pqsteleport.pqs import (
    BELL_OUTCOMES,
    BellPovm,
    EffectMatrix,
    build_bell_povm,
    propagate_backward,
    retrodict,
    uniform_prior,
)
from pqsteleport.results import ResultTable
from pqsteleport.sme import PhaseSpec, SmeParams, build_hamiltonian, sme_step
from pqsteleport.teleport import (
    ProtocolConfig,
    projective_oracle_fidelity,
    retrodict_prepared_label,
    run_trajectory,
    simulate_ensemble,
    state_rng,
    summarize,
    trajectory_rng,
)
from pqsteleport.transmon import dispersive_shift, mhz, to_mhz

# Criterion 6 needs enough trajectories in which retrodiction corrects a
# wrong integrated-signal decision; a pilot with an unrelated seed put that
# rate near 1.5e-3 per trajectory at eta = 1, T = 2.
N_PAIRED = 6000
N_SWEEP = 200
SWEEP_ETAS = (0.2, 0.4, 0.6, 0.8, 1.0)
N_BASELINE = 500
N_ORACLE = 500
N_LABEL = 300
N_SIGNALING = 500


def test_criterion_01_dispersive_shift(acceptance):
    chi = to_mhz(dispersive_shift(mhz(31.0), mhz(-250.0), mhz(300.0)))
    ok = abs(abs(chi) - 2.1) <= 0.05
    assert acceptance(1, ok, f"|chi| = 2pi x {abs(chi):.4f} MHz (2.1 +- 0.05)")


def test_criterion_02_lindblad_amplitude_decay(acceptance):
    n_fock, beta = 30, 2.0
    lay = HilbertSpaceLayout((n_fock,), ("C",))
    a = fock_annihilation(n_fock).matrix
    H = build_hamiltonian(PhaseSpec(3.0), lay)
    params = SmeParams(kappa=1.0, eta=0.0, dt=1e-3)
    rho = coherent_state(beta, n_fock).dm()
    worst = 0.0
    for k in range(1, params.n_steps(3.0) + 1):
        rho, _ = sme_step(rho, H, params, 0.0)
        expected = beta * math.exp(-0.5 * k * params.dt)
        worst = max(worst, abs(rho.expect(a) - expected) / expected)
    assert acceptance(2, worst < 1e-3, f"max relative error of <a>(t) = {worst:.2e} (< 1e-3)")


def test_criterion_03_vacuum_noise_statistics(acceptance):
    n_fock, n_steps = 8, 10_000
    lay = HilbertSpaceLayout((n_fock,), ("C",))
    H = build_hamiltonian(PhaseSpec(1.0), lay)
    params = SmeParams()
    rng = np.random.default_rng(3)
    rho = coherent_state(0.0, n_fock).dm()
    increments = np.empty(n_steps)
    for k in range(n_steps):
        rho, J = sme_step(rho, H, params, rng.normal(0.0, math.sqrt(params.dt)))
        increments[k] = J * params.dt
    var, mean = increments.var(ddof=1), increments.mean()
    sigma_mean = math.sqrt(params.dt / n_steps)
    ok = abs(var / params.dt - 1) <= 0.05 and abs(mean) <= 3 * sigma_mean
    assert acceptance(3, ok, f"var/dt = {var / params.dt:.4f} (1 +- 0.05), mean = {mean / sigma_mean:+.2f} sigma")


def test_criterion_04_projective_oracle(acceptance):
    cfg = ProtocolConfig(seed=4)
    branch_rng = np.random.default_rng([cfg.seed, 3])
    fids = [projective_oracle_fidelity(cfg, haar_random_qubit(state_rng(cfg.seed, s)), branch_rng) for s in range(N_ORACLE)]
    mean = math.fsum(fids) / len(fids)
    assert acceptance(4, mean >= 0.99, f"mean fidelity {mean:.8f} over {N_ORACLE} Haar states (>= 0.99)")


@pytest.mark.slow
def test_criterion_05_random_guess_baseline(acceptance):
    results = simulate_ensemble(ProtocolConfig(eta=0.0, n_states=N_BASELINE, seed=5))
    est = {s: summarize(results, s) for s in ("direct", "pqs")}
    ok = all(abs(e.mean - 0.5) <= 0.05 for e in est.values())
    detail = ", ".join(f"{s} {e.mean:.4f} +- {e.stderr:.4f}" for s, e in est.items())
    assert acceptance(5, ok, f"eta = 0, n = {N_BASELINE}: {detail} (0.50 +- 0.05)")


@pytest.fixture(scope="module")
def paired_ensemble():
    return simulate_ensemble(ProtocolConfig(eta=1.0, total_time=2.0, n_states=N_PAIRED, seed=6))


@pytest.mark.slow
def test_criterion_06_pqs_advantage_and_efficiency_trend(acceptance, paired_ensemble):
    d = np.array([r.fidelity_pqs - r.fidelity_direct for r in paired_ensemble])
    mean = math.fsum(d) / d.size
    se = float(np.std(d, ddof=1)) / math.sqrt(d.size)
    gains, losses = int(np.sum(d > 1e-3)), int(np.sum(d < -1e-3))
    paired_ok = mean - 2 * se > 0

    curves = {s: [] for s in ("direct", "pqs")}
    for eta in SWEEP_ETAS:
        if eta == 1.0:
            # the first N_SWEEP entries are exactly the eta = 1 ensemble of that size
            results = paired_ensemble[:N_SWEEP]
        else:
            results = simulate_ensemble(ProtocolConfig(eta=eta, n_states=N_SWEEP, seed=6))
        for s in curves:
            curves[s].append(summarize(results, s))
    violations = []
    for s, pts in curves.items():
        for (e0, p0), (e1, p1) in zip(zip(SWEEP_ETAS, pts), zip(SWEEP_ETAS[1:], pts[1:])):
            if p1.mean < p0.mean - 2 * math.hypot(p0.stderr, p1.stderr):
                violations.append(f"{s} {e0}->{e1}")
    trend = "; ".join(f"{s} " + " ".join(f"{p.mean:.3f}" for p in pts) for s, pts in curves.items())
    detail = (
        f"eta = 1, T = 2, n = {d.size}: mean(PQS - Direct) = {mean:.3e} +- {se:.3e} "
        f"(z = {mean / se if se else float('inf'):.2f}, {gains} gains, {losses} losses); "
        f"trend over eta {SWEEP_ETAS}: {trend}; violations: {violations or 'none'}"
    )
    assert acceptance(6, paired_ok and not violations, detail)


@pytest.mark.slow
def test_criterion_07_retrodiction_recovers_prepared_label(acceptance):
    cfg = ProtocolConfig(eta=1.0, total_time=3.0, seed=7)
    rates = []
    for idx, outcome in enumerate(BELL_OUTCOMES):
        hits = 0
        for k in range(N_LABEL):
            rng = np.random.default_rng([cfg.seed, 2, idx, k])
            hits += retrodict_prepared_label(cfg, outcome, rng).outcome == outcome
        rates.append(hits / N_LABEL)
    ok = min(rates) >= 0.95
    detail = ", ".join(f"{o.label} {r:.3f}" for o, r in zip(BELL_OUTCOMES, rates))
    assert acceptance(7, ok, f"recovery per label over {N_LABEL}: {detail} (>= 0.95)")


def test_criterion_08_exact_retrodiction_invariants(acceptance):
    cfg = ProtocolConfig(total_time=1.0, seed=8)
    povm = build_bell_povm(cfg.beta, cfg.n_fock)
    prior = uniform_prior(povm)
    effects = []
    for s in range(3):
        res = run_trajectory(cfg, haar_random_qubit(state_rng(cfg.seed, s)), trajectory_rng(cfg.seed, s, 0))
        effects.append(propagate_backward(res.record, cfg.phases(), cfg.n_fock))
    rng = np.random.default_rng(8)
    for _ in range(3):
        g = rng.normal(size=(2 * cfg.n_fock,) * 2) + 1j * rng.normal(size=(2 * cfg.n_fock,) * 2)
        effects.append(EffectMatrix(g @ g.conj().T, prior.layout))

    sum_err, scale_err, binary_exact = 0.0, 0.0, True
    for E in effects:
        base = retrodict(prior, E, povm)
        sum_err = max(sum_err, abs(math.fsum(base.probabilities) - 1.0))
        for c in (1e-8, 0.37, 3.0, 1e9):
            p = retrodict(prior, E.scaled(c), povm).probabilities
            scale_err = max(scale_err, max(abs(x - y) for x, y in zip(p, base.probabilities)))
        for c in (2.0**-40, 0.5, 8.0, 2.0**60):
            binary_exact &= retrodict(prior, E.scaled(c), povm) == base

    # E = 1 reduces to the forward Born rule; exact for an orthogonal POVM
    lay = HilbertSpaceLayout.qubit_cavity(4)
    ortho = BellPovm(tuple(OperatorMatrix(np.diag(np.eye(8)[k]), lay) for k in range(4)), BELL_OUTCOMES)
    g = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    born = np.real(np.diag(rho))[:4]
    p = retrodict(DensityOperator(rho, lay), EffectMatrix(np.eye(8), lay), ortho).probabilities
    born_err = float(np.max(np.abs(np.array(p) - born / born.sum())))

    ok = sum_err <= 1e-10 and scale_err <= 1e-12 and binary_exact and born_err <= 1e-15
    detail = (
        f"sum error {sum_err:.1e} (<= 1e-10), scaling error {scale_err:.1e} "
        f"(bitwise for powers of two: {binary_exact}), Born-rule error {born_err:.1e}"
    )
    assert acceptance(8, ok, detail)


@pytest.mark.slow
def test_criterion_09_no_signaling(acceptance):
    inputs = (np.array([1.0, 0.0]), np.array([1.0, 1.0j]) / math.sqrt(2))
    counts = {s: [] for s in ("direct", "pqs")}
    for seed, psi in zip((91, 92), inputs):
        results = simulate_ensemble(ProtocolConfig(n_states=N_SIGNALING, seed=seed), inputs=[psi] * N_SIGNALING)
        for s in counts:
            c = np.zeros(4, dtype=int)
            for r in results:
                c[r.outcome(s).index] += 1
            counts[s].append(c)
    p_values = []
    parts = []
    for s, (c0, c1) in counts.items():
        p_u0, p_u1 = stats.chisquare(c0).pvalue, stats.chisquare(c1).pvalue
        p_same = stats.chi2_contingency(np.stack([c0, c1])).pvalue
        p_values += [p_u0, p_u1, p_same]
        parts.append(f"{s} {c0.tolist()} vs {c1.tolist()} p_uniform {p_u0:.3f}/{p_u1:.3f} p_same {p_same:.3f}")
    ok = min(p_values) > 0.01
    assert acceptance(9, ok, "; ".join(parts) + " (p > 0.01)")


def test_criterion_10_byte_identical_results(acceptance, tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text("total_time = 1.0\nn_states = 6\nsweep = eta\ngrid = 0.5, 1.0\n")
    blobs = []
    for name, workers in (("w1a", 1), ("w1b", 1), ("w2", 2)):
        out = tmp_path / name
        assert main(["run", "--config", str(cfg), "--seed", "10", "--workers", str(workers), "--out", str(out)]) == 0
        blobs.append((out / "results.csv").read_bytes())
    table = ResultTable.from_csv(tmp_path / "w1a" / "results.csv")
    ok = blobs[0] == blobs[1] == blobs[2] and len(table) == 4
    assert acceptance(10, ok, f"results.csv identical across 2 serial runs and 2 workers: {ok}")
