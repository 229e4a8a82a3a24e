"""Command-line entry point.

Subcommands::

    run               one ensemble, or the sweep named in the config file
    sweep-eta         fidelity against detector efficiency
    sweep-time        fidelity against total probing time
    gate-calc         transmon controlled-phase calibration report
    dump-trajectory   one trajectory's current record and retrodiction

Ensemble commands write ``results.csv`` and a PNG figure into ``--out``.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_grid
from .hilbert import haar_random_qubit
from .pqs import read_retrodictions, write_retrodictions
from .results import ResultRow, ResultTable
from .sme import HomodyneRecord
from .teleport import (
    STRATEGIES,
    decide,
    run_trajectory,
    simulate_ensemble,
    state_rng,
    summarize,
    trajectory_rng,
)
from .transmon import calibration_report, to_mhz

__all__ = ["main", "build_parser", "run_experiment", "format_gate_report"]

DEFAULT_GRIDS = {"eta": (0.2, 0.4, 0.6, 0.8, 1.0), "time": (1.0, 2.0, 3.0)}
_AXIS_FIELD = {"eta": "eta", "time": "total_time"}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64), got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _grid(text: str) -> tuple[float, ...]:
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value configuration file")
    common.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (default: results)")
    common.add_argument("--workers", type=_positive_int, help="worker processes")
    common.add_argument(
        "--debug-records",
        action="store_true",
        default=None,
        help="also write every trajectory's current record",
    )
    common.add_argument("--n-states", type=_positive_int, help="Haar-random input states per point")

    parser = argparse.ArgumentParser(
        prog="pqsteleport",
        description="Qubit teleportation through a monitored cavity with retrodicted Bell outcomes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    sub.add_parser("run", parents=[common], help="single ensemble, or the sweep set in the config")
    for name, axis in (("sweep-eta", "eta"), ("sweep-time", "time")):
        p = sub.add_parser(name, parents=[common], help=f"fidelity against {axis}")
        p.add_argument(
            "--grid",
            type=_grid,
            help=f"comma list, 'a, b, ..., z' allowed (default {','.join(map(str, DEFAULT_GRIDS[axis]))})",
        )
    sub.add_parser("gate-calc", parents=[common], help="transmon phase-gate calibration")
    p = sub.add_parser("dump-trajectory", parents=[common], help="write one record and its retrodiction")
    p.add_argument("--state-index", type=int, default=0)
    p.add_argument("--trajectory-index", type=int, default=0)
    p.add_argument(
        "--replay",
        type=Path,
        metavar="RECORD_CSV",
        help="recompute the decisions from a saved record instead of simulating",
    )
    return parser


def _resolve(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    proto = cfg.protocol
    if args.seed is not None:
        proto = proto.with_(seed=args.seed)
    if args.n_states is not None:
        proto = proto.with_(n_states=args.n_states)
    changes = {"protocol": proto}
    for name in ("out", "workers", "debug_records"):
        value = getattr(args, name)
        if value is not None:
            changes[name] = value
    return replace(cfg, **changes)


def _write_records(results, out: Path, tag: str) -> None:
    rec_dir = out / "records"
    rec_dir.mkdir(parents=True, exist_ok=True)
    for r in results:
        r.record.to_csv(rec_dir / f"record_{tag}_{r.state_index}_{r.trajectory_index}.csv")


def run_experiment(cfg: ExperimentConfig, axis: str, grid: Sequence[float]) -> ResultTable:
    """Simulate every grid point and write ``results.csv`` plus a figure into ``cfg.out``."""
    from .plotting import plot_fidelity

    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in grid:
        proto = cfg.protocol.with_(**{_AXIS_FIELD[axis]: float(value)})
        results = simulate_ensemble(proto, cfg.workers, keep_records=cfg.debug_records)
        if cfg.debug_records:
            _write_records(results, cfg.out, f"{axis}{float(value)!r}")
        for strategy in STRATEGIES:
            rows.append(ResultRow.from_estimate(axis, value, strategy, summarize(results, strategy)))
    table = ResultTable(tuple(rows))
    table.to_csv(cfg.out / "results.csv")
    plot_fidelity(table, cfg.out / f"fidelity_vs_{axis}.png")
    return table


def format_gate_report(rep: dict) -> str:
    def f(key):
        return f"2pi x {to_mhz(rep[key]):.4f} MHz"

    omega, sq, quoted = rep["qubit_frequency"], rep["sqrt_8EJEC"], rep["quoted_qubit_frequency"]
    lines = [
        f"qubit frequency sqrt(8 EJ EC) - EC : {f('qubit_frequency')}",
        f"  without the -EC term             : {f('sqrt_8EJEC')}",
        f"  reference value                  : {f('quoted_qubit_frequency')}",
        f"anharmonicity                      : {f('anharmonicity')}",
        f"dispersive shift at plateau        : {f('chi_plateau')}",
        f"dispersive shift when parked       : {f('chi_parked')}",
        f"cavity linewidth kappa             : {f('kappa')}",
        f"parked EJ / EJ(0)                  : {rep['E_J_parked_over_E_J0']:.4f}",
        f"parked frequency drop              : {f('parked_frequency_drop')}",
        f"flux-pulse depth                   : {f('pulse_depth')}",
        f"gate plateau length t_pi           : {rep['t_pi'] * 1e9:.3f} ns",
        f"accumulated phase at t_pi          : {rep['phase_at_t_pi'] / math.pi:.6f} pi",
        f"pi/(2|chi|), pi/|chi|              : {rep['t_ref_half'] * 1e9:.3f} ns, {rep['t_ref_full'] * 1e9:.3f} ns",
    ]
    if abs(omega - quoted) > abs(sq - quoted):
        lines.append(
            f"note: the reference qubit frequency matches sqrt(8 EJ EC) ({to_mhz(sq):.1f} MHz) "
            f"better than sqrt(8 EJ EC) - EC ({to_mhz(omega):.1f} MHz)"
        )
    drop, depth = rep["parked_frequency_drop"], rep["pulse_depth"]
    if abs(drop - depth) > 0.05 * depth:
        lines.append(
            f"note: the flux-pulse depth ({to_mhz(depth):.0f} MHz) differs from the frequency drop "
            f"implied by the parking flux ({to_mhz(drop):.0f} MHz); the gate uses the pulse depth"
        )
    if abs(rep["chi_parked"]) >= rep["kappa"]:
        lines.append("warning: parked dispersive shift is not below kappa")
    return "\n".join(lines)


def _dump_trajectory(cfg: ExperimentConfig, args) -> int:
    proto = cfg.protocol
    if args.replay is not None:
        record = HomodyneRecord.from_csv(args.replay)
        d = decide(record, proto)
        print(f"direct: {d['direct'].label}  pqs: {d['pqs'].label}  fallback: {d['fallback']}")
        saved = args.replay.with_name(args.replay.name.replace("record_", "retrodiction_", 1))
        if d["retrodiction"] is not None:
            print("p(0+,0-,1+,1-) = " + ", ".join(f"{p:.6g}" for p in d["retrodiction"].probabilities))
        if saved.is_file() and saved != args.replay:
            (_, stored), = read_retrodictions(saved)
            same = d["retrodiction"] is not None and stored.probabilities == d["retrodiction"].probabilities
            print(f"matches {saved.name}: {same}")
            return 0 if same else 1
        return 0

    tag = f"{proto.seed}_{args.state_index}_{args.trajectory_index}"
    psi = haar_random_qubit(state_rng(proto.seed, args.state_index))
    res = run_trajectory(proto, psi, trajectory_rng(proto.seed, args.state_index, args.trajectory_index))
    cfg.out.mkdir(parents=True, exist_ok=True)
    rec_path = res.record.to_csv(cfg.out / f"record_{tag}.csv")
    print(f"wrote {rec_path} and {rec_path.with_suffix('.meta')}")
    if res.retrodiction is not None:
        retro_path = write_retrodictions(cfg.out / f"retrodiction_{tag}.csv", [(tag, res.retrodiction)])
        print(f"wrote {retro_path}")
        print("p(0+,0-,1+,1-) = " + ", ".join(f"{p:.6g}" for p in res.retrodiction.probabilities))
    print(
        f"S_beta={res.s_beta:+d} S_A={res.s_a:+d}  direct: {res.outcome_direct.label} "
        f"(F={res.fidelity_direct:.6f})  pqs: {res.outcome_pqs.label} (F={res.fidelity_pqs:.6f})"
    )
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        if args.command == "gate-calc":
            print(format_gate_report(calibration_report()))
            return 0
        if args.command == "dump-trajectory":
            return _dump_trajectory(cfg, args)
        if args.command == "run":
            if cfg.sweep == "none":
                axis, grid = "eta", (cfg.protocol.eta,)
            else:
                axis, grid = cfg.sweep, cfg.grid
        else:
            axis = "eta" if args.command == "sweep-eta" else "time"
            grid = args.grid or (cfg.grid if cfg.sweep == axis else DEFAULT_GRIDS[axis])
        table = run_experiment(cfg, axis, grid)
    except (ConfigError, ValueError, ArithmeticError, OSError) as exc:
        print(f"pqsteleport: error: {exc}", file=sys.stderr)
        return 1
    print(table.format())
    print(f"wrote {cfg.out / 'results.csv'} and {cfg.out / f'fidelity_vs_{axis}.png'}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
