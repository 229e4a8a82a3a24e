import subprocess
import sys

import pytest

from pqsteleport.cli import build_parser, main
from pqsteleport.results import ResultTable

FAST = "total_time = 1.0\nn_states = 2\n"


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(FAST)
    return path


def test_missing_subcommand_prints_usage():
    proc = subprocess.run([sys.executable, "-m", "pqsteleport.cli"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "usage:" in proc.stderr


def test_seed_must_be_u64():
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["run", "--seed", "-1"])
    with pytest.raises(SystemExit):
        parser.parse_args(["run", "--seed", str(2**64)])
    assert parser.parse_args(["run", "--seed", str(2**64 - 1)]).seed == 2**64 - 1


def test_gate_calc_report(capsys):
    assert main(["gate-calc"]) == 0
    out = capsys.readouterr().out
    assert "dispersive shift at plateau        : 2pi x -2.0967 MHz" in out
    assert "109.982 ns" in out and "119.233 ns, 238.467 ns" in out
    assert out.count("note:") == 2


def test_invalid_config_exits_with_message(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("eta = 1.5\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert f"{bad}:1:" in capsys.readouterr().err


def test_sweep_writes_results_and_figure(tmp_path, fast_config, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep-eta", "--config", str(fast_config), "--grid", "0.5, 1.0", "--out", str(out), "--seed", "3"])
    assert code == 0
    table = ResultTable.from_csv(out / "results.csv")
    assert [(r.axis, r.axis_value, r.strategy) for r in table] == [
        ("eta", 0.5, "direct"),
        ("eta", 0.5, "pqs"),
        ("eta", 1.0, "direct"),
        ("eta", 1.0, "pqs"),
    ]
    assert all(r.n == 2 for r in table)
    assert (out / "fidelity_vs_eta.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert "wrote" in capsys.readouterr().out


def test_results_identical_across_runs_and_workers(tmp_path, fast_config):
    outs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / name
        assert main(["run", "--config", str(fast_config), "--out", str(out), "--workers", workers, "--seed", "9"]) == 0
        outs.append((out / "results.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_debug_records_written(tmp_path, fast_config):
    out = tmp_path / "dbg"
    assert main(["run", "--config", str(fast_config), "--out", str(out), "--debug-records"]) == 0
    records = sorted(p.name for p in (out / "records").glob("*.csv"))
    assert records == ["record_eta1.0_0_0.csv", "record_eta1.0_1_0.csv"]


def test_dump_trajectory_and_replay(tmp_path, fast_config, capsys):
    out = tmp_path / "dump"
    assert main(["dump-trajectory", "--config", str(fast_config), "--seed", "7", "--out", str(out)]) == 0
    record = out / "record_7_0_0.csv"
    meta = record.with_suffix(".meta").read_text().splitlines()
    assert {line.split("=")[0] for line in meta} >= {"dt", "eta", "kappa", "t_beta", "t_m"}
    assert record.read_text().splitlines()[0] == "t,J"
    assert (out / "retrodiction_7_0_0.csv").is_file()
    first = capsys.readouterr().out
    assert main(["dump-trajectory", "--config", str(fast_config), "--replay", str(record)]) == 0
    replay = capsys.readouterr().out
    assert "matches retrodiction_7_0_0.csv: True" in replay
    # the replayed decisions are the in-run decisions
    in_run = first.strip().splitlines()[-1]
    direct, pqs = in_run.split("direct: ")[1].split()[0], in_run.split("pqs: ")[1].split()[0]
    assert f"direct: {direct}  pqs: {pqs}" in replay


def test_replay_detects_tampered_retrodiction(tmp_path, fast_config):
    out = tmp_path / "dump"
    main(["dump-trajectory", "--config", str(fast_config), "--seed", "7", "--out", str(out)])
    retro = out / "retrodiction_7_0_0.csv"
    lines = retro.read_text().splitlines()
    cells = lines[1].split(",")
    cells[1] = "0.123"
    retro.write_text(lines[0] + "\n" + ",".join(cells) + "\n")
    assert main(["dump-trajectory", "--config", str(fast_config), "--replay", str(out / "record_7_0_0.csv")]) == 1
