import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pqsteleport.results import RESULTS_HEADER, ResultRow, ResultTable
from pqsteleport.teleport import FidelityEstimate

finite = st.floats(allow_nan=False, allow_infinity=False)
rows = st.builds(
    ResultRow,
    axis=st.sampled_from(["eta", "time"]),
    axis_value=finite,
    strategy=st.sampled_from(["direct", "pqs"]),
    mean_fidelity=finite,
    stderr=st.floats(0, 1e300),
    n=st.integers(1, 10**9),
    fallbacks=st.integers(0, 10**6),
)


@given(st.lists(rows, min_size=1, max_size=12))
def test_csv_round_trip_is_exact(tmp_path_factory, table_rows):
    table = ResultTable(tuple(table_rows))
    path = table.to_csv(tmp_path_factory.mktemp("csv") / "results.csv")
    assert ResultTable.from_csv(path) == table


def test_csv_format(tmp_path):
    table = ResultTable.from_sweep(
        "eta",
        [(0.2, "direct", FidelityEstimate(0.61, 0.01, 500, 0)), (0.2, "pqs", FidelityEstimate(0.65, 0.011, 500, 2))],
    )
    data = table.to_csv(tmp_path / "r.csv").read_bytes()
    assert b"\r" not in data
    lines = data.decode("utf-8").splitlines()
    assert lines[0] == ",".join(RESULTS_HEADER)
    assert lines[2] == "eta,0.2,pqs,0.65,0.011,500,2"


def test_row_invariants():
    with pytest.raises(ValueError, match="stderr"):
        ResultRow("eta", 1.0, "pqs", 0.9, -1e-3, 10)
    with pytest.raises(ValueError, match="stderr"):
        ResultRow("eta", 1.0, "pqs", 0.9, math.nan, 10)
    with pytest.raises(ValueError, match="n must"):
        ResultRow("eta", 1.0, "pqs", 0.9, 0.0, 0)


def test_bad_header_rejected(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("eta,T,strategy,mean_fidelity,stderr,n\n")
    with pytest.raises(ValueError, match="header"):
        ResultTable.from_csv(path)


def test_series_sorted_by_axis():
    table = ResultTable(
        (
            ResultRow("time", 3.0, "pqs", 0.9, 0.01, 5),
            ResultRow("time", 1.0, "pqs", 0.7, 0.02, 5),
            ResultRow("time", 1.0, "direct", 0.6, 0.02, 5),
        )
    )
    assert table.strategies() == ["pqs", "direct"]
    assert table.series("pqs") == ([1.0, 3.0], [0.7, 0.9], [0.02, 0.01])
    text = table.format()
    assert len(text.splitlines()) == 4 and "pqs" in text
