"""Fidelity tables and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .teleport import FidelityEstimate

__all__ = ["RESULTS_HEADER", "ResultRow", "ResultTable"]

RESULTS_HEADER = ["axis", "axis_value", "strategy", "mean_fidelity", "stderr", "n", "fallbacks"]


@dataclass(frozen=True)
class ResultRow:
    axis: str
    axis_value: float
    strategy: str
    mean_fidelity: float
    stderr: float
    n: int
    fallbacks: int = 0

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")
        if self.n <= 0:
            raise ValueError(f"n must be positive, got {self.n}")

    @classmethod
    def from_estimate(cls, axis: str, value: float, strategy: str, est: FidelityEstimate) -> "ResultRow":
        return cls(axis, float(value), strategy, est.mean, est.stderr, est.n, est.fallbacks)

    def cells(self) -> list[str]:
        # repr gives the shortest string that parses back to the same float
        return [
            self.axis,
            repr(self.axis_value),
            self.strategy,
            repr(self.mean_fidelity),
            repr(self.stderr),
            str(self.n),
            str(self.fallbacks),
        ]


@dataclass(frozen=True)
class ResultTable:
    rows: tuple[ResultRow, ...]

    def __iter__(self) -> Iterator[ResultRow]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_sweep(cls, axis: str, sweep_rows: Iterable[tuple[float, str, FidelityEstimate]]) -> "ResultTable":
        return cls(tuple(ResultRow.from_estimate(axis, v, s, e) for v, s, e in sweep_rows))

    def strategies(self) -> list[str]:
        return list(dict.fromkeys(r.strategy for r in self.rows))

    def series(self, strategy: str) -> tuple[list[float], list[float], list[float]]:
        """``(axis values, means, stderrs)`` of one strategy, sorted by axis value."""
        rows = sorted((r for r in self.rows if r.strategy == strategy), key=lambda r: r.axis_value)
        return [r.axis_value for r in rows], [r.mean_fidelity for r in rows], [r.stderr for r in rows]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in self.rows:
            w.writerow(r.cells())
        return buf.getvalue()

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_csv_text().encode("utf-8"))
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "ResultTable":
        text = Path(path).read_bytes().decode("utf-8")
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != RESULTS_HEADER:
            raise ValueError(f"{path}: header must be {','.join(RESULTS_HEADER)}")
        out = []
        for r in rows[1:]:
            out.append(
                ResultRow(r[0], float(r[1]), r[2], float(r[3]), float(r[4]), int(r[5]), int(r[6]))
            )
        return cls(tuple(out))

    def format(self) -> str:
        """Fixed-width summary for terminals."""
        lines = [f"{'axis':<6}{'value':>10}  {'strategy':<8}{'fidelity':>12}{'stderr':>11}{'n':>7}{'fallbk':>8}"]
        for r in self.rows:
            v = "-" if math.isnan(r.axis_value) else f"{r.axis_value:g}"
            lines.append(
                f"{r.axis:<6}{v:>10}  {r.strategy:<8}{r.mean_fidelity:>12.6f}{r.stderr:>11.2e}{r.n:>7d}{r.fallbacks:>8d}"
            )
        return "\n".join(lines)
