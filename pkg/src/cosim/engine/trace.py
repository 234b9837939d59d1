"""Traces, simulation settings and trace comparison."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class SimConfig:
    dt: float
    t_end: float
    recorded: Sequence[int] | None = None  # indices into model.outputs; None = all

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be a positive finite number, got {self.dt}")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be a non-negative finite number, got {self.t_end}")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class Trace:
    dt: float
    columns: list[str]
    rows: list[tuple[float, list[float]]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.rows], dtype=float)

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.rows], dtype=float).reshape(len(self.rows), len(self.columns))

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([v[j] for _, v in self.rows], dtype=float)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *self.columns])
            for t, vals in self.rows:
                w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in vals)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0] != "t":
                raise ShapeMismatch(f"{path}: first column must be 't'")
            rows = [(float(r[0]), [float(x) for x in r[1:]]) for r in reader if r]
        for k, (_, vals) in enumerate(rows):
            if len(vals) != len(header) - 1:
                raise ShapeMismatch(f"{path}: row {k} has {len(vals)} values, header has {len(header) - 1}")
        dt = rows[1][0] - rows[0][0] if len(rows) > 1 else 0.0
        return cls(dt, header[1:], rows)


@dataclass
class ComparisonReport:
    columns: list[str]
    max_abs_diff: list[float]
    tol: float
    first_divergence: tuple[int, int] | None  # (row, column)

    @property
    def passed(self) -> bool:
        return self.first_divergence is None

    @property
    def max_diff(self) -> float:
        return max(self.max_abs_diff, default=0.0)

    def summary(self) -> str:
        lines = [f"{'column':<20} {'max |diff|':>12}"]
        for c, d in zip(self.columns, self.max_abs_diff):
            lines.append(f"{c:<20} {d:>12.3e}")
        if self.passed:
            lines.append(f"PASS (tol={self.tol:g})")
        else:
            r, c = self.first_divergence
            lines.append(f"FAIL (tol={self.tol:g}): first divergence at row {r}, column {self.columns[c]!r}")
        return "\n".join(lines)


def compare_traces(a: Trace, b: Trace, tol: float) -> ComparisonReport:
    if len(a.rows) != len(b.rows):
        raise ShapeMismatch(f"row counts differ: {len(a.rows)} vs {len(b.rows)}")
    if len(a.columns) != len(b.columns):
        raise ShapeMismatch(f"column counts differ: {len(a.columns)} vs {len(b.columns)}")
    if len(a.rows) > 1 and not math.isclose(a.dt, b.dt, rel_tol=1e-12, abs_tol=0.0):
        raise ShapeMismatch(f"time steps differ: {a.dt!r} vs {b.dt!r}")

    va, vb = a.values(), b.values()
    diff = np.abs(va - vb)
    # NaN on either side is never within tolerance
    diff[np.isnan(diff)] = np.inf
    maxes = diff.max(axis=0).tolist() if diff.size else [0.0] * len(a.columns)
    bad = np.argwhere(diff > tol)
    first = (int(bad[0][0]), int(bad[0][1])) if len(bad) else None
    return ComparisonReport(list(a.columns), maxes, tol, first)
