"""GOSPA metric, RMS aggregation over Monte Carlo runs, and CSV emission."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class GospaResult:
    """GOSPA value and its decomposition.

    Components are stored as p-th roots so that
    ``total**p == localisation**p + missed_cost**p + false_cost**p``.
    """

    total: float
    localisation: float
    missed_cost: float
    false_cost: float
    n_missed: int = 0
    n_false: int = 0


def _as_points(x, position_indices) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        dim = len(position_indices) if position_indices is not None else (x.shape[1] if x.ndim == 2 else 0)
        return np.zeros((0, dim))
    x = np.atleast_2d(x)
    if position_indices is not None:
        x = x[:, list(position_indices)]
    return x


def gospa(
    truth,
    estimate,
    p: float = 2.0,
    c: float = 10.0,
    alpha: float = 2.0,
    position_indices: Sequence[int] | None = None,
) -> GospaResult:
    """GOSPA distance between two finite sets of vectors (rows).

    ``position_indices`` restricts the base distance to those state entries.
    Only ``alpha = 2`` has a localisation/missed/false decomposition and is the
    only value accepted.
    """
    if p < 1 or c <= 0:
        raise ConfigurationError("GOSPA needs p >= 1 and c > 0")
    if alpha != 2:
        raise ConfigurationError("the GOSPA decomposition is only defined for alpha = 2")
    X = _as_points(truth, position_indices)
    Y = _as_points(estimate, position_indices)
    n, m = len(X), len(Y)
    card = c**p / alpha
    loc = 0.0
    matched = 0
    if n and m:
        D = cdist(X, Y) ** p
        rows, cols = linear_sum_assignment(np.minimum(D, c**p))
        keep = D[rows, cols] < c**p
        loc = float(D[rows, cols][keep].sum())
        matched = int(keep.sum())
    n_missed, n_false = n - matched, m - matched
    missed, false = card * n_missed, card * n_false
    total = loc + missed + false
    root = lambda v: float(v ** (1.0 / p))
    return GospaResult(root(total), root(loc), root(missed), root(false), n_missed, n_false)


@dataclass(frozen=True)
class RmsCurves:
    total: np.ndarray
    localisation: np.ndarray
    missed: np.ndarray
    false: np.ndarray

    def across_time(self) -> float:
        """RMS of the per-step RMS values, i.e. RMS over runs and steps."""
        return float(np.sqrt(np.mean(self.total**2)))

    def components_across_time(self) -> dict[str, float]:
        return {
            "total": self.across_time(),
            "localisation": float(np.sqrt(np.mean(self.localisation**2))),
            "missed": float(np.sqrt(np.mean(self.missed**2))),
            "false": float(np.sqrt(np.mean(self.false**2))),
        }


def rms_over_runs(results: Sequence[Sequence[GospaResult]], p: float = 2.0) -> RmsCurves:
    """Per-step RMS (p = 2) over runs, components aggregated in the same power domain."""
    def curve(attr):
        vals = np.array([[getattr(g, attr) for g in run] for run in results], dtype=float)
        return np.mean(vals**p, axis=0) ** (1.0 / p)

    return RmsCurves(curve("total"), curve("localisation"), curve("missed_cost"), curve("false_cost"))


CSV_COLUMNS = ("step", "total", "loc", "missed", "false")


def curves_to_csv(curves: RmsCurves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for k in range(curves.total.size):
        w.writerow([k + 1] + [repr(float(a[k])) for a in (curves.total, curves.localisation, curves.missed, curves.false)])
    return buf.getvalue()


def curves_from_csv(text: str) -> RmsCurves:
    rows = list(csv.reader(io.StringIO(text)))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"unexpected header {rows[0]}")
    data = np.array([[float(v) for v in r[1:]] for r in rows[1:]]).reshape(-1, 4)
    return RmsCurves(data[:, 0], data[:, 1], data[:, 2], data[:, 3])
