"""Trace autocorrelations, replication summaries and mixing comparisons."""

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import CompletionError, DimensionError

DEFAULT_MAX_LAG = 50


class ZeroVarianceError(CompletionError):
    """The autocorrelation of a constant series is undefined."""


@dataclass(frozen=True)
class TraceSeries:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 2:
            raise ValueError("a trace needs at least two values")
        object.__setattr__(self, "values", v)


def acf(series, max_lag=DEFAULT_MAX_LAG):
    """Sample autocorrelations ``r_0..r_max_lag`` with the biased (1/N) estimator."""
    x = series.values if isinstance(series, TraceSeries) else np.asarray(series, dtype=float).ravel()
    n = x.size
    if max_lag < 1 or n <= max_lag:
        raise ValueError(f"need 1 <= max_lag < len(series), got max_lag={max_lag}, len={n}")
    d = x - x.mean()
    denom = float(d @ d)
    if not denom > 0:
        raise ZeroVarianceError("series has zero sample variance")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for h in range(1, max_lag + 1):
        out[h] = float(d[:-h] @ d[h:]) / denom
    return out


@dataclass(frozen=True)
class SummaryCell:
    series: int
    m: int
    estimator: str
    mean: float
    se: float
    count: int

    def formatted(self, digits=3):
        """``value (±se)``, or the bare value when fewer than two replications exist."""
        if math.isnan(self.se):
            return f"{self.mean:.{digits}f}"
        return f"{self.mean:.{digits}f} (±{self.se:.{digits}f})"


def _record(r):
    if isinstance(r, dict):
        return r
    return {"series": r.series, "m": r.m, "estimator": r.estimator, "rmse": r.rmse}


def summarize_replications(results):
    """Mean RMSE and its standard error per ``(series, m, estimator)`` cell.

    ``results`` holds mappings with keys ``series, m, estimator, rmse``.  A
    cell with a single replication gets ``se = nan``.
    """
    cells = OrderedDict()
    for r in results:
        r = _record(r)
        key = (int(r["series"]), int(r["m"]), str(r["estimator"]))
        cells.setdefault(key, []).append(float(r["rmse"]))
    out = []
    for (series, m, est), vals in cells.items():
        v = np.asarray(vals)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size >= 2 else math.nan
        out.append(SummaryCell(series, m, est, float(math.fsum(vals) / v.size), se, v.size))
    return out


def format_table(cells, digits=3):
    """Plain-text table, one line per estimator and series, columns by ``m``."""
    ms = sorted({c.m for c in cells})
    lines = ["series  estimator   " + "  ".join(f"m = {m:<14d}" for m in ms)]
    keys = OrderedDict()
    for c in cells:
        keys.setdefault((c.series, c.estimator), {})[c.m] = c
    for (series, est), row in keys.items():
        vals = [row[m].formatted(digits) if m in row else "-" for m in ms]
        lines.append(f"{series:<7d} {est:<11s} " + "  ".join(f"{v:<18s}" for v in vals))
    return "\n".join(lines)


@dataclass(frozen=True)
class AcfComparison:
    """Which of two ACFs decays faster, lag by lag and in total.

    ``per_lag[h-1]`` is ``"a"``, ``"b"`` or ``"tie"`` for the smaller
    ``|ACF|`` at lag ``h``; ``faster`` compares the summed ``|ACF|`` over
    lags ``1..max_lag``.
    """

    per_lag: tuple
    sum_abs_a: float
    sum_abs_b: float
    faster: str


def compare_acf_decay(a, b, rtol=1e-12):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"ACF vectors differ in length: {a.shape} vs {b.shape}")
    aa, bb = np.abs(a[1:]), np.abs(b[1:])
    per_lag = tuple("tie" if x == y else ("a" if x < y else "b") for x, y in zip(aa, bb))
    sa, sb = float(aa.sum()), float(bb.sum())
    if abs(sa - sb) <= rtol * max(sa, sb, 1e-300):
        faster = "tie"
    else:
        faster = "a" if sa < sb else "b"
    return AcfComparison(per_lag, sa, sb, faster)


def acf_majority(uniform_traces, conjugate_traces, max_lag=DEFAULT_MAX_LAG):
    """Count monitored entries where the conjugate sampler's summed |ACF| is no larger.

    Returns ``(wins, total, comparisons)``; this is a proxy for "mixes faster",
    not a formal test.
    """
    U = np.asarray(uniform_traces, dtype=float)
    C = np.asarray(conjugate_traces, dtype=float)
    if U.shape[1] != C.shape[1]:
        raise DimensionError("both samplers must monitor the same entries")
    comps = []
    for e in range(U.shape[1]):
        comps.append(compare_acf_decay(acf(C[:, e], max_lag), acf(U[:, e], max_lag)))
    wins = sum(c.sum_abs_a <= c.sum_abs_b for c in comps)
    return wins, len(comps), comps


def bound_coverage(observed, bounds):
    """Number of replications whose observed error does not exceed its bound."""
    observed = np.asarray(observed, dtype=float)
    bounds = np.broadcast_to(np.asarray(bounds, dtype=float), observed.shape)
    return int(np.sum(observed <= bounds))
