"""Observations, sampling distributions and the risk functionals.

Indices are 0-based in memory and 1-based in every file format; the
conversion happens only in the readers and writers of this module.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EmptyObservationsError, ParseError

# Sums longer than this use compensated (exactly rounded) accumulation.
COMPENSATED_THRESHOLD = 10_000


@dataclass(frozen=True)
class ObservationSet:
    """``n`` noisy entries ``(i, j, y)`` of an ``m x p`` matrix.

    Duplicate ``(i, j)`` pairs are distinct samples and are never merged.
    """

    m: int
    p: int
    rows: np.ndarray
    cols: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.intp)
        cols = np.ascontiguousarray(self.cols, dtype=np.intp)
        y = np.ascontiguousarray(self.y, dtype=float)
        if int(self.m) < 1 or int(self.p) < 1:
            raise DimensionError(f"matrix dimensions must be positive, got {self.m}x{self.p}")
        if not (rows.ndim == cols.ndim == y.ndim == 1) or not (len(rows) == len(cols) == len(y)):
            raise DimensionError("rows, cols and y must be 1-d arrays of equal length")
        if len(rows) and (rows.min() < 0 or rows.max() >= self.m or cols.min() < 0 or cols.max() >= self.p):
            raise DimensionError(f"observed index outside the {self.m}x{self.p} grid")
        for arr in (rows, cols, y):
            arr.setflags(write=False)
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_triples(cls, m, p, triples):
        """Build from 1-based ``(i, j, y)`` triples."""
        triples = list(triples)
        if not triples:
            return cls(m, p, np.empty(0, np.intp), np.empty(0, np.intp), np.empty(0))
        arr = np.asarray(triples, dtype=float)
        i = arr[:, 0].astype(np.intp) - 1
        j = arr[:, 1].astype(np.intp) - 1
        return cls(m, p, i, j, arr[:, 2])

    @property
    def n(self):
        return len(self.y)

    @property
    def shape(self):
        return (self.m, self.p)

    def transpose(self):
        """The same data seen as observations of ``M.T``."""
        return ObservationSet(self.p, self.m, self.cols, self.rows, self.y)

    def triples(self):
        """1-based ``(i, j, y)`` tuples."""
        return [(int(i) + 1, int(j) + 1, float(v)) for i, j, v in zip(self.rows, self.cols, self.y)]

    def counts(self):
        """``m x p`` array of how many times each entry was observed."""
        out = np.zeros((self.m, self.p))
        np.add.at(out, (self.rows, self.cols), 1.0)
        return out


@dataclass(frozen=True)
class SamplingDistribution:
    """Entrywise sampling probabilities over the ``m x p`` grid."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2:
            raise DimensionError("sampling weights must be a 2-d array")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("sampling weights must be finite and nonnegative")
        total = math.fsum(w.ravel())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"sampling weights must sum to 1, got {total!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def shape(self):
        return self.weights.shape

    @classmethod
    def uniform(cls, m, p):
        return cls(np.full((m, p), 1.0 / (m * p)))

    @classmethod
    def point_mass(cls, m, p, i, j):
        """All mass on the 0-based entry ``(i, j)``."""
        w = np.zeros((m, p))
        w[i, j] = 1.0
        return cls(w)

    @classmethod
    def from_row_col_weights(cls, row_weights, col_weights):
        """Product distribution ``Pi_ij ∝ a_i b_j``."""
        a = np.asarray(row_weights, dtype=float)
        b = np.asarray(col_weights, dtype=float)
        return cls.from_unnormalized(np.outer(a, b))

    @classmethod
    def from_unnormalized(cls, w):
        w = np.asarray(w, dtype=float)
        w = w / math.fsum(w.ravel())
        # one renormalisation pass removes residual rounding in the total
        return cls(w / math.fsum(w.ravel()))

    def is_uniform(self):
        return bool(np.all(self.weights == self.weights.flat[0]))


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def _as_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {M.shape}")
    return M


def _sum(values):
    if len(values) > COMPENSATED_THRESHOLD:
        return math.fsum(values)
    # fixed left-to-right accumulation order
    total = 0.0
    for v in values.tolist():
        total += v
    return total


def empirical_risk(obs, M):
    """Mean squared residual ``(1/n) sum (y_t - M[i_t, j_t])**2``."""
    M = _as_matrix(M)
    if M.shape != obs.shape:
        raise DimensionError(f"matrix shape {M.shape} does not match observations {obs.shape}")
    if obs.n == 0:
        raise EmptyObservationsError("empirical risk needs at least one observation")
    resid = obs.y - M[obs.rows, obs.cols]
    return _sum(resid * resid) / obs.n


def weighted_frobenius_sq(A, Pi):
    """``sum_ij A_ij**2 Pi_ij``; equals ``||A||_F**2 / (m p)`` for uniform ``Pi``."""
    A = _as_matrix(A)
    W = Pi.weights if isinstance(Pi, SamplingDistribution) else np.asarray(Pi, dtype=float)
    _check_same_shape(A, W, "weighted_frobenius_sq")
    return math.fsum((A * A * W).ravel())


def rmse_per_entry(Mhat, M0):
    """Root mean squared error per entry, ``sqrt(||Mhat - M0||_F**2 / (m p))``."""
    Mhat = _as_matrix(Mhat)
    M0 = _as_matrix(M0)
    _check_same_shape(Mhat, M0, "rmse_per_entry")
    d = (Mhat - M0).ravel()
    return math.sqrt(math.fsum(d * d) / d.size)


def prediction_risk(M, M0, Pi, noise_var):
    """Exact prediction risk ``E (Y - M_X)**2`` for centred noise of variance ``noise_var``."""
    return weighted_frobenius_sq(_as_matrix(M) - _as_matrix(M0), Pi) + noise_var


# ---------------------------------------------------------------- file formats

def _data_lines(fh):
    """Yield ``(line_number, text)`` skipping blank and ``#`` comment lines."""
    for lineno, line in enumerate(fh, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        yield lineno, s


def write_observations(path, obs, header_comments=()):
    with open(path, "w", newline="") as fh:
        for c in header_comments:
            fh.write(f"# {c}\n")
        fh.write(f"# m={obs.m} p={obs.p}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "y"])
        for i, j, v in zip(obs.rows.tolist(), obs.cols.tolist(), obs.y.tolist()):
            w.writerow([i + 1, j + 1, repr(v)])


def read_observations(path, m=None, p=None):
    """Read an ``i,j,y`` CSV (1-based).

    Dimensions come from the ``# m=.. p=..`` comment written by
    :func:`write_observations`, from the arguments, or else from the largest
    indices present.
    """
    rows, cols, ys = [], [], []
    dims = {}
    with open(path, newline="") as fh:
        header_seen = False
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                for tok in s[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        if k in ("m", "p"):
                            try:
                                dims[k] = int(v)
                            except ValueError:
                                raise ParseError(f"bad dimension {tok!r}", lineno, path) from None
                continue
            fields = [f.strip() for f in s.split(",")]
            if not header_seen:
                header_seen = True
                if fields == ["i", "j", "y"]:
                    continue
                raise ParseError(f"expected header 'i,j,y', got {s!r}", lineno, path)
            if len(fields) != 3:
                raise ParseError(f"expected 3 fields, got {len(fields)}", lineno, path)
            try:
                i, j, v = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError:
                raise ParseError(f"cannot parse record {s!r}", lineno, path) from None
            if i < 1 or j < 1:
                raise ParseError("indices are 1-based and must be >= 1", lineno, path)
            if not math.isfinite(v):
                raise ParseError("observed value must be finite", lineno, path)
            rows.append(i - 1)
            cols.append(j - 1)
            ys.append(v)
    if not header_seen:
        raise ParseError("no header line 'i,j,y' found", None, path)
    m = m if m is not None else dims.get("m", (max(rows) + 1) if rows else 1)
    p = p if p is not None else dims.get("p", (max(cols) + 1) if cols else 1)
    if rows and (max(rows) >= m or max(cols) >= p):
        raise ParseError(f"observed index outside the declared {m}x{p} grid", None, path)
    return ObservationSet(m, p, np.array(rows, np.intp), np.array(cols, np.intp), np.array(ys))


def write_matrix(path, M, header_comments=()):
    M = _as_matrix(M)
    with open(path, "w", newline="") as fh:
        for c in header_comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in M.tolist():
            w.writerow([repr(v) for v in row])


def read_matrix(path):
    """Read a headerless CSV of ``m`` rows by ``p`` columns."""
    values = []
    with open(path, newline="") as fh:
        for lineno, s in _data_lines(fh):
            try:
                row = [float(f) for f in s.split(",")]
            except ValueError:
                raise ParseError(f"non-numeric matrix entry in {s!r}", lineno, path) from None
            if values and len(row) != len(values[0]):
                raise ParseError(f"expected {len(values[0])} columns, got {len(row)}", lineno, path)
            values.append(row)
    if not values:
        raise ParseError("empty matrix file", None, path)
    return np.array(values)
