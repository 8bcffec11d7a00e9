"""Survival records, covariate paths, dataset container, and CSV ingestion.

Covariates may depend on time only through deterministic basis expansions of a
static feature vector. Every supported basis function is a polynomial in t of
degree at most two, so a path compiles to coefficient matrices (P0, P1, P2)
with X(t) = P0 + t*P1 + t^2*P2 evaluated by Horner's rule. Fit engines consume
these matrices directly; "constant" is simply the case P1 = P2 = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import (
    DataError,
    EmptyDataset,
    InvalidStatus,
    MissingColumn,
    NegativeTime,
    NonFiniteValue,
)

# Each basis function as (c0, c1, c2) in c0 + c1*t + c2*t^2.
_BASIS_COEFFS = {
    "1": (1.0, 0.0, 0.0),
    "t": (0.0, 1.0, 0.0),
    "2t": (0.0, 2.0, 0.0),
    "4t2-2": (-2.0, 0.0, 4.0),
}


@dataclass(frozen=True)
class CovariatePathSpec:
    """How static features map to the covariate vector X(t).

    kind "constant" ignores time. kind "poly" applies the listed basis
    functions (drawn from 1, t, 2t, 4t2-2) in one of two modes:

    - "combine": the feature vector is split into len(basis) equal blocks and
      X(t) = sum_k basis_k(t) * block_k. Output dimension d / B. This is the
      natural encoding of X(t) = A + t*B with features = (A, B).
    - "expand": X(t) stacks basis_k(t) * features for each k. Output dimension
      d * B. This encodes time-varying coefficient models, where a quadratic
      coefficient path on X becomes a static coefficient on the expanded
      covariates (X, 2tX, (4t^2-2)X).

    With basis ("1",) both modes coincide with the constant path.
    """

    kind: str = "constant"
    basis: tuple[str, ...] = ("1",)
    mode: str = "combine"

    def __post_init__(self):
        if self.kind not in ("constant", "poly"):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if self.mode not in ("combine", "expand"):
            raise ValueError(f"unknown path mode {self.mode!r}")
        if self.kind == "poly":
            if not self.basis:
                raise ValueError("poly path needs at least one basis function")
            for b in self.basis:
                if b not in _BASIS_COEFFS:
                    raise ValueError(
                        f"unknown basis function {b!r}; "
                        f"choose from {sorted(_BASIS_COEFFS)}"
                    )

    @classmethod
    def constant(cls) -> "CovariatePathSpec":
        return cls(kind="constant")

    @classmethod
    def polynomial(cls, basis, mode="combine") -> "CovariatePathSpec":
        return cls(kind="poly", basis=tuple(basis), mode=mode)

    @classmethod
    def parse(cls, text: str) -> "CovariatePathSpec":
        """Parse the CLI syntax: "constant" or "poly:MODE:b1,b2[,...]"."""
        if text == "constant":
            return cls.constant()
        parts = text.split(":")
        if len(parts) != 3 or parts[0] != "poly":
            raise ValueError(
                f"bad path spec {text!r}; expected 'constant' or "
                "'poly:combine:...'/'poly:expand:...'"
            )
        return cls.polynomial(parts[2].split(","), mode=parts[1])

    @property
    def time_invariant(self) -> bool:
        if self.kind == "constant":
            return True
        return all(_BASIS_COEFFS[b][1] == 0 and _BASIS_COEFFS[b][2] == 0
                   for b in self.basis)

    def output_dim(self, static_dim: int) -> int:
        if self.kind == "constant":
            return static_dim
        nb = len(self.basis)
        if self.mode == "expand":
            return static_dim * nb
        if static_dim % nb != 0:
            raise ValueError(
                f"combine mode needs static dim divisible by {nb}, "
                f"got {static_dim}"
            )
        return static_dim // nb

    def compile(self, features: np.ndarray):
        """Return coefficient matrices (P0, P1, P2); P1/P2 are None when zero."""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        n, d = features.shape
        if self.kind == "constant":
            return features, None, None
        nb = len(self.basis)
        p = self.output_dim(d)
        coeffs = [_BASIS_COEFFS[b] for b in self.basis]
        out = []
        for degree in range(3):
            if all(c[degree] == 0.0 for c in coeffs):
                out.append(None)
                continue
            P = np.zeros((n, p))
            for k, c in enumerate(coeffs):
                if c[degree] == 0.0:
                    continue
                if self.mode == "expand":
                    P[:, k * d:(k + 1) * d] = c[degree] * features
                else:
                    P += c[degree] * features[:, k * p:(k + 1) * p]
            out.append(P)
        if out[0] is None:
            out[0] = np.zeros((n, p))
        return tuple(out)


def _eval_poly(P0, P1, P2, t):
    """Horner evaluation at a scalar or per-row time t."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    X = P0
    if P2 is not None:
        X = X + t * (P1 if P1 is not None else 0.0) + (t * t) * P2
    elif P1 is not None:
        X = X + t * P1
    return X


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: observed time, event indicator, static features, path."""

    y: float
    delta: int
    features: np.ndarray
    path: CovariatePathSpec = field(default_factory=CovariatePathSpec.constant)


def evaluate_covariate(record: SurvivalRecord, t: float) -> np.ndarray:
    """Evaluate the record's covariate vector X(t).

    Parameters
    ----------
    record : SurvivalRecord
    t : float
        Nonnegative evaluation time.

    Returns
    -------
    ndarray of shape (p,) where p is the path's output dimension.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    P0, P1, P2 = record.path.compile(record.features[None, :])
    return _eval_poly(P0, P1, P2, float(t))[0]


class Dataset:
    """Column-oriented survival dataset with a precomputed event-time order.

    Parameters
    ----------
    y : array_like of shape (n,)
        Observed times, nonnegative.
    delta : array_like of shape (n,)
        Event indicators in {0, 1}.
    features : array_like of shape (n, d)
        Static features; combined with `path` they define X(t).
    path : CovariatePathSpec, optional
        Defaults to the constant path.

    Notes
    -----
    The instance is immutable after construction (arrays are marked
    read-only), so concurrent readers are safe. `sort_index` orders records
    by increasing time with events before censorings at ties, then input
    order.
    """

    def __init__(self, y, delta, features, path=None):
        y = np.array(y, dtype=np.float64, order="C")
        delta = np.asarray(delta)
        features = np.array(features, dtype=np.float64, order="C")
        if features.ndim == 1:
            # a single feature column
            features = features[:, None]
        if y.ndim != 1:
            raise ValueError("y must be one-dimensional")
        n = y.shape[0]
        if n == 0:
            raise EmptyDataset("dataset has no records")
        if delta.shape != (n,) or features.shape[0] != n:
            raise ValueError("y, delta and features lengths disagree")
        if not np.isfinite(y).all() or not np.isfinite(features).all():
            raise NonFiniteValue("times and features must be finite")
        if np.any(y < 0):
            raise NegativeTime("observed times must be nonnegative")
        uniq = np.unique(delta)
        if not np.isin(uniq, (0, 1)).all():
            raise InvalidStatus(f"status values must be 0 or 1, saw {uniq}")
        delta = np.array(delta, dtype=np.int8, order="C")

        self.path = path if path is not None else CovariatePathSpec.constant()
        self.p = self.path.output_dim(features.shape[1])
        self.y = y
        self.delta = delta
        self.features = features
        # primary key y, then events first, then input order; lexsort is
        # stable but the explicit index key makes the tie rule self-evident
        self.sort_index = np.lexsort((np.arange(n), 1 - delta, y))
        self.dropped_rows = 0
        for a in (self.y, self.delta, self.features, self.sort_index):
            a.flags.writeable = False
        self._cache = {}

    # -- basic introspection -------------------------------------------------

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def static_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.delta.sum())

    def record(self, i: int) -> SurvivalRecord:
        return SurvivalRecord(
            y=float(self.y[i]),
            delta=int(self.delta[i]),
            features=self.features[i].copy(),
            path=self.path,
        )

    # -- cached derived structure -------------------------------------------

    def _expanded(self):
        """Coefficient matrices (P0, P1, P2) in input order."""
        if "expanded" not in self._cache:
            self._cache["expanded"] = self.path.compile(self.features)
        return self._cache["expanded"]

    def _sorted_arrays(self):
        """(y, delta, P0, P1, P2) in sort order, contiguous."""
        if "sorted" not in self._cache:
            P0, P1, P2 = self._expanded()
            o = self.sort_index
            self._cache["sorted"] = (
                np.ascontiguousarray(self.y[o]),
                np.ascontiguousarray(self.delta[o]),
                np.ascontiguousarray(P0[o]),
                None if P1 is None else np.ascontiguousarray(P1[o]),
                None if P2 is None else np.ascontiguousarray(P2[o]),
            )
        return self._cache["sorted"]

    def _event_groups(self):
        """Distinct event times with counts and risk-set start positions.

        Returns (times, counts, starts) where starts[g] is the first
        position in sort order with y >= times[g]. Because events precede
        censorings at tied times, the events at times[g] occupy positions
        starts[g] .. starts[g] + counts[g] - 1 exactly.
        """
        if "groups" not in self._cache:
            ys, ds, *_ = self._sorted_arrays()
            ev = ys[ds == 1]
            times, counts = np.unique(ev, return_counts=True)
            starts = np.searchsorted(ys, times, side="left")
            self._cache["groups"] = (times, counts.astype(np.int64), starts)
        return self._cache["groups"]

    def covariates_at(self, t) -> np.ndarray:
        """All subjects' X(t) (input order) at a common time t."""
        P0, P1, P2 = self._expanded()
        return _eval_poly(P0, P1, P2, float(t))

    def covariates_at_own_times(self) -> np.ndarray:
        """X_i(y_i) for every subject, input order."""
        P0, P1, P2 = self._expanded()
        if P1 is None and P2 is None:
            return P0
        return _eval_poly(P0, P1, P2, self.y)


def at_risk_indices(dataset: Dataset, t: float) -> np.ndarray:
    """Indices of subjects still at risk at time t, i.e. {j : y_j >= t}.

    Binary search on the sorted order; returned indices are ascending.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    ys, *_ = dataset._sorted_arrays()
    k = np.searchsorted(ys, t, side="left")
    return np.sort(dataset.sort_index[k:])


def load_csv(path, time, status, features, path_spec=None,
             delimiter=",") -> Dataset:
    """Load a survival dataset from a delimited text file.

    Parameters
    ----------
    path : str or file-like
        CSV file with a header row.
    time, status : str
        Column names for the observed time and the 0/1 event status.
    features : sequence of str
        Feature column names, at least one.
    path_spec : CovariatePathSpec or str, optional
        Covariate path; a string is parsed with CovariatePathSpec.parse.
    delimiter : str, optional

    Returns
    -------
    Dataset
        With `dropped_rows` set to the number of rows removed because a
        mapped column was missing or non-numeric.

    Raises
    ------
    MissingColumn, EmptyDataset, NegativeTime, InvalidStatus
    """
    features = list(features)
    if not features:
        raise MissingColumn("at least one feature column is required")
    if isinstance(path_spec, str):
        path_spec = CovariatePathSpec.parse(path_spec)

    try:
        # round_trip parsing so save_csv -> load_csv is bit-exact
        frame = pd.read_csv(path, sep=delimiter, float_precision="round_trip")
    except OSError as e:
        raise DataError(f"cannot read {path!r}: {e}") from e
    wanted = [time, status, *features]
    for col in wanted:
        if col not in frame.columns:
            raise MissingColumn(f"column {col!r} not in header")
    sub = frame[wanted].apply(pd.to_numeric, errors="coerce")
    kept = sub.dropna()
    dropped = len(sub) - len(kept)
    if len(kept) == 0:
        raise EmptyDataset(f"no usable rows in {path!r}")

    y = kept[time].to_numpy(dtype=np.float64)
    if np.any(y < 0):
        raise NegativeTime("time column contains negative values")
    st = kept[status].to_numpy(dtype=np.float64)
    if not np.isin(st, (0.0, 1.0)).all():
        bad = sorted(set(st) - {0.0, 1.0})
        raise InvalidStatus(f"status column contains values {bad}")
    X = kept[features].to_numpy(dtype=np.float64)

    ds = Dataset(y, st.astype(np.int8), X, path=path_spec)
    ds.dropped_rows = dropped
    return ds


def save_csv(dataset: Dataset, path, time="time", status="status",
             feature_prefix="x", delimiter=","):
    """Write the dataset back to CSV in input order (round-trip partner of
    load_csv). Feature columns are named x1..xd unless a prefix is given."""
    cols = {time: dataset.y, status: dataset.delta.astype(int)}
    for j in range(dataset.static_dim):
        cols[f"{feature_prefix}{j + 1}"] = dataset.features[:, j]
    pd.DataFrame(cols).to_csv(path, sep=delimiter, index=False)
