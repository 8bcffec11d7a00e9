"""Uniform Poisson subsampling and the plain subsample estimator.

Inclusion decisions come from a counter-based generator: the uniform for
index i is a pure function of (seed, stream, i), so draws are reproducible
regardless of chunking or thread count, and restricting a draw to a prefix
of the data equals drawing on the prefix alone. Stream 0 is the main
subsample, stream 1 the pilot; the two draws are independent and may
overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coxph import FitResult, newton_raphson_fit
from .data import Dataset
from .exceptions import EmptySubsample, IndexOutOfRange, TooFewEvents

MAIN_STREAM = 0
PILOT_STREAM = 1

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_SALT = 0xD2B74407B1CE6E93
_MULT1 = 0xBF58476D1CE4E5B9
_MULT2 = 0x94D049BB133111EB


def _mix64_int(z: int) -> int:
    """splitmix64 finalizer on a Python int, used for the per-stream key."""
    z &= _MASK64
    z ^= z >> 30
    z = (z * _MULT1) & _MASK64
    z ^= z >> 27
    z = (z * _MULT2) & _MASK64
    z ^= z >> 31
    return z


def _uniforms(n: int, seed: int, stream: int) -> np.ndarray:
    """Uniform(0,1) variate for each index 0..n-1 on the given stream.

    Vectorized splitmix64: uint64 arithmetic wraps silently on arrays, and
    the top 53 bits of the mixed counter become the mantissa.
    """
    key = _mix64_int((int(seed) & _MASK64) ^ ((stream * _STREAM_SALT) & _MASK64))
    ctr = np.uint64(key) + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
    z = ctr ^ (ctr >> np.uint64(30))
    z = z * np.uint64(_MULT1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_MULT2)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def default_pilot_size(r: int) -> int:
    """ceil(r^{2/3} log r), floored at 1 so tiny draws stay usable."""
    return max(1, math.ceil(r ** (2.0 / 3.0) * math.log(r)))


@dataclass(frozen=True)
class SubsamplePlan:
    """Sizes, seed, and inclusion rate for one subsampling run.

    `rate` is expected_size / n clamped to 1; build through for_data so the
    clamping and the pilot default stay in one place.
    """

    expected_size: int
    pilot_size: int
    seed: int
    rate: float

    def __post_init__(self):
        if self.expected_size < 1:
            raise ValueError("expected_size must be a positive count")
        if self.pilot_size < 1:
            raise ValueError("pilot_size must be a positive count")
        if not 0.0 < self.rate <= 1.0:
            raise ValueError(f"rate must be in (0, 1], got {self.rate}")

    @classmethod
    def for_data(cls, n: int, r: int, seed: int,
                 r0: int | None = None) -> "SubsamplePlan":
        if n < 1:
            raise ValueError("n must be a positive count")
        return cls(
            expected_size=int(r),
            pilot_size=int(r0) if r0 is not None else default_pilot_size(r),
            seed=int(seed),
            rate=min(r / n, 1.0),
        )

    def pilot_rate(self, n: int) -> float:
        return min(self.pilot_size / n, 1.0)


@dataclass(frozen=True)
class SubsampleIndex:
    """Strictly increasing indices into a parent dataset of size parent_n."""

    indices: np.ndarray
    parent_n: int
    realized_size: int

    @classmethod
    def from_indices(cls, indices, parent_n) -> "SubsampleIndex":
        indices = np.asarray(indices, dtype=np.int64)
        return cls(indices=indices, parent_n=int(parent_n),
                   realized_size=int(indices.shape[0]))


def poisson_subsample(n: int, plan: SubsamplePlan,
                      stream: int = MAIN_STREAM) -> SubsampleIndex:
    """Draw a uniform Poisson subsample of {0..n-1}.

    Index i is included independently with probability plan.rate (stream 0)
    or the pilot rate (stream 1). The same (n, plan, stream) always yields
    the same indices.

    Raises EmptySubsample when nothing is drawn; redraw with a fresh seed
    rather than retrying internally, which would bias inclusion.
    """
    if n < 1:
        raise ValueError("n must be a positive count")
    rate = plan.rate if stream == MAIN_STREAM else plan.pilot_rate(n)
    mask = _uniforms(n, plan.seed, stream) < rate
    idx = np.flatnonzero(mask)
    if idx.shape[0] == 0:
        raise EmptySubsample(
            f"rate {rate:.3g} drew no indices from n={n}; redraw with a new seed"
        )
    return SubsampleIndex.from_indices(idx, n)


def draw_pilot(n: int, plan: SubsamplePlan) -> SubsampleIndex:
    """Pilot draw on its own stream, independent of the main subsample."""
    return poisson_subsample(n, plan, stream=PILOT_STREAM)


def subset(dataset: Dataset, idx: SubsampleIndex) -> Dataset:
    """New Dataset containing the selected records; the parent is untouched."""
    if idx.parent_n != dataset.n:
        raise IndexOutOfRange(
            f"index built for n={idx.parent_n}, dataset has n={dataset.n}"
        )
    ind = idx.indices
    if ind.shape[0] and (ind[0] < 0 or ind[-1] >= dataset.n):
        raise IndexOutOfRange("subsample indices outside dataset range")
    return Dataset(dataset.y[ind], dataset.delta[ind],
                   dataset.features[ind], path=dataset.path)


def fit_uniform(dataset: Dataset,
                plan: SubsamplePlan) -> tuple[FitResult, SubsampleIndex]:
    """Draw the main subsample and fit the partial likelihood on it.

    The returned FitResult is the plain subsample estimator: its variance
    field is (realized r times the subsample information)^{-1}, which is
    what newton_raphson_fit reports on the subsample itself.

    Raises TooFewEvents when the draw has fewer events than parameters;
    enlarging r (or reseeding) is the caller's call.
    """
    idx = poisson_subsample(dataset.n, plan, stream=MAIN_STREAM)
    sub = subset(dataset, idx)
    if sub.n_events < dataset.p:
        raise TooFewEvents(
            f"subsample has {sub.n_events} events for p={dataset.p}; increase r"
        )
    return newton_raphson_fit(sub), idx
