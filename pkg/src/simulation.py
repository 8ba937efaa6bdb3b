"""
Monte Carlo estimation of the distance distribution for large n.

Sample i of a run is drawn from its own Philox stream keyed by (seed, n, mu)
with counter block i, so every sample is a pure function of its index and the
histogram does not depend on how the index range is split across workers.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .confidence import standard_error, wilson_interval
from .coupled import decode_pair
from .metrics import record_pairs
from .models.mutation import EVENT_NAMES, MutationPair, default_delta_n
from .models.prufer import PruferString, RearDecoder

logger = logging.getLogger(__name__)

MARGINAL = "all"
_MARGINAL_TAG = 0
_COUNTER_STRIDE = 1 << 128
_SEED_LIMIT = 1 << 64


class SimulationError(Exception):
    """Base exception for Monte Carlo runs."""
    pass


class InvalidConfig(SimulationError):
    """Raised when a simulation configuration is out of range."""
    pass


def mu_for_alpha(n: int, alpha: float) -> int:
    """mu = round(alpha n), halves rounded up, clamped to 1..n-2."""
    if not 0 < alpha < 1:
        raise InvalidConfig(f"alpha must lie in (0, 1), got {alpha}")
    return min(max(math.floor(alpha * n + 0.5), 1), n - 2)


@dataclass(frozen=True)
class SimConfig:
    """Parameters of a Monte Carlo run; exactly one of mus and alphas is given."""

    n: int
    mus: Tuple[int, ...] = ()
    alphas: Tuple[float, ...] = ()
    samples: int = 10_000
    seed: int = 0
    max_ell_tracked: int = 64
    workers: int = 1
    confidence: float = 0.95
    events: bool = True

    def __post_init__(self):
        """Validate the configuration."""
        object.__setattr__(self, "mus", tuple(int(m) for m in self.mus))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if self.n < 3:
            raise InvalidConfig(f"n must be at least 3, got {self.n}")
        if bool(self.mus) == bool(self.alphas):
            raise InvalidConfig("Give either an explicit mu list or an alpha grid")
        for mu in self.mus:
            if not 1 <= mu <= self.n - 2:
                raise InvalidConfig(f"mu={mu} is outside 1..{self.n - 2}")
        for alpha in self.alphas:
            mu_for_alpha(self.n, alpha)
        if self.samples < 1:
            raise InvalidConfig(f"samples must be positive, got {self.samples}")
        if not 0 <= self.seed < _SEED_LIMIT:
            raise InvalidConfig(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.max_ell_tracked < 1:
            raise InvalidConfig(f"max_ell_tracked must be positive, got {self.max_ell_tracked}")
        if self.workers < 1:
            raise InvalidConfig(f"workers must be positive, got {self.workers}")
        if not 0 < self.confidence < 1:
            raise InvalidConfig(f"confidence must lie in (0, 1), got {self.confidence}")

    def points(self) -> List[Tuple[Optional[float], int]]:
        """(alpha, mu) for every grid point; alpha is None for explicit mus."""
        if self.mus:
            return [(None, mu) for mu in self.mus]
        return [(alpha, mu_for_alpha(self.n, alpha)) for alpha in self.alphas]


@lru_cache(maxsize=256)
def _stream_key(seed: int, n: int, mu_tag: int) -> Tuple[int, int]:
    state = np.random.SeedSequence([seed, n, mu_tag]).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def sample_stream(seed: int, n: int, mu_tag: int, index: int) -> np.random.Generator:
    """The independent stream of sample `index` in run (seed, n, mu)."""
    key = np.array(_stream_key(seed, n, mu_tag), dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=index * _COUNTER_STRIDE))


def sample_pair(n: int, mu: Optional[int], stream: np.random.Generator) -> MutationPair:
    """
    Draw a pair uniformly from M_mu (or from M when mu is None).

    P is uniform over {1..n}^(n-2) and p*_mu uniform over {1..n} minus p_mu.
    """
    if mu is None:
        mu = int(stream.integers(1, n - 1))
    entries = stream.integers(1, n + 1, size=n - 2)
    value = int(stream.integers(1, n))
    if value >= entries[mu - 1]:
        value += 1
    return MutationPair(PruferString(n, tuple(entries.tolist())), mu, value)


def pair_distance(pair: MutationPair) -> int:
    """Delta of a pair using one shared decode of the steps above mu."""
    mu = pair.mu
    base = RearDecoder(pair.string).run_to(mu)
    left = base.copy().run()
    right = base.copy(override=(mu, pair.value)).run()
    return mu + 1 - len(set(left.edges[: mu + 1]) & set(right.edges[: mu + 1]))


@dataclass
class Histogram:
    """Tally of Delta with an overflow bucket above max_ell, plus event counts."""

    max_ell: int
    counts: np.ndarray = None
    overflow_count: int = 0
    overflow_sum: int = 0
    overflow_max: int = 0
    events: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.max_ell + 1, dtype=np.int64)

    @property
    def samples(self) -> int:
        return int(self.counts.sum()) + self.overflow_count

    def add(self, delta: int, flags=None):
        if delta <= self.max_ell:
            self.counts[delta] += 1
        else:
            self.overflow_count += 1
            self.overflow_sum += delta
            self.overflow_max = max(self.overflow_max, delta)
        if flags is not None:
            for name, hit in flags.as_dict().items():
                if hit:
                    self.events[name] = self.events.get(name, 0) + 1

    def merge(self, other: "Histogram") -> "Histogram":
        if other.max_ell != self.max_ell:
            raise SimulationError("Cannot merge histograms with different cutoffs")
        self.counts += other.counts
        self.overflow_count += other.overflow_count
        self.overflow_sum += other.overflow_sum
        self.overflow_max = max(self.overflow_max, other.overflow_max)
        for name, count in other.events.items():
            self.events[name] = self.events.get(name, 0) + count
        return self


@dataclass
class DistEstimate:
    """Sampled distribution of Delta for one mu (or the marginal)."""

    n: int
    mu: int | str
    alpha: Optional[float]
    samples: int
    seed: int
    histogram: Histogram
    confidence: float = 0.95
    events_tracked: bool = True
    elapsed: float = 0.0

    def __post_init__(self):
        """Check tally conservation."""
        if self.histogram.samples != self.samples:
            raise SimulationError(
                f"Histogram holds {self.histogram.samples} samples, expected {self.samples}"
            )

    @property
    def max_ell(self) -> int:
        return self.histogram.max_ell

    def count(self, ell: int) -> int:
        if ell < 0:
            return 0
        if ell > self.max_ell:
            raise SimulationError(f"Distance {ell} is pooled above max_ell_tracked={self.max_ell}")
        return int(self.histogram.counts[ell])

    def p_hat(self, ell: int) -> float:
        return self.count(ell) / self.samples

    def ci(self, ell: int) -> Tuple[float, float]:
        return wilson_interval(self.count(ell), self.samples, self.confidence)

    def standard_error(self, ell: int) -> float:
        return standard_error(self.p_hat(ell), self.samples)

    def tail_count(self, t: int) -> int:
        """Number of samples with Delta >= t."""
        t = max(t, 0)
        if t <= self.max_ell + 1:
            return int(self.histogram.counts[t:].sum()) + self.histogram.overflow_count
        if self.histogram.overflow_max < t:
            return 0
        raise SimulationError(f"Tail at {t} lies inside the overflow bucket (max_ell={self.max_ell})")

    def tail_probability(self, t: int) -> float:
        """P(Delta >= t)."""
        return self.tail_count(t) / self.samples

    def event_count(self, name: str) -> int:
        if not self.events_tracked:
            raise SimulationError("Events were not tracked in this run")
        if name not in EVENT_NAMES:
            raise SimulationError(f"Unknown event {name!r}")
        return self.histogram.events.get(name, 0)

    def event_probability(self, name: str) -> float:
        return self.event_count(name) / self.samples

    def to_rows(self) -> List[Dict[str, object]]:
        """Rows of the simulate CSV; an overflow row follows when max_ell < n-1."""
        base = {"n": self.n, "mu": self.mu, "alpha": self.alpha}
        rows = []
        for ell in range(1, min(self.max_ell, self.n - 1) + 1):
            low, high = self.ci(ell)
            rows.append({**base, "ell": ell, "count": self.count(ell), "samples": self.samples,
                         "p_hat": self.p_hat(ell), "ci_low": low, "ci_high": high,
                         "seed": self.seed})
        if self.max_ell < self.n - 1:
            over = self.histogram.overflow_count
            low, high = wilson_interval(over, self.samples, self.confidence)
            rows.append({**base, "ell": f">{self.max_ell}", "count": over,
                         "samples": self.samples, "p_hat": over / self.samples,
                         "ci_low": low, "ci_high": high, "seed": self.seed})
        return rows


def _sample_block(n: int, mu: Optional[int], seed: int, start: int, stop: int,
                  max_ell: int, events: bool) -> Histogram:
    """Histogram of samples start..stop-1 of one run."""
    histogram = Histogram(max_ell)
    tag = _MARGINAL_TAG if mu is None else mu
    for index in range(start, stop):
        pair = sample_pair(n, mu, sample_stream(seed, n, tag, index))
        if events:
            trace = decode_pair(pair)
            histogram.add(trace.delta_total, trace.flags)
        else:
            histogram.add(pair_distance(pair))
    logger.debug("n=%d mu=%s: samples %d..%d done", n, mu, start, stop - 1)
    return histogram


def _chunks(samples: int, workers: int) -> List[Tuple[int, int]]:
    count = min(samples, max(1, workers * 4))
    bounds = [samples * k // count for k in range(count + 1)]
    return [(bounds[k], bounds[k + 1]) for k in range(count) if bounds[k] < bounds[k + 1]]


def _run(n: int, mu: Optional[int], samples: int, seed: int, max_ell: int,
         events: bool, workers: int) -> Histogram:
    chunks = _chunks(samples, workers)
    histogram = Histogram(max_ell)
    if workers <= 1 or len(chunks) == 1:
        for start, stop in chunks:
            histogram.merge(_sample_block(n, mu, seed, start, stop, max_ell, events))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sample_block, n, mu, seed, start, stop, max_ell, events)
                       for start, stop in chunks]
            for future in futures:
                histogram.merge(future.result())
    record_pairs("simulate", samples)
    return histogram


def estimate_delta_dist(cfg: SimConfig) -> List[DistEstimate]:
    """
    Estimate P(Delta = ell | mu) for every grid point of cfg.

    Returns:
        One DistEstimate per (alpha, mu) point, in grid order
    """
    estimates = []
    for alpha, mu in cfg.points():
        start = time.perf_counter()
        logger.info("Sampling n=%d mu=%d: %d pairs, %d workers", cfg.n, mu, cfg.samples, cfg.workers)
        histogram = _run(cfg.n, mu, cfg.samples, cfg.seed, cfg.max_ell_tracked, cfg.events,
                         cfg.workers)
        estimate = DistEstimate(cfg.n, mu, alpha, cfg.samples, cfg.seed, histogram,
                                cfg.confidence, cfg.events, time.perf_counter() - start)
        logger.info("Sampled n=%d mu=%d in %.2fs: p_hat(1)=%.4f", cfg.n, mu, estimate.elapsed,
                    estimate.p_hat(1))
        estimates.append(estimate)
    return estimates


def estimate_marginal(n: int, samples: int, seed: int = 0, max_ell_tracked: int = 64,
                      workers: int = 1, confidence: float = 0.95,
                      events: bool = True) -> DistEstimate:
    """Estimate P(Delta = ell) with mu drawn uniformly from 1..n-2 for each sample."""
    if n < 3:
        raise InvalidConfig(f"n must be at least 3, got {n}")
    if samples < 1:
        raise InvalidConfig(f"samples must be positive, got {samples}")
    start = time.perf_counter()
    logger.info("Sampling marginal n=%d: %d pairs, %d workers", n, samples, workers)
    histogram = _run(n, None, samples, seed, max_ell_tracked, events, workers)
    return DistEstimate(n, MARGINAL, None, samples, seed, histogram, confidence, events,
                        time.perf_counter() - start)


def curve_sweep(n: int, alphas: Sequence[float], samples: int, seed: int = 0,
                workers: int = 1, confidence: float = 0.95,
                events: bool = False) -> List[Dict[str, object]]:
    """
    p_hat(1) along an alpha grid next to the limit (1 - alpha)^2.

    Returns:
        One row per alpha with the estimate, its interval, the reference value
        and the residual p_hat(1) - reference
    """
    cfg = SimConfig(n, alphas=tuple(alphas), samples=samples, seed=seed, workers=workers,
                    confidence=confidence, events=events)
    rows = []
    for estimate in estimate_delta_dist(cfg):
        low, high = estimate.ci(1)
        reference = (1 - estimate.alpha) ** 2
        rows.append({
            "n": n,
            "alpha": estimate.alpha,
            "mu": estimate.mu,
            "samples": samples,
            "p_hat": estimate.p_hat(1),
            "ci_low": low,
            "ci_high": high,
            "reference": reference,
            "residual": estimate.p_hat(1) - reference,
            "seed": seed,
        })
    return rows


def bimodality(estimate: DistEstimate) -> Dict[str, float]:
    """
    Split the mass into Delta = 1, 2 <= Delta < n^(1/3) and Delta >= n^(1/3).

    For the marginal the last share tends to 2/3 while the middle vanishes.
    """
    threshold = math.ceil(default_delta_n(estimate.n) - 1e-9)
    large = estimate.tail_probability(threshold)
    return {
        "p_one": estimate.p_hat(1),
        "p_middle": max(estimate.tail_probability(2) - large, 0.0),
        "p_large": large,
        "threshold": threshold,
    }


def event_rows(estimate: DistEstimate) -> List[Dict[str, object]]:
    """Empirical event frequencies, with the exact value of P(E | mu) alongside E."""
    n, mu = estimate.n, estimate.mu
    rows = []
    for name in EVENT_NAMES:
        count = estimate.event_count(name)
        low, high = wilson_interval(count, estimate.samples, estimate.confidence)
        exact = None
        if name == "E" and mu != MARGINAL:
            exact = (n - mu) * (n - mu - 1) / (n * (n - 1))
        rows.append({"n": n, "mu": mu, "event": name, "count": count,
                     "samples": estimate.samples, "p_hat": count / estimate.samples,
                     "ci_low": low, "ci_high": high, "exact": exact, "seed": estimate.seed})
    return rows


def chi_square_uniformity(n: int, samples: int, seed: int = 0, mu: int = 1) -> Dict[int, float]:
    """
    Sampler self-test: chi-square p-value of each entry position against U{1..n}.

    Returns:
        Map position -> p-value for positions 1..n-2
    """
    if n < 3 or not 1 <= mu <= n - 2:
        raise InvalidConfig(f"Invalid (n, mu) = ({n}, {mu}) for the uniformity test")
    tallies = np.zeros((n - 2, n), dtype=np.int64)
    rows = np.arange(n - 2)
    for index in range(samples):
        pair = sample_pair(n, mu, sample_stream(seed, n, mu, index))
        tallies[rows, np.asarray(pair.string.entries) - 1] += 1
    return {i + 1: float(stats.chisquare(tallies[i]).pvalue) for i in range(n - 2)}
