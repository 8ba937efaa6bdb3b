"""
Exact distribution of the tree distance over the mutation space.

For fixed n and mu every string is visited once as a context (its entries off
position mu). The decoder never reads p_mu before step mu, so the partial tree
after steps n-2 .. mu+1 is shared by all n strings of a context; it is copied
for each value at mu and the n(n-1) ordered pairs are tallied from the edges
added at steps mu .. 0. The steps above mu contribute identical edges to both
trees, so Delta = mu + 1 - |L(v) & L(w)| where L(v) holds the remaining edges.
"""

import itertools
import logging
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple, Union

from .coupled import decode_pair, in_event_region
from .metrics import record_pairs
from .models.mutation import MutationPair
from .models.prufer import PruferString, RearDecoder, TooSmall, all_strings

logger = logging.getLogger(__name__)

DEFAULT_CAP = 9
ALL = "all"


class EnumerationError(Exception):
    """Base exception for exact enumeration."""
    pass


class TooLarge(EnumerationError):
    """Raised when n exceeds the enumeration cap without acknowledging the cost."""
    pass


@dataclass
class ExactDistribution:
    """Exact counts of Delta over M_mu (or over M when mu is "all")."""

    n: int
    mu: Union[int, str]
    counts: Dict[int, int]
    total: int
    event_e_count: int = 0
    event_e_violations: int = 0
    elapsed: float = field(default=0.0, compare=False)

    def __post_init__(self):
        """Check tally conservation and the range of Delta."""
        if sum(self.counts.values()) != self.total:
            raise EnumerationError(
                f"Counts sum to {sum(self.counts.values())}, expected {self.total}"
            )
        if self.counts.get(0, 0):
            raise EnumerationError(f"{self.counts[0]} pairs at distance 0; the code is not injective")
        bad = [ell for ell in self.counts if not 0 <= ell <= self.n - 1]
        if bad:
            raise EnumerationError(f"Distances {bad} are outside 0..{self.n - 1}")

    def count(self, ell: int) -> int:
        return self.counts.get(ell, 0)

    def probability(self, ell: int) -> Fraction:
        """P(Delta = ell) as an exact rational."""
        return Fraction(self.count(ell), self.total)

    def mean(self) -> Fraction:
        """Exact expected distance."""
        return Fraction(sum(ell * c for ell, c in self.counts.items()), self.total)

    def event_e_probability(self) -> Fraction:
        return Fraction(self.event_e_count, self.total)

    def lower_bound(self) -> Fraction:
        """(n-mu)(n-mu-1) / (n(n-1)); for the marginal, its average over mu."""
        n = self.n
        if self.mu == ALL:
            terms = [Fraction((n - m) * (n - m - 1), n * (n - 1)) for m in range(1, n - 1)]
            return sum(terms, Fraction(0)) / (n - 2)
        return Fraction((n - self.mu) * (n - self.mu - 1), n * (n - 1))

    def lower_bound_holds(self) -> bool:
        """Whether P(Delta = 1) >= the event-E probability bound, exactly."""
        return self.probability(1) >= self.lower_bound()

    def to_rows(self) -> List[Dict[str, object]]:
        """One row per ell in 1..n-1 with columns of the enumerate CSV."""
        rows = []
        for ell in range(1, self.n):
            p = self.probability(ell)
            rows.append({
                "n": self.n,
                "mu": self.mu,
                "ell": ell,
                "count": self.count(ell),
                "total": self.total,
                "prob_rational": f"{p.numerator}/{p.denominator}",
                "prob_decimal": float(p),
            })
        return rows


Tally = Tuple[Counter, int, int]


def check_size(n: int, cap: int = DEFAULT_CAP, acknowledge_cost: bool = False):
    """
    Validate n against the enumeration cap.

    Raises:
        TooSmall: If n < 3
        TooLarge: If n > cap and the cost was not acknowledged
    """
    if n < 3:
        raise TooSmall(f"Enumeration needs n >= 3, got n={n}")
    if n > cap and not acknowledge_cost:
        raise TooLarge(
            f"n={n} exceeds the enumeration cap {cap}: {n ** (n - 2) * (n - 1):,} pairs per mu; "
            "raise the cap or acknowledge the cost"
        )


def _check_mu(n: int, mu: int):
    if not 1 <= mu <= n - 2:
        raise EnumerationError(f"Mutation position mu={mu} is outside 1..{n - 2}")


def _split_position(n: int, mu: int) -> Optional[int]:
    """A free coordinate used to cut the work into n independent blocks."""
    if mu < n - 2:
        return n - 2
    if mu > 1:
        return 1
    return None


def _tally_block(n: int, mu: int, split: Optional[Tuple[int, int]]) -> Tally:
    """Tally every ordered pair whose context has p_split = value."""
    counts: Counter = Counter()
    e_count = e_violations = 0
    values = range(1, n + 1)
    suffix_positions = [i for i in range(n - 2, mu, -1)]
    prefix_positions = [i for i in range(1, mu)]
    if split is not None:
        fixed_pos, fixed_value = split
        suffix_positions = [i for i in suffix_positions if i != fixed_pos]
        prefix_positions = [i for i in prefix_positions if i != fixed_pos]
    entries = [1] * (n - 2)
    if split is not None:
        entries[fixed_pos - 1] = fixed_value
    base_override = (mu, 1)

    for suffix in itertools.product(values, repeat=len(suffix_positions)):
        for i, p in zip(suffix_positions, suffix):
            entries[i - 1] = p
        base = RearDecoder(PruferString(n, tuple(entries)), override=base_override).run_to(mu)
        in_region = [False] + [in_event_region(base, v) for v in values]

        for prefix in itertools.product(values, repeat=len(prefix_positions)):
            for i, p in zip(prefix_positions, prefix):
                entries[i - 1] = p
            string = PruferString(n, tuple(entries))
            tails = [None]
            for v in values:
                decoder = base.copy(string, override=(mu, v)).run()
                tails.append(frozenset(decoder.edges[: mu + 1]))

            for v in range(1, n + 1):
                tail_v = tails[v]
                for w in range(v + 1, n + 1):
                    delta = mu + 1 - len(tail_v & tails[w])
                    counts[delta] += 2
                    if in_region[v] and in_region[w]:
                        e_count += 2
                        if delta != 1:
                            e_violations += 2
    return counts, e_count, e_violations


def _tally_coupled(n: int, mu: int) -> Tally:
    """Reference tally: one full coupled decode per ordered pair."""
    counts: Counter = Counter()
    e_count = e_violations = 0
    for string in all_strings(n):
        for value in range(1, n + 1):
            if value == string[mu]:
                continue
            trace = decode_pair(MutationPair(string, mu, value))
            counts[trace.delta_total] += 1
            if trace.flags.E:
                e_count += 1
                if trace.delta_total != 1:
                    e_violations += 1
    return counts, e_count, e_violations


def _merge(tallies) -> Tally:
    counts: Counter = Counter()
    e_count = e_violations = 0
    for block_counts, block_e, block_violations in tallies:
        counts.update(block_counts)
        e_count += block_e
        e_violations += block_violations
    return counts, e_count, e_violations


def _run_blocks(n: int, mu: int, workers: int) -> Tally:
    pos = _split_position(n, mu)
    splits = [None] if pos is None else [(pos, v) for v in range(1, n + 1)]
    if workers <= 1 or len(splits) == 1:
        return _merge(_tally_block(n, mu, split) for split in splits)
    with ProcessPoolExecutor(max_workers=min(workers, len(splits))) as pool:
        futures = [pool.submit(_tally_block, n, mu, split) for split in splits]
        return _merge(f.result() for f in futures)


def enumerate_mu(n: int, mu: int, cap: int = DEFAULT_CAP, acknowledge_cost: bool = False,
                 workers: int = 1, method: str = "grouped") -> ExactDistribution:
    """
    Exact distribution of Delta over M_mu.

    Args:
        n: Order of the strings
        mu: Mutation position in 1..n-2
        cap: Largest n enumerated without acknowledgement
        acknowledge_cost: Enumerate above the cap anyway
        workers: Number of worker processes
        method: "grouped" (shared decoder prefix per context) or "coupled"
            (one coupled decode per pair, single process)

    Returns:
        ExactDistribution with total n^(n-2)(n-1)

    Raises:
        TooLarge: If n exceeds the cap
        EnumerationError: If mu or method is invalid
    """
    check_size(n, cap, acknowledge_cost)
    _check_mu(n, mu)
    start = time.perf_counter()
    logger.info("Enumerating n=%d mu=%d (%s, workers=%d)", n, mu, method, workers)
    if method == "grouped":
        counts, e_count, e_violations = _run_blocks(n, mu, workers)
    elif method == "coupled":
        counts, e_count, e_violations = _tally_coupled(n, mu)
    else:
        raise EnumerationError(f"Unknown enumeration method {method!r}")

    total = n ** (n - 2) * (n - 1)
    record_pairs("enumerate", total)
    dist = ExactDistribution(n, mu, dict(sorted(counts.items())), total, e_count, e_violations,
                             elapsed=time.perf_counter() - start)
    logger.info("Enumerated n=%d mu=%d: %d pairs in %.2fs", n, mu, total, dist.elapsed)
    if e_violations:
        logger.error("%d pairs in event E have Delta != 1 (n=%d mu=%d)", e_violations, n, mu)
    return dist


def enumerate_all(n: int, cap: int = DEFAULT_CAP, acknowledge_cost: bool = False,
                  workers: int = 1, method: str = "grouped") -> ExactDistribution:
    """
    Marginal distribution of Delta over M, pooling mu = 1..n-2.

    Every M_mu has the same size, so pooled counts over |M| equal the uniform
    1/(n-2) mixture of the conditional distributions.
    """
    check_size(n, cap, acknowledge_cost)
    parts = [enumerate_mu(n, mu, cap, acknowledge_cost, workers, method) for mu in range(1, n - 1)]
    return pool_distributions(n, parts)


def pool_distributions(n: int, parts: List[ExactDistribution]) -> ExactDistribution:
    """
    Pool the conditional tables for mu = 1..n-2 into the marginal.

    Raises:
        EnumerationError: If the parts do not cover every mu of order n exactly once
    """
    mus = sorted(part.mu for part in parts if part.n == n and part.mu != ALL)
    if mus != list(range(1, n - 1)) or len(parts) != n - 2:
        raise EnumerationError(f"Cannot pool mu values {mus} into the marginal for n={n}")
    counts: Counter = Counter()
    for part in parts:
        counts.update(part.counts)
    return ExactDistribution(
        n,
        ALL,
        dict(sorted(counts.items())),
        sum(part.total for part in parts),
        sum(part.event_e_count for part in parts),
        sum(part.event_e_violations for part in parts),
        elapsed=sum(part.elapsed for part in parts),
    )


def count_event_E(n: int, mu: int, cap: int = DEFAULT_CAP, acknowledge_cost: bool = False,
                  workers: int = 1) -> int:
    """Number of ordered pairs in M_mu for which event E holds."""
    return enumerate_mu(n, mu, cap, acknowledge_cost, workers).event_e_count


def event_e_closed_form(n: int, mu: int) -> int:
    """n^(n-3) (n-mu)(n-mu-1)."""
    return n ** (n - 3) * (n - mu) * (n - mu - 1)
