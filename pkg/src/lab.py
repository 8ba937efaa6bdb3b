"""Main experiment facade for PruferLab."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import Settings
from .coupled import decode_pair
from .enumerator import ExactDistribution, enumerate_all, enumerate_mu
from .metrics import record_pairs, write_metrics
from .models.mutation import (
    DecodeTrace,
    InvalidPair,
    MutationPair,
    StateMachineMismatch,
    TraceDetail,
)
from .models.prufer import PruferString, decode, encode, random_tree
from .models.tree import LabeledTree, tree_distance
from .simulation import (
    DistEstimate,
    SimConfig,
    curve_sweep,
    estimate_delta_dist,
    estimate_marginal,
)

logger = logging.getLogger(__name__)


@dataclass
class MutationReport:
    """A pair with both decoded trees, its distance and the coupled trace."""

    pair: MutationPair
    tree: LabeledTree
    tree_star: LabeledTree
    delta: int
    trace: DecodeTrace


class PruferLab:
    """
    High-level interface over the codec, the coupled decoder, the enumerator
    and the sampler.

    Worker count, enumeration cap, histogram cutoff and confidence level come
    from the Settings; a metrics file, when given, is written on close().
    """

    def __init__(self, settings: Optional[Settings] = None,
                 metrics_file: Optional[str | Path] = None):
        """
        Args:
            settings: Resolved settings (defaults when None)
            metrics_file: Optional path for the Prometheus text dump
        """
        self.settings = settings or Settings()
        self.metrics_file = metrics_file

    def encode(self, tree: LabeledTree) -> PruferString:
        return encode(tree)

    def decode(self, string: PruferString) -> LabeledTree:
        return decode(string)

    def random_tree(self, n: int, seed: Optional[int] = None) -> LabeledTree:
        return random_tree(n, np.random.default_rng(seed))

    def distance(self, tree: LabeledTree, other: LabeledTree) -> int:
        return tree_distance(tree, other)

    def make_pair(self, n: int, string: Optional[PruferString] = None, mu: Optional[int] = None,
                  value: Optional[int] = None, seed: Optional[int] = None) -> MutationPair:
        """
        Build a mutation pair, drawing whatever is not given.

        Args:
            n: Order of the strings
            string: The original string; uniform random when None
            mu: Mutation position; uniform on 1..n-2 when None
            value: New entry at mu; uniform over the other n-1 values when None
            seed: Seed for the random parts

        Raises:
            InvalidPair: If value equals p_mu, or mu is out of range
        """
        rng = np.random.default_rng(seed)
        if string is None:
            string = PruferString.random(n, rng)
        elif string.n != n:
            raise InvalidPair(f"String has order {string.n}, expected {n}")
        if mu is None:
            mu = int(rng.integers(1, n - 1))
        if value is None:
            if not 1 <= mu <= n - 2:
                raise InvalidPair(f"Mutation position mu={mu} is outside 1..{n - 2}")
            value = int(rng.integers(1, n))
            if value >= string[mu]:
                value += 1
        return MutationPair(string, mu, value)

    def trace(self, pair: MutationPair, detail: TraceDetail | str = TraceDetail.SUMMARY,
              verify: bool = False) -> DecodeTrace:
        record_pairs("trace", 1)
        return decode_pair(pair, detail, verify)

    def mutate(self, pair: MutationPair, detail: TraceDetail | str = TraceDetail.SUMMARY,
               verify: bool = False) -> MutationReport:
        """
        Decode both strings of a pair and trace the coupled run.

        Raises:
            StateMachineMismatch: If the traced total differs from the tree distance
        """
        tree = decode(pair.original)
        tree_star = decode(pair.mutant)
        delta = tree_distance(tree, tree_star)
        trace = self.trace(pair, detail, verify)
        if trace.delta_total != delta:
            raise StateMachineMismatch(
                f"Traced increments sum to {trace.delta_total}, tree distance is {delta}"
            )
        return MutationReport(pair, tree, tree_star, delta, trace)

    def enumerate(self, n: int, mu: Optional[int] = None, acknowledge_cost: bool = False,
                  method: str = "grouped", cap: Optional[int] = None) -> ExactDistribution:
        """Exact distribution for one mu, or the marginal when mu is None."""
        cap = self.settings.enumeration_cap if cap is None else cap
        if mu is None:
            return enumerate_all(n, cap, acknowledge_cost, self.settings.workers, method)
        return enumerate_mu(n, mu, cap, acknowledge_cost, self.settings.workers, method)

    def simulate(self, n: int, mus: Sequence[int] = (), alphas: Sequence[float] = (),
                 samples: int = 10_000, seed: int = 0, events: bool = True,
                 max_ell: Optional[int] = None) -> List[DistEstimate]:
        cfg = SimConfig(
            n,
            mus=tuple(mus),
            alphas=tuple(alphas),
            samples=samples,
            seed=seed,
            max_ell_tracked=max_ell or self.settings.max_ell_tracked,
            workers=self.settings.workers,
            confidence=self.settings.confidence,
            events=events,
        )
        return estimate_delta_dist(cfg)

    def marginal(self, n: int, samples: int = 10_000, seed: int = 0, events: bool = True,
                 max_ell: Optional[int] = None) -> DistEstimate:
        return estimate_marginal(n, samples, seed, max_ell or self.settings.max_ell_tracked,
                                 self.settings.workers, self.settings.confidence, events)

    def sweep(self, n: int, alphas: Sequence[float], samples: int = 10_000, seed: int = 0,
              events: bool = False) -> List[dict]:
        return curve_sweep(n, alphas, samples, seed, self.settings.workers,
                           self.settings.confidence, events)

    def close(self):
        """Write the metrics file, if one was requested."""
        if self.metrics_file is not None:
            write_metrics(self.metrics_file)
            logger.info("Metrics written to %s", self.metrics_file)

    def __enter__(self):
        """Context manager entry."""
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Context manager exit - write metrics."""
        self.close()
