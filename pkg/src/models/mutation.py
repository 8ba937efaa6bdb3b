"""Mutation pair and coupled-decoding trace models for PruferLab."""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from .prufer import PruferString
from .tree import Edge


class CoupledDecoderError(Exception):
    """Base exception for coupled decoding."""
    pass


class InvalidPair(CoupledDecoderError):
    """Raised when two strings do not differ at exactly the mutation position."""
    pass


class StateMerged(CoupledDecoderError):
    """Raised when a step is classified while the two decoders agree."""
    pass


class StateMachineMismatch(CoupledDecoderError):
    """Raised when a predicted transition disagrees with the executed decoders."""
    pass


class CaseLabel(str, Enum):
    """How a step of the coupled decoder was classified."""

    PRE_MU = "PRE_MU"
    SPLIT = "SPLIT"
    MERGED = "MERGED"
    IN_A = "1a"
    IN_B = "1b"
    IN_C = "1c"
    SHARED_MERGE = "2a"
    SHARED_FROM_B = "2b"
    SHARED_FROM_C = "2c"
    MAX_MERGE = "3a"
    MAX_FROM_B = "3b"
    MAX_FROM_C = "3c"
    MIN_MERGE = "4a"
    MIN_FROM_C = "4b"

    def __str__(self) -> str:
        return self.value

    @property
    def hits_z_pair(self) -> bool:
        """Whether p_j was one of the two displaced vertices."""
        return self.value[0] in "34"


class TraceDetail(str, Enum):
    """How much of each step the coupled decoder keeps."""

    SUMMARY = "summary"
    FULL = "full"


@dataclass(frozen=True)
class MutationPair:
    """
    A pair (P, P*) differing exactly at position mu.

    Only the original string and the mutated entry p*_mu are stored.
    """

    string: PruferString
    mu: int
    value: int

    def __post_init__(self):
        """Validate the mutation position and value."""
        n = self.string.n
        if not 1 <= self.mu <= n - 2:
            raise InvalidPair(f"Mutation position mu={self.mu} is outside 1..{n - 2}")
        if not 1 <= self.value <= n:
            raise InvalidPair(f"Mutated value {self.value} is outside 1..{n}")
        if self.value == self.string[self.mu]:
            raise InvalidPair(f"Mutated value equals p_{self.mu}={self.value}; the strings must differ")

    @property
    def n(self) -> int:
        return self.string.n

    @property
    def original(self) -> PruferString:
        return self.string

    @cached_property
    def mutant(self) -> PruferString:
        """The string P* with p*_mu in place of p_mu."""
        return self.string.mutated(self.mu, self.value)

    @classmethod
    def from_strings(cls, string: PruferString, mutant: PruferString,
                     mu: Optional[int] = None) -> "MutationPair":
        """
        Build a pair from two full strings.

        Raises:
            InvalidPair: If the orders differ, the strings differ at a number of
                positions other than one, or at a position other than mu
        """
        if string.n != mutant.n:
            raise InvalidPair(f"Strings have orders {string.n} and {mutant.n}")
        positions = [i for i, (p, q) in enumerate(zip(string.entries, mutant.entries), 1) if p != q]
        if len(positions) != 1:
            raise InvalidPair(f"Strings differ at {len(positions)} positions, expected exactly 1")
        if mu is not None and positions[0] != mu:
            raise InvalidPair(f"Strings differ at position {positions[0]}, not at mu={mu}")
        return cls(string, positions[0], mutant[positions[0]])


@dataclass(slots=True)
class StepRecord:
    """One step of the coupled decoder; a, b, c describe the state after the step."""

    j: int
    delta: int
    a: int
    b: int
    c: int
    label: CaseLabel
    y: Optional[int] = None
    ystar: Optional[int] = None
    edge: Optional[Edge] = None
    edgestar: Optional[Edge] = None
    z: Optional[int] = None
    zstar: Optional[int] = None
    h_event: bool = False
    hstar_event: bool = False
    blocks: Optional[Tuple[FrozenSet[int], FrozenSet[int], FrozenSet[int]]] = None

    def __post_init__(self):
        if self.delta not in (-1, 0, 1):
            raise ValueError(f"Step {self.j}: increment {self.delta} is outside {{-1, 0, 1}}")

    @property
    def diverged(self) -> bool:
        """Whether the z-pair is present after this step."""
        return self.a != self.j

    def to_dict(self) -> Dict[str, Any]:
        """Field dict for trace export."""
        return {
            "j": self.j,
            "y": self.y,
            "ystar": self.ystar,
            "delta_j": self.delta,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "z": self.z,
            "zstar": self.zstar,
            "case": self.label.value,
            "H": self.h_event,
            "Hstar": self.hstar_event,
        }


def default_delta_n(n: int) -> float:
    """delta_n = n^(1/3)."""
    return n ** (1.0 / 3.0)


def default_beta_n(n: int) -> float:
    """beta_n = n^(2/3) ln^2 n."""
    return n ** (2.0 / 3.0) * math.log(n) ** 2


@dataclass(frozen=True)
class EventFlags:
    """Per-pair events from the lower- and upper-bound analysis."""

    E: bool
    E1: bool
    E2: bool
    S: bool
    T1: bool
    T2: bool
    Z0: bool
    Zdelta: bool
    delta_n: float
    beta_n: float

    def __post_init__(self):
        """Check that E, E1, E2 partition the mutation space."""
        if int(self.E) + int(self.E1) + int(self.E2) != 1:
            raise ValueError(f"Exactly one of E, E1, E2 must hold (got {self.E}, {self.E1}, {self.E2})")

    def as_dict(self) -> Dict[str, bool]:
        return {name: getattr(self, name) for name in EVENT_NAMES}


EVENT_NAMES = ("E", "E1", "E2", "S", "T1", "T2", "Z0", "Zdelta")


@dataclass
class DecodeTrace:
    """Complete record of one coupled decode, steps ordered j = n-2 ... 0."""

    pair: MutationPair
    steps: List[StepRecord]
    delta_total: int
    detail: TraceDetail
    flags: Optional[EventFlags] = None
    tau0: Optional[int] = None
    tau_delta: Optional[int] = None
    b_at_tau0: Optional[int] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.pair.n

    @property
    def mu(self) -> int:
        return self.pair.mu

    def step(self, j: int) -> StepRecord:
        """The record of step j."""
        return self.steps[self.n - 2 - j]

    def b_at(self, j: int) -> int:
        return self.step(j).b

    def c_at(self, j: int) -> int:
        return self.step(j).c

    def header(self) -> Dict[str, Any]:
        """Header object for trace export."""
        header = {
            "n": self.n,
            "mu": self.mu,
            "string": ",".join(str(p) for p in self.pair.string.entries),
            "value": self.pair.value,
            "delta_total": self.delta_total,
            "tau0": self.tau0,
            "tau_delta": self.tau_delta,
            "b_at_tau0": self.b_at_tau0,
            "detail": self.detail.value,
        }
        if self.flags is not None:
            header.update(self.flags.as_dict())
            header["delta_n"] = self.flags.delta_n
            header["beta_n"] = self.flags.beta_n
        return header
