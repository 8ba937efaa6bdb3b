"""
Coupled decoding of a mutation pair (P, P*).

Both strings are decoded in lockstep with two independent RearDecoder
instances. Alongside them a small state machine tracks the partition of the
vertices still unplaced in either tree:

    X_j u X*_j = A_j < min{z, z*} < B_j < max{z, z*} < C_j

where z is the one vertex placed in T_j but not T*_j and z* its counterpart
(the pair is absent once the two decoders agree). classify_step predicts the
next transition from (a, b, c, z, z*) alone; decode_pair checks every
prediction against what the two decoders actually did.
"""

import logging
from dataclasses import dataclass, replace
from typing import Container, FrozenSet, List, Optional, Set, Tuple

from .models.mutation import (
    CaseLabel,
    CoupledDecoderError,
    DecodeTrace,
    EventFlags,
    InvalidPair,
    MutationPair,
    StateMachineMismatch,
    StateMerged,
    StepRecord,
    TraceDetail,
    default_beta_n,
    default_delta_n,
)
from .models.prufer import RearDecoder
from .models.tree import Edge, canonical_edge

logger = logging.getLogger(__name__)

__all__ = [
    "CoupledDecoder",
    "CoupledDecoderError",
    "CoupledState",
    "InvalidPair",
    "StateMachineMismatch",
    "StateMerged",
    "Transition",
    "classify_step",
    "compute_tau",
    "count_positive_steps",
    "decode_pair",
    "detect_events",
    "in_event_region",
]

_ANY_DELTA = frozenset((-1, 0, 1))
_NON_NEGATIVE = frozenset((0, 1))
_ZERO = frozenset((0,))
_ONE = frozenset((1,))
S_FRACTION = 2.0 ** -12


class _RankTree:
    """Fenwick tree over 1..n counting the vertices unplaced in both trees."""

    __slots__ = ("n", "tree")

    def __init__(self, n: int, initial: List[int]):
        self.n = n
        self.tree = [0] * (n + 1)
        for i in range(1, n + 1):
            self.tree[i] += initial[i]
            parent = i + (i & -i)
            if parent <= n:
                self.tree[parent] += self.tree[i]

    def add(self, i: int, delta: int):
        while i <= self.n:
            self.tree[i] += delta
            i += i & -i

    def prefix(self, i: int) -> int:
        total = 0
        while i > 0:
            total += self.tree[i]
            i -= i & -i
        return total


class _CommonUnplaced:
    """Read-only membership view of X_j n X*_j on the live decoder arrays."""

    __slots__ = ("_either", "_n")

    def __init__(self, either: bytearray, n: int):
        self._either = either
        self._n = n

    def __contains__(self, v) -> bool:
        return 1 <= v <= self._n and not self._either[v]


@dataclass(frozen=True)
class CoupledState:
    """
    State X_j u X*_j of the coupled decoder before step j-1.

    h_edge and hstar_edge record whether {z, p*_j} is already an edge of T_j and
    {z*, p_j} an edge of T*_j. They contain the H events; the reverse
    coincidence h*(p_j) = z* can only come from p*_mu.

    `common` is a live view and is only meaningful until the decoder advances.
    """

    j: int
    a: int
    b: int
    c: int
    z: Optional[int]
    zstar: Optional[int]
    top_common: Optional[int]
    p_j: int
    pstar_j: int
    h_z: Optional[int]
    hstar_zstar: Optional[int]
    h_edge: bool
    hstar_edge: bool
    common: Container[int]

    @property
    def diverged(self) -> bool:
        return self.z is not None


@dataclass(frozen=True)
class Transition:
    """Predicted outcome of one step from a diverged state."""

    label: CaseLabel
    y: int
    ystar: int
    a: int
    b: int
    c: int
    z: Optional[int]
    zstar: Optional[int]
    deltas: FrozenSet[int]
    h_event: bool
    hstar_event: bool


def classify_step(state: CoupledState, p: Optional[int]) -> Transition:
    """
    Classify the entry read at step j-1 and predict the transition.

    Args:
        state: A diverged coupled state X_j u X*_j
        p: The entry p_{j-1} (p_{j-1} = p*_{j-1} below the mutation); None at
            step 0, which reads no entry and behaves like a shared vertex

    Returns:
        The case label with the predicted added vertices, block sizes, z-pair
        and the set of possible increments Delta_{j-1}

    Raises:
        StateMerged: If the two decoders already agree
    """
    if not state.diverged:
        raise StateMerged(f"State at j={state.j} has no z-pair; the step cannot be classified")

    z, zs = state.z, state.zstar
    lo, hi = (z, zs) if z < zs else (zs, z)
    a, b, c = state.a, state.b, state.c
    top = state.top_common
    h_event = state.h_z == state.pstar_j
    hstar_event = state.hstar_zstar == state.p_j

    def build(label, y, ys, na, nb, nc, nz, nzs, deltas, coincidences=False):
        # H events are reported on the 2b/3b transitions only
        if not coincidences:
            return Transition(label, y, ys, na, nb, nc, nz, nzs, deltas, False, False)
        return Transition(label, y, ys, na, nb, nc, nz, nzs, deltas, h_event, hstar_event)

    def merge(label):
        return build(label, zs, z, state.j - 1, 0, 0, None, None, _ANY_DELTA)

    def from_b(label):
        # c == 0 and b > 0, so the top common vertex is the top of B
        if z < zs:
            return build(label, zs, top, a, b - 1, 0, z, top,
                         _ZERO if state.hstar_edge else _ONE, coincidences=True)
        return build(label, top, z, a, b - 1, 0, top, zs,
                     _ZERO if state.h_edge else _ONE, coincidences=True)

    if p is not None and p in state.common:
        if p < lo:
            return build(CaseLabel.IN_A, p, p, a - 1, b, c, z, zs, _ZERO)
        if p < hi:
            return build(CaseLabel.IN_B, p, p, a, b - 1, c, z, zs, _ZERO)
        return build(CaseLabel.IN_C, p, p, a, b, c - 1, z, zs, _ZERO)

    if p == hi:
        if b == 0 and c == 0:
            return merge(CaseLabel.MAX_MERGE)
        if c == 0:
            return from_b(CaseLabel.MAX_FROM_B)
        if z < zs:
            return build(CaseLabel.MAX_FROM_C, zs, top, a, b + c - 1, 0, z, top, _NON_NEGATIVE)
        return build(CaseLabel.MAX_FROM_C, top, z, a, b + c - 1, 0, top, zs, _NON_NEGATIVE)

    if p == lo:
        if c == 0:
            return merge(CaseLabel.MIN_MERGE)
        if z < zs:
            return build(CaseLabel.MIN_FROM_C, top, z, a + b, c - 1, 0, top, zs, _NON_NEGATIVE)
        return build(CaseLabel.MIN_FROM_C, zs, top, a + b, c - 1, 0, z, top, _NON_NEGATIVE)

    # p is a vertex of both partial trees
    if b == 0 and c == 0:
        return merge(CaseLabel.SHARED_MERGE)
    if c == 0:
        return from_b(CaseLabel.SHARED_FROM_B)
    return build(CaseLabel.SHARED_FROM_C, top, top, a, b, c - 1, z, zs, _ZERO)


def in_event_region(decoder: RearDecoder, v: int) -> bool:
    """Whether v lies in V_{mu+1} u {max X_{mu+1}} for a decoder stopped before step mu."""
    return decoder.in_tree(v) or v == decoder.max_unplaced()


class CoupledDecoder:
    """
    Lockstep decoder for a mutation pair.

    Call advance() n-1 times (or run()) to obtain the step records, ordered
    from step n-2 down to step 0.
    """

    def __init__(self, pair: MutationPair, detail: TraceDetail = TraceDetail.SUMMARY,
                 verify: bool = False):
        """
        Args:
            pair: The pair to decode
            detail: SUMMARY keeps (delta, a, b, c, label) per step; FULL also keeps
                vertices, edges, the z-pair, H events and the A/B/C blocks
            verify: Recompute a, b, c from scratch at every step and compare them
                with the state machine
        """
        n = pair.n
        self.pair = pair
        self.n = n
        self.mu = pair.mu
        self.detail = TraceDetail(detail)
        self.left = RearDecoder(pair.string)
        self.right = RearDecoder(pair.string, override=(pair.mu, pair.value))

        self._either = bytearray(n + 1)
        self._either[n] = 1
        self._top_common = n - 1
        self._common = _CommonUnplaced(self._either, n)
        self._only_left: Set[int] = set()
        self._only_right: Set[int] = set()
        self._edges_left: Set[Edge] = set()
        self._edges_right: Set[Edge] = set()

        self.a, self.b, self.c = n - 1, 0, 0
        self.z: Optional[int] = None
        self.zstar: Optional[int] = None
        self.event_e: Optional[bool] = None
        self.delta_total = 0
        self.records: List[StepRecord] = []

        self._ranks: Optional[_RankTree] = None
        if verify:
            self._ranks = _RankTree(n, [0] + [1] * (n - 1) + [0])

    @property
    def finished(self) -> bool:
        return self.left.finished

    @property
    def j(self) -> int:
        """Index of the current state X_j (the next step is j-1)."""
        return self.left.step + 1

    def _max_common(self) -> Optional[int]:
        top = self._top_common
        either = self._either
        while top > 0 and either[top]:
            top -= 1
        self._top_common = top
        return top if top > 0 else None

    def state(self) -> CoupledState:
        """Snapshot of the current coupled state."""
        j = self.j
        z, zs = self.z, self.zstar
        p_j, pstar_j = self.left.entry(j), self.right.entry(j)
        return CoupledState(
            j=j,
            a=self.a,
            b=self.b,
            c=self.c,
            z=z,
            zstar=zs,
            top_common=self._max_common(),
            p_j=p_j,
            pstar_j=pstar_j,
            h_z=self.left.h[z] if z is not None else None,
            hstar_zstar=self.right.h[zs] if zs is not None else None,
            h_edge=z is not None and canonical_edge(z, pstar_j) in self._edges_left,
            hstar_edge=zs is not None and canonical_edge(zs, p_j) in self._edges_right,
            common=self._common,
        )

    def _count_blocks(self) -> Tuple[int, int, int]:
        """Ground-truth a, b, c of the current state by a direct count."""
        lo, hi = sorted((self.z, self.zstar))
        if self._ranks is not None:
            r = self._ranks
            below_hi = r.prefix(hi - 1)
            below_lo = r.prefix(lo - 1)
            return below_lo, below_hi - below_lo, r.prefix(self.n) - below_hi
        a = b = c = 0
        either = self._either
        for v in range(1, self.n):
            if not either[v]:
                if v < lo:
                    a += 1
                elif v < hi:
                    b += 1
                else:
                    c += 1
        return a, b, c

    def _blocks(self) -> Tuple[FrozenSet[int], FrozenSet[int], FrozenSet[int]]:
        either = self._either
        common = [v for v in range(1, self.n + 1) if not either[v]]
        if self.z is None:
            return frozenset(common), frozenset(), frozenset()
        lo, hi = sorted((self.z, self.zstar))
        return (
            frozenset(v for v in common if v < lo),
            frozenset(v for v in common if lo < v < hi),
            frozenset(v for v in common if v > hi),
        )

    def _place(self, v: int, own: Set[int], other: Set[int]):
        if v in other:
            other.remove(v)
        else:
            own.add(v)
        if not self._either[v]:
            self._either[v] = 1
            if self._ranks is not None:
                self._ranks.add(v, -1)

    def _mismatch(self, step: int, what: str, predicted, actual):
        raise StateMachineMismatch(
            f"n={self.n} mu={self.mu} step {step}: predicted {what}={predicted}, executed {actual}"
        )

    def advance(self) -> StepRecord:
        """Execute step j-1 in both decoders and return its record."""
        if self.finished:
            raise CoupledDecoderError("Coupled decoder has already finished")
        s = self.left.step
        mu = self.mu
        prediction: Optional[Transition] = None

        if s > mu:
            label = CaseLabel.PRE_MU
        elif s == mu:
            self.event_e = (in_event_region(self.left, self.pair.string[mu])
                            and in_event_region(self.left, self.pair.value))
            label = CaseLabel.MERGED if self.event_e else CaseLabel.SPLIT
        elif self.z is None:
            label = CaseLabel.MERGED
        else:
            prediction = classify_step(self.state(), self.left.entry(s) if s >= 1 else None)
            label = prediction.label
            if s == mu - 1:
                # p_mu != p*_mu, so the edges added at step mu-1 never coincide
                prediction = replace(prediction, deltas=_NON_NEGATIVE)

        _, y, edge = self.left.advance()
        _, ys, edge_star = self.right.advance()

        if edge == edge_star:
            gained = 1
        else:
            gained = (edge in self._edges_right) + (edge_star in self._edges_left)
        self._edges_left.add(edge)
        self._edges_right.add(edge_star)
        delta = 1 - gained
        self.delta_total += delta

        self._place(y, self._only_left, self._only_right)
        self._place(ys, self._only_right, self._only_left)
        if len(self._only_left) > 1 or len(self._only_left) != len(self._only_right):
            raise StateMachineMismatch(
                f"n={self.n} mu={mu} step {s}: trees differ by vertex sets "
                f"{sorted(self._only_left)} / {sorted(self._only_right)}"
            )
        z = next(iter(self._only_left)) if self._only_left else None
        zs = next(iter(self._only_right)) if self._only_right else None

        if prediction is not None:
            if (prediction.y, prediction.ystar) != (y, ys):
                self._mismatch(s, "(y, y*)", (prediction.y, prediction.ystar), (y, ys))
            if (prediction.z, prediction.zstar) != (z, zs):
                self._mismatch(s, "(z, z*)", (prediction.z, prediction.zstar), (z, zs))
            if delta not in prediction.deltas:
                self._mismatch(s, "Delta", sorted(prediction.deltas), delta)
            self.a, self.b, self.c = prediction.a, prediction.b, prediction.c
        elif label is CaseLabel.SPLIT:
            if z is None:
                self._mismatch(s, "z-pair", "present", None)
        elif z is not None:
            self._mismatch(s, "z-pair", None, (z, zs))
        else:
            if s < mu and y != ys:
                self._mismatch(s, "y = y*", y, ys)
            self.a, self.b, self.c = s, 0, 0

        self.z, self.zstar = z, zs
        if z is not None:
            if label is CaseLabel.SPLIT or self._ranks is not None:
                counted = self._count_blocks()
                if prediction is not None and counted != (self.a, self.b, self.c):
                    self._mismatch(s, "(a, b, c)", (self.a, self.b, self.c), counted)
                self.a, self.b, self.c = counted

        if self.detail is TraceDetail.FULL:
            record = StepRecord(
                s, delta, self.a, self.b, self.c, label,
                y=y, ystar=ys, edge=edge, edgestar=edge_star, z=z, zstar=zs,
                h_event=prediction.h_event if prediction else False,
                hstar_event=prediction.hstar_event if prediction else False,
                blocks=self._blocks(),
            )
        else:
            record = StepRecord(
                s, delta, self.a, self.b, self.c, label,
                h_event=prediction.h_event if prediction else False,
                hstar_event=prediction.hstar_event if prediction else False,
            )
        self.records.append(record)
        return record

    def run(self) -> List[StepRecord]:
        """Execute all remaining steps."""
        while not self.finished:
            self.advance()
        return self.records


def compute_tau(trace: DecodeTrace, z: float) -> int:
    """
    tau(z): the largest step j <= mu with c(j) <= z.

    c(j) is non-increasing as j decreases and c(1) = 0, so the scan from mu
    downwards always stops at some j >= 1.
    """
    for j in range(trace.mu, -1, -1):
        if trace.c_at(j) <= z:
            return j
    raise CoupledDecoderError(f"c(j) > {z} for every j <= mu; trace is inconsistent")


def count_positive_steps(trace: DecodeTrace) -> int:
    """Number of steps j < mu with Delta_j = 1."""
    return sum(1 for j in range(trace.mu) if trace.step(j).delta == 1)


def detect_events(trace: DecodeTrace, delta_n: Optional[float] = None,
                  beta_n: Optional[float] = None) -> EventFlags:
    """
    Evaluate the per-pair events on a complete trace.

    Args:
        trace: A complete trace
        delta_n: Threshold for b(mu); defaults to n^(1/3)
        beta_n: Window for tau; defaults to n^(2/3) ln^2 n

    Returns:
        EventFlags with the raw (unfloored) threshold comparisons
    """
    n, mu = trace.n, trace.mu
    delta_n = default_delta_n(n) if delta_n is None else delta_n
    beta_n = default_beta_n(n) if beta_n is None else beta_n

    at_mu = trace.step(mu)
    merged_at_mu = not at_mu.diverged
    tau0 = compute_tau(trace, 0)
    tau_delta = compute_tau(trace, delta_n)

    def avoids_z_pair(start: int) -> bool:
        return not any(trace.step(j).label.hits_z_pair for j in range(start, mu))

    return EventFlags(
        E=merged_at_mu,
        E1=not merged_at_mu and at_mu.b < delta_n,
        E2=not merged_at_mu and at_mu.b >= delta_n,
        S=trace.b_at(tau0) >= S_FRACTION * delta_n,
        T1=tau_delta - tau0 <= 2 * beta_n,
        T2=tau0 <= n - beta_n,
        Z0=avoids_z_pair(tau0),
        Zdelta=avoids_z_pair(tau_delta),
        delta_n=delta_n,
        beta_n=beta_n,
    )


def decode_pair(pair: MutationPair, detail: TraceDetail | str = TraceDetail.SUMMARY,
                verify: bool = False, delta_n: Optional[float] = None,
                beta_n: Optional[float] = None) -> DecodeTrace:
    """
    Decode both strings of a pair in lockstep and instrument the run.

    Args:
        pair: The mutation pair
        detail: "summary" (O(n) memory) or "full" (per-step blocks, O(n^2))
        verify: Cross-check a, b, c against a direct count at every step
        delta_n: Optional override of the delta_n threshold
        beta_n: Optional override of the beta_n threshold

    Returns:
        The trace with delta_total, event flags and tau values filled in

    Raises:
        StateMachineMismatch: If a predicted transition disagrees with the decoders
    """
    decoder = CoupledDecoder(pair, TraceDetail(detail), verify=verify)
    steps = decoder.run()
    trace = DecodeTrace(pair=pair, steps=steps, delta_total=decoder.delta_total,
                        detail=decoder.detail)
    trace.flags = detect_events(trace, delta_n, beta_n)
    trace.tau0 = compute_tau(trace, 0)
    trace.tau_delta = compute_tau(trace, trace.flags.delta_n)
    trace.b_at_tau0 = trace.b_at(trace.tau0)
    trace.extras["positive_steps"] = count_positive_steps(trace)
    return trace
