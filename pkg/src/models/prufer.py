"""Prufer string model and the encode/decode bijection for PruferLab."""

import heapq
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .tree import Edge, LabeledTree, TreeError


class PruferError(Exception):
    """Base exception for Prufer string operations."""
    pass


class InvalidPruferString(PruferError):
    """Raised when a string has the wrong length or an entry outside {1..n}."""
    pass


class TooSmall(PruferError):
    """Raised when a Prufer string or encoding is requested for n < 3."""
    pass


class PruferFormatError(PruferError):
    """Raised when a P-string text line cannot be parsed."""

    def __init__(self, message: str, line_number: int = 1):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


StepHook = Callable[[int, int, Edge], None]


@dataclass(frozen=True)
class PruferString:
    """A Prufer string (p_1, ..., p_{n-2}) over {1..n}."""

    n: int
    entries: Tuple[int, ...]

    def __post_init__(self):
        """Validate order, length and entry range."""
        if self.n < 3:
            raise TooSmall(f"Prufer strings need n >= 3, got n={self.n}")
        object.__setattr__(self, "entries", tuple(self.entries))
        if len(self.entries) != self.n - 2:
            raise InvalidPruferString(
                f"A Prufer string of order {self.n} has {self.n - 2} entries, got {len(self.entries)}"
            )
        for i, p in enumerate(self.entries, 1):
            if not 1 <= p <= self.n:
                raise InvalidPruferString(f"Entry p_{i}={p} is outside 1..{self.n}")

    def __getitem__(self, i: int) -> int:
        """Entry p_i using the 1-based index of the text; p_{n-1} is the virtual n."""
        if i == self.n - 1:
            return self.n
        if not 1 <= i <= self.n - 2:
            raise IndexError(f"Position {i} is outside 1..{self.n - 1}")
        return self.entries[i - 1]

    def __len__(self) -> int:
        return len(self.entries)

    def mutated(self, mu: int, value: int) -> "PruferString":
        """Copy of this string with p_mu replaced by value."""
        if not 1 <= mu <= self.n - 2:
            raise InvalidPruferString(f"Position mu={mu} is outside 1..{self.n - 2}")
        entries = list(self.entries)
        entries[mu - 1] = value
        return PruferString(self.n, tuple(entries))

    def rank(self) -> int:
        """Mixed-radix index of the string in 0..n^(n-2)-1, p_1 most significant."""
        r = 0
        for p in self.entries:
            r = r * self.n + (p - 1)
        return r

    @classmethod
    def from_rank(cls, n: int, rank: int) -> "PruferString":
        """Inverse of rank()."""
        if not 0 <= rank < n ** (n - 2):
            raise InvalidPruferString(f"Rank {rank} is outside 0..{n ** (n - 2) - 1}")
        entries = []
        for _ in range(n - 2):
            rank, digit = divmod(rank, n)
            entries.append(digit + 1)
        return cls(n, tuple(reversed(entries)))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "PruferString":
        """Uniform random string of order n."""
        return cls(n, tuple(rng.integers(1, n + 1, size=n - 2).tolist()))

    def __str__(self) -> str:
        return format_prufer(self)


@dataclass(frozen=True)
class HMap:
    """The first-neighbour map v -> h(v) for v in {1..n-1}."""

    n: int
    mapping: Dict[int, int]

    def __post_init__(self):
        """Validate domain and values."""
        if set(self.mapping) != set(range(1, self.n)):
            raise ValueError(f"h must be defined exactly on 1..{self.n - 1}")
        for v, hv in self.mapping.items():
            if not 1 <= hv <= self.n or hv == v:
                raise ValueError(f"Invalid value h({v})={hv}")

    def __getitem__(self, v: int) -> int:
        return self.mapping[v]

    def edges(self) -> set:
        """The edge set {{v, h(v)}} as canonical pairs."""
        return {(v, hv) if v < hv else (hv, v) for v, hv in self.mapping.items()}


class RearDecoder:
    """
    Steppable rear-to-front decoder.

    The string is read from p_{n-2} down to p_1. X (unplaced vertices) starts as
    {1..n-1}, the tree starts as the single vertex n, and p_{n-1} is the virtual
    entry n. At step i the vertex y_i is p_i if p_i is still unplaced, otherwise
    the largest unplaced vertex; it is joined to p_{i+1}. Step 0 adds the last
    unplaced vertex and joins it to p_1.

    The largest unplaced vertex only ever decreases, so it is tracked with a
    pointer that moves down past placed vertices (amortized O(n) per decode).
    """

    __slots__ = ("n", "step", "added", "edges", "h", "_entries", "_override", "_placed", "_top")

    def __init__(self, string: PruferString, override: Optional[Tuple[int, int]] = None):
        """
        Args:
            string: The string to decode
            override: Optional (mu, value) pair read in place of p_mu, letting a
                mutated string share storage with its original
        """
        n = string.n
        self.n = n
        self._entries = string.entries
        self._override = override
        self._placed = bytearray(n + 1)
        self._placed[n] = 1
        self._top = n - 1
        self.step = n - 2
        self.added: List[int] = [0] * (n - 1)
        self.edges: List[Optional[Edge]] = [None] * (n - 1)
        self.h: List[int] = [0] * (n + 1)

    def entry(self, i: int) -> int:
        """p_i as read by this decoder (1 <= i <= n-1)."""
        if i == self.n - 1:
            return self.n
        if self._override is not None and i == self._override[0]:
            return self._override[1]
        return self._entries[i - 1]

    def in_tree(self, v: int) -> bool:
        """Whether v is already a vertex of the partial tree."""
        return bool(self._placed[v])

    def max_unplaced(self) -> int:
        """Largest vertex not yet in the partial tree."""
        top = self._top
        placed = self._placed
        while placed[top]:
            top -= 1
        self._top = top
        return top

    @property
    def finished(self) -> bool:
        return self.step < 0

    def advance(self) -> Tuple[int, int, Edge]:
        """
        Execute the next step.

        Returns:
            Tuple of (step index i, added vertex y_i, added edge)
        """
        i = self.step
        if i < 0:
            raise PruferError("Decoder has already finished")
        if i == 0:
            y = self.max_unplaced()
        else:
            p = self.entry(i)
            y = p if not self._placed[p] else self.max_unplaced()
        q = self.entry(i + 1)
        self._placed[y] = 1
        self.added[i] = y
        self.h[y] = q
        edge = (y, q) if y < q else (q, y)
        self.edges[i] = edge
        self.step = i - 1
        return i, y, edge

    def run(self, on_step: Optional[StepHook] = None) -> "RearDecoder":
        """Execute all remaining steps, reporting each to on_step."""
        while self.step >= 0:
            i, y, edge = self.advance()
            if on_step is not None:
                on_step(i, y, edge)
        return self

    def run_to(self, step: int) -> "RearDecoder":
        """Execute steps until `step` is the next one to run."""
        while self.step > step:
            self.advance()
        return self

    def copy(self, string: Optional[PruferString] = None,
             override: Optional[Tuple[int, int]] = None) -> "RearDecoder":
        """
        Independent copy of the current decoder state.

        Args:
            string: Optional string to read from here on; it must agree with the
                current one on every entry already consumed
            override: Optional (mu, value) replacing the current override
        """
        if string is not None and string.n != self.n:
            raise PruferError(f"Cannot resume an order-{self.n} decoder on an order-{string.n} string")
        clone = RearDecoder.__new__(RearDecoder)
        clone.n = self.n
        clone.step = self.step
        clone.added = list(self.added)
        clone.edges = list(self.edges)
        clone.h = list(self.h)
        clone._entries = self._entries if string is None else string.entries
        clone._override = self._override if override is None else override
        clone._placed = bytearray(self._placed)
        clone._top = self._top
        return clone

    def tree(self) -> LabeledTree:
        """The decoded tree; edges are ordered by the step that added them."""
        if not self.finished:
            raise PruferError(f"Decoder stopped before step 0 (next step {self.step})")
        return LabeledTree(self.n, tuple(self.edges), check=False)


def decode(string: PruferString, on_step: Optional[StepHook] = None) -> LabeledTree:
    """
    Decode a Prufer string with the rear-to-front algorithm.

    Args:
        string: The P-string to decode
        on_step: Optional hook called with (i, y_i, edge) after every step

    Returns:
        The tree; tree.edges[j] is the edge added at step j
    """
    return RearDecoder(string).run(on_step).tree()


def h_map(string: PruferString) -> HMap:
    """First-neighbour map: for v = y_j, h(v) = p_{j+1}."""
    decoder = RearDecoder(string).run()
    return HMap(string.n, {v: decoder.h[v] for v in range(1, string.n)})


def encode(tree: LabeledTree) -> PruferString:
    """
    Encode a tree by repeatedly removing the lowest-numbered leaf.

    Args:
        tree: A tree with n >= 3

    Returns:
        The P-string whose i-th entry is the neighbour of the leaf removed at step i

    Raises:
        TooSmall: If n < 3
    """
    n = tree.n
    if n < 3:
        raise TooSmall(f"Encoding needs n >= 3, got n={n}")

    adjacency = tree.adjacency
    degree = [len(neighbours) for neighbours in adjacency]
    removed = bytearray(n + 1)
    leaves = [v for v in range(1, n + 1) if degree[v] == 1]
    heapq.heapify(leaves)

    entries = []
    for _ in range(n - 2):
        leaf = heapq.heappop(leaves)
        removed[leaf] = 1
        neighbour = next(w for w in adjacency[leaf] if not removed[w])
        entries.append(neighbour)
        degree[neighbour] -= 1
        if degree[neighbour] == 1:
            heapq.heappush(leaves, neighbour)
    return PruferString(n, tuple(entries))


def random_tree(n: int, rng: np.random.Generator) -> LabeledTree:
    """Uniform random labeled tree on {1..n} (Cayley-uniform via the bijection)."""
    if n < 2:
        raise TreeError(f"A tree needs at least 2 vertices, got n={n}")
    if n == 2:
        return LabeledTree(2, ((1, 2),))
    return decode(PruferString.random(n, rng))


def parse_entries(n: int, text: str, line_number: int = 1) -> PruferString:
    """Parse a comma-separated entry list such as '4,3,2,2,7'."""
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    try:
        entries = tuple(int(t) for t in tokens)
    except ValueError:
        raise PruferFormatError(f"non-integer entry in {text!r}", line_number)
    try:
        return PruferString(n, entries)
    except InvalidPruferString as e:
        raise PruferFormatError(str(e), line_number) from e


def parse_prufer(line: str, line_number: int = 1) -> PruferString:
    """Parse one `n; p1,p2,...` line."""
    head, sep, body = line.partition(";")
    if not sep:
        raise PruferFormatError("expected 'n; p1,p2,...'", line_number)
    try:
        n = int(head.strip())
    except ValueError:
        raise PruferFormatError(f"order {head.strip()!r} is not an integer", line_number)
    return parse_entries(n, body, line_number)


def format_prufer(string: PruferString) -> str:
    """Render a string as `n; p1,p2,...`."""
    return f"{string.n}; " + ",".join(str(p) for p in string.entries)


def read_strings(path: str | Path) -> List[PruferString]:
    """Read a P-string file, one string per line; blank lines and '#' comments are skipped."""
    strings = []
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, 1):
            line = raw.strip()
            if line and not line.startswith("#"):
                strings.append(parse_prufer(line, number))
    return strings


def all_strings(n: int) -> Iterable[PruferString]:
    """Every string of order n in rank order (n^(n-2) of them)."""
    for rank in range(n ** (n - 2)):
        yield PruferString.from_rank(n, rank)
