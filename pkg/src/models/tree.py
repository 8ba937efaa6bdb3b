"""Labeled tree model for PruferLab."""

from collections import deque
from dataclasses import InitVar, dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, List, Tuple

Edge = Tuple[int, int]


class TreeError(Exception):
    """Base exception for tree operations."""
    pass


class NotATree(TreeError):
    """Raised when an edge list does not describe a tree on {1..n}."""
    pass


class SizeMismatch(TreeError):
    """Raised when two trees on different vertex counts are compared."""
    pass


class TreeFormatError(TreeError):
    """Raised when a tree text line cannot be parsed."""

    def __init__(self, message: str, line_number: int = 1):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def canonical_edge(u: int, v: int) -> Edge:
    """Return the pair with its smaller endpoint first."""
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class EdgeSet:
    """Canonical set of unordered vertex pairs."""

    pairs: frozenset

    def __post_init__(self):
        """Validate that every pair is stored min endpoint first."""
        for u, v in self.pairs:
            if not u < v:
                raise ValueError(f"Edge ({u}, {v}) is not in canonical (min, max) form")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]]) -> "EdgeSet":
        """Build an edge set from arbitrary unordered pairs."""
        return cls(frozenset(canonical_edge(u, v) for u, v in pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[Edge]:
        return iter(sorted(self.pairs))

    def __contains__(self, edge) -> bool:
        u, v = edge
        return canonical_edge(u, v) in self.pairs

    def __and__(self, other: "EdgeSet") -> "EdgeSet":
        return EdgeSet(self.pairs & other.pairs)


@dataclass(frozen=True, eq=False)
class LabeledTree:
    """
    A tree on the vertex set {1..n}, stored as an ordered tuple of edges.

    Edge order is preserved for display (trees produced by the decoder keep the
    edge added at step j at index j); equality and hashing use the edge set only.
    """

    n: int
    edges: Tuple[Edge, ...]
    check: InitVar[bool] = True

    def __post_init__(self, check: bool):
        """Canonicalize edges and validate the tree structure."""
        object.__setattr__(self, "edges", tuple(canonical_edge(u, v) for u, v in self.edges))
        if check:
            _check_tree(self.n, self.edges)

    @cached_property
    def edge_set(self) -> EdgeSet:
        """Edge set E(T) in canonical form."""
        return EdgeSet(frozenset(self.edges))

    @cached_property
    def adjacency(self) -> List[List[int]]:
        """Neighbour lists indexed by vertex label (index 0 unused)."""
        return _adjacency(self.n, self.edges)

    def degree(self, v: int) -> int:
        """Number of neighbours of vertex v."""
        return len(self.adjacency[v])

    def leaves(self) -> List[int]:
        """All degree-one vertices in increasing order."""
        return [v for v in range(1, self.n + 1) if len(self.adjacency[v]) == 1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledTree):
            return NotImplemented
        return self.n == other.n and self.edge_set == other.edge_set

    def __hash__(self) -> int:
        return hash((self.n, self.edge_set.pairs))

    def __str__(self) -> str:
        return format_tree(self)


def _adjacency(n: int, edges: Iterable[Edge]) -> List[List[int]]:
    adjacency: List[List[int]] = [[] for _ in range(n + 1)]
    for u, v in edges:
        adjacency[u].append(v)
        adjacency[v].append(u)
    return adjacency


def _check_tree(n: int, edges: Tuple[Edge, ...]):
    """Raise NotATree unless edges form a spanning tree of {1..n}."""
    if n < 2:
        raise NotATree(f"A tree needs at least 2 vertices, got n={n}")
    if len(edges) != n - 1:
        raise NotATree(f"A tree on {n} vertices has {n - 1} edges, got {len(edges)}")

    seen = set()
    for u, v in edges:
        if not (1 <= u <= n and 1 <= v <= n):
            raise NotATree(f"Edge {u}-{v} has a label outside 1..{n}")
        if u == v:
            raise NotATree(f"Self-loop at vertex {u}")
        if (u, v) in seen:
            raise NotATree(f"Duplicate edge {u}-{v}")
        seen.add((u, v))

    # n - 1 distinct edges reaching all n vertices cannot contain a cycle
    adjacency = _adjacency(n, edges)
    visited = bytearray(n + 1)
    visited[1] = 1
    queue = deque([1])
    reached = 1
    while queue:
        u = queue.popleft()
        for w in adjacency[u]:
            if not visited[w]:
                visited[w] = 1
                reached += 1
                queue.append(w)
    if reached != n:
        raise NotATree(f"Edges are disconnected: only {reached} of {n} vertices reachable from 1")


def validate_tree(n: int, edges: Iterable[Tuple[int, int]]) -> LabeledTree:
    """
    Validate an edge list and build a LabeledTree.

    Args:
        n: Number of vertices (labels 1..n)
        edges: Unordered vertex pairs

    Returns:
        The validated tree

    Raises:
        NotATree: On wrong edge count, cycle, disconnection, bad label,
            self-loop or duplicate edge
    """
    return LabeledTree(n, tuple(edges))


def tree_distance(tree: LabeledTree, other: LabeledTree) -> int:
    """
    Number of edges of one tree that are absent from the other.

    Args:
        tree: First tree
        other: Second tree on the same vertex count

    Returns:
        n - 1 - |E(T) & E(T*)|, an integer in 0..n-1

    Raises:
        SizeMismatch: If the vertex counts differ
    """
    if tree.n != other.n:
        raise SizeMismatch(f"Cannot compare trees on {tree.n} and {other.n} vertices")
    return tree.n - 1 - len(tree.edge_set & other.edge_set)


def shared_edges(tree: LabeledTree, other: LabeledTree) -> EdgeSet:
    """Edges common to both trees."""
    if tree.n != other.n:
        raise SizeMismatch(f"Cannot compare trees on {tree.n} and {other.n} vertices")
    return tree.edge_set & other.edge_set


def format_tree(tree: LabeledTree) -> str:
    """Render a tree as `n; u1-v1, u2-v2, ...` keeping stored edge order."""
    return f"{tree.n}; " + ", ".join(f"{u}-{v}" for u, v in tree.edges)


def parse_tree(line: str, line_number: int = 1) -> LabeledTree:
    """
    Parse one `n; u1-v1, u2-v2, ...` line.

    Raises:
        TreeFormatError: If the line is syntactically malformed
        NotATree: If the edges do not form a tree (message carries the line number)
    """
    head, sep, body = line.partition(";")
    if not sep:
        raise TreeFormatError("expected 'n; u-v, ...'", line_number)
    try:
        n = int(head.strip())
    except ValueError:
        raise TreeFormatError(f"vertex count {head.strip()!r} is not an integer", line_number)

    edges = []
    for token in filter(None, (t.strip() for t in body.split(","))):
        left, dash, right = token.partition("-")
        if not dash:
            raise TreeFormatError(f"edge {token!r} is not of the form u-v", line_number)
        try:
            edges.append((int(left), int(right)))
        except ValueError:
            raise TreeFormatError(f"edge {token!r} has a non-integer endpoint", line_number)

    try:
        return validate_tree(n, edges)
    except NotATree as e:
        raise NotATree(f"line {line_number}: {e}") from e


def read_trees(path: str | Path) -> List[LabeledTree]:
    """Read a tree file, one tree per line; blank lines and '#' comments are skipped."""
    trees = []
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, 1):
            line = raw.strip()
            if line and not line.startswith("#"):
                trees.append(parse_tree(line, number))
    return trees
