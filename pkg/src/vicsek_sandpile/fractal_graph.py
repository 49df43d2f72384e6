"""Finite Vicsek fractal graphs and their structural queries.

The level-0 graph is the complete graph K4 on the unit square
{(0,0),(1,0),(0,1),(1,1)}.  Level n is the union of five shifted copies of
level n-1 placed at offsets (0,0), (L,L), (2L,0), (0,2L), (2L,2L) with
L = 3^(n-1), so the level-n graph lives on the lattice square [0, 3^n]^2.
It has 3*5^n + 1 vertices and 6*5^n edges; every vertex has degree 3 (corner
of a single K4 block) or degree 6 (cutpoint shared by exactly two blocks).

The diagonal chain D_n is the union of the 3^n complete blocks
K^i = {(i-1,i-1), (i-1,i), (i,i-1), (i,i)}.  Vertices split into the exact
diagonal (x = y), the 1-offset diagonal (|x - y| = 1), and branch vertices
(|x - y| > 1) that hang off the chain in subtrees rooted at 1-offset
vertices.  All mass flowing to the sink (3^n, 3^n) crosses the chain, which
is what makes the nested-volume analysis in the other modules work.
"""

from __future__ import annotations

import os
from collections import deque
from enum import Enum
from functools import lru_cache

import numpy as np

Coord = tuple[int, int]

DEFAULT_LEVEL_CAP = 6
LEVEL_CAP_ENV = "SANDPILE_LEVEL_CAP"


class CapacityError(ValueError):
    """Requested level exceeds the configured build cap."""


def level_cap() -> int:
    """Current build cap; the environment variable overrides the default."""
    raw = os.environ.get(LEVEL_CAP_ENV)
    if raw is None:
        return DEFAULT_LEVEL_CAP
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{LEVEL_CAP_ENV} must be an integer, got {raw!r}") from exc


class DiagonalClass(Enum):
    DIAGONAL_D0 = "diagonal"
    OFFSET_D1 = "offset"
    BRANCH = "branch"


class VicsekGraph:
    """Immutable level-n Vicsek graph with dense canonical vertex indexing.

    Vertices are ordered lexicographically by (x, y); the sink (3^n, 3^n) is
    always the last index.  Adjacency is stored both as per-vertex sorted
    neighbor lists and as flat CSR-style arrays for vectorized consumers.
    """

    def __init__(self, level: int, vertices: list[Coord], edges: set[frozenset]):
        self.level = level
        self.side = 3**level
        self.sink: Coord = (self.side, self.side)
        self.vertices = vertices
        self.index: dict[Coord, int] = {v: i for i, v in enumerate(vertices)}
        self.sink_index = self.index[self.sink]

        nbrs: list[list[int]] = [[] for _ in vertices]
        for e in edges:
            a, b = tuple(e)
            ia, ib = self.index[a], self.index[b]
            nbrs[ia].append(ib)
            nbrs[ib].append(ia)
        for lst in nbrs:
            lst.sort()
        self.neighbors = nbrs
        self.degrees = np.array([len(lst) for lst in nbrs], dtype=np.int64)

        self.indptr = np.zeros(len(vertices) + 1, dtype=np.int64)
        np.cumsum(self.degrees, out=self.indptr[1:])
        self.nbr_indices = np.fromiter(
            (w for lst in nbrs for w in lst), dtype=np.int64, count=int(self.indptr[-1])
        )

        # K^i blocks along the diagonal, i = 1 .. 3^n.
        self.copy_registry: list[tuple[int, int, int, int]] = [
            tuple(
                self.index[c]
                for c in ((i - 1, i - 1), (i - 1, i), (i, i - 1), (i, i))
            )
            for i in range(1, self.side + 1)
        ]

        self._engine_cache: dict | None = None  # filled lazily by the sandpile engine
        self._dist_to_sink: np.ndarray | None = None

    def __repr__(self) -> str:
        return (
            f"VicsekGraph(level={self.level}, vertices={len(self.vertices)}, "
            f"edges={self.num_edges})"
        )

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return int(self.degrees.sum()) // 2

    def contains(self, v: Coord) -> bool:
        return v in self.index

    def vertex_index(self, v: Coord) -> int:
        try:
            return self.index[v]
        except KeyError:
            raise ValueError(f"{v} is not a vertex of the level-{self.level} graph")

    def degree(self, v: Coord) -> int:
        return int(self.degrees[self.vertex_index(v)])

    def neighbors_of(self, v: Coord) -> list[Coord]:
        return [self.vertices[w] for w in self.neighbors[self.vertex_index(v)]]

    def distances_from(self, source: int) -> np.ndarray:
        """BFS distance array from one vertex index (-1 for unreachable)."""
        dist = np.full(self.num_vertices, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        indptr, nbr = self.indptr, self.nbr_indices
        while queue:
            u = queue.popleft()
            du = dist[u]
            for w in nbr[indptr[u] : indptr[u + 1]]:
                if dist[w] < 0:
                    dist[w] = du + 1
                    queue.append(w)
        return dist

    def distance_to_sink(self) -> np.ndarray:
        if self._dist_to_sink is None:
            self._dist_to_sink = self.distances_from(self.sink_index)
        return self._dist_to_sink


def _shift(points, dx: int, dy: int):
    return [(x + dx, y + dy) for x, y in points]


@lru_cache(maxsize=None)
def _build_uncapped(level: int) -> VicsekGraph:
    base = [(0, 0), (1, 0), (0, 1), (1, 1)]
    verts: set[Coord] = set(base)
    edges: set[frozenset] = {
        frozenset((a, b)) for i, a in enumerate(base) for b in base[i + 1 :]
    }
    for k in range(1, level + 1):
        shift = 3 ** (k - 1)
        offsets = [
            (0, 0),
            (shift, shift),
            (2 * shift, 0),
            (0, 2 * shift),
            (2 * shift, 2 * shift),
        ]
        verts = {
            (x + dx, y + dy) for dx, dy in offsets for x, y in verts
        }
        edges = {
            frozenset(((a[0] + dx, a[1] + dy), (b[0] + dx, b[1] + dy)))
            for dx, dy in offsets
            for a, b in map(tuple, edges)
        }
    return VicsekGraph(level, sorted(verts), edges)


def build(level: int) -> VicsekGraph:
    """Construct the level-n Vicsek graph (recursive five-copy union)."""
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level}")
    cap = level_cap()
    if level > cap:
        raise CapacityError(f"level {level} exceeds the build cap {cap}")
    return _build_uncapped(level)


def classify(g: VicsekGraph, v: Coord) -> DiagonalClass:
    """Diagonal / 1-offset / branch classification of a vertex by |x - y|."""
    x, y = g.vertices[g.vertex_index(v)]
    gap = abs(x - y)
    if gap == 0:
        return DiagonalClass.DIAGONAL_D0
    if gap == 1:
        return DiagonalClass.OFFSET_D1
    return DiagonalClass.BRANCH


def diagonal_vertices(g: VicsekGraph) -> set[Coord]:
    """Vertex set of the diagonal chain D_n (|x - y| <= 1)."""
    return {(x, y) for x, y in g.vertices if abs(x - y) <= 1}


def branch_component(g: VicsekGraph, x: Coord) -> set[Coord]:
    """Subtree hanging off a 1-offset vertex, away from the diagonal chain.

    Returns the vertex set of the connected component of g minus {x}
    containing no chain vertex; empty when every neighbor of x lies on the
    chain.
    """
    xi = g.vertex_index(x)
    if classify(g, x) is not DiagonalClass.OFFSET_D1:
        raise ValueError(f"{x} is not a 1-offset diagonal vertex")
    off_chain = [
        w for w in g.neighbors[xi] if abs(g.vertices[w][0] - g.vertices[w][1]) > 1
    ]
    seen: set[int] = set()
    queue = deque(off_chain)
    seen.update(off_chain)
    while queue:
        u = queue.popleft()
        for w in g.neighbors[u]:
            if w != xi and w not in seen:
                seen.add(w)
                queue.append(w)
    component = {g.vertices[w] for w in seen}
    # the component of x away from the diagonal contains no chain vertex
    assert all(abs(a - b) > 1 for a, b in component)
    return component


def geodesic_to_sink(g: VicsekGraph, x: Coord) -> list[Coord]:
    """The unique shortest path from x to the sink (shown unique in tests)."""
    xi = g.vertex_index(x)
    dist = g.distance_to_sink()
    path = [xi]
    u = xi
    while u != g.sink_index:
        down = [w for w in g.neighbors[u] if dist[w] == dist[u] - 1]
        assert len(down) == 1, f"non-unique geodesic step at {g.vertices[u]}"
        u = down[0]
        path.append(u)
    return [g.vertices[i] for i in path]


def descendants(g: VicsekGraph, x: Coord) -> set[Coord]:
    """Vertices whose geodesic to the sink passes through x (x excluded)."""
    xi = g.vertex_index(x)
    dist_sink = g.distance_to_sink()
    dist_x = g.distances_from(xi)
    mask = dist_sink == dist_x + dist_sink[xi]
    mask[xi] = False
    return {g.vertices[i] for i in np.nonzero(mask)[0]}


def geodesic_subgraph(g: VicsekGraph, x: Coord) -> set[Coord]:
    """Vertices within distance 1 of the geodesic from x to the sink, minus
    descendants of x: the chain of K4 blocks linking x to the sink."""
    if x == g.sink:
        raise ValueError("the sink has no geodesic subgraph")
    path = {g.vertex_index(v) for v in geodesic_to_sink(g, x)}
    ball = set(path)
    for u in path:
        ball.update(int(w) for w in g.neighbors[u])
    coords = {g.vertices[i] for i in ball}
    return coords - descendants(g, x)


def graph_distance(g: VicsekGraph, v: Coord, w: Coord) -> int:
    """Shortest-path distance between two vertices."""
    vi, wi = g.vertex_index(v), g.vertex_index(w)
    if vi == wi:
        return 0
    dist = g.distances_from(vi)
    return int(dist[wi])


def ternary_digits(n: int) -> list[int]:
    """Base-3 digits of n, least significant first ([] for n = 0)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    digits = []
    while n:
        n, r = divmod(n, 3)
        digits.append(r)
    return digits


def kappa(n: int) -> int:
    """Sum of 3^i over the positions i where the ternary digit of n is nonzero.

    Clamping each digit to at most 1 gives the largest ternary-0/1 number
    obtainable digitwise, i.e. kappa(n) <= n with equality iff no digit is 2.
    """
    return sum(3**i for i, a in enumerate(ternary_digits(n)) if a >= 1)


def has_ternary_digit_two(n: int) -> bool:
    return any(a == 2 for a in ternary_digits(n))
