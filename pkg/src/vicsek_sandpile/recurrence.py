"""Recurrent configurations: burning test, burning bijection, uniform
spanning trees, and samplers for the infinite-volume limit.

A stable configuration is recurrent exactly when the burning test passes:
add one particle to each vertex for every edge it shares with the sink,
stabilize, and check that every vertex toppled exactly once and the
configuration returned to its start.  Recurrent configurations are in
bijection with spanning trees rooted at the sink; sampling a uniform
spanning tree with Wilson's loop-erased-random-walk algorithm and mapping it
through the bijection therefore samples exactly uniformly from the
recurrent set.

Restricted to the diagonal chain, a uniform recurrent configuration looks
like independent uniform recurrent K4 blocks glued with three extra
particles at each shared cutpoint; ``sample_ivl_diagonal`` exploits that
structure directly (the fast path), while ``sample_recurrent`` goes through
the spanning-tree bijection without structural assumptions (the slow path
the tests validate the fast path against).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .fractal_graph import VicsekGraph, build
from .sandpile import SandpileConfig, is_stable, stabilize


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass
class SpanningTree:
    """Sink-rooted spanning tree given by the parent index of every other
    vertex; the edge to the parent is the unique first step toward the root.
    """

    parent: np.ndarray
    root: int

    def validate(self, g: VicsekGraph) -> None:
        n = g.num_vertices
        if len(self.parent) != n or self.root != g.sink_index:
            raise ValueError("tree does not match the graph")
        depth = np.full(n, -1, dtype=np.int64)
        depth[self.root] = 0
        for v in range(n):
            if depth[v] >= 0:
                continue
            trail = []
            u = v
            while depth[u] < 0:
                trail.append(u)
                p = int(self.parent[u])
                if p < 0 or p >= n or u == p:
                    raise ValueError(f"malformed tree at vertex {g.vertices[u]}")
                if p not in g.neighbors[u]:
                    raise ValueError(
                        f"tree edge {g.vertices[u]}-{g.vertices[p]} is not a graph edge"
                    )
                u = p
                if len(trail) > n:
                    raise ValueError("tree contains a cycle")
            base = depth[u]
            for k, w in enumerate(reversed(trail)):
                depth[w] = base + k + 1
        self._depth = depth

    def depths(self, g: VicsekGraph) -> np.ndarray:
        if not hasattr(self, "_depth"):
            self.validate(g)
        return self._depth

    def edge_set(self) -> frozenset:
        return frozenset(
            frozenset((v, int(p)))
            for v, p in enumerate(self.parent)
            if v != self.root
        )


class EdgeOrder:
    """Total order on the edges at each vertex; the burning bijection works
    for any fixed choice.  The default ranks an edge by the canonical index
    of its far endpoint."""

    def rank(self, v: int, w: int) -> int:
        return w


class PermutedEdgeOrder(EdgeOrder):
    """Edge order twisted by a fixed permutation of vertex indices (used to
    check that the bijection holds for other orders too)."""

    def __init__(self, perm):
        self.perm = perm

    def rank(self, v: int, w: int) -> int:
        return int(self.perm[w])


def is_recurrent(g: VicsekGraph, c: SandpileConfig) -> bool:
    """Dhar's burning test; input must be stable."""
    if not is_stable(g, c):
        raise ValueError("the burning test applies to stable configurations only")
    arrays_sink = _sink_degree_vector(g)
    burned, report = stabilize(g, SandpileConfig(c.heights + arrays_sink))
    return bool(np.all(report.odometer == 1)) and burned == c


def _sink_degree_vector(g: VicsekGraph) -> np.ndarray:
    out = np.zeros(g.num_vertices - 1, dtype=np.int64)
    for w in g.neighbors[g.sink_index]:
        out[w] += 1
    return out


def enumerate_recurrent_k4() -> list[SandpileConfig]:
    """All recurrent configurations of the level-0 graph (sink top-right),
    found by brute force over the 27 stable triples."""
    g = build(0)
    out = []
    for heights in product(range(3), repeat=3):
        c = SandpileConfig(heights)
        if is_recurrent(g, c):
            out.append(c)
    return out


def tree_to_config(
    g: VicsekGraph, tree: SpanningTree, order: EdgeOrder | None = None
) -> SandpileConfig:
    """Burning bijection: height of v is deg(v) - 1 minus the number of
    neighbors strictly more than one level above v in the tree, minus the
    number of same-level-above neighbors whose edge precedes the parent edge.
    """
    if order is None:
        order = EdgeOrder()
    tree.validate(g)
    depth = tree.depths(g)
    heights = np.zeros(g.num_vertices - 1, dtype=np.int64)
    for v in range(g.num_vertices - 1):
        lv = depth[v]
        parent_rank = order.rank(v, int(tree.parent[v]))
        a = b = 0
        for w in g.neighbors[v]:
            if depth[w] < lv - 1:
                a += 1
            elif depth[w] == lv - 1 and order.rank(v, w) < parent_rank:
                b += 1
        heights[v] = g.degrees[v] - 1 - a - b
    return SandpileConfig(heights)


class _UniformPool:
    """Batched exact uniform integers in [0, d); one pool per degree value."""

    def __init__(self, rng: np.random.Generator, chunk: int = 8192):
        self.rng = rng
        self.chunk = chunk
        self.pools: dict[int, np.ndarray] = {}
        self.used: dict[int, int] = {}

    def draw(self, d: int) -> int:
        pos = self.used.get(d, 0)
        pool = self.pools.get(d)
        if pool is None or pos >= len(pool):
            pool = self.rng.integers(0, d, size=self.chunk)
            self.pools[d] = pool
            pos = 0
        self.used[d] = pos + 1
        return int(pool[pos])


def wilson_ust(g: VicsekGraph, rng) -> SpanningTree:
    """Uniform spanning tree rooted at the sink via loop-erased random walks.

    Walks are run from each unvisited vertex in index order; the successor
    array implicitly erases loops (a revisited vertex overwrites its old
    successor), which is Wilson's cycle-popping formulation.
    """
    rng = _as_generator(rng)
    n = g.num_vertices
    root = g.sink_index
    in_tree = np.zeros(n, dtype=bool)
    in_tree[root] = True
    parent = np.full(n, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    pool = _UniformPool(rng)
    indptr, nbr, deg = g.indptr, g.nbr_indices, g.degrees
    for start in range(n):
        if in_tree[start]:
            continue
        u = start
        while not in_tree[u]:
            r = pool.draw(int(deg[u]))
            v = int(nbr[indptr[u] + r])
            nxt[u] = v
            u = v
        u = start
        while not in_tree[u]:
            parent[u] = nxt[u]
            in_tree[u] = True
            u = int(nxt[u])
    return SpanningTree(parent=parent, root=root)


def sample_recurrent(g: VicsekGraph, rng) -> SandpileConfig:
    """Exactly uniform sample from the recurrent configurations."""
    return tree_to_config(g, wilson_ust(g, rng))


def sample_ivl_diagonal(m: int, rng) -> list[SandpileConfig]:
    """m independent uniform recurrent K4 blocks, the restriction of the
    infinite-volume limit to consecutive diagonal blocks (before the +3
    cutpoint gluing applied at assembly)."""
    if m < 1:
        raise ValueError("need at least one block")
    rng = _as_generator(rng)
    table = enumerate_recurrent_k4()
    picks = rng.integers(0, len(table), size=m)
    return [table[i] for i in picks]


def assemble_diagonal(g: VicsekGraph, parts: list[SandpileConfig]) -> SandpileConfig:
    """Glue per-block K4 configurations onto the diagonal chain of g, adding
    three particles at each interior cutpoint (i, i); zero elsewhere.

    Block j contributes its (bottom-left, top-left, bottom-right) heights at
    (j-1, j-1), (j-1, j), (j, j-1); the block's top-right corner is the next
    cutpoint and is owned by block j+1.
    """
    m = len(parts)
    if m > 3**g.level:
        raise ValueError(f"{m} blocks do not fit on a level-{g.level} diagonal")
    heights = np.zeros(g.num_vertices - 1, dtype=np.int64)
    for j, part in enumerate(parts, start=1):
        if len(part.heights) != 3:
            raise ValueError("diagonal parts must be level-0 configurations")
        bl, tl, br = (int(h) for h in part.heights)  # canonical: (0,0),(0,1),(1,0)
        bump = 3 if j > 1 else 0
        heights[g.vertex_index((j - 1, j - 1))] = bl + bump
        heights[g.vertex_index((j - 1, j))] = tl
        heights[g.vertex_index((j, j - 1))] = br
    return SandpileConfig(heights)
