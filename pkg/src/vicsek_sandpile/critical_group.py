"""The sandpile group as the cokernel of the reduced Laplacian.

Deleting the sink row and column of the graph Laplacian leaves a symmetric,
diagonally dominant integer matrix whose cokernel is the group of recurrent
configurations under add-and-stabilize.  Its Smith normal form gives the
invariant factors; on the level-n Vicsek graph these are 5^n - 1 ones
followed by 2*5^n fours, i.e. the group is (Z/4)^(2*5^n) and the number of
spanning trees is 16^(5^n).

The Smith normal form is computed by exact integer elimination with
minimal-absolute-value pivoting and the usual divisibility repair (add an
offending row into the pivot row and re-eliminate).  Row operations run
vectorized on int64 with an explicit magnitude guard; if a computation ever
approaches the word size it is redone with arbitrary-precision integers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fractal_graph import CapacityError, Coord, VicsekGraph, build
from .recurrence import _as_generator, is_recurrent, sample_recurrent
from .sandpile import SandpileConfig, add_particles, group_add, stabilize

SNF_LEVEL_CAP = 3

_INT64_GUARD = 2**60


class SingularMatrixError(ArithmeticError):
    """Input matrix is rank deficient."""


def reduced_laplacian(g: VicsekGraph) -> np.ndarray:
    """Graph Laplacian with the sink row and column removed."""
    n = g.num_vertices - 1
    out = np.zeros((n, n), dtype=np.int64)
    for v in range(n):
        out[v, v] = g.degrees[v]
        for w in g.neighbors[v]:
            if w != g.sink_index:
                out[v, w] -= 1
    return out


class _Int64Overflow(Exception):
    pass


def _snf_diagonal(mat: np.ndarray) -> list[int]:
    """Diagonalize by unimodular row/column operations; returns the diagonal
    in divisibility order.  Works elementwise for int64 and object dtypes."""
    A = mat.copy()
    n, m = A.shape
    guard = A.dtype == np.int64
    diag: list[int] = []
    for t in range(min(n, m)):
        sub = A[t:, t:]
        while True:
            nonzero = np.nonzero(sub)
            if len(nonzero[0]) == 0:
                raise SingularMatrixError("matrix is rank deficient")
            absvals = abs(sub[nonzero])
            k = int(np.argmin(absvals))
            pi, pj = int(nonzero[0][k]) + t, int(nonzero[1][k]) + t
            if pi != t:
                A[[t, pi], :] = A[[pi, t], :]
            if pj != t:
                A[:, [t, pj]] = A[:, [pj, t]]
            pivot = A[t, t]
            if pivot < 0:
                A[t, :] = -A[t, :]
                pivot = A[t, t]
            if guard and int(abs(A[t:, t:]).max()) ** 2 > _INT64_GUARD:
                raise _Int64Overflow
            col = A[t + 1 :, t]
            rows = np.nonzero(col)[0]
            if len(rows):
                q = col[rows] // pivot
                A[t + 1 :, :][rows] -= np.outer(q, A[t, :])
            row = A[t, t + 1 :]
            cols = np.nonzero(row)[0]
            if len(cols):
                q = row[cols] // pivot
                A[:, t + 1 :][:, cols] -= np.outer(A[:, t], q)
            if np.any(A[t + 1 :, t]) or np.any(A[t, t + 1 :]):
                continue  # remainders left behind; re-pivot on a smaller entry
            rem = A[t + 1 :, t + 1 :] % pivot
            bad = np.nonzero(rem)
            if len(bad[0]) == 0:
                break
            # fold a non-divisible row into the pivot row and start over
            A[t, :] += A[t + 1 + int(bad[0][0]), :]
        diag.append(int(A[t, t]))
    return diag


@dataclass(frozen=True)
class InvariantFactors:
    """Non-decreasing divisibility chain d1 | d2 | ... | dr, units included."""

    factors: tuple[int, ...]

    def __post_init__(self):
        if any(d <= 0 for d in self.factors):
            raise ValueError("invariant factors must be positive")
        for a, b in zip(self.factors, self.factors[1:]):
            if b % a != 0:
                raise ValueError(f"broken divisibility chain: {a} does not divide {b}")

    def __iter__(self):
        return iter(self.factors)

    def __len__(self):
        return len(self.factors)

    def product(self) -> int:
        out = 1
        for d in self.factors:
            out *= d
        return out

    def nonunit(self) -> tuple[int, ...]:
        return tuple(d for d in self.factors if d != 1)


def smith_normal_form(mat) -> InvariantFactors:
    """Invariant factors of a square non-singular integer matrix."""
    A = np.asarray(mat)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("need a square matrix")
    if A.dtype.kind not in "iuO":
        raise ValueError("matrix entries must be integers")
    try:
        diag = _snf_diagonal(A.astype(np.int64))
    except (OverflowError, _Int64Overflow):
        obj = np.empty(A.shape, dtype=object)
        for i in range(A.shape[0]):
            for j in range(A.shape[1]):
                obj[i, j] = int(A[i, j])
        diag = _snf_diagonal(obj)
    return InvariantFactors(tuple(diag))


def group_structure(level: int) -> InvariantFactors:
    """Invariant factors of the sandpile group at the given level."""
    if level < 0:
        raise ValueError("level must be non-negative")
    if level > SNF_LEVEL_CAP:
        raise CapacityError(
            f"group structure is computed exactly up to level {SNF_LEVEL_CAP}"
        )
    return smith_normal_form(reduced_laplacian(build(level)))


def order2_count(level: int) -> int:
    """Number of group elements killed by doubling, from the invariant
    factors: the product of gcd(d, 2) over the factor list."""
    out = 1
    for d in group_structure(level):
        out *= 2 if d % 2 == 0 else 1
    return out


def element_order(g: VicsekGraph, eta: SandpileConfig, identity: SandpileConfig) -> int:
    """Order of a recurrent configuration in the sandpile group, by repeated
    doubling; on Vicsek graphs every order divides 4."""
    if not is_recurrent(g, eta):
        raise ValueError("element order is defined for recurrent configurations")
    if eta == identity:
        return 1
    squared = group_add(g, eta, eta)
    if squared == identity:
        return 2
    fourth = group_add(g, squared, squared)
    if fourth == identity:
        return 4
    raise ArithmeticError("element order exceeds 4; not a Vicsek sandpile group?")


@dataclass
class SinkHitEstimate:
    """Empirical probability that k added particles push mass into the sink."""

    x: Coord
    k: int
    samples: int
    hits: int
    estimate: float
    stderr: float


def sink_hit_probability(
    g: VicsekGraph, x: Coord, k: int, samples: int, rng
) -> SinkHitEstimate:
    """Sample uniform recurrent configurations, add k particles at x, and
    record how often stabilization delivers at least one particle to the
    sink.  With k = 4 this happens every time, because four particles at any
    vertex act as the group identity and their stabilization sweeps the whole
    graph."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if x == g.sink:
        raise ValueError("x must differ from the sink")
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = _as_generator(rng)
    hits = 0
    for _ in range(samples):
        eta = sample_recurrent(g, rng)
        _, report = stabilize(g, add_particles(g, eta, x, k))
        if report.sink_particles >= 1:
            hits += 1
    p = hits / samples
    stderr = float(np.sqrt(max(p * (1 - p), 1e-300) / samples))
    return SinkHitEstimate(
        x=x, k=k, samples=samples, hits=hits, estimate=p, stderr=stderr
    )
