"""Exact analysis of the nested-volume particle chain.

Adding one particle at the origin of a configuration sampled from the
infinite-volume limit and stabilizing block by block along the diagonal
chain produces a Markov chain X_i on {0,...,4}: the number of particles
arriving at the cutpoint (i, i).  State 0 means the avalanche died
(stabilization), state 4 persists forever (explosion).  The one-step
transition law follows from the 16 equally likely recurrent K4 blocks and
is computed here by running the sandpile engine on every (block, added)
pair, never hard-coded.

Everything downstream is exact rational arithmetic: absorption
probabilities, k-step distributions (all entries have denominator 16^k, so
the internal representation keeps integer numerators at that denominator),
probabilities of time-constrained trajectories, and the avalanche-radius
probability mass function.  Floating point appears only in the closed-form
eigenvalue cross-check, whose eigenvalues (5 +- sqrt(13))/16 are irrational.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .fractal_graph import build, has_ternary_digit_two, kappa
from .recurrence import enumerate_recurrent_k4, _as_generator
from .sandpile import SandpileConfig, _chain_flow, stabilize

STATES = (0, 1, 2, 3, 4)


class SingularMatrixError(ArithmeticError):
    """The absorption system was singular (corrupted transition matrix)."""


@dataclass(frozen=True)
class TransitionMatrix:
    """5x5 stochastic matrix of exact rationals, rows indexed by state."""

    rows: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        if len(self.rows) != 5 or any(len(r) != 5 for r in self.rows):
            raise ValueError("transition matrix must be 5x5")
        for r in self.rows:
            if any(p < 0 for p in r):
                raise ValueError("negative transition probability")
            if sum(r) != 1:
                raise ValueError("rows must sum to one")

    def __getitem__(self, state: int) -> tuple[Fraction, ...]:
        return self.rows[state]

    def as_floats(self) -> np.ndarray:
        return np.array([[float(p) for p in row] for row in self.rows])

    def scaled_by_16(self) -> list[list[int]]:
        """Integer matrix 16*P; every entry of P has denominator dividing 16."""
        out = []
        for row in self.rows:
            ints = []
            for p in row:
                q = p * 16
                if q.denominator != 1:
                    raise ValueError("entry denominator does not divide 16")
                ints.append(q.numerator)
            out.append(ints)
        return out


def k4_transition_table() -> dict[tuple[tuple[int, int, int], int], int]:
    """Particles collected at the sink of a K4 block, for every recurrent
    block configuration and every number of particles added at the corner
    opposite the sink.  Computed with the sandpile engine."""
    g = build(0)
    origin = (0, 0)
    oi = g.vertex_index(origin)
    table: dict[tuple[tuple[int, int, int], int], int] = {}
    for config in enumerate_recurrent_k4():
        for added in (1, 2, 3, 4):
            bumped = config.heights.copy()
            bumped[oi] += added
            _, report = stabilize(g, SandpileConfig(bumped))
            table[(config.as_tuple(), added)] = report.sink_particles
    return table


@lru_cache(maxsize=1)
def transition_matrix() -> TransitionMatrix:
    """One-step law of the nested-volume chain: rows 1..4 average the
    collected-particle counts over the 16 equally likely blocks; 0 is
    absorbing.  Derived from engine stabilizations on first use and cached
    (the result is immutable)."""
    table = k4_transition_table()
    configs = sorted({key[0] for key in table})
    rows: list[tuple[Fraction, ...]] = [
        tuple(Fraction(1 if j == 0 else 0) for j in STATES)
    ]
    for added in (1, 2, 3, 4):
        counts = [0] * 5
        for c in configs:
            counts[table[(c, added)]] += 1
        rows.append(tuple(Fraction(k, len(configs)) for k in counts))
    return TransitionMatrix(rows=tuple(rows))


def absorption_probabilities(matrix: TransitionMatrix | None = None) -> tuple[Fraction, ...]:
    """Probability of reaching 0 before 4 from each start state, solved
    exactly from the harmonicity system with boundary values x0=1, x4=0."""
    P = matrix if matrix is not None else transition_matrix()
    # unknowns x1,x2,x3:  (I - Q) x = r where r is the one-step mass to 0
    A = [
        [
            (Fraction(1) if i == j else Fraction(0)) - P[i + 1][j + 1]
            for j in range(3)
        ]
        for i in range(3)
    ]
    b = [P[i + 1][0] for i in range(3)]
    x = _solve_exact(A, b)
    return (Fraction(1), *x, Fraction(0))


def _solve_exact(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    n = len(A)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if M[r][col] != 0), None)
        if pivot is None:
            raise SingularMatrixError("singular absorption system")
        M[col], M[pivot] = M[pivot], M[col]
        inv = 1 / M[col][col]
        M[col] = [v * inv for v in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [v - f * w for v, w in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


def stabilization_probability() -> Fraction:
    """Chance that one added particle at the origin stabilizes (start X0=1)."""
    return absorption_probabilities()[1]


# ---------------------------------------------------------------------------
# k-step distributions: exact and closed-form.
# ---------------------------------------------------------------------------


def _step_numerators(vec: list[int], p16: list[list[int]]) -> list[int]:
    return [
        sum(vec[i] * p16[i][j] for i in range(5) if vec[i])
        for j in range(5)
    ]


def k_step_distribution(start: int, k: int, matrix: TransitionMatrix | None = None) -> tuple[Fraction, ...]:
    """Row `start` of the k-th matrix power, exactly."""
    if start not in STATES:
        raise ValueError(f"start state must be in 0..4, got {start}")
    if k < 0:
        raise ValueError("k must be non-negative")
    P = matrix if matrix is not None else transition_matrix()
    p16 = P.scaled_by_16()
    vec = [1 if j == start else 0 for j in STATES]
    for _ in range(k):
        vec = _step_numerators(vec, p16)
    den = 16**k
    return tuple(Fraction(v, den) for v in vec)


_SQRT13 = math.sqrt(13.0)
_LAMBDA_PLUS = (5.0 + _SQRT13) / 16.0
_LAMBDA_MINUS = (5.0 - _SQRT13) / 16.0

# Spectral form of the k-step law for k >= 1:  constant + c+ l+^k + c- l-^k.
# Coefficients (constant, a, b) encode a + b*sqrt(13) over the common
# denominator 52 for the two eigenvalue terms.
_CLOSED_FORM_START1 = {
    0: (Fraction(3, 4), (-13, -3), (-13, 3)),
    1: (Fraction(0), (13, 1), (13, -1)),
    2: (Fraction(0), (0, 4), (0, -4)),
    3: (Fraction(0), (13, 1), (13, -1)),
    4: (Fraction(1, 4), (-13, -3), (-13, 3)),
}
_CLOSED_FORM_START2 = {
    0: (Fraction(1, 2), (-13, -5), (-13, 5)),
    1: (Fraction(0), (0, 6), (0, -6)),
    2: (Fraction(0), (26, -2), (26, 2)),
    3: (Fraction(0), (0, 6), (0, -6)),
    4: (Fraction(1, 2), (-13, -5), (-13, 5)),
}


def k_step_closed_form(start: int, k: int) -> tuple[float, ...]:
    """Closed-form k-step law (k >= 1) via the eigenvalues (5 +- sqrt 13)/16.

    Only the start-1 and start-2 coefficient blocks are stored: the chain
    commutes with the state flip j -> 4-j, which covers start state 3, and
    the absorbing states are constant.
    """
    if k < 1:
        raise ValueError("the closed form holds for k >= 1")
    if start == 0 or start == 4:
        return tuple(1.0 if j == start else 0.0 for j in STATES)
    if start == 3:
        flipped = k_step_closed_form(1, k)
        return tuple(reversed(flipped))
    coeffs = _CLOSED_FORM_START1 if start == 1 else _CLOSED_FORM_START2
    lam_p = _LAMBDA_PLUS**k
    lam_m = _LAMBDA_MINUS**k
    out = []
    for j in STATES:
        const, (ap, bp), (am, bm) = coeffs[j]
        term_p = (ap + bp * _SQRT13) / 52.0
        term_m = (am + bm * _SQRT13) / 52.0
        out.append(float(const) + term_p * lam_p + term_m * lam_m)
    return tuple(out)


# ---------------------------------------------------------------------------
# Constrained trajectories and the avalanche-radius distribution.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainEvent:
    """Conjunction of constraints X_t in S_t at strictly increasing times."""

    constraints: tuple[tuple[int, frozenset[int]], ...]

    def __post_init__(self):
        times = [t for t, _ in self.constraints]
        if any(t < 1 for t in times):
            raise ValueError("constraint times must be >= 1")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("constraint times must be strictly increasing")
        for _, s in self.constraints:
            if not s or not s.issubset(set(STATES)):
                raise ValueError("constraint sets must be non-empty subsets of 0..4")

    @classmethod
    def of(cls, *constraints: tuple[int, set[int]]) -> "ChainEvent":
        merged: dict[int, frozenset[int]] = {}
        for t, s in constraints:
            fs = frozenset(s)
            merged[t] = merged[t] & fs if t in merged else fs
        items = tuple(sorted(merged.items()))
        if any(not s for _, s in items):
            raise ValueError("contradictory constraints at a shared time")
        return cls(items)


def path_probability(
    event: ChainEvent, start: int, matrix: TransitionMatrix | None = None
) -> Fraction:
    """Exact probability that the chain started at `start` satisfies every
    constraint of the event, via restricted forward propagation."""
    if start not in STATES:
        raise ValueError(f"start state must be in 0..4, got {start}")
    P = matrix if matrix is not None else transition_matrix()
    p16 = P.scaled_by_16()
    vec = [1 if j == start else 0 for j in STATES]
    t_prev = 0
    for t, allowed in event.constraints:
        for _ in range(t - t_prev):
            vec = _step_numerators(vec, p16)
        vec = [v if j in allowed else 0 for j, v in enumerate(vec)]
        t_prev = t
    return Fraction(sum(vec), 16**t_prev)


def _radius_events(n: int) -> tuple[ChainEvent, ChainEvent]:
    """The two disjoint trajectory events whose probabilities sum to the
    radius mass at n >= 1: the block midpoint at kappa(n-1) must topple
    (reached with 2-3 particles directly, or with exactly 1 particle twice),
    while the vertex at distance n+1 must not."""
    k = kappa(n - 1)
    first = ChainEvent.of((k + 1, {2, 3}), (n + 1, {0, 1}), (n + 2, {0}))
    second = ChainEvent.of(
        (k + 1, {1}), (k + 2, {1, 2, 3}), (n + 1, {0, 1}), (n + 2, {0})
    )
    return first, second


def radius_pmf(n: int, matrix: TransitionMatrix | None = None) -> Fraction:
    """Probability that the avalanche started by one particle at the origin
    has toppled-set diameter exactly n.

    n = 0 collects the no-topple and origin-only cases, including the factor
    3/8 for the two off-sink K4 corners staying quiet.  Radii whose ternary
    expansion contains a 2 are unreachable: the toppling that would realize
    them forces a strictly larger diameter.
    """
    if n < 0:
        raise ValueError("the radius is non-negative")
    P = matrix if matrix is not None else transition_matrix()
    if n == 0:
        p10, p11 = P[1][0], P[1][1]
        return p10 + Fraction(3, 8) * p11 * p10
    if has_ternary_digit_two(n):
        return Fraction(0)
    first, second = _radius_events(n)
    assert _events_disjoint(first, second), f"radius events overlap at n={n}"
    return path_probability(first, 1, P) + path_probability(second, 1, P)


def _events_disjoint(a: ChainEvent, b: ChainEvent) -> bool:
    """Audit check: two events are disjoint when some shared constraint time
    carries disjoint allowed sets."""
    times_a = dict(a.constraints)
    times_b = dict(b.constraints)
    return any(
        times_a[t].isdisjoint(times_b[t]) for t in times_a.keys() & times_b.keys()
    )


def radius_pmf_table(max_n: int, matrix: TransitionMatrix | None = None) -> list[tuple[int, Fraction]]:
    P = matrix if matrix is not None else transition_matrix()
    return [(n, radius_pmf(n, P)) for n in range(max_n + 1)]


def transient_mass(k: int, start: int = 1, matrix: TransitionMatrix | None = None) -> Fraction:
    """Exact probability of not being absorbed after k steps; bounds the
    truncation error of any analysis cut off at the k-th block."""
    dist = k_step_distribution(start, k, matrix)
    return dist[1] + dist[2] + dist[3]


# ---------------------------------------------------------------------------
# Monte Carlo cross-validation.
# ---------------------------------------------------------------------------


@dataclass
class MonteCarloEstimate:
    """Stabilization-probability estimate with its sampling uncertainty."""

    mode: str
    level: int
    trials: int
    stabilized: int
    exploded: int
    truncated: int
    estimate: float
    stderr: float

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "level": self.level,
            "trials": self.trials,
            "stabilized": self.stabilized,
            "exploded": self.exploded,
            "truncated": self.truncated,
            "estimate": self.estimate,
            "stderr": self.stderr,
        }


def _sixteenth_lut(matrix: TransitionMatrix) -> np.ndarray:
    """next_state = LUT[state, d] for d uniform on 0..15; exact because every
    transition probability is a multiple of 1/16."""
    p16 = matrix.scaled_by_16()
    lut = np.zeros((5, 16), dtype=np.int64)
    for s in STATES:
        draws = []
        for j, weight in enumerate(p16[s]):
            draws.extend([j] * weight)
        lut[s] = draws
    return lut


def _run_chain_trials(trials: int, max_steps: int, rng: np.random.Generator, lut: np.ndarray) -> tuple[int, int, int]:
    states = np.ones(trials, dtype=np.int64)
    active = np.arange(trials)
    for _ in range(max_steps):
        if len(active) == 0:
            break
        draws = rng.integers(0, 16, size=len(active))
        states[active] = lut[states[active], draws]
        live = (states[active] != 0) & (states[active] != 4)
        active = active[live]
    stabilized = int(np.count_nonzero(states == 0))
    exploded = int(np.count_nonzero(states == 4))
    return stabilized, exploded, trials - stabilized - exploded


def _run_sandpile_trials(trials: int, level: int, rng: np.random.Generator) -> tuple[int, int, int]:
    m = 3**level
    table = [c.as_tuple() for c in enumerate_recurrent_k4()]
    stabilized = exploded = truncated = 0
    picks_per_trial = rng.integers(0, len(table), size=(trials, m))
    for t in range(trials):
        heights = [0] * (3 * m + 1)
        picks = picks_per_trial[t]
        for j in range(m):
            bl, tl, br = table[picks[j]]
            base = 3 * j
            heights[base] = bl + (3 if j > 0 else 0)
            heights[base + 1] = tl
            heights[base + 2] = br
        heights[0] += 1  # the added particle at the origin
        counts = _chain_flow(heights, m, stop_at_absorption=True)
        last = counts[-1]
        if last == 0:
            stabilized += 1
        elif last == 4:
            exploded += 1
        else:
            truncated += 1
    return stabilized, exploded, truncated


def monte_carlo_stabilization(mode: str, level: int, trials: int, rng, workers: int = 1) -> MonteCarloEstimate:
    """Estimate the stabilization probability by simulation.

    chain mode simulates the particle-count chain from state 1 for at most
    3^level steps; sandpile mode assembles independent uniform K4 blocks on
    the diagonal of the level graph, adds one particle at the origin, and
    classifies the nested-volume flow by its absorbing value.  Workers split
    the trials over independent child random streams.
    """
    if mode not in ("chain", "sandpile"):
        raise ValueError(f"unknown mode {mode!r}")
    if trials < 1:
        raise ValueError("need at least one trial")
    if level < 0:
        raise ValueError("level must be non-negative")
    if mode == "sandpile":
        build(level)  # enforces the build cap
    rng = _as_generator(rng)

    chunks = _split_trials(trials, max(1, workers))
    streams = rng.spawn(len(chunks)) if len(chunks) > 1 else [rng]
    totals = [0, 0, 0]
    if len(chunks) == 1:
        totals = list(_run_trial_chunk(mode, level, trials, streams[0]))
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            for part in pool.map(
                _run_trial_chunk,
                [mode] * len(chunks),
                [level] * len(chunks),
                chunks,
                streams,
            ):
                totals = [a + b for a, b in zip(totals, part)]
    stabilized, exploded, truncated = totals
    p = stabilized / trials
    stderr = math.sqrt(max(p * (1 - p), 1e-300) / trials)
    return MonteCarloEstimate(
        mode=mode,
        level=level,
        trials=trials,
        stabilized=stabilized,
        exploded=exploded,
        truncated=truncated,
        estimate=p,
        stderr=stderr,
    )


def _split_trials(trials: int, workers: int) -> list[int]:
    workers = min(workers, trials)
    base, extra = divmod(trials, workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]


def _run_trial_chunk(mode: str, level: int, trials: int, rng: np.random.Generator) -> tuple[int, int, int]:
    if mode == "chain":
        lut = _sixteenth_lut(transition_matrix())
        return _run_chain_trials(trials, 3**level, rng, lut)
    return _run_sandpile_trials(trials, level, rng)


def default_workers() -> int:
    cpus = os.cpu_count() or 1
    return max(1, cpus)
