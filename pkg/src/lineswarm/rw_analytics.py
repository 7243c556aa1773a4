"""Closed-form facts about unit-step random walks biased toward one side.

A walker on the integers moves one unit per tick, toward its preferred
side with probability ``1 - epsilon`` and away from it with probability
``epsilon``, where ``0 <= epsilon < 1/2``.  Writing ``alpha = 1/2 -
epsilon`` for the bias strength, the facts implemented here are:

* the walk reaches the first site on its preferred side almost surely,
  in ``1 / (1 - 2 epsilon)`` expected ticks;
* it reaches the first site on the opposite side with probability
  ``epsilon / (1 - epsilon)`` only;
* the expected farthest excursion against the bias before the first
  preferred-side visit is at most ``epsilon / (1 - 2 epsilon)``;
* the reflected walk on ``{1, 2, ...}`` (left moves from state 1 stay
  at 1) has stationary law ``pi(k) = r^(k-1) (1 - 2 eps)/(1 - eps)``
  with ``r = epsilon / (1 - epsilon)``, hence tail ``P(X >= k) =
  r^(k-1)``, and for two independent copies ``P(X + Y >= k) =
  r^(k-2) ((k-2)(1-2 eps)/(1-eps) + 1)``.

On top of these sit the expected-time bounds for a swarm of agents on
the line in which only the two extremal agents move (see `sim1d`): the
one-sided sweep bound, the half-shrink bound, and the full gathering
bound driven by the smallest circular distance between fractional parts
of the initial positions.

Everything here is a pure function of its arguments.  `finite_chain_oracle`
is deliberately implemented as a banded linear solve rather than through
any of the closed forms above, so tests can use it as an independent
cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import DegenerateConfigurationError, ValidationError

__all__ = [
    "WalkParams",
    "InitialConfiguration",
    "AbsorbingChainSolution",
    "catalan",
    "prob_hit_minus_one",
    "prob_hit_plus_one",
    "expected_steps_to_minus_one",
    "farthest_excursion_bound",
    "stationary_pi",
    "tail_prob_single",
    "tail_prob_sum",
    "markov_span_bound",
    "gathering_bound_unilateral",
    "half_shrink_bound",
    "circular_fraction",
    "min_fractional_distance",
    "gathering_time_bound",
    "gathering_bound_from_terms",
    "finite_chain_oracle",
    "hit_prob_series_partial_sums",
    "reflected_chain_mean",
]

CATALAN_MAX_K = 35


@dataclass(frozen=True)
class WalkParams:
    """Bias parameter of the walk; ``alpha = 1/2 - epsilon`` is derived.

    ``epsilon + alpha == 0.5`` holds exactly in double precision (the
    subtraction result is within half an ulp of 0.5, so the round trip
    recovers 0.5 exactly).
    """

    epsilon: float

    def __post_init__(self) -> None:
        eps = self.epsilon
        if not (isinstance(eps, (int, float)) and math.isfinite(eps)):
            raise ValidationError(f"epsilon must be a finite number, got {eps!r}")
        if not 0.0 <= eps < 0.5:
            raise ValidationError(f"epsilon must lie in [0, 1/2), got {eps}")
        object.__setattr__(self, "epsilon", float(eps))

    @property
    def alpha(self) -> float:
        return 0.5 - self.epsilon

    @property
    def ratio(self) -> float:
        """``epsilon / (1 - epsilon)``, the geometric decay of all tails."""
        return self.epsilon / (1.0 - self.epsilon)


@dataclass(frozen=True)
class InitialConfiguration:
    """Ordered initial positions on the opinion axis plus the bias."""

    positions: tuple[float, ...]
    params: WalkParams

    def __post_init__(self) -> None:
        pos = tuple(float(x) for x in self.positions)
        if len(pos) < 1:
            raise ValidationError("need at least one position")
        if any(not math.isfinite(x) for x in pos):
            raise ValidationError("positions must be finite")
        if any(a > b for a, b in zip(pos, pos[1:])):
            raise ValidationError("positions must be sorted non-decreasing")
        object.__setattr__(self, "positions", pos)


def catalan(k: int) -> int:
    """Exact k-th Catalan number, ``binom(2k, k) / (k + 1)``.

    Computed by the integer recurrence ``C_{k+1} = C_k * 2(2k+1) // (k+2)``
    (the division is always exact).  Limited to ``k <= 35``; beyond that
    callers are expected to switch to the closed-form ratios, so a larger
    ``k`` raises ``OverflowError``.
    """
    if not isinstance(k, int) or isinstance(k, bool):
        raise ValidationError(f"k must be an integer, got {k!r}")
    if k < 0:
        raise ValidationError(f"k must be non-negative, got {k}")
    if k > CATALAN_MAX_K:
        raise OverflowError(
            f"catalan({k}) exceeds the supported range k <= {CATALAN_MAX_K}; "
            "use the closed-form tail ratios instead"
        )
    c = 1
    for i in range(k):
        c = c * 2 * (2 * i + 1) // (i + 2)
    return c


def prob_hit_minus_one(p: WalkParams) -> float:
    """Probability the walk ever reaches -1 from 0: exactly 1 for eps < 1/2."""
    return 1.0


def prob_hit_plus_one(p: WalkParams) -> float:
    """Probability the walk ever reaches +1 from 0: ``eps / (1 - eps)``."""
    return p.epsilon / (1.0 - p.epsilon)


def expected_steps_to_minus_one(p: WalkParams) -> float:
    """Expected ticks until the walk first reaches -1: ``1 / (1 - 2 eps)``."""
    return 1.0 / (1.0 - 2.0 * p.epsilon)


def farthest_excursion_bound(p: WalkParams) -> float:
    """Upper bound on the expected farthest rightward excursion before -1.

    A path first reaching -1 after ``2k+1`` ticks makes exactly ``k``
    right moves, so its maximum never exceeds ``k``; summing ``k`` against
    the first-passage law gives ``eps / (1 - 2 eps)``.
    """
    return p.epsilon / (1.0 - 2.0 * p.epsilon)


def _ratio_power(p: WalkParams, n: int) -> float:
    # Repeated multiplication keeps the k -> k+1 step a single multiply by a
    # factor < 1, so tails stay monotone; a log/exp round trip would not.
    r = p.ratio
    acc = 1.0
    for _ in range(n):
        acc *= r
    return acc


def stationary_pi(p: WalkParams, k: int) -> float:
    """Stationary probability of state ``k`` of the reflected walk.

    ``pi(k) = (eps/(1-eps))^(k-1) * (1-2 eps)/(1-eps)`` on states 1, 2, ...
    For ``eps = 0`` this is the point mass at 1.
    """
    if k < 1:
        raise ValidationError(f"state index must be >= 1, got {k}")
    if p.epsilon == 0.0:
        return 1.0 if k == 1 else 0.0
    head = (1.0 - 2.0 * p.epsilon) / (1.0 - p.epsilon)
    return _ratio_power(p, k - 1) * head


def tail_prob_single(p: WalkParams, k: int) -> float:
    """``P(X >= k) = (eps/(1-eps))^(k-1)`` for the reflected walk at stationarity."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    return _ratio_power(p, k - 1)


def tail_prob_sum(p: WalkParams, k: int) -> float:
    """``P(X + Y >= k)`` for two independent stationary reflected walks.

    Equals ``(eps/(1-eps))^(k-2) * ((k-2)(1-2 eps)/(1-eps) + 1)`` for
    ``k >= 2``.  Because each extremal agent's distance from the core is
    dominated by such a walk, this is an upper bound on the probability
    that the total span of the swarm is at least ``k``.
    """
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    head = (1.0 - 2.0 * p.epsilon) / (1.0 - p.epsilon)
    return _ratio_power(p, k - 2) * ((k - 2) * head + 1.0)


def markov_span_bound(p: WalkParams, k: float) -> float:
    """Crude Markov-inequality bound on ``P(total span >= k)``.

    The expected span after gathering is at most ``1 + 2 eps/(1-2 eps)``,
    so ``P(span >= k) <= 1/k + (2 eps / k) / (1 - 2 eps)``, clamped to 1.
    """
    if not k > 0:
        raise ValidationError(f"k must be positive, got {k}")
    return min(1.0, 1.0 / k + (2.0 * p.epsilon / k) / (1.0 - 2.0 * p.epsilon))


def gathering_bound_unilateral(cfg: InitialConfiguration) -> float:
    """Expected ticks for a one-sided sweep to carry every agent over a beacon.

    ``cfg.positions[0]`` is the beacon; the remaining agents must lie
    strictly above it, strictly increasing.  When only the rightmost agent
    moves, every agent crosses the beacon exactly once and the sweep ends
    after an expected ``(1/(1-2 eps)) * sum(floor(x_k - x_0) + 1)`` ticks,
    leaving all agents in ``(x_0 - 1, x_0]``.
    """
    pos = cfg.positions
    if len(pos) < 2:
        raise ValidationError("need a beacon plus at least one agent")
    if any(a >= b for a, b in zip(pos, pos[1:])):
        raise ValidationError("positions must be strictly increasing")
    beacon = pos[0]
    total = sum(math.floor(x - beacon) + 1 for x in pos[1:])
    return total / (1.0 - 2.0 * cfg.params.epsilon)


def half_shrink_bound(
    n_agents: int, s0: float, total_span0: float, p: WalkParams
) -> float:
    """Expected ticks to shrink the core excess ``s0`` by half.

    When the inner agents span ``1 + s0``, placing two virtual fences a
    half-excess inward decouples the two extremal sweeps; whichever side
    finishes first has cleared ``ceil(s0/2)`` per inner agent plus the
    initial end gap, giving the bound
    ``(1/(1-2 eps)) * ((N-2) ceil(s0/2) + (total_span0 - 1))``.
    """
    if n_agents < 3:
        raise ValidationError(f"need at least 3 agents, got {n_agents}")
    if not s0 > 0:
        raise ValidationError(f"s0 must be positive, got {s0}")
    if not total_span0 >= 1.0 + s0:
        raise ValidationError(
            f"total span {total_span0} cannot be smaller than 1 + s0 = {1.0 + s0}"
        )
    steps = (n_agents - 2) * math.ceil(s0 / 2.0) + (total_span0 - 1.0)
    return steps / (1.0 - 2.0 * p.epsilon)


def circular_fraction(x: float) -> float:
    """Fractional part of ``x`` folded onto the circle [0, 1).

    ``x % 1.0`` can round up to exactly 1.0 for tiny negative ``x``;
    fold that back to 0.0 since the two points coincide on the circle.
    """
    f = float(x) % 1.0
    return 0.0 if f == 1.0 else f


def min_fractional_distance(positions: Sequence[float]) -> float:
    """Smallest circular distance between fractional parts of the positions.

    ``d = min over pairs of min(|{x_i} - {x_j}|, 1 - |{x_i} - {x_j}|)``,
    always in (0, 1/2].  Unit jumps preserve fractional parts, so ``d``
    is invariant along any trajectory.  Fractional parts at circular
    distance zero make ``d`` undefined and raise
    ``DegenerateConfigurationError``.
    """
    if len(positions) < 2:
        raise ValidationError("need at least two positions")
    fracs = sorted(circular_fraction(x) for x in positions)
    best = 1.0
    for a, b in zip(fracs, fracs[1:]):
        gap = b - a
        if gap == 0.0:
            raise DegenerateConfigurationError(
                "duplicate fractional parts; use the coincident-position mode"
            )
        best = min(best, gap)
    # circular wrap between the largest and smallest fractional part
    wrap = 1.0 - (fracs[-1] - fracs[0])
    if wrap == 0.0:
        raise DegenerateConfigurationError(
            "duplicate fractional parts; use the coincident-position mode"
        )
    return min(best, wrap)


def gathering_bound_from_terms(
    n_agents: int, s0: float, total_span0: float, d: float, p: WalkParams
) -> float:
    """Gathering-time bound from precomputed terms.

    ``(N (s0 + ceil(log2(s0/d))) + (total_span0 - s0 - 1)) / (1 - 2 eps)``;
    the ceiling term is taken as 0 when ``s0 <= d`` because the first
    half-shrink phase already lands the core below the fractional gap.
    Ratios within one part in 10^12 of a power of two are snapped down a
    phase, so inputs that sit exactly on the boundary in exact arithmetic
    are not bumped by representation noise.
    """
    if s0 <= 0:
        return 0.0
    ratio = s0 / d
    if ratio <= 1.0 + 1e-12:
        halvings = 0
    else:
        halvings = math.ceil(math.log2(ratio) - 1e-12)
    steps = n_agents * (s0 + halvings) + (total_span0 - s0 - 1.0)
    return steps / (1.0 - 2.0 * p.epsilon)


def gathering_time_bound(cfg: InitialConfiguration) -> float:
    """Expected ticks until the inner agents fit in a unit interval.

    With ``s0 = x_{N-1}(0) - x_2(0) - 1`` (1-indexed) and ``d`` the minimum
    circular fractional distance, repeated half-shrinks reach the unit
    interval after at most ``ceil(log2(s0/d))`` phases, giving

        (N (s0 + ceil(log2(s0/d))) + (x_N - x_1 - s0 - 1)) / (1 - 2 eps).

    Returns 0 when the core already fits (``s0 <= 0``).
    """
    pos = cfg.positions
    n = len(pos)
    if n < 4:
        raise ValidationError(f"need at least 4 agents, got {n}")
    s0 = pos[-2] - pos[1] - 1.0
    if s0 <= 0:
        return 0.0
    d = min_fractional_distance(pos)  # raises on duplicate fractional parts
    return gathering_bound_from_terms(n, s0, pos[-1] - pos[0], d, cfg.params)


@dataclass(frozen=True)
class AbsorbingChainSolution:
    """Exact absorption data for the finite walk on ``{left, ..., right}``.

    Arrays are indexed by ``state - left_target`` and cover both
    absorbing boundary states.
    """

    left_target: int
    right_barrier: int
    p_left: np.ndarray
    p_right: np.ndarray
    expected_steps: np.ndarray

    def at(self, state: int) -> tuple[float, float, float]:
        """``(P(absorb left), P(absorb right), E[steps])`` from ``state``."""
        if not self.left_target <= state <= self.right_barrier:
            raise ValidationError(
                f"state {state} outside [{self.left_target}, {self.right_barrier}]"
            )
        i = state - self.left_target
        return (
            float(self.p_left[i]),
            float(self.p_right[i]),
            float(self.expected_steps[i]),
        )


def finite_chain_oracle(
    p: WalkParams, right_barrier: int, left_target: int
) -> AbsorbingChainSolution:
    """Solve the absorbing finite walk exactly, as an independent oracle.

    The walk moves ``+1`` with probability ``eps`` and ``-1`` with
    probability ``1 - eps``; both boundary states absorb.  Absorption
    probabilities and expected absorption times are obtained from the
    tridiagonal first-step equations via a banded linear solve, with no
    use of the closed forms elsewhere in this module, so the two routes
    check each other.  As the right barrier grows, the left-absorption
    probability from 0 tends to 1 and the expected time to
    ``1/(1 - 2 eps)``.
    """
    if not left_target < 0 < right_barrier:
        raise ValidationError(
            f"need left_target < 0 < right_barrier, got {left_target}, {right_barrier}"
        )
    span = right_barrier - left_target
    if span > 10_000:
        raise ValidationError(f"chain span {span} exceeds the supported 10^4")

    m = span - 1  # interior states
    eps = p.epsilon
    # rows: u_s - eps*u_{s+1} - (1-eps)*u_{s-1} = rhs for interior s
    ab = np.zeros((3, m))
    ab[0, 1:] = -eps  # superdiagonal
    ab[1, :] = 1.0
    ab[2, :-1] = -(1.0 - eps)  # subdiagonal

    rhs_left = np.zeros(m)
    rhs_left[0] = 1.0 - eps  # neighbour below the first interior state absorbs left
    rhs_right = np.zeros(m)
    rhs_right[-1] = eps
    rhs_time = np.ones(m)

    p_left_int = solve_banded((1, 1), ab, rhs_left)
    p_right_int = solve_banded((1, 1), ab, rhs_right)
    steps_int = solve_banded((1, 1), ab, rhs_time)

    p_left = np.concatenate(([1.0], p_left_int, [0.0]))
    p_right = np.concatenate(([0.0], p_right_int, [1.0]))
    steps = np.concatenate(([0.0], steps_int, [0.0]))
    return AbsorbingChainSolution(left_target, right_barrier, p_left, p_right, steps)


def hit_prob_series_partial_sums(p: WalkParams, k_max: int = CATALAN_MAX_K) -> list[float]:
    """Partial sums of the first-passage series for reaching -1.

    The walk first hits -1 at tick ``2k+1`` with probability
    ``(1-eps) C_k (eps (1-eps))^k``; the partial sums increase toward 1.
    Small independent oracle used by tests; ``k_max`` is capped by the
    exact-Catalan range.
    """
    if not 0 <= k_max <= CATALAN_MAX_K:
        raise ValidationError(f"k_max must be in [0, {CATALAN_MAX_K}], got {k_max}")
    x = p.epsilon * (1.0 - p.epsilon)
    head = 1.0 - p.epsilon
    sums = []
    total = 0.0
    xk = 1.0
    for k in range(k_max + 1):
        total += head * catalan(k) * xk
        xk *= x
        sums.append(total)
    return sums


def reflected_chain_mean(p: WalkParams, tail_tol: float = 1e-15) -> float:
    """Mean of the reflected walk's stationary law by direct series summation.

    Sums ``k pi(k)`` until the remaining tail (bounded by the geometric
    tail times a linear factor) drops below ``tail_tol``.  Independent
    oracle for tests; does not use the closed-form mean.
    """
    if p.epsilon == 0.0:
        return 1.0
    total = 0.0
    k = 1
    while True:
        term = k * stationary_pi(p, k)
        total += term
        # remaining tail < (k+1) * P(X >= k+1) / (1 - ratio)
        if (k + 1) * tail_prob_single(p, k + 1) / (1.0 - p.ratio) < tail_tol:
            return total
        k += 1
        if k > 100_000:
            raise RuntimeError("series failed to converge")
