"""Exact state machine for extremal-agent dynamics on the line.

``N`` indistinguishable agents sit at real positions, kept sorted.  Each
tick only the extremal agents move, by exactly one unit:

* bilateral mode: the leftmost agent jumps ``+1`` with probability
  ``1 - epsilon`` (``-1`` otherwise) and the rightmost jumps ``-1`` with
  probability ``1 - epsilon`` (``+1`` otherwise); the two draws are
  independent within the tick, leftmost drawn first.
* unilateral modes: only the designated side moves, with the same bias
  toward the rest of the group.

Conventions where the rule alone underdetermines behaviour: a single
agent stays put; with two agents both are extremal and both move; when
several agents share an extremal position exactly one of them (the
lowest storage index) moves that tick, and if *all* agents coincide the
lowest index acts as the left extremist and the highest as the right.

Positions are plain doubles validated to ``|x| < 2**52``.  Unit jumps
are then exactly representable whenever the positions live on a dyadic
lattice with headroom (multiples of ``2**-q`` staying below ``2**(52-q)``
in magnitude), in which case the multiset of fractional parts is
conserved bit for bit; fully continuous draws can pick up one-ulp
rounding at binade crossings, which nothing below depends on.  Position
comparisons are exact; no tolerances enter anywhere.

Two theorem-backed invariants are checked on every tick and raise
`InvariantViolationError` if ever violated:

* while the core span ``x_{N-1} - x_2`` exceeds 1, ``x_2`` never
  decreases and ``x_{N-1}`` never increases;
* in bilateral mode, once the core span drops to <= 1 it never exceeds
  1 again.  (This is false in unilateral modes, where the frozen far
  extremist is counted in the core; the check is bilateral-only.)
"""

from __future__ import annotations

import math
from bisect import bisect_left, insort
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import InvariantViolationError, ValidationError
from .rw_analytics import WalkParams, circular_fraction

__all__ = [
    "BILATERAL",
    "UNILATERAL_RIGHT",
    "UNILATERAL_LEFT",
    "MODES",
    "SwarmState1D",
    "StepOutcome",
    "TrajectoryRow",
    "GatheringResult",
    "SweepResult",
    "WalkSample",
    "BarrierSample",
    "ChainOccupancy",
    "Metrics",
    "new_swarm",
    "step",
    "run_until_gathered",
    "run_unilateral_sweep",
    "metrics",
    "simulate_walk_first_passage",
    "simulate_two_barrier_hits",
    "simulate_reflected_chain",
]

BILATERAL = "bilateral"
UNILATERAL_RIGHT = "unilateral-right"
UNILATERAL_LEFT = "unilateral-left"
MODES = frozenset({BILATERAL, UNILATERAL_RIGHT, UNILATERAL_LEFT})

_MAX_MAGNITUDE = 2.0**52
_POOL_SIZE = 4096
_WALK_STEP_CAP = 1_000_000_000


class TrajectoryRow(NamedTuple):
    t: int
    centroid: float
    core_span: float
    total_span: float
    x_min: float
    x_max: float


class Metrics(NamedTuple):
    centroid: float
    variance: float
    core_span: float
    total_span: float


class SwarmState1D:
    """Sorted agent positions plus tick counter and a seeded RNG stream.

    Mutable; confined to one execution context at a time.  All stepping
    draws come from an internal buffer refilled from the PCG64 stream in
    fixed-size blocks, so every way of advancing the state consumes the
    identical sequence of uniforms.
    """

    __slots__ = (
        "params",
        "mode",
        "t",
        "coincident_start",
        "gathered",
        "invariant_checks",
        "_pos",
        "_rng",
        "_pool",
        "_pool_i",
    )

    def __init__(
        self,
        positions: Sequence[float],
        params: WalkParams,
        rng: np.random.Generator,
        mode: str,
    ) -> None:
        pos = sorted(float(x) for x in positions)
        if not pos:
            raise ValidationError("need at least one agent")
        if any(not (math.isfinite(x) and abs(x) < _MAX_MAGNITUDE) for x in pos):
            raise ValidationError("positions must satisfy |x| < 2**52")
        if mode not in MODES:
            raise ValidationError(f"unknown mode {mode!r}; expected one of {sorted(MODES)}")
        self.params = params
        self.mode = mode
        self.t = 0
        self._pos = pos
        self._rng = rng
        self._pool: list[float] = []
        self._pool_i = 0
        fracs = set(circular_fraction(x) for x in pos)
        self.coincident_start = len(fracs) < len(pos)
        self.gathered = self.core_span <= 1.0 if mode == BILATERAL else False
        self.invariant_checks = 0

    # -- observers ---------------------------------------------------------

    @property
    def n_agents(self) -> int:
        return len(self._pos)

    @property
    def positions(self) -> tuple[float, ...]:
        return tuple(self._pos)

    @property
    def total_span(self) -> float:
        return self._pos[-1] - self._pos[0]

    @property
    def core_span(self) -> float:
        """``x_{N-1} - x_2`` (1-indexed); defined as 0 for N <= 3."""
        if len(self._pos) < 4:
            return 0.0
        return self._pos[-2] - self._pos[1]

    def centroid(self) -> float:
        # fsum gives the correctly rounded sum, so the value is independent
        # of storage order and bit-stable under the exact +1/-1 moves.
        return math.fsum(self._pos) / len(self._pos)

    def fractional_parts(self) -> tuple[float, ...]:
        return tuple(sorted(circular_fraction(x) for x in self._pos))

    # -- stepping ----------------------------------------------------------

    def _draw(self) -> float:
        i = self._pool_i
        if i >= len(self._pool):
            self._pool = self._rng.random(_POOL_SIZE).tolist()
            i = 0
        self._pool_i = i + 1
        return self._pool[i]

    def _tick(self) -> tuple[tuple[int, int], ...]:
        """Advance one tick; returns ((pre-sort index, direction), ...)."""
        pos = self._pos
        n = len(pos)
        if n == 1:
            self.t += 1
            return ()

        keep = 1.0 - self.params.epsilon
        check_core = n >= 4
        if check_core:
            x2_before = pos[1]
            xp_before = pos[-2]
            core_before = xp_before - x2_before

        mode = self.mode
        moved: tuple[tuple[int, int], ...]
        if mode == BILATERAL:
            lo = pos[0]
            hi = pos[-1]
            d_left = 1 if self._draw() < keep else -1
            d_right = -1 if self._draw() < keep else 1
            right_index = n - 1 if lo == hi else bisect_left(pos, hi)
            del pos[-1]
            del pos[0]
            insort(pos, lo + d_left)
            insort(pos, hi + d_right)
            moved = ((0, d_left), (right_index, d_right))
        elif mode == UNILATERAL_RIGHT:
            hi = pos[-1]
            d = -1 if self._draw() < keep else 1
            right_index = bisect_left(pos, hi)
            del pos[-1]
            insort(pos, hi + d)
            moved = ((right_index, d),)
        else:  # UNILATERAL_LEFT
            lo = pos[0]
            d = 1 if self._draw() < keep else -1
            del pos[0]
            insort(pos, lo + d)
            moved = ((0, d),)

        self.t += 1

        if check_core:
            if core_before > 1.0:
                if pos[1] < x2_before or pos[-2] > xp_before:
                    raise InvariantViolationError(
                        f"core edge moved outward at t={self.t}: "
                        f"x2 {x2_before} -> {pos[1]}, "
                        f"x_(N-1) {xp_before} -> {pos[-2]}"
                    )
            if mode == BILATERAL:
                core_after = pos[-2] - pos[1]
                if self.gathered:
                    if core_after > 1.0:
                        raise InvariantViolationError(
                            f"gathered core reopened at t={self.t}: "
                            f"core span {core_after}"
                        )
                elif core_after <= 1.0:
                    self.gathered = True
            self.invariant_checks += 1
        return moved


@dataclass(frozen=True)
class StepOutcome:
    """Who moved in one tick (pre-sort index, +1/-1) and the state after."""

    moved: tuple[tuple[int, int], ...]
    state_after: SwarmState1D


@dataclass(frozen=True)
class GatheringResult:
    """First tick with core span <= 1, or ``reached=False`` on timeout."""

    T: int
    reached: bool
    final_state: SwarmState1D


@dataclass(frozen=True)
class SweepResult:
    """Outcome of a one-sided sweep toward a beacon."""

    T: int
    finished: bool
    beacon_position: float
    final_state: SwarmState1D
    crossings: int


def new_swarm(
    positions: Sequence[float],
    epsilon: float | WalkParams,
    seed: int | np.random.SeedSequence,
    mode: str = BILATERAL,
) -> SwarmState1D:
    """Build a swarm state: sorted positions, t=0, PCG64 stream from ``seed``."""
    params = epsilon if isinstance(epsilon, WalkParams) else WalkParams(epsilon)
    rng = np.random.Generator(np.random.PCG64(seed))
    return SwarmState1D(positions, params, rng, mode)


def step(state: SwarmState1D) -> StepOutcome:
    """Advance one tick and report the movers."""
    moved = state._tick()
    return StepOutcome(moved, state)


def metrics(state: SwarmState1D, reference: float | None = None) -> Metrics:
    """Centroid, variance, and spans.

    ``variance`` is the mean squared deviation from ``reference`` when
    given (the fixed-origin form whose one-tick decrease is exactly
    ``(2/N)(total_span - 1)`` in the deterministic ``epsilon = 0`` case),
    otherwise from the current centroid.
    """
    c = state.centroid()
    ref = c if reference is None else reference
    var = math.fsum((x - ref) ** 2 for x in state._pos) / state.n_agents
    return Metrics(c, var, state.core_span, state.total_span)


def _emit(state: SwarmState1D, sink: Callable[[TrajectoryRow], None]) -> None:
    sink(
        TrajectoryRow(
            state.t,
            state.centroid(),
            state.core_span,
            state.total_span,
            state._pos[0],
            state._pos[-1],
        )
    )


def run_until_gathered(
    state: SwarmState1D,
    max_steps: int,
    sink: Callable[[TrajectoryRow], None] | None = None,
    stride: int = 1,
) -> GatheringResult:
    """Step until the core span drops to <= 1, or ``max_steps`` ticks pass.

    For ``N <= 3`` the core span is 0 by definition and T = 0.  When a
    ``sink`` is given, a trajectory row is emitted at t=0 and every
    ``stride`` ticks thereafter (plus the final tick).
    """
    if max_steps < 0:
        raise ValidationError(f"max_steps must be >= 0, got {max_steps}")
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    if sink is not None:
        _emit(state, sink)
    if state.core_span <= 1.0:
        return GatheringResult(state.t, True, state)
    tick = state._tick
    pos = state._pos
    for _ in range(max_steps):
        tick()
        if sink is not None and state.t % stride == 0:
            _emit(state, sink)
        if pos[-2] - pos[1] <= 1.0:
            if sink is not None and state.t % stride != 0:
                _emit(state, sink)
            return GatheringResult(state.t, True, state)
    return GatheringResult(state.t, False, state)


def run_unilateral_sweep(state: SwarmState1D, max_steps: int) -> SweepResult:
    """Run a right-to-left sweep until the beacon is the rightmost agent.

    The beacon is the leftmost agent at entry; it never moves during the
    sweep (only the rightmost agent does, and the run stops the moment
    the beacon is rightmost).  On completion every other agent sits in
    ``(beacon - 1, beacon]``, having jumped over the beacon exactly once;
    the number of leftward beacon crossings is counted and verified.
    """
    if state.mode != UNILATERAL_RIGHT:
        raise ValidationError("sweep requires unilateral-right mode")
    beacon = state._pos[0]
    n_others = state.n_agents - 1
    if n_others < 1:
        raise ValidationError("need at least one agent besides the beacon")
    crossings = 0
    pos = state._pos
    for _ in range(max_steps):
        if pos[-1] <= beacon:
            break
        hi = pos[-1]
        ((_, d),) = state._tick()
        if d == -1 and hi - 1.0 <= beacon:
            crossings += 1
    finished = pos[-1] <= beacon
    if finished:
        if crossings != n_others:
            raise InvariantViolationError(
                f"expected {n_others} beacon crossings, counted {crossings}"
            )
        if not all(beacon - 1.0 < x <= beacon for x in pos):
            raise InvariantViolationError(
                "sweep finished with agents outside (beacon-1, beacon]"
            )
    return SweepResult(state.t, finished, beacon, state, crossings)


# -- single-walker simulators ----------------------------------------------


@dataclass(frozen=True)
class WalkSample:
    """First-passage statistics over independent walks from 0 to -1."""

    trials: int
    mean: float
    variance: float
    stderr: float
    excursion_mean: float
    excursion_stderr: float
    max_steps_seen: int


def simulate_walk_first_passage(
    p: WalkParams, seed: int | np.random.SeedSequence, trials: int
) -> WalkSample:
    """Monte Carlo first-passage times from 0 to -1 for the biased walk.

    Also records each trial's farthest rightward excursion before the
    hit.  All trials advance in lockstep on vectorized draws; the hit is
    almost sure, but a hard cap of 10^9 ticks per trial aborts with a
    diagnostic if something is badly wrong.
    """
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    rng = np.random.Generator(np.random.PCG64(seed))
    eps = p.epsilon

    position = np.zeros(trials, dtype=np.int64)
    steps = np.zeros(trials, dtype=np.int64)
    peak = np.zeros(trials, dtype=np.int64)
    done_steps = np.empty(trials, dtype=np.int64)
    done_peak = np.empty(trials, dtype=np.int64)
    index = np.arange(trials)
    filled = 0
    ticks = 0
    while index.size:
        ticks += 1
        if ticks > _WALK_STEP_CAP:
            raise RuntimeError(
                f"walk exceeded {_WALK_STEP_CAP} ticks without absorption; "
                f"epsilon={eps}, {index.size} trials still running"
            )
        u = rng.random(index.size)
        position += np.where(u < eps, 1, -1)
        steps += 1
        np.maximum(peak, position, out=peak)
        hit = position == -1
        if hit.any():
            done_steps[filled : filled + hit.sum()] = steps[hit]
            done_peak[filled : filled + hit.sum()] = peak[hit]
            filled += int(hit.sum())
            keep = ~hit
            position = position[keep]
            steps = steps[keep]
            peak = peak[keep]
            index = index[keep]

    steps_f = done_steps.astype(float)
    peak_f = done_peak.astype(float)
    var = float(steps_f.var(ddof=1)) if trials > 1 else 0.0
    exc_sd = float(peak_f.std(ddof=1)) if trials > 1 else 0.0
    return WalkSample(
        trials=trials,
        mean=float(steps_f.mean()),
        variance=var,
        stderr=math.sqrt(var / trials),
        excursion_mean=float(peak_f.mean()),
        excursion_stderr=exc_sd / math.sqrt(trials),
        max_steps_seen=int(done_steps.max()),
    )


@dataclass(frozen=True)
class BarrierSample:
    """Empirical two-barrier absorption split."""

    trials: int
    p_upper: float
    stderr: float


def simulate_two_barrier_hits(
    p: WalkParams,
    seed: int | np.random.SeedSequence,
    trials: int,
    upper: int,
    lower: int,
) -> BarrierSample:
    """Fraction of walks from 0 absorbed at ``upper`` before ``lower``."""
    if not lower < 0 < upper:
        raise ValidationError(f"need lower < 0 < upper, got {lower}, {upper}")
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    rng = np.random.Generator(np.random.PCG64(seed))
    eps = p.epsilon

    position = np.zeros(trials, dtype=np.int64)
    hits_upper = 0
    ticks = 0
    while position.size:
        ticks += 1
        if ticks > _WALK_STEP_CAP:
            raise RuntimeError("two-barrier walk exceeded the step cap")
        u = rng.random(position.size)
        position += np.where(u < eps, 1, -1)
        hits_upper += int((position == upper).sum())
        position = position[(position != upper) & (position != lower)]
    p_hat = hits_upper / trials
    stderr = math.sqrt(p_hat * (1.0 - p_hat) / trials)
    return BarrierSample(trials, p_hat, stderr)


@dataclass(frozen=True)
class ChainOccupancy:
    """Empirical occupancy of the reflected walk on {1, 2, ...}.

    ``batch_means`` holds the per-batch averages of the visited state
    over consecutive equal windows; their spread gives a standard error
    for `mean` that respects the chain's autocorrelation.
    """

    samples: int
    counts: np.ndarray  # counts[k-1] = visits to state k after burn-in
    batch_means: np.ndarray | None = None

    def frequencies(self) -> np.ndarray:
        return self.counts / self.samples

    def frequency(self, k: int) -> float:
        if k < 1:
            raise ValidationError(f"state index must be >= 1, got {k}")
        if k > self.counts.size:
            return 0.0
        return float(self.counts[k - 1]) / self.samples

    def mean(self) -> float:
        states = np.arange(1, self.counts.size + 1)
        return float((states * self.counts).sum() / self.samples)

    def mean_stderr(self) -> float:
        if self.batch_means is None or self.batch_means.size < 2:
            raise ValidationError("no batch means recorded; need samples >= 2*batches")
        return float(
            self.batch_means.std(ddof=1) / math.sqrt(self.batch_means.size)
        )


def simulate_reflected_chain(
    p: WalkParams,
    seed: int | np.random.SeedSequence,
    burn_in: int,
    samples: int,
    batches: int = 100,
) -> ChainOccupancy:
    """Occupancy of the left-reflected walk after ``burn_in`` ticks.

    The chain moves ``k -> k+1`` with probability ``epsilon`` and
    ``k -> max(1, k-1)`` otherwise, started at 1; the post-burn-in state
    is recorded at every tick.  When ``samples >= 2 * batches``, the
    visited states are also averaged over ``batches`` consecutive equal
    windows (the trailing remainder is left out of the windows).
    """
    if burn_in < 0 or samples < 1:
        raise ValidationError("need burn_in >= 0 and samples >= 1")
    if batches < 2:
        raise ValidationError("need batches >= 2")
    rng = np.random.Generator(np.random.PCG64(seed))
    eps = p.epsilon
    counts: list[int] = [0] * 64
    per_batch = samples // batches if samples >= 2 * batches else 0
    batch_sums: list[int] = []
    batch_sum = 0
    in_batch = 0
    k = 1
    remaining_burn = burn_in
    remaining = samples
    chunk = 262_144
    while remaining_burn or remaining:
        todo = min(chunk, remaining_burn + remaining)
        draws = rng.random(todo).tolist()
        for u in draws:
            if u < eps:
                k += 1
            elif k > 1:
                k -= 1
            if remaining_burn:
                remaining_burn -= 1
            else:
                if k > len(counts):
                    counts.extend([0] * k)
                counts[k - 1] += 1
                remaining -= 1
                if per_batch and len(batch_sums) < batches:
                    batch_sum += k
                    in_batch += 1
                    if in_batch == per_batch:
                        batch_sums.append(batch_sum)
                        batch_sum = 0
                        in_batch = 0
    arr = np.asarray(counts, dtype=np.int64)
    last = int(np.nonzero(arr)[0][-1]) + 1 if arr.any() else 1
    means = (
        np.asarray(batch_sums, dtype=float) / per_batch if per_batch else None
    )
    return ChainOccupancy(samples, arr[:last], means)
