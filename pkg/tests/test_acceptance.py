"""Acceptance suite: every criterion at its pinned tolerance.

One test per criterion, in order; each prints a single pass/fail line
(run ``pytest tests/test_acceptance.py -v -s`` to see them inline).
Heavy runs are shared through session fixtures so the invariant-
violation criterion covers exactly the runs the other criteria used.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from lineswarm.experiments import (
    ExperimentSpec,
    SummaryRow,
    run_centroid_drift,
    run_convergence_sweep,
    run_span_distribution,
    run_walk_validation,
    write_results,
)
from lineswarm.rw_analytics import (
    InitialConfiguration,
    WalkParams,
    finite_chain_oracle,
    gathering_time_bound,
    stationary_pi,
    tail_prob_sum,
)
from lineswarm.seeding import child_seed
from lineswarm.sim1d import (
    UNILATERAL_RIGHT,
    metrics,
    new_swarm,
    run_unilateral_sweep,
    run_until_gathered,
    simulate_reflected_chain,
    simulate_two_barrier_hits,
    simulate_walk_first_passage,
    step,
)
from lineswarm.sim2d import convex_hull, hull_diameter, new_swarm2d, run2d

SEED = 20_260_810


@contextmanager
def criterion(num: int, label: str):
    try:
        yield
    except BaseException:
        print(f"[criterion {num:2d}] FAIL  {label}")
        raise
    print(f"[criterion {num:2d}] PASS  {label}")


# -- shared heavy runs --------------------------------------------------------


@pytest.fixture(scope="session")
def walk_samples():
    """10^5 first-passage walks at eps = 0.1 and 0.25, timed."""
    start = time.monotonic()
    samples = {
        eps: simulate_walk_first_passage(
            WalkParams(eps), child_seed(SEED, "acc-walk", i), 100_000
        )
        for i, eps in enumerate((0.1, 0.25))
    }
    return samples, time.monotonic() - start


GATHERING_SPEC = ExperimentSpec(
    kind="convergence-vs-epsilon",
    epsilons=(0.1,),
    agent_counts=(100,),
    initial_spans=(100.0,),
    trials=100,
    seed=SEED,
    max_steps=10_000_000,
)


@pytest.fixture(scope="session")
def gathering_sweep():
    start = time.monotonic()
    result = run_convergence_sweep(GATHERING_SPEC)
    return result, time.monotonic() - start


def _run_unilateral_config(seed: int, trials: int = 100_000) -> tuple[SummaryRow, list]:
    """The beacon-0 {0.5, 1.7} sweep at eps = 0.1; returns a summary row."""
    p = WalkParams(0.1)
    times = []
    for trial in range(trials):
        state = new_swarm(
            [0.0, 0.5, 1.7], p, child_seed(seed, "acc-unilateral", trial),
            mode=UNILATERAL_RIGHT,
        )
        res = run_unilateral_sweep(state, 1_000_000)
        assert res.finished
        assert all(-1.0 < x <= 0.0 for x in res.final_state.positions)
        times.append(res.T)
    arr = np.asarray(times, dtype=float)
    sd = float(arr.std(ddof=1))
    row = SummaryRow(
        "unilateral-sweep", 0.1, 3, None, trials,
        float(arr.mean()), sd, sd / math.sqrt(trials), 3.75, None,
    )
    return row, times


@pytest.fixture(scope="session")
def unilateral_run():
    return _run_unilateral_config(SEED)


# -- criteria -----------------------------------------------------------------


def test_c01_first_passage_expectation(walk_samples):
    samples, elapsed = walk_samples
    with criterion(1, "first-passage mean matches 1/(1-2eps) at eps 0.1, 0.25 in <10s"):
        for eps, expect in ((0.1, 1.25), (0.25, 2.0)):
            w = samples[eps]
            assert abs(w.mean - expect) <= 3 * w.stderr, (
                f"eps={eps}: mean {w.mean} vs {expect} +- {3 * w.stderr}"
            )
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_c02_hit_plus_one_probability():
    with criterion(2, "P(absorb at +1) before -50: oracle within 1e-3 of 1/9, sim within 3 SE"):
        p = WalkParams(0.1)
        exact = finite_chain_oracle(p, 1, -50).at(0)[1]
        assert abs(exact - 1.0 / 9.0) < 1e-3
        sim = simulate_two_barrier_hits(
            p, child_seed(SEED, "acc-barrier", 0), 100_000, 1, -50
        )
        assert abs(sim.p_upper - exact) <= 3 * sim.stderr


def test_c03_excursion_bound(walk_samples):
    samples, _ = walk_samples
    with criterion(3, "mean farthest excursion <= 0.125 + 3 SE at eps 0.1"):
        w = samples[0.1]
        assert w.excursion_mean <= 0.125 + 3 * w.excursion_stderr


def test_c04_stationary_distribution():
    with criterion(4, "reflected chain TV to stationary law < 0.01 over states 1-30 in <30s"):
        p = WalkParams(0.1)
        start = time.monotonic()
        occ = simulate_reflected_chain(
            p, child_seed(SEED, "acc-chain", 0), 10_000, 1_000_000
        )
        elapsed = time.monotonic() - start
        tv = 0.5 * math.fsum(
            abs(occ.frequency(k) - stationary_pi(p, k)) for k in range(1, 31)
        )
        assert tv < 0.01, f"TV = {tv}"
        assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_c05_unilateral_sweep(unilateral_run):
    row, _ = unilateral_run
    with criterion(5, "beacon sweep: mean time <= 3.75 + 3 SE, all end in (-1, 0]"):
        # interval membership was asserted per trial inside the fixture
        assert row.mean <= 3.75 + 3 * row.stderr, (
            f"mean {row.mean} vs 3.75 + {3 * row.stderr}"
        )


def test_c06_gathering_guarantee(gathering_sweep):
    result, elapsed = gathering_sweep
    with criterion(6, "N=100 S0=100 eps=0.1: all 100 trials gather, mean T <= mean bound, <2min"):
        point = result.points[0]
        assert all(point.reached)
        row = result.summary_rows[0]
        assert row.mean <= row.bound, f"mean T {row.mean} vs mean bound {row.bound}"
        assert elapsed < 120.0, f"took {elapsed:.1f}s"


def test_c07_bound_looseness(gathering_sweep):
    result, _ = gathering_sweep
    with criterion(7, "mean bound / mean T within [3, 16]"):
        row = result.summary_rows[0]
        assert 3.0 <= row.ratio <= 16.0, f"ratio = {row.ratio}"


def test_c08_gathered_stays_gathered(gathering_sweep):
    result, _ = gathering_sweep
    with criterion(8, "no post-gathering core reopening anywhere (hard invariant)"):
        # every stepping path asserts the invariant and raises on violation,
        # so the sweep completing is itself the proof for those runs; run a
        # long post-gathering continuation as a dedicated positive check
        assert all(all(p.reached) for p in result.points)
        rng = np.random.default_rng(child_seed(SEED, "acc-c08-init", 0))
        state = new_swarm(
            rng.uniform(0.0, 20.0, 50), 0.1, child_seed(SEED, "acc-c08-dyn", 0)
        )
        res = run_until_gathered(state, 10_000_000)
        assert res.reached
        checks_at_gathering = state.invariant_checks
        for _ in range(200_000):
            step(state)
            assert state.core_span <= 1.0
        assert state.invariant_checks == checks_at_gathering + 200_000


def test_c09_centroid_drift_law():
    with criterion(9, "centroid increments {+2/N, 0, -2/N} at {0.09, 0.82, 0.09} +- 3 SE"):
        spec = ExperimentSpec(
            kind="centroid-drift", epsilons=(0.1,), agent_counts=(21,),
            initial_spans=(2.0,), trials=2, seed=SEED, warmup=1_000,
            horizon=1_000_000,
        )
        d = run_centroid_drift(spec).drift
        assert abs(d.freq_plus - 0.09) <= 3 * d.stderr_plus, f"+2/N freq {d.freq_plus}"
        assert abs(d.freq_zero - 0.82) <= 3 * d.stderr_zero, f"zero freq {d.freq_zero}"
        assert abs(d.freq_minus - 0.09) <= 3 * d.stderr_minus, f"-2/N freq {d.freq_minus}"


def test_c10_span_tail_bound():
    with criterion(10, "span tail below two-walk bound for k in 3..12; slope within 15%"):
        spec = ExperimentSpec(
            kind="span-distribution", epsilons=(0.1,), agent_counts=(50,),
            initial_spans=(5.0,), trials=2, seed=SEED, warmup=2_000,
            samples=1_000_000, stride=10, batches=100,
        )
        result = run_span_distribution(spec)
        p = WalkParams(0.1)
        by_k = {r.k: r for r in result.span_rows}
        for k in range(3, 13):
            row = by_k.get(k)
            emp = row.empirical_p if row is not None else 0.0
            se = row.batch_stderr if row is not None else 0.0
            assert emp <= tail_prob_sum(p, k) + 3 * se, (
                f"k={k}: {emp} vs {tail_prob_sum(p, k)} + {3 * se}"
            )
        expected = math.log(1.0 / 9.0)
        assert result.slope is not None
        assert abs(result.slope - expected) <= 0.15 * abs(expected), (
            f"slope {result.slope} vs {expected}"
        )


def test_c11_deterministic_dynamics_exact():
    with criterion(11, "eps=0: centroid bit-identical, variance recurrence to 1e-12"):
        rng = np.random.default_rng(child_seed(SEED, "acc-eps0", 0))
        for _ in range(100):
            n = int(rng.integers(4, 17))
            # dyadic lattice keeps every +-1 jump exactly representable
            positions = (rng.integers(0, 6 * 2**20, n) * 2.0**-20).tolist()
            state = new_swarm(positions, 0.0, 1)
            c0 = state.centroid()
            while state.total_span > 1.0:
                var_before = metrics(state, reference=c0).variance
                span_before = state.total_span
                step(state)
                assert state.centroid() == c0  # bit-identical
                var_after = metrics(state, reference=c0).variance
                expected = var_before - (2.0 / n) * (span_before - 1.0)
                assert abs(var_after - expected) <= 1e-12
            for _ in range(16):  # past gathering the centroid still holds
                step(state)
                assert state.centroid() == c0


def test_c12_planar_gathering():
    with criterion(12, "2D N=400: final hull diameter <10% of initial in >=18/20 seeds"):
        hits = 0
        for i in range(20):
            rng = np.random.default_rng(child_seed(SEED, "acc-2d-init", i))
            pts = rng.uniform(0.0, 30.0, (400, 2))
            state = new_swarm2d(pts, 0.1, child_seed(SEED, "acc-2d-dyn", i))
            d0 = hull_diameter(convex_hull(state.points))
            rows = run2d(state, 400, stride=400)
            if rows[-1].diameter < 0.10 * d0:
                hits += 1
        assert hits >= 18, f"only {hits}/20 seeds gathered below 10%"


def test_c13_determinism_byte_identical(tmp_path_factory, unilateral_run):
    with criterion(13, "re-running configs 1, 5, 6 reproduces byte-identical files"):
        out = tmp_path_factory.mktemp("determinism")

        def emit(result, tag):
            paths = [
                write_results(result, "csv", out / f"{tag}.csv"),
                write_results(result, "jsonl", out / f"{tag}.jsonl"),
            ]
            return [p.read_bytes() for p in paths]

        # config 1: the walk-validation experiment at the criterion-1 point
        spec1 = ExperimentSpec(
            kind="walk-validation", epsilons=(0.1, 0.25), trials=100_000,
            seed=SEED, warmup=5_000, samples=50_000,
        )
        assert emit(run_walk_validation(spec1), "c1a") == emit(
            run_walk_validation(spec1), "c1b"
        )

        # config 5: the unilateral sweep; re-run with the fixture's seed
        row_again, _ = _run_unilateral_config(SEED)
        first_row = unilateral_run[0]
        res_a = _result_from_row(first_row)
        res_b = _result_from_row(row_again)
        assert emit(res_a, "c5a") == emit(res_b, "c5b")

        # config 6: the gathering sweep
        assert emit(run_convergence_sweep(GATHERING_SPEC), "c6a") == emit(
            run_convergence_sweep(GATHERING_SPEC), "c6b"
        )


def _result_from_row(row: SummaryRow):
    from lineswarm.experiments import ExperimentResult

    shell = ExperimentSpec(kind="walk-validation", epsilons=(0.1,), trials=2, seed=SEED)
    return ExperimentResult(spec=shell, summary_rows=[row])
