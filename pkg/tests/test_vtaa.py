import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlsim.errors import OvershootError, ParameterError, ResourceError
from qlsim.numerics import random_unitary
from qlsim.vtaa import (
    AmplificationSchedule,
    AmplitudeTrace,
    ThresholdVector,
    VariableTimeAlgorithm,
    amplified,
    cost_totals,
    l23_objective,
    optimize_thresholds,
    premerge,
    premerged_schedule,
    query_product_identity,
    random_vta,
    run_nested,
    run_tunable,
    transition_amplitudes,
    tunable_step_count,
    universality_check,
    validate_axioms,
)


def single_stage(amplitude):
    """One stage on (good, bad): A_1 leaves `amplitude` on good."""
    c, s = amplitude, math.sqrt(1 - amplitude**2)
    A = np.array([[c, -s], [s, c]])
    return VariableTimeAlgorithm([np.zeros(2), np.ones(2)], np.array([0.0, 1.0]), [A], np.array([1.0, 0.0]))


def optimized_thresholds(vta):
    """Thresholds from the l2/3 optimizer over every stage of a plain run."""
    q = vta.profile().q
    alpha, _ = optimize_thresholds(q[:-1], vta.stage_costs)
    return alpha


def grid_minimum(b, c, points=200):
    """Brute-force minimum of the threshold objective on the simplex."""
    l = len(b)
    axis = (np.arange(points) + 0.5) / points
    best = math.inf
    for head in itertools.product(axis, repeat=l - 1):
        last = 1 - sum(head)
        if last <= 0:
            continue
        best = min(best, l23_objective(list(head) + [last], b, c))
    return best


class TestAxioms:
    def test_canonical_construction_passes(self):
        report = validate_axioms(random_vta(3, 2, seed=1))
        assert report.all_passed, report.failed()

    def test_swapped_projections_fail_ordering(self):
        vta = random_vta(3, 2, seed=1)
        P = list(vta.clock_projections)
        P[1], P[2] = P[2], P[1]
        bad = VariableTimeAlgorithm(P, vta.flag_projection, vta.algorithms, vta.psi0)
        report = validate_axioms(bad)
        assert not report["ordering_1_2"].passed
        assert report["ordering_1_2"].violation > 0

    def test_uncontrolled_algorithm_fails(self, rng):
        vta = random_vta(3, 2, seed=1)
        algorithms = list(vta.algorithms)
        algorithms[1] = random_unitary(vta.dim, rng)
        bad = VariableTimeAlgorithm(vta.clock_projections, vta.flag_projection, algorithms, vta.psi0)
        report = validate_axioms(bad)
        assert not report["controlled_2"].passed

    def test_dense_projections_path(self):
        vta = random_vta(2, 2, seed=4)
        dense = VariableTimeAlgorithm(
            [p.dense() for p in vta.clock_projections], vta.flag_projection.dense(), vta.algorithms, vta.psi0
        )
        assert validate_axioms(dense).all_passed


class TestRunNested:
    def test_trivial_schedule_is_plain_composition(self):
        vta = random_vta(3, 2, seed=2)
        res = run_nested(vta, AmplificationSchedule.trivial(3))
        np.testing.assert_allclose(res.state, vta.plain_states()[-1], atol=1e-12)
        assert res.ledger.oracle_a == sum(vta.stage_costs)
        assert res.ledger.oracle_b == 1

    @pytest.mark.parametrize("backend", ["matrix", "analytic"])
    def test_triple_angle(self, backend):
        res = run_nested(single_stage(0.1), AmplificationSchedule((1,)), backend=backend)
        assert res.trace.post[0] == pytest.approx(3 * 0.1 - 4 * 0.1**3, abs=1e-12)
        assert res.trace.post[0] == pytest.approx(0.296, abs=1e-12)

    def test_cross_backend_random_two_stage(self):
        vta = random_vta(2, 3, seed=7)
        th = optimized_thresholds(vta)
        mat = run_tunable(vta, th, backend="matrix")
        ana = run_tunable(vta, th, backend="analytic")
        assert mat.schedule == ana.schedule
        gaps = np.abs(np.r_[mat.trace.pre, mat.trace.post] - np.r_[ana.trace.pre, ana.trace.post])
        assert gaps.max() < 1e-9

    def test_analytic_overshoot(self):
        with pytest.raises(OvershootError) as err:
            run_nested(single_stage(0.5), AmplificationSchedule((1,)), backend="analytic")
        assert err.value.stage == 1

    def test_matrix_overshoot_allowed(self):
        res = run_nested(single_stage(0.5), AmplificationSchedule((1,)), backend="matrix")
        assert res.trace.post[0] == pytest.approx(abs(math.sin(3 * math.asin(0.5))), abs=1e-12)

    def test_dimension_cap(self):
        with pytest.raises(ResourceError):
            run_nested(random_vta(2, 2, seed=1), AmplificationSchedule((0, 0)), dimension_cap=4)

    def test_ledger_counts_match_recurrence(self):
        vta = random_vta(3, 2, seed=3)
        schedule = AmplificationSchedule((1, 0, 2))
        res = run_nested(vta, schedule)
        assert res.ledger.matches(cost_totals(schedule, vta.stage_costs, vta.psi0_cost))


class TestStepCount:
    @pytest.mark.parametrize(
        "alpha, a, expected", [(1.0, 0.01, 17), (0.25, 0.04, 2), (0.09, 0.2, 0)]
    )
    def test_examples(self, alpha, a, expected):
        assert tunable_step_count(alpha, a) == expected

    def test_unreachable(self):
        with pytest.raises(ParameterError):
            tunable_step_count(0.5, 0.0)
        assert tunable_step_count(0.0, 0.0) == 0

    @given(st.floats(0, 1), st.floats(1e-3, 1))
    def test_minimal_integer(self, alpha, a):
        r = tunable_step_count(alpha, a)
        target = math.sqrt(alpha) / 3
        assert (2 * r + 1) * a >= target * (1 - 1e-12)
        if r > 0:
            assert (2 * r - 1) * a < target
        closed = max(math.ceil(math.sqrt(alpha) / (6 * a) - 0.5), 0)
        assert abs(r - closed) <= 1


class TestRunTunable:
    def test_zero_thresholds(self):
        vta = random_vta(3, 2, seed=5)
        res = run_tunable(vta, [0, 0, 0])
        assert res.schedule.rounds == (0, 0, 0)
        np.testing.assert_allclose(res.state, vta.plain_states()[-1], atol=1e-12)

    def test_optimized_thresholds_loss_floor(self):
        vta = random_vta(2, 3, seed=11, bad_bias=0.97)
        th = optimized_thresholds(vta)
        res = run_tunable(vta, th)
        assert res.trace.total_loss >= (5 / 6) ** th.total

    def test_threshold_met_exactly(self):
        res = run_tunable(single_stage(0.2), [0.36])
        assert res.schedule.rounds == (0,)

    def test_amplitude_factors(self):
        exact = run_tunable(single_stage(0.05), [1.0])
        halved = run_tunable(single_stage(0.05), [1.0], amplitude_factors=[0.5])
        assert halved.schedule.rounds[0] > exact.schedule.rounds[0]


class TestUniversality:
    def test_forward_on_tunable_run(self):
        vta = random_vta(3, 2, seed=9, bad_bias=0.95)
        th = optimized_thresholds(vta)
        res = run_tunable(vta, th)
        rep = universality_check(res.schedule, res.trace, th)
        assert rep.passed and rep.no_overshoot and rep.loss_bound_holds

    def test_reverse_reconstruction(self):
        trace = AmplitudeTrace((0.05,), (amplified(0.05, 3),), (3,), (1.0, 0.05))
        rep = universality_check(AmplificationSchedule((1,)), trace)
        assert rep.reconstructed[0] == pytest.approx(0.2025, abs=1e-15)
        assert rep.reverse_applicable and rep.reverse_holds

    def test_trivial_schedule(self):
        trace = AmplitudeTrace((0.5, 0.4), (0.5, 0.4), (1, 1), (1.0, 0.5, 0.2))
        rep = universality_check(AmplificationSchedule((0, 0)), trace)
        assert rep.reconstructed == (0.0, 0.0)
        assert rep.loss_factor == 1.0


class TestQueryProduct:
    def test_single_stage(self):
        res = run_nested(single_stage(0.1), AmplificationSchedule((1,)))
        lhs, rhs, gap = query_product_identity(res.trace, res.schedule, 1, 1)
        assert lhs == 3 and gap < 1e-10

    def test_full_range(self):
        vta = random_vta(3, 2, seed=0, bad_bias=0.99, halt_fraction=0.95)
        res = run_tunable(vta, [1, 1, 1])
        l = res.schedule.l
        assert l == 2
        lhs, rhs, gap = query_product_identity(res.trace, res.schedule, 1, l)
        assert gap < 1e-9 * lhs

    def test_all_trivial(self):
        res = run_nested(random_vta(2, 2, seed=1), AmplificationSchedule((0, 0)))
        assert query_product_identity(res.trace, res.schedule, 0, 0) == (1.0, 1.0, 0.0)

    def test_index_error(self):
        res = run_nested(single_stage(0.1), AmplificationSchedule((1,)))
        with pytest.raises(IndexError):
            query_product_identity(res.trace, res.schedule, 1, 2)


class TestOptimizeThresholds:
    def test_two_stage_example(self):
        alpha, objective = optimize_thresholds([0.5, 0.25], [1, 4])
        np.testing.assert_allclose(alpha.values, [0.3865, 0.6135], atol=1e-4)
        assert objective == pytest.approx(2.0809, abs=1e-4)
        assert grid_minimum([0.5, 0.25], [1, 4]) >= objective * (1 - 1e-12)
        assert grid_minimum([0.5, 0.25], [1, 4]) == pytest.approx(objective, rel=1e-3)

    def test_equal_products_uniform(self):
        alpha, _ = optimize_thresholds([0.5, 0.25, 1.0], [2, 4, 1])
        np.testing.assert_allclose(alpha.values, [1 / 3] * 3, atol=1e-15)

    def test_single_stage(self):
        alpha, objective = optimize_thresholds([0.3], [5])
        assert alpha.values == (1.0,)
        assert objective == pytest.approx(1.5)

    def test_zero_rejected(self):
        with pytest.raises(ParameterError):
            optimize_thresholds([0.0, 1.0], [1, 1])

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.floats(1e-3, 1), st.floats(0.1, 100)), min_size=1, max_size=6))
    def test_l23_versus_l1(self, pairs):
        b, c = zip(*pairs)
        alpha, objective = optimize_thresholds(b, c)
        l1 = sum(x * y for x, y in pairs)
        assert objective <= math.sqrt(len(b)) * l1 * (1 + 1e-12)
        assert objective == pytest.approx(l23_objective(alpha.values, b, c), rel=1e-12)
        assert alpha.total == pytest.approx(1.0)


class TestPremergeAndCosts:
    def test_keep_all(self):
        vta = random_vta(3, 2, seed=1)
        assert premerge(vta, 3) is vta

    def test_keep_none(self):
        vta = random_vta(3, 2, seed=1)
        merged = premerge(vta, 0)
        assert merged.m == 1
        assert merged.stage_costs == [sum(vta.stage_costs)]

    def test_merged_run_matches(self):
        vta = random_vta(4, 2, seed=6)
        schedule = AmplificationSchedule((0, 0, 1, 1))
        full = run_nested(vta, schedule)
        merged = premerge(vta, 2)
        short = run_nested(merged, premerged_schedule(schedule, 2))
        assert np.linalg.norm(full.state - short.state) < 1e-10
        assert full.ledger.oracle_a == short.ledger.oracle_a
        assert full.ledger.oracle_b == short.ledger.oracle_b
        assert validate_axioms(merged).all_passed

    def test_index_error(self):
        with pytest.raises(IndexError):
            premerge(random_vta(2, 2, seed=1), 3)

    def test_cost_examples(self):
        assert cost_totals(AmplificationSchedule((0, 0)), (2, 3), 1).total == 6
        ledger = cost_totals(AmplificationSchedule((1, 0)), (2, 3), 1)
        assert ledger.oracle_b == 3
        assert ledger.stage_applications == [3, 1]
        assert ledger.total == 12
        assert ledger.merged_total == 12

    def test_dinv_style_schedule(self):
        ledger = cost_totals(AmplificationSchedule((0, 0, 1, 1)), (1, 1, 1, 1), 1)
        assert ledger.oracle_b == 9


class TestRunProperties:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 4), st.floats(0.8, 0.99))
    def test_tunable_run_invariants(self, seed, m, bias):
        vta = random_vta(m, 2, seed=seed, bad_bias=bias)
        th = optimized_thresholds(vta)
        res = run_tunable(vta, th)
        ana = run_tunable(vta, th, backend="analytic")
        assert res.ledger.matches(ana.ledger)
        gaps = np.abs(np.r_[res.trace.post] - np.r_[ana.trace.post])
        assert gaps.max() < 1e-9
        rep = universality_check(res.schedule, res.trace, th)
        assert rep.passed
        for j in res.schedule.nontrivial_stages:
            a = res.trace.pre[j - 1]
            steps = res.schedule.steps[j - 1]
            root = math.sqrt(th[j - 1])
            assert steps * a < root / 3 + 2 * a < root <= 1 + 1e-12
        product = math.prod(res.schedule.steps)
        assert 3**res.schedule.l <= product
        assert product <= (6 / 5) ** th.total / res.trace.sqrt_p_succ * (1 + 1e-9)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000), st.lists(st.integers(0, 2), min_size=3, max_size=3))
    def test_transition_preservation(self, seed, rounds):
        vta = random_vta(3, 2, seed=seed)
        schedule = AmplificationSchedule(tuple(rounds))
        reference = transition_amplitudes(vta, AmplificationSchedule.trivial(3), 0)
        for j in range(1, 3):
            amps = transition_amplitudes(vta, schedule, j)
            base = reference[j:]
            if amps[0] < 1e-8:
                continue
            for h in range(1, len(amps)):
                assert amps[h] / amps[0] == pytest.approx(base[h] / base[0], abs=1e-9)


class TestThresholdVector:
    def test_negative_rejected(self):
        with pytest.raises(ParameterError):
            ThresholdVector((0.1, -0.2))
