import math
from dataclasses import replace

import numpy as np
import pytest

from qlsim.dinv import (
    AmplitudeOracle,
    DinvSpec,
    LinearSystemInstance,
    build_inverter_vta,
    check_multiplicative_bounds,
    deterministic_plan,
    diagonal_instance,
    estimate_solution_norm,
    grover_fixture,
    prepare_dinv,
    probability_family,
    random_instance,
    solve_qls,
)
from qlsim.dinv.core import (
    PLUS,
    SpectralWalk,
    gpe_local,
    gpe_quartet,
    marking_local,
    marking_quartet,
    xi_values,
)
from qlsim.dinv.inverter import eigenvalue_bands, premerge_count
from qlsim.dinv.norm import union_failure_bound
from qlsim.encodings import build_block_encoding
from qlsim.errors import ContractError, ParameterError
from qlsim.numerics import fidelity, phase_aligned_distance
from qlsim.vtaa import validate_axioms

MINUS = np.array([1.0, -1.0]) / math.sqrt(2)
IDEAL = DinvSpec(gpe_mode="ideal", bm_mode="ideal")
FLOOR = math.sqrt(5) / (9 * 1.001)


def walk_for(ratios):
    return SpectralWalk(build_block_encoding(np.diag(ratios), 1.0))


class TestBranchMarking:
    def marked(self, ratios, eps):
        walk = walk_for(ratios)
        quartet = marking_quartet(eps)
        worst = 0.0
        for u in range(len(ratios)):
            M = marking_local(walk, u, quartet, snap=False)
            for branch, target in ((0, PLUS), (1, MINUS)):
                e = np.eye(2)[branch]
                out = M @ np.kron(np.kron(PLUS, PLUS), e)
                worst = max(worst, phase_aligned_distance(out, np.kron(np.kron(target, PLUS), e)))
        return worst

    def test_band_center(self):
        assert self.marked([0.0], 1e-3) <= 1e-3

    def test_random_ratios(self, rng):
        assert self.marked(rng.uniform(-0.5, 0.5, size=4), 1e-3) < 1e-3

    def test_invertible(self):
        walk = walk_for([0.2, -0.4])
        M = marking_local(walk, 0, marking_quartet(1e-3), snap=False)
        assert np.allclose(M.conj().T @ M, np.eye(M.shape[0]), atol=2e-3)


class TestGappedPhaseEstimation:
    eps = 1e-3

    def xi(self, stage, ratio):
        q = gpe_quartet(stage, self.eps)
        xi0, xi1 = xi_values(q, np.array([ratio]), snap=False)
        return np.array([xi0[0], xi1[0]])

    def test_passband_edge(self):
        assert np.linalg.norm(self.xi(2, 1 / 9) - [1, 0]) <= self.eps

    def test_middle_band(self):
        assert np.linalg.norm(self.xi(2, 0.0) - [0, 1j]) <= self.eps

    def test_negative_band(self):
        assert np.linalg.norm(self.xi(2, -0.3) - [-1, 0]) <= self.eps

    def test_branch_independence(self):
        walk = walk_for([0.3, 0.05, -0.2])
        q = gpe_quartet(1, self.eps)
        for u in range(3):
            G = gpe_local(walk, u, q, snap=False)
            outs = []
            for branch, v in ((PLUS, 0), (MINUS, 1)):
                state = G @ np.kron(np.kron(branch, [1, 0]), np.eye(2)[v])
                outs.append(np.conj(branch) @ state.reshape(2, 2, 2)[:, :, v])
            assert np.linalg.norm(outs[0] - outs[1]) < 1e-10

    def test_gamma_out_of_range(self):
        with pytest.raises(ParameterError):
            gpe_quartet(0, self.eps)


def closed_form_dinv(vta):
    """Discretized inverse amplitudes C[u, x] rebuilt from GPE outputs and the spectrum."""
    ctx = vta.context
    m = ctx.m
    ratios = ctx.walk.ratios
    C = np.zeros((ratios.size, m), dtype=complex)
    carry = np.ones(ratios.size, dtype=complex)
    for j in range(1, m + 1):
        if j < m:
            xi0, xi1 = xi_values(ctx.gpe[j - 1], ratios, snap=True)
        else:
            xi0, xi1 = np.ones(ratios.size), np.zeros(ratios.size)
        C[:, j - 1] = ctx.gamma * carry * xi0 * 3.0 ** (j - m)
        carry = carry * xi1
    return C


class TestInverterAlgorithm:
    def test_ideal_plain_composition(self):
        inst = diagonal_instance([0.45, -0.12, 0.05, -0.02], [1, 2, 3, 4])
        be = inst.block_encoding()
        vta = build_inverter_vta(be, inst.b, replace(IDEAL, m=be.m))
        final = vta.context.unmark @ vta.plain_states()[-1]
        good = vta.context.good_part(final)
        expected = vta.context.embed_clock_system(closed_form_dinv(vta))
        assert np.linalg.norm(good - expected) < 1e-9

    def test_single_band(self):
        inst = LinearSystemInstance(np.diag([0.4, -0.45, 0.35]).astype(complex), np.ones(3) / math.sqrt(3), alpha_Ainv=27)
        be = inst.block_encoding()
        vta = build_inverter_vta(be, inst.b, DinvSpec(m=be.m))
        zeta = vta.context.coefficients.zeta
        assert be.m >= 3
        assert np.all(np.abs(zeta[1]) > 1 - 1e-3)
        C = vta.context.dinv_coefficients(restrict=False)
        weight = np.sum(np.abs(C) ** 2, axis=0)
        assert weight[0] > 0.999 * weight.sum()

    def test_random_axioms(self):
        inst = random_instance(3, seed=4, condition=2.5)
        be = inst.block_encoding()
        assert be.m == 2
        assert validate_axioms(build_inverter_vta(be, inst.b, DinvSpec())).all_passed

    def test_requires_rescaled(self):
        be = build_block_encoding(np.eye(2), 1.0)
        with pytest.raises(ContractError):
            build_inverter_vta(be, np.array([1.0, 0.0]), DinvSpec())

    def test_matrix_backend_agrees(self):
        inst = random_instance(2, seed=8, condition=9)
        be = inst.block_encoding()
        spec = DinvSpec(m=be.m)
        spectral = build_inverter_vta(be, inst.b, spec).profile().q
        matrix = build_inverter_vta(be, inst.b, replace(spec, backend="matrix")).profile().q
        np.testing.assert_allclose(spectral, matrix, atol=1e-9)

    def test_leakage_bounds(self):
        for seed in range(5):
            inst = random_instance(6, seed, condition=27)
            vta = build_inverter_vta(inst.block_encoding(), inst.b, DinvSpec())
            assert vta.context.coefficients.leakage_violations() == []
            assert vta.context.coefficients.normalization_defect() < 1e-10


class TestDeterministicPlan:
    def test_premerge_example(self):
        assert premerge_count(math.sqrt(4e-4), 1.001) == 3
        assert math.floor(math.log(2 / (math.sqrt(5) * 1.001 * 0.02), 3)) == 3

    def test_trivial_when_l_zero(self):
        plan = deterministic_plan(DinvSpec(m=3), 0.5)
        assert plan.l == 0 and plan.schedule.rounds == (0, 0, 0)

    def test_engineered_schedule(self):
        sqrt_p = 2 / (math.sqrt(5) * 1.001 * 3**2.5)
        plan = deterministic_plan(DinvSpec(m=4), sqrt_p)
        assert plan.l == 2
        assert plan.schedule.steps == (1, 1, 3, 3)

    def test_invalid_estimate(self):
        with pytest.raises(ParameterError):
            deterministic_plan(DinvSpec(m=2), 0.0)


class TestPrepare:
    def test_ideal_matches_closed_form(self):
        inst = random_instance(6, seed=3, condition=27)
        res = prepare_dinv(inst, IDEAL)
        assert res.error < 1e-9

    def test_configured_error_bound(self):
        inst = random_instance(8, seed=5, condition=9, scale=0.4)
        res = prepare_dinv(inst, DinvSpec(eps_bm=1e-4, eps_gpe=1e-4))
        assert res.vta.context.m == 3
        assert res.error <= res.error_bound

    def test_success_amplitude_and_ledger(self):
        for seed in range(4):
            res = prepare_dinv(random_instance(6, seed, condition=27))
            assert res.final_amplitude >= FLOOR
            assert res.ledger.oracle_b == 3**res.plan.l
            assert res.trace.steps == res.plan.schedule.steps

    def test_floor_value(self):
        assert FLOOR == pytest.approx(0.248204, abs=1e-6)


class TestProbabilityFamily:
    def test_single_eigenvalue(self):
        inst = LinearSystemInstance(0.2 * np.eye(2, dtype=complex), np.array([0.6, 0.8], dtype=complex))
        be = inst.block_encoding()
        fam = probability_family(inst)
        k = int(eigenvalue_bands(np.array([0.2 / be.alpha_A]), be.m)[0])
        assert fam.p_dinv1 == pytest.approx(9.0 ** (k + 1 - be.m), rel=1e-12)
        assert fam.p_succ == pytest.approx((1 / (0.2 * be.alpha_Ainv)) ** 2, rel=1e-12)

    def test_ideal_no_leakage(self):
        fam = probability_family(random_instance(6, 2, condition=20), IDEAL)
        assert fam.p_dinv_m == pytest.approx(fam.p_dinv, rel=1e-12)

    def test_random_chain(self):
        fam = probability_family(random_instance(8, 9, condition=81))
        assert fam.p_dinv1 / 9 <= fam.p_succ <= fam.p_dinv1


class TestMultiplicativeBounds:
    def test_exact_mode(self):
        rep = check_multiplicative_bounds(probability_family(random_instance(6, 1, condition=27), IDEAL))
        assert rep.all_passed, rep.failed

    def test_stage_error_near_cap(self):
        spec = DinvSpec(eps_gpe=0.99, l=3)
        inst = random_instance(6, 7, condition=27)
        fam = probability_family(inst, spec)
        vta = build_inverter_vta(inst.block_encoding(), inst.b, spec)
        assert max(vta.context.coefficients.stage_errors) == pytest.approx(0.33)
        assert check_multiplicative_bounds(fam).all_passed

    def test_stage_error_cap_applies(self):
        errs = DinvSpec(eps_gpe=0.99, stage_error_cap=0.25).stage_errors(m=5, l=3)
        assert max(errs) == 0.25
        assert sum(errs) <= 0.99

    def test_single_band_collapse(self):
        inst = LinearSystemInstance(np.diag([0.4, -0.45, 0.35]).astype(complex), np.ones(3) / math.sqrt(3), alpha_Ainv=27)
        fam = probability_family(inst)
        assert check_multiplicative_bounds(fam).all_passed
        assert 1 / 9 <= fam.p_succ / fam.p_dinv1 <= 1


class TestNormEstimation:
    def test_exact_mode_factor_three(self):
        for seed in range(3):
            inst = random_instance(6, seed, condition=27)
            p = inst.p_succ()
            est = estimate_solution_norm(inst, alpha_p=p / 4)
            assert est.within_factor_three
            assert est.gap_separated()

    def test_well_conditioned_stops_early(self):
        inst = LinearSystemInstance(np.diag([0.4, 0.45]).astype(complex), np.array([1.0, 0.0], dtype=complex))
        est = estimate_solution_norm(inst, alpha_p=0.01)
        assert est.stop_level == 0
        assert est.within_factor_three
        assert est.oracle_b == 1

    @pytest.mark.parametrize("kappa,weights", [(3, None), (9, 1.0), (27, 2.0), (9, None)])
    def test_factor_three_across_stop_levels(self, kappa, weights):
        inst = random_instance(6, 5, condition=kappa, weights=weights)
        est = estimate_solution_norm(inst, alpha_p=inst.p_succ() / 4)
        assert est.within_factor_three

    def test_stochastic_failure_rate(self):
        inst = random_instance(6, 11, condition=27)
        oracle = AmplitudeOracle(inst)
        rng = np.random.default_rng(2024)
        alpha_p = inst.p_succ() / 4
        misses = sum(
            not estimate_solution_norm(inst, alpha_p, mode="stochastic", rng=rng, oracle=oracle).within_factor_three
            for _ in range(200)
        )
        assert misses / 200 < 0.5
        assert union_failure_bound() == pytest.approx(math.pi**2 / 6 - 5 / 4)

    def test_invalid_alpha(self):
        inst = random_instance(4, 0)
        with pytest.raises(ParameterError):
            estimate_solution_norm(inst, alpha_p=0.0)
        with pytest.raises(ParameterError):
            estimate_solution_norm(inst, alpha_p=0.1, mode="stochastic")


class TestSolve:
    def test_eigenvector_input(self):
        inst = diagonal_instance([1 / 3, 1.0], [1, 0])
        res = solve_qls(inst, 1e-2)
        assert fidelity(res.state, [1, 0]) > 1 - 1e-2

    def test_random_instances(self):
        for seed in range(3):
            inst = random_instance(8, seed, condition=27)
            res = solve_qls(inst, 1e-2)
            assert fidelity(res.state, inst.solution_state) >= 1 - 1e-2
            assert res.report.ledger_matches

    def test_extreme_mix_ratio(self):
        inst = diagonal_instance([1.0, 0.5, 1 / 9], [1, 0, 1])
        res = solve_qls(inst, 1e-3)
        ratio = abs(res.state[2]) / abs(res.state[0])
        assert ratio == pytest.approx(9.0, rel=2e-2)


class TestGroverFixture:
    def test_d16_norms(self):
        inst, exp = grover_fixture(16)
        assert inst.solution_norm == pytest.approx(34 / 16, abs=1e-12)
        assert exp.solution_norm == pytest.approx(2.125, abs=1e-15)
        assert inst.norm_Ainv == pytest.approx(4.0, abs=1e-12)

    def test_d16_outcome(self):
        inst, exp = grover_fixture(16, w=3)
        direct = np.linalg.solve(inst.A, inst.b)
        prob = abs(direct[3]) ** 2 / np.linalg.norm(direct) ** 2
        assert prob == pytest.approx(0.607483, abs=1e-6)
        assert exp.outcome_probability == pytest.approx(prob, abs=1e-12)
        assert exp.guaranteed_floor == pytest.approx(0.581780, abs=1e-6)
        res = solve_qls(inst, exp.eps_lin)
        assert abs(res.state[3]) ** 2 > 0.504

    def test_d15_floor(self):
        _, exp = grover_fixture(15)
        paper_floor = (13 / (8 * math.sqrt(5)) - 1 / 60) ** 2
        assert paper_floor > 0.504
        assert exp.guaranteed_floor >= paper_floor - 1e-12

    def test_small_dimension_rejected(self):
        with pytest.raises(ParameterError):
            grover_fixture(14)
