"""Acceptance suite: one test per criterion, each printing a single pass/fail line."""
import itertools
import math
import time

import numpy as np
import pytest
from scipy.special import eval_chebyu

from qlsim.dinv import (
    AmplitudeOracle,
    DinvSpec,
    check_multiplicative_bounds,
    estimate_solution_norm,
    grover_fixture,
    prepare_dinv,
    probability_family,
    random_instance,
    solve_qls,
)
from qlsim.encodings import dirichlet_bounds, dirichlet_ratio
from qlsim.errors import OvershootError
from qlsim.numerics import fidelity, operator_norm, random_state, random_unitary
from qlsim.precond import (
    build_padded_system,
    build_taylor_system,
    check_poly_bounds,
    projector_onto,
    scaling_operator,
    self_preconditioned_solve,
    taylor_stepping_oracle,
)
from qlsim.vtaa import (
    AmplificationSchedule,
    l23_objective,
    optimize_thresholds,
    random_vta,
    run_nested,
    run_tunable,
    universality_check,
)

C = 1.001
FLOOR = math.sqrt(5) / (9 * C)


def schedule_instances():
    """Fifty seeded instances spanning dimensions, condition numbers and right-hand-side skews."""
    for s in range(50):
        yield random_instance(4 + s % 5, 1000 + s, condition=(9.0, 27.0)[s % 2], weights=(None, 1.0, 2.0)[s % 3])


def premerge_oracle(sqrt_p, m):
    l = math.floor(math.log(2 / (math.sqrt(5) * C * sqrt_p), 3) + 1e-12)
    return max(0, min(l, m))


def unit(v):
    return v / np.linalg.norm(v)


@pytest.fixture(scope="module")
def schedule_runs():
    spec = DinvSpec(c=C)
    start = time.perf_counter()
    runs = [(inst, prepare_dinv(inst, spec)) for inst in schedule_instances()]
    return runs, time.perf_counter() - start


def test_dirichlet_bounds(verdict):
    start = time.perf_counter()
    sandwich = True
    for rho in range(3, 102, 2):
        theta = np.linspace(0, math.pi / (2 * rho), 10_000)
        ratio = dirichlet_ratio(rho, theta)
        inner = theta[1:]
        direct = np.sin(rho * inner) / (rho * np.sin(inner))
        lo, hi = dirichlet_bounds(rho, theta)
        sandwich &= bool(np.all(lo <= ratio + 1e-15) and np.all(ratio <= hi + 1e-15))
        sandwich &= bool(np.allclose(ratio[1:], direct, atol=1e-12))
    theta = np.linspace(0, math.pi / 6, 10_000)
    gap = float(np.max(np.abs(dirichlet_ratio(3, theta) - (1 - 4 / 3 * np.sin(theta) ** 2))))
    elapsed = time.perf_counter() - start
    ok = sandwich and gap <= 1e-12 and elapsed < 5
    assert verdict(1, "Dirichlet bounds", ok, f"rho=3 identity gap {gap:.1e}, {elapsed:.2f}s")


def test_deterministic_schedule(verdict, schedule_runs):
    runs, elapsed = schedule_runs
    exact_schedule = True
    floor_met = True
    levels = set()
    for inst, res in runs:
        m = res.vta.context.m
        target = AmplitudeOracle(inst, DinvSpec(c=C)).target()
        l = premerge_oracle(target, m)
        levels.add(l)
        exact_schedule &= res.plan.l == l
        exact_schedule &= res.trace.steps == (1,) * (m - l) + (3,) * l
        floor_met &= res.final_amplitude >= FLOOR
    ok = exact_schedule and floor_met and elapsed < 120 and len(levels) >= 3
    detail = f"{len(runs)} instances, l in {sorted(levels)}, floor {FLOOR:.4f}, {elapsed:.1f}s"
    assert verdict(2, "deterministic schedule", ok, detail)


def test_probability_chains(verdict):
    failures = []
    checked = 0
    for s, eps_bm in itertools.product(range(10), (1e-4, 1e-3)):
        inst = random_instance(4 + s % 4, 2000 + s, condition=(9.0, 27.0)[s % 2], weights=1.5)
        rep = check_multiplicative_bounds(probability_family(inst, DinvSpec(c=C, eps_bm=eps_bm)))
        names = {c.name for c in rep.checks}
        assert "sum_C vs sum_B" in names
        failures.extend(c.name for c in rep.failed)
        checked += 1
    ok = not failures
    assert verdict(3, "probability chains", ok, f"{checked} families, failures {failures or 'none'}")


def test_solver_correctness(verdict):
    eps = 1e-2
    worst = 1.0
    ob_exact = ledger_exact = True
    for s in range(20):
        inst = random_instance(4 + s % 4, 3000 + s, condition=(3.0, 9.0, 27.0, 81.0)[s % 4])
        res = solve_qls(inst, eps)
        direct = np.linalg.solve(inst.A, inst.b)
        worst = min(worst, fidelity(res.state, direct))
        ob_exact &= res.prepare_ledger.oracle_b == 3**res.report.l
        ledger_exact &= res.report.ledger_matches
    ok = worst >= 1 - eps and ob_exact and ledger_exact
    assert verdict(4, "solver correctness", ok, f"min fidelity {worst:.6f}, O_b = 3^l {ob_exact}, O_A ledger {ledger_exact}")


def test_grover_instance(verdict):
    inst, expect = grover_fixture(16, 0)
    norm_exact = inst.solution_norm == pytest.approx(34 / 16, abs=1e-12)
    res = solve_qls(inst, 1 / 60)
    outcome = float(abs(res.state[0]) ** 2)
    ok = norm_exact and outcome > 0.504
    assert verdict(5, "Grover instance", ok, f"||A^-1 b|| = {inst.solution_norm:.12f}, outcome {outcome:.5f}")


def test_universality(verdict, schedule_runs):
    forward = 0
    forward_ok = True
    for seed, m in itertools.product(range(10), (2, 3)):
        vta = random_vta(m, 2, seed=seed, bad_bias=0.97, halt_fraction=0.8)
        alpha, _ = optimize_thresholds(vta.profile().q[:-1], vta.stage_costs)
        res = run_tunable(vta, alpha)
        rep = universality_check(res.schedule, res.trace, alpha)
        forward_ok &= rep.passed and rep.no_overshoot and rep.loss_factor >= (5 / 6) ** alpha.total * (1 - 1e-12)
        forward += 1
    for _, res in schedule_runs[0]:
        th = res.plan.thresholds
        if th is not None and th.total <= 1:
            rep = universality_check(res.plan.schedule, res.trace, th)
            forward_ok &= rep.passed
            forward += 1
    reverse = 0
    reverse_ok = True
    rng = np.random.default_rng(77)
    for seed in range(100):
        vta = random_vta(3, 2, seed=100 + seed, bad_bias=0.999, halt_fraction=0.9)
        sched = AmplificationSchedule(tuple(int(r) for r in rng.integers(0, 3, size=3)))
        res = run_nested(vta, sched)
        rep = universality_check(sched, res.trace)
        # the converse needs a_j <= 1 / (3 (2 r_j + 1)) on every amplified stage
        if rep.reverse_applicable:
            reverse_ok &= all(x <= 1 + 1e-12 for x in rep.reconstructed) and rep.reverse_holds
            reverse += 1
    ok = forward_ok and reverse_ok and reverse > 0
    assert verdict(6, "universality", ok, f"{forward} forward runs, {reverse} reverse schedules")


def grid_minimum(b, c, points=200):
    axis = (np.arange(points) + 0.5) / points
    best = math.inf
    for head in itertools.product(axis, repeat=len(b) - 1):
        last = 1 - sum(head)
        if last > 0:
            best = min(best, l23_objective(list(head) + [last], b, c))
    return best


def test_threshold_optimizer(verdict):
    rng = np.random.default_rng(5)
    worst_gap = 0.0
    for l in (2, 3):
        for _ in range(3):
            b = rng.uniform(0.05, 1, size=l)
            c = rng.uniform(0.5, 10, size=l)
            _, objective = optimize_thresholds(b, c)
            grid = grid_minimum(b, c)
            worst_gap = max(worst_gap, abs(grid - objective) / objective)
    dominated = True
    for _ in range(100):
        l = int(rng.integers(1, 7))
        b = rng.uniform(1e-3, 1, size=l)
        c = rng.uniform(0.1, 100, size=l)
        _, objective = optimize_thresholds(b, c)
        dominated &= objective <= math.sqrt(l) * float(np.sum(b * c)) * (1 + 1e-12)
    ok = worst_gap <= 1e-3 and dominated
    assert verdict(7, "threshold optimizer", ok, f"worst grid gap {worst_gap:.1e}, sqrt(l) dominance {dominated}")


def test_preconditioning(verdict):
    worst_norm = 0.0
    worst_amp = 1.0
    worst_gap = 0.0
    for s in range(20):
        inst = random_instance(4 + s % 5, 4000 + s, condition=(3.0, 9.0, 27.0, 81.0)[s % 4])
        res = self_preconditioned_solve(inst, inst.solution_norm)
        alpha_Ainv = inst.alpha_Ainv or inst.norm_Ainv
        worst_norm = max(worst_norm, res.inverse_norm / (math.sqrt(17) * alpha_Ainv))
        worst_amp = min(worst_amp, res.success_amplitude)
        pre = scaling_operator(projector_onto(inst.b), res.scale)
        conditioned = unit(np.linalg.solve(pre.S @ inst.A, pre.S @ inst.b))
        plain = unit(np.linalg.solve(inst.A, inst.b))
        worst_gap = max(worst_gap, float(np.max(np.abs(conditioned - plain))))
    ok = worst_norm <= 1 and worst_amp >= 1 / math.sqrt(17) and worst_gap <= 1e-10
    detail = f"max ||(SA)^-1||/(sqrt17 alpha) {worst_norm:.4f}, min amplitude {worst_amp:.4f}, gap {worst_gap:.1e}"
    assert verdict(8, "preconditioning guarantees", ok, detail)


def test_application_norms(verdict):
    rng = np.random.default_rng(9)
    block_gap = 0.0
    pad_norm = 0.0
    for _ in range(5):
        d = int(rng.integers(1, 4))
        V = random_unitary(d, rng)
        lam = rng.uniform(-0.5, 0.5, size=d)
        A = (V * lam) @ V.conj().T
        n = int(rng.integers(2, 9))
        pad = build_padded_system(A, n, int(rng.integers(0, 3)))
        pad_norm = max(pad_norm, operator_norm(pad.matrix))
        for l, block in enumerate(pad.inverse_column()[:n]):
            oracle = (V * eval_chebyu(l, lam)) @ V.conj().T
            block_gap = max(block_gap, float(np.max(np.abs(block - oracle))))
    poly_ok = all(check_poly_bounds(rng.normal(size=n), n).passed for n in range(1, 13))
    taylor_gap = 0.0
    for n, k in itertools.product(range(1, 5), range(1, 5)):
        V = random_unitary(2, rng)
        A = (V * rng.uniform(-1, 1, size=2)) @ V.conj().T
        b = random_state(2, rng)
        sys_ = build_taylor_system(A, n, k, 2)
        x = sys_.blocks(np.linalg.solve(sys_.matrix, sys_.initial_state(b)))
        oracle = taylor_stepping_oracle(A, b, n, k)
        taylor_gap = max(taylor_gap, max(float(np.max(np.abs(x[j] - oracle))) for j in sys_.success_blocks))
    ok = block_gap <= 1e-9 and pad_norm <= 4 and poly_ok and taylor_gap <= 1e-8
    detail = f"Pad block gap {block_gap:.1e}, max ||Pad|| {pad_norm:.3f}, polynomial bounds {poly_ok}, Taylor gap {taylor_gap:.1e}"
    assert verdict(9, "application norm relations", ok, detail)


def test_norm_estimation(verdict):
    exact_ok = True
    scaled = []
    for kappa, weights in itertools.product((3.0, 9.0, 27.0), (None, 1.0, 2.0)):
        inst = random_instance(6, 5, condition=kappa, weights=weights)
        alpha_p = inst.p_succ() / 4
        est = estimate_solution_norm(inst, alpha_p)
        exact_ok &= est.within_factor_three
        scaled.append(est.oracle_b * math.sqrt(alpha_p))
    inst = random_instance(6, 11, condition=27.0)
    oracle = AmplitudeOracle(inst)
    trial_rng = np.random.default_rng(2024)
    alpha_p = inst.p_succ() / 4
    misses = sum(
        not estimate_solution_norm(inst, alpha_p, "stochastic", rng=trial_rng, oracle=oracle).within_factor_three
        for _ in range(200)
    )
    rate = misses / 200
    spread = max(scaled) / min(scaled)
    ok = exact_ok and rate < 0.5 and max(scaled) <= 1.0 and spread <= 4
    detail = f"exact factor-3 {exact_ok}, stochastic failure rate {rate:.3f}, O_b sqrt(alpha_p) in [{min(scaled):.3f}, {max(scaled):.3f}]"
    assert verdict(10, "solution-norm estimation", ok, detail)


def test_cross_backend(verdict, schedule_runs):
    worst = 0.0
    compared = skipped = 0
    for seed in range(20):
        vta = random_vta(3, 2, seed=seed, bad_bias=0.999)
        rounds = tuple(int(r) for r in np.random.default_rng(seed).integers(0, 3, size=3))
        schedules = [AmplificationSchedule(rounds), AmplificationSchedule((1, 1, 1))]
        for sched in schedules:
            a = run_nested(vta, sched, backend="matrix").trace
            try:
                b = run_nested(vta, sched, backend="analytic").trace
            except OvershootError:
                skipped += 1
                continue
            worst = max(worst, max(abs(x - y) for x, y in zip(a.pre + a.post, b.pre + b.post)))
            compared += 1
    for seed, m in itertools.product(range(10), (2, 3)):
        vta = random_vta(m, 2, seed=seed, bad_bias=0.97, halt_fraction=0.8)
        alpha, _ = optimize_thresholds(vta.profile().q[:-1], vta.stage_costs)
        a = run_tunable(vta, alpha, backend="matrix").trace
        b = run_tunable(vta, alpha, backend="analytic").trace
        worst = max(worst, max(abs(x - y) for x, y in zip(a.pre + a.post, b.pre + b.post)))
        compared += 1
    for _, res in schedule_runs[0][:10]:
        a = run_nested(res.vta, res.plan.schedule, backend="matrix").trace
        b = run_nested(res.vta, res.plan.schedule, backend="analytic").trace
        worst = max(worst, max(abs(x - y) for x, y in zip(a.pre + a.post, b.pre + b.post)))
        compared += 1
    ok = worst <= 1e-9 and compared > 0
    assert verdict(11, "cross-backend oracle", ok, f"{compared} runs compared, {skipped} overshoot skips, max gap {worst:.1e}")
