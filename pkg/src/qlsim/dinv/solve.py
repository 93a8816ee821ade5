"""Linear-system solver: discretized inverse, clock-controlled inversion, amplification, uncompute."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from ..errors import DegenerateInstanceError, ParameterError, ScheduleViolation
from ..vtaa import (
    DEFAULT_DIMENSION_CAP,
    CostLedger,
    VariableTimeAlgorithm,
    _InstrumentedRun,
    cost_totals,
    run_tunable,
    tunable_step_count,
)
from .core import BIT2, CONTD, GOOD, PLUS, WALK, X, ClockFlagLayout, embed
from .instance import LinearSystemInstance
from .inverter import DinvSpec, build_inverter_vta, deterministic_plan

Z = np.diag([1.0, -1.0])


def inversion_values(eigenvalues, alpha_A, clock):
    """Eigenvalue map of the clock-x inversion: alpha_A / (2 * 3^(x+2) * lambda), capped at 1/2.

    Inside the window |t| >= 1 (t = 3^(x+2) lambda / alpha_A) this is 1 / (2t);
    below it the map continues linearly as t / 2.
    """
    t = 3.0 ** (clock + 2) * np.asarray(eigenvalues, dtype=float) / alpha_A
    safe = np.where(t == 0, 1.0, t)
    return np.where(np.abs(t) >= 1, 1.0 / (2 * safe), t / 2)


def inversion_charge(m, eps_blk):
    """O_A queries of the clock-controlled inversion: ceil(3^(m+1) ln(1/eps_blk))."""
    return int(math.ceil(3.0 ** (m + 1) * math.log(1 / eps_blk)))


@dataclass
class SolveReport:
    fidelity: float
    success_probability: float
    postselection_probability: float
    inversion_amplitude: float
    inversion_ratio: float
    expected_inversion_ratio: float
    final_rounds: int
    l: int
    ledger_matches: bool

    def to_json(self):
        return dict(self.__dict__)


@dataclass
class SolveResult:
    state: np.ndarray
    ledger: CostLedger
    analytic_ledger: CostLedger
    report: SolveReport
    prepare_ledger: CostLedger

    def to_json(self):
        return {
            "state": [[float(z.real), float(z.imag)] for z in self.state],
            "ledger": self.ledger.to_json(),
            "analytic_ledger": self.analytic_ledger.to_json(),
            "prepare_ledger": self.prepare_ledger.to_json(),
            "report": self.report.to_json(),
        }


def _extend(op):
    return sp.kron(op, sp.identity(2, format="csr"), format="csr")


def _clock_diagonal(lay: ClockFlagLayout, blocks):
    """Block diagonal operator with blocks[o][x] on clock x of outer index o."""
    return sp.block_diag([sp.csr_matrix(blocks[o][x]) for o in range(lay.outer) for x in range(lay.m)],
                         format="csr")


def default_spec(eps, sqrt_p):
    return DinvSpec(eps_gpe=eps / 4, eps_bm=min(1e-4, eps * sqrt_p / 8), eps_blk=eps / 4)


def solve_qls(instance: LinearSystemInstance, eps=1e-2, sqrt_p_estimate=None, spec=None,
              dimension_cap=2 * DEFAULT_DIMENSION_CAP):
    """Prepare A^{-1} b / ||A^{-1} b|| with every oracle call counted."""
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    be = instance.block_encoding()
    m = be.m
    if instance.solution_norm == 0:
        raise DegenerateInstanceError("zero solution")
    p_succ = instance.p_succ(be)
    spec = spec or default_spec(eps, math.sqrt(p_succ))
    spec = replace(spec, m=m)
    if sqrt_p_estimate is None:
        probe = build_inverter_vta(be, instance.b, replace(spec, l=spec.l or m), dimension_cap // 2)
        sqrt_p_estimate = probe.profile().q[-1]
    plan = deterministic_plan(spec, sqrt_p_estimate)
    spec = replace(spec, l=plan.l)
    vta = build_inverter_vta(be, instance.b, spec, dimension_cap // 2)
    plan = deterministic_plan(spec, sqrt_p_estimate, vta.profile())
    prep = run_tunable(vta, plan.thresholds, backend="matrix", dimension_cap=dimension_cap)
    if prep.schedule.rounds != plan.schedule.rounds:
        raise ScheduleViolation(f"realized rounds {prep.schedule.rounds} differ from {plan.schedule.rounds}")
    ctx = vta.context
    lay, walk = ctx.layout, ctx.walk

    # extended algorithm: an inversion ancilla qubit as the innermost factor
    e_inv = np.array([1.0, 0.0])
    ext = VariableTimeAlgorithm(
        [np.repeat(p.mask, 2) for p in vta.clock_projections],
        np.repeat(vta.flag_projection.mask, 2),
        [_extend(_sparse_of(A)) for A in vta.algorithms],
        np.kron(vta.psi0, e_inv),
        list(vta.stage_costs),
        1,
    )
    ext_lay = ClockFlagLayout(m, lay.outer, lay.walk_dim, extra=2)
    unmark = _extend(ctx.unmark)
    blocks = []
    for o in range(lay.outer):
        row = []
        for x in range(m):
            f = inversion_values(walk.eigenvalues, be.alpha_A, x)
            F = walk.system_function(o, f)
            S = walk.system_function(o, np.sqrt(1 - f**2))
            U = np.kron(F, Z) + np.kron(S, X)
            row.append(embed(U, [WALK], ext_lay.legs))
        blocks.append(row)
    invert = _clock_diagonal(ext_lay, blocks)
    inv_charge = inversion_charge(m, spec.eps_blk)
    success = ((ext_lay.flag == GOOD) & (np.arange(ext_lay.dim) % 2 == 0)).astype(float)

    ledger = CostLedger(tuple(ext.stage_costs), 1)
    runner = _InstrumentedRun(ext, plan.schedule, ledger)

    def Q(v):
        ledger.charge("unmark", ctx.marking_charge)
        ledger.charge("inversion", inv_charge)
        return invert @ (unmark @ runner.M(m, v))

    def Q_adj(v):
        ledger.charge("unmark", ctx.marking_charge)
        ledger.charge("inversion", inv_charge)
        return runner.M(m, unmark.conj().T @ (invert.conj().T @ v), adjoint=True)

    e0 = np.zeros(ext.dim, dtype=complex)
    e0[0] = 1.0
    chi = Q(e0)
    a = float(np.linalg.norm(success * chi))
    if a == 0:
        raise DegenerateInstanceError("inversion success amplitude is zero")
    r_f = tunable_step_count(1.0, a)
    w = chi
    for _ in range(r_f):
        w = w - 2 * success * w
        u = Q_adj(w)
        u[0] = -u[0]
        w = -Q(u)
    good = success * w
    p_final = float(np.vdot(good, good).real)

    # uncompute the clock: re-mark, reversed GPE stages without rotations, unmark
    dims = lay.legs
    Xb2 = embed(X, [BIT2], dims)
    stage_ops = []
    for j in range(1, m + 1):
        loc = []
        for o in range(lay.outer):
            K = Xb2 if j == m else ctx.gpe_blocks[j - 1][o] @ Xb2
            if j == 1:
                K = K @ ctx.marking_blocks[o]
            loc.append(K)
        op = lay.clock_controlled(loc, j - 1)
        if j < m:
            op = lay.increment(j - 1) @ op
        stage_ops.append(_extend(op))
    v = unmark.conj().T @ (good / math.sqrt(p_final))
    for op in reversed(stage_ops):
        v = op.conj().T @ v
    ledger.charge("uncompute", 2 * ctx.marking_charge + sum(ctx.gpe_charges))

    x_hat = _extract_solution(ctx, ext_lay, v)
    post = float(np.vdot(x_hat, x_hat).real)
    target = instance.solution_state
    fid = float(abs(np.vdot(target, x_hat)) ** 2 / post) if post > 0 else 0.0

    steps = 2 * r_f + 1
    analytic = cost_totals(plan.schedule, ext.stage_costs, 1)
    analytic.state_preparations *= steps
    analytic.stage_applications = [n * steps for n in analytic.stage_applications]
    analytic.extra = {
        "unmark": steps * ctx.marking_charge,
        "inversion": steps * inv_charge,
        "uncompute": 2 * ctx.marking_charge + sum(ctx.gpe_charges),
    }
    good_prep = float(np.linalg.norm(ctx.good_part(ctx.unmark @ prep.state)))
    p_dinv_bm = vta.profile().q[-1] ** 2
    report = SolveReport(
        fidelity=fid,
        success_probability=p_final,
        postselection_probability=post,
        inversion_amplitude=a,
        inversion_ratio=(a / good_prep) ** 2,
        expected_inversion_ratio=p_succ / (36 * p_dinv_bm),
        final_rounds=r_f,
        l=plan.l,
        ledger_matches=ledger.counts() == analytic.counts(),
    )
    return SolveResult(x_hat / math.sqrt(post), ledger, analytic, report, prep.ledger)


def _sparse_of(op):
    """Recover the sparse matrix behind a wrapped operator."""
    for attr in ("A", "matrix"):
        M = getattr(op, attr, None)
        if M is not None and sp.issparse(M):
            return M
    return sp.csr_matrix(op.matmat(np.eye(op.shape[1], dtype=complex)))


def _extract_solution(ctx, ext_lay, v):
    """Project on clock 0, cont'd flag, |+>|+>, |0>_blk, inversion ancilla 0; return the system vector."""
    walk = ctx.walk
    T = v.reshape(ext_lay.outer, ext_lay.m, 4, 2, 2, walk.walk_dim, 2)
    local = np.einsum("obaw,b,a->ow", T[:, 0, CONTD, :, :, :, 0], PLUS, PLUS)
    out = np.zeros(walk.eigenvectors.shape[0], dtype=complex)
    for o in range(ext_lay.outer):
        out += walk.block_zero_component(o, local[o])
    return out


@dataclass(frozen=True)
class GroverExpectations:
    norm_Ainv: float
    solution_norm: float
    outcome_probability: float
    guaranteed_floor: float
    threshold: float = 0.504
    eps_lin: float = 1 / 60


def grover_fixture(d, w=0):
    """Search-to-linear-system instance: outcome w of the solution marks the item."""
    if d < 15:
        raise ParameterError("the outcome bound needs d >= 15")
    if not 0 <= w < d:
        raise ParameterError("marked index out of range")
    plus = np.ones(d) / math.sqrt(d)
    P = np.outer(plus, plus)
    A = (np.eye(d) - P) / math.sqrt(d) + P
    b = np.ones(d) / math.sqrt(d)
    b[w] = -1 / math.sqrt(d)
    inst = LinearSystemInstance(A.astype(complex), b.astype(complex))
    norm = math.sqrt((5 * d * d - 8 * d + 4) / d**2)
    overlap = abs((1 + 2 / math.sqrt(d) - 2 / d) / math.sqrt(d) - 2) / norm
    exp = GroverExpectations(
        norm_Ainv=math.sqrt(d),
        solution_norm=norm,
        outcome_probability=overlap**2,
        guaranteed_floor=(overlap - 1 / 60) ** 2,
    )
    return inst, exp
