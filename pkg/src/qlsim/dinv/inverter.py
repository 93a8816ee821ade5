"""Variable-time algorithm for the discretized inverse state and its deterministic schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from ..encodings import BlockEncoding
from ..errors import ContractError, ParameterError, ResourceError, ScheduleViolation
from ..numerics import phase_aligned_distance
from ..vtaa import (
    DEFAULT_DIMENSION_CAP,
    AmplificationSchedule,
    ThresholdVector,
    VariableTimeAlgorithm,
    run_tunable,
    universality_check,
)
from .core import (
    ANC,
    BAD,
    BIT1,
    BIT2,
    BRANCH,
    CONTD,
    GOOD,
    PLUS,
    WALK,
    X,
    ClockFlagLayout,
    embed,
    gpe_local,
    gpe_quartet,
    make_walk,
    marking_local,
    marking_quartet,
    rotation_local,
    xi_values,
)
from .instance import LinearSystemInstance

MODES = ("quartet", "ideal")


@dataclass(frozen=True)
class DinvSpec:
    """Accuracy and scheduling parameters of the discretized-inverse preparation.

    gpe_mode / bm_mode "ideal" replaces the quartet outputs by their band-exact
    limits outside transition bands.  m and l are filled in by the pipeline.
    """

    c: float = 1.001
    eps_bm: float = 1e-4
    eps_gpe: float = 1e-3
    eps_blk: float = 1e-3
    m: int | None = None
    l: int | None = None
    rho: int = 3
    gpe_mode: str = "quartet"
    bm_mode: str = "quartet"
    backend: str = "spectral"
    stage_error_cap: float = 1 / 3

    def __post_init__(self):
        if not self.c >= 1:
            raise ParameterError("c must be at least 1")
        for name in ("eps_bm", "eps_gpe", "eps_blk"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ParameterError(f"{name} must lie in (0, 1)")
        if self.rho != 3:
            raise ParameterError("only rho = 3 is supported")
        if self.gpe_mode not in MODES or self.bm_mode not in MODES:
            raise ParameterError(f"modes must be one of {MODES}")
        if self.backend not in ("spectral", "matrix"):
            raise ParameterError("backend must be 'spectral' or 'matrix'")
        if self.m is not None and self.m < 1:
            raise ParameterError("m must be positive")
        if self.l is not None and (self.l < 0 or (self.m is not None and self.l > self.m)):
            raise ParameterError("need 0 <= l <= m")

    @property
    def ideal(self):
        return self.gpe_mode == "ideal" and self.bm_mode == "ideal"

    def stage_errors(self, m=None, l=None):
        """Per-stage GPE accuracies for stages 1..m-1.

        The last l-1 stages get eps_gpe / l each; below them the budget halves
        geometrically, so the total stays within eps_gpe.
        """
        m = self.m if m is None else m
        l = self.l if l is None else l
        if m is None:
            raise ParameterError("m is not set")
        l = m if l is None else l
        share = self.eps_gpe / max(l, 1)
        out = []
        for j in range(1, m):
            if j >= m - l + 2:
                e = share
            else:
                e = share / 2.0 ** (m - l + 2 - j)
            out.append(min(e, self.stage_error_cap))
        return tuple(out)

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# --- cumulative coefficients ------------------------------------------------------

def eigenvalue_bands(ratios, m):
    """Band k with |x| in [3^-(k+1), 3^-k), clipped to 0..m-1."""
    mags = np.abs(np.asarray(ratios, dtype=float))
    # a ratio exactly at 3^-(k+1) belongs to band k, where stage k+1 passes it
    k = np.floor(-np.log(mags) / math.log(3) - 1e-10).astype(int)
    return np.clip(k, 0, m - 1)


@dataclass(frozen=True)
class CumulativeCoefficients:
    """GPE outputs xi_{j,u,0/1} (rows: stages 1..m) and cumulative products zeta_{j,u}."""

    xi0: np.ndarray
    xi1: np.ndarray
    bands: np.ndarray
    stage_errors: tuple

    @property
    def m(self):
        return self.xi0.shape[0]

    @cached_property
    def zeta(self):
        """Rows 0..m; row 0 is zero, row j is xi_{j,0} prod_{h<j} xi_{h,1}."""
        m, d = self.xi0.shape
        out = np.zeros((m + 1, d), dtype=complex)
        carry = np.ones(d, dtype=complex)
        for j in range(1, m + 1):
            out[j] = self.xi0[j - 1] * carry
            carry = carry * self.xi1[j - 1]
        return out

    def normalization_defect(self):
        return float(np.max(np.abs(np.abs(self.xi0) ** 2 + np.abs(self.xi1) ** 2 - 1)))

    def leakage_violations(self, tol=1e-12):
        """(u, j, |zeta|, bound) for every leakage bound that fails."""
        eps = self.stage_errors
        bad = []
        for u, k in enumerate(self.bands):
            for j in range(1, self.m + 1):
                z = abs(self.zeta[j, u])
                if j <= k - 1:
                    bound = eps[j - 1]
                elif j >= k + 2:
                    bound = math.prod(eps[h - 1] for h in range(k + 1, j))
                else:
                    continue
                if z > bound + tol:
                    bad.append((u, j, z, bound))
        return bad


def coefficient_table(ratios, quartets, stage_errors, snap, m):
    d = ratios.shape[0]
    xi0 = np.ones((m, d), dtype=complex)
    xi1 = np.zeros((m, d), dtype=complex)
    for j, q in enumerate(quartets, start=1):
        xi0[j - 1], xi1[j - 1] = xi_values(q, ratios, snap)
    return CumulativeCoefficients(xi0, xi1, eigenvalue_bands(ratios, m), tuple(stage_errors))


# --- the variable-time algorithm --------------------------------------------------

@dataclass
class InverterContext:
    """Everything needed to interpret, extend or uncompute the inverter algorithm."""

    be: BlockEncoding
    b: np.ndarray
    spec: DinvSpec
    walk: object
    layout: ClockFlagLayout
    marking: object
    gpe: list
    coefficients: CumulativeCoefficients
    ideal_coefficients: CumulativeCoefficients
    marking_charge: int
    gpe_charges: list
    marking_blocks: list
    gpe_blocks: list = field(default_factory=list)

    @property
    def m(self):
        return self.layout.m

    @cached_property
    def unmark(self):
        """Branch unmarking on every clock value."""
        return self.layout.on_every_clock([B.conj().T for B in self.marking_blocks])

    @property
    def gamma(self):
        return self.walk.eigenvectors.conj().T @ self.b

    def embed_clock_system(self, C):
        """Full-space vector for sum_x |x, good, +, +> |0>_blk sum_u C[u, x] |phi_u>."""
        lay = self.layout
        v = np.zeros(lay.dim, dtype=complex)
        if self.walk.kind == "spectral":
            for u in range(C.shape[0]):
                for x in range(lay.m):
                    if C[u, x] != 0:
                        loc = lay.local_state(GOOD, PLUS, PLUS, C[u, x] * PLUS)
                        v += lay.place(u, x, loc)
            return v
        V = self.walk.eigenvectors
        for x in range(lay.m):
            sysvec = V @ C[:, x]
            loc = lay.local_state(GOOD, PLUS, PLUS, self.walk.block_zero_state(0, sysvec))
            v += lay.place(0, x, loc)
        return v

    def dinv_coefficients(self, coefficients=None, restrict=True):
        """C[u, x] of the discretized inverse state (x = j-1 carries zeta_j 3^j / 3^m)."""
        co = coefficients or self.coefficients
        m = self.m
        g = self.gamma
        C = np.zeros((g.shape[0], m), dtype=complex)
        for j in range(1, m + 1):
            C[:, j - 1] = g * co.zeta[j] * 3.0 ** (j - m)
        if restrict:
            k = co.bands
            keep = np.zeros_like(C, dtype=bool)
            for u in range(C.shape[0]):
                keep[u, k[u]] = True
                if k[u] >= 1:
                    keep[u, k[u] - 1] = True
            C = np.where(keep, C, 0)
        return C

    def ideal_state(self, restrict=True, coefficients=None):
        return self.embed_clock_system(self.dinv_coefficients(coefficients, restrict))

    def good_part(self, v):
        return np.where(self.layout.flag == GOOD, v, 0)


class InverterVTA(VariableTimeAlgorithm):
    """VariableTimeAlgorithm carrying its construction context."""

    context: InverterContext


def _local_stage_blocks(ctx: InverterContext, j):
    """K_j per outer index: rotation, GPE and flag flip (marking folded into stage 1)."""
    lay, walk, spec = ctx.layout, ctx.walk, ctx.spec
    dims = lay.legs
    m = lay.m
    Xb2 = embed(X, [BIT2], dims)
    out = []
    for o in range(lay.outer):
        K = Xb2
        if j < m:
            G = ctx.gpe_blocks[j - 1][o]
            R = embed(rotation_local(j, m), [BIT1, BIT2], dims)
            K = R @ G @ Xb2
        if j == 1:
            K = K @ ctx.marking_blocks[o]
        out.append(K)
    return out


def _stage_operator(lay, blocks, j):
    op = lay.clock_controlled(blocks, j - 1)
    if j < lay.m:
        op = lay.increment(j - 1) @ op
    return op


def build_inverter_vta(be: BlockEncoding, b, spec: DinvSpec, dimension_cap=DEFAULT_DIMENSION_CAP):
    """Construct the clock/flag algorithm C_1..C_m for the discretized inverse state."""
    if not be.rescaled:
        raise ContractError("block encoding must be rescaled with rescale_for_solver")
    b = np.asarray(b, dtype=complex)
    m = be.m
    l = spec.l if spec.l is not None else m
    spec = replace(spec, m=m, l=min(l, m))
    walk = make_walk(be, spec.backend)
    lay = ClockFlagLayout(m, walk.outer, walk.walk_dim)
    if lay.dim > dimension_cap:
        raise ResourceError(f"dimension {lay.dim} exceeds the cap {dimension_cap}")
    errs = spec.stage_errors()
    marking = marking_quartet(spec.eps_bm)
    gpes = [gpe_quartet(j, errs[j - 1]) for j in range(1, m)]
    snap_bm = spec.bm_mode == "ideal"
    snap_gpe = spec.gpe_mode == "ideal"
    ratios = walk.eigenvalues / be.alpha_A
    dims = lay.legs
    marking_blocks = [
        embed(marking_local(walk, o, marking, snap_bm), [BRANCH, ANC, WALK], dims)
        for o in range(lay.outer)
    ]
    gpe_blocks = [
        [embed(gpe_local(walk, o, q, snap_gpe), [BRANCH, BIT2, WALK], dims) for o in range(lay.outer)]
        for q in gpes
    ]
    ctx = InverterContext(
        be=be, b=b, spec=spec, walk=walk, layout=lay, marking=marking, gpe=gpes,
        coefficients=coefficient_table(ratios, gpes, errs, snap_gpe, m),
        ideal_coefficients=coefficient_table(ratios, gpes, errs, True, m),
        marking_charge=marking.query_charge,
        gpe_charges=[q.query_charge for q in gpes],
        marking_blocks=marking_blocks, gpe_blocks=gpe_blocks,
    )
    algorithms = [_stage_operator(lay, _local_stage_blocks(ctx, j), j) for j in range(1, m + 1)]
    costs = []
    for j in range(1, m + 1):
        cost = ctx.gpe_charges[j - 1] if j < m else 0
        if j == 1:
            cost += ctx.marking_charge
        costs.append(cost)
    psi0 = np.zeros(lay.dim, dtype=complex)
    for o in range(lay.outer):
        loc = lay.local_state(CONTD, PLUS, PLUS, walk.block_zero_state(o, b))
        psi0 += lay.place(o, 0, loc)
    projections = [lay.clock_projection(j) for j in range(m + 1)]
    vta = InverterVTA(projections, lay.flag_projection(), algorithms, psi0, costs, 1)
    vta.context = ctx
    return vta


# --- deterministic schedule -------------------------------------------------------

@dataclass(frozen=True)
class DeterministicPlan:
    l: int
    unclamped_l: int
    schedule: AmplificationSchedule
    thresholds: ThresholdVector | None

    def to_json(self):
        return {
            "l": self.l,
            "unclamped_l": self.unclamped_l,
            "schedule": self.schedule.to_json(),
            "thresholds": None if self.thresholds is None else list(self.thresholds.values),
        }


def premerge_count(sqrt_p_estimate, c):
    """Floor(log_3(2 / (sqrt(5) c sqrt_p)))."""
    if not sqrt_p_estimate > 0:
        raise ParameterError("the amplitude estimate must be positive")
    x = 2.0 / (math.sqrt(5) * c * sqrt_p_estimate)
    return int(math.floor(math.log(x, 3) + 1e-12))


def deterministic_plan(spec: DinvSpec, sqrt_p_estimate, profile=None):
    """Pre-merge count l, schedule (1,..,1,3,..,3) and thresholds c^2 9^(j-m+l) q_j^2.

    profile (q_0..q_m, optional) supplies the potentially-good amplitudes used
    for the thresholds; without it thresholds are left undefined.
    """
    if spec.m is None:
        raise ParameterError("spec.m must be set")
    m = spec.m
    raw = premerge_count(sqrt_p_estimate, spec.c)
    l = min(max(raw, 0), m)
    rounds = tuple(1 if j >= m - l + 1 else 0 for j in range(1, m + 1))
    thresholds = None
    if profile is not None:
        q = profile.q if hasattr(profile, "q") else tuple(profile)
        vals = tuple(
            spec.c**2 * 9.0 ** (j - m + l) * q[j] ** 2 if j >= m - l + 1 else 0.0
            for j in range(1, m + 1)
        )
        thresholds = ThresholdVector(vals)
        if thresholds.total > 1 + 1e-12:
            raise ScheduleViolation(f"threshold sum {thresholds.total:.6g} exceeds 1")
    return DeterministicPlan(l, raw, AmplificationSchedule(rounds), thresholds)


# --- preparation ----------------------------------------------------------------

@dataclass
class DinvResult:
    state: np.ndarray
    trace: object
    ledger: object
    family: "ProbabilityFamily"
    plan: DeterministicPlan
    vta: InverterVTA
    error: float
    error_bound: float

    @property
    def final_amplitude(self):
        return self.trace.final_amplitude

    def to_json(self):
        return {
            "plan": self.plan.to_json(),
            "trace": self.trace.to_json(),
            "ledger": self.ledger.to_json(),
            "family": self.family.to_json(),
            "error": self.error,
            "error_bound": self.error_bound,
        }


def error_bound(family, constant=10.0):
    """Configured bound C (eps_gpe + eps_bm / sqrt(p_succ)) on the output error."""
    return constant * (family.eps_gpe + family.eps_bm / math.sqrt(family.p_succ))


def prepare_dinv(instance: LinearSystemInstance, spec: DinvSpec = DinvSpec(), sqrt_p_estimate=None,
                 dimension_cap=DEFAULT_DIMENSION_CAP, check=True):
    """Run Tunable VTAA with the deterministic plan on the inverter algorithm.

    sqrt_p_estimate defaults to the exact success amplitude of the algorithm in
    use.  With check=True the realized schedule and the final success amplitude
    are asserted; departures raise ScheduleViolation.
    """
    be = instance.block_encoding()
    m = be.m
    spec = replace(spec, m=m)
    if sqrt_p_estimate is None:
        probe = build_inverter_vta(be, instance.b, replace(spec, l=spec.l or m), dimension_cap)
        sqrt_p_estimate = probe.profile().q[-1]
    plan = deterministic_plan(spec, sqrt_p_estimate)
    spec = replace(spec, l=plan.l)
    vta = build_inverter_vta(be, instance.b, spec, dimension_cap)
    profile = vta.profile()
    plan = deterministic_plan(spec, sqrt_p_estimate, profile)
    result = run_tunable(vta, plan.thresholds, backend="matrix", dimension_cap=dimension_cap)
    floor = math.sqrt(5) / (9 * spec.c)
    if check:
        if result.schedule.rounds != plan.schedule.rounds:
            raise ScheduleViolation(
                f"realized rounds {result.schedule.rounds} differ from {plan.schedule.rounds}"
            )
        if result.trace.final_amplitude < floor * (1 - 1e-12):
            raise ScheduleViolation(
                f"final amplitude {result.trace.final_amplitude:.6g} below {floor:.6g}"
            )
        if not universality_check(result.schedule, result.trace, plan.thresholds).passed:
            raise ScheduleViolation("universality check failed for the deterministic plan")
    state = vta.context.unmark @ result.state
    family = probability_family(instance, spec, vta=vta)
    good = vta.context.good_part(state)
    ideal = vta.context.ideal_state(restrict=True)
    err = phase_aligned_distance(good / np.linalg.norm(good), ideal / np.linalg.norm(ideal))
    result.ledger.charge("unmark", vta.context.marking_charge)
    return DinvResult(state, result.trace, result.ledger, family, plan, vta, err, error_bound(family))


# --- probabilities --------------------------------------------------------------

@dataclass(frozen=True)
class ProbabilityFamily:
    p_succ: float
    p_dinv1: float
    p_dinv: float
    p_dinv_m: float
    p_bm: float
    eps_gpe: float
    eps_bm: float
    m: int
    l: int
    sum_A: float
    sum_B: float
    sum_C: float
    p_dinv_ideal: float

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _closed_form(coeff: CumulativeCoefficients, weights, m):
    """(p_dinv1, p_dinv, p_dinv_m, q_j^2 for j = 0..m) from cumulative coefficients."""
    z2 = np.abs(coeff.zeta) ** 2
    k = coeff.bands
    scale = 9.0 ** (np.arange(m + 1) - m)
    cols = np.arange(weights.shape[0])
    p1 = float(np.sum(weights * 9.0 ** (k + 1 - m)))
    near = z2[k + 1, cols] * 9.0 ** (k + 1 - m) + np.where(k >= 1, z2[k, cols] * 9.0 ** (k - m), 0)
    p_dinv = float(np.sum(weights * near))
    p_m = float(np.sum(weights * (z2 * scale[:, None]).sum(axis=0)))
    qsq = []
    for j in range(m + 1):
        halted = (z2[1:j + 1] * scale[1:j + 1, None]).sum(axis=0)
        cont = z2[j + 1:].sum(axis=0)
        qsq.append(float(np.sum(weights * (halted + cont))))
    return p1, p_dinv, p_m, qsq


def threshold_sum(qsq, m, l):
    return float(sum(qsq[j] * 9.0 ** (j - m + l) for j in range(m - l + 1, m + 1)))


def probability_family(instance: LinearSystemInstance, spec: DinvSpec = DinvSpec(), vta=None):
    """All five success probabilities plus the three threshold sums."""
    be = instance.block_encoding()
    m = be.m
    if vta is None:
        vta = build_inverter_vta(be, instance.b, replace(spec, m=m))
    ctx = vta.context
    q = vta.profile().q
    p_bm = q[-1] ** 2
    # the threshold-sum chains are stated for 1 <= l <= m; l = 0 leaves an empty sum
    l = max(ctx.spec.l, 1)
    weights = np.abs(ctx.gamma) ** 2
    lam = ctx.walk.eigenvalues
    p_succ = float(np.sum(weights / lam**2)) / be.alpha_Ainv**2
    p1, p_dinv, p_m, qsq_B = _closed_form(ctx.coefficients, weights, m)
    _, p_dinv_A, _, qsq_A = _closed_form(ctx.ideal_coefficients, weights, m)
    qsq_C = [x * x for x in q]
    return ProbabilityFamily(
        p_succ=p_succ, p_dinv1=p1, p_dinv=p_dinv, p_dinv_m=p_m, p_bm=p_bm,
        eps_gpe=float(sum(ctx.coefficients.stage_errors)), eps_bm=ctx.spec.eps_bm, m=m, l=l,
        sum_A=threshold_sum(qsq_A, m, l), sum_B=threshold_sum(qsq_B, m, l),
        sum_C=threshold_sum(qsq_C, m, l), p_dinv_ideal=p_dinv_A,
    )


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lower: float
    value: float
    upper: float
    passed: bool


@dataclass(frozen=True)
class BoundsReport:
    checks: tuple

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failed(self):
        return [c for c in self.checks if not c.passed]

    def to_json(self):
        return [c.__dict__ for c in self.checks]


def check_multiplicative_bounds(family: ProbabilityFamily, rel_tol=1e-10):
    """Evaluate the probability chains and the threshold-sum chains."""
    f = family
    e = f.eps_gpe
    nine_l = 9.0**f.l
    rows = [
        ("p_succ vs p_dinv1", f.p_dinv1 / 9, f.p_succ, f.p_dinv1),
        ("p_dinv vs p_dinv1", f.p_dinv1 * (1 - e * e) / 9, f.p_dinv, f.p_dinv1),
        ("p_dinv_m vs p_dinv", f.p_dinv, f.p_dinv_m, f.p_dinv * (1 + 729 * e * e / (1 - e) ** 2)),
        ("p_bm vs p_dinv_m", f.p_dinv_m - 4 * f.eps_bm, f.p_bm, f.p_dinv_m + 4 * f.eps_bm),
        ("sum_A vs p_dinv", f.p_dinv_ideal * nine_l, f.sum_A, 1.25 * f.p_dinv_ideal * nine_l),
        ("sum_B vs p_dinv_m", f.p_dinv_m * nine_l, f.sum_B, 1.25 * f.p_dinv_m * nine_l),
        ("sum_C vs sum_B", f.sum_B - 4.5 * f.eps_bm * nine_l, f.sum_C, f.sum_B + 4.5 * f.eps_bm * nine_l),
    ]
    checks = []
    for name, lo, val, hi in rows:
        slack = rel_tol * max(1.0, abs(val))
        checks.append(InequalityCheck(name, lo, val, hi, bool(lo - slack <= val <= hi + slack)))
    return BoundsReport(tuple(checks))
