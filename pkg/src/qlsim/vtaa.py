"""Variable-time amplitude amplification (VTAA).

A variable-time algorithm is a chain of unitaries A_1..A_m acting on a state
psi_0, together with nested clock projections Pi_0 <= ... <= Pi_m (which
branches have halted) and a flag projection Pi_b (which halted branches
failed).  Nested amplification interleaves A_j with r_j rounds of amplitude
amplification toward the complement of Pi_j Pi_b.

Two execution backends are provided:

* ``matrix``: composes the actual operators.  A fast pass tracks the state
  vector directly; an instrumented pass re-applies every operator through the
  recursive definition so that oracle calls are counted exactly.
* ``analytic``: propagates amplitudes only, using the plain-composition
  amplitude profile and the sin((2r+1) arcsin a) law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .errors import (
    ContractError,
    OvershootError,
    ParameterError,
    ResourceError,
    ShapeError,
)
from .numerics import TAU_AMP, TAU_UNIT, random_unitary

DEFAULT_DIMENSION_CAP = 4096


# --- projections -------------------------------------------------------------

class Projector:
    """Orthogonal projection stored either as a 0/1 diagonal mask or a dense matrix."""

    def __init__(self, data):
        data = np.asarray(data)
        if data.ndim == 1:
            self.mask = data.astype(float)
            self.matrix = None
        elif data.ndim == 2 and data.shape[0] == data.shape[1]:
            self.mask = None
            self.matrix = data.astype(complex)
        else:
            raise ShapeError("projection must be a mask vector or a square matrix")

    @property
    def dim(self):
        return self.mask.shape[0] if self.mask is not None else self.matrix.shape[0]

    def apply(self, v):
        if self.mask is not None:
            return self.mask[:, None] * v if v.ndim == 2 else self.mask * v
        return self.matrix @ v

    def dense(self):
        if self.mask is not None:
            return np.diag(self.mask).astype(complex)
        return self.matrix

    @classmethod
    def of(cls, data):
        return data if isinstance(data, Projector) else cls(data)


def _as_operator(A, dim):
    if isinstance(A, LinearOperator):
        op = A
    elif sp.issparse(A):
        op = aslinearoperator(sp.csr_matrix(A))
    else:
        op = aslinearoperator(np.asarray(A, dtype=complex))
    if op.shape != (dim, dim):
        raise ShapeError(f"operator shape {op.shape} does not match dimension {dim}")
    return op


def _dense_of(op, dim):
    return op.matmat(np.eye(dim, dtype=complex))


# --- domain types --------------------------------------------------------------

@dataclass
class VariableTimeAlgorithm:
    """Clock projections Pi_0..Pi_m, flag projection Pi_b, algorithms A_1..A_m and psi_0."""

    clock_projections: list
    flag_projection: object
    algorithms: list
    psi0: np.ndarray
    stage_costs: list = None
    psi0_cost: float = 1

    def __post_init__(self):
        self.psi0 = np.asarray(self.psi0, dtype=complex)
        n = self.psi0.shape[0]
        self.clock_projections = [Projector.of(p) for p in self.clock_projections]
        self.flag_projection = Projector.of(self.flag_projection)
        self.algorithms = [_as_operator(A, n) for A in self.algorithms]
        if len(self.clock_projections) != len(self.algorithms) + 1:
            raise ShapeError("need m + 1 clock projections for m algorithms")
        for p in self.clock_projections + [self.flag_projection]:
            if p.dim != n:
                raise ShapeError("projection dimension mismatch")
        if self.stage_costs is None:
            self.stage_costs = [1] * self.m
        if len(self.stage_costs) != self.m:
            raise ShapeError("one cost per algorithm is required")
        if any(c < 0 for c in self.stage_costs) or self.psi0_cost < 0:
            raise ParameterError("costs must be nonnegative")

    @property
    def m(self):
        return len(self.algorithms)

    @property
    def dim(self):
        return self.psi0.shape[0]

    def halted_bad(self, j, v):
        """Pi_j Pi_b v."""
        return self.clock_projections[j].apply(self.flag_projection.apply(v))

    def potentially_good(self, j, v):
        """(I - Pi_j Pi_b) v."""
        return v - self.halted_bad(j, v)

    def good_amplitude(self, j, v):
        return float(np.linalg.norm(self.potentially_good(j, v)))

    def plain_states(self):
        """[psi_0, A_1 psi_0, A_2 A_1 psi_0, ...]."""
        out = [self.psi0]
        for A in self.algorithms:
            out.append(A.matvec(out[-1]))
        return out

    def profile(self):
        """Plain-composition amplitude profile q_0..q_m."""
        states = self.plain_states()
        q = [self.good_amplitude(j, s) for j, s in enumerate(states)]
        return AmplitudeProfile(tuple(q), tuple(self.stage_costs), self.psi0_cost)


@dataclass(frozen=True)
class AmplitudeProfile:
    """Input of the analytic backend: q_j = ||(I - Pi_j Pi_b) A_j ... A_1 psi_0||."""

    q: tuple
    stage_costs: tuple
    psi0_cost: float = 1

    @property
    def m(self):
        return len(self.q) - 1


@dataclass(frozen=True)
class ThresholdVector:
    values: tuple

    def __post_init__(self):
        if any(a < 0 for a in self.values):
            raise ParameterError("thresholds must be nonnegative")

    @property
    def total(self):
        return float(sum(self.values))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, j):
        return self.values[j]


@dataclass(frozen=True)
class AmplificationSchedule:
    rounds: tuple

    def __post_init__(self):
        if any(int(r) != r or r < 0 for r in self.rounds):
            raise ParameterError("round counts must be nonnegative integers")
        object.__setattr__(self, "rounds", tuple(int(r) for r in self.rounds))

    @classmethod
    def trivial(cls, m):
        return cls((0,) * m)

    @property
    def m(self):
        return len(self.rounds)

    @property
    def steps(self):
        return tuple(2 * r + 1 for r in self.rounds)

    @property
    def nontrivial_stages(self):
        """1-based indices s_1 < ... < s_l of stages with r_j >= 1."""
        return tuple(j + 1 for j, r in enumerate(self.rounds) if r >= 1)

    @property
    def l(self):
        return len(self.nontrivial_stages)

    def to_json(self):
        return {"rounds": list(self.rounds)}


@dataclass(frozen=True)
class AmplitudeTrace:
    """Per-stage amplitudes.  Index j-1 holds stage j."""

    pre: tuple
    post: tuple
    steps: tuple
    profile: tuple

    @property
    def m(self):
        return len(self.pre)

    @property
    def loss_factors(self):
        return tuple(
            (p / (s * a)) if a > 0 else 1.0 for a, p, s in zip(self.pre, self.post, self.steps)
        )

    @property
    def total_loss(self):
        return float(np.prod(self.loss_factors)) if self.m else 1.0

    @property
    def final_amplitude(self):
        return self.post[-1] if self.m else 1.0

    @property
    def sqrt_p_succ(self):
        return self.profile[-1]

    def post_amplitude(self, j):
        """tilde a_j with tilde a_0 = 1."""
        return 1.0 if j == 0 else self.post[j - 1]

    def to_json(self):
        return {
            "pre": list(self.pre),
            "post": list(self.post),
            "steps": list(self.steps),
            "profile": list(self.profile),
            "loss_factors": list(self.loss_factors),
        }


@dataclass
class CostLedger:
    """Oracle-call counts.  Units: psi_0 preparations (O_b) and stage cost units (O_A)."""

    stage_costs: tuple
    psi0_cost: float
    state_preparations: int = 0
    stage_applications: list = None
    extra: dict = field(default_factory=dict)
    source: str = "instrumented"
    merged_total: float | None = None

    def __post_init__(self):
        if self.stage_applications is None:
            self.stage_applications = [0] * len(self.stage_costs)

    @property
    def oracle_b(self):
        return self.psi0_cost * self.state_preparations

    @property
    def oracle_a(self):
        base = sum(c * n for c, n in zip(self.stage_costs, self.stage_applications))
        return base + sum(self.extra.values())

    @property
    def total(self):
        return self.oracle_a + self.oracle_b

    def charge(self, name, units):
        self.extra[name] = self.extra.get(name, 0) + units

    def counts(self):
        return (self.state_preparations, tuple(self.stage_applications), dict(self.extra))

    def matches(self, other):
        return self.counts() == other.counts() and self.total == other.total

    def to_json(self):
        return {
            "source": self.source,
            "state_preparations": self.state_preparations,
            "stage_applications": list(self.stage_applications),
            "stage_costs": list(self.stage_costs),
            "psi0_cost": self.psi0_cost,
            "extra": dict(self.extra),
            "oracle_a": self.oracle_a,
            "oracle_b": self.oracle_b,
            "total": self.total,
        }


@dataclass
class RunResult:
    state: np.ndarray | None
    trace: AmplitudeTrace
    ledger: CostLedger
    schedule: AmplificationSchedule


# --- axioms ----------------------------------------------------------------------

@dataclass(frozen=True)
class AxiomCheck:
    name: str
    passed: bool
    violation: float


@dataclass(frozen=True)
class AxiomReport:
    checks: tuple

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _norm(M):
    """Spectral norm for moderate sizes, Frobenius (an upper bound) beyond that."""
    if M.size == 0:
        return 0.0
    if min(M.shape) <= 600:
        return float(np.linalg.norm(M, 2))
    return float(np.linalg.norm(M))


def validate_axioms(vta: VariableTimeAlgorithm, tol=TAU_UNIT):
    """Check the axioms of a variable-time algorithm and the monotone amplitude chain."""
    checks = []
    n, m = vta.dim, vta.m
    P = vta.clock_projections
    Pb = vta.flag_projection
    masks = all(p.mask is not None for p in P) and Pb.mask is not None

    def add(name, value):
        checks.append(AxiomCheck(name, value <= tol, float(value)))

    if masks:
        add("clock_zero", float(np.max(np.abs(P[0].mask))))
        add("clock_identity", float(np.max(np.abs(P[m].mask - 1.0))))
        for j, p in enumerate(P + [Pb]):
            add(f"projection_{j}", float(np.max(np.abs(p.mask * p.mask - p.mask))))
        for j in range(m + 1):
            for k in range(j, m + 1):
                add(f"ordering_{j}_{k}", float(np.max(np.abs(P[k].mask * P[j].mask - P[j].mask))))
        add("flag_commutes", 0.0)
    else:
        D = [p.dense() for p in P]
        B = Pb.dense()
        I = np.eye(n)
        add("clock_zero", _norm(D[0]))
        add("clock_identity", _norm(D[m] - I))
        for j, p in enumerate(D + [B]):
            add(f"projection_{j}", max(_norm(p @ p - p), _norm(p - p.conj().T)))
        for j in range(m + 1):
            for k in range(j, m + 1):
                add(f"ordering_{j}_{k}", _norm(D[k] @ D[j] - D[j]))
        add("flag_commutes", max(_norm(B @ p - p @ B) for p in D))
    for j in range(1, m + 1):
        prev = P[j - 1]
        if prev.mask is not None:
            idx = np.nonzero(prev.mask > 0.5)[0]
            if idx.size == 0:
                add(f"controlled_{j}", 0.0)
                continue
            E = np.zeros((n, idx.size), dtype=complex)
            E[idx, np.arange(idx.size)] = 1.0
            add(f"controlled_{j}", _norm(vta.algorithms[j - 1].matmat(E) - E))
        else:
            Dp = prev.dense()
            add(f"controlled_{j}", _norm(vta.algorithms[j - 1].matmat(Dp) - Dp))
    q = vta.profile().q
    add("initial_amplitude", abs(q[0] - np.linalg.norm(vta.psi0)))
    drops = [max(0.0, q[j + 1] - q[j]) for j in range(m)]
    add("monotone_chain", max(drops) if drops else 0.0)
    return AxiomReport(tuple(checks))


# --- step counts ------------------------------------------------------------------

def tunable_step_count(alpha, a, rel_tol=1e-12):
    """Least r >= 0 with (2r+1) a >= sqrt(alpha)/3."""
    if not 0 <= alpha:
        raise ParameterError("threshold must be nonnegative")
    if a < 0:
        raise ParameterError("amplitude must be nonnegative")
    target = math.sqrt(alpha) / 3
    if a == 0:
        if alpha > 0:
            raise ParameterError("threshold unreachable from zero amplitude")
        return 0
    r = max(math.ceil(target / (2 * a) - 0.5 - rel_tol), 0)
    while (2 * r + 1) * a < target * (1 - rel_tol):
        r += 1
    while r > 0 and (2 * r - 1) * a >= target * (1 - rel_tol):
        r -= 1
    return r


def amplified(a, steps):
    """sin(steps * arcsin a)."""
    return math.sin(steps * math.asin(min(a, 1.0)))


# --- matrix backend ---------------------------------------------------------------

class _Householder:
    """Unitary P with P e_0 = psi_0 (one state preparation)."""

    def __init__(self, psi0):
        n = psi0.shape[0]
        s = psi0[0] / abs(psi0[0]) if abs(psi0[0]) > 1e-300 else 1.0
        e = np.zeros(n, dtype=complex)
        e[0] = s
        w = e - psi0
        nw = np.linalg.norm(w)
        self.w = w / nw if nw > 1e-14 else None
        self.s = s

    def apply(self, v):
        v = v.copy()
        v[0] *= self.s
        if self.w is not None:
            v = v - 2 * self.w * np.vdot(self.w, v)
        return v

    def apply_adjoint(self, v):
        if self.w is not None:
            v = v - 2 * self.w * np.vdot(self.w, v)
        else:
            v = v.copy()
        v[0] *= np.conj(self.s)
        return v


class _InstrumentedRun:
    """Applies M_j = tilde A_j P recursively, counting every oracle call."""

    def __init__(self, vta, schedule, ledger):
        self.vta = vta
        self.rounds = schedule.rounds
        self.ledger = ledger
        self.prep = _Householder(vta.psi0 / np.linalg.norm(vta.psi0))

    def M(self, j, v, adjoint=False):
        if j == 0:
            self.ledger.state_preparations += 1
            return self.prep.apply_adjoint(v) if adjoint else self.prep.apply(v)
        r = self.rounds[j - 1]
        if not adjoint:
            w = self.B(j, v)
            for _ in range(r):
                w = -self.R_chi(j, self.R_good(j, w))
            return w
        w = v
        for _ in range(r):
            w = -self.R_good(j, self.R_chi(j, w))
        return self.B(j, w, adjoint=True)

    def B(self, j, v, adjoint=False):
        A = self.vta.algorithms[j - 1]
        self.ledger.stage_applications[j - 1] += 1
        if adjoint:
            return self.M(j - 1, A.rmatvec(v), adjoint=True)
        return A.matvec(self.M(j - 1, v))

    def R_chi(self, j, v):
        u = self.B(j, v, adjoint=True)
        u = u.copy()
        u[0] = -u[0]
        return self.B(j, u)

    def R_good(self, j, v):
        return v - 2 * self.vta.potentially_good(j, v)


def _trace_pass(vta, rounds_for, factors=None):
    """Fast state-vector pass.  rounds_for(j, a_estimate) returns r_j."""
    psi = vta.psi0
    state = psi
    pre, post, rounds = [], [], []
    for j in range(1, vta.m + 1):
        chi = vta.algorithms[j - 1].matvec(state)
        a = vta.good_amplitude(j, chi)
        est = a * (factors[j - 1] if factors is not None else 1.0)
        r = rounds_for(j, est)
        w = chi
        for _ in range(r):
            w = w - 2 * vta.potentially_good(j, w)
            w = -(w - 2 * chi * np.vdot(chi, w))
        state = w
        pre.append(a)
        post.append(vta.good_amplitude(j, state))
        rounds.append(r)
    return state, pre, post, rounds


def _check_cap(vta, cap):
    if vta.dim > cap:
        raise ResourceError(f"dimension {vta.dim} exceeds the cap {cap}")


def _matrix_run(vta, rounds_for, cap, factors=None, instrument=True):
    _check_cap(vta, cap)
    state, pre, post, rounds = _trace_pass(vta, rounds_for, factors)
    schedule = AmplificationSchedule(tuple(rounds))
    profile = vta.profile().q
    trace = AmplitudeTrace(tuple(pre), tuple(post), schedule.steps, tuple(profile))
    ledger = CostLedger(tuple(vta.stage_costs), vta.psi0_cost)
    if instrument:
        runner = _InstrumentedRun(vta, schedule, ledger)
        e0 = np.zeros(vta.dim, dtype=complex)
        e0[0] = 1.0
        final = runner.M(vta.m, e0)
        scale = np.linalg.norm(vta.psi0)
        if np.linalg.norm(final * scale - state) > 1e-8 * max(1.0, scale):
            raise ContractError("instrumented and fast passes disagree")
    else:
        ledger = cost_totals(schedule, vta.stage_costs, vta.psi0_cost)
    return RunResult(state, trace, ledger, schedule)


# --- analytic backend -------------------------------------------------------------

def _analytic_run(profile: AmplitudeProfile, rounds_for, factors=None):
    q = profile.q
    m = profile.m
    pre, post, rounds = [], [], []
    prev_post = 1.0 * q[0]
    for j in range(1, m + 1):
        a = prev_post * q[j] / q[j - 1] if q[j - 1] > 0 else 0.0
        est = a * (factors[j - 1] if factors is not None else 1.0)
        r = rounds_for(j, est)
        steps = 2 * r + 1
        if steps * a > 1 + 1e-15:
            raise OvershootError(j, steps, a)
        t = amplified(a, steps)
        pre.append(a)
        post.append(t)
        rounds.append(r)
        prev_post = t
    schedule = AmplificationSchedule(tuple(rounds))
    trace = AmplitudeTrace(tuple(pre), tuple(post), schedule.steps, tuple(q))
    ledger = cost_totals(schedule, profile.stage_costs, profile.psi0_cost)
    ledger.source = "analytic"
    return RunResult(None, trace, ledger, schedule)


def _profile_of(vta):
    return vta if isinstance(vta, AmplitudeProfile) else vta.profile()


def run_nested(vta, schedule: AmplificationSchedule, backend="matrix",
               dimension_cap=DEFAULT_DIMENSION_CAP):
    """Run nested amplification with a fixed schedule."""
    if schedule.m != (vta.m):
        raise ShapeError("schedule length must equal the number of stages")

    def rounds_for(j, _a):
        return schedule.rounds[j - 1]

    if backend == "matrix":
        return _matrix_run(vta, rounds_for, dimension_cap)
    if backend == "analytic":
        return _analytic_run(_profile_of(vta), rounds_for)
    raise ParameterError(f"unknown backend {backend!r}")


def run_tunable(vta, thresholds, backend="matrix", dimension_cap=DEFAULT_DIMENSION_CAP,
                amplitude_factors=None):
    """Tunable VTAA: r_j is the least count lifting a_j to sqrt(alpha_j)/3.

    amplitude_factors (optional) multiplies each observed amplitude before the
    step count is chosen, modelling amplitude estimation error.
    """
    th = thresholds if isinstance(thresholds, ThresholdVector) else ThresholdVector(tuple(thresholds))
    if len(th) != vta.m:
        raise ShapeError("one threshold per stage is required")

    def rounds_for(j, a):
        return tunable_step_count(th[j - 1], a)

    if backend == "matrix":
        return _matrix_run(vta, rounds_for, dimension_cap, amplitude_factors)
    if backend == "analytic":
        return _analytic_run(_profile_of(vta), rounds_for, amplitude_factors)
    raise ParameterError(f"unknown backend {backend!r}")


def transition_amplitudes(vta, schedule, j):
    """||(I - Pi_h Pi_b) A_h ... A_{j+1} tilde A_j psi_0|| for h = j..m."""
    sub = AmplificationSchedule(schedule.rounds[:j])
    head = VariableTimeAlgorithm(
        vta.clock_projections[: j + 1], vta.flag_projection, vta.algorithms[:j], vta.psi0,
        list(vta.stage_costs[:j]), vta.psi0_cost,
    )
    state = _trace_pass(head, lambda k, _a: sub.rounds[k - 1])[0] if j > 0 else vta.psi0
    out = [vta.good_amplitude(j, state)]
    for h in range(j + 1, vta.m + 1):
        state = vta.algorithms[h - 1].matvec(state)
        out.append(vta.good_amplitude(h, state))
    return out


# --- cost accounting ----------------------------------------------------------------

def cost_totals(schedule: AmplificationSchedule, stage_costs, psi0_cost=1):
    """Analytic ledger: psi_0 and stage application counts from the nesting recurrence."""
    steps = schedule.steps
    m = len(steps)
    if len(stage_costs) != m:
        raise ShapeError("one cost per stage is required")
    suffix = [1] * (m + 1)
    for j in range(m - 1, -1, -1):
        suffix[j] = suffix[j + 1] * steps[j]
    ledger = CostLedger(tuple(stage_costs), psi0_cost, suffix[0], list(suffix[:m]), source="analytic")
    s = schedule.nontrivial_stages
    l = len(s)
    bounds = (0,) + s + (m,)
    merged = psi0_cost * math.prod(steps[k - 1] for k in s)
    for v in range(1, l + 2):
        lo, hi = bounds[v - 1], bounds[v]
        block = sum(stage_costs[lo:hi])
        merged += block * math.prod(steps[k - 1] for k in s[v - 1:])
    ledger.merged_total = merged
    return ledger


# --- universality and the query-product identity --------------------------------------

@dataclass(frozen=True)
class UniversalityReport:
    forward_checked: bool
    no_overshoot: bool
    loss_bound_holds: bool
    loss_factor: float
    loss_floor: float
    stage_inequalities: bool
    reconstructed: tuple
    reverse_applicable: bool
    reverse_holds: bool
    reverse_loss_ceiling: float

    @property
    def passed(self):
        fwd = (not self.forward_checked) or (
            self.no_overshoot and self.loss_bound_holds and self.stage_inequalities
        )
        rev = (not self.reverse_applicable) or self.reverse_holds
        return fwd and rev


def universality_check(schedule, trace, thresholds=None, tol=1e-12):
    """Forward and reverse directions of the Tunable/nested correspondence."""
    steps = schedule.steps
    a = trace.pre
    nontrivial = [j for j in range(schedule.m) if schedule.rounds[j] >= 1]
    no_overshoot = all(steps[j] * a[j] <= 1 + tol for j in nontrivial)
    loss = float(np.prod([trace.loss_factors[j] for j in nontrivial])) if nontrivial else 1.0
    forward = thresholds is not None
    floor = 1.0
    loss_ok = True
    ineq_ok = True
    if forward:
        alphas = list(thresholds.values if isinstance(thresholds, ThresholdVector) else thresholds)
        total = sum(alphas)
        floor = (5 / 6) ** total
        loss_ok = loss >= floor * (1 - tol)
        for j in nontrivial:
            root = math.sqrt(alphas[j])
            if alphas[j] <= 1:
                ineq_ok &= steps[j] * a[j] < root / 3 + 2 * a[j] + tol
                ineq_ok &= root / 3 + 2 * a[j] < root + tol
                ineq_ok &= root <= 1 + tol
    recon = []
    applicable = no_overshoot
    for j in range(schedule.m):
        if schedule.rounds[j] >= 1:
            if a[j] > 1 / (3 * steps[j]) * (1 + tol):
                applicable = False
            recon.append(9 * steps[j] ** 2 * a[j] ** 2)
        else:
            recon.append(0.0)
    rev_ok = all(x <= 1 + 1e-12 for x in recon)
    ceiling = math.exp(-(4 * math.pi - 8) / (9 * math.pi**3) * sum(recon))
    if applicable:
        rev_ok = rev_ok and loss <= ceiling * (1 + 1e-12)
    return UniversalityReport(
        forward, no_overshoot, loss_ok, loss, floor, ineq_ok, tuple(recon), applicable, rev_ok, ceiling
    )


def query_product_identity(trace, schedule, v, w):
    """Both sides of the query-product representation for nontrivial stages s_v..s_w."""
    s = schedule.nontrivial_stages
    l = len(s)
    if l == 0 and v == w == 0:
        return 1.0, 1.0, 0.0
    if not (1 <= v <= w <= l):
        raise IndexError("need 1 <= v <= w <= l")
    steps = schedule.steps
    lhs = float(math.prod(steps[s[u] - 1] for u in range(v - 1, w)))
    inv_loss = math.prod(1.0 / trace.loss_factors[s[u] - 1] for u in range(v - 1, w))
    prev = s[v - 2] if v >= 2 else 0
    last = s[w - 1]
    rhs = inv_loss * (trace.post_amplitude(last) / trace.post_amplitude(prev))
    rhs *= trace.profile[prev] / trace.profile[last]
    return lhs, float(rhs), abs(lhs - rhs)


# --- threshold optimization and pre-merging -------------------------------------------

def l23_objective(alpha, b, c):
    """sum_v b_v c_v / sqrt(alpha_v)."""
    alpha = np.asarray(alpha, float)
    if np.any(alpha <= 0):
        return math.inf
    return float(np.sum(np.asarray(b) * np.asarray(c) / np.sqrt(alpha)))


def optimize_thresholds(b, c):
    """Minimize sum b_v c_v / sqrt(alpha_v) subject to sum alpha_v = 1.

    Returns (ThresholdVector, objective); the optimum is the l_{2/3} quasinorm
    of the products b_v c_v.
    """
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    if b.shape != c.shape or b.size == 0:
        raise ShapeError("b and c must be nonempty and of equal length")
    if np.any(b <= 0) or np.any(c <= 0):
        raise ParameterError("amplitudes and costs must be positive")
    w = (b * c) ** (2 / 3)
    alpha = w / w.sum()
    objective = float(w.sum() ** 1.5)
    return ThresholdVector(tuple(float(x) for x in alpha)), objective


def premerge(vta: VariableTimeAlgorithm, keep_last):
    """Merge A_1..A_{m-l} into one input algorithm, keeping the last l stages."""
    m = vta.m
    l = keep_last
    if not (0 <= l <= m):
        raise IndexError("need 0 <= l <= m")
    if l == m:
        return vta
    head = vta.algorithms[: m - l]
    merged = head[0]
    for A in head[1:]:
        merged = A * merged
    algorithms = [merged] + vta.algorithms[m - l:]
    projections = [vta.clock_projections[0]] + vta.clock_projections[m - l:]
    costs = [sum(vta.stage_costs[: m - l])] + list(vta.stage_costs[m - l:])
    return VariableTimeAlgorithm(projections, vta.flag_projection, algorithms, vta.psi0, costs, vta.psi0_cost)


def premerged_schedule(schedule, keep_last):
    m = schedule.m
    if keep_last == m:
        return schedule
    if any(schedule.rounds[: m - keep_last]):
        raise ParameterError("merged stages must be trivial")
    return AmplificationSchedule((0,) + schedule.rounds[m - keep_last:])


# --- random instances ------------------------------------------------------------------

def canonical_projections(m, work_dim):
    """Clock (m values) x flag (good, bad) x work register masks."""
    clock = np.repeat(np.arange(m), 2 * work_dim)
    flag = np.tile(np.repeat([0, 1], work_dim), m)
    projections = [(clock < j).astype(float) for j in range(m + 1)]
    return projections, (flag == 1).astype(float), clock, flag


def random_vta(m, work_dim, seed, bad_bias=0.9, halt_fraction=0.5):
    """Random algorithm satisfying the axioms by construction.

    A_j mixes the clock j-1 good block with a Haar unitary, moves part of it to
    clock j, and rotates the remaining (halting) part mostly toward bad.
    """
    rng = np.random.default_rng(seed)
    projections, flag_mask, clock, flag = canonical_projections(m, work_dim)
    n = clock.size
    t = math.asin(math.sqrt(bad_bias))
    h = math.sqrt(halt_fraction)
    algorithms = []
    for j in range(1, m + 1):
        base = (j - 1) * 2 * work_dim
        block = np.arange(base, base + 2 * work_dim)
        good = np.arange(base, base + work_dim)
        U = np.eye(n, dtype=complex)
        U[np.ix_(good, good)] = random_unitary(work_dim, rng)
        S = np.eye(n, dtype=complex)
        if j < m:
            for i in block:
                k = i + 2 * work_dim
                S[np.ix_([i, k], [i, k])] = [[h, -math.sqrt(1 - h * h)], [math.sqrt(1 - h * h), h]]
        R = np.eye(n, dtype=complex)
        for w in range(work_dim):
            g, b = base + w, base + work_dim + w
            R[np.ix_([g, b], [g, b])] = [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]]
        algorithms.append(R @ S @ U)
    psi0 = np.zeros(n, dtype=complex)
    psi0[:work_dim] = rng.normal(size=work_dim) + 1j * rng.normal(size=work_dim)
    psi0 /= np.linalg.norm(psi0)
    costs = [int(x) for x in rng.integers(1, 6, size=m)]
    return VariableTimeAlgorithm(projections, flag_mask, algorithms, psi0, costs, 1)
