"""Preconditioned application pipelines: ODE, eigenvalue estimation and transformation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from ..encodings import cheb_sign_approx
from ..errors import DomainError, NormalizationError, ParameterError, PreconditionFailure
from ..numerics import (
    fidelity,
    matrix_to_json,
    normalize,
    operator_norm,
    phase_aligned_distance,
    vector_to_json,
)
from ..vtaa import DEFAULT_DIMENSION_CAP, CostLedger
from .inversion import inversion_query_count, inversion_solve
from .scaling import inflation_bound, projector_onto, scaling_operator
from .systems import (
    SPECTRUM_TOL,
    ChebCoeffState,
    build_padded_system,
    build_taylor_system,
    cheb_coeff_state,
)

SYSTEMS = ("taylor", "padded-qeve", "padded-qevt")
KINDS = ("ode", "qeve", "qevt", "ground-state", "qevt-block")
PAD_NORM_BOUND = 4.0


# --- nonnormal inputs ----------------------------------------------------------------

@dataclass(frozen=True)
class DiagonalizableMatrix:
    """A = V diag(eigenvalues) V^-1 with real eigenvalues and unit-norm eigenvector columns."""

    basis: np.ndarray
    eigenvalues: np.ndarray

    @property
    def matrix(self):
        return (self.basis * self.eigenvalues) @ np.linalg.inv(self.basis)

    @property
    def dim(self):
        return self.eigenvalues.size

    @property
    def kappa_S(self):
        return float(np.linalg.cond(self.basis))

    def eigenvector(self, j):
        return self.basis[:, j]

    def expansion(self, psi):
        """Coefficients gamma with psi = sum_j gamma_j eigenvector(j)."""
        return np.linalg.solve(self.basis, psi)


def random_diagonalizable(eigenvalues, kappa_S, seed):
    """Random real-spectrum matrix whose eigenvector basis has condition number about kappa_S."""
    if kappa_S < 1:
        raise ParameterError("kappa_S must be at least one")
    eig = np.asarray(eigenvalues, dtype=float)
    d = eig.size
    rng = np.random.default_rng(seed)
    Q1, _ = np.linalg.qr(rng.normal(size=(d, d)))
    Q2, _ = np.linalg.qr(rng.normal(size=(d, d)))
    sv = np.geomspace(1.0, kappa_S, d) if d > 1 else np.ones(1)
    V = (Q1 * sv) @ Q2
    V = V / np.linalg.norm(V, axis=0)
    return DiagonalizableMatrix(V.astype(complex), eig)


def as_diagonalizable(A):
    if isinstance(A, DiagonalizableMatrix):
        return A
    A = np.asarray(A, dtype=complex)
    eig, V = np.linalg.eig(A)
    if np.max(np.abs(eig.imag), initial=0) > SPECTRUM_TOL:
        raise DomainError("spectrum is not real")
    order = np.argsort(eig.real)
    return DiagonalizableMatrix(V[:, order] / np.linalg.norm(V[:, order], axis=0), eig.real[order])


def chebyshev_normalization(A, alpha=None):
    """Normalization putting the spectrum of A / alpha inside [-1/2, 1/2] with ||A / alpha|| <= 1."""
    M = A.matrix if isinstance(A, DiagonalizableMatrix) else np.asarray(A)
    radius = float(np.max(np.abs(np.linalg.eigvals(M))))
    floor = max(operator_norm(M), 2 * radius)
    if alpha is None:
        return floor if floor > 0 else 1.0
    if alpha < floor * (1 - 1e-12):
        raise NormalizationError(f"alpha = {alpha} is below max(||A||, 2 rho(A)) = {floor}")
    return float(alpha)


# --- preconditioned systems ----------------------------------------------------------

@dataclass
class PreconditionReport:
    kind: str
    scale: float
    solution_norm_plain: float
    solution_norm_preconditioned: float
    inverse_norm_plain: float
    inverse_norm_preconditioned: float
    inflation_bound: float
    matrix: np.ndarray = field(repr=False)
    initial_state: np.ndarray = field(repr=False)
    preconditioned_matrix: np.ndarray = field(repr=False)

    @property
    def boost(self):
        return self.solution_norm_preconditioned / self.solution_norm_plain

    @property
    def expected_boost(self):
        return 1 / self.scale

    @property
    def boost_exact(self):
        return abs(self.boost - self.expected_boost) <= 1e-9 * self.expected_boost

    @property
    def within_bound(self):
        return self.inverse_norm_preconditioned <= self.inflation_bound * (1 + 1e-9)

    @property
    def passed(self):
        return self.boost_exact and self.within_bound

    def to_json(self):
        keys = ("kind", "scale", "solution_norm_plain", "solution_norm_preconditioned",
                "inverse_norm_plain", "inverse_norm_preconditioned", "inflation_bound")
        out = {k: getattr(self, k) for k in keys}
        out.update(boost=self.boost, expected_boost=self.expected_boost, boost_exact=self.boost_exact,
                   within_bound=self.within_bound, passed=self.passed)
        return out


def _block_projection(ancilla_vector, system_dim):
    return np.kron(projector_onto(ancilla_vector), np.eye(system_dim))


def precondition_application(system, A_scaled, **params):
    """Scaling operator and norm report for one application system.

    taylor: b, n, k, p.  padded-qeve: psi, n.  padded-qevt: psi, poly (a
    ChebCoeffState whose n sets the block count).
    """
    A = np.asarray(A_scaled, dtype=complex)
    d = A.shape[0]
    try:
        if system == "taylor":
            n, k, p = params["n"], params["k"], params["p"]
            sys_ = build_taylor_system(A, n, k, p)
            M = sys_.matrix
            e0 = np.zeros(sys_.block_count)
            e0[0] = 1
            v = np.kron(e0, params["b"])
            projection = _block_projection(e0, d)
            s = 1 / math.sqrt(k * n)
        elif system == "padded-qeve":
            n = params["n"]
            if n < 3:
                raise ParameterError("the eigenvalue-estimation system needs n >= 3")
            M = build_padded_system(A, n, 0).matrix
            anc = np.zeros(n)
            anc[0], anc[2] = 1 / math.sqrt(2), -1 / math.sqrt(2)
            v = np.kron(anc, params["psi"])
            projection = _block_projection(anc, d)
            s = 1 / math.sqrt(n)
        elif system == "padded-qevt":
            poly: ChebCoeffState = params["poly"]
            n = poly.n
            M = build_padded_system(A, n, 1).matrix
            anc = np.concatenate([poly.amplitudes, np.zeros(n)])
            v = np.kron(anc, params["psi"])
            projection = _block_projection(anc, d)
            s = poly.max_norm() / (math.sqrt(n) * poly.alpha)
        else:
            raise ParameterError(f"system must be one of {SYSTEMS}")
    except KeyError as exc:
        raise ParameterError(f"missing parameter {exc.args[0]!r} for {system}") from exc
    pre = scaling_operator(projection, s)
    SM = pre.S @ M
    plain_inv = np.linalg.inv(M)
    report = PreconditionReport(
        kind=system,
        scale=s,
        solution_norm_plain=float(np.linalg.norm(plain_inv @ v)),
        solution_norm_preconditioned=float(np.linalg.norm(np.linalg.solve(SM, v))),
        inverse_norm_plain=operator_norm(plain_inv),
        inverse_norm_preconditioned=operator_norm(np.linalg.inv(SM)),
        inflation_bound=inflation_bound(M, pre),
        matrix=M,
        initial_state=v,
        preconditioned_matrix=SM,
    )
    return pre, report


# --- parameter records ---------------------------------------------------------------

@dataclass(frozen=True)
class OdeParams:
    t: float
    n: int | None = None
    k: int | None = None
    p: int | None = None
    alpha: float | None = None
    tau_points: int = 65


@dataclass(frozen=True)
class QeveParams:
    kappa_S: float = 1.0
    n: int | None = None
    alpha: float | None = None
    fit_points: int = 4001


@dataclass(frozen=True)
class QevtParams:
    coefficients: tuple
    basis: str = "chebyshev"
    n: int | None = None
    alpha: float | None = None


@dataclass(frozen=True)
class GroundStateParams:
    delta_A: float
    kappa_S: float | None = None
    gamma_0: float | None = None
    alpha: float | None = None


@dataclass(frozen=True)
class QevtBlockParams:
    coefficients: tuple
    basis: str = "chebyshev"
    alpha_p: float | None = None
    alpha: float | None = None


@dataclass
class ApplicationResult:
    kind: str
    output: object
    ledger: CostLedger
    report: dict
    passed: bool

    def to_json(self):
        out = self.output
        if isinstance(out, np.ndarray):
            out = matrix_to_json(out) if out.ndim == 2 else vector_to_json(out)
        return {
            "kind": self.kind,
            "output": out,
            "ledger": self.ledger.to_json(),
            "report": _jsonable(self.report),
            "passed": self.passed,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# --- pipelines -----------------------------------------------------------------------

def taylor_order(n, growth, final_norm, eps, max_order=40):
    """Least k with n * growth * e / (k+1)! <= eps * final_norm / 2."""
    for k in range(1, max_order + 1):
        if n * growth * math.e / math.factorial(k + 1) <= eps * final_norm / 2:
            return k
    raise ParameterError("no truncation order up to the cap reaches the accuracy")


def _ode(A, b, params: OdeParams, eps, cap):
    A = np.asarray(A.matrix if isinstance(A, DiagonalizableMatrix) else A, dtype=complex)
    b = normalize(np.asarray(b, dtype=complex))
    t = params.t
    if not t > 0:
        raise ParameterError("evolution time must be positive")
    alpha = params.alpha or operator_norm(A) or 1.0
    n = params.n or max(1, math.ceil(alpha * t))
    A_step = A * t / n
    if operator_norm(A_step) > 1 + 1e-12:
        raise NormalizationError("n is too small: ||A t / n|| exceeds one")
    taus = np.linspace(0, t, params.tau_points)
    props = [expm(tau * A) for tau in taus]
    growth = max(operator_norm(P) for P in props)
    history_max = max(float(np.linalg.norm(P @ b)) for P in props)
    exact = props[-1] @ b
    final_norm = float(np.linalg.norm(exact))
    k = params.k or taylor_order(n, growth, final_norm, eps)
    p = params.p or n
    pre, rep = precondition_application("taylor", A_step, b=b, n=n, k=k, p=p)
    system = build_taylor_system(A_step, n, k, p, cap)
    mask = system.success_mask()
    run = inversion_solve(rep.preconditioned_matrix, rep.initial_state, system.norm_bound(),
                          rep.inflation_bound, eps, success_mask=mask, dimension_cap=cap)
    y = system.blocks(run.state)[list(system.success_blocks)].mean(axis=0)
    y = normalize(y)
    err = phase_aligned_distance(y, normalize(exact))
    plain = np.linalg.solve(rep.matrix, rep.initial_state)
    report = {
        "n": n, "k": k, "p": p, "error": err, "growth": growth,
        "history_ratio": history_max / final_norm,
        "plain_success_amplitude": float(np.linalg.norm(mask * plain)) / rep.inverse_norm_plain,
        "inversion": run.to_json(),
        "precondition": rep.to_json(),
    }
    return ApplicationResult("ode", y, run.ledger, report, err <= eps and rep.passed and run.ledger_matches)


def history_blocks(state, n, d):
    return np.asarray(state).reshape(-1, d)[:n]


def fit_chebyshev_history(amplitudes, grid_points=4001):
    """x minimizing min_c || a - c T~(x) || over [-1/2, 1/2], with T~_0 = 1/2."""
    a = np.asarray(amplitudes, dtype=complex)
    n = a.size
    l = np.arange(n)

    def residual(x):
        T = np.cos(l * math.acos(x))
        T[0] = 0.5
        return float(np.linalg.norm(a) ** 2 - abs(np.vdot(T, a)) ** 2 / np.dot(T, T))

    grid = np.linspace(-0.5, 0.5, grid_points)
    values = np.array([residual(x) for x in grid])
    i = int(np.argmin(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
    if hi - lo <= 0:
        return float(grid[i])
    res = minimize_scalar(residual, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(res.x) if res.fun <= values[i] else float(grid[i])


def _qeve(A, psi, params: QeveParams, eps, cap):
    D = as_diagonalizable(A)
    psi = normalize(np.asarray(psi, dtype=complex))
    alpha = chebyshev_normalization(D, params.alpha)
    alpha_A = alpha / 2
    n = params.n or max(3, math.ceil(4 * alpha_A / eps))
    A_scaled = D.matrix / alpha
    pre, rep = precondition_application("padded-qeve", A_scaled, psi=psi, n=n)
    run = inversion_solve(rep.preconditioned_matrix, rep.initial_state, PAD_NORM_BOUND,
                          rep.inflation_bound, min(eps, 0.5), dimension_cap=cap)
    blocks = history_blocks(run.state, n, D.dim)
    amplitudes = blocks @ psi.conj()
    x_hat = fit_chebyshev_history(amplitudes, params.fit_points)
    estimate = alpha * x_hat
    nearest = float(D.eigenvalues[np.argmin(np.abs(D.eigenvalues - estimate))])
    report = {
        "n": n, "alpha": alpha, "estimate": estimate, "nearest_eigenvalue": nearest,
        "error": abs(estimate - nearest), "kappa_S": params.kappa_S,
        "solution_norm_over_n": rep.solution_norm_preconditioned / n,
        "inversion": run.to_json(), "precondition": rep.to_json(),
    }
    ok = abs(estimate - nearest) <= eps and rep.passed and run.ledger_matches
    return ApplicationResult("qeve", estimate, run.ledger, report, ok)


def _transform(kind, D, psi, poly: ChebCoeffState, alpha, eps, cap, extra=None):
    A_scaled = D.matrix / alpha
    n = poly.n
    pre, rep = precondition_application("padded-qevt", A_scaled, psi=psi, poly=poly)
    mask = np.repeat(np.concatenate([np.zeros(n), np.ones(n)]), D.dim)
    run = inversion_solve(rep.preconditioned_matrix, rep.initial_state, PAD_NORM_BOUND,
                          rep.inflation_bound, min(eps, 0.5), success_mask=mask, dimension_cap=cap)
    y = normalize(run.state.reshape(2 * n, D.dim)[n:].mean(axis=0))
    target = poly.of_matrix(A_scaled) @ psi
    err = phase_aligned_distance(y, normalize(target))
    report = {
        "n": n, "alpha": alpha, "coefficient_alpha": poly.alpha, "max_norm": poly.max_norm(),
        "transformed_norm": float(np.linalg.norm(target)), "error": err,
        "inversion": run.to_json(), "precondition": rep.to_json(),
    }
    report.update(extra or {})
    return y, run, rep, report


def _qevt(A, psi, params: QevtParams, eps, cap):
    D = as_diagonalizable(A)
    psi = normalize(np.asarray(psi, dtype=complex))
    alpha = chebyshev_normalization(D, params.alpha)
    coef = params.coefficients
    n = params.n or len(np.trim_zeros(np.asarray(coef, dtype=float), "b"))
    poly = cheb_coeff_state(coef, n, params.basis)
    y, run, rep, report = _transform("qevt", D, psi, poly, alpha, eps, cap)
    ok = report["error"] <= eps and rep.passed and run.ledger_matches
    return ApplicationResult("qevt", y, run.ledger, report, ok)


def ground_state_polynomial(nu, eps):
    """(1 - g(x)) / 2 for an odd sign approximant g with band error eps outside (-nu, nu)."""
    g = cheb_sign_approx(nu, eps)
    coef = -np.asarray(g.coefficients, dtype=float) / 2
    coef[0] += 0.5
    return coef


def _ground_state(A, psi, params: GroundStateParams, eps, cap):
    D = as_diagonalizable(A)
    psi = normalize(np.asarray(psi, dtype=complex))
    order = np.argsort(D.eigenvalues)
    lam = D.eigenvalues[order]
    delta = params.delta_A
    if not (lam[0] <= -delta / 2 and (lam.size < 2 or lam[1] >= delta / 2)):
        raise PreconditionFailure("ground energy is not separated by the promised gap around zero")
    ground = D.eigenvector(order[0])
    gamma = D.expansion(psi)
    gamma_0 = abs(params.gamma_0) if params.gamma_0 is not None else float(abs(gamma[order[0]]))
    if gamma_0 == 0:
        raise PreconditionFailure("initial state has no ground-state component")
    kappa_S = params.kappa_S or D.kappa_S
    alpha = chebyshev_normalization(D, params.alpha)
    nu = delta / (2 * alpha)
    band_eps = min(0.25, gamma_0 * eps / (kappa_S * math.sqrt(D.dim)))
    coef = ground_state_polynomial(nu, band_eps)
    poly = cheb_coeff_state(coef, len(coef))
    log_term = math.log(kappa_S / (gamma_0 * eps))
    extra = {
        "degree": poly.n - 1, "nu": nu, "band_error": band_eps, "gamma_0": gamma_0,
        "degree_constant": (poly.n - 1) / ((alpha / delta) * log_term) if log_term > 0 else None,
    }
    y, run, rep, report = _transform("ground-state", D, psi, poly, alpha, eps, cap, extra)
    fid = fidelity(y, ground)
    report["ground_fidelity"] = fid
    ok = fid >= 1 - eps and rep.passed and run.ledger_matches
    return ApplicationResult("ground-state", y, run.ledger, report, ok)


def _qevt_block(A, params: QevtBlockParams, eps, cap):
    D = as_diagonalizable(A)
    alpha = chebyshev_normalization(D, params.alpha)
    A_scaled = D.matrix / alpha
    d = D.dim
    coef = params.coefficients
    n = len(np.trim_zeros(np.asarray(coef, dtype=float), "b"))
    poly = cheb_coeff_state(coef, n, params.basis)
    if 2 * n * d > cap:
        raise ParameterError("padded system exceeds the dimension cap")
    pre, rep = precondition_application("padded-qevt", A_scaled, psi=np.eye(d)[0], poly=poly)
    alpha_inv = rep.inflation_bound
    anc_in = np.concatenate([poly.amplitudes, np.zeros(n)])
    anc_out = np.concatenate([np.zeros(n), np.ones(n) / math.sqrt(n)])
    inv = np.linalg.inv(rep.preconditioned_matrix).reshape(2 * n, d, 2 * n, d)
    block = np.einsum("i,iajb,j->ab", anc_out, inv, anc_in) / (2 * alpha_inv)
    p_matrix = poly.of_matrix(A_scaled)
    max_norm = poly.max_norm()
    alpha_cond = alpha_inv * max_norm / n
    alpha_pre = rep.inverse_norm_plain * poly.alpha / math.sqrt(n)
    alpha_p = params.alpha_p or operator_norm(p_matrix)
    if alpha_p < operator_norm(p_matrix) * (1 - 1e-12):
        raise NormalizationError("alpha_p is below ||p(A / alpha)||")
    block_error = operator_norm(block - p_matrix / alpha_cond) * alpha_cond / max(operator_norm(p_matrix), 1e-300)
    gain = alpha_cond / (2 * alpha_p)
    output = block * gain
    amplification = max(1, math.ceil(alpha_cond / alpha_p * math.log(1 / eps)))
    per_inverse = inversion_query_count(PAD_NORM_BOUND * alpha_inv, eps)
    ledger = CostLedger((), 0, extra={"inversion": amplification * per_inverse})
    report = {
        "n": n, "alpha": alpha, "alpha_cond": alpha_cond, "alpha_pre": alpha_pre,
        "alpha_p": alpha_p, "max_norm": max_norm, "kappa_S": D.kappa_S,
        "cond_over_model": alpha_cond / (max_norm * D.kappa_S),
        "relative_block_error": block_error, "gain": gain,
        "block_norm": operator_norm(block), "precondition": rep.to_json(),
    }
    ok = block_error <= 1e-8 and operator_norm(output) <= 0.5 + 1e-9 and rep.passed
    return ApplicationResult("qevt-block", output, ledger, report, ok)


def run_application_pipeline(kind, A, state=None, params=None, eps=1e-2,
                             dimension_cap=DEFAULT_DIMENSION_CAP):
    """Dispatch one preconditioned application; see the parameter records for each kind."""
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    if kind == "ode":
        return _ode(A, state, params, eps, dimension_cap)
    if kind == "qeve":
        return _qeve(A, state, params or QeveParams(), eps, dimension_cap)
    if kind == "qevt":
        return _qevt(A, state, params, eps, dimension_cap)
    if kind == "ground-state":
        return _ground_state(A, state, params, eps, dimension_cap)
    if kind == "qevt-block":
        return _qevt_block(A, params, eps, dimension_cap)
    raise ParameterError(f"kind must be one of {KINDS}")
