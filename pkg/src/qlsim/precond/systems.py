"""Coefficient matrices of the application systems and the Chebyshev coefficient state."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial
from numpy.polynomial import chebyshev as cheb

from ..errors import DomainError, NormalizationError, ParameterError, ResourceError
from ..numerics import cheb_u_values, operator_norm
from ..vtaa import DEFAULT_DIMENSION_CAP

SPECTRUM_TOL = 1e-8


def _check_square(A):
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError("expected a square matrix")
    return A


def _check_size(blocks, d, cap):
    if blocks * d > cap:
        raise ResourceError(f"system dimension {blocks * d} exceeds cap {cap}")


# --- truncated Taylor system ---------------------------------------------------------

@dataclass(frozen=True)
class TaylorSystem:
    """Block system whose solution carries n truncated-Taylor steps of x' = A x, then p copies."""

    steps: int
    order: int
    padding: int
    system_dim: int
    matrix: np.ndarray

    @property
    def block_count(self):
        return self.steps * (self.order + 1) + self.padding + 1

    @property
    def success_blocks(self):
        first = self.steps * (self.order + 1)
        return range(first, first + self.padding + 1)

    def initial_state(self, b):
        v = np.zeros(self.block_count * self.system_dim, dtype=complex)
        v[: self.system_dim] = b
        return v

    def success_mask(self):
        mask = np.zeros(self.block_count)
        mask[list(self.success_blocks)] = 1
        return np.repeat(mask, self.system_dim)

    def blocks(self, x):
        return np.asarray(x).reshape(self.block_count, self.system_dim)

    def ancilla_projection(self, index=0):
        """|index><index| (x) I on the block register."""
        e = np.zeros(self.block_count)
        e[index] = 1
        return np.kron(np.diag(e), np.eye(self.system_dim))

    def norm_bound(self):
        """2 + sqrt(k + 1): identity, the scaled shifts by A/j, and the step-collecting rows."""
        return 2 + math.sqrt(self.order + 1)


def build_taylor_system(A_scaled, n, k, p, dimension_cap=DEFAULT_DIMENSION_CAP):
    """Assemble the truncated-Taylor block system for A_scaled = A / alpha (time step 1 per block row)."""
    A = _check_square(A_scaled)
    if min(n, k, p) < 1:
        raise ParameterError("n, k and p must be at least 1")
    d = A.shape[0]
    blocks = n * (k + 1) + p + 1
    _check_size(blocks, d, dimension_cap)
    C = np.zeros((blocks, d, blocks, d), dtype=complex)
    eye = np.eye(d)
    for r in range(blocks):
        C[r, :, r, :] = eye
    for i in range(n):
        base = i * (k + 1)
        for j in range(1, k + 1):
            C[base + j, :, base + j - 1, :] = -A / j
        for j in range(k + 1):
            C[base + k + 1, :, base + j, :] -= eye
    first = n * (k + 1)
    for j in range(1, p + 1):
        C[first + j, :, first + j - 1, :] = -eye
    return TaylorSystem(n, k, p, d, C.reshape(blocks * d, blocks * d))


def taylor_stepping_oracle(A_scaled, b, n, k):
    """n steps of y <- sum_{j<=k} A^j y / j!, evaluated by Horner's rule."""
    A = np.asarray(A_scaled, dtype=complex)
    y = np.asarray(b, dtype=complex)
    for _ in range(n):
        acc = y.copy()
        for j in range(k, 0, -1):
            acc = y + A @ acc / j
        y = acc
    return y


# --- padded Chebyshev system ---------------------------------------------------------

def check_chebyshev_domain(A_scaled):
    """Require ||A_scaled|| <= 1 and a real spectrum inside [-1/2, 1/2]."""
    A = _check_square(A_scaled)
    if operator_norm(A) > 1 + 1e-12:
        raise NormalizationError("the scaled matrix must have norm at most one")
    eig = np.linalg.eigvals(A)
    if np.max(np.abs(eig.imag), initial=0) > SPECTRUM_TOL:
        raise DomainError("spectrum is not real")
    if np.max(np.abs(eig.real), initial=0) > 0.5 + SPECTRUM_TOL:
        raise DomainError("spectrum leaves [-1/2, 1/2]")
    return A


@dataclass(frozen=True)
class PaddedSystem:
    """Chebyshev recurrence system with n recurrence blocks and eta * n copy blocks."""

    n: int
    eta: int
    system_dim: int
    matrix: np.ndarray

    @property
    def block_count(self):
        return self.n * (1 + self.eta)

    def blocks(self, x):
        return np.asarray(x).reshape(self.block_count, self.system_dim)

    def inverse_column(self):
        """First block column of the inverse, as a list of d x d blocks."""
        d = self.system_dim
        rhs = np.zeros((self.block_count * d, d), dtype=complex)
        rhs[:d] = np.eye(d)
        X = np.linalg.solve(self.matrix, rhs)
        return [X[l * d:(l + 1) * d] for l in range(self.block_count)]


def build_padded_system(A_scaled, n, eta=0, dimension_cap=DEFAULT_DIMENSION_CAP):
    A = check_chebyshev_domain(A_scaled)
    if n < 1 or eta < 0:
        raise ParameterError("need n >= 1 and eta >= 0")
    d = A.shape[0]
    blocks = n * (1 + eta)
    _check_size(blocks, d, dimension_cap)
    P = np.zeros((blocks, d, blocks, d), dtype=complex)
    eye = np.eye(d)
    for r in range(blocks):
        P[r, :, r, :] = eye
    for r in range(1, n):
        P[r, :, r - 1, :] = -2 * A
        if r >= 2:
            P[r, :, r - 2, :] = eye
    for r in range(n, blocks):
        P[r, :, r - 1, :] = -eye
    return PaddedSystem(n, eta, d, P.reshape(blocks * d, blocks * d))


def chebyshev_u_blocks(A_scaled, n):
    """U_0..U_{n-1} of a matrix argument by the three-term recurrence."""
    A = np.asarray(A_scaled, dtype=complex)
    eye = np.eye(A.shape[0])
    out = [eye]
    if n > 1:
        out.append(2 * A)
    for _ in range(2, n):
        out.append(2 * A @ out[-1] - out[-2])
    return out[:n]


# --- Chebyshev coefficient state -----------------------------------------------------

def chebyshev_coefficients(poly, basis="chebyshev"):
    """Standard Chebyshev coefficients beta_k of a polynomial given in either basis."""
    if isinstance(poly, (Polynomial, Chebyshev)):
        return np.asarray(poly.convert(kind=Chebyshev, domain=[-1, 1], window=[-1, 1]).coef, dtype=float)
    coef = np.asarray(poly, dtype=float)
    if basis == "chebyshev":
        return coef
    if basis == "monomial":
        return cheb.poly2cheb(coef)
    raise ParameterError(f"unknown basis {basis!r}")


@dataclass(frozen=True)
class ChebCoeffState:
    """|beta> with amplitude (bt_k - bt_{k+2}) / alpha at slot n-1-k, bt the rescaled coefficients."""

    n: int
    standard: np.ndarray
    rescaled: np.ndarray
    alpha: float
    amplitudes: np.ndarray

    def __call__(self, x):
        return cheb.chebval(np.asarray(x, dtype=float), self.standard)

    def max_norm(self):
        """max |p| on [-1/2, 1/2] from endpoints and interior critical points."""
        pts = [-0.5, 0.5]
        if len(self.standard) > 2:
            crit = Chebyshev(self.standard).deriv().roots()
            crit = crit[np.abs(crit.imag) < 1e-12].real
            pts.extend(crit[np.abs(crit) <= 0.5])
        return float(np.max(np.abs(self(np.array(pts)))))

    def of_matrix(self, A_scaled):
        """p(A) by Clenshaw recurrence on the standard coefficients."""
        A = np.asarray(A_scaled, dtype=complex)
        eye = np.eye(A.shape[0])
        b1 = np.zeros_like(A)
        b2 = np.zeros_like(A)
        for c in self.standard[:0:-1]:
            b1, b2 = c * eye + 2 * A @ b1 - b2, b1
        return self.standard[0] * eye + A @ b1 - b2


def cheb_coeff_state(poly, n, basis="chebyshev"):
    beta = chebyshev_coefficients(poly, basis)
    nz = np.nonzero(np.abs(beta) > 0)[0]
    if nz.size == 0:
        raise ParameterError("the zero polynomial has no coefficient state")
    degree = int(nz[-1])
    if degree > n - 1:
        raise ParameterError(f"degree {degree} exceeds n - 1 = {n - 1}")
    standard = np.zeros(n)
    standard[: degree + 1] = beta[: degree + 1]
    rescaled = standard.copy()
    rescaled[0] *= 2
    padded = np.concatenate([rescaled, [0.0, 0.0]])
    diffs = padded[:n] - padded[2:n + 2]
    alpha = float(np.linalg.norm(diffs))
    amplitudes = np.zeros(n)
    amplitudes[n - 1 - np.arange(n)] = diffs / alpha
    return ChebCoeffState(n, standard, rescaled, alpha, amplitudes)


@dataclass
class PolyBoundReport:
    n: int
    max_norm: float
    sqrt_n_alpha: float
    u_sum_min: float
    u_sum_max: float
    u_sum_cap: float
    lower_two_sided: float
    upper_two_sided: float

    @property
    def strict(self):
        return self.max_norm < self.sqrt_n_alpha

    @property
    def slack(self):
        return self.sqrt_n_alpha - self.max_norm

    @property
    def u_sum_ok(self):
        return self.u_sum_max <= self.u_sum_cap

    @property
    def two_sided_ok(self):
        return self.lower_two_sided <= self.u_sum_min and self.u_sum_max <= self.upper_two_sided

    @property
    def passed(self):
        return self.strict and self.u_sum_ok and self.two_sided_ok

    def to_json(self):
        out = dict(self.__dict__)
        out.update(strict=self.strict, slack=self.slack, u_sum_ok=self.u_sum_ok,
                   two_sided_ok=self.two_sided_ok, passed=self.passed)
        return out


def check_poly_bounds(poly, n, basis="chebyshev", grid_points=4001):
    """Max-norm bound of p against sqrt(n) alpha and the U-square-sum bounds on [-1/2, 1/2]."""
    state = poly if isinstance(poly, ChebCoeffState) else cheb_coeff_state(poly, n, basis)
    x = np.linspace(-0.5, 0.5, grid_points)
    sums = np.sum(cheb_u_values(x, n) ** 2, axis=0)
    root3 = math.sqrt(3)
    return PolyBoundReport(
        n=n,
        max_norm=state.max_norm(),
        sqrt_n_alpha=math.sqrt(n) * state.alpha,
        u_sum_min=float(sums.min()),
        u_sum_max=float(sums.max()),
        u_sum_cap=2 * n / 3 + 1,
        lower_two_sided=n / 2 - root3 / 3,
        upper_two_sided=4 / 3 * (n / 2 + root3 / 3),
    )
