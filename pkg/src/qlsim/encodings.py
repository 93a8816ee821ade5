"""Block encodings, qubitization, walk operators and threshold functions.

The threshold machinery builds an odd Chebyshev approximant of the sign
function, turns it into a periodic function of the walk phase, and completes
it pointwise to a unit "quartet" of real functions (f_a, f_b, f_c, f_d)
describing the 2x2 unitary f_a I + i f_b Z + i f_c X + i f_d Y.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import special

from .errors import (
    ApproximationError,
    ContractError,
    DomainError,
    NormalizationError,
    ParameterError,
)
from .numerics import (
    TAU_SPEC,
    TAU_UNIT,
    HermitianSpectrum,
    operator_norm,
    spectral_decompose,
)


# --- block encodings ---------------------------------------------------------

@dataclass(frozen=True)
class BlockEncoding:
    """Unitary U and isometry G with G^dagger U G = A / alpha_A.

    The ancilla ("block") qubit is the outer tensor factor: index = blk * d + i.
    """

    U: np.ndarray
    G: np.ndarray
    alpha_A: float
    alpha_Ainv: float | None = None
    rescaled: bool = False
    exponent_A: int | None = None
    exponent_Ainv: int | None = None

    @property
    def system_dim(self):
        return self.G.shape[1]

    @property
    def encoded(self):
        """A / alpha_A."""
        return self.G.conj().T @ self.U @ self.G

    @property
    def matrix(self):
        """The encoded matrix A itself."""
        return self.alpha_A * self.encoded

    @property
    def kappa(self):
        if self.alpha_Ainv is None:
            raise ParameterError("inverse-norm bound not recorded")
        return self.alpha_A * self.alpha_Ainv

    @property
    def m(self):
        """Number of clock stages, log_3(kappa); defined for rescaled encodings."""
        if not self.rescaled:
            raise ParameterError("m is only defined for rescaled encodings")
        return self.exponent_A + self.exponent_Ainv

    def spectrum(self):
        """Spectrum of A (not of A / alpha_A)."""
        return spectral_decompose(self.matrix)

    def check_contract(self, tol=TAU_UNIT):
        H = self.encoded
        if operator_norm(H - H.conj().T) > tol:
            raise ContractError("G^dagger U G is not Hermitian")
        d = self.system_dim
        if operator_norm(self.G.conj().T @ self.U @ self.U @ self.G - np.eye(d)) > tol:
            raise ContractError("G^dagger U^2 G differs from the identity")
        if operator_norm(self.G.conj().T @ self.G - np.eye(d)) > tol:
            raise ContractError("G is not an isometry")


def _sqrt_complement(spec: HermitianSpectrum):
    """sqrt(I - H^2) for a Hermitian H with ||H|| <= 1, via its spectrum."""
    return spec.apply_function(lambda lam: np.sqrt(np.clip(1.0 - lam**2, 0.0, None)))


def build_block_encoding(A, alpha_A, alpha_Ainv=None):
    """Hermitian block encoding U = [[H, S], [S, -H]] with H = A/alpha_A, S = sqrt(I - H^2)."""
    A = np.asarray(A, dtype=complex)
    spec = spectral_decompose(A)
    norm = float(np.max(np.abs(spec.eigenvalues))) if spec.dim else 0.0
    if not alpha_A > 0 or alpha_A < norm * (1 - 1e-12):
        raise NormalizationError(f"alpha_A = {alpha_A} is below ||A|| = {norm}")
    H = A / alpha_A
    H = (H + H.conj().T) / 2
    scaled = HermitianSpectrum(spec.eigenvalues / alpha_A, spec.eigenvectors)
    S = _sqrt_complement(scaled)
    d = A.shape[0]
    U = np.block([[H, S], [S, -H]])
    G = np.vstack([np.eye(d), np.zeros((d, d))]).astype(complex)
    return BlockEncoding(U, G, float(alpha_A), alpha_Ainv)


def _power_of_three_exponent(x, strict=False):
    """Smallest integer e with 3^e >= x (or 3^e > x when strict)."""
    if not x > 0:
        raise ParameterError("value must be positive")
    e = math.floor(math.log(x, 3)) - 2
    while True:
        p = 3.0**e
        ok = p > x * (1 + 1e-12) if strict else p >= x * (1 - 1e-12)
        if ok:
            return e
        e += 1


def rescale_for_solver(be: BlockEncoding, alpha_Ainv):
    """Round alpha_A and alpha_Ainv up to powers of 3 with alpha_A >= 2 ||A||.

    The inverse bound is made strictly larger than ||A^{-1}||, and if the
    resulting kappa is 1 the inverse bound is raised one more power of 3.
    """
    spec = be.spectrum()
    mags = np.abs(spec.eigenvalues)
    norm = float(mags.max())
    if norm == 0 or mags.min() <= 1e-14 * norm:
        raise DomainError("matrix is singular")
    inv_norm = 1.0 / float(mags.min())
    if alpha_Ainv < inv_norm * (1 - 1e-12):
        raise NormalizationError(f"alpha_Ainv = {alpha_Ainv} is below ||A^-1|| = {inv_norm}")
    e_a = _power_of_three_exponent(max(be.alpha_A, 2 * norm))
    e_inv = max(
        _power_of_three_exponent(alpha_Ainv),
        _power_of_three_exponent(inv_norm, strict=True),
    )
    if e_a + e_inv < 1:
        e_inv = 1 - e_a
    new = build_block_encoding(be.matrix, 3.0**e_a)
    return BlockEncoding(
        new.U, new.G, 3.0**e_a, 3.0**e_inv, rescaled=True, exponent_A=e_a, exponent_Ainv=e_inv
    )


def walk_operator(be: BlockEncoding):
    """W = (2 G G^dagger - I) U."""
    be.check_contract()
    n = be.U.shape[0]
    return (2 * be.G @ be.G.conj().T - np.eye(n)) @ be.U


@dataclass(frozen=True)
class QubitizedSubspace:
    eigenvalue: float
    alpha_A: float
    phi0: np.ndarray
    phi1: np.ndarray | None
    dimension: int

    @property
    def ratio(self):
        return self.eigenvalue / self.alpha_A

    @property
    def phases(self):
        """Walk eigenphases (theta_+, theta_-)."""
        t = math.acos(float(np.clip(self.ratio, -1.0, 1.0)))
        return (t, -t)

    @property
    def walk_eigenvectors(self):
        if self.dimension == 1:
            return (self.phi0,)
        return (
            (self.phi0 + 1j * self.phi1) / math.sqrt(2),
            (self.phi0 - 1j * self.phi1) / math.sqrt(2),
        )


def qubitize(be: BlockEncoding, tol=TAU_SPEC):
    """Decompose the span of G and UG into the invariant subspaces of U."""
    be.check_contract()
    H = be.encoded
    spec = spectral_decompose(H)
    UG = be.U @ be.G
    out = []
    for lam, phi in zip(spec.eigenvalues, spec.eigenvectors.T):
        v0 = be.G @ phi
        if abs(lam) >= 1 - 1e-12:
            if np.linalg.norm(UG @ phi - lam * v0) > tol:
                raise ContractError("unit eigenvalue subspace is not invariant")
            out.append(QubitizedSubspace(lam * be.alpha_A, be.alpha_A, v0, None, 1))
            continue
        s = math.sqrt(1 - lam**2)
        v1 = (UG @ phi - lam * v0) / s
        B = np.column_stack([v0, v1])
        expected_U = np.array([[lam, s], [s, -lam]])
        proj = be.G @ be.G.conj().T
        if operator_norm(B.conj().T @ be.U @ B - expected_U) > tol:
            raise ContractError("U does not act as the expected rotation on a subspace")
        if operator_norm(B.conj().T @ proj @ B - np.diag([1.0, 0.0])) > tol:
            raise ContractError("G G^dagger does not act as expected on a subspace")
        out.append(QubitizedSubspace(lam * be.alpha_A, be.alpha_A, v0, v1, 2))
    return out


# --- sign approximation -------------------------------------------------------

GRID_POINTS = 10_000


def _erf_chebyshev_coefficients(k, terms):
    """Odd Chebyshev coefficients of erf(k x), truncated after `terms` Bessel terms."""
    z = k * k / 2
    j = np.arange(terms)
    c = (2 * k / math.sqrt(math.pi)) * special.ive(j, z) * (-1.0) ** j
    beta = np.zeros(2 * terms + 1)
    beta[1] += c[0]
    for jj in range(1, terms):
        beta[2 * jj + 1] += c[jj] / (2 * jj + 1)
        beta[2 * jj - 1] -= c[jj] / (2 * jj - 1)
    return beta


def _terms_for_tail(k, tol):
    """Smallest number of Bessel terms whose neglected tail is below tol."""
    z = k * k / 2
    jmax = max(16, int(4 * k * math.sqrt(math.log(4.0 / tol) + 1)) + 16)
    j = np.arange(jmax)
    weights = (2 * k / math.sqrt(math.pi)) * special.ive(j, z) * 2.0 / np.maximum(2 * j - 1, 1)
    tail = np.cumsum(weights[::-1])[::-1]
    ok = np.nonzero(tail < tol)[0]
    return int(ok[0]) if ok.size else jmax


@dataclass(frozen=True)
class SignApproximant:
    margin: float
    accuracy: float
    coefficients: np.ndarray
    achieved_error: float

    @property
    def degree(self):
        return len(self.coefficients) - 1

    def __call__(self, x):
        return cheb.chebval(np.asarray(x, dtype=float), self.coefficients)


def _band_error(coefficients, nu):
    pos = np.linspace(nu, 1.0, GRID_POINTS)
    full = np.linspace(-1.0, 1.0, GRID_POINTS)
    g_pos = cheb.chebval(pos, coefficients)
    g_full = cheb.chebval(full, coefficients)
    # odd symmetry makes the negative band the mirror image of the positive one
    band = float(np.max(1.0 - g_pos))
    over = float(np.max(np.abs(g_full)) - 1.0)
    return band, over, float(np.min(g_pos))


def cheb_sign_approx(nu, eps, max_rounds=25):
    """Odd Chebyshev approximant g of sign(x) with band error eps outside (-nu, nu).

    g is a scaled Chebyshev truncation of erf(k x); k and the truncation are
    escalated until the grid band check passes.
    """
    if not (0 < nu < 1) or not (0 < eps < 1):
        raise ParameterError("need 0 < nu < 1 and 0 < eps < 1")
    k = float(special.erfcinv(eps / 4)) / nu
    last = None
    for _ in range(max_rounds):
        terms = _terms_for_tail(k, eps / 8)
        beta = _erf_chebyshev_coefficients(k, terms)
        grid = np.linspace(-1.0, 1.0, 4 * GRID_POINTS + 1)
        peak = float(np.max(np.abs(cheb.chebval(grid, beta))))
        beta = beta / max(peak, 1.0)
        band, over, low = _band_error(beta, nu)
        last = band
        if band <= eps and over <= 1e-14 and low <= 1.0:
            return SignApproximant(nu, eps, beta, band)
        k *= 1.15
    raise ApproximationError(
        f"band check failed for nu={nu}, eps={eps}", achieved_error=last
    )


# --- threshold quartets -------------------------------------------------------

def _wrap(theta):
    """Map angles to (-pi, pi]."""
    t = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(t == -np.pi, np.pi, t)


@dataclass(frozen=True)
class ThresholdQuartet:
    """Unit quartet realizing a smooth step in the walk phase.

    Bands for |theta|: [0, theta0-phi] gives I, [theta0+phi, pi-theta0-phi]
    gives sign(theta) i X, and [pi-theta0+phi, pi] gives -I.
    """

    theta0: float
    phi: float
    eps: float
    coefficients: np.ndarray
    _norm: tuple = field(repr=False, compare=False, default=(1.0, 0.0))

    @property
    def degree(self):
        return len(self.coefficients) - 1

    @property
    def query_charge(self):
        """O_A queries charged per application (2n, per the quartet circuit bound)."""
        return int(math.ceil(2 * self.degree))

    def _g(self, theta):
        return cheb.chebval(np.sin(theta), self.coefficients)

    def _raw(self, theta):
        g1 = self._g(theta - self.theta0)
        g2 = self._g(-theta - self.theta0)
        return (-g1 - g2) / 2, (g1 - g2) / 2

    def evaluate(self, theta, snap=False):
        """Return arrays (f_a, f_b, f_c, f_d) at the given phases.

        With snap=True, phases outside the transition bands get the exact band
        limits; transition-band phases keep their true values.
        """
        theta = _wrap(theta)
        fa_raw, fc = self._raw(theta)
        fb1 = np.sqrt(np.clip(1.0 - fa_raw**2 - fc**2, 0.0, None))
        a0, b0 = self._norm
        fa = np.clip((fa_raw * a0 + fb1 * b0) / (a0 * a0 + b0 * b0), -1.0, 1.0)
        fb = np.sqrt(np.clip(1.0 - fa**2 - fc**2, 0.0, None))
        fd = np.zeros_like(fa)
        if snap:
            mag = np.abs(theta)
            low = mag <= self.theta0 - self.phi
            mid = (mag >= self.theta0 + self.phi) & (mag <= np.pi - self.theta0 - self.phi)
            high = mag >= np.pi - self.theta0 + self.phi
            fa = np.where(low, 1.0, np.where(high, -1.0, np.where(mid, 0.0, fa)))
            fc = np.where(low | high, 0.0, np.where(mid, np.sign(theta), fc))
            fb = np.where(low | mid | high, 0.0, fb)
        return fa, fb, fc, fd

    def matrices(self, theta, snap=False):
        """Stack of 2x2 unitaries f_a I + i f_b Z + i f_c X + i f_d Y."""
        fa, fb, fc, fd = self.evaluate(theta, snap)
        out = np.empty(np.shape(fa) + (2, 2), dtype=complex)
        out[..., 0, 0] = fa + 1j * fb
        out[..., 0, 1] = 1j * fc + fd
        out[..., 1, 0] = 1j * fc - fd
        out[..., 1, 1] = fa - 1j * fb
        return out

    def band_report(self):
        """Measured band errors on 10^4-point grids per band."""
        t0, p = self.theta0, self.phi
        rep = {}
        pass_grid = np.linspace(t0 + p, np.pi - t0 - p, GRID_POINTS)
        fa, fb, fc, _ = self.evaluate(pass_grid)
        rep["passband_fc_deficit"] = float(np.max(1.0 - fc))
        if t0 - p > 0:
            g = np.linspace(0.0, t0 - p, GRID_POINTS)
            fa, fb, fc, _ = self.evaluate(g)
            rep["low_stopband_fc"] = float(np.max(np.abs(fc)))
            rep["low_fa_deficit"] = float(np.max(1.0 - fa))
            g = np.linspace(np.pi - t0 + p, np.pi, GRID_POINTS)
            fa, fb, fc, _ = self.evaluate(g)
            rep["high_stopband_fc"] = float(np.max(np.abs(fc)))
            rep["high_fa_excess"] = float(np.max(1.0 + fa))
        g = np.linspace(-np.pi, np.pi, GRID_POINTS)
        fa, fb, fc, fd = self.evaluate(g)
        rep["unitarity"] = float(np.max(np.abs(fa**2 + fb**2 + fc**2 + fd**2 - 1.0)))
        return rep

    def verify(self):
        rep = self.band_report()
        e = self.eps
        ok = rep["passband_fc_deficit"] <= e and rep["unitarity"] <= TAU_UNIT
        if "low_stopband_fc" in rep:
            ok = ok and rep["low_stopband_fc"] <= e / 2 and rep["high_stopband_fc"] <= e / 2
            ok = ok and rep["low_fa_deficit"] <= 4 * e and rep["high_fa_excess"] <= 4 * e
        if not ok:
            raise ApproximationError(f"quartet band check failed: {rep}")
        return rep

    def to_json(self):
        return {
            "theta0": self.theta0,
            "phi": self.phi,
            "eps": self.eps,
            "coefficients": [float(x) for x in self.coefficients],
        }

    @classmethod
    def from_json(cls, obj):
        return _finish_quartet(
            float(obj["theta0"]), float(obj["phi"]), float(obj["eps"]),
            np.asarray(obj["coefficients"], dtype=float),
        )


def _finish_quartet(theta0, phi, eps, coefficients):
    q = ThresholdQuartet(theta0, phi, eps, coefficients)
    fa0, fc0 = q._raw(np.array([0.0]))
    a0 = float(fa0[0])
    b0 = float(np.sqrt(max(0.0, 1.0 - a0 * a0 - float(fc0[0]) ** 2)))
    return ThresholdQuartet(theta0, phi, eps, coefficients, (a0, b0))


_QUARTET_CACHE: dict = {}


def threshold_quartet(theta0, phi, eps, verify=True):
    """Build (and cache) the unit quartet with step centre theta0 and half-width phi."""
    if not (0 < phi <= theta0 <= np.pi / 2):
        raise ParameterError("need 0 < phi <= theta0 <= pi/2")
    if not (0 < eps < 1):
        raise ParameterError("need 0 < eps < 1")
    key = (round(theta0, 15), round(phi, 15), eps)
    if key in _QUARTET_CACHE:
        return _QUARTET_CACHE[key]
    sign = cheb_sign_approx(math.sin(phi), eps)
    q = _finish_quartet(float(theta0), float(phi), float(eps), sign.coefficients)
    if verify:
        q.verify()
    _QUARTET_CACHE[key] = q
    return q


def pauli_distance(beta, gamma):
    """Operator-norm distance between two quartet matrices, equal to ||beta - gamma||."""
    return float(np.linalg.norm(np.asarray(beta, float) - np.asarray(gamma, float)))


def quartet_matrix(fa, fb, fc, fd):
    return np.array([[fa + 1j * fb, 1j * fc + fd], [1j * fc - fd, fa - 1j * fb]])


# --- Dirichlet kernel -----------------------------------------------------------

def _check_dirichlet_args(rho, theta):
    if int(rho) != rho or rho < 3 or rho % 2 == 0:
        raise ParameterError("rho must be an odd integer >= 3")
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(rho * theta > np.pi / 2 * (1 + 1e-12)):
        raise ParameterError("need 0 <= rho * theta <= pi/2")
    return theta


def dirichlet_ratio(rho, theta):
    """sin(rho theta) / (rho sin theta), with value 1 at theta = 0."""
    theta = _check_dirichlet_args(rho, theta)
    s = np.sin(theta)
    safe = np.where(s == 0, 1.0, s)
    out = np.where(s == 0, 1.0, np.sin(rho * theta) / (rho * safe))
    return float(out) if out.ndim == 0 else out


def dirichlet_bounds(rho, theta):
    """(lower, upper) bounds 1 - rho^2 sin^2/6 and 1 - (4 pi - 8)/pi^3 rho^2 sin^2."""
    theta = _check_dirichlet_args(rho, theta)
    x = (rho * np.sin(theta)) ** 2
    return 1 - x / 6, 1 - (4 * np.pi - 8) / np.pi**3 * x
