"""Dense complex linear algebra helpers, quasinorms and approximation predicates.

All routines operate on double-precision numpy arrays and are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError, ShapeError

TAU_UNIT = 1e-10
TAU_SPEC = 1e-9
TAU_AMP = 1e-9


def quasinorm(v, p):
    """Return (sum |v_j|^p)^(1/p), or max |v_j| for p = inf.

    For 0 < p < 1 this is a quasinorm rather than a norm.
    """
    p = float(p)
    if not p > 0:
        raise ParameterError(f"p must be positive, got {p}")
    a = np.abs(np.asarray(v, dtype=complex).ravel())
    if not np.all(np.isfinite(a)):
        raise ParameterError("vector has non-finite entries")
    if a.size == 0:
        return 0.0
    if np.isinf(p):
        return float(a.max())
    scale = a.max()
    if scale == 0:
        return 0.0
    return float(scale * np.sum((a / scale) ** p) ** (1.0 / p))


def multiplicative_approx(u, v, c):
    """True iff 1/c <= u/v <= c."""
    if not (u > 0 and v > 0):
        raise ParameterError("u and v must be positive")
    if not c >= 1:
        raise ParameterError("c must be at least 1")
    ratio = u / v
    return bool(1.0 / c <= ratio <= c)


def operator_norm(M):
    """Spectral norm of a dense matrix."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def hermitian_dilation(A):
    """Return |0><1| (x) A + |1><0| (x) A^dagger."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {A.shape}")
    d = A.shape[0]
    out = np.zeros((2 * d, 2 * d), dtype=complex)
    out[:d, d:] = A
    out[d:, :d] = A.conj().T
    return out


def is_hermitian(H, tol=TAU_UNIT):
    H = np.asarray(H)
    return H.ndim == 2 and H.shape[0] == H.shape[1] and operator_norm(H - H.conj().T) <= tol


def is_unitary(U, tol=TAU_UNIT):
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        return False
    return operator_norm(U.conj().T @ U - np.eye(U.shape[0])) <= tol


def is_projection(P, tol=TAU_UNIT):
    P = np.asarray(P)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return False
    return operator_norm(P @ P - P) <= tol and operator_norm(P - P.conj().T) <= tol


def is_state(v, tol=TAU_UNIT):
    return abs(np.linalg.norm(v) - 1.0) <= tol


def normalize(v):
    """Return v / ||v||; raises on the zero vector."""
    v = np.asarray(v, dtype=complex)
    n = np.linalg.norm(v)
    if n == 0:
        raise ParameterError("cannot normalize the zero vector")
    return v / n


def fix_phase(v, tol=1e-12):
    """Rotate v so that its first non-negligible component is real positive."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    if mag.max() == 0:
        return v
    idx = int(np.argmax(mag > tol * mag.max()))
    return v * (abs(v[idx]) / v[idx])


def fidelity(u, v):
    """|<u|v>|^2 for normalized copies of u and v."""
    return float(abs(np.vdot(normalize(u), normalize(v))) ** 2)


def phase_aligned_distance(u, v):
    """min over global phase of || u - e^{i t} v || for equal-length vectors."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    overlap = np.vdot(v, u)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(u - phase * v))


@dataclass(frozen=True)
class HermitianSpectrum:
    """Eigenvalues in descending order with eigenvectors as matrix columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T

    def apply_function(self, f):
        """Return f(H) = sum_u f(lambda_u) |phi_u><phi_u|."""
        V = self.eigenvectors
        return (V * np.asarray(f(self.eigenvalues))) @ V.conj().T

    def expand(self, state, tol=TAU_UNIT):
        return EigenbasisExpansion.of(self, state, tol)


@dataclass(frozen=True)
class EigenbasisExpansion:
    """Coefficients gamma_u = <phi_u|b> aligned with a HermitianSpectrum."""

    spectrum: HermitianSpectrum
    coefficients: np.ndarray

    @classmethod
    def of(cls, spectrum, state, tol=TAU_UNIT):
        state = np.asarray(state, dtype=complex)
        if state.shape != (spectrum.dim,):
            raise ShapeError("state dimension does not match the spectrum")
        if not is_state(state, tol):
            raise ContractError("expanded vector is not a unit state")
        return cls(spectrum, spectrum.eigenvectors.conj().T @ state)

    def resynthesize(self):
        return self.spectrum.eigenvectors @ self.coefficients


def spectral_decompose(H, tol=TAU_UNIT):
    """Deterministic eigendecomposition of a Hermitian matrix.

    Eigenvalues are sorted in descending order; each eigenvector has its first
    non-negligible component made real positive.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {H.shape}")
    if operator_norm(H - H.conj().T) > tol * max(1.0, operator_norm(H)):
        raise ContractError("matrix is not Hermitian")
    w, V = np.linalg.eigh((H + H.conj().T) / 2)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    V = V[:, order]
    V = np.column_stack([fix_phase(V[:, i]) for i in range(V.shape[1])]) if V.size else V
    return HermitianSpectrum(w.astype(float), V)


def cheb_u_values(x, n):
    """Chebyshev polynomials of the second kind U_0..U_{n-1} at x (rows indexed by degree)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((n,) + x.shape)
    if n > 0:
        out[0] = 1.0
    if n > 1:
        out[1] = 2 * x
    for j in range(2, n):
        out[j] = 2 * x * out[j - 1] - out[j - 2]
    return out


# --- JSON helpers -----------------------------------------------------------

def vector_to_json(v):
    v = np.asarray(v, dtype=complex).ravel()
    return {"dim": int(v.size), "entries": [[float(z.real), float(z.imag)] for z in v]}


def vector_from_json(obj):
    entries = obj["entries"]
    v = np.array([complex(re, im) for re, im in entries], dtype=complex)
    if v.size != obj["dim"]:
        raise ShapeError("dim does not match number of entries")
    return v


def matrix_to_json(M):
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2:
        raise ShapeError("expected a 2D array")
    return {
        "rows": int(M.shape[0]),
        "cols": int(M.shape[1]),
        "entries": [[[float(z.real), float(z.imag)] for z in row] for row in M],
    }


def matrix_from_json(obj):
    M = np.array([[complex(re, im) for re, im in row] for row in obj["entries"]], dtype=complex)
    M = M.reshape(obj["rows"], obj["cols"])
    return M


def random_hermitian(d, rng, scale=1.0):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = (X + X.conj().T) / 2
    return scale * H / operator_norm(H)


def random_unitary(d, rng):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, R = np.linalg.qr(X)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_state(d, rng):
    return normalize(rng.normal(size=d) + 1j * rng.normal(size=d))
