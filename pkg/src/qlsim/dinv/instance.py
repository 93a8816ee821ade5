"""Linear-system instances and seeded generators."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..encodings import build_block_encoding, rescale_for_solver
from ..errors import ContractError, DomainError, NormalizationError, ShapeError
from ..numerics import (
    TAU_UNIT,
    hermitian_dilation,
    is_hermitian,
    matrix_from_json,
    matrix_to_json,
    normalize,
    random_state,
    random_unitary,
    spectral_decompose,
    vector_from_json,
    vector_to_json,
)


@dataclass(frozen=True)
class LinearSystemInstance:
    """Hermitian A with unit right-hand side b and optional norm bounds."""

    A: np.ndarray
    b: np.ndarray
    alpha_A: float | None = None
    alpha_Ainv: float | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        b = np.asarray(self.b, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeError(f"A must be square, got {A.shape}")
        if b.shape != (A.shape[0],):
            raise ShapeError("b must match the dimension of A")
        if abs(np.linalg.norm(b) - 1) > TAU_UNIT:
            raise NormalizationError("b must be a unit vector")
        if not is_hermitian(A, TAU_UNIT * max(1.0, float(np.abs(A).max()))):
            raise ContractError("A must be Hermitian; use LinearSystemInstance.from_general")
        object.__setattr__(self, "A", (A + A.conj().T) / 2)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_general(cls, A, b, alpha_A=None, alpha_Ainv=None):
        """Embed a general square system via the Hermitian dilation.

        The dilated right-hand side is |0>|b>; the solution is |1>|A^{-1} b>.
        """
        A = np.asarray(A, dtype=complex)
        d = A.shape[0]
        rhs = np.concatenate([np.asarray(b, dtype=complex), np.zeros(d)])
        return cls(hermitian_dilation(A), rhs, alpha_A, alpha_Ainv)

    @property
    def dim(self):
        return self.A.shape[0]

    @cached_property
    def spectrum(self):
        return spectral_decompose(self.A)

    @cached_property
    def gamma(self):
        """Coefficients of b in the eigenbasis of A."""
        return self.spectrum.eigenvectors.conj().T @ self.b

    @property
    def norm_A(self):
        return float(np.max(np.abs(self.spectrum.eigenvalues)))

    @property
    def norm_Ainv(self):
        mags = np.abs(self.spectrum.eigenvalues)
        if mags.min() <= 1e-14 * mags.max():
            raise DomainError("A is singular")
        return float(1.0 / mags.min())

    @cached_property
    def solution(self):
        """Unnormalized A^{-1} b."""
        self.norm_Ainv
        lam = self.spectrum.eigenvalues
        return self.spectrum.eigenvectors @ (self.gamma / lam)

    @property
    def solution_norm(self):
        return float(np.linalg.norm(self.solution))

    @property
    def solution_state(self):
        return normalize(self.solution)

    def block_encoding(self):
        """Rescaled block encoding: alpha_A, alpha_Ainv powers of 3 with alpha_A >= 2||A||."""
        alpha_A = self.alpha_A if self.alpha_A is not None else self.norm_A
        alpha_Ainv = self.alpha_Ainv if self.alpha_Ainv is not None else self.norm_Ainv
        return rescale_for_solver(build_block_encoding(self.A, alpha_A), alpha_Ainv)

    def p_succ(self, be=None):
        be = be or self.block_encoding()
        return self.solution_norm**2 / be.alpha_Ainv**2

    def to_json(self):
        return {
            "A": matrix_to_json(self.A),
            "b": vector_to_json(self.b),
            "alpha_A": self.alpha_A,
            "alpha_Ainv": self.alpha_Ainv,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            matrix_from_json(obj["A"]),
            vector_from_json(obj["b"]),
            obj.get("alpha_A"),
            obj.get("alpha_Ainv"),
        )


def random_instance(d, seed, condition=9.0, scale=1.0, weights=None):
    """Hermitian instance with eigenvalue magnitudes log-uniform in [scale/condition, scale].

    weights (optional) skews b towards small eigenvalues: the coefficient on
    eigenvector u is drawn with magnitude proportional to |lambda_u|^weights.
    """
    rng = np.random.default_rng(seed)
    mags = np.exp(rng.uniform(np.log(scale / condition), np.log(scale), size=d))
    mags[0], mags[-1] = scale, scale / condition
    signs = rng.choice([-1.0, 1.0], size=d)
    lam = signs * mags
    V = random_unitary(d, rng)
    A = (V * lam) @ V.conj().T
    if weights is None:
        b = random_state(d, rng)
    else:
        coeff = random_state(d, rng) * mags**weights
        b = V @ normalize(coeff)
    return LinearSystemInstance(A, b)


def diagonal_instance(eigenvalues, b):
    lam = np.asarray(eigenvalues, dtype=float)
    return LinearSystemInstance(np.diag(lam).astype(complex), normalize(b))
