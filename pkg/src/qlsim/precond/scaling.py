"""Scaling operators S = s P + (I - P) and the self-preconditioned linear-system solver."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, InvalidPreconditionerError, ParameterError, PreconditionFailure
from ..numerics import TAU_UNIT, fidelity, is_projection, operator_norm
from ..vtaa import CostLedger
from .inversion import inversion_solve

SQRT17 = math.sqrt(17.0)


@dataclass(frozen=True)
class Preconditioner:
    """S = s P + (I - P) for an orthogonal projection P and 0 < s < 1."""

    projection: np.ndarray
    scale: float

    @property
    def dim(self):
        return self.projection.shape[0]

    @property
    def S(self):
        return self.scale * self.projection + (np.eye(self.dim) - self.projection)

    @property
    def S_inv(self):
        return self.projection / self.scale + (np.eye(self.dim) - self.projection)

    def lcu_matrix(self):
        """(1-s)/2 (I - 2P) + (1+s)/2 I, which equals S."""
        eye = np.eye(self.dim)
        return (1 - self.scale) / 2 * (eye - 2 * self.projection) + (1 + self.scale) / 2 * eye

    @property
    def lcu_normalization(self):
        return (1 - self.scale) / 2 + (1 + self.scale) / 2

    def block_encoding(self):
        """Unitary on (ancilla qubit, system) whose top-left block is S."""
        w0, w1 = math.sqrt((1 - self.scale) / 2), math.sqrt((1 + self.scale) / 2)
        prep = np.array([[w0, -w1], [w1, w0]])
        eye = np.eye(self.dim)
        select = np.block([
            [eye - 2 * self.projection, np.zeros((self.dim, self.dim))],
            [np.zeros((self.dim, self.dim)), eye],
        ])
        V = np.kron(prep, eye)
        return V.conj().T @ select @ V


def projector_onto(vectors):
    """Orthogonal projection onto the span of the given columns (a single vector is allowed)."""
    V = np.asarray(vectors, dtype=complex)
    if V.ndim == 1:
        V = V[:, None]
    Q, _ = np.linalg.qr(V)
    return Q @ Q.conj().T


def scaling_operator(projection, s):
    if not 0 < s < 1:
        raise InvalidPreconditionerError(f"scale s = {s} must lie in (0, 1)")
    P = np.asarray(projection, dtype=complex)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or not is_projection(P):
        raise ParameterError("projection must be a square orthogonal projection")
    return Preconditioner(P, float(s))


def inflation_bound(M, pre: Preconditioner):
    """sqrt(||M^-1 P||^2 / s^2 + ||M^-1 (I - P)||^2), an upper bound on ||(S M)^-1||."""
    Minv = np.linalg.inv(M)
    P = pre.projection
    inner = operator_norm(Minv @ P) / pre.scale
    outer = operator_norm(Minv @ (np.eye(pre.dim) - P))
    return math.sqrt(inner**2 + outer**2)


@dataclass
class SelfPreconditionedResult:
    state: np.ndarray
    ledger: CostLedger
    analytic_ledger: CostLedger
    scale: float
    inverse_norm: float
    inverse_norm_bound: float
    success_amplitude: float
    success_probability: float
    fidelity: float
    rounds: int

    def to_json(self):
        return {
            "state": [[float(z.real), float(z.imag)] for z in self.state],
            "ledger": self.ledger.to_json(),
            "scale": self.scale,
            "inverse_norm": self.inverse_norm,
            "inverse_norm_bound": self.inverse_norm_bound,
            "success_amplitude": self.success_amplitude,
            "success_probability": self.success_probability,
            "fidelity": self.fidelity,
            "rounds": self.rounds,
            "ledger_matches": self.ledger.counts() == self.analytic_ledger.counts(),
        }


def self_preconditioned_solve(instance, t, eps=1e-2):
    """Solve A x = b after scaling the b direction by s = t / (2 alpha_Ainv).

    t must satisfy t/2 < ||A^-1 b|| < 2t.  The block encoding of S costs two
    O_b calls, so every use of S A costs one O_A and two O_b calls.
    """
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    x_norm = instance.solution_norm
    if not t / 2 < x_norm < 2 * t:
        raise PreconditionFailure(f"estimate t = {t} violates t/2 < ||A^-1 b|| = {x_norm} < 2t")
    alpha_A = instance.alpha_A or instance.norm_A
    alpha_Ainv = instance.alpha_Ainv or instance.norm_Ainv
    pre = scaling_operator(projector_onto(instance.b), t / (2 * alpha_Ainv))
    SA = pre.S @ instance.A
    inv_norm = operator_norm(np.linalg.inv(SA))
    bound = SQRT17 * alpha_Ainv
    if inv_norm > bound * (1 + TAU_UNIT):
        raise ContractError(f"||(SA)^-1|| = {inv_norm} exceeds sqrt(17) alpha_Ainv = {bound}")
    run = inversion_solve(SA, instance.b, alpha_A, bound, eps, amplitude_estimate=2 / SQRT17,
                          b_queries_per_use=2)
    if run.success_amplitude < 1 / SQRT17 * (1 - TAU_UNIT):
        raise ContractError(f"success amplitude {run.success_amplitude} is below 1/sqrt(17)")
    return SelfPreconditionedResult(
        state=run.state,
        ledger=run.ledger,
        analytic_ledger=run.analytic_ledger,
        scale=pre.scale,
        inverse_norm=inv_norm,
        inverse_norm_bound=bound,
        success_amplitude=run.success_amplitude,
        success_probability=run.success_probability,
        fidelity=fidelity(run.state, instance.solution_state),
        rounds=run.rounds,
    )
