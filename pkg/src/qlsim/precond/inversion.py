"""Block-encoded matrix inversion followed by fixed-round amplitude amplification.

The inverse block encoding M^{-1} / alpha_Minv is simulated exactly by a unitary
dilation of the contraction; its polynomial-approximation error is charged to
the ledger but not simulated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInstanceError, DomainError, NormalizationError, ParameterError, ResourceError
from ..numerics import operator_norm
from ..vtaa import DEFAULT_DIMENSION_CAP, CostLedger


def contraction_dilation(B):
    """Unitary [[B, sqrt(I - B B^+)], [sqrt(I - B^+ B), -B^+]] for a square contraction B."""
    B = np.asarray(B, dtype=complex)
    U, sv, Vh = np.linalg.svd(B)
    if sv.size and sv[0] > 1 + 1e-9:
        raise NormalizationError(f"operator norm {sv[0]} exceeds one")
    comp = np.sqrt(np.clip(1 - sv**2, 0, None))
    top = (U * comp) @ U.conj().T
    bottom = (Vh.conj().T * comp) @ Vh
    return np.block([[B, top], [bottom, -B.conj().T]])


def inversion_query_count(kappa, eps):
    """Uses of the coefficient block encoding per inverse application: ceil(kappa ln(1/eps))."""
    if not 0 < eps < 1:
        raise ParameterError("eps must lie in (0, 1)")
    return int(math.ceil(kappa * math.log(1 / eps)))


def amplification_rounds(amplitude):
    """Rounds r of plain amplitude amplification bringing sin((2r+1) asin a) closest to one."""
    if not 0 < amplitude <= 1:
        raise ParameterError("amplitude must lie in (0, 1]")
    return max(0, int(round(math.pi / (4 * math.asin(amplitude)) - 0.5)))


@dataclass
class InversionSolve:
    state: np.ndarray
    success_amplitude: float
    success_probability: float
    rounds: int
    queries_per_inverse: int
    ledger: CostLedger
    analytic_ledger: CostLedger
    alpha_M: float
    alpha_Minv: float

    @property
    def ledger_matches(self):
        return self.ledger.counts() == self.analytic_ledger.counts()

    def to_json(self):
        return {
            "success_amplitude": self.success_amplitude,
            "success_probability": self.success_probability,
            "rounds": self.rounds,
            "queries_per_inverse": self.queries_per_inverse,
            "alpha_M": self.alpha_M,
            "alpha_Minv": self.alpha_Minv,
            "ledger": self.ledger.to_json(),
            "ledger_matches": self.ledger_matches,
        }


def inversion_solve(M, rhs, alpha_M, alpha_Minv, eps, amplitude_estimate=None, success_mask=None,
                    b_queries_per_use=0, dimension_cap=DEFAULT_DIMENSION_CAP):
    """Prepare M^{-1} rhs (restricted to success_mask) normalized, counting oracle calls.

    alpha_M bounds ||M|| (normalization of its block encoding) and alpha_Minv
    bounds ||M^{-1}||.  Each use of the block encoding of M costs one O_A call
    plus b_queries_per_use O_b calls.  The round count comes from
    amplitude_estimate when given, otherwise from the exact success amplitude.
    """
    M = np.asarray(M, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    N = M.shape[0]
    if 2 * N > dimension_cap:
        raise ResourceError(f"dilation dimension {2 * N} exceeds cap {dimension_cap}")
    if abs(np.linalg.norm(rhs) - 1) > 1e-9:
        raise NormalizationError("right-hand side must be a unit vector")
    if operator_norm(M) > alpha_M * (1 + 1e-9):
        raise NormalizationError("alpha_M is below ||M||")
    try:
        Minv = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise DomainError("coefficient matrix is singular") from exc
    if operator_norm(Minv) > alpha_Minv * (1 + 1e-9):
        raise NormalizationError("alpha_Minv is below ||M^-1||")
    mask = np.ones(N) if success_mask is None else np.asarray(success_mask, dtype=float)
    good = np.concatenate([mask, np.zeros(N)])

    U = contraction_dilation(Minv / alpha_Minv)
    q = inversion_query_count(alpha_M * alpha_Minv, eps)
    start = np.concatenate([rhs, np.zeros(N)])
    chi = U @ start
    a = float(np.linalg.norm(good * chi))
    if a == 0:
        raise DegenerateInstanceError("success amplitude is zero")
    rounds = amplification_rounds(min(1.0, amplitude_estimate if amplitude_estimate is not None else a))

    ledger = CostLedger((), 1, state_preparations=1)
    ledger.charge("inversion", q)
    ledger.state_preparations += q * b_queries_per_use

    def use(op, v):
        ledger.charge("inversion", q)
        ledger.state_preparations += q * b_queries_per_use
        return op @ v

    w = chi
    for _ in range(rounds):
        w = w - 2 * good * w
        u = use(U.conj().T, w)
        ledger.state_preparations += 2
        u = u - 2 * start * np.vdot(start, u)
        w = -use(U, u)
    top = (good * w)[:N]
    p_final = float(np.vdot(top, top).real)

    steps = 2 * rounds + 1
    analytic = CostLedger((), 1, state_preparations=steps * (1 + q * b_queries_per_use),
                          extra={"inversion": steps * q}, source="analytic")
    return InversionSolve(
        state=top / math.sqrt(p_final),
        success_amplitude=a,
        success_probability=p_final,
        rounds=rounds,
        queries_per_inverse=q,
        ledger=ledger,
        analytic_ledger=analytic,
        alpha_M=float(alpha_M),
        alpha_Minv=float(alpha_Minv),
    )
