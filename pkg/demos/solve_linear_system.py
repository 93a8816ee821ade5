"""Solve a random well-conditioned system, estimating the solution norm first."""
import numpy as np

from qlsim.dinv import estimate_solution_norm, random_instance, solve_qls

instance = random_instance(8, seed=1, condition=27.0)
estimate = estimate_solution_norm(instance, alpha_p=instance.norm_Ainv / 50)
print(f"norm estimate stop level {estimate.stop_level}, within factor 3: {estimate.within_factor_three}")

# the estimate is only good to a factor of 3, so pass its upper end: overestimating
# merely lowers the pre-merge count, while underestimating can overfill the thresholds
result = solve_qls(instance, eps=1e-2, sqrt_p_estimate=3 * estimate.sqrt_p)
exact = np.linalg.solve(instance.A, instance.b)
exact /= np.linalg.norm(exact)
print(f"fidelity {result.report.fidelity:.6f}  overlap {abs(np.vdot(exact, result.state)):.6f}")
print(f"O_A calls {result.ledger.oracle_a}  O_b calls {result.ledger.oracle_b}")
