"""Compare query counts of the plain and self-preconditioned solvers on one instance."""
from qlsim.dinv import random_instance, solve_qls
from qlsim.precond import self_preconditioned_solve

instance = random_instance(6, seed=4, condition=27.0)
plain = solve_qls(instance, eps=1e-2)
scaled = self_preconditioned_solve(instance, t=instance.solution_norm, eps=1e-2)
print(f"plain        fidelity {plain.report.fidelity:.6f}  O_A {plain.ledger.oracle_a}  O_b {plain.ledger.oracle_b}")
print(f"preconditioned fidelity {scaled.fidelity:.6f}  O_A {scaled.ledger.oracle_a}  O_b {scaled.ledger.oracle_b}")
print(f"scale s = {scaled.scale:.4f}  amplitude {scaled.success_amplitude:.6f}  rounds {scaled.rounds}")
