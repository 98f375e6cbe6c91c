"""A single SOS certificate, by hand and by the solver.

q = 1 + x1^2 - 2 x1 x2 + x2^2 is a sum of squares: 1^2 + (x1 - x2)^2.
In the basis (1, x1, x2) a hand-written Gram matrix shows it, and the SDP
solver finds another one.  Both pass the independent check.
"""
import numpy as np

from sosinv.cert import verify_sos
from sosinv.poly import GramTerm, Polynomial, expand_gram, monomial_basis
from sosinv.sdp import solve
from sosinv.synth import sos_feasibility_instance

x1, x2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
q = 1 + x1 ** 2 - 2 * x1 * x2 + x2 ** 2
basis = monomial_basis(2, 1)
print("q =", q.to_str(("x1", "x2")))

# %% the Gram matrix written down directly
Q = np.array([[1.0, 0, 0],
              [0, 1, -1],
              [0, -1, 1]])
print("eigenvalues:", np.linalg.eigvalsh(Q).round(12))
rep = verify_sos(q, GramTerm(basis, Q))
print("hand Gram:", rep.verdict, "residual", rep.residual_max)

# %% the same question as an SDP
sol = solve(sos_feasibility_instance(q, 1))
G = GramTerm(basis, sol.X[0])
print("solver status:", sol.status.value, "in", sol.iterations, "iterations")
print(np.array2string(G.matrix, precision=6, suppress_small=True))
err = (expand_gram(G) - q).max_abs_coefficient()
print(f"expansion error {err:.1e}, min eigenvalue {G.min_eigenvalue():.2e}")
print("solver Gram:", verify_sos(q, G).verdict)

# %% x1^2 - 1 is negative at the origin, so no Gram matrix exists
sol = solve(sos_feasibility_instance(x1 ** 2 - 1, 1))
print("x1^2 - 1:", sol.status.value)
