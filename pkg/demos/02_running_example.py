"""The running example: why the exact program is infeasible, and what a
small residual budget buys.

The loop iterates two cubic maps on a box near (1, 0.1).  Starting points
outside the unit disc, far from the reachable set, diverge under the
second map, and the decrease condition p(T(x)) <= p(x) is imposed on the
whole cell, not just on reachable points.  Along a divergent orbit p cannot increase, yet the
bound identity forces p >= |x|^2 - w, so no exact certificate exists at
any order m.
"""
import numpy as np

from sosinv.benchmarks import load_property
from sosinv.cert import certificate_from, point_audit, verify
from sosinv.sim import sample_reach, simulate
from sosinv.synth import synthesize

pps, prop = load_property("running/norm")

# %% a divergent orbit inside the second cell
t = simulate(pps, [2.0, 0.0], 8)
print(f"orbit from (2, 0), diverged={t.diverged}:")
for x in t.points:
    print(f"  {x[0]: .4g} {x[1]: .4g}")

# %% exact program, m = 2
res = synthesize(pps, prop, 2)
print("\nexact m=2:", res.status.value, "-", res.solution.message)

# %% residual budget: each identity coefficient may miss zero by 9e-7
res = synthesize(pps, prop, 2, residual_budget=9e-7)
cert = certificate_from(res.recovered, res.sos)
rep = verify(cert, pps)
print(f"budget m=2: {res.status.value}, w = {cert.w:.6g}")
print(f"  verifier: {rep.verdict}, residual {rep.residual_max:.2e}, lambda_min {rep.lambda_min:.1e}")

# %% but the certificate is only as good as its tolerance
reach = sample_reach(pps, 100, 6, seed=0)
audit = point_audit(cert, pps, reach.points)
pmax = cert.p.eval_many(reach.points).max()
print(f"  {len(reach)} reach points: max p = {pmax:.2e}, point audit failures = {len(audit.failures)}")
print("  largest |coefficient| of p:", f"{np.abs(list(cert.p.terms.values())).max():.2e}")
