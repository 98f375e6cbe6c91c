"""Bounds for a switched quadratic system, two properties.

The first property bounds |x|^2, the second the squared distance between
the two branch updates.  Both use order m = 3 with a 9e-7 residual budget;
every certificate is re-checked by the verifier.
"""
from sosinv.benchmarks import load_property
from sosinv.cli import analyze

for key in ("switched/norm", "switched/branch_error"):
    pps, prop = load_property(key)
    rep = analyze(pps, prop, [2, 3], residual_budget=9e-7)
    print(key)
    for r in rep.records:
        w = "-" if r.w_m is None else f"{r.w_m:.4f}"
        res = "-" if r.identity_residual_max is None else f"{r.identity_residual_max:.1e}"
        print(f"  m={r.m}  {r.status:<18} w={w:<8} residual={res}  {r.alpha_verdict}")
