"""Does the reachable set avoid a ball?

kappa(x) = 0.25 - |x + (0.5, 0.5)|^2 is nonnegative exactly on the ball of
radius 0.5 around (-0.5, -0.5).  A certified w < 0 would prove avoidance.
The exact program is used; its bound stays at the ball's peak value 0.25,
so the verdict is inconclusive.  The script also writes plot data for the
certified sublevel set {p <= 0} and a sample of reachable points.
"""
import sys
from pathlib import Path

from sosinv.benchmarks import load_property
from sosinv.cli import analyze
from sosinv.sim import grid_eval, sample_reach, write_grid_csv, write_points_csv, write_region_pgm

out = Path(sys.argv[1] if len(sys.argv) > 1 else "avoid_out")
out.mkdir(exist_ok=True)
pps, prop = load_property("avoid/ball")
rep = analyze(pps, prop, [2, 3])
for r in rep.records:
    print(f"m={r.m}  {r.status:<10} w={r.w_m:.6g}  {r.alpha_verdict}")

reach = sample_reach(pps, 100, 6, seed=0)
write_points_csv(out / "points.csv", reach)
cert = rep.best.certificate
grid = grid_eval(cert.p, [(-1.5, 1.5), (-1.5, 1.5)], 200)
write_grid_csv(out / "grid.csv", grid)
write_region_pgm(out / "region.pgm", grid)
inside = (cert.p.eval_many(reach.points) <= 1e-6).mean()
print(f"wrote {out}/points.csv, grid.csv, region.pgm; {inside:.0%} of sampled points in {{p <= 0}}")
