"""Command line pipeline: parse, build, solve per degree, verify, report.

Commands::

    sosinv analyze  PROGRAM --kappa EXPR --alpha A --degrees 2..4 [--out report.json]
    sosinv simulate PROGRAM --n 100 --steps 6 --seed 0 --out DIR
    sosinv plot     REPORT_OR_CERT --box "[-2,2]x[-2,2]" --resolution 400 --out DIR
    sosinv complete REPORT_OR_CERT --candidates builtin:squares [--out basis.json]

``PROGRAM`` is a file path or ``builtin:NAME`` for a bundled benchmark.
Exit codes: 0 success, 2 parse or validation error, 3 nothing certified
(or every completion candidate rejected), 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _json
from .benchmarks import PROGRAMS, program_text
from .cert import (
    CERTIFIED,
    CERTIFIED_UP_TO_ALPHA_GAP,
    EPS_PSD,
    EPS_RESIDUAL,
    Certificate,
    CertificateError,
    certificate_from,
    verify,
)
from .model import (
    PPS,
    ParseError,
    SublevelProperty,
    parse_polynomial,
    parse_program,
    parse_property,
    render_program,
)
from .poly import DimensionError
from .sdp import SDPAFormatError, SolverOptions, export_sdpa, import_solution, solve
from .sim import grid_eval, sample_reach, write_grid_csv, write_points_csv, write_region_pgm
from .synth import (
    DEFAULT_COEF_BOUND,
    DegreeError,
    build_sos_program,
    compile_program,
    complete_basis,
    recover,
    square_candidates,
)

log = logging.getLogger("sosinv")

EXIT_OK, EXIT_USAGE, EXIT_INCONCLUSIVE, EXIT_IO = 0, 2, 3, 4

HOLDS, HOLDS_BOUNDED, INCONCLUSIVE, FAILED = "holds", "holds_bounded", "inconclusive", "failed"


class UsageError(ValueError):
    """Invalid flags or inputs; maps to exit code 2."""


# -- analysis -------------------------------------------------------------
@dataclass
class DegreeRecord:
    m: int
    status: str
    w_m: float | None
    alpha_verdict: str
    identity_residual_max: float | None
    lambda_min_min: float | None
    solver_iterations: int
    wall_time_s: float | None
    certificate_verdict: str | None = None
    solver_objective: float | None = None
    message: str = ""
    certificate: Certificate | None = field(default=None, repr=False)

    def to_dict(self, timings: bool) -> dict:
        return {
            "m": self.m,
            "status": self.status,
            "w_m": self.w_m,
            "alpha_verdict": self.alpha_verdict,
            "identity_residual_max": self.identity_residual_max,
            "lambda_min_min": self.lambda_min_min,
            "solver_iterations": self.solver_iterations,
            "wall_time_s": self.wall_time_s if timings else None,
            "certificate_verdict": self.certificate_verdict,
            "solver_objective": self.solver_objective,
            "message": self.message,
        }


@dataclass
class AnalysisReport:
    pps: PPS
    prop: SublevelProperty
    kappa_text: str
    records: list
    residual_budget: float = 0.0

    @property
    def best(self) -> DegreeRecord | None:
        """Lowest certified bound among degrees with a verified certificate."""
        ok = [r for r in self.records if r.certificate is not None]
        return min(ok, key=lambda r: (r.w_m, r.m)) if ok else None

    @property
    def holds(self) -> bool:
        return any(r.alpha_verdict in (HOLDS, HOLDS_BOUNDED) for r in self.records)

    def to_dict(self, timings: bool = False) -> dict:
        best = self.best
        return {
            "tool": "sosinv",
            "version": __version__,
            "program_hash": self.pps.fingerprint(),
            "program": render_program(self.pps),
            "property": {"kappa": self.kappa_text, "alpha": _alpha_text(self.prop.alpha)},
            "residual_budget": self.residual_budget,
            "degrees": [r.to_dict(timings) for r in self.records],
            "certificates": {str(r.m): r.certificate.to_dict() for r in self.records
                             if r.certificate is not None},
            "best_degree": best.m if best else None,
        }

    def to_json(self, timings: bool = False) -> str:
        return _json.dumps(self.to_dict(timings))


def _alpha_text(alpha: float) -> str:
    return "inf" if math.isinf(alpha) else repr(float(alpha))


def alpha_verdict(cert_verdict: str | None, alpha: float) -> str:
    if cert_verdict == CERTIFIED:
        return HOLDS_BOUNDED if math.isinf(alpha) else HOLDS
    if cert_verdict == CERTIFIED_UP_TO_ALPHA_GAP:
        return INCONCLUSIVE
    return FAILED


def analyze_degree(pps: PPS, prop: SublevelProperty, m: int, opts: SolverOptions | None = None,
                   eps_residual: float = EPS_RESIDUAL, eps_psd: float = EPS_PSD,
                   coef_bound: float | None = DEFAULT_COEF_BOUND, solution_path=None,
                   residual_budget: float = 0.0) -> DegreeRecord:
    """Solve (or import) and verify the order-``m`` program."""
    t0 = time.perf_counter()
    sos = build_sos_program(pps, prop, m, coef_bound=coef_bound, residual_budget=residual_budget)
    inst = compile_program(sos)
    if solution_path is None:
        sol = solve(inst, opts)
    else:
        sol = import_solution(solution_path, inst, opts)
    rec = DegreeRecord(m, sol.status.value, None, FAILED, None, None, sol.iterations, None,
                       solver_objective=sol.objective, message=sol.message)
    if sol.status.has_point:
        cert = certificate_from(recover(sol, sos), sos)
        report = verify(cert, pps, eps_residual, eps_psd)
        rec.w_m = float(cert.w)
        rec.identity_residual_max = float(report.residual_max)
        rec.lambda_min_min = float(report.lambda_min)
        rec.certificate_verdict = report.verdict
        rec.alpha_verdict = alpha_verdict(report.verdict, prop.alpha)
        if report.verdict in (CERTIFIED, CERTIFIED_UP_TO_ALPHA_GAP):
            rec.certificate = cert
    rec.wall_time_s = time.perf_counter() - t0
    return rec


def _analyze_job(args):
    return analyze_degree(*args[:3], **args[3])


def analyze(pps: PPS, prop: SublevelProperty, degrees, opts: SolverOptions | None = None, *,
            kappa_text: str | None = None, jobs: int = 1, **kwargs) -> AnalysisReport:
    """Run every degree independently, ascending; ``jobs > 1`` solves them in parallel."""
    degrees = sorted(set(degrees))
    for m in degrees:
        build_sos_program(pps, prop, m, coef_bound=None)  # DegreeError before any solve
    tasks = [(pps, prop, m, dict(opts=opts, **kwargs)) for m in degrees]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_analyze_job, tasks))
    else:
        records = []
        for t in tasks:
            records.append(_analyze_job(t))
            r = records[-1]
            log.info("m=%d status=%s w=%s verdict=%s", r.m, r.status, r.w_m, r.alpha_verdict)
    return AnalysisReport(pps, prop, kappa_text or prop.kappa.to_str(pps.variables), records,
                          float(kwargs.get("residual_budget", 0.0)))


# -- argument helpers -----------------------------------------------------
def load_program_arg(arg: str) -> PPS:
    if arg.startswith("builtin:"):
        name = arg.split(":", 1)[1]
        if name not in PROGRAMS:
            raise UsageError(f"unknown builtin program {name!r} (known: {', '.join(PROGRAMS)})")
        return parse_program(program_text(name))
    return parse_program(Path(arg).read_text(encoding="utf-8"))


def parse_degrees(text: str) -> list:
    try:
        if ".." in text:
            lo, hi = (int(t) for t in text.split("..", 1))
            out = list(range(lo, hi + 1))
        else:
            out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad degree range {text!r}; use M1..M2 or a comma list") from None
    if not out or min(out) < 1:
        raise UsageError(f"degree range {text!r} is empty or contains m < 1")
    return out


def parse_box(text: str) -> list:
    nums = [float(t) for t in re.findall(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?", text)]
    if len(nums) != 4:
        raise UsageError(f"bad box {text!r}; use [a,b]x[c,d]")
    box = [(nums[0], nums[1]), (nums[2], nums[3])]
    if any(lo >= hi for lo, hi in box):
        raise UsageError(f"empty box {text!r}")
    return box


def _solver_opts(ns) -> SolverOptions:
    return SolverOptions(eps_primal=ns.eps_primal, eps_dual=ns.eps_dual, eps_gap=ns.eps_gap,
                         max_iter=ns.max_iter)


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _certificates_from_input(path: str, program: str | None):
    """``(pps, [Certificate])`` from a report or a bare certificate file."""
    data = _json.loads(Path(path).read_text(encoding="utf-8"))
    if "certificates" in data:
        pps = parse_program(data["program"]) if program is None else load_program_arg(program)
        certs = [Certificate.from_dict(c) for _, c in sorted(data["certificates"].items(), key=lambda kv: int(kv[0]))]
    elif "grams" in data:
        if program is None:
            raise UsageError("a bare certificate needs --program to be re-verified")
        pps = load_program_arg(program)
        certs = [Certificate.from_dict(data)]
    else:
        raise UsageError(f"{path} is neither a report nor a certificate")
    return pps, certs


def _verified(pps: PPS, certs, ns) -> list:
    out = []
    for c in certs:
        try:
            rep = verify(c, pps, ns.eps_residual, ns.eps_psd)
        except CertificateError as exc:
            log.warning("m=%d: %s", c.m, exc)
            continue
        if rep.verdict in (CERTIFIED, CERTIFIED_UP_TO_ALPHA_GAP):
            out.append(c)
        else:
            log.warning("m=%d: certificate rejected on re-verification", c.m)
    return out


# -- commands -------------------------------------------------------------
def cmd_analyze(ns) -> int:
    pps = load_program_arg(ns.program)
    prop = parse_property(ns.kappa, ns.alpha, pps.variables)
    degrees = parse_degrees(ns.degrees)
    opts = _solver_opts(ns)
    coef_bound = None if ns.coef_bound <= 0 else ns.coef_bound
    budget = ns.residual_budget
    if not 0 <= budget < ns.eps_residual:
        raise UsageError(f"--residual-budget must lie in [0, eps_residual={ns.eps_residual:g})")
    if ns.solver == "export":
        out_dir = Path(ns.export_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = {"program_hash": pps.fingerprint(), "program": render_program(pps),
                    "property": {"kappa": ns.kappa, "alpha": _alpha_text(prop.alpha)},
                    "coef_bound": coef_bound, "residual_budget": budget, "instances": []}
        for m in degrees:
            inst = compile_program(build_sos_program(pps, prop, m, coef_bound=coef_bound,
                                                     residual_budget=budget))
            name = f"m{m}.dat-s"
            export_sdpa(inst, out_dir / name)
            vm = inst.var_map
            manifest["instances"].append({
                "m": m, "file": name, "constraints": inst.m,
                "free": {"w": 1, "p_monomials": [list(n[1]) for n in vm.free_names[1:]]},
                "blocks": [{"name": b.name, "size": b.size} for b in vm.blocks],
                "nonnegative": inst.n_lin, "solution": f"m{m}.sol"})
            log.info("exported m=%d to %s", m, out_dir / name)
        _write(out_dir / "manifest.json", _json.dumps(manifest))
        return EXIT_INCONCLUSIVE
    paths = {}
    if ns.solver == "import":
        for m in degrees:
            paths[m] = Path(ns.export_dir) / f"m{m}.sol"
            if not paths[m].exists():
                raise FileNotFoundError(f"missing solution file {paths[m]}")
    if paths:
        records = [analyze_degree(pps, prop, m, opts, ns.eps_residual, ns.eps_psd, coef_bound, paths[m], budget)
                   for m in degrees]
        report = AnalysisReport(pps, prop, ns.kappa, records, budget)
    else:
        report = analyze(pps, prop, degrees, opts, kappa_text=ns.kappa, jobs=ns.jobs,
                         eps_residual=ns.eps_residual, eps_psd=ns.eps_psd, coef_bound=coef_bound, residual_budget=budget)
    text = report.to_json(ns.timings)
    if ns.out:
        _write(ns.out, text)
    else:
        sys.stdout.write(text)
    for r in report.records:
        w = "-" if r.w_m is None else f"{r.w_m:.6g}"
        print(f"m={r.m} status={r.status} w={w} verdict={r.alpha_verdict}", file=sys.stderr)
    return EXIT_OK if report.holds else EXIT_INCONCLUSIVE


def cmd_simulate(ns) -> int:
    if ns.n < 1:
        raise UsageError("--n must be at least 1")
    if ns.steps < 0:
        raise UsageError("--steps must be >= 0")
    pps = load_program_arg(ns.program)
    reach = sample_reach(pps, ns.n, ns.steps, ns.seed)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    write_points_csv(out / "points.csv", reach)
    if reach.diverged:
        log.warning("%d trajectories diverged and were cut", len(reach.diverged))
    return EXIT_OK


def cmd_plot(ns) -> int:
    if ns.resolution < 2:
        raise UsageError("--resolution must be at least 2")
    box = parse_box(ns.box)
    pps, certs = _certificates_from_input(ns.input, ns.program)
    if pps.dim != 2:
        raise UsageError("plotting needs a 2-variable program")
    certs = _verified(pps, certs, ns)
    if not certs:
        raise UsageError("no certified degree to plot")
    out = Path(ns.out)
    for c in certs:
        d = out / f"m{c.m}"
        d.mkdir(parents=True, exist_ok=True)
        grid = grid_eval(c.p, box, ns.resolution)
        write_grid_csv(d / "grid.csv", grid)
        write_region_pgm(d / "region.pgm", grid)
    return EXIT_OK


def _candidates(spec: str, pps: PPS, w: float) -> list:
    if spec == "builtin:squares":
        return square_candidates(pps.dim, w)
    lines = Path(spec).read_text(encoding="utf-8").splitlines()
    return [parse_polynomial(s, pps.variables) for s in (ln.split("#", 1)[0].strip() for ln in lines) if s]


def cmd_complete(ns) -> int:
    pps, certs = _certificates_from_input(ns.input, ns.program)
    certs = _verified(pps, certs, ns)
    if ns.degree is not None:
        certs = [c for c in certs if c.m == ns.degree]
    if not certs:
        raise UsageError("no certified certificate to complete")
    cert = min(certs, key=lambda c: (c.w, c.m))
    cands = _candidates(ns.candidates, pps, cert.w)
    results = complete_basis(cert.p, cert.w, cands, _solver_opts(ns), ns.eps_residual, ns.eps_psd)
    names = pps.variables
    out = {
        "m": cert.m,
        "w": cert.w,
        "p": cert.p.to_str(names),
        "candidates": [],
        "basis": [cert.p.to_str(names)] + [r.q.to_str(names) for r in results if r.accepted],
    }
    for r in results:
        entry = {"q": r.q.to_str(names), "status": r.status,
                 "residual": r.residual, "min_eigenvalue": r.min_eigenvalue, "gram": None}
        if r.gram is not None and r.accepted:
            iu = np.triu_indices(len(r.gram.basis))
            entry["gram"] = {"basis_degree": r.gram.basis.half_degree,
                             "upper_triangle": np.asarray(r.gram.matrix)[iu].tolist()}
        out["candidates"].append(entry)
    text = _json.dumps(out)
    if ns.out:
        _write(ns.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if any(r.accepted for r in results) else EXIT_INCONCLUSIVE


# -- parser ---------------------------------------------------------------
def _tolerance_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("tolerances")
    g.add_argument("--eps-primal", type=float, default=1e-8)
    g.add_argument("--eps-dual", type=float, default=1e-8)
    g.add_argument("--eps-gap", type=float, default=1e-8)
    g.add_argument("--max-iter", type=int, default=200)
    g.add_argument("--eps-residual", type=float, default=EPS_RESIDUAL)
    g.add_argument("--eps-psd", type=float, default=EPS_PSD)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sosinv", description="Polynomial invariants from sums of squares.")
    parser.add_argument("--version", action="version", version=f"sosinv {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="certify kappa <= alpha on the reachable states")
    a.add_argument("program")
    a.add_argument("--kappa", required=True)
    a.add_argument("--alpha", default="inf")
    a.add_argument("--degrees", default="2..4")
    a.add_argument("--solver", choices=("internal", "export", "import"), default="internal",
                   help="export writes SDPA files; import reads m<M>.sol solutions back")
    a.add_argument("--export-dir", default="sdpa")
    a.add_argument("--out")
    a.add_argument("--coef-bound", type=float, default=DEFAULT_COEF_BOUND,
                   help="box on the coefficients of p (<= 0 disables)")
    a.add_argument("--residual-budget", type=float, default=0.0,
                   help="allowed miss per identity coefficient; 0 solves the exact program")
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--timings", action="store_true", help="record wall times (breaks byte determinism)")
    _tolerance_flags(a)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="sample reachable states")
    s.add_argument("program")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--steps", type=int, default=6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_simulate)

    pl = sub.add_parser("plot", help="grid values and sublevel raster per certified degree")
    pl.add_argument("input")
    pl.add_argument("--program", help="program for a bare certificate file")
    pl.add_argument("--box", default="[-2,2]x[-2,2]")
    pl.add_argument("--resolution", type=int, default=400)
    pl.add_argument("--out", default=".")
    _tolerance_flags(pl)
    pl.set_defaults(func=cmd_plot)

    c = sub.add_parser("complete", help="extend {p} with candidates q such that p - q is SOS")
    c.add_argument("input")
    c.add_argument("--program", help="program for a bare certificate file")
    c.add_argument("--candidates", default="builtin:squares")
    c.add_argument("--degree", type=int)
    c.add_argument("--out")
    _tolerance_flags(c)
    c.set_defaults(func=cmd_complete)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * ns.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except (UsageError, ParseError, DegreeError, DimensionError, CertificateError, SDPAFormatError,
            KeyError, ValueError) as exc:
        print(f"sosinv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"sosinv: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
