"""SDPA sparse (``.dat-s``) export and solution import.

The file describes the problem in the usual SDPA/CSDP convention::

    maximize  <F0, X>   subject to  <F_i, X> = c_i,  X block diagonal PSD

so an instance ``min c.x s.t. A x = b`` is written with ``F_i = A_i``,
``c = b`` and ``F0 = -C``.  PSD blocks come first, then a diagonal block
for the nonnegative scalars, then a diagonal block holding each free
scalar as a pair ``x+ - x-``.  A leading comment records the scalar
counts so the file can be read back into the same instance.

Solutions use the CSDP layout: the dual vector on the first line, then
``1 blk i j v`` entries for the dual slack and ``2 blk i j v`` entries
for the primal matrix.  In that convention the dual vector is ``-lam``.
Files written here start with a comment giving the entry count, which
lets a truncated file be detected.
"""
from __future__ import annotations

import re
import time
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .._json import format_float
from .problem import SDPInstance, SDPSolution, Status
from .solver import SolverOptions

_HEADER = re.compile(r"^\*\s*sosinv\s+free=(\d+)\s+lin=(\d+)\s*$")
_SOL_HEADER = re.compile(r"^\*\s*sosinv\s+solution\s+entries=(\d+)\s*$")


class SDPAFormatError(ValueError):
    """A file does not match the expected SDPA layout or instance shape."""


def _upper(A_row_dense: np.ndarray, n: int):
    M = A_row_dense.reshape(n, n)
    i, j = np.nonzero(np.triu(M))
    return [(a, b, M[a, b]) for a, b in zip(i, j)]


def _entries(inst: SDPInstance):
    """``(mat, blk, i, j, value)`` with 1-based indices, ``i <= j``."""
    out = []
    nb = len(inst.A_psd)
    for k, (A, C) in enumerate(zip(inst.A_psd, inst.C_psd)):
        n = C.shape[0]
        for a, b, v in _upper(-np.asarray(C).ravel(), n):
            out.append((0, k + 1, a + 1, b + 1, v))
        A = A.tocoo()
        for r, col, v in zip(A.row, A.col, A.data):
            a, b = divmod(int(col), n)
            if a <= b and v != 0.0:
                out.append((int(r) + 1, k + 1, a + 1, b + 1, float(v)))
    blk = nb
    if inst.n_lin:
        blk += 1
        for t, v in enumerate(inst.c_lin):
            if v != 0.0:
                out.append((0, blk, t + 1, t + 1, -float(v)))
        A = inst.A_lin.tocoo()
        out += [(int(r) + 1, blk, int(c) + 1, int(c) + 1, float(v)) for r, c, v in zip(A.row, A.col, A.data)
                if v != 0.0]
    if inst.n_free:
        blk += 1
        for t, v in enumerate(inst.c_free):
            if v != 0.0:
                out.append((0, blk, 2 * t + 1, 2 * t + 1, -float(v)))
                out.append((0, blk, 2 * t + 2, 2 * t + 2, float(v)))
        A = inst.A_free.tocoo()
        for r, c, v in zip(A.row, A.col, A.data):
            if v != 0.0:
                out.append((int(r) + 1, blk, 2 * int(c) + 1, 2 * int(c) + 1, float(v)))
                out.append((int(r) + 1, blk, 2 * int(c) + 2, 2 * int(c) + 2, -float(v)))
    out.sort(key=lambda e: e[:4])
    return out


def sdpa_text(inst: SDPInstance) -> str:
    if inst.m == 0:
        raise SDPAFormatError("no constraints")
    sizes = [str(n) for n in inst.block_sizes]
    if inst.n_lin:
        sizes.append(str(-inst.n_lin))
    if inst.n_free:
        sizes.append(str(-2 * inst.n_free))
    if not sizes:
        raise SDPAFormatError("no variables")
    lines = [
        f"* sosinv free={inst.n_free} lin={inst.n_lin}",
        str(inst.m),
        str(len(sizes)),
        " ".join(sizes),
        " ".join(format_float(v) for v in inst.b),
    ]
    lines += [f"{m} {k} {i} {j} {format_float(v)}" for m, k, i, j, v in _entries(inst)]
    return "\n".join(lines) + "\n"


def export_sdpa(inst: SDPInstance, path) -> None:
    """Write ``inst`` as an SDPA sparse file (deterministic bytes)."""
    text = sdpa_text(inst)
    Path(path).write_text(text, encoding="ascii")


def _data_lines(text: str):
    free = lin = None
    lines = []
    for raw in text.splitlines():
        s = raw.strip()
        if not s:
            continue
        if s[0] in "*\"":
            if not lines:
                match = _HEADER.match(s)
                if match:
                    free, lin = int(match.group(1)), int(match.group(2))
            continue
        lines.append(s)
    return lines, free, lin


def _floats(line: str) -> list:
    return [float(t) for t in re.split(r"[\s,{}()]+", line) if t]


def import_sdpa(path) -> SDPInstance:
    """Read an SDPA sparse file written by :func:`export_sdpa` (or any SDPA file)."""
    lines, n_free, _ = _data_lines(Path(path).read_text(encoding="ascii"))
    try:
        m = int(_floats(lines[0])[0])
        nb = int(_floats(lines[1])[0])
        sizes = [int(v) for v in _floats(lines[2])[:nb]]
        b = np.array(_floats(lines[3])[:m])
    except (IndexError, ValueError) as exc:
        raise SDPAFormatError(f"bad SDPA header: {exc}") from None
    if len(sizes) != nb or len(b) != m:
        raise SDPAFormatError("SDPA header is truncated")
    diag = [k for k, n in enumerate(sizes) if n < 0]
    # without our header comment every diagonal entry is a nonnegative scalar
    n_free = n_free or 0
    free_blk = diag[-1] if n_free else None
    psd = [k for k, n in enumerate(sizes) if n > 0]
    pos = {k: t for t, k in enumerate(psd)}
    diag_off = {}
    n_lin_total = 0
    for k in diag:
        if k != free_blk:
            diag_off[k] = n_lin_total
            n_lin_total -= sizes[k]

    Ar = [[[], [], []] for _ in psd]
    C = [np.zeros((sizes[k], sizes[k])) for k in psd]
    fr, fc, fv = [], [], []
    lr, lc, lv = [], [], []
    c_free = np.zeros(n_free)
    c_lin = np.zeros(n_lin_total)
    for line in lines[4:]:
        vals = _floats(line)
        if len(vals) != 5:
            raise SDPAFormatError(f"bad entry line {line!r}")
        mat, blk, i, j = (int(v) for v in vals[:4])
        v = vals[4]
        k = blk - 1
        if not (0 <= mat <= m and 0 <= k < nb):
            raise SDPAFormatError(f"entry out of range: {line!r}")
        if sizes[k] > 0:
            n = sizes[k]
            t = pos[k]
            if mat == 0:
                C[t][i - 1, j - 1] = C[t][j - 1, i - 1] = -v
            else:
                cells = {(i - 1) * n + (j - 1), (j - 1) * n + (i - 1)}
                for cell in cells:
                    Ar[t][0].append(mat - 1)
                    Ar[t][1].append(cell)
                    Ar[t][2].append(v)
        elif k == free_blk:
            if i % 2 == 0:
                continue  # the x- half mirrors the x+ half
            col = (i - 1) // 2
            if mat == 0:
                c_free[col] = -v
            else:
                fr.append(mat - 1)
                fc.append(col)
                fv.append(v)
        else:
            col = diag_off[k] + i - 1
            if mat == 0:
                c_lin[col] = -v
            else:
                lr.append(mat - 1)
                lc.append(col)
                lv.append(v)
    A_psd = [sp.csr_matrix((v, (r, c)), shape=(m, sizes[k] ** 2)) for (r, c, v), k in zip(Ar, psd)]
    return SDPInstance(
        b=b,
        A_free=sp.csr_matrix((fv, (fr, fc)), shape=(m, n_free)),
        c_free=c_free,
        A_psd=A_psd,
        C_psd=C,
        A_lin=sp.csr_matrix((lv, (lr, lc)), shape=(m, n_lin_total)),
        c_lin=c_lin,
    )


def write_solution(sol: SDPSolution, inst: SDPInstance, path) -> None:
    """Write a solution in the CSDP layout that :func:`import_solution` reads."""
    if not sol.status.has_point:
        raise ValueError(f"no primal point to write (status {sol.status.value})")
    lam = np.zeros(inst.m) if sol.lam is None else np.asarray(sol.lam)
    lines = [" ".join(format_float(-v) for v in lam)]
    nb = len(inst.A_psd)
    entries = []
    for k, X in enumerate(sol.X):
        n = X.shape[0]
        for i in range(n):
            for j in range(i, n):
                if X[i, j] != 0.0:
                    entries.append((2, k + 1, i + 1, j + 1, X[i, j]))
    blk = nb
    if inst.n_lin:
        blk += 1
        entries += [(2, blk, t + 1, t + 1, v) for t, v in enumerate(sol.s) if v != 0.0]
    if inst.n_free:
        blk += 1
        for t, v in enumerate(sol.y):
            if v > 0:
                entries.append((2, blk, 2 * t + 1, 2 * t + 1, v))
            elif v < 0:
                entries.append((2, blk, 2 * t + 2, 2 * t + 2, -v))
    lines += [f"{a} {b} {i} {j} {format_float(v)}" for a, b, i, j, v in entries]
    lines.insert(0, f"* sosinv solution entries={len(entries)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def local_residuals(inst: SDPInstance, y, Xs, s, lam):
    """Primal, dual and gap measures recomputed from the instance (rows normalized)."""
    norms = np.sqrt(np.asarray(inst.A_free.multiply(inst.A_free).sum(axis=1)).ravel()
                    + np.asarray(inst.A_lin.multiply(inst.A_lin).sum(axis=1)).ravel()
                    + sum(np.asarray(A.multiply(A).sum(axis=1)).ravel() for A in inst.A_psd))
    norms = np.where(norms > 0, norms, 1.0)
    r = (inst.b - inst.apply(y, Xs, s)) / norms
    pres = float(np.linalg.norm(r) / (1.0 + np.linalg.norm(inst.b / norms)))
    pobj = inst.objective(y, Xs, s)
    if lam is None:
        return pres, None, None, pobj, None
    lam = np.asarray(lam, dtype=float)
    parts = [inst.c_free - inst.A_free.T @ lam]
    for A, C, X in zip(inst.A_psd, inst.C_psd, Xs):
        Z = C - (A.T @ lam).reshape(C.shape)
        w = np.linalg.eigvalsh((Z + Z.T) / 2)
        parts.append(np.minimum(w, 0.0))
    if inst.n_lin:
        parts.append(np.minimum(inst.c_lin - inst.A_lin.T @ lam, 0.0))
    cnorm = np.sqrt(np.sum(inst.c_free ** 2) + np.sum(inst.c_lin ** 2)
                    + sum(np.sum(C ** 2) for C in inst.C_psd))
    dres = float(np.linalg.norm(np.concatenate(parts)) / (1.0 + cnorm))
    dobj = float(inst.b @ lam)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return pres, dres, gap, pobj, dobj


def import_solution(path, inst: SDPInstance, opts: SolverOptions | None = None) -> SDPSolution:
    """Read a CSDP-layout solution for ``inst``; residuals are recomputed here."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    text = Path(path).read_text(encoding="ascii")
    lines, _, _ = _data_lines(text)
    if not lines:
        raise SDPAFormatError("shape mismatch: empty solution file")
    match = _SOL_HEADER.match(text.split("\n", 1)[0].strip())
    if match and int(match.group(1)) != len(lines) - 1:
        raise SDPAFormatError(f"shape mismatch: {len(lines) - 1} entries, header announces {match.group(1)}")
    lam_file = _floats(lines[0])
    if len(lam_file) != inst.m:
        raise SDPAFormatError(f"shape mismatch: {len(lam_file)} dual values for {inst.m} constraints")
    lam = -np.array(lam_file)
    sizes = inst.block_sizes
    nb = len(sizes)
    Xs = [np.zeros((n, n)) for n in sizes]
    s = np.zeros(inst.n_lin)
    y = np.zeros(inst.n_free)
    lin_blk = nb + 1 if inst.n_lin else None
    free_blk = nb + 1 + (1 if inst.n_lin else 0) if inst.n_free else None
    for line in lines[1:]:
        vals = _floats(line)
        if len(vals) != 5:
            raise SDPAFormatError(f"shape mismatch: bad entry line {line!r}")
        mat, blk, i, j = (int(v) for v in vals[:4])
        v = vals[4]
        if mat == 1:
            continue  # dual slack: recomputed from lam
        if mat != 2:
            raise SDPAFormatError(f"shape mismatch: unknown matrix {mat}")
        try:
            if blk <= nb:
                Xs[blk - 1][i - 1, j - 1] = Xs[blk - 1][j - 1, i - 1] = v
            elif blk == lin_blk and i == j:
                s[i - 1] = v
            elif blk == free_blk and i == j:
                t, neg = divmod(i - 1, 2)
                y[t] += -v if neg else v
            else:
                raise IndexError
        except IndexError:
            raise SDPAFormatError(f"shape mismatch: entry {line!r} outside the instance") from None
    pres, dres, gap, pobj, dobj = local_residuals(inst, y, Xs, s, lam)
    if pres <= opts.eps_primal and dres <= opts.eps_dual and gap <= opts.eps_gap:
        status = Status.OPTIMAL
    elif pres <= opts.eps_primal:
        status = Status.FEASIBLE
    else:
        status = Status.NUMERICAL_FAILURE
    message = ""
    worst = min((float(np.linalg.eigvalsh(X)[0]) for X in Xs if X.size), default=0.0)
    if inst.n_lin:
        worst = min(worst, float(s.min()))
    if worst < -opts.eps_psd:
        status = Status.NUMERICAL_FAILURE
        message = f"imported block has eigenvalue {worst:.3e}"
    elif status is Status.NUMERICAL_FAILURE:
        message = f"imported point violates the constraints (primal residual {pres:.3e})"
    sol = SDPSolution(status=status, y=y, X=Xs, s=s, lam=lam, objective=pobj, dual_objective=dobj,
                      primal_residual=pres, dual_residual=dres, gap=gap,
                      wall_time=time.perf_counter() - t0, message=message)
    if not status.has_point:
        sol.objective = sol.dual_objective = None
    return sol
