"""Invariant synthesis as a sums-of-squares program, and its SDP encoding.

For a system with initial box ``X_in`` (constraints ``r_in``), loop
condition ``r0``, cells with guards ``r_i`` and updates ``T_i``, and a
target polynomial ``kappa``, the degree-``2m`` program is::

    minimize w over p (degree <= 2m), w and SOS multipliers, such that
      init:    -p            = sigma0 - sum_j sigma_in_j r_in_j
      step_i:  p - p o T_i   = sigma_i - sum_j mu_i_j r_i_j - sum_j gamma_i_j r0_j
      bound:   w + p - kappa = psi

Feasible points give an inductive invariant ``{p <= 0}`` on which
``kappa <= w``.  Each identity is matched coefficient by coefficient on
every monomial up to its degree cap (``2m`` for init and bound,
``2m deg T_i`` for step_i); each multiplier gets the largest Gram basis
whose product with its factor fits under the cap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .model import PPS, SublevelProperty
from .poly import (
    GramTerm,
    MonomialBasis,
    MonomialIndex,
    Polynomial,
    composed_monomials,
    expand_gram,
    gram_operator,
    monomial_basis,
)
from .sdp import BlockLabel, SDPInstance, SDPSolution, SolverOptions, Status, VarMap, solve

DEFAULT_COEF_BOUND = 1e6


class DegreeError(ValueError):
    """The requested relaxation order cannot express the property."""

    def __init__(self, message: str, minimal_m: int):
        super().__init__(message)
        self.minimal_m = minimal_m


class RecoveryError(RuntimeError):
    """The solver did not return a usable primal point."""

    def __init__(self, status: Status, message: str = ""):
        super().__init__(f"no solution to recover (status {status.value}){': ' + message if message else ''}")
        self.status = status


@dataclass(frozen=True)
class SOSUnknown:
    name: str
    basis: MonomialBasis
    identity: str
    factor: Polynomial  # multiplies b^T Q b inside its identity, sign included


@dataclass(frozen=True)
class Identity:
    """``sum_a c_a p_part[a] + w_coef w + constant + sum_u factor_u b_u^T Q_u b_u = 0``."""

    name: str
    cap: int
    p_part: tuple = field(repr=False)
    w_coef: float
    constant: Polynomial = field(repr=False)


@dataclass(frozen=True)
class SOSProgram:
    pps: PPS
    prop: SublevelProperty
    m: int
    p_basis: MonomialBasis
    unknowns: tuple
    identities: tuple
    coef_bound: float | None = DEFAULT_COEF_BOUND
    w_max: float | None = None
    residual_budget: float = 0.0

    @property
    def dim(self) -> int:
        return self.pps.dim

    def unknowns_of(self, identity: str) -> list:
        return [u for u in self.unknowns if u.identity == identity]


@dataclass(frozen=True)
class MultiplierSlot:
    """One SOS multiplier: its name, identity, signed factor and the identity's degree cap."""

    name: str
    identity: str
    factor: Polynomial
    cap: int

    @property
    def half_degree(self) -> int:
        return (self.cap - self.factor.degree) // 2


def identity_caps(pps: PPS, m: int) -> dict:
    """Degree cap per identity name, in program order."""
    caps = {"init": 2 * m}
    for i, cell in enumerate(pps.cells, 1):
        caps[f"step_{i}"] = 2 * m * max(1, cell.update.degree)
    caps["bound"] = 2 * m
    return caps


def multiplier_layout(pps: PPS, m: int) -> tuple:
    """Every multiplier of the order-``m`` program, in block order.

    Multipliers whose factor is zero or exceeds the identity's degree cap
    are left out; the layout is shared by synthesis and verification.
    """
    d = pps.dim
    caps = identity_caps(pps, m)
    one = Polynomial.constant(d, 1.0)
    raw = [("sigma0", "init", -one)]
    raw += [(f"sigma_in_{j}", "init", c.poly) for j, c in enumerate(pps.x_in.constraints, 1)]
    for i, cell in enumerate(pps.cells, 1):
        name = f"step_{i}"
        raw.append((f"sigma_{i}", name, -one))
        raw += [(f"mu_{i}_{j}", name, c.poly) for j, c in enumerate(cell.guard.constraints, 1)]
        raw += [(f"gamma_{i}_{j}", name, c.poly) for j, c in enumerate(pps.x0.constraints, 1)]
    raw.append(("psi", "bound", -one))
    return tuple(MultiplierSlot(n, ident, f, caps[ident]) for n, ident, f in raw
                 if not f.is_zero() and f.degree <= caps[ident])


def build_sos_program(pps: PPS, prop: SublevelProperty, m: int, *,
                      coef_bound: float | None = DEFAULT_COEF_BOUND,
                      w_max: float | None = None,
                      residual_budget: float = 0.0) -> SOSProgram:
    """Assemble the order-``m`` program for ``pps`` and ``prop``.

    ``coef_bound`` boxes the coefficients of ``p`` (``None`` disables the
    box); ``w_max`` optionally adds the constraint ``w <= w_max``.
    ``residual_budget`` lets every identity coefficient miss zero by at most
    that amount. Zero gives the exact program; a positive budget must stay
    below the verifier's residual tolerance for the result to certify.
    """
    if m < 1:
        raise ValueError("relaxation order m must be >= 1")
    if not (residual_budget >= 0 and math.isfinite(residual_budget)):
        raise ValueError("residual_budget must be finite and >= 0")
    d = pps.dim
    if prop.kappa.dim != d:
        raise ValueError(f"property is {prop.kappa.dim}-variate but the program has {d} variables")
    need = max(1, math.ceil(prop.kappa.degree / 2))
    if prop.kappa.degree > 2 * m:
        raise DegreeError(f"deg kappa = {prop.kappa.degree} requires m >= {need}", need)
    p_basis = monomial_basis(d, 2 * m)
    mons = p_basis.monomials
    basis_polys = [Polynomial.monomial(a) for a in mons]
    caps = identity_caps(pps, m)

    identities = [Identity("init", caps["init"], tuple(-b for b in basis_polys), 0.0, Polynomial.zero(d))]
    for i, cell in enumerate(pps.cells, 1):
        name = f"step_{i}"
        composed = composed_monomials(cell.update, mons)
        identities.append(Identity(name, caps[name], tuple(b - bt for b, bt in zip(basis_polys, composed)),
                                   0.0, Polynomial.zero(d)))
    identities.append(Identity("bound", caps["bound"], tuple(basis_polys), 1.0, -prop.kappa))

    unknowns = tuple(SOSUnknown(s.name, monomial_basis(d, s.half_degree), s.identity, s.factor)
                     for s in multiplier_layout(pps, m))
    return SOSProgram(pps, prop, m, p_basis, unknowns, tuple(identities), coef_bound, w_max,
                      float(residual_budget))


def compile_program(sos: SOSProgram) -> SDPInstance:
    """Encode ``sos`` as an :class:`SDPInstance`.

    Layout: free scalars ``w`` then the coefficients of ``p`` in basis
    order; one PSD block per unknown in ``sos.unknowns`` order; nonnegative
    slacks for the coefficient box and the optional ``w_max`` bound.
    Rows run identity by identity, monomials in graded order.

    With a residual budget ``delta`` each identity row ``r`` gains the term
    ``delta (t_r - s_r)`` with ``s_r + t_r = 1`` and ``s_r, t_r >= 0``.
    """
    d = sos.dim
    row_labels = []
    offsets = {}
    row_sets = {}
    for ident in sos.identities:
        rows = monomial_basis(d, ident.cap).monomials
        offsets[ident.name] = len(row_labels)
        row_sets[ident.name] = rows
        row_labels.extend((ident.name, a) for a in rows)
    m_rows = len(row_labels)
    n_p = len(sos.p_basis)
    b = np.zeros(m_rows)

    fr, fc, fv = [], [], []
    for ident in sos.identities:
        off = offsets[ident.name]
        idx = monomial_basis(d, ident.cap).index
        for a, c in ident.constant.items():
            b[off + idx(a)] -= c
        if ident.w_coef:
            fr.append(off)
            fc.append(0)
            fv.append(ident.w_coef)
        for k, part in enumerate(ident.p_part):
            for a, c in part.items():
                fr.append(off + idx(a))
                fc.append(1 + k)
                fv.append(c)
    A_free = sp.csr_matrix((fv, (fr, fc)), shape=(m_rows, 1 + n_p))
    c_free = np.zeros(1 + n_p)
    c_free[0] = 1.0

    A_psd, labels = [], []
    indexers = {name: MonomialIndex(rows, d, max(sum(r) for r in rows)) for name, rows in row_sets.items()}
    for u in sos.unknowns:
        local = gram_operator(u.basis, row_sets[u.identity], u.factor, indexers[u.identity])
        off = offsets[u.identity]
        full = sp.vstack([sp.csr_matrix((off, local.shape[1])), local,
                          sp.csr_matrix((m_rows - off - local.shape[0], local.shape[1]))]).tocsr()
        A_psd.append(full)
        labels.append(BlockLabel(u.name, len(u.basis), u.basis))

    # linear slacks: entries (row, column, value) in the full row numbering
    lr, lc, lv, lin_names, extra_rows, extra_b = [], [], [], [], [], []
    extra_free = []

    def extra_row(label, rhs):
        extra_rows.append(label)
        extra_b.append(rhs)
        return m_rows + len(extra_rows) - 1

    def slack(name, entries):
        col = len(lin_names)
        lin_names.append(name)
        for r, v in entries:
            lr.append(r)
            lc.append(col)
            lv.append(v)

    if sos.coef_bound is not None and math.isfinite(sos.coef_bound):
        B = float(sos.coef_bound)
        for k, a in enumerate(sos.p_basis.monomials):
            for sign, tag in ((1.0, "box+"), (-1.0, "box-")):
                r = extra_row((tag, a), 1.0)
                extra_free.append((r - m_rows, 1 + k, sign / B))
                slack((tag, a), [(r, 1.0)])
    if sos.w_max is not None:
        r = extra_row(("w_max", None), float(sos.w_max))
        extra_free.append((r - m_rows, 0, 1.0))
        slack(("w_max", None), [(r, 1.0)])
    if sos.residual_budget > 0:
        delta = sos.residual_budget
        for r0, label in enumerate(row_labels[:m_rows]):
            r = extra_row(("budget",) + label, 1.0)
            slack(("budget-",) + label, [(r0, -delta), (r, 1.0)])
            slack(("budget+",) + label, [(r0, delta), (r, 1.0)])
    n_extra = len(extra_rows)
    if n_extra:
        er, ec, ev = zip(*extra_free) if extra_free else ((), (), ())
        A_free = sp.vstack([A_free, sp.csr_matrix((ev, (er, ec)), shape=(n_extra, 1 + n_p))]).tocsr()
        A_psd = [sp.vstack([A, sp.csr_matrix((n_extra, A.shape[1]))]).tocsr() for A in A_psd]
        b = np.concatenate([b, extra_b])
        row_labels.extend(extra_rows)
    A_lin = sp.csr_matrix((lv, (lr, lc)), shape=(m_rows + n_extra, len(lin_names)))

    free_names = ["w"] + [("p", a) for a in sos.p_basis.monomials]
    var_map = VarMap(free_names, labels, lin_names)
    return SDPInstance(b=b, A_free=A_free, c_free=c_free, A_psd=A_psd, C_psd=[None] * len(A_psd),
                       A_lin=A_lin, c_lin=np.zeros(len(lin_names)), var_map=var_map, row_labels=row_labels)


# ``compile`` is the public name; the alias avoids shadowing the builtin inside this module.
compile = compile_program  # noqa: A001


@dataclass(frozen=True)
class Recovered:
    p: Polynomial
    w: float
    grams: dict


def recover(sol: SDPSolution, sos: SOSProgram) -> Recovered:
    if not sol.status.has_point:
        raise RecoveryError(sol.status, sol.message)
    y = np.asarray(sol.y)
    coefs = {a: y[1 + k] for k, a in enumerate(sos.p_basis.monomials)}
    p = Polynomial(sos.dim, coefs)
    grams = {u.name: GramTerm(u.basis, X) for u, X in zip(sos.unknowns, sol.X)}
    return Recovered(p, float(y[0]), grams)


@dataclass
class SynthesisResult:
    sos: SOSProgram
    instance: SDPInstance
    solution: SDPSolution
    recovered: Recovered | None

    @property
    def status(self) -> Status:
        return self.solution.status


def synthesize(pps: PPS, prop: SublevelProperty, m: int, opts: SolverOptions | None = None,
               **build_kwargs) -> SynthesisResult:
    """Build, compile and solve the order-``m`` program."""
    sos = build_sos_program(pps, prop, m, **build_kwargs)
    inst = compile_program(sos)
    sol = solve(inst, opts)
    rec = recover(sol, sos) if sol.status.has_point else None
    return SynthesisResult(sos, inst, sol, rec)


def sos_feasibility_instance(target: Polynomial, half_degree: int) -> SDPInstance:
    """Find ``Q`` PSD with ``b^T Q b == target`` (zero objective)."""
    d = target.dim
    basis = monomial_basis(d, half_degree)
    rows = monomial_basis(d, 2 * half_degree)
    if target.degree > 2 * half_degree:
        raise ValueError("target degree exceeds the Gram basis reach")
    b = np.array([target.coefficient(a) for a in rows.monomials])
    A = gram_operator(basis, rows.monomials)
    var_map = VarMap([], [BlockLabel("gram", len(basis), basis)], [])
    return SDPInstance(b=b, A_free=sp.csr_matrix((len(b), 0)), c_free=np.zeros(0), A_psd=[A],
                       C_psd=[None], A_lin=sp.csr_matrix((len(b), 0)), c_lin=np.zeros(0),
                       var_map=var_map, row_labels=list(rows.monomials))


@dataclass(frozen=True)
class Completion:
    q: Polynomial
    status: str  # accepted | rejected | undecided
    gram: GramTerm | None = None
    residual: float | None = None
    min_eigenvalue: float | None = None

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


def complete_basis(p: Polynomial, w: float, candidates: Sequence[Polynomial],
                   opts: SolverOptions | None = None, eps_residual: float = 1e-6,
                   eps_psd: float = 1e-6) -> list:
    """Decide ``p - q`` SOS for each candidate ``q``.

    Accepted candidates carry a Gram witness that passed an independent
    residual and eigenvalue check.  ``w`` is only used by callers to build
    candidates; it is accepted here so the signature mirrors a certificate.
    """
    out = []
    for q in candidates:
        diff = p - q
        half = math.ceil(max(p.degree, q.degree) / 2)
        inst = sos_feasibility_instance(diff, half)
        sol = solve(inst, opts)
        if sol.status in (Status.INFEASIBLE,):
            out.append(Completion(q, "rejected"))
            continue
        if not sol.status.has_point:
            out.append(Completion(q, "undecided"))
            continue
        gram = GramTerm(monomial_basis(p.dim, half), sol.X[0])
        res = (diff - expand_gram(gram)).max_abs_coefficient()
        lmin = gram.min_eigenvalue()
        if res <= eps_residual and lmin >= -eps_psd:
            out.append(Completion(q, "accepted", gram, res, lmin))
        else:
            out.append(Completion(q, "undecided", gram, res, lmin))
    return out


def square_candidates(dim: int, w: float) -> list:
    """``x_k^2 - w`` for each coordinate."""
    return [Polynomial.variable(dim, k) ** 2 - w for k in range(dim)]
