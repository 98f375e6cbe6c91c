"""Solver-independent verification of invariant certificates.

A certificate is the tuple ``(p, w, Gram matrices)``.  Verification
rebuilds every identity of the order-``m`` program from the program text
with exact polynomial arithmetic (``p o T_i`` is recomputed, not read
back from the solver), expands each Gram matrix, and measures the
largest coefficient of ``lhs - rhs``.  Positive semidefiniteness is
checked with a symmetric eigensolve.  The result is a numerical
certificate, not a formal proof.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _json
from .model import PPS, SublevelProperty, membership, select_cell
from .poly import GramTerm, Polynomial, monomial_basis
from .synth import Recovered, SOSProgram, multiplier_layout

EPS_RESIDUAL = 1e-6
EPS_PSD = 1e-6

CERTIFIED = "certified"
CERTIFIED_UP_TO_ALPHA_GAP = "certified_up_to_alpha_gap"
REJECTED = "rejected"


class CertificateError(ValueError):
    """The certificate does not fit the program it is checked against."""


@dataclass(frozen=True)
class Certificate:
    m: int
    p: Polynomial
    w: float
    grams: dict = field(repr=False)
    prop: SublevelProperty
    pps_hash: str

    @property
    def dim(self) -> int:
        return self.p.dim

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        grams = {}
        for name, g in self.grams.items():
            Q = np.asarray(g.matrix)
            iu = np.triu_indices(len(g.basis))
            grams[name] = {"basis_degree": g.basis.half_degree, "upper_triangle": Q[iu].tolist()}
        return {
            "dim": self.dim,
            "m": self.m,
            "w": float(self.w),
            "p": _terms(self.p),
            "grams": grams,
            "property": {"kappa": _terms(self.prop.kappa), "alpha": _alpha_out(self.prop.alpha)},
            "pps_hash": self.pps_hash,
        }

    def to_json(self) -> str:
        return _json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        try:
            d = int(data["dim"])
            grams = {}
            for name, g in data["grams"].items():
                basis = monomial_basis(d, int(g["basis_degree"]))
                n = len(basis)
                vals = np.asarray(g["upper_triangle"], dtype=float)
                if vals.shape != (n * (n + 1) // 2,):
                    raise CertificateError(f"Gram {name!r}: {vals.size} entries for a basis of size {n}")
                Q = np.zeros((n, n))
                Q[np.triu_indices(n)] = vals
                Q = Q + np.triu(Q, 1).T
                grams[name] = GramTerm(basis, Q)
            prop = data["property"]
            return cls(
                m=int(data["m"]),
                p=_poly_in(d, data["p"]),
                w=float(data["w"]),
                grams=grams,
                prop=SublevelProperty(_poly_in(d, prop["kappa"]), _alpha_in(prop["alpha"])),
                pps_hash=str(data["pps_hash"]),
            )
        except (KeyError, TypeError) as exc:
            raise CertificateError(f"malformed certificate: {exc!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        return cls.from_dict(_json.loads(text))


def _terms(p: Polynomial) -> list:
    return [[list(a), c] for a, c in p.items()]


def _poly_in(d: int, terms) -> Polynomial:
    return Polynomial(d, {tuple(a): c for a, c in terms})


def _alpha_out(alpha: float):
    return "inf" if math.isinf(alpha) else float(alpha)


def _alpha_in(value) -> float:
    return math.inf if value == "inf" else float(value)


def certificate_from(rec: Recovered, sos: SOSProgram) -> Certificate:
    """Package a recovered solver point; nothing is checked here."""
    return Certificate(sos.m, rec.p, rec.w, dict(rec.grams), sos.prop, sos.pps.fingerprint())


@dataclass(frozen=True)
class VerificationReport:
    identity_residuals: dict
    min_eigenvalues: dict
    psd_ok: bool
    identity_ok: bool
    alpha_ok: bool
    verdict: str

    @property
    def residual_max(self) -> float:
        return max(self.identity_residuals.values(), default=0.0)

    @property
    def lambda_min(self) -> float:
        return min(self.min_eigenvalues.values(), default=0.0)

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED


def _verdict(residuals: dict, eigs: dict, w: float, alpha: float, eps_residual: float,
             eps_psd: float) -> VerificationReport:
    identity_ok = all(r <= eps_residual for r in residuals.values()) and math.isfinite(w)
    psd_ok = all(e >= -eps_psd for e in eigs.values())
    alpha_ok = math.isinf(alpha) or w <= alpha
    if psd_ok and identity_ok:
        verdict = CERTIFIED if alpha_ok else CERTIFIED_UP_TO_ALPHA_GAP
    else:
        verdict = REJECTED
    return VerificationReport(residuals, eigs, psd_ok, identity_ok, alpha_ok, verdict)


def identity_residuals(cert: Certificate, pps: PPS) -> dict:
    """Coefficient infinity norm of ``lhs - rhs`` for every identity."""
    layout = multiplier_layout(pps, cert.m)
    missing = [s.name for s in layout if s.name not in cert.grams]
    if missing:
        raise CertificateError(f"missing multiplier(s): {', '.join(missing)}")
    expected = {s.name for s in layout}
    extra = sorted(set(cert.grams) - expected)
    if extra:
        raise CertificateError(f"unexpected multiplier(s): {', '.join(extra)}")
    p = cert.p
    lhs = {"init": -p}
    for i, cell in enumerate(pps.cells, 1):
        lhs[f"step_{i}"] = p - p.compose(cell.update)
    lhs["bound"] = p + cert.w - cert.prop.kappa
    residual = dict(lhs)
    for s in layout:
        residual[s.identity] = residual[s.identity] + s.factor * cert.grams[s.name].expand()
    return {name: r.max_abs_coefficient() for name, r in residual.items()}


def verify(cert: Certificate, pps: PPS, eps_residual: float = EPS_RESIDUAL,
           eps_psd: float = EPS_PSD) -> VerificationReport:
    """Recheck ``cert`` against ``pps`` from scratch."""
    if cert.pps_hash != pps.fingerprint():
        raise CertificateError("certificate was issued for a different program (fingerprint mismatch)")
    if cert.dim != pps.dim or cert.prop.kappa.dim != pps.dim:
        raise CertificateError("certificate dimension differs from the program")
    residuals = identity_residuals(cert, pps)
    eigs = {name: g.min_eigenvalue() for name, g in cert.grams.items()}
    return _verdict(residuals, eigs, float(cert.w), cert.prop.alpha, eps_residual, eps_psd)


def verify_sos(q: Polynomial, gram: GramTerm, eps_residual: float = EPS_RESIDUAL,
               eps_psd: float = EPS_PSD) -> VerificationReport:
    """Check ``q == b^T Q b`` with ``Q`` PSD, as a one-identity certificate."""
    res = (q - gram.expand()).max_abs_coefficient()
    return _verdict({"sos": res}, {"Q": gram.min_eigenvalue()}, 0.0, math.inf, eps_residual, eps_psd)


@dataclass(frozen=True)
class PointCheck:
    """Spot checks at one point; ``None`` means the check does not apply."""

    x: tuple
    init_ok: bool | None
    bound_ok: bool
    step_ok: bool | None


@dataclass(frozen=True)
class AuditReport:
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.init_ok is not False and c.bound_ok and c.step_ok is not False for c in self.checks)

    def count(self, attr: str, value) -> int:
        return sum(1 for c in self.checks if getattr(c, attr) is value)

    @property
    def failures(self) -> list:
        return [c for c in self.checks
                if c.init_ok is False or not c.bound_ok or c.step_ok is False]


def point_audit(cert: Certificate, pps: PPS, points: Iterable,
                eps_residual: float = EPS_RESIDUAL) -> AuditReport:
    """Necessary-condition checks of the certificate at sample points."""
    p, kappa, w = cert.p, cert.prop.kappa, float(cert.w)
    checks = []
    for x in points:
        x = np.asarray(x, dtype=float)
        px = p(x)
        init_ok = bool(px <= eps_residual) if membership(pps.x_in, x) else None
        bound_ok = bool(kappa(x) <= w + px + eps_residual)
        step_ok = None
        if membership(pps.x0, x):
            i = select_cell(pps, x)
            if i is not None:
                step_ok = bool(p(pps.cells[i].update(x)) <= px + eps_residual)
        checks.append(PointCheck(tuple(float(v) for v in x), init_ok, bound_ok, step_ok))
    return AuditReport(tuple(checks))
