"""Polynomial inductive invariants for piecewise polynomial programs via sums of squares."""
__version__ = "0.1.0"

from .cert import Certificate, VerificationReport, point_audit, verify, verify_sos
from .model import PPS, SublevelProperty, parse_polynomial, parse_program, parse_property
from .poly import GramTerm, MonomialBasis, PolyMap, Polynomial, monomial_basis
from .sim import grid_eval, sample_reach, simulate, step
from .synth import build_sos_program, compile_program, complete_basis, synthesize

__all__ = [
    "Certificate", "VerificationReport", "point_audit", "verify", "verify_sos",
    "PPS", "SublevelProperty", "parse_polynomial", "parse_program", "parse_property",
    "GramTerm", "MonomialBasis", "PolyMap", "Polynomial", "monomial_basis",
    "grid_eval", "sample_reach", "simulate", "step",
    "build_sos_program", "compile_program", "complete_basis", "synthesize",
]
