"""Bundled benchmark programs and the properties studied on them."""
from __future__ import annotations

from importlib import resources

from .model import PPS, SublevelProperty, parse_program, parse_property

PROGRAMS = {
    "running": "running.prog",
    "quadratic3": "quadratic3.prog",
    "quadratic4": "quadratic4.prog",
    "avoid": "avoid.prog",
    "switched": "switched.prog",
}

# (program, kappa expression, alpha)
PROPERTIES = {
    "running/norm": ("running", "x1^2 + x2^2", "inf"),
    "quadratic3/norm": ("quadratic3", "x1^2 + x2^2 + x3^2", "inf"),
    "quadratic4/norm": ("quadratic4", "x1^2 + x2^2 + x3^2 + x4^2", "inf"),
    "avoid/ball": ("avoid", "0.25 - (x1 + 0.5)^2 - (x2 + 0.5)^2", "0"),
    "switched/norm": ("switched", "x1^2 + x2^2", "inf"),
    "switched/branch_error": (
        "switched",
        "(0.318*x1 + 0.026*x2 - 0.0001*x1*x2 + 0.0001*x1^2)^2"
        " + (0.978*x1 + 0.653*x2 + 0.0001*x1*x2)^2",
        "inf",
    ),
}


def program_path(name: str):
    return resources.files("sosinv.programs") / PROGRAMS[name]


def program_text(name: str) -> str:
    return program_path(name).read_text(encoding="utf-8")


def load_program(name: str) -> PPS:
    return parse_program(program_text(name))


def load_property(key: str) -> tuple[PPS, SublevelProperty]:
    prog, kappa, alpha = PROPERTIES[key]
    pps = load_program(prog)
    return pps, parse_property(kappa, alpha, pps.variables)
