import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sosinv.benchmarks import PROGRAMS, PROPERTIES, load_program, load_property
from sosinv.model import (
    ParseError,
    SublevelProperty,
    membership,
    parse_alpha,
    parse_polynomial,
    parse_program,
    parse_property,
    partition_diagnostic,
    render_program,
    select_cell,
)
from sosinv.poly import PolyMap, Polynomial

NAMES = ("x1", "x2")


def poly(text):
    return parse_polynomial(text, NAMES)


def test_running_example_structure(running):
    assert running.dim == 2
    assert running.box == ((0.9, 1.1), (0.0, 0.2))
    assert len(running.x0) == 1 and running.x0.constraints[0].poly == Polynomial.constant(2, -1.0)
    assert len(running.cells) == 2
    g1, g2 = (c.guard.constraints[0] for c in running.cells)
    assert g1.poly == poly("x1^2 + x2^2 - 1") and not g1.strict
    assert g2.poly == poly("1 - x1^2 - x2^2") and g2.strict
    assert running.cells[0].update == PolyMap([poly("x1^2 + x2^3"), poly("x1^3 + x2^2")])
    assert running.cells[1].update == PolyMap([poly("0.5*x1^3 + 0.4*x2^2"), poly("-0.6*x1^2 + 0.3*x2^2")])
    assert running.max_update_degree == 3


def test_box_constraints_are_affine(running):
    polys = [c.poly for c in running.x_in.constraints]
    assert polys == [poly("0.9 - x1"), poly("x1 - 1.1"), poly("0 - x2"), poly("x2 - 0.2")]


def test_identity_program():
    pps = parse_program("a, b in [0, 1] x [0, 1]; while (true) { case (true): a = a; }")
    assert len(pps.cells) == 1
    assert pps.cells[0].update == PolyMap.identity(2)  # b carried through
    assert len(pps.x0) == 0


def test_parallel_assignment_reads_prestate():
    pps = parse_program("a, b in [0, 1] x [0, 1]; while (true) { case (true): a = b; b = a; }")
    np.testing.assert_array_equal(pps.cells[0].update([1.0, 2.0]), [2.0, 1.0])


@pytest.mark.parametrize("text, fragment", [
    ("x1 in [0, 1]; while (true) { case (true): x = x1 +; }", "line 1"),
    ("x1 in [0, 1]; while (true) { case (true): x1 = y; }", "unknown identifier"),
    ("x1 in [0, 1]; while (true) { case (true): x1 = x1 / 2; }", "division"),
    ("x1 in [0, 1]; while (true) { case (true): x1 = x1^0.5; }", "exponent"),
    ("x1, x2 in [0, 1]; while (true) { case (true): x1 = x1; }", "intervals"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment):
        parse_program(text)


def test_syntax_error_has_position():
    with pytest.raises(ParseError) as info:
        parse_program("x1 in [0, 1];\nwhile (true) {\n case (true): x = x1 +; }")
    assert info.value.line == 3 and info.value.column is not None


def test_membership_examples(running):
    X1, X2 = (c.guard for c in running.cells)
    assert membership(X1, [0.6, 0.6])  # 0.72 <= 1
    assert not membership(X2, [1.0, 0.0])  # -1 < -1 fails
    assert membership(running.x0, [123.0, -7.0])


def test_select_cell_examples(running):
    assert select_cell(running, [0.9, 0.0]) == 0
    assert select_cell(running, [2.0, 0.0]) == 1
    assert select_cell(running, [1.0, 0.0]) == 0  # boundary: first match


def test_select_cell_none_on_gap():
    pps = parse_program("x in [0, 1]; while (true) { case (x <= 0): x = x; case (1 <= x): x = x; }")
    assert select_cell(pps, [0.5]) is None


def test_partition_diagnostic(running):
    diag = partition_diagnostic(running, [(-2, 2), (-2, 2)], n=2000)
    assert diag["uncovered"] == 0 and diag["multiply_covered"] == 0
    gap = parse_program("x in [0, 1]; while (true) { case (x <= 0.5): x = x; case (0.4 <= x): x = x; }")
    d2 = partition_diagnostic(gap, n=500)
    assert d2["multiply_covered"] > 0


@pytest.mark.parametrize("name", sorted(PROGRAMS))
def test_render_round_trip(name):
    pps = load_program(name)
    again = parse_program(render_program(pps))
    assert again == pps
    assert again.fingerprint() == pps.fingerprint()


@given(st.lists(st.integers(-3, 3), min_size=3, max_size=3), st.integers(1, 3))
def test_render_round_trip_random(cs, k):
    text = (f"u, v in [-1, 2] x [0.5, 3]; while (u^2 <= {k}) {{ case (u - v < {cs[0]}): "
            f"u = {cs[1]}*u*v + v^{k}; case (true): v = {cs[2]} - u; }}")
    pps = parse_program(text)
    assert parse_program(render_program(pps)) == pps


def test_property_parsing():
    prop = parse_property("x1^2 + x2^2", "inf", NAMES)
    assert prop.bounded_only and math.isinf(prop.alpha)
    assert parse_property("x1", "0.5", NAMES).alpha == 0.5
    assert parse_alpha("+inf") == math.inf
    with pytest.raises(ParseError):
        parse_alpha("lots")
    with pytest.raises(ValueError):
        SublevelProperty(Polynomial.variable(1, 0), float("nan"))


@pytest.mark.parametrize("key", sorted(PROPERTIES))
def test_benchmark_properties_load(key):
    pps, prop = load_property(key)
    assert prop.kappa.dim == pps.dim


def test_switched_branch_error_is_difference_of_updates():
    pps, prop = load_property("switched/branch_error")
    T1, T2 = (c.update for c in pps.cells)
    diff = [a - b for a, b in zip(T1.components, T2.components)]
    want = diff[0] ** 2 + diff[1] ** 2
    assert (prop.kappa - want).max_abs_coefficient() < 1e-15
