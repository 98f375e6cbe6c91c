import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosinv.cert import certificate_from, verify
from sosinv.model import parse_program, parse_property
from sosinv.poly import Polynomial, monomial_basis
from sosinv.sdp import Status, solve
from sosinv.synth import (
    DegreeError,
    RecoveryError,
    build_sos_program,
    compile_program,
    complete_basis,
    identity_caps,
    multiplier_layout,
    recover,
    square_candidates,
    synthesize,
)

HALVING = "x in [-1, 1]; while (true) { case (true): x = 0.5*x; }"
ORIGIN = "x1, x2 in [0, 0] x [0, 0]; while (true) { case (true): x1 = x1; }"


def norm_prop(pps):
    return parse_property(" + ".join(f"{v}^2" for v in pps.variables), "inf", pps.variables)


def test_running_example_layout(running):
    sos = build_sos_program(running, norm_prop(running), 2)
    caps = {i.name: i.cap for i in sos.identities}
    assert caps == {"init": 4, "step_1": 12, "step_2": 12, "bound": 4}
    sizes = {u.name: len(u.basis) for u in sos.unknowns}
    assert sizes["sigma0"] == 6 and sizes["psi"] == 6
    assert all(sizes[f"sigma_in_{j}"] == 3 for j in range(1, 5))
    assert sizes["sigma_1"] == sizes["sigma_2"] == 28  # half degree 6
    assert sizes["mu_1_1"] == sizes["mu_2_1"] == 21  # guard degree 2: half degree 5
    assert sizes["gamma_1_1"] == sizes["gamma_2_1"] == 28  # constant loop condition kept
    assert len(sos.unknowns) == 1 + 4 + 2 * 3 + 1
    inst = compile_program(sos)
    assert inst.n_free == 1 + math.comb(2 + 4, 2)
    assert inst.m - inst.n_lin == sum(math.comb(2 + c, 2) for c in caps.values())


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=15)
def test_block_size_formula(m, deg_t, deg_g):
    text = (f"a, b in [0, 1] x [0, 1]; while (a^{deg_g} <= 1) {{ case (b^{deg_g} <= a): "
            f"a = b^{deg_t}; case (true): b = a; }}")
    pps = parse_program(text)
    sos = build_sos_program(pps, norm_prop(pps), m)
    caps = identity_caps(pps, m)
    for u in sos.unknowns:
        cap = caps[u.identity]
        assert len(u.basis) == math.comb(2 + (cap - u.factor.degree) // 2, 2)
        assert u.factor.degree + 2 * u.basis.half_degree <= cap
    inst = compile_program(sos)
    assert inst.n_free == 1 + math.comb(2 + 2 * m, 2)
    assert len(inst.var_map) == inst.n_scalar_entries
    assert inst.check_symmetric()


def test_layout_names_match_unknowns(running):
    sos = build_sos_program(running, norm_prop(running), 3)
    assert [u.name for u in sos.unknowns] == [s.name for s in multiplier_layout(running, 3)]


def test_degree_error():
    pps = parse_program(HALVING)
    prop = parse_property("x^4", "inf", pps.variables)
    with pytest.raises(DegreeError, match="requires m >= 2") as info:
        build_sos_program(pps, prop, 1)
    assert info.value.minimal_m == 2


def test_identity_update_step_is_zero():
    pps = parse_program(ORIGIN)
    sos = build_sos_program(pps, norm_prop(pps), 1)
    step = next(i for i in sos.identities if i.name == "step_1")
    assert all(part.is_zero() for part in step.p_part)


def test_origin_program_bound_is_zero():
    # reachable set {0}: w >= kappa(0) = 0 and p = |x|^2 with w = 0 is feasible at m = 2
    pps = parse_program(ORIGIN)
    res = synthesize(pps, norm_prop(pps), 2)
    assert res.status.has_point
    assert res.recovered.w == pytest.approx(0.0, abs=1e-6)
    p = res.recovered.p
    assert p.eval([0, 0]) <= 1e-6 and 0.0 <= res.recovered.w + p.eval([0, 0]) + 1e-6


def test_halving_map_bound_is_one():
    # p = x^2 - 1 with sigma_in = (1 -+ x)^2 / 2 certifies w = 1, and w >= max kappa on [-1, 1] = 1
    pps = parse_program(HALVING)
    prop = norm_prop(pps)
    ws = []
    for m in (2, 3):
        res = synthesize(pps, prop, m)
        assert res.status is Status.OPTIMAL
        cert = certificate_from(res.recovered, res.sos)
        assert verify(cert, pps).certified
        ws.append(res.recovered.w)
    assert ws[0] == pytest.approx(1.0, abs=1e-6)
    assert ws[1] <= ws[0] + 1e-6


def test_halving_map_needs_degree_four():
    # at m = 1 the init multipliers are constants, which forces p's x^2 coefficient <= 0
    pps = parse_program(HALVING)
    res = synthesize(pps, norm_prop(pps), 1)
    assert res.status is Status.INFEASIBLE
    assert res.recovered is None


def test_contradiction_is_not_recovered():
    pps = parse_program(HALVING)
    prop = parse_property("1", "inf", pps.variables)
    sos = build_sos_program(pps, prop, 1, w_max=0.0)
    sol = solve(compile_program(sos))
    assert sol.status is Status.INFEASIBLE
    with pytest.raises(RecoveryError):
        recover(sol, sos)


def test_recover_shapes():
    pps = parse_program(HALVING)
    res = synthesize(pps, norm_prop(pps), 2)
    rec = res.recovered
    assert rec.p.degree <= 4
    assert set(rec.grams) == {u.name for u in res.sos.unknowns}
    for g in rec.grams.values():
        assert np.array_equal(g.matrix, g.matrix.T)


def test_coefficient_box_is_inactive_on_toy():
    pps = parse_program(HALVING)
    boxed = synthesize(pps, norm_prop(pps), 2)
    free = synthesize(pps, norm_prop(pps), 2, coef_bound=None)
    assert boxed.recovered.w == pytest.approx(free.recovered.w, abs=1e-6)


def test_completion():
    pps = parse_program(HALVING)
    res = synthesize(pps, norm_prop(pps), 2)
    p, w = res.recovered.p, res.recovered.w
    out = complete_basis(p, w, [p, p + 1] + square_candidates(1, w))
    assert [c.status for c in out] == ["accepted", "rejected", "accepted"]
    assert out[0].gram is not None and out[0].residual <= 1e-6
    assert np.abs(out[0].gram.matrix).max() <= 1e-6
    assert out[2].min_eigenvalue >= -1e-6


def test_square_candidates():
    cands = square_candidates(2, 3.0)
    x1, x2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    assert cands == [x1 ** 2 - 3.0, x2 ** 2 - 3.0]


def test_var_map_indexes_recovered_values():
    pps = parse_program(HALVING)
    res = synthesize(pps, norm_prop(pps), 2)
    vm = res.instance.var_map
    assert res.solution.value(vm, "free", "w") == res.recovered.w
    a = monomial_basis(1, 4).monomials[2]
    assert res.solution.value(vm, "free", ("p", a)) == res.recovered.p.coefficient(a)
    Q = res.recovered.grams["sigma0"].matrix
    assert res.solution.value(vm, "psd", "sigma0", 1, 0) == Q[0, 1]
