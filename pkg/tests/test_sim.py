import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosinv.benchmarks import load_program
from sosinv.model import parse_program
from sosinv.poly import DimensionError, Polynomial
from sosinv.sim import (
    DIVERGENCE,
    grid_eval,
    read_pgm,
    read_points_csv,
    replay,
    sample_reach,
    simulate,
    step,
    write_grid_csv,
    write_points_csv,
    write_region_pgm,
)

X1 = Polynomial.variable(2, 0)
X2 = Polynomial.variable(2, 1)


def test_step_running_example(running):
    nxt, cell = step(running, [0.9, 0.0])
    assert cell == 0
    np.testing.assert_allclose(nxt, [0.81, 0.729], atol=1e-15)


def test_step_stopped_outside_loop_condition():
    pps = parse_program("x1, x2 in [0, 1] x [0, 1]; while (x1^2 + x2^2 <= 1) { case (true): x1 = x1; }")
    assert step(pps, [2.0, 0.0]) is None
    t = simulate(pps, [2.0, 0.0], 5)
    assert t.stopped_early and len(t) == 1


def test_step_identity_fixed_point():
    pps = parse_program("a, b in [0, 1] x [0, 1]; while (true) { case (true): a = a; }")
    nxt, _ = step(pps, [0.3, 0.7])
    np.testing.assert_array_equal(nxt, [0.3, 0.7])


def test_step_dimension(running):
    with pytest.raises(DimensionError):
        step(running, [1.0])


def test_stopped_when_no_guard_matches():
    pps = parse_program("x in [0, 1]; while (true) { case (x <= 0): x = x; }")
    assert simulate(pps, [0.5], 3).stopped_early


def test_divergence_guard():
    pps = parse_program("x in [2, 3]; while (true) { case (true): x = x^2; }")
    t = simulate(pps, [2.0], 20)
    assert t.diverged and not t.stopped_early
    assert np.abs(t.points[-1]).max() > DIVERGENCE
    reach = sample_reach(pps, 3, 20, seed=1)
    assert reach.diverged == (0, 1, 2)


@settings(max_examples=25)
@given(st.floats(0.9, 1.1), st.floats(0.0, 0.2), st.integers(0, 6))
def test_replay_reproduces(running, a, b, k):
    t = simulate(running, [a, b], k)
    assert len(t) >= 1 and len(t.cells_taken) == len(t) - 1
    np.testing.assert_array_equal(replay(running, [a, b], t.cells_taken), t.points)


def test_fig2_setup(running):
    reach = sample_reach(running, 100, 6, seed=2024)
    assert len(reach) == 700
    assert np.all(np.isfinite(reach.points))
    assert len(reach) <= reach.n_init * (reach.horizon + 1)


def test_single_initial_point(running):
    reach = sample_reach(running, 1, 0, seed=5)
    assert reach.points.shape == (1, 2)
    lo, hi = np.array(running.box).T
    assert np.all(lo <= reach.points[0]) and np.all(reach.points[0] <= hi)


def test_seed_determinism(running):
    a, b = sample_reach(running, 20, 4, seed=9), sample_reach(running, 20, 4, seed=9)
    assert a.points.tobytes() == b.points.tobytes()
    c = sample_reach(running, 20, 4, seed=10)
    assert not np.array_equal(a.points, c.points)


@settings(max_examples=10)
@given(st.integers(0, 2 ** 32), st.integers(0, 4), st.integers(1, 3))
def test_horizon_prefix_invariance(running, seed, k, extra):
    short = sample_reach(running, 10, k, seed)
    long = sample_reach(running, 10, k + extra, seed)
    keep = long.steps <= k
    np.testing.assert_array_equal(long.points[keep], short.points)


def test_sampling_rejects_bad_input(running):
    with pytest.raises(ValueError):
        sample_reach(running, 0, 6, seed=1)
    with pytest.raises(ValueError):
        sample_reach(running, 1, -1, seed=1)


def test_grid_unit_circle():
    g = grid_eval(X1 ** 2 + X2 ** 2 - 1, [(-2, 2), (-2, 2)], 5)
    assert g.values[2, 2] == -1.0
    assert g.values[0, 0] == g.values[0, 4] == g.values[4, 0] == g.values[4, 4] == 7.0


def test_grid_constant_negative():
    g = grid_eval(Polynomial.constant(2, -1.0), [(0, 1), (0, 1)], 3)
    assert g.bitmap().all()


def test_grid_errors():
    with pytest.raises(ValueError):
        grid_eval(X1, [(0, 1), (0, 1)], 1)
    with pytest.raises(DimensionError):
        grid_eval(Polynomial.variable(3, 0), [(0, 1), (0, 1)], 3)
    with pytest.raises(ValueError):
        grid_eval(X1, [(0, np.inf), (0, 1)], 3)


def test_grid_slice_higher_dimension():
    p = Polynomial.variable(3, 2) + Polynomial.variable(3, 0)
    g = grid_eval(p, [(0, 1), (0, 1)], 2, axes=(0, 1), base=[0, 0, 5])
    assert g.values[0, 0] == 5.0 and g.values[0, 1] == 6.0


def test_bitmap_orientation():
    g = grid_eval(X2, [(0, 1), (-1, 1)], 3)  # p <= 0 in the lower half
    bm = g.bitmap()
    assert not bm[0].any() and bm[-1].all()


def test_output_files(tmp_path, running):
    reach = sample_reach(running, 5, 2, seed=3)
    write_points_csv(tmp_path / "points.csv", reach)
    lines = (tmp_path / "points.csv").read_text().splitlines()
    assert lines[0] == "traj,step,x1,x2" and len(lines) == len(reach) + 1
    np.testing.assert_array_equal(read_points_csv(tmp_path / "points.csv"), reach.points)

    g = grid_eval(X1 ** 2 + X2 ** 2 - 1, [(-2, 2), (-2, 2)], 4)
    write_grid_csv(tmp_path / "grid.csv", g)
    assert (tmp_path / "grid.csv").read_text().splitlines()[0] == "x1,x2,value"
    write_region_pgm(tmp_path / "r.pgm", g)
    img = read_pgm(tmp_path / "r.pgm")
    assert img.shape == (4, 4)
    np.testing.assert_array_equal(img == 0, g.bitmap())


def test_non_box_initial_set_rejected():
    pps = load_program("running")
    bad = type(pps).__new__(type(pps))
    bad.__dict__.update(pps.__dict__)
    object.__setattr__(bad, "box", ((0.0, np.inf), (0.0, 1.0)))
    with pytest.raises(ValueError, match="box"):
        sample_reach(bad, 1, 1, seed=0)
