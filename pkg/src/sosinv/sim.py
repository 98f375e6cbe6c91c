"""Execution of piecewise polynomial systems and plot data.

Sampling uses numpy's Philox4x64-10 counter-based generator, so a seed
names the same point set on every platform.  Initial points are drawn
up front in trajectory order, which makes a sample with a longer horizon
agree with a shorter one on the common prefix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import PPS, membership, select_cell
from .poly import DimensionError, Polynomial

DIVERGENCE = 1e12  # infinity norm at which a trajectory is abandoned


def step(pps: PPS, x):
    """One transition: ``(next state, zero-based cell index)`` or ``None`` when stopped."""
    x = np.asarray(x, dtype=float)
    if x.shape != (pps.dim,):
        raise DimensionError(f"state of shape {x.shape} for a {pps.dim}-variable program")
    if not membership(pps.x0, x):
        return None
    i = select_cell(pps, x)
    if i is None:
        return None
    return pps.cells[i].update(x), i


@dataclass(frozen=True)
class Trajectory:
    points: np.ndarray  # (length, d)
    stopped_early: bool
    cells_taken: tuple
    diverged: bool = False

    def __len__(self):
        return len(self.points)


def simulate(pps: PPS, x, steps: int) -> Trajectory:
    """Iterate from ``x`` for up to ``steps`` transitions."""
    pts = [np.asarray(x, dtype=float)]
    cells = []
    stopped = diverged = False
    for _ in range(steps):
        nxt = step(pps, pts[-1])
        if nxt is None:
            stopped = True
            break
        y, i = nxt
        pts.append(y)
        cells.append(i)
        if not np.all(np.isfinite(y)) or np.abs(y).max() > DIVERGENCE:
            diverged = True
            break
    return Trajectory(np.array(pts), stopped, tuple(cells), diverged)


def replay(pps: PPS, x, cells_taken) -> np.ndarray:
    """Apply the recorded cell updates in order, without re-selecting cells."""
    pts = [np.asarray(x, dtype=float)]
    for i in cells_taken:
        pts.append(pps.cells[i].update(pts[-1]))
    return np.array(pts)


@dataclass(frozen=True)
class SampledReachSet:
    seed: int
    n_init: int
    horizon: int
    points: np.ndarray  # (n, d)
    traj: np.ndarray  # trajectory id per point
    steps: np.ndarray  # step index per point
    diverged: tuple  # ids of abandoned trajectories

    def __len__(self):
        return len(self.points)


def _box(pps: PPS) -> np.ndarray:
    box = np.array(pps.box, dtype=float)
    if not np.all(np.isfinite(box)):
        raise ValueError("initial set is not a bounded box; only box sampling is supported")
    return box


def sample_reach(pps: PPS, n_init: int, horizon: int, seed: int) -> SampledReachSet:
    """Iterate ``n_init`` uniform points of the initial box ``horizon`` times."""
    if n_init < 1:
        raise ValueError("need at least one initial point")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    box = _box(pps)
    rng = np.random.Generator(np.random.Philox(seed))
    x0 = rng.uniform(box[:, 0], box[:, 1], size=(n_init, pps.dim))
    pts, traj, steps, diverged = [], [], [], []
    for k, x in enumerate(x0):
        t = simulate(pps, x, horizon)
        pts.append(t.points)
        traj.append(np.full(len(t), k))
        steps.append(np.arange(len(t)))
        if t.diverged:
            diverged.append(k)
    return SampledReachSet(seed, n_init, horizon, np.vstack(pts), np.concatenate(traj),
                           np.concatenate(steps), tuple(diverged))


@dataclass(frozen=True)
class Grid:
    """Values ``p(x1[j], x2[i])`` at ``values[i, j]``; ``x2`` ascending."""

    x1: np.ndarray
    x2: np.ndarray
    values: np.ndarray

    def bitmap(self) -> np.ndarray:
        """True where ``p <= 0``, row 0 at the largest ``x2``."""
        return (self.values <= 0.0)[::-1]


def grid_eval(p: Polynomial, box, resolution: int, axes=(0, 1), base=None) -> Grid:
    """Evaluate ``p`` on a ``resolution x resolution`` grid over a 2-D box.

    For ``p.dim > 2`` the grid is a slice through ``base`` along ``axes``.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2 per axis")
    (a1, b1), (a2, b2) = [(float(lo), float(hi)) for lo, hi in box]
    if not all(math.isfinite(v) for v in (a1, b1, a2, b2)):
        raise ValueError("grid box must be finite")
    if p.dim != 2 and base is None:
        raise DimensionError(f"raster output needs a 2-variable polynomial, got {p.dim}; give base for a slice")
    x1 = np.linspace(a1, b1, resolution)
    x2 = np.linspace(a2, b2, resolution)
    X1, X2 = np.meshgrid(x1, x2)
    pts = np.tile(np.zeros(p.dim) if base is None else np.asarray(base, dtype=float), (X1.size, 1))
    pts[:, axes[0]] = X1.ravel()
    pts[:, axes[1]] = X2.ravel()
    return Grid(x1, x2, p.eval_many(pts).reshape(X1.shape))


def _num(v) -> str:
    return repr(float(v))


def write_points_csv(path, reach: SampledReachSet) -> None:
    d = reach.points.shape[1]
    lines = ["traj,step," + ",".join(f"x{k + 1}" for k in range(d))]
    for t, s, x in zip(reach.traj, reach.steps, reach.points):
        lines.append(f"{t},{s}," + ",".join(_num(v) for v in x))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_points_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 2:]


def write_grid_csv(path, grid: Grid) -> None:
    lines = ["x1,x2,value"]
    for i, y in enumerate(grid.x2):
        for j, x in enumerate(grid.x1):
            lines.append(f"{_num(x)},{_num(y)},{_num(grid.values[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_region_pgm(path, grid: Grid) -> None:
    """Binary P5 raster: 0 where ``p <= 0``, 255 elsewhere, top row at max ``x2``."""
    img = np.where(grid.bitmap(), 0, 255).astype(np.uint8)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8)[: w * h].reshape(h, w)
