"""Linear SDP instances with PSD blocks, nonnegative scalars and free scalars.

The primal problem is::

    minimize    c_free . y + sum_k <C_k, X_k> + c_lin . s
    subject to  A_free y + sum_k A_k(X_k) + A_lin s = b
                X_k PSD,  s >= 0,  y free

Each ``A_k`` is stored as a sparse ``(m, n_k * n_k)`` matrix acting on the
row-major vectorization of ``X_k``; row ``i`` reshaped to ``n_k x n_k``
must be symmetric.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"
    ITERATION_LIMIT = "iteration_limit"

    @property
    def has_point(self) -> bool:
        return self in (Status.OPTIMAL, Status.FEASIBLE)


@dataclass(frozen=True)
class BlockLabel:
    """Name of a PSD block plus an optional payload (e.g. its monomial basis)."""

    name: str
    size: int
    payload: Any = field(default=None, compare=False, repr=False)


class VarMap:
    """Bijection between flat decision indices and named entries.

    Decision entries are enumerated as: free scalars, then the upper
    triangle (row-major, ``i <= j``) of each PSD block, then nonnegative
    scalars.
    """

    def __init__(self, free_names: Sequence, blocks: Sequence[BlockLabel], lin_names: Sequence):
        self.free_names = tuple(free_names)
        self.blocks = tuple(blocks)
        self.lin_names = tuple(lin_names)
        self._entries = []
        self._index = {}
        for name in self.free_names:
            self._add(("free", name, 0, 0))
        for blk in self.blocks:
            for i in range(blk.size):
                for j in range(i, blk.size):
                    self._add(("psd", blk.name, i, j))
        for name in self.lin_names:
            self._add(("lin", name, 0, 0))
        self._block_pos = {b.name: k for k, b in enumerate(self.blocks)}
        self._free_pos = {n: k for k, n in enumerate(self.free_names)}

    def _add(self, key):
        if key in self._index:
            raise ValueError(f"duplicate decision entry {key}")
        self._index[key] = len(self._entries)
        self._entries.append(key)

    def __len__(self):
        return len(self._entries)

    def entry(self, k: int) -> tuple:
        return self._entries[k]

    def index_of(self, kind: str, name, i: int = 0, j: int = 0) -> int:
        if kind == "psd" and i > j:
            i, j = j, i
        return self._index[(kind, name, i, j)]

    def block_position(self, name: str) -> int:
        return self._block_pos[name]

    def free_position(self, name) -> int:
        return self._free_pos[name]


@dataclass
class SDPInstance:
    b: np.ndarray
    A_free: sp.csr_matrix
    c_free: np.ndarray
    A_psd: list
    C_psd: list
    A_lin: sp.csr_matrix
    c_lin: np.ndarray
    var_map: VarMap | None = None
    row_labels: list | None = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        m = len(self.b)
        self.A_free = sp.csr_matrix(self.A_free, dtype=float)
        self.A_lin = sp.csr_matrix(self.A_lin, dtype=float)
        self.c_free = np.asarray(self.c_free, dtype=float)
        self.c_lin = np.asarray(self.c_lin, dtype=float)
        self.A_psd = [sp.csr_matrix(A, dtype=float) for A in self.A_psd]
        sizes = []
        for A in self.A_psd:
            n = int(round(np.sqrt(A.shape[1])))
            if n * n != A.shape[1]:
                raise ValueError("PSD block operator width is not a perfect square")
            sizes.append(n)
        self.C_psd = [np.zeros((n, n)) if C is None else np.asarray(C, dtype=float)
                      for C, n in zip(self.C_psd, sizes)]
        if self.A_free.shape != (m, len(self.c_free)):
            raise ValueError("A_free shape does not match b and c_free")
        if self.A_lin.shape != (m, len(self.c_lin)):
            raise ValueError("A_lin shape does not match b and c_lin")
        for A in self.A_psd:
            if A.shape[0] != m:
                raise ValueError("PSD block operator row count does not match b")
        if self.var_map is not None:
            vm = self.var_map
            if (len(vm.free_names) != self.n_free or len(vm.lin_names) != self.n_lin
                    or [b.size for b in vm.blocks] != sizes):
                raise ValueError("var_map does not describe this instance")

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def n_free(self) -> int:
        return len(self.c_free)

    @property
    def n_lin(self) -> int:
        return len(self.c_lin)

    @property
    def block_sizes(self) -> list:
        return [C.shape[0] for C in self.C_psd]

    @property
    def n_scalar_entries(self) -> int:
        """Number of scalar decision entries (upper-triangular Gram entries included)."""
        return self.n_free + self.n_lin + sum(n * (n + 1) // 2 for n in self.block_sizes)

    def check_symmetric(self, tol: float = 0.0) -> bool:
        for A, n in zip(self.A_psd, self.block_sizes):
            for i in range(A.shape[0]):
                row = A.getrow(i).toarray().reshape(n, n)
                if np.abs(row - row.T).max(initial=0.0) > tol:
                    return False
        return True

    def apply(self, y, Xs, s) -> np.ndarray:
        out = self.A_free @ np.asarray(y, dtype=float) + self.A_lin @ np.asarray(s, dtype=float)
        for A, X in zip(self.A_psd, Xs):
            out = out + A @ np.asarray(X, dtype=float).ravel()
        return out

    def objective(self, y, Xs, s) -> float:
        val = float(self.c_free @ y) + float(self.c_lin @ s)
        for C, X in zip(self.C_psd, Xs):
            val += float(np.sum(C * X))
        return val


@dataclass
class SDPSolution:
    status: Status
    y: np.ndarray | None = None
    X: list | None = None
    s: np.ndarray | None = None
    lam: np.ndarray | None = None
    Z: list | None = None
    z: np.ndarray | None = None
    objective: float | None = None
    dual_objective: float | None = None
    primal_residual: float | None = None
    dual_residual: float | None = None
    gap: float | None = None
    iterations: int = 0
    wall_time: float = 0.0
    message: str = ""

    def value(self, var_map: VarMap, kind: str, name, i: int = 0, j: int = 0) -> float:
        if kind == "free":
            return float(self.y[var_map.free_position(name)])
        if kind == "psd":
            return float(self.X[var_map.block_position(name)][i, j])
        raise KeyError(kind)
