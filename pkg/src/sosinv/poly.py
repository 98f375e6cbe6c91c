"""Sparse multivariate polynomials over float coefficients.

Monomials are exponent tuples.  Every ordered structure in the package
(bases, coefficient matching rows, rendering) uses the graded
lexicographic order implemented by :func:`monomial_key`: lower total
degree first, then ``x1`` before ``x2`` inside a degree, so the degree-2
block of a bivariate basis reads ``x1^2, x1*x2, x2^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

Monomial = tuple  # tuple[int, ...]


class DimensionError(ValueError):
    """Operands live in different ambient dimensions."""


def monomial_key(alpha: Monomial) -> tuple:
    return (sum(alpha), tuple(-a for a in alpha))


def _compositions(total: int, parts: int):
    # exponent tuples of a fixed total degree, x1-heavy first
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=256)
def _basis_monomials(dim: int, degree: int) -> tuple:
    out = []
    for k in range(degree + 1):
        out.extend(_compositions(k, dim))
    return tuple(out)


def _fmt_num(c: float) -> str:
    if c == int(c) and abs(c) < 1e15:
        return str(int(c))
    return repr(float(c))


class Polynomial:
    """Immutable sparse polynomial ``sum c_alpha x^alpha`` in ``dim`` variables.

    Zero coefficients are never stored.  The zero polynomial has degree 0.
    """

    __slots__ = ("dim", "_terms", "_hash")

    def __init__(self, dim: int, terms: Mapping[Monomial, float] | None = None):
        if dim < 1:
            raise ValueError("polynomial dimension must be >= 1")
        clean = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != dim:
                raise DimensionError(f"monomial {alpha} does not have length {dim}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            c = float(c)
            if c != 0.0:
                clean[alpha] = c
        self.dim = dim
        self._terms = clean
        self._hash = None

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, dim: int) -> "Polynomial":
        return cls(dim)

    @classmethod
    def constant(cls, dim: int, c: float) -> "Polynomial":
        return cls(dim, {(0,) * dim: c})

    @classmethod
    def variable(cls, dim: int, k: int) -> "Polynomial":
        """The coordinate ``x_{k+1}`` (``k`` is zero-based)."""
        alpha = [0] * dim
        alpha[k] = 1
        return cls(dim, {tuple(alpha): 1.0})

    @classmethod
    def monomial(cls, alpha: Sequence[int], c: float = 1.0) -> "Polynomial":
        return cls(len(alpha), {tuple(alpha): c})

    @classmethod
    def _raw(cls, dim, terms):
        # trusted constructor: terms already pruned and well-formed
        obj = cls.__new__(cls)
        obj.dim = dim
        obj._terms = terms
        obj._hash = None
        return obj

    # -- inspection ---------------------------------------------------
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        """(monomial, coefficient) pairs in graded lexicographic order."""
        return sorted(self._terms.items(), key=lambda kv: monomial_key(kv[0]))

    def coefficient(self, alpha: Monomial) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self):
        return len(self._terms)

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # -- arithmetic ---------------------------------------------------
    def _check(self, other: "Polynomial"):
        if self.dim != other.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.dim, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for alpha, c in other._terms.items():
            s = out.get(alpha, 0.0) + c
            if s == 0.0:
                out.pop(alpha, None)
            else:
                out[alpha] = s
        return Polynomial._raw(self.dim, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.dim, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            c0 = float(other)
            if c0 == 0.0:
                return Polynomial.zero(self.dim)
            return Polynomial._raw(
                self.dim, {a: c * c0 for a, c in self._terms.items() if c * c0 != 0.0}
            )
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        out: dict = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                key = tuple(x + y for x, y in zip(a, b))
                out[key] = out.get(key, 0.0) + ca * cb
        return Polynomial._raw(self.dim, {k: v for k, v in out.items() if v != 0.0})

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("only nonnegative integer powers are supported")
        result = Polynomial.constant(self.dim, 1.0)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.dim == other.dim and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.dim, frozenset(self._terms.items())))
        return self._hash

    # -- evaluation ---------------------------------------------------
    def __call__(self, x) -> float:
        return self.eval(x)

    def eval(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionError(f"point of shape {x.shape} for a {self.dim}-variate polynomial")
        total = 0.0
        for alpha, c in self._terms.items():
            term = c
            for xi, a in zip(x, alpha):
                if a:
                    term *= xi ** a
            total += term
        return float(total)

    def eval_many(self, points) -> np.ndarray:
        """Evaluate on an ``(N, dim)`` array of points."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionError(f"expected points of shape (N, {self.dim})")
        if not self._terms:
            return np.zeros(len(pts))
        exps = np.array(list(self._terms.keys()), dtype=int)
        coefs = np.array(list(self._terms.values()))
        vals = np.ones((len(pts), len(exps)))
        for k in range(self.dim):
            col = exps[:, k]
            if col.any():
                vals *= pts[:, k : k + 1] ** col[None, :]
        return vals @ coefs

    def compose(self, T: "PolyMap") -> "Polynomial":
        return compose(self, T)

    # -- rendering ----------------------------------------------------
    def to_str(self, names: Sequence[str] | None = None) -> str:
        """Render as ``c*x1^a1*x2^a2`` terms in graded lexicographic order."""
        names = list(names) if names is not None else [f"x{k + 1}" for k in range(self.dim)]
        if len(names) != self.dim:
            raise DimensionError("wrong number of variable names")
        if not self._terms:
            return "0"
        pieces = []
        for alpha, c in self.items():
            factors = [n if a == 1 else f"{n}^{a}" for n, a in zip(names, alpha) if a]
            mag = abs(c)
            if factors and mag == 1.0:
                body = "*".join(factors)
            else:
                body = "*".join([_fmt_num(mag)] + factors)
            sign = "-" if c < 0 else "+"
            pieces.append((sign, body))
        first_sign, first = pieces[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in pieces[1:]:
            text += f" {sign} {body}"
        return text

    def __str__(self):
        return self.to_str()

    def __repr__(self):
        return f"Polynomial({self.dim}, {self.to_str()!r})"


class PolyMap:
    """A polynomial map ``R^dim_in -> R^len(components)``."""

    __slots__ = ("dim_in", "components")

    def __init__(self, components: Iterable[Polynomial]):
        comps = tuple(components)
        if not comps:
            raise ValueError("a polynomial map needs at least one component")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise DimensionError("map components disagree on the input dimension")
        self.dim_in = dims.pop()
        self.components = comps

    @classmethod
    def identity(cls, dim: int) -> "PolyMap":
        return cls(Polynomial.variable(dim, k) for k in range(dim))

    @property
    def dim_out(self) -> int:
        return len(self.components)

    @property
    def degree(self) -> int:
        return max(c.degree for c in self.components)

    def __call__(self, x) -> np.ndarray:
        return np.array([c.eval(x) for c in self.components])

    def eval_many(self, points) -> np.ndarray:
        return np.column_stack([c.eval_many(points) for c in self.components])

    def __eq__(self, other):
        return isinstance(other, PolyMap) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def __repr__(self):
        return f"PolyMap({[c.to_str() for c in self.components]})"


class _PowerTable:
    """Memoized products ``T_1^a1 ... T_d^ad`` of map components."""

    def __init__(self, T: PolyMap):
        self.T = T
        self._pow = [{0: Polynomial.constant(T.dim_in, 1.0), 1: c} for c in T.components]
        self._mono: dict = {}

    def power(self, k: int, a: int) -> Polynomial:
        table = self._pow[k]
        if a not in table:
            table[a] = self.power(k, a - 1) * self.T.components[k]
        return table[a]

    def monomial(self, alpha: Monomial) -> Polynomial:
        alpha = tuple(alpha)
        hit = self._mono.get(alpha)
        if hit is not None:
            return hit
        nz = [k for k, a in enumerate(alpha) if a]
        if not nz:
            res = Polynomial.constant(self.T.dim_in, 1.0)
        elif len(nz) == 1:
            res = self.power(nz[0], alpha[nz[0]])
        else:
            # peel the last variable so prefixes get reused
            k = nz[-1]
            head = list(alpha)
            head[k] = 0
            res = self.monomial(tuple(head)) * self.power(k, alpha[k])
        self._mono[alpha] = res
        return res


def compose(p: Polynomial, T: PolyMap, table: _PowerTable | None = None) -> Polynomial:
    """``p(T_1(x), ..., T_d(x))``."""
    if T.dim_out != p.dim:
        raise DimensionError(f"cannot compose a {p.dim}-variate polynomial with a map of {T.dim_out} components")
    table = table or _PowerTable(T)
    out = Polynomial.zero(T.dim_in)
    for alpha, c in p.items():
        out = out + c * table.monomial(alpha)
    return out


def composed_monomials(T: PolyMap, monomials: Iterable[Monomial]) -> list:
    """``[b_alpha o T for alpha in monomials]`` sharing one power table."""
    table = _PowerTable(T)
    return [table.monomial(a) for a in monomials]


@dataclass(frozen=True)
class MonomialBasis:
    """All monomials of total degree ``<= half_degree`` in graded lex order."""

    dim: int
    half_degree: int
    monomials: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1 or self.half_degree < 0:
            raise ValueError("monomial basis needs dim >= 1 and half_degree >= 0")
        object.__setattr__(self, "monomials", _basis_monomials(self.dim, self.half_degree))

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __getitem__(self, k):
        return self.monomials[k]

    def exponents(self) -> np.ndarray:
        return np.array(self.monomials, dtype=np.int64).reshape(len(self), self.dim)

    def index(self, alpha: Monomial) -> int:
        return _basis_index(self.dim, self.half_degree)[tuple(alpha)]


@lru_cache(maxsize=256)
def _basis_index(dim, degree):
    return {a: k for k, a in enumerate(_basis_monomials(dim, degree))}


def monomial_basis(d: int, m: int) -> MonomialBasis:
    return MonomialBasis(d, m)


def basis_size(d: int, m: int) -> int:
    return math.comb(d + m, d)


class MonomialIndex:
    """Vectorized lookup from exponent arrays to positions in a monomial list."""

    def __init__(self, monomials: Sequence[Monomial], dim: int, max_degree: int):
        self.dim = dim
        self.radix = max_degree + 1
        self.weights = self.radix ** np.arange(dim, dtype=np.int64)
        exps = np.array(monomials, dtype=np.int64).reshape(len(monomials), dim)
        codes = exps @ self.weights
        self._order = np.argsort(codes, kind="stable")
        self._sorted = codes[self._order]

    def lookup(self, exps: np.ndarray) -> np.ndarray:
        """Row positions for an ``(..., dim)`` exponent array; -1 where absent."""
        exps = np.asarray(exps, dtype=np.int64)
        flat = exps.reshape(-1, self.dim)
        ok = (flat < self.radix).all(axis=1)
        codes = flat @ self.weights
        pos = np.searchsorted(self._sorted, codes)
        pos = np.clip(pos, 0, len(self._sorted) - 1)
        hit = ok & (self._sorted[pos] == codes)
        out = np.where(hit, self._order[pos], -1)
        return out.reshape(exps.shape[:-1])


def gram_operator(basis: MonomialBasis, rows: Sequence[Monomial], factor: Polynomial | None = None,
                  row_index: MonomialIndex | None = None) -> sp.csr_matrix:
    """Sparse matrix of ``Q -> coefficients of factor * b^T Q b`` on ``rows``.

    Columns index the full row-major vectorization of ``Q``; entry
    ``(u, v)`` and ``(v, u)`` each carry the full coefficient, so for a
    symmetric ``Q`` the product equals the polynomial coefficients.
    Monomials outside ``rows`` raise, since they would be silently dropped.
    """
    n = len(basis)
    d = basis.dim
    factor = factor if factor is not None else Polynomial.constant(d, 1.0)
    if factor.dim != d:
        raise DimensionError("factor and basis dimensions differ")
    exps = basis.exponents()
    pair = exps[:, None, :] + exps[None, :, :]  # (n, n, d)
    if row_index is None:
        top = max((sum(r) for r in rows), default=0)
        row_index = MonomialIndex(rows, d, max(top, 2 * basis.half_degree + factor.degree))
    r_idx, c_idx, vals = [], [], []
    cols = np.arange(n * n)
    for gamma, coef in factor.items():
        target = pair + np.array(gamma, dtype=np.int64)
        pos = row_index.lookup(target).ravel()
        if (pos < 0).any():
            raise ValueError("gram expansion reaches a monomial outside the row set")
        r_idx.append(pos)
        c_idx.append(cols)
        vals.append(np.full(n * n, coef))
    if not r_idx:
        return sp.csr_matrix((len(rows), n * n))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))),
        shape=(len(rows), n * n),
    )
    return mat.tocsr()


@dataclass(frozen=True)
class GramTerm:
    """``b(x)^T Q b(x)`` for a monomial basis ``b`` and symmetric ``Q``."""

    basis: MonomialBasis
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        Q = np.array(self.matrix, dtype=float)
        n = len(self.basis)
        if Q.shape != (n, n):
            raise DimensionError(f"Gram matrix of shape {Q.shape} for a basis of size {n}")
        Q = (Q + Q.T) / 2.0  # exactly symmetric: float addition commutes
        Q.setflags(write=False)
        object.__setattr__(self, "matrix", Q)

    def min_eigenvalue(self) -> float:
        if len(self.basis) == 0:
            return 0.0
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def expand(self) -> Polynomial:
        return expand_gram(self)


def expand_gram(g: GramTerm) -> Polynomial:
    basis = g.basis
    exps = basis.exponents()
    n = len(basis)
    if n == 0:
        return Polynomial.zero(basis.dim)
    top = 2 * basis.half_degree
    radix = top + 1
    weights = radix ** np.arange(basis.dim, dtype=np.int64)
    codes = (exps[:, None, :] + exps[None, :, :]).reshape(-1, basis.dim) @ weights
    uniq, inv = np.unique(codes, return_inverse=True)
    sums = np.zeros(len(uniq))
    np.add.at(sums, inv, np.asarray(g.matrix).ravel())
    terms = {}
    for code, val in zip(uniq, sums):
        if val != 0.0:
            alpha = []
            code = int(code)
            for _ in range(basis.dim):
                alpha.append(code % radix)
                code //= radix
            terms[tuple(alpha)] = val
    return Polynomial._raw(basis.dim, terms)


def add(p: Polynomial, q: Polynomial) -> Polynomial:
    return p + q


def mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def eval_poly(p: Polynomial, x) -> float:
    return p.eval(x)
