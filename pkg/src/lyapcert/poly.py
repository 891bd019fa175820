"""Exact sparse multivariate polynomials and symmetric multilinear forms.

A polynomial is a map from exponent tuples to rational coefficients
(fractions.Fraction), so arithmetic, differentiation and tensor
symmetrization are exact; floats enter only at solver and sampler
boundaries.  A homogeneous polynomial of degree d has an equivalent
symmetric order-d tensor whose diagonal restriction reproduces it; its
evaluations on tuples of simplex vertices are what turn copositivity into
finitely many linear constraints.

Monomial order is graded lexicographic (total degree ascending, exponent
tuple descending within a degree) and is used everywhere a coefficient
vector is laid out, so layouts are reproducible across runs.

The text grammar "2.9*x1^2 + 1*x1*x2 + 1*x2^2" (coefficients decimal or
"p/q", variables x1..xn) is the canonical exchange format for the CLI and
certificate files; see parse_polynomial / format_polynomial.
"""

from __future__ import annotations

import re
from fractions import Fraction
from math import factorial, prod
from typing import Iterator, Mapping, Sequence

import numpy as np

Mono = tuple[int, ...]
Scalar = int | float | Fraction


def grlex_key(mono: Mono) -> tuple:
    """Sort key for the global graded-lexicographic monomial order."""
    return (sum(mono), tuple(-e for e in mono))


def monomials_of_degree(dimension: int, degree: int) -> list[Mono]:
    """All exponent tuples of total degree `degree`, in graded-lex order."""
    out: list[Mono] = []

    def rec(idx: int, remaining: int, cur: list[int]) -> None:
        if idx == dimension - 1:
            out.append(tuple(cur + [remaining]))
            return
        for e in range(remaining, -1, -1):
            rec(idx + 1, remaining - e, cur + [e])

    if dimension == 0:
        return [()] if degree == 0 else []
    rec(0, degree, [])
    out.sort(key=grlex_key)
    return out


def monomials_up_to_degree(dimension: int, degree: int,
                           include_constant: bool = True) -> list[Mono]:
    """All exponent tuples of total degree <= `degree`, graded-lex order."""
    out: list[Mono] = []
    for d in range(0 if include_constant else 1, degree + 1):
        out.extend(monomials_of_degree(dimension, d))
    return out


def _as_fraction(value: Scalar) -> Fraction:
    if isinstance(value, Fraction):
        return value
    return Fraction(value)


class Polynomial:
    """Sparse multivariate polynomial with exact rational coefficients.

    Immutable by convention: no method mutates self, arithmetic returns new
    instances, values are safe to share between threads.
    """

    __slots__ = ("dimension", "terms", "_exps", "_coefs", "_pyterms")

    def __init__(self, dimension: int,
                 terms: Mapping[Mono, Scalar] | None = None):
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension
        clean: dict[Mono, Fraction] = {}
        for mono, coeff in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != dimension:
                raise ValueError(
                    f"monomial {mono} has length {len(mono)}, expected {dimension}")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in monomial {mono}")
            c = _as_fraction(coeff)
            if c != 0:
                acc = clean.get(mono)
                clean[mono] = c if acc is None else acc + c
        self.terms = {m: c for m, c in clean.items() if c != 0}
        self._exps = None
        self._coefs = None
        self._pyterms = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, dimension: int) -> Polynomial:
        return cls(dimension, {})

    @classmethod
    def constant(cls, dimension: int, value: Scalar) -> Polynomial:
        return cls(dimension, {(0,) * dimension: value})

    @classmethod
    def variable(cls, dimension: int, index: int) -> Polynomial:
        """The polynomial x_{index} (0-based index)."""
        if not 0 <= index < dimension:
            raise ValueError(f"variable index {index} out of range")
        exps = [0] * dimension
        exps[index] = 1
        return cls(dimension, {tuple(exps): 1})

    @classmethod
    def monomial(cls, mono: Mono, coeff: Scalar = 1) -> Polynomial:
        return cls(len(mono), {tuple(mono): coeff})

    # -- ring operations ----------------------------------------------------

    def _check_dim(self, other: Polynomial) -> None:
        if self.dimension != other.dimension:
            raise ValueError(
                f"dimension mismatch: {self.dimension} vs {other.dimension}")

    def __add__(self, other: Polynomial | Scalar) -> Polynomial:
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.dimension, other)
        self._check_dim(other)
        out = dict(self.terms)
        for mono, coeff in other.terms.items():
            out[mono] = out.get(mono, Fraction(0)) + coeff
        return Polynomial(self.dimension, out)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial(self.dimension, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other: Polynomial | Scalar) -> Polynomial:
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.dimension, other)
        return self + (-other)

    def __rsub__(self, other: Scalar) -> Polynomial:
        return Polynomial.constant(self.dimension, other) - self

    def scale(self, factor: Scalar) -> Polynomial:
        f = _as_fraction(factor)
        return Polynomial(self.dimension, {m: c * f for m, c in self.terms.items()})

    def __mul__(self, other: Polynomial | Scalar) -> Polynomial:
        if not isinstance(other, Polynomial):
            return self.scale(other)
        self._check_dim(other)
        out: dict[Mono, Fraction] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                mono = tuple(a + b for a, b in zip(ma, mb))
                out[mono] = out.get(mono, Fraction(0)) + ca * cb
        return Polynomial(self.dimension, out)

    def __rmul__(self, other: Scalar) -> Polynomial:
        return self.scale(other)

    def __pow__(self, exponent: int) -> Polynomial:
        if exponent < 0:
            raise ValueError("negative power of a polynomial")
        acc = Polynomial.constant(self.dimension, 1)
        for _ in range(exponent):
            acc = acc * self
        return acc

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.dimension == other.dimension and self.terms == other.terms

    def __hash__(self):
        return hash((self.dimension, frozenset(self.terms.items())))

    # -- structure ----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; 0 for the zero polynomial."""
        return max((sum(m) for m in self.terms), default=0)

    def is_homogeneous(self) -> int | None:
        """Common degree of all terms, or None if degrees are mixed.

        The zero polynomial reports degree 0 (it is homogeneous of every
        degree; 0 avoids an error path in hierarchy loops).
        """
        degrees = {sum(m) for m in self.terms}
        if not degrees:
            return 0
        if len(degrees) == 1:
            return degrees.pop()
        return None

    def coefficient(self, mono: Mono) -> Fraction:
        return self.terms.get(tuple(mono), Fraction(0))

    def coefficient_vector(self, basis: Sequence[Mono]) -> np.ndarray:
        """Float coefficients laid out along `basis` (solver boundary)."""
        return np.array([float(self.terms.get(m, Fraction(0))) for m in basis])

    def sorted_terms(self) -> list[tuple[Mono, Fraction]]:
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))

    # -- calculus and evaluation --------------------------------------------

    def gradient(self) -> tuple[Polynomial, ...]:
        """Partial derivatives (d/dx_1 p, ..., d/dx_n p)."""
        comps = []
        for i in range(self.dimension):
            terms: dict[Mono, Fraction] = {}
            for mono, coeff in self.terms.items():
                if mono[i] == 0:
                    continue
                dm = list(mono)
                dm[i] -= 1
                terms[tuple(dm)] = coeff * mono[i]
            comps.append(Polynomial(self.dimension, terms))
        return tuple(comps)

    def evaluate(self, point: Sequence[Scalar]) -> Scalar:
        """Evaluate at a point; exact when the point is exact."""
        if len(point) != self.dimension:
            raise ValueError("point dimension mismatch")
        total: Scalar = 0
        for mono, coeff in self.terms.items():
            total += coeff * prod(
                x ** e for x, e in zip(point, mono) if e)
        return total

    def evaluate_float(self, point) -> float:
        """Float evaluation at one point; the fast path for inner loops."""
        if self._pyterms is None:
            self._pyterms = [(m, float(c)) for m, c in self.sorted_terms()]
        total = 0.0
        for mono, coeff in self._pyterms:
            v = coeff
            for x, e in zip(point, mono):
                if e:
                    v *= x ** e
            total += v
        return total

    def _numeric_cache(self) -> tuple[np.ndarray, np.ndarray]:
        if self._exps is None:
            items = self.sorted_terms()
            self._exps = np.array([m for m, _ in items], dtype=np.int64).reshape(
                len(items), self.dimension)
            self._coefs = np.array([float(c) for _, c in items])
        return self._exps, self._coefs

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized float evaluation on an (m, n) array of points."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(1, -1)
        if not self.terms:
            return np.zeros(points.shape[0])
        exps, coefs = self._numeric_cache()
        powers = points[:, None, :] ** exps[None, :, :]
        return powers.prod(axis=2) @ coefs

    # -- tensor representation ----------------------------------------------

    def to_tensor(self) -> SymmetricTensor:
        """Symmetric order-d tensor whose diagonal reproduces self.

        Requires a homogeneous polynomial of degree >= 1; each coefficient
        is divided by the number of distinct index permutations, which keeps
        the diagonal identity exact.
        """
        d = self.is_homogeneous()
        if d is None:
            raise ValueError("tensor representation needs a homogeneous polynomial")
        if d < 1:
            raise ValueError("tensor representation needs degree >= 1")
        entries: dict[Mono, Fraction] = {}
        for mono, coeff in self.terms.items():
            idx = _mono_to_indices(mono)
            entries[idx] = coeff / _permutation_count(idx)
        return SymmetricTensor(d, self.dimension, entries)

    # -- formatting ----------------------------------------------------------

    def __str__(self) -> str:
        return format_polynomial(self)

    def __repr__(self) -> str:
        return f"Polynomial({self.dimension}, {format_polynomial(self)!r})"


def _mono_to_indices(mono: Mono) -> Mono:
    """Exponent tuple -> sorted variable-index tuple, e.g. (2,1) -> (0,0,1)."""
    idx: list[int] = []
    for var, e in enumerate(mono):
        idx.extend([var] * e)
    return tuple(idx)


def _indices_to_mono(idx: Mono, dimension: int) -> Mono:
    exps = [0] * dimension
    for i in idx:
        exps[i] += 1
    return tuple(exps)


def _permutation_count(idx: Mono) -> int:
    """Number of distinct permutations of a sorted index tuple."""
    counts: dict[int, int] = {}
    for i in idx:
        counts[i] = counts.get(i, 0) + 1
    total = factorial(len(idx))
    for c in counts.values():
        total //= factorial(c)
    return total


def distinct_permutations(items: Mono) -> Iterator[Mono]:
    """All distinct permutations of a (sorted) tuple, lexicographic order."""
    pool = sorted(items)
    n = len(pool)
    if n == 0:
        yield ()
        return
    cur = list(pool)
    while True:
        yield tuple(cur)
        # next_permutation
        i = n - 2
        while i >= 0 and cur[i] >= cur[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while cur[j] <= cur[i]:
            j -= 1
        cur[i], cur[j] = cur[j], cur[i]
        cur[i + 1:] = reversed(cur[i + 1:])


class SymmetricTensor:
    """Symmetric multilinear form of fixed order and dimension.

    Symmetry is structural: only sorted index tuples are stored, and every
    unsorted index tuple refers to its sorted representative.
    """

    __slots__ = ("order", "dimension", "entries")

    def __init__(self, order: int, dimension: int,
                 entries: Mapping[Mono, Scalar]):
        if order < 1 or dimension < 1:
            raise ValueError("order and dimension must be positive")
        self.order = order
        self.dimension = dimension
        clean: dict[Mono, Fraction] = {}
        for idx, value in entries.items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != order:
                raise ValueError(f"index tuple {idx} has wrong arity")
            if tuple(sorted(idx)) != idx:
                raise ValueError(f"index tuple {idx} is not sorted")
            if not all(0 <= i < dimension for i in idx):
                raise ValueError(f"index out of range in {idx}")
            v = _as_fraction(value)
            if v != 0:
                clean[idx] = v
        self.entries = clean

    def value(self, idx: Mono) -> Fraction:
        """Entry for an arbitrary (possibly unsorted) index tuple."""
        return self.entries.get(tuple(sorted(idx)), Fraction(0))

    def eval(self, points: Sequence[Sequence[Scalar]]) -> Scalar:
        """Multilinear value H[x^1, ..., x^d]; exact on exact inputs."""
        if len(points) != self.order:
            raise ValueError(
                f"expected {self.order} argument vectors, got {len(points)}")
        for p in points:
            if len(p) != self.dimension:
                raise ValueError("argument vector dimension mismatch")
        total: Scalar = 0
        for idx, value in self.entries.items():
            s: Scalar = 0
            for perm in distinct_permutations(idx):
                s += prod(points[k][perm[k]] for k in range(self.order))
            total += value * s
        return total

    def diagonal_polynomial(self) -> Polynomial:
        """The homogeneous polynomial x -> H[x, ..., x]."""
        terms: dict[Mono, Fraction] = {}
        for idx, value in self.entries.items():
            mono = _indices_to_mono(idx, self.dimension)
            terms[mono] = terms.get(mono, Fraction(0)) + value * _permutation_count(idx)
        return Polynomial(self.dimension, terms)

    def __repr__(self) -> str:
        return (f"SymmetricTensor(order={self.order}, dimension={self.dimension}, "
                f"{len(self.entries)} entries)")


def coefficient_row(basis: Sequence[Mono],
                    points: Sequence[Sequence[float]]) -> np.ndarray:
    """Row c with tensor_eval(sum_i c_i m_i, points) = c . coefficients.

    For each basis monomial, the value of its symmetrized tensor on the
    given point tuple; used to assemble one LP constraint row per vertex
    tuple with the polynomial coefficients left symbolic.
    """
    if not basis:
        return np.zeros(0)
    order = sum(basis[0])
    if len(points) != order:
        raise ValueError(f"expected {order} points, got {len(points)}")
    pts = [np.asarray(p, dtype=float) for p in points]
    row = np.zeros(len(basis))
    for col, mono in enumerate(basis):
        if sum(mono) != order:
            raise ValueError("basis monomials must share one degree")
        idx = _mono_to_indices(mono)
        s = 0.0
        for perm in distinct_permutations(idx):
            term = 1.0
            for k in range(order):
                term *= pts[k][perm[k]]
            s += term
        row[col] = s / _permutation_count(idx)
    return row


def norm_squared(dimension: int) -> Polynomial:
    """The polynomial x_1^2 + ... + x_n^2."""
    terms = {}
    for i in range(dimension):
        exps = [0] * dimension
        exps[i] = 2
        terms[tuple(exps)] = 1
    return Polynomial(dimension, terms)


# -- text grammar -------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<sign>[+-])"
    r"|(?P<times>\*)"
    r"|(?P<power>\^)"
    r"|(?P<rational>\d+/\d+)"
    r"|(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x\d+))")


class PolynomialParseError(ValueError):
    """Raised on malformed polynomial text; carries the column offset."""

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


def parse_polynomial(text: str, dimension: int) -> Polynomial:
    """Parse the canonical grammar into an exact polynomial.

    Decimal coefficients are read as exact decimal fractions, "p/q" as
    exact rationals; variables are x1..xn with 1-based indices.
    """
    tokens: list[tuple[str, str, int]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise PolynomialParseError(
                f"unexpected character {text[pos:].strip()[0]!r}", pos + 1)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()

    if not tokens:
        raise PolynomialParseError("empty polynomial", 1)
    if len(tokens) == 1 and tokens[0][0] == "number" and tokens[0][1] == "0":
        return Polynomial.zero(dimension)

    terms: dict[Mono, Fraction] = {}
    i = 0

    def parse_term(start: int) -> int:
        nonlocal terms
        i = start
        coeff = Fraction(1)
        exps = [0] * dimension
        saw_factor = False
        while i < len(tokens):
            kind, value, col = tokens[i]
            if kind == "sign":
                break
            if kind == "times":
                if not saw_factor:
                    raise PolynomialParseError("'*' without preceding factor", col)
                i += 1
                continue
            if kind == "rational":
                p, q = value.split("/")
                coeff *= Fraction(int(p), int(q))
            elif kind == "number":
                coeff *= Fraction(value)
            elif kind == "var":
                var = int(value[1:])
                if not 1 <= var <= dimension:
                    raise PolynomialParseError(
                        f"variable {value} outside dimension {dimension}", col)
                e = 1
                if i + 1 < len(tokens) and tokens[i + 1][0] == "power":
                    if i + 2 >= len(tokens) or tokens[i + 2][0] != "number":
                        raise PolynomialParseError("'^' needs an integer exponent",
                                                   tokens[i + 1][2])
                    etext = tokens[i + 2][1]
                    if not etext.isdigit():
                        raise PolynomialParseError("exponent must be an integer",
                                                   tokens[i + 2][2])
                    e = int(etext)
                    i += 2
                exps[var - 1] += e
            else:
                raise PolynomialParseError(f"unexpected token {value!r}", col)
            saw_factor = True
            i += 1
        if not saw_factor:
            col = tokens[start][2] if start < len(tokens) else len(text)
            raise PolynomialParseError("empty term", col)
        mono = tuple(exps)
        terms[mono] = terms.get(mono, Fraction(0)) + coeff
        return i

    sign = Fraction(1)
    if tokens[0][0] == "sign":
        sign = Fraction(-1) if tokens[0][1] == "-" else Fraction(1)
        i = 1
    while True:
        before = dict(terms)
        i = parse_term(i)
        # apply pending sign to the term just parsed
        for mono in set(terms) | set(before):
            delta = terms.get(mono, Fraction(0)) - before.get(mono, Fraction(0))
            if delta:
                terms[mono] = before.get(mono, Fraction(0)) + sign * delta
        if i >= len(tokens):
            break
        kind, value, col = tokens[i]
        if kind != "sign":
            raise PolynomialParseError(f"expected '+' or '-', got {value!r}", col)
        sign = Fraction(-1) if value == "-" else Fraction(1)
        i += 1
        if i >= len(tokens):
            raise PolynomialParseError("dangling sign at end of input", col)
    return Polynomial(dimension, terms)


def format_coefficient(value: Fraction) -> str:
    """Canonical coefficient text: integer, small p/q, or repr decimal."""
    if value.denominator == 1:
        return str(value.numerator)
    if value.denominator <= 10_000:
        return f"{value.numerator}/{value.denominator}"
    return repr(float(value))


def format_polynomial(p: Polynomial) -> str:
    """Canonical text form, graded-lex term order, explicit coefficients."""
    items = p.sorted_terms()
    if not items:
        return "0"
    parts: list[str] = []
    for pos, (mono, coeff) in enumerate(items):
        mag = coeff if coeff > 0 else -coeff
        factors = [format_coefficient(mag)]
        for var, e in enumerate(mono):
            if e == 1:
                factors.append(f"x{var + 1}")
            elif e > 1:
                factors.append(f"x{var + 1}^{e}")
        term = "*".join(factors)
        if pos == 0:
            parts.append(term if coeff > 0 else f"-{term}")
        else:
            parts.append(f"+ {term}" if coeff > 0 else f"- {term}")
    return " ".join(parts)
