"""Sum-of-squares Lyapunov certificates on compact semialgebraic sets.

Three families of identities over the quadratic module of the constraint
set are stacked into one feasibility problem in the coefficients of V,
the Gram matrices of the multipliers, and a free polynomial per face:

  (i)    V - eps_pd |x|^2             = sigma_0 + sum_i sigma_i g_i
  (ii)   -<grad V, f> - margin(x)     = chi_0   + sum_i chi_i g_i
  (iii)  -<grad V, grad g_j>          = chi_j0  + sum_{i != j} chi_ji g_i
                                        + phi_j g_j          (one per j)

Every multiplier except phi_j must be a sum of squares; coefficient
matching per monomial gives the linear equalities.  The SDP tier shifts
every Gram by a common margin t (G - t I psd) and maximizes t; the DSOS
tier replaces positive semidefiniteness by diagonal dominance, which is an
LP and a strictly smaller but cheaper certificate class.  A certificate is
accepted only after substituting the Grams back and re-deriving every
identity within tolerance; a failed recheck is an error, never a silent
acceptance.

With the default zero decrease margin the certificate is flagged "weak
decrease" and strict negativity off the origin must be confirmed by the
sampling oracle; fixed-power margins are available but can be infeasible
for sets touching the origin with a cusp.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import linprog
from .poly import (Mono, Polynomial, monomials_of_degree,
                   monomials_up_to_degree, norm_squared)
from .sdpsolve import EqualityRow, SdpResult, SemidefiniteProgram, solve_sdp
from .tangency import SemialgebraicSet

logger = logging.getLogger(__name__)

ACCEPT_SHIFT = -1e-8
RESIDUAL_TOL = 1e-6
GRAM_EIG_TOL = 1e-7
TRACE_PENALTY = 1e-6


class SosSetupError(ValueError):
    pass


class DegreeScheduleError(SosSetupError):
    pass


class CertificateUnsoundError(RuntimeError):
    """Substitution recheck failed; the solver answer cannot be trusted."""


@dataclass
class SemialgebraicSystem:
    """Polynomial field on a compact semialgebraic set containing 0."""

    f: list[Polynomial]
    S: SemialgebraicSet

    def __post_init__(self):
        n = self.S.dimension
        if len(self.f) != n:
            raise SosSetupError("vector field arity must match the dimension")
        origin = (0,) * n
        for i, comp in enumerate(self.f):
            if comp.dimension != n:
                raise SosSetupError(f"component {i + 1} has wrong dimension")
            if comp.evaluate(origin) != 0:
                raise SosSetupError(f"component {i + 1} gives f(0) != 0")

    @property
    def dimension(self) -> int:
        return self.S.dimension

    def field_at(self, x) -> np.ndarray:
        return np.array([c.evaluate_float(x) for c in self.f])


# -- Gram parameterization -----------------------------------------------------


@dataclass
class GramBlock:
    """Symbolic Gram over a monomial basis: the polynomial is basis' G basis."""

    name: str
    basis: list[Mono]
    pairs_by_monomial: dict[Mono, list[tuple[int, int]]] = field(
        default_factory=dict)

    def __post_init__(self):
        if not self.basis:
            raise SosSetupError(f"gram block {self.name} has an empty basis")
        if not self.pairs_by_monomial:
            for i in range(len(self.basis)):
                for j in range(i, len(self.basis)):
                    mono = tuple(a + b for a, b in zip(self.basis[i],
                                                       self.basis[j]))
                    self.pairs_by_monomial.setdefault(mono, []).append((i, j))

    @property
    def size(self) -> int:
        return len(self.basis)

    def expand(self, G: np.ndarray) -> Polynomial:
        """The concrete polynomial for a numeric Gram matrix."""
        n = len(self.basis[0])
        terms: dict[Mono, Fraction] = {}
        for mono, pairs in self.pairs_by_monomial.items():
            acc = Fraction(0)
            for i, j in pairs:
                w = 1 if i == j else 2
                acc += w * Fraction(float(G[i, j]))
            if acc:
                terms[mono] = acc
        return Polynomial(n, terms)


def gram_parameterize(total_degree: int, dimension: int,
                      homogeneous: bool = False,
                      name: str = "gram") -> tuple[list[Mono], GramBlock]:
    """Monomial basis and symbolic Gram for an SOS of the given degree.

    The basis holds all monomials of degree <= total_degree/2, or exactly
    total_degree/2 in homogeneous mode.
    """
    if total_degree < 0:
        raise SosSetupError("degree must be nonnegative")
    if total_degree % 2 != 0:
        raise SosSetupError("SOS degree must be even")
    half = total_degree // 2
    if homogeneous:
        basis = monomials_of_degree(dimension, half)
    else:
        basis = monomials_up_to_degree(dimension, half)
    return basis, GramBlock(name, basis)


# -- equality systems -----------------------------------------------------------


@dataclass
class LinearExpr:
    """Affine expression in Gram entries and free coefficients (== 0 rows)."""

    gram: dict[tuple[str, int, int], Fraction] = field(default_factory=dict)
    free: dict[tuple[str, Mono], Fraction] = field(default_factory=dict)
    constant: Fraction = Fraction(0)

    def add_gram(self, block: str, i: int, j: int, coeff: Fraction) -> None:
        key = (block, i, j)
        self.gram[key] = self.gram.get(key, Fraction(0)) + coeff

    def add_free(self, group: str, mono: Mono, coeff: Fraction) -> None:
        key = (group, mono)
        self.free[key] = self.free.get(key, Fraction(0)) + coeff


@dataclass
class EqualitySystem:
    """Coefficient-matching rows stacked over named Grams and free groups."""

    blocks: dict[str, GramBlock] = field(default_factory=dict)
    free_groups: dict[str, list[Mono]] = field(default_factory=dict)
    rows: list[tuple[str, LinearExpr]] = field(default_factory=list)

    def merge(self, other: "EqualitySystem") -> None:
        for name, block in other.blocks.items():
            if name in self.blocks:
                raise SosSetupError(f"duplicate gram block {name}")
            self.blocks[name] = block
        for name, basis in other.free_groups.items():
            if name in self.free_groups:
                if self.free_groups[name] != basis:
                    raise SosSetupError(f"free group {name} basis mismatch")
            else:
                self.free_groups[name] = basis
        self.rows.extend(other.rows)

    def residual(self, gram_values: dict[str, np.ndarray],
                 free_values: dict[str, dict[Mono, float]]) -> float:
        """Worst row violation for a concrete assignment."""
        worst = 0.0
        for _, expr in self.rows:
            acc = float(expr.constant)
            for (name, i, j), coeff in expr.gram.items():
                acc += float(coeff) * float(gram_values[name][i, j])
            for (group, mono), coeff in expr.free.items():
                acc += float(coeff) * float(free_values.get(group, {}).get(mono, 0.0))
            worst = max(worst, abs(acc))
        return worst


def _add_gram_coefficients(expr: LinearExpr, block: GramBlock, mono: Mono,
                           scale: Fraction) -> None:
    """Coefficient of `mono` in scale * (basis' G basis), entered into expr."""
    for i, j in block.pairs_by_monomial.get(mono, []):
        expr.add_gram(block.name, i, j, scale * (1 if i == j else 2))


def _even_up(value: int) -> int:
    value = max(value, 0)
    return value if value % 2 == 0 else value + 1


def _v_basis(dimension: int, deg_v: int) -> list[Mono]:
    # no constant term, which pins V(0) = 0
    return monomials_up_to_degree(dimension, deg_v, include_constant=False)


def _grad_dot(mono: Mono, vec: list[Polynomial]) -> Polynomial:
    """<grad x^mono, vec> as an exact polynomial."""
    n = len(mono)
    acc = Polynomial.zero(n)
    for grad_i, vec_i in zip(Polynomial.monomial(mono).gradient(), vec):
        acc = acc + grad_i * vec_i
    return acc


def _collect_monomials(*sources) -> list[Mono]:
    out: set[Mono] = set()
    for src in sources:
        out.update(src)
    return sorted(out, key=lambda m: (sum(m), tuple(-e for e in m)))


def _gram_product_support(block: GramBlock, g: Polynomial | None) -> set[Mono]:
    monos = set(block.pairs_by_monomial)
    if g is None:
        return monos
    out = set()
    for mono in monos:
        for nu in g.terms:
            out.add(tuple(a + b for a, b in zip(mono, nu)))
    return out


def assemble_condition_i(system: SemialgebraicSystem, deg_v: int,
                         eps_pd: float = 1e-3, slack: int = 0
                         ) -> EqualitySystem:
    """Rows for V - eps_pd |x|^2 = sigma_0 + sum sigma_i g_i."""
    n = system.dimension
    gens = system.S.generators
    for i, g in enumerate(gens):
        if g.degree() > deg_v:
            raise DegreeScheduleError(
                f"deg g_{i + 1} = {g.degree()} exceeds deg V = {deg_v}")
    sys_eq = EqualitySystem()
    sys_eq.free_groups["V"] = _v_basis(n, deg_v)
    _, sigma0 = gram_parameterize(_even_up(deg_v + slack), n, name="sigma_0")
    sys_eq.blocks[sigma0.name] = sigma0
    sigmas = []
    for i, g in enumerate(gens):
        deg = _even_up(deg_v - g.degree() + slack)
        _, blk = gram_parameterize(deg, n, name=f"sigma_{i + 1}")
        sys_eq.blocks[blk.name] = blk
        sigmas.append(blk)

    shift = norm_squared(n).scale(Fraction(eps_pd))
    support = _collect_monomials(
        sys_eq.free_groups["V"], shift.terms,
        _gram_product_support(sigma0, None),
        *[_gram_product_support(blk, g) for blk, g in zip(sigmas, gens)])
    for mono in support:
        expr = LinearExpr()
        if mono in sys_eq.free_groups["V"]:
            expr.add_free("V", mono, Fraction(1))
        expr.constant += -shift.coefficient(mono)
        _add_gram_coefficients(expr, sigma0, mono, Fraction(-1))
        for blk, g in zip(sigmas, gens):
            for nu, gcoeff in g.terms.items():
                diff = tuple(a - b for a, b in zip(mono, nu))
                if all(e >= 0 for e in diff):
                    _add_gram_coefficients(expr, blk, diff, -gcoeff)
        sys_eq.rows.append((f"positivity:{mono}", expr))
    return sys_eq


def assemble_condition_ii(system: SemialgebraicSystem, deg_v: int,
                          decrease_margin: Polynomial | None = None,
                          slack: int = 0) -> EqualitySystem:
    """Rows for -<grad V, f> - margin = chi_0 + sum chi_i g_i."""
    n = system.dimension
    gens = system.S.generators
    deg_f = max(c.degree() for c in system.f)
    lhs_deg = deg_v - 1 + deg_f
    sys_eq = EqualitySystem()
    vbasis = _v_basis(n, deg_v)
    sys_eq.free_groups["V"] = vbasis
    _, chi0 = gram_parameterize(_even_up(lhs_deg + slack), n, name="chi_0")
    sys_eq.blocks[chi0.name] = chi0
    chis = []
    for i, g in enumerate(gens):
        deg = _even_up(lhs_deg - g.degree() + slack)
        _, blk = gram_parameterize(deg, n, name=f"chi_{i + 1}")
        sys_eq.blocks[blk.name] = blk
        chis.append(blk)

    lhs_per_v = {mono: -_grad_dot(mono, system.f) for mono in vbasis}
    margin = decrease_margin if decrease_margin is not None \
        else Polynomial.zero(n)
    support = _collect_monomials(
        *[p.terms for p in lhs_per_v.values()], margin.terms,
        _gram_product_support(chi0, None),
        *[_gram_product_support(blk, g) for blk, g in zip(chis, gens)])
    for mono in support:
        expr = LinearExpr()
        for vmono, p in lhs_per_v.items():
            c = p.coefficient(mono)
            if c:
                expr.add_free("V", vmono, c)
        expr.constant += -margin.coefficient(mono)
        _add_gram_coefficients(expr, chi0, mono, Fraction(-1))
        for blk, g in zip(chis, gens):
            for nu, gcoeff in g.terms.items():
                diff = tuple(a - b for a, b in zip(mono, nu))
                if all(e >= 0 for e in diff):
                    _add_gram_coefficients(expr, blk, diff, -gcoeff)
        sys_eq.rows.append((f"decrease:{mono}", expr))
    return sys_eq


def assemble_condition_iii(system: SemialgebraicSystem, deg_v: int, j: int,
                           slack: int = 0) -> EqualitySystem:
    """Rows for -<grad V, grad g_j> = chi_j0 + sum_{i!=j} chi_ji g_i + phi_j g_j.

    j is 1-based.  phi_j is a free polynomial (it multiplies the locally
    vanishing generator, so its sign is immaterial on the face).
    """
    n = system.dimension
    gens = system.S.generators
    if not 1 <= j <= len(gens):
        raise SosSetupError(f"face index {j} out of range")
    gj = gens[j - 1]
    grad_gj = list(gj.gradient())
    lhs_deg = deg_v - 1 + max(gj.degree() - 1, 0)
    sys_eq = EqualitySystem()
    vbasis = _v_basis(n, deg_v)
    sys_eq.free_groups["V"] = vbasis
    _, chi0 = gram_parameterize(_even_up(lhs_deg + slack), n, name=f"chi_{j}_0")
    sys_eq.blocks[chi0.name] = chi0
    chis: list[tuple[int, GramBlock]] = []
    for i, g in enumerate(gens):
        if i + 1 == j:
            continue
        deg = _even_up(lhs_deg - g.degree() + slack)
        _, blk = gram_parameterize(deg, n, name=f"chi_{j}_{i + 1}")
        sys_eq.blocks[blk.name] = blk
        chis.append((i, blk))
    phi_deg = max(lhs_deg - gj.degree(), 0) + slack
    phi_basis = monomials_up_to_degree(n, phi_deg)
    phi_name = f"phi_{j}"
    sys_eq.free_groups[phi_name] = phi_basis

    lhs_per_v = {mono: -_grad_dot(mono, grad_gj) for mono in vbasis}
    phi_support = {tuple(a + b for a, b in zip(mono, nu))
                   for mono in phi_basis for nu in gj.terms}
    support = _collect_monomials(
        *[p.terms for p in lhs_per_v.values()],
        _gram_product_support(chi0, None),
        *[_gram_product_support(blk, gens[i]) for i, blk in chis],
        phi_support)
    for mono in support:
        expr = LinearExpr()
        for vmono, p in lhs_per_v.items():
            c = p.coefficient(mono)
            if c:
                expr.add_free("V", vmono, c)
        _add_gram_coefficients(expr, chi0, mono, Fraction(-1))
        for i, blk in chis:
            for nu, gcoeff in gens[i].terms.items():
                diff = tuple(a - b for a, b in zip(mono, nu))
                if all(e >= 0 for e in diff):
                    _add_gram_coefficients(expr, blk, diff, -gcoeff)
        for nu, gcoeff in gj.terms.items():
            diff = tuple(a - b for a, b in zip(mono, nu))
            if all(e >= 0 for e in diff) and diff in set(phi_basis):
                expr.add_free(phi_name, diff, -gcoeff)
        sys_eq.rows.append((f"face{j}:{mono}", expr))
    return sys_eq


def gram_from_sos_terms(block: GramBlock,
                        squares: list[tuple[float, Mono]]) -> np.ndarray:
    """Diagonal Gram for an explicit sum  sum_k c_k (x^m_k)^2, c_k >= 0."""
    G = np.zeros((block.size, block.size))
    index = {m: i for i, m in enumerate(block.basis)}
    for coeff, mono in squares:
        if coeff < 0:
            raise SosSetupError("squared terms need nonnegative coefficients")
        if tuple(mono) not in index:
            raise SosSetupError(f"monomial {mono} not in gram basis")
        G[index[tuple(mono)], index[tuple(mono)]] += coeff
    return G


# -- certificate container ------------------------------------------------------


@dataclass
class MultiplierRecord:
    name: str
    basis: list[Mono]
    gram: np.ndarray
    min_eigenvalue: float
    polynomial: Polynomial


@dataclass
class SosCertificate:
    V: Polynomial
    tier: str                                   # "dsos" | "sdp"
    margin: float                               # optimal common shift t
    multipliers: dict[str, MultiplierRecord]
    phi: dict[str, Polynomial]
    residuals: dict[str, float]                 # per condition label
    eps_pd: float
    decrease_margin: Polynomial | None
    flags: list[str] = field(default_factory=list)
    oracle_summary: dict | None = None

    def worst_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def worst_gram_eigenvalue(self) -> float:
        return min((m.min_eigenvalue for m in self.multipliers.values()),
                   default=0.0)


@dataclass
class SosOutcome:
    status: str            # "certificate" | "infeasible" | "stalled"
    certificate: SosCertificate | None = None
    margin: float | None = None
    detail: str = ""

    @property
    def found(self) -> bool:
        return self.certificate is not None


# -- solving --------------------------------------------------------------------


def _assemble_full(system: SemialgebraicSystem, deg_v: int, eps_pd: float,
                   decrease_margin: Polynomial | None, slack: int
                   ) -> EqualitySystem:
    if deg_v < 2 or deg_v % 2 != 0:
        raise SosSetupError("deg V must be even and >= 2")
    full = assemble_condition_i(system, deg_v, eps_pd, slack)
    full.merge(assemble_condition_ii(system, deg_v, decrease_margin, slack))
    for j in range(1, len(system.S.generators) + 1):
        full.merge(assemble_condition_iii(system, deg_v, j, slack))
    return full


def _free_layout(eq: EqualitySystem) -> tuple[list[tuple[str, Mono]], dict]:
    order = []
    for group in sorted(eq.free_groups):
        for mono in eq.free_groups[group]:
            order.append((group, mono))
    return order, {key: i for i, key in enumerate(order)}


def _solve_sdp_tier(eq: EqualitySystem, gap_tol: float = 1e-9,
                    on_sdp=None
                    ) -> tuple[SdpResult, dict[str, np.ndarray], dict, float]:
    """Max t with every Gram shifted: blocks are Y = G - t I >= 0."""
    block_names = sorted(eq.blocks)
    block_index = {name: i for i, name in enumerate(block_names)}
    sizes = [eq.blocks[name].size for name in block_names]
    free_order, free_index = _free_layout(eq)
    k = len(free_order) + 2  # + t + cap slack... cap slack is a block
    nt = len(free_order)     # index of t among free scalars

    equalities: list[EqualityRow] = []
    for label, expr in eq.rows:
        mats: list[np.ndarray | None] = [None] * len(block_names)
        free_row = np.zeros(nt + 1)
        t_coeff = 0.0
        for (name, i, j), coeff in expr.gram.items():
            bi = block_index[name]
            if mats[bi] is None:
                mats[bi] = np.zeros((sizes[bi], sizes[bi]))
            c = float(coeff)
            if i == j:
                mats[bi][i, i] += c
                t_coeff += c  # G_ii = Y_ii + t
            else:
                mats[bi][i, j] += c / 2.0
                mats[bi][j, i] += c / 2.0
        for (group, mono), coeff in expr.free.items():
            free_row[free_index[(group, mono)]] += float(coeff)
        free_row[nt] = t_coeff
        equalities.append(EqualityRow(blocks=mats + [None],
                                      free=free_row,
                                      rhs=-float(expr.constant)))
    # cap: t + s = 1 with s the extra 1x1 block
    cap_mats: list[np.ndarray | None] = [None] * len(block_names) + [np.ones((1, 1))]
    cap_free = np.zeros(nt + 1)
    cap_free[nt] = 1.0
    equalities.append(EqualityRow(blocks=cap_mats, free=cap_free, rhs=1.0))

    objective_blocks = [TRACE_PENALTY / s * np.eye(s) for s in sizes]
    objective_blocks.append(np.zeros((1, 1)))
    free_objective = np.zeros(nt + 1)
    free_objective[nt] = -1.0  # maximize t
    sdp = SemidefiniteProgram(block_sizes=sizes + [1],
                              objective_blocks=objective_blocks,
                              equalities=equalities,
                              free_objective=free_objective)
    if on_sdp is not None:
        on_sdp(sdp)
    result = solve_sdp(sdp, gap_tol=gap_tol)
    grams: dict[str, np.ndarray] = {}
    frees: dict[str, dict[Mono, float]] = {}
    t_star = float("nan")
    if result.blocks is not None and result.free is not None:
        t_star = float(result.free[nt])
        for name in block_names:
            bi = block_index[name]
            grams[name] = result.blocks[bi] + t_star * np.eye(sizes[bi])
        for (group, mono), idx in free_index.items():
            frees.setdefault(group, {})[mono] = float(result.free[idx])
    return result, grams, frees, t_star


def _solve_dsos_tier(eq: EqualitySystem
                     ) -> tuple[object, dict[str, np.ndarray], dict, float]:
    """Diagonal-dominance relaxation: one LP over Gram entries."""
    block_names = sorted(eq.blocks)
    entry_index: dict[tuple[str, int, int], int] = {}
    cols = 0
    for name in block_names:
        s = eq.blocks[name].size
        for i in range(s):
            for j in range(i, s):
                entry_index[(name, i, j)] = cols
                cols += 1
    abs_index: dict[tuple[str, int, int], int] = {}
    for name in block_names:
        s = eq.blocks[name].size
        for i in range(s):
            for j in range(i + 1, s):
                abs_index[(name, i, j)] = cols
                cols += 1
    free_order, free_index = _free_layout(eq)
    free_offset = cols
    cols += len(free_order)
    t_col = cols
    cols += 1

    rows: list[np.ndarray] = []
    rels: list[str] = []
    rhs: list[float] = []
    for label, expr in eq.rows:
        row = np.zeros(cols)
        for key, coeff in expr.gram.items():
            row[entry_index[key]] += float(coeff)
        for fkey, coeff in expr.free.items():
            row[free_offset + free_index[fkey]] += float(coeff)
        rows.append(row)
        rels.append(linprog.EQ)
        rhs.append(-float(expr.constant))
    # diagonal dominance with shift: G_kk - t - sum_j u_kj >= 0
    for name in block_names:
        s = eq.blocks[name].size
        for i in range(s):
            row = np.zeros(cols)
            row[entry_index[(name, i, i)]] = 1.0
            row[t_col] = -1.0
            for j in range(s):
                if j == i:
                    continue
                a, b = min(i, j), max(i, j)
                row[abs_index[(name, a, b)]] -= 1.0
            rows.append(row)
            rels.append(linprog.GE)
            rhs.append(0.0)
    # |G_ij| <= u_ij
    for (name, i, j), ui in abs_index.items():
        for sign in (1.0, -1.0):
            row = np.zeros(cols)
            row[entry_index[(name, i, j)]] = sign
            row[ui] = -1.0
            rows.append(row)
            rels.append(linprog.LE)
            rhs.append(0.0)

    objective = np.zeros(cols)
    objective[t_col] = 1.0
    bounds: list[tuple[float | None, float | None]] = [(None, None)] * cols
    for ui in abs_index.values():
        bounds[ui] = (0.0, None)
    bounds[t_col] = (None, 1.0)
    lp = linprog.LinearProgram(objective=objective, A=np.array(rows),
                               relations=rels, b=np.array(rhs), bounds=bounds,
                               maximize=True)
    result = linprog.solve(lp)
    grams: dict[str, np.ndarray] = {}
    frees: dict[str, dict[Mono, float]] = {}
    t_star = float("nan")
    if result.status == "optimal":
        t_star = float(result.x[t_col])
        for name in block_names:
            s = eq.blocks[name].size
            G = np.zeros((s, s))
            for i in range(s):
                for j in range(i, s):
                    G[i, j] = G[j, i] = result.x[entry_index[(name, i, j)]]
            grams[name] = G
        for fkey, idx in free_index.items():
            frees.setdefault(fkey[0], {})[fkey[1]] = float(result.x[free_offset + idx])
    return result, grams, frees, t_star


def _extract_certificate(eq: EqualitySystem, grams: dict[str, np.ndarray],
                         frees: dict[str, dict[Mono, float]], t_star: float,
                         tier: str, eps_pd: float,
                         decrease_margin: Polynomial | None,
                         dimension: int) -> SosCertificate:
    residual_by_condition: dict[str, float] = {}
    for label, expr in eq.rows:
        condition = label.split(":", 1)[0]
        acc = float(expr.constant)
        for (name, i, j), coeff in expr.gram.items():
            acc += float(coeff) * float(grams[name][i, j])
        for (group, mono), coeff in expr.free.items():
            acc += float(coeff) * frees.get(group, {}).get(mono, 0.0)
        residual_by_condition[condition] = max(
            residual_by_condition.get(condition, 0.0), abs(acc))
    worst = max(residual_by_condition.values(), default=0.0)
    if worst > RESIDUAL_TOL:
        raise CertificateUnsoundError(
            f"substitution residual {worst:.3e} exceeds {RESIDUAL_TOL:.1e}")

    multipliers: dict[str, MultiplierRecord] = {}
    for name in sorted(grams):
        block = eq.blocks[name]
        G = 0.5 * (grams[name] + grams[name].T)
        eig = float(np.linalg.eigvalsh(G).min())
        if eig < -GRAM_EIG_TOL:
            raise CertificateUnsoundError(
                f"gram {name} has eigenvalue {eig:.3e} below -{GRAM_EIG_TOL:.1e}")
        multipliers[name] = MultiplierRecord(
            name=name, basis=block.basis, gram=G, min_eigenvalue=eig,
            polynomial=block.expand(G))

    vterms = {mono: Fraction(val) for mono, val in frees.get("V", {}).items()
              if val != 0.0}
    V = Polynomial(dimension, vterms)
    phi = {}
    for group, values in frees.items():
        if group.startswith("phi_"):
            phi[group] = Polynomial(dimension, {
                m: Fraction(v) for m, v in values.items() if v != 0.0})
    flags = ["decrease decomposition imposed on all of the set, not only "
             "where no constraint is active"]
    if decrease_margin is None or decrease_margin.is_zero():
        flags.append("weak decrease: zero margin used; strict decrease off "
                     "the origin must be confirmed by sampling")
    return SosCertificate(
        V=V, tier=tier, margin=t_star, multipliers=multipliers, phi=phi,
        residuals=residual_by_condition, eps_pd=eps_pd,
        decrease_margin=decrease_margin, flags=flags)


def solve_certificate(system: SemialgebraicSystem, deg_v: int,
                      tier: str = "sdp", eps_pd: float = 1e-3,
                      decrease_margin: Polynomial | None = None,
                      sdpa_dump=None) -> SosOutcome:
    """Search one degree level, retrying once with +2 multiplier slack.

    Returns a certificate only when the optimal common shift clears
    -1e-8 and the substitution recheck passes; "infeasible" reports the
    best margin found at this degree.
    """
    if tier not in ("sdp", "dsos"):
        raise SosSetupError(f"unknown tier {tier!r}")
    best_margin = None
    for slack in (0, 2):
        eq = _assemble_full(system, deg_v, eps_pd, decrease_margin, slack)
        if tier == "sdp":
            on_sdp = None
            if sdpa_dump is not None:
                on_sdp = lambda sdp, s=slack: sdpa_dump(sdp, deg_v, s)
            result, grams, frees, t_star = _solve_sdp_tier(eq, on_sdp=on_sdp)
            status = result.status
            solved = status == "solution"
        else:
            result, grams, frees, t_star = _solve_dsos_tier(eq)
            status = result.status
            solved = status == "optimal"
            if status == "unbounded":
                # cannot happen with the t cap; treat defensively
                status = "stalled"
        logger.info("deg %d tier %s slack %d: status %s margin %s",
                    deg_v, tier, slack, status,
                    f"{t_star:.3e}" if t_star == t_star else "n/a")
        if solved and t_star >= ACCEPT_SHIFT:
            cert = _extract_certificate(eq, grams, frees, t_star, tier,
                                        eps_pd, decrease_margin,
                                        system.dimension)
            return SosOutcome("certificate", cert, margin=t_star)
        if solved:
            best_margin = t_star if best_margin is None else max(best_margin,
                                                                 t_star)
        elif status in ("maxiter", "stalled"):
            return SosOutcome("stalled", margin=best_margin,
                              detail=f"solver returned {status}")
    detail = ("no feasible shift above the acceptance threshold"
              if best_margin is not None else "equality system infeasible")
    return SosOutcome("infeasible", margin=best_margin, detail=detail)
