"""LP hierarchy for rational Lyapunov functions on polyhedral cones.

The candidate V = h / |x|^(2r) with h homogeneous of degree d is certified
by three families of inequalities: h >= 0 on the cone, the interior
decrease polynomial s0 >= 0 on the cone, and the face decrease s_i >= 0 on
each cone face.  By homogeneity everything is checked on l1-sphere
sections, each section is partitioned into simplices, and on every cell
nonnegativity of all symmetric-tensor evaluations at vertex multisets
implies nonnegativity of the polynomial on the cell.  Those tensor
evaluations are linear in the coefficients of h, which yields one LP per
partition; cells whose rows bind at the optimum are bisected and the LP is
re-solved, driving the partition diameter down until the margin clears the
acceptance threshold or the sweep budget runs out.

Faces carry two polynomial branches of the projected velocity switched by
the sign of w_i(x) = <c_i, f(x)>; a cell certifies w's sign with the same
tensor test and receives the matching branch rows, or both when the sign
is mixed, which is conservative but sound.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import linprog
from .cones import PolyhedralCone, SimplicialPartition, Simplex, cone_orthant_sections, face_sections
from .poly import Mono, Polynomial, SymmetricTensor, monomials_of_degree, norm_squared
from .tangency import FaceEtaBranches, face_eta_polynomial

logger = logging.getLogger(__name__)

DEFAULT_ACCEPT_MARGIN = 1e-6
ACTIVE_ROW_TOL = 1e-7
ROW_RECHECK_TOL = 1e-8


class ConicSetupError(ValueError):
    pass


@dataclass
class ConicSystem:
    """Homogeneous vector field on a polyhedral cone."""

    f: list[Polynomial]
    cone: PolyhedralCone
    field_degree: int = 0

    def __post_init__(self):
        n = self.cone.dimension
        if len(self.f) != n:
            raise ConicSetupError("vector field arity must match the dimension")
        degrees = set()
        for i, comp in enumerate(self.f):
            if comp.dimension != n:
                raise ConicSetupError(f"component {i + 1} has wrong dimension")
            deg = comp.is_homogeneous()
            if deg is None:
                raise ConicSetupError(
                    f"component {i + 1} is not homogeneous; cone mode requires "
                    "a homogeneous field")
            if not comp.is_zero():
                if deg == 0:
                    raise ConicSetupError(
                        f"component {i + 1} has a constant term, so f(0) != 0")
                degrees.add(deg)
        if not degrees:
            raise ConicSetupError("vector field is identically zero")
        if len(degrees) > 1:
            raise ConicSetupError(
                f"components have mixed homogeneity degrees {sorted(degrees)}")
        self.field_degree = degrees.pop()

    @property
    def dimension(self) -> int:
        return self.cone.dimension

    def field_at(self, x) -> np.ndarray:
        return np.array([c.evaluate_float(x) for c in self.f])


@dataclass
class RationalLyapunovCandidate:
    """V(x) = h(x) / |x|_2^(2r) with h homogeneous."""

    h: Polynomial
    r: int

    def __post_init__(self):
        if self.r < 0:
            raise ConicSetupError("r must be a nonnegative integer")
        deg = self.h.is_homogeneous()
        if deg is None:
            raise ConicSetupError("h must be homogeneous")
        self.degree = deg

    def value(self, x) -> float:
        nrm2 = float(sum(v * v for v in x))
        return float(self.h.evaluate(tuple(x))) / nrm2 ** self.r

    def gradient_at(self, x) -> np.ndarray:
        """Closed-form gradient (|x|^2 grad h - 2 r h x) / |x|^(2(r+1))."""
        x = np.asarray(x, dtype=float)
        nrm2 = float(x @ x)
        gh = np.array([g.evaluate_float(x) for g in self.h.gradient()])
        hval = self.h.evaluate_float(x)
        return (nrm2 * gh - 2.0 * self.r * hval * x) / nrm2 ** (self.r + 1)


@dataclass
class SectionState:
    """One section simplex and its evolving partition."""

    kind: str              # "cone" or "face"
    label: int             # orthant id for cones, 1-based face index for faces
    partition: SimplicialPartition


@dataclass
class RowProvenance:
    section: int
    cell: int
    row_kind: str          # "h" | "s0" | "face-a" | "face-b"
    vertex_tuple: tuple[int, ...]


@dataclass
class ConicCertificate:
    candidate: RationalLyapunovCandidate
    margin: float
    sections: list[SectionState]
    degree: int
    r: int
    sweeps_used: int
    lp_rows: int
    lp_pivots: int
    corner_flags: list[str] = field(default_factory=list)
    oracle_summary: dict | None = None


@dataclass
class LevelReport:
    degree: int
    r: int
    sweeps_done: int
    best_margin: float
    last_rows: int


@dataclass
class HierarchyOutcome:
    certificate: ConicCertificate | None
    levels: list[LevelReport]

    @property
    def found(self) -> bool:
        return self.certificate is not None


def build_s0(h_basis: list[Mono], r: int, f: list[Polynomial]
             ) -> list[Polynomial]:
    """Interior decrease contributions, one polynomial per h-basis monomial.

    s0(x) = -|x|^2 <grad h, f> + 2 r h <x, f>, which is linear in the
    coefficients of h; entry m is s0 for h = the m-th basis monomial.
    """
    n = f[0].dimension
    nrm = norm_squared(n)
    xdotf = Polynomial.zero(n)
    for i in range(n):
        xdotf = xdotf + Polynomial.variable(n, i) * f[i]
    out = []
    for mono in h_basis:
        hm = Polynomial.monomial(mono)
        grad = hm.gradient()
        gdotf = Polynomial.zero(n)
        for gi, fi in zip(grad, f):
            gdotf = gdotf + gi * fi
        s0m = -(nrm * gdotf) + (2 * r) * (hm * xdotf)
        out.append(s0m)
    return out


def build_si(h_basis: list[Mono], r: int, f: list[Polynomial],
             cone: PolyhedralCone, face_index: int, branch: str
             ) -> list[Polynomial]:
    """Face decrease contributions for one branch, per h-basis monomial.

    Branch "a" is eta = 0 and coincides with s0 on the face.  Branch "b"
    uses the closed-form projection; the result is premultiplied by
    |c_i|^2 to clear the denominator, which preserves signs.
    """
    if branch == "a":
        return build_s0(h_basis, r, f)
    if branch != "b":
        raise ConicSetupError(f"unknown branch {branch!r}")
    n = f[0].dimension
    branches = face_eta_polynomial(cone, face_index, f)
    velocity = [f[i].scale(branches.c_norm_sq) + branches.eta_b_scaled[i]
                for i in range(n)]
    nrm = norm_squared(n)
    out = []
    for mono in h_basis:
        hm = Polynomial.monomial(mono)
        grad = hm.gradient()
        total = Polynomial.zero(n)
        for i in range(n):
            lhs_i = nrm * grad[i] - (2 * r) * (hm * Polynomial.variable(n, i))
            total = total + lhs_i * velocity[i]
        out.append(-total)
    return out


def _tensor_or_none(p: Polynomial) -> SymmetricTensor | None:
    return None if p.is_zero() else p.to_tensor()


class _LevelData:
    """Per-(d, r) precomputation: bases and tensors reused across sweeps."""

    def __init__(self, system: ConicSystem, degree: int, r: int):
        n = system.dimension
        self.degree = degree
        self.r = r
        self.h_basis = monomials_of_degree(n, degree)
        self.s0_order = degree + system.field_degree + 1
        self.h_tensors = [Polynomial.monomial(m).to_tensor()
                          for m in self.h_basis]
        self.s0_tensors = [_tensor_or_none(p)
                           for p in build_s0(self.h_basis, r, system.f)]
        self.face_b_tensors: dict[int, list[SymmetricTensor | None]] = {}
        self.face_w: dict[int, FaceEtaBranches] = {}
        for i in range(1, system.cone.num_rows + 1):
            self.face_w[i] = face_eta_polynomial(system.cone, i, system.f)
            self.face_b_tensors[i] = [
                _tensor_or_none(p)
                for p in build_si(self.h_basis, r, system.f, system.cone, i, "b")]


def _cell_rows(level: _LevelData, state: SectionState, section_idx: int,
               cell_idx: int, cell: Simplex, ncoef: int
               ) -> tuple[list[np.ndarray], list[RowProvenance]]:
    """All tuple rows for one cell; the final column is the margin variable."""
    verts = [np.array(v) for v in cell.vertices]
    rows: list[np.ndarray] = []
    prov: list[RowProvenance] = []

    def tensor_rows(tensors, order: int, row_kind: str):
        for combo in itertools.combinations_with_replacement(
                range(len(verts)), order):
            pts = [verts[i] for i in combo]
            row = np.zeros(ncoef + 1)
            for m, T in enumerate(tensors):
                if T is not None:
                    row[m] = float(T.eval(pts))
            row[ncoef] = -1.0
            rows.append(row)
            prov.append(RowProvenance(section_idx, cell_idx, row_kind, combo))

    if state.kind == "cone":
        tensor_rows(level.h_tensors, level.degree, "h")
        tensor_rows(level.s0_tensors, level.s0_order, "s0")
    else:
        face = state.label
        w = level.face_w[face].w
        branches = _face_branches_for_cell(w, verts)
        if "a" in branches:
            tensor_rows(level.s0_tensors, level.s0_order, "face-a")
        if "b" in branches:
            tensor_rows(level.face_b_tensors[face], level.s0_order, "face-b")
    return rows, prov


def _face_branches_for_cell(w: Polynomial, verts: list[np.ndarray],
                            tol: float = 1e-12) -> set[str]:
    """Branches required on a face cell, from the certified sign of w.

    Sign certification uses the same vertex-multiset tensor test as the
    main inequalities, so it is exact for linear fields and sound for
    higher-degree ones; an uncertain sign requires both branches.
    """
    if w.is_zero():
        return {"a"}
    order = w.is_homogeneous()
    if order is None:
        raise ConicSetupError("switching polynomial must be homogeneous")
    T = w.to_tensor()
    vals = [float(T.eval([verts[i] for i in combo]))
            for combo in itertools.combinations_with_replacement(
                range(len(verts)), order)]
    if all(v >= -tol for v in vals):
        return {"a"}
    if all(v <= tol for v in vals):
        return {"b"}
    return {"a", "b"}


def assemble_lp(system: ConicSystem, degree: int, r: int,
                sections: list[SectionState], level: _LevelData | None = None,
                threads: int = 1
                ) -> tuple[linprog.LinearProgram, list[RowProvenance]]:
    """The margin LP: maximize t subject to every tuple row >= t, |coeffs| <= 1.

    The normalization box on the h coefficients excludes h = 0 (whose
    margin is exactly 0) whenever the acceptance threshold is positive.
    """
    if not sections:
        raise ConicSetupError("empty partition: no sections to constrain")
    if level is None:
        level = _LevelData(system, degree, r)
    ncoef = len(level.h_basis)

    jobs = []
    for sec_idx, state in enumerate(sections):
        for cell_idx, cell in enumerate(state.partition.cells):
            jobs.append((state, sec_idx, cell_idx, cell))

    def work(job):
        state, sec_idx, cell_idx, cell = job
        return _cell_rows(level, state, sec_idx, cell_idx, cell, ncoef)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]

    rows: list[np.ndarray] = []
    prov: list[RowProvenance] = []
    for cell_rows, cell_prov in results:
        rows.extend(cell_rows)
        prov.extend(cell_prov)

    A = np.array(rows).reshape(len(rows), ncoef + 1)
    objective = np.zeros(ncoef + 1)
    objective[ncoef] = 1.0
    bounds: list[tuple[float | None, float | None]] = \
        [(-1.0, 1.0)] * ncoef + [(None, None)]
    lp = linprog.LinearProgram(
        objective=objective, A=A, relations=[linprog.GE] * len(rows),
        b=np.zeros(len(rows)), bounds=bounds, maximize=True)
    return lp, prov


def initial_sections(system: ConicSystem) -> list[SectionState]:
    """Fresh single-cell partitions for all cone and face sections."""
    out: list[SectionState] = []
    for oid, simplex in cone_orthant_sections(system.cone):
        out.append(SectionState("cone", oid, SimplicialPartition(simplex)))
    for i in range(1, system.cone.num_rows + 1):
        for simplex in face_sections(system.cone, i):
            out.append(SectionState("face", i, SimplicialPartition(simplex)))
    if not any(s.kind == "cone" for s in out):
        raise ConicSetupError(
            "cone has empty interior in every orthant (trivial problem)")
    return out


def corner_flags(sections: list[SectionState], tol: float = 1e-9) -> list[str]:
    """Notes for partition vertices shared by several faces.

    At such corners the face-only construction does not define a single
    eta; constraints from every adjacent face are imposed there, which is
    conservative, and certificates carry these flags.
    """
    face_vertices: dict[int, set[tuple]] = {}
    for state in sections:
        if state.kind != "face":
            continue
        acc = face_vertices.setdefault(state.label, set())
        for cell in state.partition.cells:
            for v in cell.vertices:
                acc.add(tuple(np.round(np.array(v), 10)))
    flags = []
    faces = sorted(face_vertices)
    for a, b in itertools.combinations(faces, 2):
        shared = face_vertices[a] & face_vertices[b]
        for v in sorted(shared):
            flags.append(
                f"faces {a} and {b} share vertex {v}: constraints from both "
                "faces are imposed (conservative corner handling)")
    return flags


def run_hierarchy(system: ConicSystem,
                  schedule: list[tuple[int, int, int]],
                  accept_margin: float = DEFAULT_ACCEPT_MARGIN,
                  threads: int = 1,
                  lp_dump=None) -> HierarchyOutcome:
    """Algorithm over (degree, r, sweep budget) levels.

    Each level starts from the unrefined sections, solves the margin LP,
    and accepts as soon as the optimal margin reaches accept_margin after
    re-checking every row; otherwise the cells owning rows active at the
    optimum are bisected (all refinable cells when none can be identified)
    until the sweep budget is exhausted.  Returns the first certificate or
    a per-level report of best margins.
    """
    levels: list[LevelReport] = []
    base_sections = initial_sections(system)
    flags = corner_flags(base_sections)
    for degree, r, max_sweeps in schedule:
        level = _LevelData(system, degree, r)
        sections = [SectionState(s.kind, s.label,
                                 SimplicialPartition(s.partition.parent))
                    for s in base_sections]
        best_margin = -np.inf
        sweeps = 0
        while True:
            lp, prov = assemble_lp(system, degree, r, sections, level, threads)
            if lp_dump is not None:
                lp_dump(lp, degree, r, sweeps)
            result = linprog.solve(lp)
            if result.status != "optimal":
                logger.warning("margin LP returned %s at level (%d, %d)",
                               result.status, degree, r)
                break
            margin = float(result.value)
            best_margin = max(best_margin, margin)
            logger.info("level d=%d r=%d sweep %d: margin %.3e (%d rows)",
                        degree, r, sweeps, margin, len(prov))
            if margin >= accept_margin:
                ncoef = len(level.h_basis)
                row_values = lp.A[:, :ncoef] @ result.x[:ncoef]
                if row_values.min() < margin - ROW_RECHECK_TOL:
                    logger.warning("row recheck failed by %.3e; not accepting",
                                   margin - row_values.min())
                else:
                    h = Polynomial(system.dimension, {
                        m: Fraction(c) for m, c in
                        zip(level.h_basis, result.x[:ncoef]) if c != 0.0})
                    cert = ConicCertificate(
                        candidate=RationalLyapunovCandidate(h, r),
                        margin=margin, sections=sections, degree=degree, r=r,
                        sweeps_used=sweeps, lp_rows=len(prov),
                        lp_pivots=result.pivots, corner_flags=list(flags))
                    levels.append(LevelReport(degree, r, sweeps, margin,
                                              len(prov)))
                    return HierarchyOutcome(cert, levels)
            if sweeps >= max_sweeps:
                break
            sections = _refine(sections, lp, prov, result)
            sweeps += 1
        levels.append(LevelReport(degree, r, sweeps, best_margin,
                                  len(prov) if prov else 0))
    return HierarchyOutcome(None, levels)


def _refine(sections: list[SectionState], lp: linprog.LinearProgram,
            prov: list[RowProvenance], result) -> list[SectionState]:
    """Bisect cells owning active rows; fall back to refining everything."""
    row_values = lp.A @ np.concatenate([result.x[:-1], [0.0]])
    margin = float(result.value)
    active: set[tuple[int, int]] = set()
    for row, p in zip(row_values, prov):
        if row - margin <= ACTIVE_ROW_TOL:
            active.add((p.section, p.cell))
    per_section: dict[int, set[int]] = {}
    for sec, cell in active:
        if sections[sec].partition.cells[cell].num_vertices >= 2:
            per_section.setdefault(sec, set()).add(cell)
    if not per_section:
        for sec_idx, state in enumerate(sections):
            refinable = {i for i, c in enumerate(state.partition.cells)
                         if c.num_vertices >= 2}
            if refinable:
                per_section[sec_idx] = refinable
    out = []
    for sec_idx, state in enumerate(sections):
        chosen = per_section.get(sec_idx)
        if chosen:
            out.append(SectionState(state.kind, state.label,
                                    state.partition.refine_cells(sorted(chosen))))
        else:
            out.append(state)
    return out


def interior_decrease_polynomial(candidate: RationalLyapunovCandidate,
                                 f: list[Polynomial]) -> Polynomial:
    """s0 for a concrete candidate: -|x|^2 <grad h, f> + 2 r h <x, f>."""
    n = candidate.h.dimension
    nrm = norm_squared(n)
    grad = candidate.h.gradient()
    gdotf = Polynomial.zero(n)
    xdotf = Polynomial.zero(n)
    for i in range(n):
        gdotf = gdotf + grad[i] * f[i]
        xdotf = xdotf + Polynomial.variable(n, i) * f[i]
    return -(nrm * gdotf) + (2 * candidate.r) * (candidate.h * xdotf)
