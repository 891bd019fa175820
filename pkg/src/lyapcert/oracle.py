"""Independent brute-force verification of certificates.

Everything here is deliberately redundant with the construction code:
inequalities are sampled on dense deterministic grids, eta comes from the
projection (never from the branch polynomials used in LP assembly), and
gradients are cross-checked by central differences.  A certificate is
accepted only when this module agrees, so a shared bug cannot
self-certify.

All randomized sampling uses a caller-fixed seed (default 0); reports are
byte-stable for a fixed seed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cones import cone_orthant_sections, face_sections, Simplex
from .cop_lp import (ConicSystem, RationalLyapunovCandidate,
                     interior_decrease_polynomial)
from .poly import Polynomial
from .sos_cert import SemialgebraicSystem
from .tangency import eta_projection

logger = logging.getLogger(__name__)

PASS_TOL = 1e-9
GRAD_ALIGN_TOL = 1e-9
BAND_WIDTH = 1e-6


@dataclass
class CheckResult:
    name: str
    min_value: float
    witness: tuple[float, ...] | None
    samples: int
    strict: bool = False  # strict checks need min > 0, not just >= -tol

    def passes(self, tol: float) -> bool:
        if self.strict:
            return self.min_value > 0.0
        return self.min_value >= -tol


@dataclass
class Report:
    kind: str
    checks: list[CheckResult] = field(default_factory=list)
    pass_tol: float = PASS_TOL
    notes: list[str] = field(default_factory=list)
    sample_rows: list[tuple[tuple, str, float]] | None = None

    @property
    def passed(self) -> bool:
        return all(c.passes(self.pass_tol) for c in self.checks)

    def worst(self) -> CheckResult | None:
        return min(self.checks, key=lambda c: c.min_value, default=None)

    def summary_dict(self) -> dict:
        return {c.name: c.min_value for c in self.checks}

    def to_text(self) -> str:
        lines = [f"oracle-report: {self.kind}",
                 f"pass-tolerance: {self.pass_tol!r}"]
        for c in self.checks:
            wit = "-" if c.witness is None else \
                "(" + ", ".join(repr(v) for v in c.witness) + ")"
            lines.append(f"check {c.name}: min {c.min_value!r} over "
                         f"{c.samples} samples, witness {wit}")
        for note in self.notes:
            lines.append(f"note: {note}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        if self.sample_rows is not None:
            lines = ["quantity,value,point"]
            for point, quantity, value in self.sample_rows:
                coords = ";".join(repr(float(v)) for v in point)
                lines.append(f"{quantity},{value!r},{coords}")
            return "\n".join(lines) + "\n"
        lines = ["check,min_value,samples,witness"]
        for c in self.checks:
            wit = "" if c.witness is None else \
                ";".join(repr(v) for v in c.witness)
            lines.append(f"{c.name},{c.min_value!r},{c.samples},{wit}")
        return "\n".join(lines) + "\n"


def barycentric_grid(simplex: Simplex, density: int) -> np.ndarray:
    """Deterministic grid of about `density` points covering the simplex."""
    k = simplex.num_vertices
    V = simplex.vertex_array()
    if k == 1:
        return V.copy()
    if k == 2:
        lam = np.linspace(0.0, 1.0, max(density, 2))
        return np.outer(lam, V[0]) + np.outer(1.0 - lam, V[1])
    resolution = 1
    while _composition_count(resolution + 1, k) <= density:
        resolution += 1
    combos = np.array(list(_compositions(resolution, k)), dtype=float)
    return (combos / resolution) @ V


def _composition_count(resolution: int, parts: int) -> int:
    from math import comb
    return comb(resolution + parts - 1, parts - 1)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _min_with_witness(name: str, values: np.ndarray, points: np.ndarray,
                      strict: bool = False) -> CheckResult:
    idx = int(np.argmin(values))
    return CheckResult(name=name, min_value=float(values[idx]),
                       witness=tuple(float(v) for v in points[idx]),
                       samples=len(values), strict=strict)


def _merge_min(results: list[CheckResult], name: str) -> CheckResult:
    best = min(results, key=lambda c: c.min_value)
    return CheckResult(name=name, min_value=best.min_value,
                       witness=best.witness,
                       samples=sum(c.samples for c in results),
                       strict=any(c.strict for c in results))


def verify_conic(candidate: RationalLyapunovCandidate, system: ConicSystem,
                 grid_density: int = 10_000, activation_tol: float = 1e-8,
                 collect_samples: bool = False) -> Report:
    """Grid verification of the three cone inequalities.

    h and the interior decrease s0 are sampled on every cone section; the
    face decrease is sampled on every face section with eta recomputed by
    projection at each point, independent of the assembly branch logic.
    """
    h = candidate.h
    r = candidate.r
    s0 = interior_decrease_polynomial(candidate, system.f)
    report = Report(kind="conic",
                    sample_rows=[] if collect_samples else None)

    def record(pts, name, values):
        if report.sample_rows is not None:
            for point, value in zip(pts, values):
                report.sample_rows.append((tuple(point), name, float(value)))

    h_checks = []
    s0_checks = []
    for oid, simplex in cone_orthant_sections(system.cone):
        pts = barycentric_grid(simplex, grid_density)
        h_vals = h.eval_many(pts)
        s0_vals = s0.eval_many(pts)
        record(pts, f"h:orthant{oid}", h_vals)
        record(pts, f"s0:orthant{oid}", s0_vals)
        h_checks.append(_min_with_witness(f"h:orthant{oid}", h_vals, pts))
        s0_checks.append(_min_with_witness(f"s0:orthant{oid}", s0_vals, pts))
    report.checks.append(_merge_min(h_checks, "h-on-sections"))
    report.checks.append(_merge_min(s0_checks, "s0-on-sections"))

    grad_h = h.gradient()
    face_checks = []
    for i in range(1, system.cone.num_rows + 1):
        for simplex in face_sections(system.cone, i):
            pts = barycentric_grid(simplex, max(grid_density // 10, 100))
            vals = np.empty(len(pts))
            for idx, x in enumerate(pts):
                vals[idx] = _face_decrease_at(x, system, h, grad_h, r,
                                              activation_tol)
            record(pts, f"face{i}", vals)
            face_checks.append(_min_with_witness(f"face{i}", vals, pts))
    if face_checks:
        report.checks.append(_merge_min(face_checks, "face-decrease"))
    report.notes.append(
        "eta taken from the projection at every face sample (independent "
        "of the branch polynomials)")
    return report


def _face_decrease_at(x: np.ndarray, system: ConicSystem, h: Polynomial,
                      grad_h, r: int, activation_tol: float) -> float:
    fx = system.field_at(x)
    rows = system.cone.C
    scaled = np.abs(rows @ x) / np.maximum(np.linalg.norm(rows, axis=1), 1e-30)
    active = [rows[k] for k in np.flatnonzero(scaled <= activation_tol)]
    eta = eta_projection(fx, active)
    nrm2 = float(x @ x)
    gh = np.array([g.evaluate_float(x) for g in grad_h])
    hval = h.evaluate_float(x)
    lhs = nrm2 * gh - 2.0 * r * hval * x
    return float(-(lhs @ (fx + eta)))


def verify_sos(V: Polynomial, system: SemialgebraicSystem,
               samples: int = 10_000, seed: int = 0,
               band_width: float = BAND_WIDTH,
               collect_samples: bool = False) -> Report:
    """Sampling verification of the three semialgebraic conditions.

    Feasible points come from rejection sampling of the bounding box;
    positivity is checked on radius shells, decrease on the interior
    sample set, and gradient alignment on thin bands around each g_j = 0.
    """
    rng = np.random.default_rng(seed)
    S = system.S
    n = S.dimension
    lo = np.array([b[0] for b in S.box])
    hi = np.array([b[1] for b in S.box])

    accepted: list[np.ndarray] = []
    attempts = 0
    max_attempts = 200 * samples
    while len(accepted) < samples and attempts < max_attempts:
        batch = rng.uniform(lo, hi, size=(min(4096, samples * 4), n))
        attempts += len(batch)
        mask = np.ones(len(batch), dtype=bool)
        for g in S.generators:
            mask &= g.eval_many(batch) >= 0.0
        accepted.extend(batch[mask])
        if attempts >= max_attempts:
            break
    if not accepted:
        raise ValueError("empty sample: bounding box misconfigured for the set")
    pts = np.array(accepted[:samples])

    report = Report(kind="sos", sample_rows=[] if collect_samples else None)

    def record(points, name, values):
        if report.sample_rows is not None:
            for point, value in zip(points, values):
                report.sample_rows.append((tuple(point), name, float(value)))

    grad_v = V.gradient()

    # positivity on shells
    shell_checks = []
    for radius in (1e-2, 1e-1, 1.0):
        dirs = rng.standard_normal((4 * max(len(pts) // 8, 64), n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        shell = radius * dirs
        mask = np.ones(len(shell), dtype=bool)
        for g in S.generators:
            mask &= g.eval_many(shell) >= 0.0
        shell = shell[mask]
        if len(shell) == 0:
            continue
        shell_vals = V.eval_many(shell)
        record(shell, f"V-shell-{radius}", shell_vals)
        shell_checks.append(_min_with_witness(
            f"V-shell-{radius}", shell_vals, shell, strict=True))
    if shell_checks:
        report.checks.append(_merge_min(shell_checks, "V-positivity-shells"))
    else:
        report.notes.append("no shell intersects the set; positivity "
                            "checked on interior samples only")
        inner = pts[np.linalg.norm(pts, axis=1) > 1e-6]
        report.checks.append(_min_with_witness(
            "V-positivity-interior", V.eval_many(inner), inner, strict=True))

    # strict decrease on the interior sample set (away from the origin)
    offorigin = pts[np.linalg.norm(pts, axis=1) > 1e-8]
    decrease = np.zeros(len(offorigin))
    for i in range(n):
        decrease += grad_v[i].eval_many(offorigin) * \
            system.f[i].eval_many(offorigin)
    record(offorigin, "decrease-strict", -decrease)
    report.checks.append(_min_with_witness("decrease-strict", -decrease,
                                           offorigin, strict=True))

    # alignment <grad V, grad g_j> <= 0 on the active bands
    for j, g in enumerate(S.generators, start=1):
        band_pts = _band_points(g, S, pts, band_width)
        if len(band_pts) == 0:
            report.notes.append(f"band of g_{j} not reached by the sampler")
            continue
        align = np.zeros(len(band_pts))
        gg = g.gradient()
        for i in range(n):
            align += grad_v[i].eval_many(band_pts) * gg[i].eval_many(band_pts)
        record(band_pts, f"alignment-g{j}", -align)
        check = _min_with_witness(f"alignment-g{j}", -align, band_pts)
        report.checks.append(check)
    report.pass_tol = GRAD_ALIGN_TOL
    return report


def _band_points(g: Polynomial, S, pts: np.ndarray, band_width: float
                 ) -> np.ndarray:
    """Newton-project samples onto g = 0, keep points still inside the set."""
    out = []
    grads = g.gradient()
    for x in pts:
        y = x.copy()
        ok = False
        for _ in range(50):
            val = g.evaluate_float(y)
            if abs(val) <= band_width:
                ok = True
                break
            grad = np.array([c.evaluate_float(y) for c in grads])
            nrm2 = float(grad @ grad)
            if nrm2 < 1e-30:
                break
            y = y - (val / nrm2) * grad
        if ok and all(other.evaluate_float(y) >= -1e-9
                      for other in S.generators if other is not g):
            out.append(y)
    return np.array(out) if out else np.zeros((0, pts.shape[1]))


def fd_gradient_check(candidate: RationalLyapunovCandidate,
                      points: np.ndarray, step: float = 1e-5) -> float:
    """Max relative error of the closed-form gradient of V = h/|x|^(2r)
    against central finite differences; points must stay away from 0."""
    worst = 0.0
    for x in np.asarray(points, dtype=float):
        if np.linalg.norm(x) < 1e-3:
            raise ValueError("finite-difference points must satisfy |x| >= 1e-3")
        exact = candidate.gradient_at(x)
        fd = np.zeros_like(x)
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = step
            fd[i] = (candidate.value(x + e) - candidate.value(x - e)) / (2 * step)
        err = np.linalg.norm(fd - exact) / max(np.linalg.norm(exact), 1e-12)
        worst = max(worst, float(err))
    return worst
