"""Small dense semidefinite-program solver.

Primal-dual path following with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step, on problems in the block form

    minimize    sum_b <C_b, X_b>  +  c . u
    subject to  sum_b <A_ib, X_b> +  d_i . u  =  b_i,   i = 1..m
                X_b  positive semidefinite,   u free.

All factorizations are dense; the intended scale is blocks of a few tens
of rows and a few hundred equalities, where dense Cholesky on the Schur
complement is both fast and numerically uneventful.  Callers are expected
to pose problems with interior (the certificate drivers always add an
identity-shift variable), so no Slater checking is attempted.

Infeasibility is reported heuristically: dual objective divergence beyond
a threshold while the dual residual stays small.  The flag on the result
records that this is evidence, not a certificate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e8


class SdpError(ValueError):
    pass


@dataclass
class EqualityRow:
    """One linear equality: sum_b <blocks[b], X_b> + free . u = rhs.

    blocks entries may be None for blocks the row does not touch.
    """

    blocks: list[np.ndarray | None]
    free: np.ndarray
    rhs: float


@dataclass
class SemidefiniteProgram:
    block_sizes: list[int]
    objective_blocks: list[np.ndarray]
    equalities: list[EqualityRow]
    free_objective: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not self.block_sizes:
            raise SdpError("at least one block required")
        if any(s < 1 for s in self.block_sizes):
            raise SdpError("block sizes must be >= 1")
        if len(self.objective_blocks) != len(self.block_sizes):
            raise SdpError("one objective matrix per block required")
        if not self.equalities:
            raise SdpError("at least one equality required")
        self.free_objective = np.asarray(self.free_objective, dtype=float)
        for b, (size, mat) in enumerate(zip(self.block_sizes,
                                            self.objective_blocks)):
            self.objective_blocks[b] = _check_sym(mat, size, f"objective block {b}")
        for i, row in enumerate(self.equalities):
            if len(row.blocks) != len(self.block_sizes):
                raise SdpError(f"equality {i} has wrong block count")
            row.blocks = [None if m is None else
                          _check_sym(m, s, f"equality {i} block {b}")
                          for b, (m, s) in enumerate(zip(row.blocks,
                                                         self.block_sizes))]
            row.free = np.asarray(row.free, dtype=float).reshape(
                len(self.free_objective))

    @property
    def num_free(self) -> int:
        return len(self.free_objective)


def _check_sym(mat, size: int, what: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (size, size):
        raise SdpError(f"{what} has shape {mat.shape}, expected {(size, size)}")
    if np.abs(mat - mat.T).max() > 1e-12 * max(1.0, np.abs(mat).max()):
        raise SdpError(f"{what} is not symmetric")
    return 0.5 * (mat + mat.T)


@dataclass
class SdpResult:
    status: str  # "solution" | "infeasible" | "maxiter"
    blocks: list[np.ndarray] | None = None
    free: np.ndarray | None = None
    duals: np.ndarray | None = None
    dual_blocks: list[np.ndarray] | None = None
    primal_objective: float | None = None
    dual_objective: float | None = None
    gap: float | None = None
    equality_residual: float | None = None
    iterations: int = 0
    infeasibility_is_heuristic: bool = False


class _Workspace:
    """Dense per-solve state; one workspace per solve call."""

    def __init__(self, sdp: SemidefiniteProgram):
        self.sdp = sdp
        self.nb = len(sdp.block_sizes)
        self.m = len(sdp.equalities)
        self.k = sdp.num_free
        self.b = np.array([row.rhs for row in sdp.equalities])
        self.D = np.array([row.free for row in sdp.equalities]).reshape(
            self.m, self.k)
        # per block: dense (m, n*n) matrix of vectorized equality coefficients
        self.E = []
        for bidx, size in enumerate(sdp.block_sizes):
            Eb = np.zeros((self.m, size * size))
            for i, row in enumerate(sdp.equalities):
                if row.blocks[bidx] is not None:
                    Eb[i] = row.blocks[bidx].ravel()
            self.E.append(Eb)
        self.total_dim = sum(sdp.block_sizes)

    def apply_A(self, X: list[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.m)
        for Eb, Xb in zip(self.E, X):
            out += Eb @ Xb.ravel()
        return out

    def apply_At(self, y: np.ndarray) -> list[np.ndarray]:
        out = []
        for Eb, size in zip(self.E, self.sdp.block_sizes):
            out.append((Eb.T @ y).reshape(size, size))
        return out


def _nt_scaling(X: np.ndarray, Z: np.ndarray):
    """NT scaling factor R and eigenvalue vector lam with
    R^-1 X R^-T = R^T Z R = diag(lam)."""
    Lx = np.linalg.cholesky(X)
    Lz = np.linalg.cholesky(Z)
    U, sv, Vt = np.linalg.svd(Lz.T @ Lx)
    lam = sv
    R = Lx @ Vt.T @ np.diag(1.0 / np.sqrt(sv))
    Rinv = np.diag(np.sqrt(sv)) @ Vt @ np.linalg.inv(Lx)
    return R, Rinv, lam


def _max_step(M: np.ndarray, dM: np.ndarray, fraction: float = 0.98) -> float:
    """Largest step alpha <= 1 with M + alpha dM staying PSD (fraction back-off)."""
    L = np.linalg.cholesky(M)
    Linv = np.linalg.inv(L)
    S = Linv @ dM @ Linv.T
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    wmin = w.min()
    if wmin >= 0:
        return 1.0
    return min(1.0, fraction / (-wmin))


def solve_sdp(sdp: SemidefiniteProgram, gap_tol: float = 1e-9,
              feas_tol: float = 1e-9, max_iter: int = 200) -> SdpResult:
    """Solve the block SDP.

    A "solution" satisfies: min eigenvalue of each X block >= -1e-8,
    equality residual <= 1e-8, and relative duality gap <= 1e-7 (the solve
    targets the tighter gap_tol internally).  "maxiter" after max_iter
    iterations is reported distinctly from "infeasible".
    """
    ws = _Workspace(sdp)
    m, k = ws.m, ws.k

    # rows that touch nothing decide feasibility immediately
    for i, row in enumerate(sdp.equalities):
        touched = any(b is not None and np.abs(b).max() > 0 for b in row.blocks)
        touched = touched or (k and np.abs(row.free).max() > 0)
        if not touched and abs(row.rhs) > feas_tol:
            return SdpResult(status="infeasible",
                             infeasibility_is_heuristic=False)

    scale = max(1.0, float(np.abs(ws.b).max()))
    X = [scale * np.eye(s) for s in sdp.block_sizes]
    Z = [scale * np.eye(s) for s in sdp.block_sizes]
    y = np.zeros(m)
    u = np.zeros(k)

    norm_b = 1.0 + np.linalg.norm(ws.b)
    norm_c = 1.0 + max(np.linalg.norm(Cb) for Cb in sdp.objective_blocks) \
        + (np.linalg.norm(sdp.free_objective) if k else 0.0)

    status = "maxiter"
    iteration = 0
    for iteration in range(1, max_iter + 1):
        Aty = ws.apply_At(y)
        r_p = ws.b - ws.apply_A(X) - (ws.D @ u if k else 0.0)
        R_d = [sdp.objective_blocks[bi] - Z[bi] - Aty[bi] for bi in range(ws.nb)]
        r_f = sdp.free_objective - ws.D.T @ y if k else np.zeros(0)

        mu = sum(float(np.tensordot(Xb, Zb)) for Xb, Zb in zip(X, Z)) / ws.total_dim
        pobj = sum(float(np.tensordot(Cb, Xb))
                   for Cb, Xb in zip(sdp.objective_blocks, X)) \
            + (float(sdp.free_objective @ u) if k else 0.0)
        dobj = float(ws.b @ y)
        rel_p = np.linalg.norm(r_p) / norm_b
        rel_d = (max(np.linalg.norm(Rb) for Rb in R_d)
                 + (np.linalg.norm(r_f) if k else 0.0)) / norm_c
        gap = mu * ws.total_dim / (1.0 + abs(pobj) + abs(dobj))

        if rel_p <= feas_tol and rel_d <= feas_tol and gap <= gap_tol:
            status = "solution"
            break
        if dobj > DIVERGENCE_THRESHOLD and rel_d <= 1e-4:
            return SdpResult(status="infeasible", iterations=iteration,
                             dual_objective=dobj,
                             infeasibility_is_heuristic=True)
        if max(abs(pobj), max(float(np.abs(Xb).max()) for Xb in X)) > 1e14:
            logger.debug("iterate magnitude diverged; stopping at maxiter status")
            break

        # NT scaling per block; nudge nearly singular iterates once
        try:
            scal = [_nt_scaling(X[bi], Z[bi]) for bi in range(ws.nb)]
        except np.linalg.LinAlgError:
            for bi in range(ws.nb):
                size = sdp.block_sizes[bi]
                X[bi] = X[bi] + 1e-12 * max(1.0, np.trace(X[bi])) * np.eye(size)
                Z[bi] = Z[bi] + 1e-12 * max(1.0, np.trace(Z[bi])) * np.eye(size)
            try:
                scal = [_nt_scaling(X[bi], Z[bi]) for bi in range(ws.nb)]
            except np.linalg.LinAlgError:
                break
        W = [R @ R.T for R, _, _ in scal]

        # Schur complement M_ij = sum_b <A_i, W A_j W>
        M = np.zeros((m, m))
        WEW = []
        for bi in range(ws.nb):
            size = sdp.block_sizes[bi]
            Eb = ws.E[bi]
            T = Eb.reshape(m, size, size)
            TW = np.einsum("pq,iqr,rs->ips", W[bi], T, W[bi], optimize=True)
            WEW.append(TW.reshape(m, size * size))
            M += WEW[bi] @ Eb.T
        ridge = 1e-13 * max(1.0, np.trace(M) / m)

        def factor(Mmat, ridge):
            for _ in range(8):
                try:
                    return np.linalg.cholesky(Mmat + ridge * np.eye(m)), ridge
                except np.linalg.LinAlgError:
                    ridge *= 100.0
            raise np.linalg.LinAlgError("schur factorization failed")

        try:
            L, ridge = factor(M, ridge)
        except np.linalg.LinAlgError:
            break

        def solve_M(rhs):
            return np.linalg.solve(L.T, np.linalg.solve(L, rhs))

        if k:
            MiD = solve_M(ws.D)
            S_free = ws.D.T @ MiD + 1e-13 * np.eye(k)

        def saddle(rhs1, rhs2):
            if k:
                t = solve_M(rhs1)
                du = np.linalg.solve(S_free, ws.D.T @ t - rhs2)
                dy = solve_M(rhs1 - ws.D @ du)
            else:
                du = np.zeros(0)
                dy = solve_M(rhs1)
            return dy, du

        def newton(F: list[np.ndarray]):
            """Linearized KKT solve for a centrality target F, with
            iterative refinement against residual creep in ill-conditioned
            late iterations."""
            rhs1 = r_p.copy()
            for bi in range(ws.nb):
                G = F[bi] - W[bi] @ R_d[bi] @ W[bi]
                rhs1 -= ws.E[bi] @ G.ravel()
            dy, du = saddle(rhs1, r_f)
            dZ: list[np.ndarray] = []
            dX: list[np.ndarray] = []

            def recompute_steps(dy_vec):
                dZ.clear()
                dX.clear()
                Atdy = ws.apply_At(dy_vec)
                for bi in range(ws.nb):
                    dZb = R_d[bi] - Atdy[bi]
                    dZb = 0.5 * (dZb + dZb.T)
                    dXb = F[bi] - W[bi] @ dZb @ W[bi]
                    dX.append(0.5 * (dXb + dXb.T))
                    dZ.append(dZb)

            recompute_steps(dy)
            for _ in range(2):
                res_p = r_p - ws.apply_A(dX) - (ws.D @ du if k else 0.0)
                res_f = (r_f - ws.D.T @ dy) if k else np.zeros(0)
                if np.abs(res_p).max(initial=0.0) <= 1e-13 * norm_b and \
                        np.abs(res_f).max(initial=0.0) <= 1e-13 * norm_c:
                    break
                cy, cu = saddle(res_p, res_f)
                dy = dy + cy
                du = du + cu
                recompute_steps(dy)
            return dX, du, dy, dZ

        # predictor (affine scaling) step
        F_aff = [-X[bi] for bi in range(ws.nb)]
        dX_aff, du_aff, dy_aff, dZ_aff = newton(F_aff)
        alpha_p = min(_max_step(X[bi], dX_aff[bi]) for bi in range(ws.nb))
        alpha_d = min(_max_step(Z[bi], dZ_aff[bi]) for bi in range(ws.nb))
        mu_aff = sum(
            float(np.tensordot(X[bi] + alpha_p * dX_aff[bi],
                               Z[bi] + alpha_d * dZ_aff[bi]))
            for bi in range(ws.nb)) / ws.total_dim
        sigma = min(1.0, max(1e-12, (max(mu_aff, 0.0) / mu) ** 3))

        # corrector in the scaled space
        F = []
        for bi in range(ws.nb):
            R, Rinv, lam = scal[bi]
            dXh = Rinv @ dX_aff[bi] @ Rinv.T
            dZh = R.T @ dZ_aff[bi] @ R
            corr = 0.5 * (dXh @ dZh + dZh @ dXh)
            E = sigma * mu * np.eye(len(lam)) - np.diag(lam ** 2) - corr
            denom = lam[:, None] + lam[None, :]
            S = 2.0 * E / denom
            F.append(R @ S @ R.T)
        dX, du, dy, dZ = newton(F)
        alpha_p = min(_max_step(X[bi], dX[bi]) for bi in range(ws.nb))
        alpha_d = min(_max_step(Z[bi], dZ[bi]) for bi in range(ws.nb))

        for bi in range(ws.nb):
            X[bi] = X[bi] + alpha_p * dX[bi]
            Z[bi] = Z[bi] + alpha_d * dZ[bi]
            X[bi] = 0.5 * (X[bi] + X[bi].T)
            Z[bi] = 0.5 * (Z[bi] + Z[bi].T)
        u = u + alpha_p * du
        y = y + alpha_d * dy

    eq_residual = float(np.linalg.norm(
        ws.b - ws.apply_A(X) - (ws.D @ u if k else 0.0), ord=np.inf))
    pobj = sum(float(np.tensordot(Cb, Xb))
               for Cb, Xb in zip(sdp.objective_blocks, X)) \
        + (float(sdp.free_objective @ u) if k else 0.0)
    dobj = float(ws.b @ y)
    comp = sum(float(np.tensordot(Xb, Zb)) for Xb, Zb in zip(X, Z))
    result = SdpResult(
        status=status,
        blocks=X, free=u, duals=y, dual_blocks=Z,
        primal_objective=pobj, dual_objective=dobj,
        gap=comp / (1.0 + abs(pobj) + abs(dobj)),
        equality_residual=eq_residual,
        iterations=iteration)
    if status == "solution":
        worst_eig = min(float(np.linalg.eigvalsh(Xb).min()) for Xb in X)
        if worst_eig < -1e-8 or eq_residual > 1e-8:
            result.status = "maxiter"
            logger.debug("posterior check failed: eig %.2e residual %.2e",
                         worst_eig, eq_residual)
    return result


def dump_sdpa_sparse(sdp: SemidefiniteProgram) -> str:
    """SDPA sparse text of the dual form, for external cross-checks.

    The dual  max b.y  s.t.  C - At(y) >= 0,  Dt y = c  maps onto the SDPA
    standard  min (-b).y  s.t.  sum y_i F_i - F0 >= 0  with F_i = -A_i and
    F0 = -C; free-variable equalities become a paired diagonal block.
    """
    m = len(sdp.equalities)
    k = sdp.num_free
    sizes = list(sdp.block_sizes)
    if k:
        sizes.append(-2 * k)  # negative marks a diagonal block
    lines = [f"{m}", f"{len(sizes)}", " ".join(str(s) for s in sizes),
             " ".join(repr(float(-row.rhs)) for row in sdp.equalities)]

    def emit(matno: int, blkno: int, mat: np.ndarray):
        for i in range(mat.shape[0]):
            for j in range(i, mat.shape[1]):
                if mat[i, j] != 0.0:
                    lines.append(
                        f"{matno} {blkno} {i + 1} {j + 1} {float(mat[i, j])!r}")

    for b, Cb in enumerate(sdp.objective_blocks):
        emit(0, b + 1, -Cb)  # F0 = -C
    if k:
        for j, cj in enumerate(sdp.free_objective):
            if cj != 0.0:
                cj = float(cj)
                lines.append(f"0 {len(sizes)} {j + 1} {j + 1} {cj!r}")
                lines.append(f"0 {len(sizes)} {k + j + 1} {k + j + 1} {-cj!r}")
    for i, row in enumerate(sdp.equalities):
        for b, mat in enumerate(row.blocks):
            if mat is not None:
                emit(i + 1, b + 1, -mat)
        if k:
            for j, dj in enumerate(row.free):
                if dj != 0.0:
                    dj = float(dj)
                    lines.append(f"{i + 1} {len(sizes)} {j + 1} {j + 1} {dj!r}")
                    lines.append(
                        f"{i + 1} {len(sizes)} {k + j + 1} {k + j + 1} {-dj!r}")
    return "\n".join(lines) + "\n"
