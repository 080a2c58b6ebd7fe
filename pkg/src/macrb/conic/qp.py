"""Dense convex QP solver (inequality constrained) and a 2-D box maximizer.

    minimize    0.5 x' Q x + q' x
    subject to  G x <= h

Mehrotra predictor-corrector on the perturbed KKT conditions, with the
slack-scaled Schur complement Q + G' diag(z/s) G factored once per
iteration.  Infeasibility is reported through a Farkas-direction heuristic:
when the normalized dual iterate z satisfies G'z ~ 0 with h'z < 0, no
feasible point exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .report import (
    FAILED,
    INACCURATE,
    INFEASIBLE,
    MAX_ITER,
    OPTIMAL,
    SolveReport,
)


@dataclass(frozen=True, eq=False)
class QpProblem:
    q_mat: np.ndarray   # (n, n) symmetric PSD (zero for an LP)
    q_vec: np.ndarray   # (n,)
    g: np.ndarray       # (m, n)
    h: np.ndarray       # (m,)

    def __post_init__(self):
        q_mat = np.asarray(self.q_mat, dtype=float)
        q_vec = np.asarray(self.q_vec, dtype=float)
        g = np.atleast_2d(np.asarray(self.g, dtype=float))
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        n = q_vec.shape[0]
        if q_mat.shape != (n, n):
            raise ValueError("q_mat shape mismatch")
        if not np.allclose(q_mat, q_mat.T, atol=1e-10):
            raise ValueError("q_mat must be symmetric")
        if g.shape[1] != n or h.shape[0] != g.shape[0]:
            raise ValueError("constraint shapes inconsistent")
        for name, arr in (("q_mat", q_mat), ("q_vec", q_vec), ("g", g), ("h", h)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.q_vec.shape[0]

    @property
    def m(self) -> int:
        return self.g.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x)
        return float(0.5 * x @ self.q_mat @ x + self.q_vec @ x)


def _factor_schur(m_mat):
    scale = max(float(np.trace(m_mat)) / m_mat.shape[0], 1e-300)
    reg = 0.0
    for _ in range(10):
        try:
            return cho_factor(m_mat + reg * np.eye(m_mat.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            reg = max(10.0 * reg, 1e-13 * scale)
    raise np.linalg.LinAlgError("Schur complement factorization failed")


def solve_qp(problem: QpProblem, tol: float = 1e-9, tol_infeas: float = 1e-9,
             max_iter: int = 60, verbose: bool = False) -> SolveReport:
    q_mat, q_vec, g, h = problem.q_mat, problem.q_vec, problem.g, problem.h
    n, m = problem.n, problem.m

    x = np.zeros(n)
    s = np.maximum(1.0, np.abs(h))
    z = np.ones(m)

    report = SolveReport(status=MAX_ITER)
    best = None

    for it in range(max_iter):
        rd = q_mat @ x + q_vec + g.T @ z
        rp = g @ x + s - h
        mu = float(s @ z) / m
        obj = problem.objective(x)
        pres = np.linalg.norm(rp) / (1.0 + np.linalg.norm(h))
        dres = np.linalg.norm(rd) / (1.0 + np.linalg.norm(q_vec))
        gap = mu / (1.0 + abs(obj))
        report.mu_history.append(mu)
        report.res_history.append((pres, dres, gap))
        if verbose:
            print(f"  it {it:3d}  mu {mu:9.2e}  pres {pres:9.2e}  dres {dres:9.2e}")

        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, x.copy(), z.copy(), s.copy(), obj, pres, dres, gap, it)
        if pres <= tol and dres <= tol and gap <= tol:
            report.status = OPTIMAL
            best = (score, x.copy(), z.copy(), s.copy(), obj, pres, dres, gap, it)
            break

        # Farkas heuristic: normalized dual ray certifying G x <= h empty
        zn = float(np.linalg.norm(z))
        if zn > 1e3:
            zb = z / zn
            if (np.linalg.norm(g.T @ zb) <= tol_infeas * max(1.0, np.abs(g).max())
                    and h @ zb < -tol_infeas):
                report.status = INFEASIBLE
                report.certificate = zb
                report.iterations = it + 1
                return report

        zs = z / s
        m_mat = q_mat + (g.T * zs) @ g
        try:
            factors = _factor_schur(m_mat)
        except np.linalg.LinAlgError:
            report.status = FAILED
            report.message = "singular Schur complement"
            break

        def direction(d):
            rhs = -rd - g.T @ ((z * rp - d) / s)
            dx = cho_solve(factors, rhs)
            dz = (z * (g @ dx + rp) - d) / s
            ds = -(d + s * dz) / z
            return dx, dz, ds

        dx_a, dz_a, ds_a = direction(s * z)
        alpha_a = 1.0
        for vec, dvec in ((s, ds_a), (z, dz_a)):
            neg = dvec < 0
            if np.any(neg):
                alpha_a = min(alpha_a, float(np.min(-vec[neg] / dvec[neg])))
        mu_aff = float((s + alpha_a * ds_a) @ (z + alpha_a * dz_a)) / m
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))

        dx, dz, ds = direction(s * z + ds_a * dz_a - sigma * mu)
        alpha = np.inf
        for vec, dvec in ((s, ds), (z, dz)):
            neg = dvec < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-vec[neg] / dvec[neg])))
        alpha = min(1.0, 0.99 * alpha)

        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        report.iterations = it + 1

    _, xb, zb, sb, obj, pres, dres, gap, it_best = best
    report.x, report.z, report.s = xb, zb, sb
    report.obj = obj
    report.obj_dual = obj - float(sb @ zb)
    report.pres, report.dres, report.gap_rel = pres, dres, gap
    if report.status == OPTIMAL:
        report.iterations = it_best + 1
    elif report.status in (MAX_ITER, FAILED) and max(pres, dres, gap) <= 1e3 * tol:
        report.status = INACCURATE
    return report


def max_concave_quadratic_2d(q_mat, lin, lower, upper):
    """Exact maximizer of x' Q x + l' x over a 2-D box, Q symmetric NSD.

    Enumerates the interior stationary point, the four edge maxima, and the
    corners; for a concave objective the best candidate is globally optimal.
    Returns (x, value).
    """
    q_mat = np.asarray(q_mat, dtype=float)
    lin = np.asarray(lin, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if np.any(lo > hi):
        raise ValueError("empty box")

    def value(pt):
        return float(pt @ q_mat @ pt + lin @ pt)

    cands = [np.array([a, b]) for a in (lo[0], hi[0]) for b in (lo[1], hi[1])]
    # interior stationary point: 2 Q x = -l
    sol, *_ = np.linalg.lstsq(2.0 * q_mat, -lin, rcond=None)
    if (np.all(np.isfinite(sol))
            and np.allclose(2.0 * q_mat @ sol + lin, 0.0, atol=1e-9)
            and np.all(sol >= lo - 1e-12) and np.all(sol <= hi + 1e-12)):
        cands.append(np.clip(sol, lo, hi))
    # edge maxima: fix one coordinate, 1-D concave vertex in the other
    for fixed_axis in (0, 1):
        free = 1 - fixed_axis
        a = q_mat[free, free]
        if a < -1e-300:
            for cval in (lo[fixed_axis], hi[fixed_axis]):
                b = 2.0 * q_mat[free, fixed_axis] * cval + lin[free]
                t = np.clip(-b / (2.0 * a), lo[free], hi[free])
                pt = np.empty(2)
                pt[fixed_axis] = cval
                pt[free] = t
                cands.append(pt)
    vals = [value(p) for p in cands]
    k = int(np.argmax(vals))
    return cands[k], vals[k]
