"""Interior-point solver for linear cone programs over nonneg x PSD cones.

Problem form:

    minimize    c' x
    subject to  a_eq x = b_eq
                per cone group:  g x + s = h,  s in K

with K a product of a nonnegative orthant and PSD blocks (svec'd).  The
solver runs a Mehrotra predictor-corrector path following on the homogeneous
self-dual embedding, so primal/dual infeasibility come out as certificates
rather than divergence.  Constraint matrices are stored per cone group with
the global columns each group touches, and the Schur-complement assembly
exploits that locality; that is what keeps multi-block problems cheap.

Scaling: block-aware Ruiz equilibration (uniform row scale per PSD block,
per-row for the orthant), then a scalar normalization of the objective and
right-hand sides.  Termination measures are evaluated on the original,
unscaled data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .cones import (
    PsdScaling,
    cone_identity,
    jordan_product,
    jordan_solve_diag,
    max_step_nonneg,
    max_step_psd,
    smat,
    svec,
    svec_dim,
)
from .report import (
    FAILED,
    INACCURATE,
    INFEASIBLE,
    MAX_ITER,
    OPTIMAL,
    UNBOUNDED,
    SolveReport,
)

STEP_FRACTION = 0.99


@dataclass(frozen=True, eq=False)
class ConeGroup:
    """One slice of the cone constraint g x + s = h, s in K_group.

    kind 'nonneg': rows are scalar inequalities, dim = row count.
    kind 'psd': rows are the svec of a dim x dim block.
    cols maps local columns of g to global variable indices.
    """

    kind: str
    cols: np.ndarray
    g: np.ndarray
    h: np.ndarray
    dim: int

    def __post_init__(self):
        cols = np.asarray(self.cols, dtype=int)
        g = np.asarray(self.g, dtype=float)
        h = np.asarray(self.h, dtype=float)
        for name, arr in (("cols", cols), ("g", g), ("h", h)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.kind not in ("nonneg", "psd"):
            raise ValueError(f"unknown cone kind {self.kind!r}")
        rows = self.dim if self.kind == "nonneg" else svec_dim(self.dim)
        if g.shape != (rows, cols.shape[0]):
            raise ValueError(f"g must be ({rows}, {cols.shape[0]}), got {g.shape}")
        if h.shape != (rows,):
            raise ValueError(f"h must be ({rows},), got {h.shape}")
        if cols.shape[0] != np.unique(cols).shape[0]:
            raise ValueError("cols must not repeat")

    @property
    def rows(self) -> int:
        return self.g.shape[0]

    @property
    def barrier_degree(self) -> int:
        return self.dim


def nonneg_group(cols, coeffs, upper) -> ConeGroup:
    """Rows of scalar constraints coeffs x <= upper."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    return ConeGroup("nonneg", np.asarray(cols, dtype=int), coeffs, upper,
                     dim=coeffs.shape[0])


def lmi_group(cols, f_const, f_coeffs) -> ConeGroup:
    """Constraint f_const + sum_j x_cols[j] f_coeffs[j] psd."""
    f_coeffs = np.asarray(f_coeffs, dtype=float)
    nb = f_coeffs.shape[-1]
    g = -svec(f_coeffs).T            # (svec_dim, m)
    h = svec(np.asarray(f_const, dtype=float))
    return ConeGroup("psd", np.asarray(cols, dtype=int), g, h, dim=nb)


@dataclass(frozen=True, eq=False)
class SdpProblem:
    """Cone program data; see the module docstring for the sign conventions."""

    c: np.ndarray
    groups: tuple
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "groups", tuple(self.groups))
        n = c.shape[0]
        if not self.groups:
            raise ValueError("at least one cone group is required")
        for grp in self.groups:
            if np.any(grp.cols >= n) or np.any(grp.cols < 0):
                raise ValueError("group column index out of range")
        if (self.a_eq is None) != (self.b_eq is None):
            raise ValueError("a_eq and b_eq must be given together")
        if self.a_eq is not None:
            a = np.asarray(self.a_eq, dtype=float)
            b = np.asarray(self.b_eq, dtype=float)
            if a.ndim != 2 or a.shape[1] != n or b.shape != (a.shape[0],):
                raise ValueError("equality data shapes are inconsistent")
            a.setflags(write=False)
            b.setflags(write=False)
            object.__setattr__(self, "a_eq", a)
            object.__setattr__(self, "b_eq", b)

    @property
    def n(self) -> int:
        return self.c.shape[0]


class _Runtime:
    """Per-group mutable state: scaled data, svec offsets, cached bases."""

    def __init__(self, grp: ConeGroup, offset: int):
        self.kind = grp.kind
        self.dim = grp.dim
        self.cols = grp.cols
        self.g0 = grp.g
        self.h0 = grp.h
        self.g = grp.g.copy()
        self.h = grp.h.copy()
        self.offset = offset
        self.rows = grp.rows
        self.sl = slice(offset, offset + grp.rows)
        self.row_scale = np.ones(grp.rows) if grp.kind == "nonneg" else 1.0
        self.basis = None   # psd: (m, nb, nb) smat of scaled g columns

    def finalize(self):
        if self.kind == "psd":
            self.basis = smat(self.g.T, self.dim)


def _equilibrate(prob: SdpProblem, iters: int = 6):
    """Block-aware Ruiz scaling; returns runtimes, scaled eq data, diagonals."""
    n = prob.n
    rts = []
    off = 0
    for grp in prob.groups:
        rts.append(_Runtime(grp, off))
        off += grp.rows
    a = (np.zeros((0, n)) if prob.a_eq is None else prob.a_eq.copy())
    b = (np.zeros(0) if prob.b_eq is None else prob.b_eq.copy())
    dc = np.ones(n)
    de = np.ones(a.shape[0])
    for _ in range(iters):
        for rt in rts:
            mags = np.abs(rt.g)
            if rt.kind == "nonneg":
                rn = np.maximum(mags.max(axis=1, initial=0.0), np.abs(rt.h))
                f = 1.0 / np.sqrt(np.maximum(rn, 1e-12))
                f[rn <= 1e-300] = 1.0
                rt.g *= f[:, None]
                rt.h *= f
                rt.row_scale *= f
            else:
                rn = max(mags.max(initial=0.0), np.abs(rt.h).max(initial=0.0))
                f = 1.0 if rn <= 1e-300 else 1.0 / np.sqrt(max(rn, 1e-12))
                rt.g *= f
                rt.h *= f
                rt.row_scale *= f
        if a.size:
            rn = np.abs(a).max(axis=1, initial=0.0)
            f = 1.0 / np.sqrt(np.maximum(rn, 1e-12))
            f[rn <= 1e-300] = 1.0
            a *= f[:, None]
            b *= f
            de *= f
        cn = np.zeros(n)
        for rt in rts:
            if rt.g.size:
                np.maximum.at(cn, rt.cols, np.abs(rt.g).max(axis=0))
        if a.size:
            cn = np.maximum(cn, np.abs(a).max(axis=0))
        f = 1.0 / np.sqrt(np.maximum(cn, 1e-12))
        f[cn <= 1e-300] = 1.0
        for rt in rts:
            rt.g *= f[rt.cols][None, :]
        if a.size:
            a *= f[None, :]
        dc *= f
    for rt in rts:
        rt.finalize()
    return rts, a, b, dc, de


class _Hsde:
    """Solver state for one homogeneous self-dual solve."""

    def __init__(self, prob: SdpProblem, tol, tol_infeas, max_iter):
        self.prob = prob
        self.tol = tol
        self.tol_infeas = tol_infeas
        self.max_iter = max_iter
        self.n = prob.n
        rts, a, b, dc, de = _equilibrate(prob)
        self.rts = rts
        self.m = sum(rt.rows for rt in rts)
        self.a = a
        self.p = a.shape[0]
        self.dc = dc
        self.de = de
        c_scaled = prob.c * dc
        c_norm = float(np.linalg.norm(c_scaled))
        self.gamma_c = c_norm if c_norm > 1e-10 else 1.0
        self.c = c_scaled / self.gamma_c
        h_norm = np.linalg.norm(np.concatenate([rt.h for rt in rts]))
        rhs_norm = max(float(np.linalg.norm(b)), float(h_norm))
        self.gamma_r = rhs_norm if rhs_norm > 1e-10 else 1.0
        self.b = b / self.gamma_r
        self.h = np.concatenate([rt.h for rt in rts]) / self.gamma_r
        for rt in rts:
            rt.h = self.h[rt.sl]
        self.identity = self._assemble_identity()
        self.nu = sum(rt.rows if rt.kind == "nonneg" else rt.dim for rt in rts)

    def _assemble_identity(self):
        e = np.zeros(self.m)
        for rt in self.rts:
            if rt.kind == "nonneg":
                e[rt.sl] = 1.0
            else:
                e[rt.sl] = svec(np.eye(rt.dim))
        return e

    # structured matvecs (scaled data)

    def gx(self, x):
        out = np.zeros(self.m)
        for rt in self.rts:
            out[rt.sl] = rt.g @ x[rt.cols]
        return out

    def gtz(self, z):
        out = np.zeros(self.n)
        for rt in self.rts:
            out[rt.cols] += rt.g.T @ z[rt.sl]
        return out

    def gx0(self, x):
        out = np.zeros(self.m)
        for rt in self.rts:
            out[rt.sl] = rt.g0 @ x[rt.cols]
        return out

    def gtz0(self, z):
        out = np.zeros(self.n)
        for rt in self.rts:
            out[rt.cols] += rt.g0.T @ z[rt.sl]
        return out

    # scaling-dependent cone operations

    def nt_scalings(self, s, z):
        scalings = []
        for rt in self.rts:
            if rt.kind == "nonneg":
                sv, zv = s[rt.sl], z[rt.sl]
                w = np.sqrt(sv / zv)
                scalings.append((w, np.sqrt(sv * zv)))
            else:
                scalings.append(PsdScaling(smat(s[rt.sl], rt.dim),
                                           smat(z[rt.sl], rt.dim)))
        return scalings

    def scale_s_dir(self, scalings, ds):
        out = np.zeros(self.m)
        for rt, sc in zip(self.rts, scalings):
            if rt.kind == "nonneg":
                out[rt.sl] = ds[rt.sl] / sc[0]
            else:
                out[rt.sl] = svec(sc.scale_s(smat(ds[rt.sl], rt.dim)))
        return out

    def scale_z_dir(self, scalings, dz):
        out = np.zeros(self.m)
        for rt, sc in zip(self.rts, scalings):
            if rt.kind == "nonneg":
                out[rt.sl] = dz[rt.sl] * sc[0]
            else:
                out[rt.sl] = svec(sc.scale_z(smat(dz[rt.sl], rt.dim)))
        return out

    def lam_jordan_square(self, scalings):
        out = np.zeros(self.m)
        for rt, sc in zip(self.rts, scalings):
            if rt.kind == "nonneg":
                out[rt.sl] = sc[1] ** 2
            else:
                out[rt.sl] = svec(np.diag(sc.lam ** 2))
        return out

    def lam_vec(self, scalings):
        out = np.zeros(self.m)
        for rt, sc in zip(self.rts, scalings):
            if rt.kind == "nonneg":
                out[rt.sl] = sc[1]
            else:
                out[rt.sl] = svec(np.diag(sc.lam))
        return out

    def jordan(self, u, v):
        out = np.zeros(self.m)
        for rt in self.rts:
            if rt.kind == "nonneg":
                out[rt.sl] = u[rt.sl] * v[rt.sl]
            else:
                out[rt.sl] = svec(jordan_product(smat(u[rt.sl], rt.dim),
                                                 smat(v[rt.sl], rt.dim)))
        return out

    def lam_solve(self, scalings, d):
        out = np.zeros(self.m)
        for rt, sc in zip(self.rts, scalings):
            if rt.kind == "nonneg":
                out[rt.sl] = d[rt.sl] / sc[1]
            else:
                out[rt.sl] = svec(jordan_solve_diag(sc.lam, smat(d[rt.sl], rt.dim)))
        return out

    def apply_wt(self, scalings, u):
        out = np.zeros(self.m)
        for rt, sc in zip(self.rts, scalings):
            if rt.kind == "nonneg":
                out[rt.sl] = u[rt.sl] * sc[0]
            else:
                out[rt.sl] = svec(sc.unscale_dual(smat(u[rt.sl], rt.dim)))
        return out

    def quad_inverse(self, scalings, u):
        out = np.zeros(self.m)
        for rt, sc in zip(self.rts, scalings):
            if rt.kind == "nonneg":
                out[rt.sl] = u[rt.sl] / sc[0] ** 2
            else:
                out[rt.sl] = svec(sc.quad_inverse(smat(u[rt.sl], rt.dim)))
        return out

    def max_step(self, scalings, direction):
        alpha = np.inf
        for rt, sc in zip(self.rts, scalings):
            if rt.kind == "nonneg":
                alpha = min(alpha, max_step_nonneg(sc[1], direction[rt.sl]))
            else:
                alpha = min(alpha, max_step_psd(sc.lam, smat(direction[rt.sl], rt.dim)))
        return alpha

    # KKT machinery

    def factor_kkt(self, scalings):
        n, p = self.n, self.p
        hmat = np.zeros((n, n))
        ghats = []
        for rt, sc in zip(self.rts, scalings):
            if rt.kind == "nonneg":
                inv_w2 = 1.0 / sc[0] ** 2
                loc = rt.g.T @ (rt.g * inv_w2[:, None])
                ghats.append(None)
            else:
                transformed = np.einsum("ij,mjk,lk->mil", sc.r_inv, rt.basis,
                                        sc.r_inv, optimize=True)
                ghat = svec(transformed)           # (m_loc, svec_dim)
                ghats.append(ghat)
                loc = ghat @ ghat.T
            hmat[np.ix_(rt.cols, rt.cols)] += loc
        kkt = np.zeros((n + p, n + p))
        kkt[:n, :n] = hmat
        if p:
            kkt[:n, n:] = self.a.T
            kkt[n:, :n] = self.a
        scale = max(np.trace(hmat) / n, 1e-30)
        reg = 0.0
        for _ in range(8):
            mat = kkt.copy()
            if reg:
                mat[:n, :n] += reg * np.eye(n)
                if p:
                    mat[n:, n:] -= reg * np.eye(p)
            try:
                factors = lu_factor(mat, check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                reg = max(10.0 * reg, 1e-12 * scale)
                continue
            udiag = np.abs(np.diagonal(factors[0]))
            if np.all(np.isfinite(factors[0])) and udiag.min() > 1e-15 * max(
                    udiag.max(), 1e-30):
                return (factors, kkt), ghats
            reg = max(10.0 * reg, 1e-12 * scale)
        raise np.linalg.LinAlgError("KKT factorization failed")

    @staticmethod
    def _refined_solve(factors, rhs):
        """LU solve plus iterative refinement against the exact matrix.

        The Schur complement squares the scaling's condition number, so a
        bare LU loses digits exactly when the iterates approach the optimum;
        two refinement rounds restore them."""
        lu, kkt0 = factors
        sol = lu_solve(lu, rhs)
        rhs_norm = float(np.linalg.norm(rhs))
        for _ in range(2):
            resid = rhs - kkt0 @ sol
            if float(np.linalg.norm(resid)) <= 1e-14 * max(rhs_norm, 1e-300):
                break
            sol = sol + lu_solve(lu, resid)
        return sol

    def gt_quadinv(self, scalings, ghats, u):
        """G' (W'W)^{-1} u, exploiting the cached scaled bases."""
        out = np.zeros(self.n)
        for rt, sc, ghat in zip(self.rts, scalings, ghats):
            if rt.kind == "nonneg":
                out[rt.cols] += rt.g.T @ (u[rt.sl] / sc[0] ** 2)
            else:
                tu = svec(sc.r_inv @ smat(u[rt.sl], rt.dim) @ sc.r_inv.T)
                out[rt.cols] += ghat @ tu
        return out

    def kkt_solve(self, factors, scalings, ghats, bx, by, bz):
        rhs = np.concatenate([bx + self.gt_quadinv(scalings, ghats, bz), by])
        sol = self._refined_solve(factors, rhs)
        ux, uy = sol[:self.n], sol[self.n:]
        uz = self.quad_inverse(scalings, self.gx(ux) - bz)
        return ux, uy, uz

    # candidate recovery and termination measures (original data)

    def unscaled_point(self, x, y, z, s, tau):
        xo = self.dc * x * self.gamma_r / tau
        yo = self.de * y * self.gamma_c / tau
        zo = np.zeros(self.m)
        so = np.zeros(self.m)
        for rt in self.rts:
            zo[rt.sl] = rt.row_scale * z[rt.sl] * self.gamma_c / tau
            so[rt.sl] = s[rt.sl] / rt.row_scale * self.gamma_r / tau
        return xo, yo, zo, so

    def scaled_warm_point(self, warm, blend: float):
        """Map an original-space point into solver coordinates and center it.

        The incoming cone points sit on the boundary (they come from a finished
        solve), so each block is pulled `blend` of the way toward a multiple of
        the cone identity sized by its own trace mean, which restores strict
        interiority without destroying the information in the point.
        """
        xo, yo, zo, so = (np.asarray(v, dtype=float) for v in warm)
        if (xo.shape != (self.n,) or yo.shape != (self.p,)
                or zo.shape != (self.m,) or so.shape != (self.m,)):
            raise ValueError("warm point has wrong dimensions")
        x = xo / (self.dc * self.gamma_r)
        y = yo / (self.de * self.gamma_c) if self.p else np.zeros(0)
        z = np.zeros(self.m)
        s = np.zeros(self.m)
        e = self.identity
        for rt in self.rts:
            sl = rt.sl
            z[sl] = zo[sl] / (rt.row_scale * self.gamma_c)
            s[sl] = so[sl] * rt.row_scale / self.gamma_r
            dim = rt.rows if rt.kind == "nonneg" else rt.dim
            s_mean = max(float(s[sl] @ e[sl]) / dim, 1e-10)
            z_mean = max(float(z[sl] @ e[sl]) / dim, 1e-10)
            s[sl] = (1.0 - blend) * s[sl] + blend * s_mean * e[sl]
            z[sl] = (1.0 - blend) * z[sl] + blend * z_mean * e[sl]
        if not all(np.all(np.isfinite(v)) for v in (x, y, z, s)):
            raise ValueError("warm point is not finite")
        return x, y, z, s

    def measures(self, xo, yo, zo, so):
        prob = self.prob
        c0 = prob.c
        b0 = prob.b_eq if prob.b_eq is not None else np.zeros(0)
        a0 = prob.a_eq if prob.a_eq is not None else np.zeros((0, self.n))
        h0 = np.concatenate([rt.h0 for rt in self.rts])
        pres_eq = 0.0
        if b0.size:
            pres_eq = np.linalg.norm(a0 @ xo - b0) / (1.0 + np.linalg.norm(b0))
        pres_cone = np.linalg.norm(self.gx0(xo) + so - h0) / (1.0 + np.linalg.norm(h0))
        pres = max(pres_eq, pres_cone)
        dres = np.linalg.norm((a0.T @ yo if b0.size else 0.0)
                              + self.gtz0(zo) + c0) / (1.0 + np.linalg.norm(c0))
        pcost = float(c0 @ xo)
        dcost = -float(b0 @ yo) - float(h0 @ zo)
        gap = abs(pcost - dcost) / (1.0 + abs(pcost) + abs(dcost))
        return pres, dres, gap, pcost, dcost


def solve_sdp(problem: SdpProblem, tol: float = 1e-8, tol_infeas: float = 1e-8,
              max_iter: int = 100, verbose: bool = False,
              warm=None, warm_blend: float = 0.1) -> SolveReport:
    """Solve the cone program; see the module docstring for conventions.

    `warm` takes a previous solve's (x, y, z, s) in original coordinates and
    restarts the path near it, which pays off when a sequence of nearly
    identical problems is solved (an unusable point falls back to the cold
    start).  The result is the same optimum either way, in fewer iterations.
    """
    st = _Hsde(problem, tol, tol_infeas, max_iter)
    n, p, m = st.n, st.p, st.m

    x = np.zeros(n)
    y = np.zeros(p)
    s = st.identity.copy()
    z = st.identity.copy()
    tau, kappa = 1.0, 1.0
    if warm is not None:
        try:
            x, y, z, s = st.scaled_warm_point(warm, warm_blend)
            kappa = max(float(s @ z) / st.nu, 1e-10)
        except ValueError:
            x, y = np.zeros(n), np.zeros(p)
            s, z = st.identity.copy(), st.identity.copy()
            kappa = 1.0

    report = SolveReport(status=MAX_ITER)
    best = None
    small_steps = 0
    mark_score, mark_it = np.inf, -1
    h0 = np.concatenate([rt.h0 for rt in st.rts])
    a0 = problem.a_eq if problem.a_eq is not None else np.zeros((0, n))
    b0 = problem.b_eq if problem.b_eq is not None else np.zeros(0)
    rhs0 = max(1.0, float(np.linalg.norm(b0)), float(np.linalg.norm(h0)))

    for it in range(st.max_iter):
        rx = (st.a.T @ y if p else 0.0) + st.gtz(z) + st.c * tau
        ry = st.a @ x - st.b * tau
        rz = st.gx(x) + s - st.h * tau
        rtau = kappa + float(st.c @ x) + float(st.b @ y) + float(st.h @ z)
        gap_inner = float(s @ z)
        mu = (gap_inner + tau * kappa) / (st.nu + 1)

        xo, yo, zo, so = st.unscaled_point(x, y, z, s, tau)
        pres, dres, gap, pcost, dcost = st.measures(xo, yo, zo, so)
        report.mu_history.append(mu)
        report.res_history.append((pres, dres, gap))
        if verbose:
            print(f"  it {it:3d}  mu {mu:9.2e}  pres {pres:9.2e} "
                  f"dres {dres:9.2e}  gap {gap:9.2e}  tau {tau:8.2e}")

        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, xo, yo, zo, so, pcost, dcost, pres, dres, gap, it)

        if pres <= st.tol and dres <= st.tol and gap <= st.tol:
            report.status = OPTIMAL
            best = (score, xo, yo, zo, so, pcost, dcost, pres, dres, gap, it)
            break

        # near machine precision the directions stop being descent-like and
        # the iterates orbit the optimum; once the best score has gone eight
        # iterations without a tangible improvement, keep the best iterate
        if best[0] < 0.9 * mark_score:
            mark_score, mark_it = best[0], it
        elif it - mark_it >= 8:
            report.message = "progress stalled; returning best iterate"
            report.iterations = it + 1
            break

        # infeasibility certificates on the unscaled data
        y_c = st.de * y * st.gamma_c
        z_c = np.zeros(m)
        x_c = st.dc * x * st.gamma_r
        s_c = np.zeros(m)
        for rt in st.rts:
            z_c[rt.sl] = rt.row_scale * z[rt.sl] * st.gamma_c
            s_c[rt.sl] = s[rt.sl] / rt.row_scale * st.gamma_r
        infeas_gap = -(float(b0 @ y_c) + float(h0 @ z_c))
        if infeas_gap > 0:
            res = np.linalg.norm((a0.T @ (y_c / infeas_gap) if p else 0.0)
                                 + st.gtz0(z_c / infeas_gap))
            if res <= st.tol_infeas * rhs0:
                report.status = INFEASIBLE
                report.certificate = np.concatenate([y_c, z_c]) / infeas_gap
                report.message = "primal infeasibility certificate found"
                report.iterations = it + 1
                return report
        unbnd_gap = -float(problem.c @ x_c)
        if unbnd_gap > 0:
            res = max(float(np.linalg.norm(a0 @ (x_c / unbnd_gap))) if p else 0.0,
                      float(np.linalg.norm(st.gx0(x_c / unbnd_gap)
                                           + s_c / unbnd_gap)))
            if res <= st.tol_infeas * max(1.0, float(np.linalg.norm(problem.c))):
                report.status = UNBOUNDED
                report.certificate = x_c / unbnd_gap
                report.message = "dual infeasibility certificate found"
                report.iterations = it + 1
                return report

        try:
            scalings = st.nt_scalings(s, z)
        except np.linalg.LinAlgError:
            # roundoff pushed the iterate out of the cone; keep the best point
            report.status = FAILED
            report.message = "iterate left the cone"
            report.iterations = it + 1
            break
        try:
            factors, ghats = st.factor_kkt(scalings)
        except np.linalg.LinAlgError:
            report.status = FAILED
            report.message = "singular KKT system"
            break

        sol2 = st.kkt_solve(factors, scalings, ghats, -st.c, st.b, st.h)
        den = (float(st.c @ sol2[0]) + float(st.b @ sol2[1])
               + float(st.h @ sol2[2]) - kappa / tau)
        lam_vec = st.lam_vec(scalings)

        def newton_core(qx, qy, qz, qtau, qs, qkap):
            # one elimination pass for the Newton system with rhs q
            u = st.lam_solve(scalings, qs)
            wtu = st.apply_wt(scalings, u)
            sol1 = st.kkt_solve(factors, scalings, ghats, qx, qy, qz - wtu)
            num = (qtau - qkap / tau
                   - float(st.c @ sol1[0]) - float(st.b @ sol1[1])
                   - float(st.h @ sol1[2]))
            dtau = num / den if abs(den) > 1e-300 else 0.0
            dx = sol1[0] + dtau * sol2[0]
            dy = sol1[1] + dtau * sol2[1]
            dz = sol1[2] + dtau * sol2[2]
            # recover ds from the cone-constraint row, which it then satisfies
            # exactly; the complementarity row absorbs the elimination error
            # and the refinement passes below mop it up
            ds = qz - st.gx(dx) + st.h * dtau
            dkap = (qkap - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkap

        def newton_residuals(d, qx, qy, qz, qtau, qs, qkap):
            dx, dy, dz, ds, dtau, dkap = d
            fx = qx - ((st.a.T @ dy if p else 0.0) + st.gtz(dz) + st.c * dtau)
            fy = qy - (st.a @ dx - st.b * dtau)
            fz = qz - (st.gx(dx) + ds - st.h * dtau)
            ftau = qtau - (float(st.c @ dx) + float(st.b @ dy)
                           + float(st.h @ dz) + dkap)
            bar = st.scale_z_dir(scalings, dz) + st.scale_s_dir(scalings, ds)
            fs = qs - st.jordan(lam_vec, bar)
            fkap = qkap - (tau * dkap + kappa * dtau)
            return fx, fy, np.asarray(fz), np.array([ftau]), fs, np.array([fkap])

        def direction(d_s, d_kappa):
            # The Schur elimination squares the scaling's condition number, so
            # near the optimum a single pass loses most of its digits.  Refine
            # against the full Newton system (all six rows), reusing the
            # factorization; stop when stagnant.
            q = (-rx, -ry, -rz, -rtau, -d_s, -d_kappa)
            cur = newton_core(*q)
            best_dir, best_err, prev = cur, np.inf, np.inf
            for _ in range(4):
                f = newton_residuals(cur, *q)
                err = max(float(np.linalg.norm(v)) for v in f)
                if err < best_err:
                    best_dir, best_err = cur, err
                if err <= 1e-13 or err >= 0.5 * prev:
                    break
                prev = err
                corr = newton_core(f[0], f[1], f[2], float(f[3][0]),
                                   f[4], float(f[5][0]))
                cur = tuple(a + b for a, b in zip(cur, corr))
            return best_dir

        lam_sq = st.lam_jordan_square(scalings)

        # predictor
        dxa, dya, dza, dsa, dtaua, dkapa = direction(lam_sq, tau * kappa)
        ds_bar = st.scale_s_dir(scalings, dsa)
        dz_bar = st.scale_z_dir(scalings, dza)
        alpha = min(st.max_step(scalings, ds_bar),
                    st.max_step(scalings, dz_bar))
        if dtaua < 0:
            alpha = min(alpha, -tau / dtaua)
        if dkapa < 0:
            alpha = min(alpha, -kappa / dkapa)
        alpha = min(1.0, STEP_FRACTION * alpha)
        mu_aff = (float((s + alpha * dsa) @ (z + alpha * dza))
                  + (tau + alpha * dtaua) * (kappa + alpha * dkapa)) / (st.nu + 1)
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))

        # corrector
        d_s = lam_sq + st.jordan(ds_bar, dz_bar) - sigma * mu * st.identity
        d_kappa = tau * kappa + dtaua * dkapa - sigma * mu
        dx, dy, dz, ds, dtau, dkap = direction(d_s, d_kappa)
        ds_bar = st.scale_s_dir(scalings, ds)
        dz_bar = st.scale_z_dir(scalings, dz)
        alpha = min(st.max_step(scalings, ds_bar),
                    st.max_step(scalings, dz_bar))
        if dtau < 0:
            alpha = min(alpha, -tau / dtau)
        if dkap < 0:
            alpha = min(alpha, -kappa / dkap)
        alpha = min(1.0, STEP_FRACTION * alpha)
        small_steps = small_steps + 1 if alpha < 1e-7 else 0
        if small_steps >= 2:
            report.message = "step length collapsed"
            report.iterations = it + 1
            break

        x += alpha * dx
        y += alpha * dy
        z += alpha * dz
        s += alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkap
        report.iterations = it + 1
    else:
        report.status = MAX_ITER

    _, xo, yo, zo, so, pcost, dcost, pres, dres, gap, it_best = best
    report.x, report.y, report.z, report.s = xo, yo, zo, so
    report.obj, report.obj_dual = pcost, dcost
    report.pres, report.dres, report.gap_rel = pres, dres, gap
    if report.status == OPTIMAL:
        report.iterations = it_best + 1
    elif report.status in (MAX_ITER, FAILED):
        if max(pres, dres, gap) <= 1e3 * st.tol:
            report.status = INACCURATE
            report.message = "terminated near tolerance"
    return report
