"""Symmetric-cone primitives for the interior-point solvers.

The product cone is a nonnegative orthant times a list of PSD blocks.  PSD
blocks travel in scaled vectorization (svec): column stacking of the lower
triangle with off-diagonal entries multiplied by sqrt(2), which makes the
euclidean dot product of two svecs equal the trace inner product of the
matrices.
"""

from __future__ import annotations

import numpy as np

_SQRT2 = np.sqrt(2.0)
_tri_cache: dict[int, tuple] = {}


def _tri(n: int):
    """Cached lower-triangle indices and svec scale factors for dimension n."""
    got = _tri_cache.get(n)
    if got is None:
        rows, cols = np.tril_indices(n)
        scale = np.where(rows == cols, 1.0, _SQRT2)
        got = (rows, cols, scale)
        _tri_cache[n] = got
    return got


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def svec(mat: np.ndarray) -> np.ndarray:
    """Scaled vectorization of a symmetric matrix (or a stack of them)."""
    n = mat.shape[-1]
    rows, cols, scale = _tri(n)
    return mat[..., rows, cols] * scale


def smat(vec: np.ndarray, n: int) -> np.ndarray:
    """Inverse of svec; accepts a stack of vectors in the leading axes."""
    rows, cols, scale = _tri(n)
    out = np.zeros(vec.shape[:-1] + (n, n))
    out[..., rows, cols] = vec / scale
    out[..., cols, rows] = out[..., rows, cols]
    return out


def cone_identity(nonneg: int, psd_dims: list[int]) -> np.ndarray:
    parts = [np.ones(nonneg)] if nonneg else []
    parts.extend(svec(np.eye(nb)) for nb in psd_dims)
    return np.concatenate(parts) if parts else np.zeros(0)


def _chol_with_jitter(mat: np.ndarray) -> np.ndarray:
    """Cholesky factor, nudging the diagonal when the matrix has gone
    numerically indefinite near convergence."""
    jitter = 0.0
    scale = max(float(np.trace(mat)) / mat.shape[0], 1e-300)
    for _ in range(12):
        try:
            return np.linalg.cholesky(mat + jitter * np.eye(mat.shape[0]))
        except np.linalg.LinAlgError:
            jitter = max(10.0 * jitter, 1e-14 * scale)
    raise np.linalg.LinAlgError("matrix not positive definite even after jitter")


class PsdScaling:
    """Nesterov-Todd scaling point of a PSD block.

    Built from the Cholesky factors of s = L1 L1^T and z = L2 L2^T via the
    SVD L2^T L1 = U diag(lam) V^T:

        r     = L1 V diag(lam)^(-1/2)
        r_inv = diag(lam)^(-1/2) U^T L2^T

    The scaling maps z -> r^T Z r and s -> r^{-1} S r^{-T}, both of which
    land on diag(lam) at the current point.
    """

    __slots__ = ("r", "r_inv", "lam")

    def __init__(self, s_mat: np.ndarray, z_mat: np.ndarray):
        l1 = _chol_with_jitter(s_mat)
        l2 = _chol_with_jitter(z_mat)
        u, lam, vt = np.linalg.svd(l2.T @ l1)
        lam = np.maximum(lam, 1e-150)
        root = np.sqrt(lam)
        self.r = (l1 @ vt.T) / root
        self.r_inv = (u / root).T @ l2.T
        self.lam = lam

    def scale_z(self, z_mat: np.ndarray) -> np.ndarray:
        return self.r.T @ z_mat @ self.r

    def scale_s(self, s_mat: np.ndarray) -> np.ndarray:
        return self.r_inv @ s_mat @ self.r_inv.T

    def unscale_dual(self, u_mat: np.ndarray) -> np.ndarray:
        """Adjoint application W^T u = r U r^T (matrix form)."""
        return self.r @ u_mat @ self.r.T

    def quad_inverse(self, u_mat: np.ndarray) -> np.ndarray:
        """(W^T W)^{-1} u = r^{-T} (r^{-1} U r^{-T}) r^{-1}."""
        inner = self.r_inv @ u_mat @ self.r_inv.T
        return self.r_inv.T @ inner @ self.r_inv


def jordan_product(u_mat: np.ndarray, v_mat: np.ndarray) -> np.ndarray:
    """Symmetrized matrix product, the Jordan product of the PSD algebra."""
    p = u_mat @ v_mat
    return (p + p.T) / 2.0


def jordan_solve_diag(lam: np.ndarray, d_mat: np.ndarray) -> np.ndarray:
    """Solve diag(lam) o U = D for U: entries 2 d_ij / (lam_i + lam_j)."""
    return 2.0 * d_mat / np.add.outer(lam, lam)


def max_step_nonneg(lam: np.ndarray, delta: np.ndarray) -> float:
    """Largest alpha with lam + alpha * delta >= 0 (inf when delta >= 0)."""
    neg = delta < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-lam[neg] / delta[neg]))


def max_step_psd(lam: np.ndarray, delta_mat: np.ndarray) -> float:
    """Largest alpha with diag(lam) + alpha * Delta psd."""
    root = np.sqrt(lam)
    m = delta_mat / np.outer(root, root)
    lo = float(np.linalg.eigvalsh(m)[0])
    if lo >= 0.0:
        return np.inf
    return 1.0 / (-lo)
