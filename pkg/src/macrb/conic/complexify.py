"""Real parametrizations of Hermitian matrices for the cone solver.

An n x n Hermitian matrix is coded as n^2 real parameters ordered as
[diagonal; Re upper off-diag (i < j, row-major); Im upper off-diag].  A
Hermitian PSD constraint becomes an LMI on the real symmetric embedding
[[Re H, -Im H], [Im H, Re H]], which is PSD exactly when H is.
"""

from __future__ import annotations

import numpy as np


def n_params(n: int) -> int:
    return n * n


_offdiag_cache: dict[int, tuple] = {}


def _offdiag(n: int):
    got = _offdiag_cache.get(n)
    if got is None:
        got = np.triu_indices(n, 1)
        _offdiag_cache[n] = got
    return got


def params_to_matrix(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (n * n,):
        raise ValueError(f"expected {n * n} parameters, got {p.shape}")
    i, j = _offdiag(n)
    k = i.shape[0]
    mat = np.zeros((n, n), dtype=complex)
    mat[np.arange(n), np.arange(n)] = p[:n]
    mat[i, j] = p[n:n + k] + 1j * p[n + k:]
    mat[j, i] = p[n:n + k] - 1j * p[n + k:]
    return mat


def matrix_to_params(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat)
    n = mat.shape[0]
    i, j = _offdiag(n)
    return np.concatenate([np.real(np.diagonal(mat)),
                           np.real(mat[i, j]), np.imag(mat[i, j])])


def herm_functional(f_mat: np.ndarray) -> np.ndarray:
    """Coefficients of tr(F W) as a linear map of the parameters of W.

    Requires F Hermitian, so the trace is real:
    tr(F W) = sum_i F_ii W_ii + sum_{i<j} 2 (Re F_ij Re W_ij + Im F_ij Im W_ij).
    """
    f_mat = np.asarray(f_mat)
    i, j = _offdiag(f_mat.shape[0])
    return np.concatenate([np.real(np.diagonal(f_mat)),
                           2.0 * np.real(f_mat[i, j]),
                           2.0 * np.imag(f_mat[i, j])])


def embed_hermitian(h_mat: np.ndarray) -> np.ndarray:
    re, im = np.real(h_mat), np.imag(h_mat)
    return np.block([[re, -im], [im, re]])


def embedding_basis(n: int) -> np.ndarray:
    """Stack of embeddings of the Hermitian parameter basis, shape (n^2, 2n, 2n)."""
    i, j = _offdiag(n)
    k = i.shape[0]
    out = np.zeros((n * n, 2 * n, 2 * n))
    for d in range(n):
        out[d] = embed_hermitian(np.eye(n)[:, [d]] @ np.eye(n)[[d], :])
    for t in range(k):
        b = np.zeros((n, n), dtype=complex)
        b[i[t], j[t]] = 1.0
        b[j[t], i[t]] = 1.0
        out[n + t] = embed_hermitian(b)
        b = np.zeros((n, n), dtype=complex)
        b[i[t], j[t]] = 1j
        b[j[t], i[t]] = -1j
        out[n + k + t] = embed_hermitian(b)
    return out
