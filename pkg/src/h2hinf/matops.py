"""Vectorization and Kronecker-product helpers shared by every solver.

Conventions: ``vec`` stacks columns; ``svec`` walks the upper triangle row by
row ([p11, p12, ..., p1n, p22, ..., pnn]) with no off-diagonal weighting, so
``smat(svec(P)) == P`` holds bit-exactly.  The factor-2 bookkeeping for
quadratic forms lives in :func:`quad_basis` / :func:`quad_dual`.
"""

from __future__ import annotations

import numpy as np

SYM_TOL = 1e-10


def vec(m: np.ndarray) -> np.ndarray:
    """Stack the columns of ``m`` into a single vector."""
    m = np.asarray(m, dtype=float)
    return m.reshape(-1, order="F").copy()


def mat(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec` for a ``rows x cols`` matrix."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape length-{v.size} vector to {rows}x{cols}")
    return v.reshape(rows, cols, order="F").copy()


def _triangular_dim(length: int) -> int:
    n = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if n * (n + 1) // 2 != length:
        raise ValueError(f"length {length} is not a triangular number")
    return n


def svec(p: np.ndarray, tol: float = SYM_TOL) -> np.ndarray:
    """Half-vectorize a symmetric matrix (row-wise upper triangle)."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("svec expects a square matrix")
    if p.size and np.max(np.abs(p - p.T)) > tol:
        raise ValueError("svec expects a symmetric matrix")
    return p[np.triu_indices(p.shape[0])].copy()


def smat(v: np.ndarray) -> np.ndarray:
    """Symmetric matricization, the exact inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float).ravel()
    n = _triangular_dim(v.size)
    out = np.zeros((n, n))
    iu = np.triu_indices(n)
    out[iu] = v
    out.T[iu] = v
    return out


def vecv(x: np.ndarray) -> np.ndarray:
    """vec of the outer product ``x xᵀ`` (length n²)."""
    x = np.asarray(x, dtype=float).ravel()
    return vec(np.outer(x, x))


def quad_basis(x: np.ndarray) -> np.ndarray:
    """svec-ordered quadratic features with doubled cross terms.

    Satisfies ``quad_basis(x) @ svec(P) == x @ P @ x`` for symmetric ``P``.
    """
    x = np.asarray(x, dtype=float).ravel()
    g = 2.0 * np.outer(x, x)
    g[np.diag_indices(x.size)] *= 0.5
    return g[np.triu_indices(x.size)].copy()


def quad_dual(m: np.ndarray) -> np.ndarray:
    """svec-ordered Frobenius dual of a (not necessarily symmetric) matrix.

    Satisfies ``quad_dual(M) @ svec(P) == trace(P @ M)`` for symmetric ``P``;
    in particular ``quad_dual(outer(x, x)) == quad_basis(x)``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("quad_dual expects a square matrix")
    s = m + m.T
    s[np.diag_indices(m.shape[0])] *= 0.5
    return s[np.triu_indices(m.shape[0])].copy()


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, the block matrix ``[a_ij * b]``."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def tvec_permutation(m: int, n: int) -> np.ndarray:
    """Permutation ``T`` with ``T @ vec(A) == vec(Aᵀ)`` for any m-by-n ``A``."""
    t = np.zeros((m * n, m * n))
    for i in range(m):
        for j in range(n):
            t[j + i * n, i + j * m] = 1.0
    return t
