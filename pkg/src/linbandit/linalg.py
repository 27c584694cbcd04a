"""Small dense symmetric PSD linear algebra.

Everything here takes and returns numpy arrays and never mutates its inputs.
Dimensions are tiny (d <= ~10), so all matrices are dense.
"""

from __future__ import annotations

import numpy as np

from .errors import Singular

RANK_TOL = 1e-10
SPD_TOL = 1e-12


def _as_matrix(G) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {G.shape}")
    return G


def _as_vector(x, d: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a vector, got shape {x.shape}")
    if d is not None and x.shape[0] != d:
        raise ValueError(f"dimension mismatch: vector has {x.shape[0]} entries, matrix is {d}x{d}")
    return x


def symmetrize(G) -> np.ndarray:
    G = _as_matrix(G)
    return 0.5 * (G + G.T)


def gram_accumulate(G, x) -> np.ndarray:
    """Return ``G + x x^T``."""
    G = _as_matrix(G)
    x = _as_vector(x, G.shape[0])
    return G + np.outer(x, x)


def gram_from_counts(arms, counts) -> np.ndarray:
    """``sum_x counts[x] * x x^T`` for an arm matrix of shape (k, d)."""
    arms = np.asarray(arms, dtype=float)
    counts = np.asarray(counts, dtype=float)
    return (arms * counts[:, None]).T @ arms


def psd_solve(G, b) -> np.ndarray:
    """Solve ``G v = b`` for symmetric positive definite ``G``.

    Cholesky first; if that fails the eigendecomposition decides whether the
    matrix is really singular (smallest eigenvalue <= 1e-12 * largest).
    """
    G = _as_matrix(G)
    b = _as_vector(b, G.shape[0])
    try:
        L = np.linalg.cholesky(G)
        lam_ok = np.min(np.diag(L)) ** 2 > SPD_TOL * np.max(np.diag(G))
    except np.linalg.LinAlgError:
        lam_ok = False
    if lam_ok:
        y = np.linalg.solve(L, b)
        return np.linalg.solve(L.T, y)
    w, V = np.linalg.eigh(symmetrize(G))
    if w[0] <= SPD_TOL * max(w[-1], 0.0) or w[-1] <= 0.0:
        raise Singular(f"matrix is not positive definite (eigenvalues {w[0]:.3g} .. {w[-1]:.3g})")
    return V @ ((V.T @ b) / w)


def is_invertible(G) -> bool:
    w = np.linalg.eigvalsh(symmetrize(G))
    return bool(w[-1] > 0.0 and w[0] > SPD_TOL * w[-1])


def psd_pseudo_inverse(H, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric PSD matrix.

    Eigenvalues below ``rank_tol * max_eigenvalue`` are treated as zero.
    """
    H = symmetrize(H)
    w, V = np.linalg.eigh(H)
    top = w[-1] if w.size else 0.0
    if top <= 0.0:
        return np.zeros_like(H)
    keep = w > rank_tol * top
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (V * inv) @ V.T


def quad_form_inv(G, x) -> float:
    """``x^T G^+ x`` (the plain inverse when G is nonsingular)."""
    G = _as_matrix(G)
    x = _as_vector(x, G.shape[0])
    if is_invertible(G):
        v = psd_solve(G, x)
    else:
        v = psd_pseudo_inverse(G) @ x
    return max(float(x @ v), 0.0)


def least_squares(G, s) -> np.ndarray:
    """Unregularised least squares estimate ``G^{-1} s``; raises Singular."""
    return psd_solve(G, s)
