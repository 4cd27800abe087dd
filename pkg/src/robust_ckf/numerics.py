"""Dense linear-algebra kernels and covariance safety utilities.

Matrices are plain ``numpy`` float64 arrays. Dimensions in this package are
small (a handful of states), so nothing here is blocked or sparse.
"""

import numpy as np

SPD_FLOOR = 1e-9


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a matrix that must be SPD cannot be Cholesky-factorized."""


class LengthMismatch(ValueError):
    """Raised when paired sequences have different lengths."""


def symmetrize(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return 0.5 * (m + m.T)


def cholesky_factor(m):
    """Lower-triangular ``S`` with ``m = S @ S.T``.

    Raises:
        NotPositiveDefinite: if ``m`` is not numerically positive definite.
            Callers are expected to run :func:`spd_project` first.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def spd_project(m, floor=SPD_FLOOR):
    """Symmetrize ``m`` and lift every eigenvalue below ``floor`` up to ``floor``.

    Matrices whose spectrum already clears the floor are returned symmetrized
    but otherwise untouched, so the projection is idempotent.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    s = symmetrize(m)
    if not np.all(np.isfinite(s)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    if s.shape == (1, 1):
        return np.maximum(s, floor)
    if np.linalg.eigvalsh(s)[0] >= floor:
        return s
    w, v = np.linalg.eigh(s)
    # clamp a few ulps above the floor so reconstruction round-off cannot dip below it
    slack = 16 * np.finfo(float).eps * max(np.abs(w).max(), floor)
    out = symmetrize((v * np.maximum(w, floor + slack)) @ v.T)
    eye = np.eye(out.shape[0])
    for _ in range(4):
        lo = np.linalg.eigvalsh(out)[0]
        if lo >= floor:
            break
        out = out + (2.0 * (floor - lo) + slack) * eye
    return out


def weighted_outer_sum(vectors, weights):
    """Return ``sum_j weights[j] * v_j v_j^T``."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if len(vectors) != len(weights):
        raise LengthMismatch(
            f"{len(vectors)} vectors but {len(weights)} weights"
        )
    if len(weights) == 0:
        raise LengthMismatch("need at least one vector")
    return (vectors.T * weights) @ vectors


def is_spd(m, floor=0.0, rtol=1e-10):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m - m.T).max() > rtol * scale:
        return False
    return bool(np.linalg.eigvalsh(symmetrize(m))[0] >= floor)
