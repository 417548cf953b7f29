"""Dense linear-algebra kernels for the orthogonal-manifold parametrization.

Everything here operates on small (n <= 16) float64 matrices, so the
implementations favour correctness and determinism over throughput:
the matrix exponential is a plain scaling-and-squaring Taylor sum, the
logarithm goes through the real Schur form, and PCA uses an SVD with a
data-driven sign convention so features derived from it are identical
under rigid motions of the input.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import BranchBoundary, InvalidInput, NearLinearDependence

# Tolerances of the matrix-type invariants.
SKEW_TOL = 1e-12
ORTHO_TOL = 1e-10
DET_TOL = 1e-8
BRANCH_TOL = 1e-6  # minimum gap between a rotation angle and pi

_EXPM_TAYLOR_ORDER = 20
_EXPM_SCALE_TARGET = 0.25


def pack_upper(a: np.ndarray) -> np.ndarray:
    """Strictly-upper-triangular entries of ``a`` in row-major (i < j) order."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    return a[iu, ju].copy()


def unpack_upper(values: np.ndarray, n: int) -> np.ndarray:
    """Rebuild the skew-symmetric matrix A = U - U^T from its packed upper part."""
    values = np.asarray(values, dtype=float)
    if values.shape != (n * (n - 1) // 2,):
        raise InvalidInput(
            f"packed vector has length {values.size}, expected {n * (n - 1) // 2} for n={n}"
        )
    a = np.zeros((n, n))
    iu, ju = np.triu_indices(n, k=1)
    a[iu, ju] = values
    a[ju, iu] = -values
    return a


def _check_skew(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix contains non-finite entries")
    if np.max(np.abs(a + a.T)) > SKEW_TOL:
        raise InvalidInput("matrix is not skew-symmetric")
    return a


def expm_antisymmetric(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a skew-symmetric matrix.

    Scaling-and-squaring with a fixed-order Taylor core; the result is
    special orthogonal up to roundoff (checked by the test suite, not here).
    """
    a = _check_skew(a)
    norm = np.linalg.norm(a, ord=1)
    squarings = 0
    if norm > _EXPM_SCALE_TARGET:
        squarings = int(np.ceil(np.log2(norm / _EXPM_SCALE_TARGET)))
    b = a / (2.0**squarings)
    n = a.shape[0]
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, _EXPM_TAYLOR_ORDER + 1):
        term = term @ b / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def _check_special_orthogonal(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput("matrix contains non-finite entries")
    if np.max(np.abs(m.T @ m - np.eye(m.shape[0]))) > ORTHO_TOL:
        raise InvalidInput("matrix is not orthogonal within tolerance")
    det = np.linalg.det(m)
    if abs(det - 1.0) > DET_TOL:
        raise InvalidInput(f"determinant {det} is not +1 within tolerance")
    return m


def logm_special_orthogonal(m: np.ndarray) -> np.ndarray:
    """Principal real logarithm of a special-orthogonal matrix.

    Reduces to the real Schur form, whose 2x2 blocks are plane rotations
    for orthogonal input, and reads one angle off each block.  Raises
    ``BranchBoundary`` when any rotation angle is within ``BRANCH_TOL``
    of pi, where the principal branch is ill-defined.
    """
    m = _check_special_orthogonal(m)
    n = m.shape[0]
    t, q = scipy.linalg.schur(m, output="real")
    log_t = np.zeros((n, n))
    i = 0
    while i < n:
        if i == n - 1 or abs(t[i + 1, i]) < 1e-12:
            # 1x1 block: a real eigenvalue of an orthogonal matrix is +-1.
            if t[i, i] < 0.0:
                raise BranchBoundary("eigenvalue -1: rotation angle at pi")
            i += 1
        else:
            angle = np.arctan2(
                0.5 * (t[i, i + 1] - t[i + 1, i]), 0.5 * (t[i, i] + t[i + 1, i + 1])
            )
            if abs(angle) > np.pi - BRANCH_TOL:
                raise BranchBoundary(
                    f"rotation angle {angle} within {BRANCH_TOL} of pi"
                )
            log_t[i, i + 1] = angle
            log_t[i + 1, i] = -angle
            i += 2
    a = q @ log_t @ q.T
    a = 0.5 * (a - a.T)
    np.fill_diagonal(a, 0.0)
    return a


def eigh(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix (ascending eigenvalues)."""
    s = np.asarray(s, dtype=float)
    if np.max(np.abs(s - s.T)) > 1e-10:
        raise InvalidInput("matrix is not symmetric")
    return np.linalg.eigh(s)


def lowdin_inverse_sqrt(s: np.ndarray) -> np.ndarray:
    """Symmetric S^{-1/2} of an SPD matrix (Loewdin orthogonalization)."""
    w, v = eigh(s)
    if w[0] <= 1e-10:
        raise NearLinearDependence(
            f"smallest overlap eigenvalue {w[0]:.3e}: atoms too close"
        )
    x = (v / np.sqrt(w)) @ v.T
    # one Newton step keeps X^T S X - I below 1e-10 at condition numbers up to 1e6
    x = 0.5 * x @ (3.0 * np.eye(s.shape[0]) - s @ x @ x)
    return 0.5 * (x + x.T)


def pca_axes(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Principal axes of centroid-centered positions and normalized projections.

    Returns ``(axes, projections)`` where ``axes`` rows are the three
    principal directions and ``projections`` is N x 3, min-max normalized
    to [0, 1] per axis.  Axes with singular value below 1e-9 are treated
    as degenerate and yield constant 0.5 projections.

    The sign of each axis is fixed from the projection data itself: the
    entry of largest magnitude is made positive, ties broken by highest
    atom index (so a symmetric chain keeps ascending order).  Fixing the
    sign from the projections rather than the axis components makes the
    normalized projections exactly invariant under rigid motions of the
    input, not merely invariant up to reflection.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[1] != 3 or positions.shape[0] < 1:
        raise InvalidInput(f"expected an N x 3 array, got shape {positions.shape}")
    centered = positions - positions.mean(axis=0)
    _, sing, vt = np.linalg.svd(centered, full_matrices=True)
    axes = vt.copy()  # rows are principal directions
    raw = centered @ axes.T
    n = positions.shape[0]
    projections = np.full((n, 3), 0.5)
    for k in range(3):
        if k >= sing.size or sing[k] < 1e-9:
            continue
        col = raw[:, k]
        pivot = n - 1 - int(np.argmax(np.abs(col)[::-1]))
        if col[pivot] < 0.0:
            col = -col
            axes[k] = -axes[k]
        lo, hi = col.min(), col.max()
        if hi - lo < 1e-12:
            continue
        projections[:, k] = (col - lo) / (hi - lo)
    return axes, projections
