"""Dense real linear-algebra kernels.

Everything here is a pure function of its inputs (plus an explicit seed).
The Gram operator ``C = E.T @ E`` is only ever applied, never formed, on the
performance path; :func:`symmetric_eigenvalues` is a deliberately simple
cyclic Jacobi solver used as an exactness oracle.
"""

import math

import numpy as np

from ._validation import check_matrix, check_positive_int
from .exceptions import (
    ConvergenceError,
    DegenerateSpectrumError,
    DimensionError,
    InsufficientSamplesError,
    SymmetryError,
)

#: rows whose spread across columns is below this are only centered
DEGENERATE_STD = 1e-12


def matvec(A, x):
    """Return ``A @ x``.

    ``x`` may be a vector or a block of column vectors.
    """
    A = check_matrix(A, "A")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[0] != A.shape[1]:
        raise DimensionError(
            f"cannot multiply {A.shape[0]}x{A.shape[1]} matrix by operand of shape {x.shape}"
        )
    return A @ x


def gram_apply(E, z):
    """Apply the Gram operator ``E.T @ E`` to ``z`` without forming it.

    Costs two matrix-vector products with ``E``. ``z`` may also be a
    ``(cols, p)`` block, in which case each column is mapped independently.
    """
    E = np.asarray(E, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if E.ndim != 2:
        raise DimensionError(f"E must be 2-D, got shape {E.shape}")
    if z.ndim not in (1, 2) or z.shape[0] != E.shape[1]:
        raise DimensionError(
            f"operand of shape {z.shape} does not match E with {E.shape[1]} columns"
        )
    return E.T @ (E @ z)


def standardize_columns(E):
    """Standardize each row of ``E`` across its columns.

    Every row (one embedding dimension observed over the ``K`` columns) is
    shifted to zero mean and divided by its population standard deviation.
    Rows whose standard deviation is below ``DEGENERATE_STD`` are centered
    but not rescaled.

    Parameters
    ----------
    E : array of shape (d, K)

    Returns
    -------
    ndarray of shape (d, K), a new array.
    """
    E = check_matrix(E, "E")
    if E.shape[1] < 2:
        raise InsufficientSamplesError(
            f"standardization needs at least 2 columns, got {E.shape[1]}"
        )
    mean = E.mean(axis=1, keepdims=True)
    out = E - mean
    std = np.sqrt(np.mean(out * out, axis=1, keepdims=True))
    std[std < DEGENERATE_STD] = 1.0
    out /= std
    return out


def power_method(E, tol=1e-6, max_iter=1000, seed=0, block_size=1):
    """Largest singular value of ``E`` by power iteration on ``E.T @ E``.

    The iteration stops once the relative change of the singular value
    estimate between two consecutive iterates drops below ``tol``.

    With ``block_size > 1`` a block of start vectors is iterated and
    re-orthonormalized each step (subspace iteration), and the estimate is
    the top Ritz value of the block. This guards against a start vector that
    happens to be nearly orthogonal to the dominant direction, which makes a
    single vector stall next to a smaller singular value.

    Raises
    ------
    DegenerateSpectrumError
        If ``E`` is identically zero.
    ConvergenceError
        If ``max_iter`` iterations do not reach ``tol``; the exception's
        ``last_value`` holds the final estimate.
    """
    E = check_matrix(E, "E")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    max_iter = check_positive_int(max_iter, "max_iter")
    block_size = min(check_positive_int(block_size, "block_size"), E.shape[1])
    if not np.any(E):
        raise DegenerateSpectrumError("power method on an all-zero matrix")

    rng = np.random.default_rng(seed)
    V, _ = np.linalg.qr(rng.standard_normal((E.shape[1], block_size)))
    sigma_prev = None
    sigma = 0.0
    for _ in range(max_iter):
        W = gram_apply(E, V)
        if not np.any(W):
            raise DegenerateSpectrumError("start block lies in the null space of E")
        H = V.T @ W
        lam = float(np.linalg.eigvalsh(0.5 * (H + H.T))[-1])
        sigma = math.sqrt(max(lam, 0.0))
        if sigma_prev is not None and abs(sigma - sigma_prev) < tol * sigma:
            return sigma
        sigma_prev = sigma
        V, _ = np.linalg.qr(W)
    raise ConvergenceError(
        f"power method did not reach tol={tol} within {max_iter} iterations "
        f"(last estimate {sigma:.6g})",
        last_value=sigma,
    )


def symmetric_eigenvalues(C, tol=1e-12, max_sweeps=100, symmetry_atol=1e-9):
    """All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi.

    Sweeps visit every off-diagonal pair ``(p, q)`` row by row and annihilate
    it with a plane rotation, until the off-diagonal Frobenius mass falls
    below ``tol`` times the Frobenius norm of ``C``.

    This is an oracle: deterministic and simple, not fast.
    """
    A = check_matrix(C, "C", copy=True)
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionError(f"C must be square, got shape {A.shape}")
    asym = np.max(np.abs(A - A.T))
    if asym > symmetry_atol:
        raise SymmetryError(f"C is not symmetric (max |C - C^T| = {asym:.3g})")
    A = 0.5 * (A + A.T)

    total = np.linalg.norm(A)
    if total == 0.0 or n == 1:
        return np.sort(np.diag(A).copy())
    threshold = tol * total

    def off_mass(M):
        return float(np.linalg.norm(M - np.diag(np.diag(M))))

    for _ in range(max_sweeps):
        if off_mass(A) < threshold:
            return np.sort(np.diag(A).copy())
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
    if off_mass(A) < threshold:
        return np.sort(np.diag(A).copy())
    raise ConvergenceError(
        f"Jacobi iteration did not converge within {max_sweeps} sweeps",
        last_value=np.sort(np.diag(A).copy()),
    )
