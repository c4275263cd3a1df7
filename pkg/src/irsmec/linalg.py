"""Dense complex-matrix kernels shared by the solvers.

All functions accept stacked inputs: the last two axes are the matrix axes and
any leading axes are treated as a batch. Factorizations go through LAPACK's
Cholesky (via numpy), so a failed factorization is the positive-definiteness
test.
"""

import numpy as np


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a Cholesky factorization meets a nonpositive pivot."""


class DimensionMismatch(ValueError):
    pass


def hermitian(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a, rtol=1e-12):
    a = np.asarray(a)
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - hermitian(a)), initial=0.0) <= rtol * max(scale, 1e-300))


def _cholesky(m):
    m = np.asarray(m)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DimensionMismatch(f"expected square matrices, got shape {m.shape}")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def solve_hpd(m, b):
    """Solve ``M X = B`` for Hermitian positive-definite ``M``.

    Parameters
    ----------
    m : array_like, shape (..., n, n)
    b : array_like, shape (..., n, r) or (..., n)

    Returns
    -------
    ndarray
        ``X`` with the same shape as ``b``.
    """
    m = np.asarray(m)
    b = np.asarray(b)
    vector = b.ndim == m.ndim - 1
    if vector:
        b = b[..., None]
    if b.shape[-2] != m.shape[-1]:
        raise DimensionMismatch(f"rhs has {b.shape[-2]} rows, matrix is {m.shape[-1]}x{m.shape[-1]}")
    chol = _cholesky(m)
    # forward/back substitution through the triangular factor
    y = np.linalg.solve(chol, b)
    x = np.linalg.solve(hermitian(chol), y)
    return x[..., 0] if vector else x


def log_det_hpd(m):
    """Natural log-determinant of a Hermitian positive-definite matrix."""
    chol = _cholesky(m)
    diag = np.diagonal(chol, axis1=-2, axis2=-1).real
    return 2.0 * np.sum(np.log(diag), axis=-1)


def gram_norm_sq(h, f):
    """Squared Frobenius norm of ``H @ F``."""
    h = np.asarray(h)
    f = np.asarray(f)
    if h.shape[-1] != f.shape[-2 if f.ndim >= 2 else -1]:
        raise DimensionMismatch(f"cannot multiply {h.shape} by {f.shape}")
    prod = h @ f
    return float(np.sum(prod.real ** 2 + prod.imag ** 2))
