"""Dense matrix primitives every other module builds on.

Matrices are plain float64 numpy arrays. Symmetric results are always
symmetrized explicitly, lower-triangular results carry an exactly zero
strict upper triangle, and half-vectorization uses the column-major
lower-triangle order throughout the project.
"""

import numpy as np

from .errors import DimensionError, DomainError, NumericError

__all__ = [
    "kron",
    "kron_power",
    "vech",
    "vech_inv",
    "vech_len",
    "vech_dim",
    "strict_lower",
    "diag_part",
    "half_op",
    "sym_expm",
    "sym_logm",
    "cholesky_lower",
    "pow_tau",
    "ridge_solve",
    "finite_diff_directional",
    "symmetrize",
    "assert_spd",
    "is_spd",
]

# relative eigenvalue floor for the PD check: a symmetric matrix counts as
# positive definite when min_eig > PD_TOL * max(max_eig, 1). The factor is
# eps-scaled so matrices representable in double precision are accepted up
# to condition ~7e13; anything beyond carries no trustworthy small modes.
PD_TOL = 64.0 * np.finfo(np.float64).eps
DEFAULT_FD_STEP = 1e-5


def _as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={a.ndim}")
    return a


def _as_square(m, name="matrix"):
    a = _as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def kron(a, b):
    """Kronecker product with block (i, j) equal to a[i, j] * b."""
    return np.kron(_as_matrix(a, "a"), _as_matrix(b, "b"))


def kron_power(x, j):
    """j-fold Kronecker power of a vector; the 0-th power is the scalar [1]."""
    if j < 0:
        raise DomainError("Kronecker power requires j >= 0")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    out = np.ones(1)
    for _ in range(j):
        out = np.kron(x, out)
    return out


def vech_len(n):
    return n * (n + 1) // 2


def vech_dim(length):
    """Matrix dimension n with n(n+1)/2 == length."""
    n = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if vech_len(n) != length:
        raise DimensionError(f"{length} is not a triangular number n(n+1)/2")
    return n


def _vech_indices(n):
    # (rows, cols) of the lower triangle in column-major order
    c, r = np.triu_indices(n)
    return r, c


def vech(s):
    """Column-major stacking of the lower triangle (diagonal included)."""
    a = _as_square(s, "symmetric matrix")
    r, c = _vech_indices(a.shape[0])
    return a[r, c].copy()


def vech_inv(v):
    """Symmetric matrix whose lower triangle is v; inverse of :func:`vech`."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    n = vech_dim(v.shape[0])
    out = np.zeros((n, n))
    r, c = _vech_indices(n)
    out[r, c] = v
    out[c, r] = v
    return out


def strict_lower(m):
    """Strictly lower-triangular part (diagonal zeroed)."""
    return np.tril(_as_square(m), -1)


def diag_part(m):
    """Diagonal part (off-diagonal zeroed)."""
    return np.diag(np.diag(_as_square(m)))


def half_op(m):
    """Strictly lower part plus half the diagonal."""
    a = _as_square(m)
    return np.tril(a, -1) + np.diag(np.diag(a)) / 2.0


def symmetrize(m):
    a = _as_square(m)
    return (a + a.T) / 2.0


def _eigh(s, name):
    a = symmetrize(_as_square(s, name))
    w, v = np.linalg.eigh(a)
    return w, v


def sym_expm(s):
    """Matrix exponential of a symmetric matrix via eigendecomposition."""
    w, v = _eigh(s, "symmetric matrix")
    out = symmetrize((v * np.exp(w)) @ v.T)
    if not np.all(np.isfinite(out)):
        raise NumericError("matrix exponential overflowed")
    return out


def sym_logm(y):
    """Matrix logarithm of an SPD matrix; rejects non-PD input."""
    w, v = _eigh(y, "SPD matrix")
    if w[0] <= PD_TOL * max(w[-1], 1.0):
        raise DomainError(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    return symmetrize((v * np.log(w)) @ v.T)


def pow_tau(y, tau):
    """Matrix power exp(tau * log Y) of an SPD matrix."""
    w, v = _eigh(y, "SPD matrix")
    if w[0] <= PD_TOL * max(w[-1], 1.0):
        raise DomainError(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    return symmetrize((v * np.power(w, tau)) @ v.T)


def cholesky_lower(y):
    """Cholesky factor with strictly positive diagonal; rejects non-PD input."""
    a = _as_square(y, "SPD matrix")
    try:
        return np.linalg.cholesky(symmetrize(a))
    except np.linalg.LinAlgError as exc:
        raise DomainError("matrix is not positive definite") from exc


def is_spd(y):
    a = np.asarray(y, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-8 * max(1.0, np.abs(a).max())):
        return False
    w = np.linalg.eigvalsh(symmetrize(a))
    return bool(w[0] > PD_TOL * max(w[-1], 1.0))


def assert_spd(y, name="matrix"):
    if not is_spd(y):
        raise DomainError(f"{name} is not symmetric positive definite")


def ridge_solve(a, lam, b):
    """Solve (a + lam^2 I) u = b for symmetric PSD a.

    With lam == 0 this is the generalized-inverse path: a direct solve is
    attempted first and a pseudo-inverse is used if the system is singular.
    Non-finite solutions raise NumericError.
    """
    a = _as_square(a, "a")
    b = np.asarray(b, dtype=np.float64)
    if lam > 0.0:
        reg = a + (lam * lam) * np.eye(a.shape[0])
        try:
            u = np.linalg.solve(reg, b)
        except np.linalg.LinAlgError as exc:
            raise NumericError("regularized system is singular") from exc
    else:
        try:
            u = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            u = np.linalg.pinv(a) @ b
    if not np.all(np.isfinite(u)):
        raise NumericError("ridge solve produced non-finite values")
    return u


def finite_diff_directional(fn, y, v, eps=DEFAULT_FD_STEP):
    """Central-difference directional derivative (fn(y+eps v) - fn(y-eps v)) / 2eps."""
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return (np.asarray(fn(y + eps * v)) - np.asarray(fn(y - eps * v))) / (2.0 * eps)
