"""SPD manifold geometry: flat-chart isometries, distances, and means.

Four metrics on SPD(n) are handled through the diffeomorphism f that makes
each of them a pullback of the flat Frobenius metric:

    log-euclidean      f(Y) = logm(Y)                       image: Sym(n)
    cholesky           f(Y) = L,  Y = L L'                  image: LT(n), diag > 0
    log-cholesky       f(Y) = strict_lower(L) + log diag(L)  image: LT(n)
    power-euclidean    f(Y) = Y^tau                          image: SPD(n)

The affine-invariant metric (no flat chart) gets its usual exponential /
logarithm maps and distance, plus a fixed-point Karcher mean.

Degenerate inputs are rejected, never repaired: a matrix failing the PD
check raises DomainError so that benchmark comparisons are not silently
distorted by eigenvalue clamping.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ConvergenceError, DimensionError, DomainError, NumericError

__all__ = [
    "EpmMetric",
    "AiMetric",
    "METRIC_KINDS",
    "epm_forward",
    "epm_inverse",
    "epm_distance",
    "epm_forward_batch",
    "epm_inverse_batch",
    "lc_differential",
    "lc_metric_tensor",
    "ai_distance",
    "ai_metric_tensor",
    "ai_exp",
    "ai_log",
    "ai_log_batch",
    "ai_log_dists_batch",
    "ai_exp_batch",
    "ai_exp_batch_rows",
    "ai_distance_batch",
    "karcher_mean",
]

LOG_EUCLIDEAN = "log-euclidean"
LOG_CHOLESKY = "log-cholesky"
CHOLESKY = "cholesky"
POWER_EUCLIDEAN = "power-euclidean"
METRIC_KINDS = (LOG_EUCLIDEAN, LOG_CHOLESKY, CHOLESKY, POWER_EUCLIDEAN)

# asymmetry beyond this (relative) puts a matrix outside the log-euclidean codomain
SYM_CODOMAIN_TOL = 1e-8


@dataclass(frozen=True)
class EpmMetric:
    """A Euclidean-pullback metric on SPD(n), identified by its isometry."""

    kind: str
    tau: float = 0.5

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise DomainError(f"unknown metric kind {self.kind!r}; expected one of {METRIC_KINDS}")
        if self.kind == POWER_EUCLIDEAN and not self.tau > 0.0:
            raise DomainError("power-euclidean metric requires tau > 0")


@dataclass(frozen=True)
class AiMetric:
    """The affine-invariant metric g_Y(V, V) = tr((Y^-1 V)^2)."""


def _as_batch(ys):
    a = np.asarray(ys, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"expected (N, n, n) stack of square matrices, got {a.shape}")
    return a


def _eigh_pd(ys, what="matrix"):
    ys = (ys + np.swapaxes(ys, -1, -2)) / 2.0
    w, v = np.linalg.eigh(ys)
    bad = w[..., 0] <= linalg.PD_TOL * np.maximum(w[..., -1], 1.0)
    if np.any(bad):
        raise DomainError(f"{what} is not positive definite")
    return w, v


def _eigh_positive(ys, what="matrix"):
    # for whitened products of PD inputs: eigenvalues legitimately span
    # exp(+-distance), so only strict positivity is required here
    ys = (ys + np.swapaxes(ys, -1, -2)) / 2.0
    w, v = np.linalg.eigh(ys)
    if np.any(w[..., 0] <= 0.0):
        raise DomainError(f"{what} lost positivity; the inputs are numerically degenerate")
    return w, v


def _sym(ys):
    return (ys + np.swapaxes(ys, -1, -2)) / 2.0


def _apply_eig(w, v, fn):
    return _sym(np.einsum("...ij,...j,...kj->...ik", v, fn(w), v))


def _chol_batch(ys, what="matrix"):
    try:
        return np.linalg.cholesky(_sym(ys))
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"{what} is not positive definite") from exc


def _diag_view(ms):
    return np.einsum("...ii->...i", ms)


def epm_forward_batch(metric, ys):
    ys = _as_batch(ys)
    if metric.kind == LOG_EUCLIDEAN:
        w, v = _eigh_pd(ys, "response")
        return _apply_eig(w, v, np.log)
    if metric.kind == POWER_EUCLIDEAN:
        w, v = _eigh_pd(ys, "response")
        return _apply_eig(w, v, lambda x: np.power(x, metric.tau))
    ls = _chol_batch(ys, "response")
    if metric.kind == CHOLESKY:
        return ls
    out = np.tril(ls, -1)
    _diag_view(out)[...] = np.log(_diag_view(ls))
    return out


def epm_inverse_batch(metric, zs):
    zs = _as_batch(zs)
    if metric.kind == LOG_EUCLIDEAN:
        asym = np.abs(zs - np.swapaxes(zs, -1, -2)).max()
        scale = max(1.0, np.abs(zs).max())
        if asym > SYM_CODOMAIN_TOL * scale:
            raise DomainError("matrix is outside the symmetric codomain of the log map")
        w, v = np.linalg.eigh(_sym(zs))
        out = _apply_eig(w, v, np.exp)
        if not np.all(np.isfinite(out)):
            raise NumericError("inverse isometry overflowed")
        return out
    if metric.kind == POWER_EUCLIDEAN:
        w, v = _eigh_pd(zs, "power-euclidean coordinate")
        return _apply_eig(w, v, lambda x: np.power(x, 1.0 / metric.tau))
    if metric.kind == CHOLESKY:
        d = _diag_view(zs)
        if np.any(d <= 0.0):
            raise DomainError("matrix is outside the positive-diagonal Cholesky codomain")
        ls = np.tril(zs)
    else:
        ls = np.tril(zs, -1).copy()
        _diag_view(ls)[...] = np.exp(_diag_view(zs))
    out = _sym(np.einsum("...ij,...kj->...ik", ls, ls))
    if not np.all(np.isfinite(out)):
        raise NumericError("inverse isometry overflowed")
    return out


def epm_forward(metric, y):
    """Flat-chart image f(Y) of an SPD matrix under the metric's isometry."""
    return epm_forward_batch(metric, np.asarray(y, dtype=np.float64)[None])[0]


def epm_inverse(metric, z):
    """Inverse isometry; rejects arguments outside the codomain of f."""
    return epm_inverse_batch(metric, np.asarray(z, dtype=np.float64)[None])[0]


def epm_distance(metric, y1, y2):
    """Geodesic distance ||f(Y1) - f(Y2)||_F in the flat chart."""
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    if y1.shape != y2.shape:
        raise DimensionError(f"dimension mismatch: {y1.shape} vs {y2.shape}")
    return float(np.linalg.norm(epm_forward(metric, y1) - epm_forward(metric, y2)))


def lc_differential(y, v):
    """Directional derivative of the log-Cholesky isometry at Y along symmetric V.

    d_Y f(V) = strict_lower(L H) + diag(H) with L the Cholesky factor of Y
    and H the lower-half part of L^-1 V L^-T.
    """
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if y.shape != v.shape:
        raise DimensionError(f"dimension mismatch: {y.shape} vs {v.shape}")
    ell = linalg.cholesky_lower(y)
    w = np.linalg.solve(ell, np.linalg.solve(ell, v).T).T  # L^-1 V L^-T
    h = linalg.half_op(w)
    return linalg.strict_lower(ell @ h) + linalg.diag_part(h)


def lc_metric_tensor(y, v):
    """Quadratic form of the log-Cholesky metric at Y applied to (V, V)."""
    y = np.asarray(y, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    ell = linalg.cholesky_lower(y)
    w = np.linalg.solve(ell, np.linalg.solve(ell, v).T).T
    h = linalg.half_op(w)
    low = linalg.strict_lower(ell @ h)
    dia = np.diag(h)
    return float(np.sum(low * low) + np.sum(dia * dia))


# ---------------------------------------------------------------------------
# affine-invariant geometry
# ---------------------------------------------------------------------------


def _ai_whiten(base):
    base = np.asarray(base, dtype=np.float64)
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise DimensionError(f"base point must be a square matrix, got {base.shape}")
    w, v = _eigh_pd(base, "base point")
    rt = (v * np.sqrt(w)) @ v.T
    irt = (v / np.sqrt(w)) @ v.T
    return rt, irt


def ai_distance(y1, y2):
    """Affine-invariant distance ||logm(Y1^-1/2 Y2 Y1^-1/2)||_F."""
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    if y1.shape != y2.shape:
        raise DimensionError(f"dimension mismatch: {y1.shape} vs {y2.shape}")
    return float(ai_distance_batch(y1[None], y2[None])[0])


def ai_metric_tensor(y, v):
    """tr((Y^-1 V)^2), the affine-invariant quadratic form at Y."""
    _, irt = _ai_whiten(np.asarray(y, dtype=np.float64))
    m = irt @ np.asarray(v, dtype=np.float64) @ irt
    return float(np.sum(m * m))


def ai_exp(y, v):
    """Exponential map: Y^1/2 expm(Y^-1/2 V Y^-1/2) Y^1/2."""
    rt, irt = _ai_whiten(np.asarray(y, dtype=np.float64))
    inner = linalg.sym_expm(irt @ np.asarray(v, dtype=np.float64) @ irt)
    return linalg.symmetrize(rt @ inner @ rt)


def ai_log(y1, y2):
    """Logarithm map at y1, inverse of :func:`ai_exp` in its second argument."""
    rt, irt = _ai_whiten(np.asarray(y1, dtype=np.float64))
    w, v = _eigh_positive(irt @ np.asarray(y2, dtype=np.float64) @ irt, "whitened argument")
    inner = _apply_eig(w, v, np.log)
    return linalg.symmetrize(rt @ inner @ rt)


def ai_log_batch(base, ys):
    return ai_log_dists_batch(base, ys)[0]


def ai_log_dists_batch(base, ys):
    """Logarithm maps at a common base plus the geodesic distances, sharing
    one whitened eigendecomposition per point."""
    rt, irt = _ai_whiten(np.asarray(base, dtype=np.float64))
    inner = irt @ _as_batch(ys) @ irt
    w, v = _eigh_positive(inner, "whitened response")
    log_eigs = np.log(w)
    logs = _sym(rt @ np.einsum("...ij,...j,...kj->...ik", v, log_eigs, v) @ rt)
    return logs, np.sqrt(np.sum(log_eigs * log_eigs, axis=-1))


def ai_exp_batch(base, vs):
    rt, irt = _ai_whiten(np.asarray(base, dtype=np.float64))
    inner = _sym(irt @ _as_batch(vs) @ irt)
    w, v = np.linalg.eigh(inner)
    out = _sym(rt @ _apply_eig(w, v, np.exp) @ rt)
    if not np.all(np.isfinite(out)):
        raise NumericError("exponential map overflowed")
    return out


def ai_exp_batch_rows(bases, vs):
    """Exponential map applied row-wise: bases[i] receives tangent vs[i]."""
    bases = _as_batch(bases)
    vs = _as_batch(vs)
    w, v = _eigh_pd(bases, "base point")
    rt = np.einsum("...ij,...j,...kj->...ik", v, np.sqrt(w), v)
    irt = np.einsum("...ij,...j,...kj->...ik", v, 1.0 / np.sqrt(w), v)
    inner = _sym(irt @ vs @ irt)
    w2, v2 = np.linalg.eigh(inner)
    out = _sym(rt @ _apply_eig(w2, v2, np.exp) @ rt)
    if not np.all(np.isfinite(out)):
        raise NumericError("exponential map overflowed")
    return out


def ai_distance_batch(a, b):
    a = _as_batch(a)
    b = _as_batch(b)
    w, v = _eigh_pd(a, "first argument")
    irt = np.einsum("...ij,...j,...kj->...ik", v, 1.0 / np.sqrt(w), v)
    inner = irt @ b @ irt
    lam, _ = _eigh_positive(inner, "whitened second argument")
    logs = np.log(lam)
    return np.sqrt(np.sum(logs * logs, axis=-1))


# ---------------------------------------------------------------------------
# Karcher mean
# ---------------------------------------------------------------------------

KARCHER_TOL = 1e-9
KARCHER_MAX_ITER = 1000


def _karcher_step_bound(dists):
    # Hessian eigenvalues of the summed squared distance lie in
    # [1, u coth u] with u = dist / sqrt(2) (curvature is bounded below by
    # -1/2), so 2 / (1 + mean u coth u) is a stable gradient step.
    u = dists / np.sqrt(2.0)
    lam = np.where(u > 1e-8, u / np.tanh(u), 1.0).mean()
    return 2.0 / (1.0 + max(float(lam), 1.0))


def karcher_mean(ys, metric, tol=KARCHER_TOL, max_iter=KARCHER_MAX_ITER):
    """Point minimizing the summed squared geodesic distance to the sample.

    For a pullback metric the minimizer is exact: f^-1 of the mean of the
    flat-chart images. For the affine-invariant metric, damped fixed-point
    steps mu <- Exp_mu(t * mean Log_mu(Y_i)) run from the log-euclidean
    mean until the gradient norm drops below tol; the step size is set
    from a curvature bound because the plain unit step oscillates without
    converging once the sample dispersion is large.
    """
    ys = _as_batch(ys)
    if ys.shape[0] == 0:
        raise DimensionError("karcher_mean requires a non-empty sample")
    if isinstance(metric, EpmMetric):
        return epm_inverse(metric, epm_forward_batch(metric, ys).mean(axis=0))
    le = EpmMetric(LOG_EUCLIDEAN)
    mu = epm_inverse(le, epm_forward_batch(le, ys).mean(axis=0))
    for _ in range(max_iter):
        logs, dists = ai_log_dists_batch(mu, ys)
        step = logs.mean(axis=0)
        if np.linalg.norm(step) < tol:
            return mu
        mu = ai_exp(mu, _karcher_step_bound(dists) * step)
    raise ConvergenceError(
        f"Karcher mean did not converge in {max_iter} iterations", last_iterate=mu
    )
