"""Hot numeric kernels with two interchangeable backends.

The inner loops that dominate runtime (local-polynomial smoother systems,
pairwise distance fills, t-SNE affinity calibration and gradient steps) are
implemented twice: as numba @njit loops and as vectorized numpy. The active
backend is chosen at import time from the environment variable

    MANIFOLD_ILPR_NUMBA = auto | 1 | 0      (default: auto)

"auto" uses numba when importable, "0" forces the pure-numpy path, "1"
demands numba and fails loudly if it is missing. Both backends implement
the same arithmetic; `benchmarks/backend_benchmark.py` compares them.

All kernels are deterministic: no parallel reductions, no thread-dependent
accumulation order.
"""

import os

import numpy as np

__all__ = [
    "backend",
    "design_dim",
    "design_matrix",
    "pair_design",
    "batch_smoothers",
    "pairwise_sq_dists",
    "perplexity_affinities",
    "tsne_grad_kl",
]


def _resolve_backend():
    flag = os.environ.get("MANIFOLD_ILPR_NUMBA", "auto").strip().lower()
    if flag in ("0", "false", "off", "no", "numpy"):
        return False
    want = flag in ("1", "true", "on", "yes", "numba")
    try:
        import numba  # noqa: F401
    except ImportError:
        if want:
            raise RuntimeError(
                "MANIFOLD_ILPR_NUMBA requests the numba backend but numba is not importable"
            )
        return False
    return True


_USE_NUMBA = _resolve_backend()


def backend():
    """Name of the active kernel backend: 'numba' or 'numpy'."""
    return "numba" if _USE_NUMBA else "numpy"


def design_dim(p, k):
    """Length of the stacked Kronecker-power design column: 1 + p + ... + p**k."""
    return sum(p**j for j in range(k + 1))


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _np_design_matrix(dx, k):
    m = dx.shape[0]
    blocks = [np.ones((m, 1))]
    cur = blocks[0]
    for _ in range(k):
        # x^{(j)} = x (x) x^{(j-1)}: leading factor varies slowest
        cur = (dx[:, :, None] * cur[:, None, :]).reshape(m, -1)
        blocks.append(cur)
    return np.concatenate(blocks, axis=1)


def _np_pair_design(dx, k):
    q, m, _ = dx.shape
    blocks = [np.ones((q, m, 1))]
    cur = blocks[0]
    for _ in range(k):
        cur = (dx[:, :, :, None] * cur[:, :, None, :]).reshape(q, m, -1)
        blocks.append(cur)
    return np.concatenate(blocks, axis=2)


def _np_batch_smoothers(phi, w, lam):
    q, m, pdim = phi.shape
    a = np.einsum("qim,qi,qin->qmn", phi, w, phi)
    if lam > 0.0:
        a[:, np.arange(pdim), np.arange(pdim)] += lam * lam
    e0 = np.zeros((q, pdim))
    e0[:, 0] = 1.0
    ok = np.ones(q, dtype=np.bool_)
    try:
        u = np.linalg.solve(a, e0[..., None])[..., 0]
    except np.linalg.LinAlgError:
        # generalized-inverse path: lam == 0 on a rank-deficient system
        u = np.empty((q, pdim))
        for i in range(q):
            try:
                u[i] = np.linalg.solve(a[i], e0[i])
            except np.linalg.LinAlgError:
                u[i] = np.linalg.pinv(a[i]) @ e0[i]
    s = w * np.einsum("qim,qm->qi", phi, u)
    bad = ~np.isfinite(s).all(axis=1)
    if bad.any():
        ok[bad] = False
        s[bad] = 0.0
    return s, ok


def _np_pairwise_sq_dists(z):
    m = z.shape[0]
    out = np.zeros((m, m))
    r, c = np.triu_indices(m, 1)
    diff = z[r] - z[c]
    v = np.einsum("ij,ij->i", diff, diff)
    out[r, c] = v
    out[c, r] = v
    return out


def _np_perplexity_affinities(d2, target_entropy, tol, max_iter):
    m = d2.shape[0]
    beta = np.ones(m)
    beta_lo = np.full(m, -np.inf)
    beta_hi = np.full(m, np.inf)
    p = np.zeros((m, m))
    active = np.ones(m, dtype=bool)
    eye = np.eye(m, dtype=bool)
    tiny = np.finfo(np.float64).tiny
    for it in range(max_iter):
        if not active.any():
            break
        rows = np.where(active)[0]
        w = np.exp(-d2[rows] * beta[rows, None])
        w[eye[rows]] = 0.0
        sw = np.maximum(w.sum(axis=1), tiny)
        h = np.log(sw) + beta[rows] * np.einsum("ij,ij->i", d2[rows], w) / sw
        p[rows] = w / sw[:, None]
        diff = h - target_entropy
        done = np.abs(diff) <= tol
        active[rows[done]] = False
        if it == max_iter - 1:
            break  # keep beta consistent with the stored rows
        up = rows[~done & (diff > 0.0)]  # entropy too high: sharpen
        dn = rows[~done & (diff <= 0.0)]
        beta_lo[up] = beta[up]
        beta[up] = np.where(np.isinf(beta_hi[up]), beta[up] * 2.0, 0.5 * (beta[up] + beta_hi[up]))
        beta_hi[dn] = beta[dn]
        beta[dn] = np.where(np.isinf(beta_lo[dn]), beta[dn] * 0.5, 0.5 * (beta[dn] + beta_lo[dn]))
    return p, beta


def _np_tsne_grad_kl(p, y):
    m = y.shape[0]
    d2 = _np_pairwise_sq_dists(y)
    num = 1.0 / (1.0 + d2)
    num[np.arange(m), np.arange(m)] = 0.0
    z = num.sum()
    q = num / z
    pq = (p - q) * num
    grad = 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)
    mask = p > 0.0
    tiny = np.finfo(np.float64).tiny
    kl = float(np.sum(p[mask] * np.log(p[mask] / np.maximum(q[mask], tiny))))
    return grad, kl


# ---------------------------------------------------------------------------
# numba implementations (same arithmetic, loop form)
# ---------------------------------------------------------------------------

if _USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _nb_design_matrix(dx, k):
        m, p = dx.shape
        pdim = 1
        sz = 1
        for _ in range(k):
            sz *= p
            pdim += sz
        out = np.empty((m, pdim))
        for i in range(m):
            out[i, 0] = 1.0
            off_prev = 0
            len_prev = 1
            off = 1
            for _ in range(k):
                for a in range(p):
                    base = off + a * len_prev
                    for b in range(len_prev):
                        out[i, base + b] = dx[i, a] * out[i, off_prev + b]
                off_prev = off
                off += p * len_prev
                len_prev *= p
        return out

    @njit(cache=True)
    def _nb_pair_design(dx, k):
        q, m, p = dx.shape
        pdim = 1
        sz = 1
        for _ in range(k):
            sz *= p
            pdim += sz
        out = np.empty((q, m, pdim))
        for t in range(q):
            out[t] = _nb_design_matrix(dx[t], k)
        return out

    @njit(cache=True)
    def _nb_batch_smoothers(phi, w, lam):
        q, m, pdim = phi.shape
        s = np.zeros((q, m))
        ok = np.ones(q, dtype=np.bool_)
        for t in range(q):
            a = np.zeros((pdim, pdim))
            for i in range(m):
                wi = w[t, i]
                if wi == 0.0:
                    continue
                for r in range(pdim):
                    pr = wi * phi[t, i, r]
                    for c in range(pdim):
                        a[r, c] += pr * phi[t, i, c]
            for r in range(pdim):
                a[r, r] += lam * lam
            e0 = np.zeros(pdim)
            e0[0] = 1.0
            u = np.linalg.solve(a, e0)
            fine = True
            for i in range(m):
                acc = 0.0
                for r in range(pdim):
                    acc += phi[t, i, r] * u[r]
                val = w[t, i] * acc
                if not np.isfinite(val):
                    fine = False
                    break
                s[t, i] = val
            if not fine:
                ok[t] = False
                for i in range(m):
                    s[t, i] = 0.0
        return s, ok

    @njit(cache=True)
    def _nb_pairwise_sq_dists(z):
        m, d = z.shape
        out = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                acc = 0.0
                for a in range(d):
                    diff = z[i, a] - z[j, a]
                    acc += diff * diff
                out[i, j] = acc
                out[j, i] = acc
        return out

    @njit(cache=True)
    def _nb_perplexity_affinities(d2, target_entropy, tol, max_iter):
        m = d2.shape[0]
        beta = np.ones(m)
        p = np.zeros((m, m))
        tiny = np.finfo(np.float64).tiny
        for i in range(m):
            lo = -np.inf
            hi = np.inf
            b = 1.0
            for it in range(max_iter):
                sw = 0.0
                acc = 0.0
                for j in range(m):
                    if j == i:
                        p[i, j] = 0.0
                        continue
                    w = np.exp(-d2[i, j] * b)
                    p[i, j] = w
                    sw += w
                    acc += d2[i, j] * w
                if sw < tiny:
                    sw = tiny
                h = np.log(sw) + b * acc / sw
                for j in range(m):
                    p[i, j] /= sw
                diff = h - target_entropy
                if abs(diff) <= tol:
                    break
                if it == max_iter - 1:
                    break  # keep beta consistent with the stored row
                if diff > 0.0:
                    lo = b
                    b = b * 2.0 if hi == np.inf else 0.5 * (b + hi)
                else:
                    hi = b
                    b = b * 0.5 if lo == -np.inf else 0.5 * (b + lo)
            beta[i] = b
        return p, beta

    @njit(cache=True)
    def _nb_tsne_grad_kl(p, y):
        m, d = y.shape
        num = np.zeros((m, m))
        z = 0.0
        for i in range(m):
            for j in range(i + 1, m):
                acc = 0.0
                for a in range(d):
                    diff = y[i, a] - y[j, a]
                    acc += diff * diff
                v = 1.0 / (1.0 + acc)
                num[i, j] = v
                num[j, i] = v
                z += 2.0 * v
        grad = np.zeros((m, d))
        kl = 0.0
        tiny = np.finfo(np.float64).tiny
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                q = num[i, j] / z
                pq = (p[i, j] - q) * num[i, j]
                for a in range(d):
                    grad[i, a] += 4.0 * pq * (y[i, a] - y[j, a])
                if p[i, j] > 0.0:
                    qq = q if q > tiny else tiny
                    kl += p[i, j] * np.log(p[i, j] / qq)
        return grad, kl


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def design_matrix(dx, k):
    """Stacked Kronecker powers [(dx_i)^(0); ...; (dx_i)^(k)] per row; shape (M, design_dim)."""
    dx = np.ascontiguousarray(dx, dtype=np.float64)
    if _USE_NUMBA:
        return _nb_design_matrix(dx, k)
    return _np_design_matrix(dx, k)


def pair_design(dx, k):
    """design_matrix applied along the last two axes of a (Q, N, p) offset tensor."""
    dx = np.ascontiguousarray(dx, dtype=np.float64)
    if _USE_NUMBA:
        return _nb_pair_design(dx, k)
    return _np_pair_design(dx, k)


def batch_smoothers(phi, w, lam):
    """Per-query smoother weights s = W Phi (Phi' W Phi + lam^2 I)^- e0.

    phi: (Q, N, pdim) design rows, w: (Q, N) kernel weights. Returns
    (s, ok) with s of shape (Q, N); ok[q] is False when the q-th system
    produced non-finite weights (its row is zeroed).
    """
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if _USE_NUMBA and lam > 0.0:
        return _nb_batch_smoothers(phi, w, lam)
    # lam == 0 keeps the generalized-inverse fallback of the numpy path
    return _np_batch_smoothers(phi, w, lam)


def pairwise_sq_dists(z):
    """Exactly-symmetric matrix of squared Euclidean distances between rows of z."""
    z = np.ascontiguousarray(z, dtype=np.float64)
    if _USE_NUMBA:
        return _nb_pairwise_sq_dists(z)
    return _np_pairwise_sq_dists(z)


def perplexity_affinities(d2, perplexity, tol=1e-5, max_iter=50):
    """Row-stochastic conditional affinities calibrated to a target perplexity.

    Per-row bisection on the Gaussian precision until the row entropy matches
    log(perplexity) within tol (at most max_iter bisections). Returns
    (P, beta); P has zero diagonal and rows summing to one.
    """
    d2 = np.ascontiguousarray(d2, dtype=np.float64)
    target = float(np.log(perplexity))
    if _USE_NUMBA:
        return _nb_perplexity_affinities(d2, target, tol, max_iter)
    return _np_perplexity_affinities(d2, target, tol, max_iter)


def tsne_grad_kl(p, y):
    """Gradient of the t-SNE objective at embedding y, plus the KL value."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if _USE_NUMBA:
        return _nb_tsne_grad_kl(p, y)
    return _np_tsne_grad_kl(p, y)
