"""Synthetic SPD regression problems and the Monte Carlo benchmark harness.

The generator produces responses m(X) = expm(S(X)) with S_ii = sum(X)/2 and
S_ij = lam_ij' X / |lam_ij| for a symmetric table of uniform weight vectors,
so log m(X) is linear in X. Noise is multiplicative log-normal: given the
Cholesky factor L of the clean response, the noisy draw is L expm(E) L' with
E a symmetric matrix of N(0, sigma^2) half-vectorized entries, which keeps
every draw positive definite by construction.

Every realization derives its own counter-based RNG stream from
(seed, p, n, realization), so reports are reproducible independently of
execution order and thread count; wall-clock columns are exempt.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linalg, spd
from .bandwidth import GridSpec, select_bandwidth
from .errors import DimensionError, DomainError
from .regression import Dataset, ExtrinsicAi, FitConfig, fit_at

__all__ = [
    "TrueModel",
    "McConfig",
    "McRow",
    "McReport",
    "METHOD_NAMES",
    "method_descriptor",
    "true_response",
    "true_response_many",
    "gen_covariates",
    "add_lognormal_noise",
    "add_lognormal_noise_many",
    "rmse_ai",
    "run_realization",
    "run_monte_carlo",
    "bias_scaling_experiment",
    "BiasPoint",
    "BiasScalingResult",
    "GAUSSIAN_KERNEL_SECOND_MOMENT",
]

# second moment of the normalized Gaussian kernel; the leading conditional
# bias of the local linear fit is 0.5 * h^2 * mu2 * (second f-derivative)
GAUSSIAN_KERNEL_SECOND_MOMENT = 1.0

METHOD_NAMES = ("ILPR-LC", "ILPR-LE", "extrinsic-AI")

_DESCRIPTORS = {
    "ILPR-LC": spd.EpmMetric(spd.LOG_CHOLESKY),
    "ILPR-LE": spd.EpmMetric(spd.LOG_EUCLIDEAN),
    "extrinsic-AI": ExtrinsicAi(),
}


def method_descriptor(name):
    try:
        return _DESCRIPTORS[name]
    except KeyError:
        raise DomainError(f"unknown method {name!r}; expected one of {METHOD_NAMES}") from None


def _realization_rng(seed, p, n, realization):
    ss = np.random.SeedSequence(seed, spawn_key=(p, n, realization))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TrueModel:
    """Regression surface on SPD(n) with covariates in R^p."""

    p: int
    n: int
    lambdas: np.ndarray  # (n, n, p), symmetric in the first two axes

    @classmethod
    def draw(cls, p, n, rng):
        lam = np.zeros((n, n, p))
        for i in range(n):
            for j in range(i + 1, n):
                v = rng.random(p)
                while np.linalg.norm(v) == 0.0:
                    v = rng.random(p)
                lam[i, j] = v
                lam[j, i] = v
        return cls(p=p, n=n, lambdas=lam)

    def log_response(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.p:
            raise DimensionError(f"covariate has length {x.shape[0]}, expected {self.p}")
        s = np.zeros((self.n, self.n))
        norms = np.linalg.norm(self.lambdas, axis=2)
        off = ~np.eye(self.n, dtype=bool)
        s[off] = (self.lambdas @ x)[off] / norms[off]
        s[np.arange(self.n), np.arange(self.n)] = x.sum() / 2.0
        return (s + s.T) / 2.0


def true_response(model, x):
    """Clean response expm(S(x)); symmetric positive definite for every x."""
    return linalg.sym_expm(model.log_response(x))


def true_response_many(model, xs):
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    logs = np.stack([model.log_response(x) for x in xs])
    w, v = np.linalg.eigh(logs)
    out = np.einsum("qij,qj,qkj->qik", v, np.exp(w), v)
    return (out + np.swapaxes(out, 1, 2)) / 2.0


def gen_covariates(num_samples, p, rng):
    """i.i.d. standard normal covariate vectors from the supplied stream."""
    return rng.standard_normal((num_samples, p))


def add_lognormal_noise(y, sigma, rng):
    """One multiplicative log-normal draw L expm(E) L'; sigma = 0 returns y unchanged."""
    y = np.asarray(y, dtype=np.float64)
    if sigma < 0.0:
        raise DomainError("noise scale must be >= 0")
    if sigma == 0.0:
        return y.copy()
    eps = sigma * rng.standard_normal(linalg.vech_len(y.shape[0]))
    ell = linalg.cholesky_lower(y)
    noisy = ell @ linalg.sym_expm(linalg.vech_inv(eps)) @ ell.T
    return linalg.symmetrize(noisy)


def add_lognormal_noise_many(ys, sigma, rng):
    """Batched log-normal noise; draw order matches per-sample calls on the same stream."""
    if sigma == 0.0:
        return ys.copy()
    n = ys.shape[1]
    m = linalg.vech_len(n)
    eps = sigma * rng.standard_normal((ys.shape[0], m))
    c, r = np.triu_indices(n)
    exps = np.zeros_like(ys)
    exps[:, r, c] = eps
    exps[:, c, r] = eps
    w, v = np.linalg.eigh(exps)
    inner = np.einsum("qij,qj,qkj->qik", v, np.exp(w), v)
    ell = np.linalg.cholesky(ys)
    out = ell @ inner @ np.swapaxes(ell, 1, 2)
    return (out + np.swapaxes(out, 1, 2)) / 2.0


def _assert_pd_batch(ys, what):
    w = np.linalg.eigvalsh((ys + np.swapaxes(ys, 1, 2)) / 2.0)
    bad = w[:, 0] <= linalg.PD_TOL * np.maximum(w[:, -1], 1.0)
    if bad.any():
        raise DomainError(
            f"{what} {int(np.flatnonzero(bad)[0])} fails the positive-definite check"
        )


def rmse_ai(estimates, truths):
    """Root mean squared affine-invariant distance between matched SPD lists."""
    a = np.asarray(estimates, dtype=np.float64)
    b = np.asarray(truths, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    d = spd.ai_distance_batch(a, b)
    return float(np.sqrt(np.mean(d * d)))


# ---------------------------------------------------------------------------
# Monte Carlo protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McConfig:
    """Benchmark sweep configuration; the report is a pure function of it."""

    grid: tuple = ((1, 3),)
    realizations: int = 20
    num_samples: int = 100
    sigma: float = 0.5
    seed: int = 0
    methods: tuple = METHOD_NAMES
    degree: int = 1
    ridge: float = 1e-3
    cv_grid: GridSpec = field(default_factory=GridSpec)
    time_includes_cv: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.realizations < 1:
            raise DomainError("realizations must be >= 1")
        if self.num_samples < 2:
            raise DomainError("num_samples must be >= 2")
        if self.sigma < 0.0:
            raise DomainError("sigma must be >= 0")
        for name in self.methods:
            method_descriptor(name)


@dataclass(frozen=True)
class McRow:
    p: int
    n: int
    method: str
    realization: int
    rmse: float
    fit_seconds: float
    h_selected: float
    error: str = ""


@dataclass(frozen=True)
class McReport:
    rows: tuple

    def sorted(self):
        return McReport(tuple(sorted(self.rows, key=lambda r: (r.p, r.n, r.method, r.realization))))


def run_realization(p, n, cfg, realization_index):
    """All method rows for one simulated regression problem.

    Wall-clock time covers only the fit-evaluation pass at the sample
    covariates (bandwidth selection and data generation excluded unless
    cfg.time_includes_cv is set). Method failures become rows carrying an
    error tag and NaN sentinels so a sweep never aborts.
    """
    rng = _realization_rng(cfg.seed, p, n, realization_index)
    rows = []
    try:
        model = TrueModel.draw(p, n, rng)
        x = gen_covariates(cfg.num_samples, p, rng)
        y_true = true_response_many(model, x)
        y_noisy = add_lognormal_noise_many(y_true, cfg.sigma, rng)
        _assert_pd_batch(y_true, "clean response")
        _assert_pd_batch(y_noisy, "noisy response")
    except (DomainError, np.linalg.LinAlgError) as exc:
        # the model's dynamic range grows like exp(n |x|); draws past the
        # double-precision floor poison every method identically
        tag = f"{type(exc).__name__}: {exc}"
        return [
            McRow(p, n, name, realization_index, float("nan"), float("nan"), float("nan"), tag)
            for name in cfg.methods
        ]
    ds = Dataset(x, y_noisy)
    for name in cfg.methods:
        descr = method_descriptor(name)
        try:
            t_cv = time.perf_counter()
            cv = select_bandwidth(ds, cfg.degree, descr, cfg.cv_grid, cfg.ridge)
            cv_seconds = time.perf_counter() - t_cv
            fit_cfg = FitConfig(degree=cfg.degree, bandwidth=cv.best_h, ridge=cfg.ridge)
            t0 = time.perf_counter()
            estimates = fit_at(ds, x, fit_cfg, descr)
            fit_seconds = time.perf_counter() - t0
            if cfg.time_includes_cv:
                fit_seconds += cv_seconds
            rows.append(
                McRow(p, n, name, realization_index, rmse_ai(estimates, y_true),
                      fit_seconds, cv.best_h)
            )
        except Exception as exc:  # tagged row instead of a crashed sweep
            rows.append(
                McRow(p, n, name, realization_index, float("nan"), float("nan"),
                      float("nan"), f"{type(exc).__name__}: {exc}")
            )
    return rows


def run_monte_carlo(cfg, progress=None):
    """Every (p, n, method, realization) row of the sweep, deterministically ordered."""
    tasks = [(p, n, r) for (p, n) in cfg.grid for r in range(cfg.realizations)]
    rows = []
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(run_realization, p, n, cfg, r) for (p, n, r) in tasks]
            for done, fut in enumerate(futures, start=1):
                batch = fut.result()
                rows.extend(batch)
                if progress is not None:
                    progress(done, len(tasks), batch)
    else:
        for done, (p, n, r) in enumerate(tasks, start=1):
            batch = run_realization(p, n, cfg, r)
            rows.extend(batch)
            if progress is not None:
                progress(done, len(tasks), batch)
    return McReport(tuple(rows)).sorted()


# ---------------------------------------------------------------------------
# conditional-bias scaling probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BiasPoint:
    h: float
    mean_bias_norm: float  # average over replications of |beta0 - fm(x0)|
    bias_of_mean_norm: float  # |average of beta0 - fm(x0)|, SE shrinks with reps
    sd_norm: float
    replications: int


@dataclass(frozen=True)
class BiasScalingResult:
    points: tuple
    slope: float  # log-log slope of mean_bias_norm against h

    def as_pairs(self):
        return [(pt.h, pt.mean_bias_norm) for pt in self.points]


def bias_scaling_experiment(
    n,
    p,
    h_list,
    num_samples,
    seed,
    replications=2000,
    noise_scale=0.05,
    curvature="quadratic",
    ridge=1e-3,
):
    """Empirical h-scaling of the local linear flat-chart bias at a fixed point.

    The regression surface is fm(x) = c(x) * E in f-coordinates with
    c quadratic (c = |x|^2 / 2, unit second derivative) or linear (zero
    second derivative), E the identity direction. Covariates are drawn once,
    uniform on [-3, 3]^p so the design density is flat around the query
    x0 = 0; replications redraw only the additive N(0, noise_scale^2)
    f-space noise. The local linear smoother at x0 is precomputed per
    bandwidth, so each replication is a single weighted combination.
    """
    if curvature not in ("quadratic", "linear"):
        raise DomainError("curvature must be 'quadratic' or 'linear'")
    from .regression import smoother_rows  # local import avoids cycle at module load

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    x = rng.uniform(-3.0, 3.0, size=(num_samples, p))
    if curvature == "quadratic":
        c = 0.5 * np.einsum("ij,ij->i", x, x)
        target = 0.0  # c(0)
    else:
        c = x.sum(axis=1)
        target = 0.0
    direction = np.eye(n).reshape(-1)
    m = n * n
    fm = c[:, None] * direction[None, :]  # (N, m) flat-chart responses, noise-free
    x0 = np.zeros((1, p))
    points = []
    chunk = 512
    for h in h_list:
        s, mass, ok = smoother_rows(x, x0, 1, float(h), ridge)
        if mass[0] < 1e-300 or not ok[0]:
            raise DomainError(f"bandwidth {h} leaves the query without support")
        s = s[0]
        base = fm.T @ s  # (m,) noise-free fitted value
        sums = np.zeros(m)
        sq_sums = 0.0
        norms_total = 0.0
        done = 0
        while done < replications:
            take = min(chunk, replications - done)
            eps = noise_scale * rng.standard_normal((take, num_samples, m))
            dev = base[None, :] + np.einsum("rim,i->rm", eps, s) - target * direction
            nr = np.linalg.norm(dev, axis=1)
            norms_total += nr.sum()
            sq_sums += float((nr * nr).sum())
            sums += dev.sum(axis=0)
            done += take
        mean_norm = norms_total / replications
        var = max(sq_sums / replications - mean_norm * mean_norm, 0.0)
        points.append(
            BiasPoint(
                h=float(h),
                mean_bias_norm=float(mean_norm),
                bias_of_mean_norm=float(np.linalg.norm(sums / replications)),
                sd_norm=float(np.sqrt(var)),
                replications=replications,
            )
        )
    hs = np.log([pt.h for pt in points])
    ys = np.log([max(pt.mean_bias_norm, 1e-300) for pt in points])
    slope = float(np.polyfit(hs, ys, 1)[0]) if len(points) > 1 else float("nan")
    return BiasScalingResult(points=tuple(points), slope=slope)
