"""Inspection tools for high-dimensional SPD samples.

For a pullback metric the pairwise geodesic distances are plain Euclidean
distances between the flat-chart images, so t-SNE on the manifold reduces
to standard t-SNE driven by that distance matrix; in particular the
log-Cholesky chart needs one Cholesky factorization per matrix and no
matrix logarithms. The metric-volume correction of fully Riemannian SNE
variants is constant along a flat chart and is omitted.

Linearized principal geodesic analysis maps the sample to tangent
coordinates at a base point and runs ordinary PCA there.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import accel, spd
from .errors import DimensionError, DomainError, EmbeddingError
from .regression import _vech_batch

__all__ = [
    "EmbedConfig",
    "Embedding",
    "PgaResult",
    "pairwise_epm_distances",
    "tsne_affinities",
    "tsne_from_distances",
    "rie_tsne",
    "linearized_pga",
]

MOMENTUM_SWITCH_ITER = 250
EARLY_MOMENTUM = 0.5
LATE_MOMENTUM = 0.8
MIN_GAIN = 0.01
ENTROPY_TOL = 1e-5
MAX_BISECTIONS = 50


@dataclass(frozen=True)
class EmbedConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    out_dim: int = 2
    seed: int = 0

    def __post_init__(self):
        if not self.perplexity > 1.0:
            raise DomainError("perplexity must be > 1")
        if self.out_dim not in (2, 3):
            raise DomainError("out_dim must be 2 or 3")
        if not self.learning_rate > 0.0:
            raise DomainError("learning_rate must be > 0")
        if self.exaggeration < 1.0:
            raise DomainError("exaggeration must be >= 1")


@dataclass(frozen=True)
class Embedding:
    points: np.ndarray  # (N, out_dim)
    kl_trace: np.ndarray  # objective value at every iteration


def pairwise_epm_distances(ys, metric):
    """Symmetric matrix of geodesic distances; equals the Euclidean distances
    of the flat-chart images, each pair computed once."""
    imgs = spd.epm_forward_batch(metric, ys)
    flat = imgs.reshape(imgs.shape[0], -1)
    return np.sqrt(np.maximum(accel.pairwise_sq_dists(flat), 0.0))


def tsne_affinities(dists, perplexity, tol=ENTROPY_TOL, max_iter=MAX_BISECTIONS):
    """Symmetrized joint t-SNE affinities from a distance matrix.

    Per-point Gaussian bandwidths are calibrated by bisection until each
    row entropy matches log(perplexity) within tol.
    """
    d = np.asarray(dists, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DimensionError("distance matrix must be square")
    n = d.shape[0]
    if not perplexity < n:
        raise DomainError(f"perplexity {perplexity} requires more than {perplexity} points")
    cond, _ = accel.perplexity_affinities(d * d, perplexity, tol, max_iter)
    return (cond + cond.T) / (2.0 * n)


def tsne_from_distances(dists, cfg):
    """Gradient-descent t-SNE embedding of a precomputed distance matrix."""
    d = np.asarray(dists, dtype=np.float64)
    n = d.shape[0]
    if d.max() <= 0.0:
        raise EmbeddingError("all pairwise distances are zero; nothing to embed")
    if n < 3 * cfg.perplexity:
        warnings.warn(
            f"only {n} points for perplexity {cfg.perplexity}; "
            "recommend N >= 3 * perplexity",
            stacklevel=2,
        )
    p = tsne_affinities(d, cfg.perplexity)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    y = 1e-4 * rng.standard_normal((n, cfg.out_dim))
    vel = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_trace = np.empty(cfg.iterations)
    for it in range(cfg.iterations):
        exaggerating = it < cfg.exaggeration_iters and cfg.exaggeration > 1.0
        if exaggerating:
            grad, _ = accel.tsne_grad_kl(cfg.exaggeration * p, y)
            _, kl = accel.tsne_grad_kl(p, y)  # trace records the true objective
        else:
            grad, kl = accel.tsne_grad_kl(p, y)
        kl_trace[it] = kl
        momentum = EARLY_MOMENTUM if it < MOMENTUM_SWITCH_ITER else LATE_MOMENTUM
        # per-coordinate gains: grow when the gradient keeps its direction
        # against the velocity, shrink otherwise
        flip = np.sign(grad) != np.sign(vel)
        gains = np.where(flip, gains + 0.2, gains * 0.8)
        np.maximum(gains, MIN_GAIN, out=gains)
        vel = momentum * vel - cfg.learning_rate * gains * grad
        y = y + vel
        y = y - y.mean(axis=0)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(kl_trace))):
        raise EmbeddingError(
            "gradient descent diverged; lower the learning rate or exaggeration"
        )
    return Embedding(points=y, kl_trace=kl_trace)


def rie_tsne(ys, metric, cfg):
    """t-SNE of an SPD sample under a pullback metric."""
    return tsne_from_distances(pairwise_epm_distances(ys, metric), cfg)


# ---------------------------------------------------------------------------
# linearized principal geodesic analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PgaResult:
    scores: np.ndarray  # (N, components)
    directions: np.ndarray  # (components, tangent_dim)
    explained_variance: np.ndarray  # fractions, nonincreasing
    base_point: np.ndarray  # (n, n)
    tangent_mean: np.ndarray  # (tangent_dim,)


def tangent_coordinates(ys, base, metric):
    """Half-vectorized tangent coordinates of the sample at the base point."""
    ys = np.asarray(ys, dtype=np.float64)
    if isinstance(metric, spd.AiMetric):
        return _vech_batch(spd.ai_log_batch(base, ys))
    imgs = spd.epm_forward_batch(metric, ys)
    return _vech_batch(imgs - spd.epm_forward(metric, base)[None])


def linearized_pga(ys, base=None, metric=None, components=2):
    """PCA in tangent coordinates at a base point (default: the Karcher mean).

    Returns scores, unit directions, and explained-variance fractions in
    descending order. With components equal to the tangent dimension the
    inputs are reproduced exactly as tangent_mean + scores @ directions.
    """
    metric = metric if metric is not None else spd.EpmMetric(spd.LOG_CHOLESKY)
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim != 3 or ys.shape[0] < 2:
        raise DimensionError("need at least two SPD matrices")
    if base is None:
        base = spd.karcher_mean(ys, metric)
    else:
        base = np.asarray(base, dtype=np.float64)
    coords = tangent_coordinates(ys, base, metric)
    dim = coords.shape[1]
    if components > dim:
        raise DimensionError(f"components {components} exceeds tangent dimension {dim}")
    mean = coords.mean(axis=0)
    centered = coords - mean
    u, sing, vt = np.linalg.svd(centered, full_matrices=False)
    # fix the SVD sign ambiguity: largest-magnitude loading positive
    for i in range(vt.shape[0]):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0.0:
            vt[i] = -vt[i]
            u[:, i] = -u[:, i]
    total = float(np.sum(sing * sing))
    if total > 0.0:
        fractions = (sing * sing)[:components] / total
    else:
        fractions = np.zeros(components)
    scores = u[:, :components] * sing[:components]
    return PgaResult(
        scores=scores,
        directions=vt[:components],
        explained_variance=fractions,
        base_point=base,
        tangent_mean=mean,
    )
