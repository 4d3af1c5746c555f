import numpy as np
import pytest

from manifold_ilpr import accel, linalg, spd
from manifold_ilpr.embedding import (
    EmbedConfig,
    linearized_pga,
    pairwise_epm_distances,
    rie_tsne,
    tangent_coordinates,
    tsne_affinities,
    tsne_from_distances,
)
from manifold_ilpr.errors import DimensionError, DomainError, EmbeddingError

from conftest import make_rng, random_spd, random_spd_stack, random_sym

LC = spd.EpmMetric(spd.LOG_CHOLESKY)


def three_clusters(rng, per_cluster=30, n=6, spread=0.05):
    centers = [linalg.sym_expm(random_sym(rng, n, 1.6)) for _ in range(3)]
    pts, labels = [], []
    for ci, center in enumerate(centers):
        zc = spd.epm_forward(LC, center)
        for _ in range(per_cluster):
            z = zc + np.tril(rng.standard_normal((n, n)) * spread)
            pts.append(spd.epm_inverse(LC, z))
            labels.append(ci)
    return np.stack(pts), np.array(labels)


class TestPairwiseDistances:
    def test_all_equal_gives_zero_matrix(self, rng):
        y = random_spd(rng, 4)
        d = pairwise_epm_distances(np.stack([y] * 5), LC)
        assert np.array_equal(d, np.zeros((5, 5)))

    def test_matches_flat_chart_oracle(self, rng):
        ys = random_spd_stack(rng, 8, 4)
        d = pairwise_epm_distances(ys, LC)
        flat = spd.epm_forward_batch(LC, ys).reshape(8, -1)
        for i in range(8):
            for j in range(8):
                ref = np.linalg.norm(flat[i] - flat[j])
                assert abs(d[i, j] - ref) <= 1e-10 * max(ref, 1.0)
        assert np.array_equal(d, d.T)
        assert np.array_equal(np.diag(d), np.zeros(8))

    def test_triangle_inequality_rows(self, rng):
        ys = random_spd_stack(rng, 10, 6)
        d = pairwise_epm_distances(ys, LC)
        for i in range(10):
            for j in range(10):
                for k in range(10):
                    assert d[i, k] <= d[i, j] + d[j, k] + 1e-12


class TestAffinities:
    def test_epm_equals_euclidean_on_flat_chart(self, rng):
        ys = random_spd_stack(rng, 25, 4)
        d_epm = pairwise_epm_distances(ys, LC)
        flat = spd.epm_forward_batch(LC, ys).reshape(25, -1)
        d_euc = np.sqrt(np.maximum(accel.pairwise_sq_dists(flat), 0.0))
        p1 = tsne_affinities(d_epm, 8.0)
        p2 = tsne_affinities(d_euc, 8.0)
        assert np.abs(p1 - p2).max() <= 1e-10

    def test_rows_hit_target_perplexity(self, rng):
        ys = random_spd_stack(rng, 30, 3)
        d = pairwise_epm_distances(ys, LC)
        cond, _ = accel.perplexity_affinities(d * d, 10.0)
        mask = cond > 0.0
        ent = -np.sum(np.where(mask, cond * np.log(np.where(mask, cond, 1.0)), 0.0), axis=1)
        assert np.abs(ent - np.log(10.0)).max() <= 1e-4

    def test_twin_gets_maximal_affinity(self, rng):
        ys = random_spd_stack(rng, 12, 3)
        ys[5] = ys[0]
        d = pairwise_epm_distances(ys, LC)
        cond, _ = accel.perplexity_affinities(d * d, 5.0)
        assert np.argmax(cond[0]) == 5

    def test_perplexity_must_be_below_count(self, rng):
        ys = random_spd_stack(rng, 5, 3)
        with pytest.raises(DomainError):
            tsne_affinities(pairwise_epm_distances(ys, LC), 6.0)


class TestTsne:
    def test_degenerate_distances_rejected(self):
        with pytest.raises(EmbeddingError):
            tsne_from_distances(np.zeros((8, 8)), EmbedConfig(perplexity=2.0, iterations=5))

    def test_small_sample_warns(self, rng):
        ys = random_spd_stack(rng, 12, 3)
        with pytest.warns(UserWarning):
            rie_tsne(ys, LC, EmbedConfig(perplexity=10.0, iterations=5))

    def test_three_dimensional_output(self, rng):
        ys = random_spd_stack(rng, 15, 3)
        emb = rie_tsne(ys, LC, EmbedConfig(perplexity=4.0, iterations=40, out_dim=3))
        assert emb.points.shape == (15, 3)

    def test_deterministic_given_seed(self, rng):
        ys = random_spd_stack(rng, 20, 3)
        cfg = EmbedConfig(perplexity=5.0, iterations=60, seed=4)
        a = rie_tsne(ys, LC, cfg)
        b = rie_tsne(ys, LC, cfg)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.kl_trace, b.kl_trace)

    def test_kl_trace_descends_after_exaggeration(self):
        rng = make_rng(91)
        ys, _ = three_clusters(rng, per_cluster=15, n=4)
        cfg = EmbedConfig(perplexity=8.0, iterations=400, exaggeration_iters=120, seed=0)
        emb = rie_tsne(ys, LC, cfg)
        assert emb.kl_trace.shape == (400,)
        assert np.all(np.isfinite(emb.kl_trace))
        assert emb.kl_trace[-1] < emb.kl_trace[cfg.exaggeration_iters - 1]

    def test_three_cluster_recovery(self):
        rng = make_rng(99)
        ys, labels = three_clusters(rng)
        emb = rie_tsne(ys, LC, EmbedConfig(perplexity=10.0, iterations=600, seed=0))
        d2 = accel.pairwise_sq_dists(emb.points)
        np.fill_diagonal(d2, np.inf)
        nn = np.argsort(d2, axis=1)[:, :5]
        purity = np.mean([(labels[nn[i]] == labels[i]).mean() for i in range(len(labels))])
        assert purity >= 0.9

    def test_twin_points_embed_together(self, rng):
        # on unstructured data twin fusion depends on the descent trajectory
        # (true of t-SNE generally); this pinned run fuses them on both
        # kernel backends
        ys = random_spd_stack(rng, 60, 3, scale=0.8)
        ys[33] = ys[0]
        cfg = EmbedConfig(perplexity=15.0, iterations=500, learning_rate=100.0, seed=0)
        emb = rie_tsne(ys, LC, cfg)
        d2 = accel.pairwise_sq_dists(emb.points)
        np.fill_diagonal(d2, np.inf)
        assert np.argmin(d2[0]) == 33
        assert np.argmin(d2[33]) == 0

    def test_estimated_data_lands_near_truth(self):
        # qualitative reproduction: smoothed estimates embed closer to the
        # clean responses than the noisy inputs do
        from manifold_ilpr.bandwidth import select_bandwidth
        from manifold_ilpr.regression import Dataset, FitConfig, fit_at
        from manifold_ilpr.simulation import (
            TrueModel,
            _realization_rng,
            add_lognormal_noise_many,
            gen_covariates,
            true_response_many,
        )

        rng = _realization_rng(7, 1, 6, 0)
        model = TrueModel.draw(1, 6, rng)
        x = gen_covariates(60, 1, rng)
        y_true = true_response_many(model, x)
        y_noisy = add_lognormal_noise_many(y_true, 0.5, rng)
        ds = Dataset(x, y_noisy)
        cv = select_bandwidth(ds, 1, LC)
        est = fit_at(ds, x, FitConfig(1, cv.best_h), LC)
        emb = rie_tsne(
            np.concatenate([y_true, y_noisy, est]),
            LC,
            EmbedConfig(perplexity=20.0, iterations=600, seed=1),
        )
        pts = emb.points
        n = 60
        d_est = np.linalg.norm(pts[2 * n :] - pts[:n], axis=1).mean()
        d_noisy = np.linalg.norm(pts[n : 2 * n] - pts[:n], axis=1).mean()
        assert d_est / d_noisy < 1.0


class TestPga:
    def test_constant_sample_zero_scores(self, rng):
        y = random_spd(rng, 3)
        res = linearized_pga(np.stack([y] * 6), metric=LC, components=2)
        assert np.allclose(res.scores, 0.0, atol=1e-10)
        assert np.allclose(res.explained_variance, 0.0)

    def test_single_direction_dominates(self, rng):
        base = random_spd(rng, 3)
        direction = random_sym(rng, 3, 0.2)
        zs = spd.epm_forward(LC, base) + np.array(
            [t * spd.lc_differential(base, direction) for t in np.linspace(-1, 1, 10)]
        )
        ys = spd.epm_inverse_batch(LC, zs)
        res = linearized_pga(ys, metric=LC, components=2)
        assert res.explained_variance[0] >= 0.999

    def test_matches_reference_pca(self, rng):
        ys = random_spd_stack(rng, 15, 4)
        base = spd.karcher_mean(ys, LC)
        res = linearized_pga(ys, base=base, metric=LC, components=3)
        coords = tangent_coordinates(ys, base, LC)
        centered = coords - coords.mean(axis=0)
        cov = centered.T @ centered
        w, v = np.linalg.eigh(cov)
        order = np.argsort(w)[::-1][:3]
        for k, idx in enumerate(order):
            direction = v[:, idx]
            ref_scores = centered @ direction
            got = res.scores[:, k]
            sign = np.sign(np.dot(ref_scores, got)) or 1.0
            assert np.abs(got - sign * ref_scores).max() <= 1e-8

    def test_variance_fractions_shape(self, rng):
        ys = random_spd_stack(rng, 12, 4)
        res = linearized_pga(ys, metric=LC, components=6)
        assert np.all(np.diff(res.explained_variance) <= 1e-12)
        assert res.explained_variance.sum() <= 1.0 + 1e-12

    def test_full_rank_reconstruction(self, rng):
        ys = random_spd_stack(rng, 9, 3)
        dim = linalg.vech_len(3)
        res = linearized_pga(ys, metric=LC, components=dim)
        coords = tangent_coordinates(ys, res.base_point, LC)
        recon = res.tangent_mean + res.scores @ res.directions
        assert np.abs(recon - coords).max() <= 1e-8

    def test_ai_metric_tangent_map(self, rng):
        ys = random_spd_stack(rng, 10, 3)
        res = linearized_pga(ys, metric=spd.AiMetric(), components=2)
        assert res.scores.shape == (10, 2)
        assert np.all(np.isfinite(res.scores))

    def test_too_many_components_rejected(self, rng):
        ys = random_spd_stack(rng, 8, 3)
        with pytest.raises(DimensionError):
            linearized_pga(ys, metric=LC, components=7)
