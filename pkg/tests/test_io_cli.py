import json
import time

import numpy as np
import pytest

from manifold_ilpr import cli, spd
from manifold_ilpr import io as mio
from manifold_ilpr.errors import DomainError, ParseError
from manifold_ilpr.regression import FitConfig, ilpr_epm_fit_many
from manifold_ilpr.spd import EpmMetric

from conftest import random_spd_stack

LE = EpmMetric(spd.LOG_EUCLIDEAN)


def write_sample_dataset(path, rng, num=12, p=1, n=3):
    x = rng.standard_normal((num, p))
    y = random_spd_stack(rng, num, n, 0.4)
    mio.write_dataset(path, x, y)
    return x, y


class TestDatasetFiles:
    def test_round_trip_exact(self, tmp_path, rng):
        path = tmp_path / "data.csv"
        x, y = write_sample_dataset(path, rng)
        ds, meta = mio.read_dataset(path)
        assert meta["n"] == "3" and meta["p"] == "1" and meta["N"] == "12"
        assert np.array_equal(ds.x, x)
        assert np.array_equal(ds.y, y)  # 17 significant digits round-trip doubles

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# n=2\n# p=1\nx0,y0,y1,y2\n1.0,1.0,0.0,1.0\n1.0,oops,0.0,1.0\n")
        with pytest.raises(ParseError) as err:
            mio.read_dataset(path)
        assert err.value.line == 5

    def test_wrong_width_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# n=2\n# p=1\nx0,y0,y1,y2\n1.0,1.0,0.0\n")
        with pytest.raises(ParseError):
            mio.read_dataset(path)

    def test_non_pd_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("# n=2\n# p=1\nx0,y0,y1,y2\n0.0,1.0,0.0,-1.0\n")
        with pytest.raises(DomainError):
            mio.read_dataset(path)

    def test_missing_metadata_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x0,y0\n1.0,1.0\n")
        with pytest.raises(ParseError):
            mio.read_dataset(path)


class TestCliSimulate:
    def test_outputs_and_determinism(self, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        args = ["simulate", "--p", "1", "--n", "3", "--num-samples", "100", "--seed", "9"]
        t0 = time.perf_counter()
        assert cli.main(args + ["--out", str(out1)]) == 0
        assert time.perf_counter() - t0 < 5.0
        assert cli.main(args + ["--out", str(out2)]) == 0
        for suffix in (".true.csv", ".noisy.csv"):
            a = (tmp_path / ("a" + suffix)).read_bytes()
            b = (tmp_path / ("b" + suffix)).read_bytes()
            assert a == b
        manifest = json.loads((tmp_path / "a.manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["parameters"]["seed"] == 9

    def test_output_matches_in_memory_generation(self, tmp_path):
        out = tmp_path / "sim"
        assert cli.main(
            ["simulate", "--p", "2", "--n", "3", "--num-samples", "25",
             "--sigma", "0.4", "--seed", "31", "--out", str(out)]
        ) == 0
        from manifold_ilpr.simulation import (
            TrueModel,
            _realization_rng,
            add_lognormal_noise_many,
            gen_covariates,
            true_response_many,
        )

        rng = _realization_rng(31, 2, 3, 0)
        model = TrueModel.draw(2, 3, rng)
        x = gen_covariates(25, 2, rng)
        y_true = true_response_many(model, x)
        y_noisy = add_lognormal_noise_many(y_true, 0.4, rng)
        ds_true, _ = mio.read_dataset(f"{out}.true.csv")
        ds_noisy, _ = mio.read_dataset(f"{out}.noisy.csv")
        assert np.array_equal(ds_true.x, x)
        assert np.array_equal(ds_true.y, y_true)
        assert np.array_equal(ds_noisy.y, y_noisy)

    def test_sigma_zero_files_identical(self, tmp_path):
        out = tmp_path / "clean"
        assert cli.main(
            ["simulate", "--p", "1", "--n", "3", "--num-samples", "20",
             "--sigma", "0", "--seed", "3", "--out", str(out)]
        ) == 0
        ds_true, _ = mio.read_dataset(f"{out}.true.csv")
        ds_noisy, _ = mio.read_dataset(f"{out}.noisy.csv")
        assert np.array_equal(ds_true.y, ds_noisy.y)

    def test_unwritable_path_is_io_error(self, tmp_path):
        code = cli.main(
            ["simulate", "--p", "1", "--n", "3", "--out", "/nonexistent/dir/x"]
        )
        assert code == 2


class TestCliFit:
    def test_degree_zero_single_row(self, tmp_path, rng):
        data = tmp_path / "one.csv"
        x = np.array([[0.5]])
        y = random_spd_stack(rng, 1, 3, 0.4)
        mio.write_dataset(data, x, y)
        out = tmp_path / "fit"
        code = cli.main(
            ["fit", "--data", str(data), "--metric", "log-cholesky", "--degree", "0",
             "--bandwidth", "1.0", "--ridge", "0", "--out", str(out)]
        )
        assert code == 0
        est, _ = mio.read_dataset(f"{out}.csv")
        assert np.abs(est.y[0] - y[0]).max() <= 1e-12

    def test_nadaraya_watson_equality(self, tmp_path, rng):
        data = tmp_path / "d.csv"
        x, y = write_sample_dataset(data, rng, num=15)
        out = tmp_path / "fit"
        h = 0.8
        code = cli.main(
            ["fit", "--data", str(data), "--metric", "log-euclidean", "--degree", "0",
             "--bandwidth", str(h), "--ridge", "0", "--out", str(out)]
        )
        assert code == 0
        est, meta = mio.read_dataset(f"{out}.csv")
        flat = spd.epm_forward_batch(LE, y)
        for i in range(15):
            w = np.exp(-((x - x[i]) ** 2).sum(axis=1) / (2 * h * h))
            nw = spd.epm_inverse(LE, np.einsum("j,jkl->kl", w / w.sum(), flat))
            assert np.abs(est.y[i] - nw).max() <= 1e-12
        assert meta["metric"] == "log-euclidean"

    def test_noiseless_recovery_both_charts(self, tmp_path, rng):
        # diagonal log-linear responses are exactly linear in the
        # log-euclidean chart and in the log-cholesky chart alike
        d = np.array([0.7, -0.4, 0.2])
        x = np.linspace(-1.5, 1.5, 40).reshape(-1, 1)
        y = np.stack([np.diag(np.exp(xi[0] * d)) for xi in x])
        data = tmp_path / "loglin.csv"
        mio.write_dataset(data, x, y)
        from manifold_ilpr.simulation import rmse_ai

        for metric in ("log-cholesky", "log-euclidean"):
            out = tmp_path / f"fit-{metric}"
            code = cli.main(
                ["fit", "--data", str(data), "--metric", metric,
                 "--degree", "1", "--cv", "--ridge", "0", "--out", str(out)]
            )
            assert code == 0
            est, _ = mio.read_dataset(f"{out}.csv")
            assert rmse_ai(est.y, y) <= 1e-6

    def test_query_file(self, tmp_path, rng):
        data = tmp_path / "d.csv"
        write_sample_dataset(data, rng, num=10)
        query = tmp_path / "q.csv"
        query.write_text("x0\n0.0\n0.5\n")
        out = tmp_path / "fit"
        code = cli.main(
            ["fit", "--data", str(data), "--metric", "log-cholesky",
             "--bandwidth", "1.0", "--query", str(query), "--out", str(out)]
        )
        assert code == 0
        est, _ = mio.read_dataset(f"{out}.csv")
        assert est.num_samples == 2

    def test_parse_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("# n=2\n# p=1\nx0,y0,y1,y2\n1.0,zzz,0.0,1.0\n")
        code = cli.main(
            ["fit", "--data", str(bad), "--metric", "log-cholesky",
             "--bandwidth", "1.0", "--out", str(tmp_path / "o")]
        )
        assert code == 3

    def test_non_pd_data_exit_code(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("# n=2\n# p=1\nx0,y0,y1,y2\n0.0,1.0,0.0,-1.0\n")
        code = cli.main(
            ["fit", "--data", str(bad), "--metric", "log-cholesky",
             "--bandwidth", "1.0", "--out", str(tmp_path / "o")]
        )
        assert code == 4

    def test_numeric_failure_exit_code(self, tmp_path):
        # extrapolating a cholesky-factor trend past zero diagonal leaves the
        # chart codomain: a numeric failure, exit 5
        data = tmp_path / "trend.csv"
        ells = np.stack([np.diag([1.0, 1.0]), np.diag([3.0, 1.0])])
        ys = np.einsum("qij,qkj->qik", ells, ells)
        mio.write_dataset(data, np.array([[0.0], [1.0]]), ys)
        query = tmp_path / "q.csv"
        query.write_text("x0\n-2.0\n")
        code = cli.main(
            ["fit", "--data", str(data), "--metric", "cholesky", "--degree", "1",
             "--bandwidth", "50.0", "--ridge", "0", "--query", str(query),
             "--out", str(tmp_path / "o")]
        )
        assert code == 5


class TestCliBenchmark:
    def test_row_count_and_determinism(self, tmp_path):
        args = [
            "benchmark", "--grid", "1:1,3:3", "--realizations", "2",
            "--num-samples", "30", "--seed", "4",
        ]
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert cli.main(args + ["--out", str(out1)]) == 0
        assert cli.main(args + ["--out", str(out2), "--threads", "4"]) == 0
        rows1 = mio.read_report_csv(f"{out1}.csv")
        rows2 = mio.read_report_csv(f"{out2}.csv")
        assert len(rows1) == 2 * 3
        for a, b in zip(rows1, rows2):
            assert a["rmse"] == b["rmse"]
            assert a["h_selected"] == b["h_selected"]

    def test_method_subset(self, tmp_path):
        out = tmp_path / "r"
        code = cli.main(
            ["benchmark", "--grid", "1:1,3:3", "--realizations", "1",
             "--num-samples", "25", "--methods", "ILPR-LC", "--out", str(out)]
        )
        assert code == 0
        rows = mio.read_report_csv(f"{out}.csv")
        assert [r["method"] for r in rows] == ["ILPR-LC"]

    def test_bad_grid_exit_code(self, tmp_path):
        code = cli.main(["benchmark", "--grid", "nope", "--out", str(tmp_path / "r")])
        assert code == 4


class TestCliEmbed:
    def _simulated(self, tmp_path):
        sim = tmp_path / "sim"
        assert cli.main(
            ["simulate", "--p", "1", "--n", "3", "--num-samples", "30",
             "--seed", "8", "--out", str(sim)]
        ) == 0
        return sim

    def test_tsne_row_count(self, tmp_path):
        sim = self._simulated(tmp_path)
        out = tmp_path / "emb"
        code = cli.main(
            ["embed", "--data", f"true={sim}.true.csv", "--data", f"noisy={sim}.noisy.csv",
             "--method", "tsne", "--perplexity", "8", "--iters", "120",
             "--seed", "1", "--out", str(out)]
        )
        assert code == 0
        lines = [
            line for line in (tmp_path / "emb.csv").read_text().splitlines()
            if line and not line.startswith("#")
        ]
        assert len(lines) - 1 == 60
        labels = {line.split(",")[-1] for line in lines[1:]}
        assert labels == {"true", "noisy"}

    def test_pga_full_reconstruction(self, tmp_path):
        sim = self._simulated(tmp_path)
        out = tmp_path / "pga"
        code = cli.main(
            ["embed", "--data", f"{sim}.noisy.csv", "--method", "pga",
             "--metric", "log-cholesky", "--components", "full", "--out", str(out)]
        )
        assert code == 0
        # scores + directions + mean reproduce the tangent coordinates
        rows = [
            line.split(",") for line in (tmp_path / "pga.csv").read_text().splitlines()
            if line and not line.startswith("#")
        ][1:]
        scores = np.array([[float(v) for v in row[1:-1]] for row in rows])
        dir_rows = [
            line.split(",") for line in (tmp_path / "pga.directions.csv").read_text().splitlines()
            if line and not line.startswith("#")
        ][1:]
        mean = np.array([float(v) for v in dir_rows[0]])
        directions = np.array([[float(v) for v in row] for row in dir_rows[1:]])
        base_line = next(
            line for line in (tmp_path / "pga.directions.csv").read_text().splitlines()
            if line.startswith("# base_vech=")
        )
        from manifold_ilpr.linalg import vech_inv
        from manifold_ilpr.embedding import tangent_coordinates

        base = vech_inv([float(v) for v in base_line.split("=", 1)[1].split(";")])
        ds, _ = mio.read_dataset(f"{sim}.noisy.csv")
        coords = tangent_coordinates(ds.y, base, EpmMetric(spd.LOG_CHOLESKY))
        recon = mean + scores @ directions
        assert np.abs(recon - coords).max() <= 1e-8

    def test_pga_affine_invariant_metric(self, tmp_path):
        sim = self._simulated(tmp_path)
        out = tmp_path / "aipga"
        code = cli.main(
            ["embed", "--data", f"{sim}.noisy.csv", "--method", "pga",
             "--metric", "affine-invariant", "--components", "2", "--out", str(out)]
        )
        assert code == 0
        code = cli.main(
            ["embed", "--data", f"{sim}.noisy.csv", "--method", "tsne",
             "--metric", "affine-invariant", "--out", str(tmp_path / "bad")]
        )
        assert code == 4  # no flat chart to drive t-SNE distances

    def test_manifest_lists_outputs(self, tmp_path):
        sim = self._simulated(tmp_path)
        out = tmp_path / "emb"
        cli.main(
            ["embed", "--data", f"{sim}.true.csv", "--method", "pga",
             "--components", "2", "--out", str(out)]
        )
        manifest = json.loads((tmp_path / "emb.manifest.json").read_text())
        assert f"{out}.csv" in manifest["outputs"]
        assert len(manifest["parameters"]["explained_variance"]) == 2


class TestFitBatchConsistency:
    def test_cli_matches_library(self, tmp_path, rng):
        data = tmp_path / "d.csv"
        x, y = write_sample_dataset(data, rng, num=10)
        out = tmp_path / "fit"
        cli.main(
            ["fit", "--data", str(data), "--metric", "log-euclidean", "--degree", "1",
             "--bandwidth", "0.9", "--out", str(out)]
        )
        est, _ = mio.read_dataset(f"{out}.csv")
        from manifold_ilpr.regression import Dataset

        ref = ilpr_epm_fit_many(Dataset(x, y), x, FitConfig(1, 0.9), LE)
        assert np.abs(est.y - ref).max() <= 1e-12
