import numpy as np
import pytest

from agrishare.errors import AgriShareError
from agrishare.evaluation import (
    PowerConfig,
    UtilityConfig,
    aggregated_cluster_model,
    aggregated_views,
    centralized_accuracy,
    median_by_epsilon,
    power_analysis,
    power_sweep,
    table4_experiment,
    utility_accuracy,
    utility_predictions,
    utility_sweep,
    write_csv,
)
from agrishare.ldp import NoisyMatrix, laplace_matrix
from agrishare.pca import TransformedMatrix
from agrishare.sandbox import kmeans_fit_rows

from oracles import min_distances_bruteforce

FP = "a" * 16


def _tm(rows):
    return TransformedMatrix(rows=np.asarray(rows, dtype=np.float64), model_fingerprint=FP)


def _nm(rows, eps=25.0):
    return NoisyMatrix(rows=np.asarray(rows, dtype=np.float64), epsilon=eps,
                       model_fingerprint=FP)


class TestPowerAnalysis:
    def test_members_with_vanishing_noise_power_one(self):
        rng = np.random.default_rng(0)
        member = rng.uniform(-3, 3, (150, 2))
        control = rng.uniform(-3, 3, (300, 2))
        shared = _nm(member + laplace_matrix(1e-9, member.shape, rng), eps=1e9)
        rep = power_analysis(shared, _tm(member), _tm(control),
                             PowerConfig(n_control=100, n_case=100, seed=1))
        assert rep.power >= 0.95

    def test_null_case_power_near_fpr(self):
        rng = np.random.default_rng(1)
        member = rng.uniform(-3, 3, (200, 2))
        outsiders = rng.uniform(-3, 3, (800, 2))
        powers = []
        for trial in range(20):
            shared = _nm(member + laplace_matrix(0.3, member.shape,
                                                 np.random.default_rng(100 + trial)))
            rep = power_analysis(shared, _tm(outsiders[:400]), _tm(outsiders[400:]),
                                 PowerConfig(n_control=150, n_case=150, seed=trial))
            powers.append(rep.power)
        med = float(np.median(powers))
        assert abs(med - 0.05) <= 0.05

    def test_threshold_calibration_exact(self):
        rng = np.random.default_rng(2)
        member = rng.uniform(-3, 3, (100, 2))
        control = rng.uniform(-3, 3, (200, 2))
        shared = _nm(member + laplace_matrix(0.2, member.shape, rng))
        cfg = PowerConfig(n_control=180, n_case=50, seed=3)
        rep = power_analysis(shared, _tm(member), _tm(control), cfg)
        # recompute: exactly ceil(fpr * n_control) controls at or below threshold
        sel = np.random.default_rng(3).choice(200, size=180, replace=False)
        dists = min_distances_bruteforce(control[sel], shared.rows)
        assert (dists <= rep.threshold).sum() == int(np.ceil(0.05 * 180))

    def test_matches_all_pairs_oracle_and_deterministic(self, sparse_pipeline):
        pipe = sparse_pipeline
        share = pipe.make_share("market_0", 25.0, seed=4)
        cfg = PowerConfig(seed=9)
        r1 = power_analysis(share, pipe.transformed["market_0"], pipe.global_transformed, cfg)
        r2 = power_analysis(share, pipe.transformed["market_0"], pipe.global_transformed, cfg)
        assert r1 == r2
        # brute-force recomputation of both distance sets
        rng = np.random.default_rng(9)
        n_control = min(200, pipe.global_transformed.n)
        ctrl_idx = rng.choice(pipe.global_transformed.n, size=n_control, replace=False)
        case_idx = rng.choice(pipe.transformed["market_0"].n,
                              size=min(200, pipe.transformed["market_0"].n), replace=False)
        ctrl = min_distances_bruteforce(pipe.global_transformed.rows[ctrl_idx], share.rows)
        case = min_distances_bruteforce(pipe.transformed["market_0"].rows[case_idx], share.rows)
        m = int(np.ceil(0.05 * n_control))
        thr = np.sort(ctrl)[m - 1]
        assert abs(r1.threshold - thr) <= 1e-12
        assert abs(r1.power - float((case <= thr).mean())) <= 1e-12

    def test_fingerprint_checked(self):
        shared = _nm(np.zeros((10, 2)))
        other = TransformedMatrix(rows=np.zeros((10, 2)), model_fingerprint="b" * 16)
        with pytest.raises(AgriShareError):
            power_analysis(shared, other, _tm(np.zeros((10, 2))), PowerConfig())

    def test_power_in_unit_interval(self, sparse_pipeline):
        pipe = sparse_pipeline
        share = pipe.make_share("market_1", 15.0, seed=0)
        rep = power_analysis(share, pipe.transformed["market_1"],
                             pipe.global_transformed, PowerConfig(seed=0))
        assert 0.0 <= rep.power <= 1.0
        assert rep.threshold >= 0.0


class TestUtility:
    def _well_separated(self):
        rng = np.random.default_rng(5)
        clean = np.vstack([rng.standard_normal((150, 2)) * 0.3 + c
                           for c in ([0, 0], [30, 0], [0, 30], [30, 30])])
        return clean

    def test_zero_noise_accuracies_equal_exactly(self):
        clean_rows = self._well_separated()
        clean = _tm(clean_rows)
        noisy = _nm(clean_rows.copy(), eps=float("inf"))
        cm = kmeans_fit_rows(clean_rows, 4, seed=0)
        rep = utility_accuracy(clean, noisy, cm, "logreg", UtilityConfig(seed=0))
        assert rep.accuracy_noisy == rep.accuracy_clean

    def test_margin_dominates_small_noise(self):
        clean_rows = self._well_separated()
        rng = np.random.default_rng(6)
        noisy = _nm(clean_rows + laplace_matrix(0.05, clean_rows.shape, rng))
        cm = kmeans_fit_rows(clean_rows, 4, seed=0)
        rep = utility_accuracy(_tm(clean_rows), noisy, cm, "logreg", UtilityConfig(seed=0))
        assert rep.accuracy_noisy >= 0.99

    def test_row_alignment_checked(self):
        clean_rows = self._well_separated()
        cm = kmeans_fit_rows(clean_rows, 4, seed=0)
        with pytest.raises(AgriShareError):
            utility_accuracy(_tm(clean_rows), _nm(clean_rows[:-1]), cm, "logreg",
                             UtilityConfig())

    def test_degenerate_single_cluster_rejected(self):
        rows = np.random.default_rng(0).standard_normal((50, 2))
        cm = kmeans_fit_rows(rows, 1, seed=0)
        with pytest.raises(AgriShareError, match="degenerate"):
            utility_accuracy(_tm(rows), _nm(rows.copy()), cm, "logreg", UtilityConfig())

    @pytest.mark.parametrize("kind", ["logreg", "gnb", "svm"])
    def test_all_classifiers_run(self, pipeline, kind):
        cm = aggregated_cluster_model(pipeline)
        clean, noisy = aggregated_views(pipeline, 25.0, seed=0)
        rep = utility_accuracy(clean, noisy, cm, kind,
                               UtilityConfig(seed=0, train_on_noisy=True))
        assert 0.0 <= rep.accuracy_noisy <= 1.0
        assert 0.0 <= rep.accuracy_clean <= 1.0


class TestTable4:
    def test_structure_and_determinism(self, crop_data, pipeline):
        reports, gap, runs = table4_experiment(crop_data, pipeline, seeds=[0, 1])
        assert [r.classifier for r in reports] == ["gnb", "logreg", "svm"]
        assert len(runs) == 6
        reports2, gap2, _ = table4_experiment(crop_data, pipeline, seeds=[0, 1])
        assert gap == gap2
        assert [(r.accuracy_noisy, r.accuracy_clean) for r in reports] == \
               [(r.accuracy_noisy, r.accuracy_clean) for r in reports2]

    def test_centralized_accuracy_bounds(self, crop_data):
        acc = centralized_accuracy(crop_data, "gnb", seed=0)
        assert 0.9 <= acc <= 1.0


class TestSweeps:
    def test_power_sweep_rows_and_median(self, sparse_pipeline):
        rows = power_sweep(sparse_pipeline, [20.0, 40.0], seeds=[0, 1])
        assert len(rows) == 4
        med = median_by_epsilon(rows, "power")
        assert [m["epsilon"] for m in med] == [20.0, 40.0]
        for m in med:
            assert m["q25"] <= m["median"] <= m["q75"]

    def test_utility_sweep_deterministic(self, pipeline):
        a = utility_sweep(pipeline, [25.0], seeds=[0], classifiers=("gnb",))
        b = utility_sweep(pipeline, [25.0], seeds=[0], classifiers=("gnb",))
        assert a == b

    def test_write_csv_deterministic(self, tmp_path, sparse_pipeline):
        rows = power_sweep(sparse_pipeline, [25.0], seeds=[0])
        write_csv(rows, ["epsilon", "seed", "threshold", "power"], tmp_path / "a.csv")
        write_csv(rows, ["epsilon", "seed", "threshold", "power"], tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestUtilityAtInfinity:
    def test_bit_identical_predictions_at_1e9(self, pipeline):
        cm = aggregated_cluster_model(pipeline)
        clean, noisy = aggregated_views(pipeline, 1e9, seed=0)
        cfg = UtilityConfig(seed=0, train_on_noisy=False)
        pred_noisy, pred_clean = utility_predictions(clean, noisy, cm, "logreg", cfg)
        assert np.array_equal(pred_noisy, pred_clean)
        rep = utility_accuracy(clean, noisy, cm, "logreg", cfg)
        assert rep.accuracy_noisy == rep.accuracy_clean
