"""Hold-out protocol, baselines and the benchmark harness."""

import math

import mpmath
import numpy as np
import pytest

from forumcd import (DataValidationError, Hyperparameters, HoldoutSplit,
                     PlantedSpec, SimilarityMatrix, benchmark,
                     evaluate_heldout, fit, holdout_split, masked_fit,
                     pred_avg, pred_zero, sample_planted, subsample)

mpmath.mp.dps = 50


def sim(entries) -> SimilarityMatrix:
    entries = np.asarray(entries)
    return SimilarityMatrix(entries,
                            tuple(f"u{i}" for i in range(entries.shape[0])))


def random_sim(seed, n, rate=3.0) -> SimilarityMatrix:
    rng = np.random.default_rng(seed)
    xe = rng.poisson(rate, (n, n))
    xe = np.triu(xe) + np.triu(xe, 1).T
    return sim(xe)


def single_cell_split(x_value: int, other: int = 1):
    """2x2 split holding out exactly the (0, 1) cell."""
    x = sim([[other, x_value], [x_value, other]])
    mask = np.array([[1.0, 0.0], [1.0, 1.0]])
    return HoldoutSplit(x=x, train_mask=mask, test_indices=((0, 1),))


class TestSubsample:
    def test_full_sample_preserves_multiset(self):
        x = random_sim(0, 12)
        sub = subsample(x, 12, seed=5)
        assert sorted(x.entries.ravel()) == sorted(sub.entries.ravel())
        assert sorted(sub.learner_ids) == sorted(x.learner_ids)

    def test_single_row_is_a_diagonal_entry(self):
        x = random_sim(1, 9)
        sub = subsample(x, 1, seed=2)
        assert sub.entries.shape == (1, 1)
        assert sub.entries[0, 0] in np.diag(x.entries)

    def test_output_symmetric(self):
        x = random_sim(2, 15)
        for seed in range(5):
            sub = subsample(x, 7, seed=seed)
            assert np.array_equal(sub.entries, sub.entries.T)

    def test_principal_submatrix(self):
        x = random_sim(3, 10)
        sub = subsample(x, 4, seed=9)
        idx = [x.learner_ids.index(lid) for lid in sub.learner_ids]
        assert np.array_equal(sub.entries, x.entries[np.ix_(idx, idx)])

    def test_oversized_request_rejected(self):
        with pytest.raises(DataValidationError):
            subsample(random_sim(4, 5), 6, seed=0)


class TestHoldoutSplit:
    def test_ten_percent_of_fifty_is_five_per_row(self):
        x = random_sim(10, 50)
        split = holdout_split(x, 0.1, seed=3)
        held_per_row = (split.train_mask == 0).sum(axis=1)
        assert (held_per_row == 5).all()
        assert len(split.test_indices) == 250

    def test_floor_semantics_small_matrix(self):
        x = random_sim(11, 10)
        split = holdout_split(x, 0.1, seed=3)
        assert ((split.train_mask == 0).sum(axis=1) == 1).all()

    def test_deterministic_per_seed(self):
        x = random_sim(12, 20)
        s1 = holdout_split(x, 0.1, seed=7)
        s2 = holdout_split(x, 0.1, seed=7)
        assert np.array_equal(s1.train_mask, s2.train_mask)
        assert s1.test_indices == s2.test_indices

    def test_every_row_keeps_training_data(self):
        x = random_sim(13, 8)
        split = holdout_split(x, 0.9, seed=1)
        assert (split.train_mask.sum(axis=1) >= 1).all()
        assert ((split.train_mask == 0).sum(axis=1) >= 1).all()

    def test_symmetric_masking_mirrors_pairs(self):
        x = random_sim(14, 20)
        split = holdout_split(x, 0.1, seed=5, symmetric=True)
        test = set(split.test_indices)
        assert all((j, i) in test for i, j in test)

    def test_fraction_bounds(self):
        x = random_sim(15, 10)
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(DataValidationError):
                holdout_split(x, bad, seed=0)

    def test_mask_and_indices_consistent(self):
        x = random_sim(16, 6)
        with pytest.raises(DataValidationError):
            HoldoutSplit(x=x, train_mask=np.ones((6, 6)),
                         test_indices=((0, 1),))


class TestMaskedFit:
    def test_all_ones_mask_identical_to_fit(self):
        x = random_sim(20, 12)
        split = HoldoutSplit(x=x, train_mask=np.ones((12, 12)),
                             test_indices=())
        hp = Hyperparameters(k0=4, n_iter=80)
        rf = fit(x, hp, seed=3)
        rm = masked_fit(split, hp, seed=3)
        assert rf.energy_trace == rm.energy_trace
        assert np.array_equal(rf.model.w, rm.model.w)
        assert rf.final_data_nll == rm.final_data_nll

    def test_blind_to_masked_entries(self):
        x = random_sim(21, 16)
        split = holdout_split(x, 0.15, seed=2, symmetric=True)
        hp = Hyperparameters(k0=4, n_iter=60)
        r1 = masked_fit(split, hp, seed=8)

        entries = x.entries.copy()
        test = set(split.test_indices)
        for i, j in test:
            if i <= j:  # symmetric split, so the mirror is masked too
                entries[i, j] += 11
                entries[j, i] += 11
        x2 = sim(entries)
        split2 = HoldoutSplit(x=x2, train_mask=split.train_mask,
                              test_indices=split.test_indices)
        r2 = masked_fit(split2, hp, seed=8)
        assert r1.energy_trace == r2.energy_trace
        assert np.array_equal(r1.model.w, r2.model.w)
        assert r1.final_data_nll == r2.final_data_nll

    def test_masked_objective_non_increasing(self):
        for seed in range(10):
            x = random_sim(100 + seed, 20)
            split = holdout_split(x, 0.1, seed=seed)
            r = masked_fit(split, Hyperparameters(k0=5, n_iter=80), seed=seed)
            trace = np.array(r.energy_trace)
            assert (np.diff(trace) <= 1e-8 * abs(trace[0])).all()

    def test_row_without_observations_rejected(self):
        x = random_sim(22, 4)
        mask = np.ones((4, 4))
        mask[2, :] = 0.0
        test = tuple((2, j) for j in range(4))
        split = HoldoutSplit(x=x, train_mask=mask, test_indices=test)
        with pytest.raises(DataValidationError, match="observed"):
            masked_fit(split, Hyperparameters(k0=2, n_iter=10), seed=0)


class TestEvaluateHeldout:
    def test_perfect_predictions(self):
        x = random_sim(30, 10)
        split = holdout_split(x, 0.2, seed=4)
        rmse, nll = evaluate_heldout(split, x.entries.astype(float) + 0.0)
        assert rmse == 0.0

    def test_hand_arithmetic(self):
        # held-out truth {0, 2} against predictions {1, 1}
        x = sim([[1, 0, 5], [0, 1, 2], [5, 2, 1]])
        mask = np.ones((3, 3))
        mask[0, 1] = mask[1, 2] = 0.0
        split = HoldoutSplit(x=x, train_mask=mask,
                             test_indices=((0, 1), (1, 2)))
        rmse, _ = evaluate_heldout(split, np.ones((3, 3)))
        assert rmse == pytest.approx(1.0, abs=1e-12)

    def test_zero_rate_gives_undefined_nll(self):
        split = single_cell_split(3)
        rmse, nll = evaluate_heldout(split, pred_zero(split))
        assert nll is None
        assert rmse == pytest.approx(3.0)

    def test_matches_high_precision_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            xv = int(rng.integers(0, 30))
            rate = float(rng.uniform(1e-3, 30.0))
            split = single_cell_split(xv)
            pred = np.ones((2, 2))
            pred[0, 1] = rate
            _, nll = evaluate_heldout(split, pred)
            r = mpmath.mpf(rate)
            oracle = -float(xv * mpmath.log(r) - r
                            - mpmath.log(mpmath.factorial(xv)))
            assert nll == pytest.approx(oracle, abs=1e-9)

    def test_negative_prediction_rejected(self):
        split = single_cell_split(1)
        pred = np.full((2, 2), -0.5)
        with pytest.raises(DataValidationError):
            evaluate_heldout(split, pred)

    def test_metric_reads_only_test_cells(self):
        x = random_sim(32, 8)
        split = holdout_split(x, 0.2, seed=6, symmetric=True)
        entries = x.entries.copy()
        # perturb one observed symmetric pair
        obs = [(i, j) for i in range(8) for j in range(8)
               if split.train_mask[i, j] == 1 and split.train_mask[j, i] == 1
               and i < j]
        i, j = obs[0]
        entries[i, j] += 5
        entries[j, i] += 5
        split2 = HoldoutSplit(x=sim(entries), train_mask=split.train_mask,
                              test_indices=split.test_indices)
        pred = np.full((8, 8), 2.0)
        assert evaluate_heldout(split, pred) == evaluate_heldout(split2, pred)


class TestBaselines:
    def test_pred_avg_is_training_mean(self):
        x = sim([[0, 2], [2, 0]])
        mask = np.array([[1.0, 0.0], [1.0, 1.0]])
        split = HoldoutSplit(x=x, train_mask=mask, test_indices=((0, 1),))
        # observed entries are {0, 2, 0} -> mean 2/3
        assert pred_avg(split)[0, 1] == pytest.approx(2.0 / 3.0)

    def test_pred_zero_is_zero(self):
        split = single_cell_split(2)
        assert (pred_zero(split) == 0.0).all()

    def test_all_zero_training_makes_baselines_coincide(self):
        x = sim(np.zeros((4, 4), dtype=int))
        split = holdout_split(x, 0.25, seed=0)
        assert np.array_equal(pred_avg(split), pred_zero(split))

    def test_pred_zero_rmse_is_root_mean_square_of_truth(self):
        x = random_sim(33, 12)
        split = holdout_split(x, 0.2, seed=3)
        rmse, _ = evaluate_heldout(split, pred_zero(split))
        rows = [i for i, _ in split.test_indices]
        cols = [j for _, j in split.test_indices]
        truth = x.entries[rows, cols].astype(float)
        assert rmse == math.sqrt(np.mean(truth ** 2))


@pytest.fixture(scope="module")
def planted():
    _, x = sample_planted(PlantedSpec(
        n=80, k=3, sizes=(27, 27, 26), within_rate=8.0, between_rate=0.5,
        seed=55))
    return x


class TestBenchmark:

    def test_protocol_shape(self, planted):
        report = benchmark(planted, n_subsets=3, subset_size=20, fraction=0.1,
                           hp=Hyperparameters(k0=6, n_iter=150), seed=1)
        assert [r.model_name for r in report.rows] == \
            ["BNMF", "Pred-Avg", "Pred-0"]
        assert report.n_subsets == 3 and report.subset_size == 20
        assert report.rows[2].nll is None
        assert len(report.subset_scores) == 3

    def test_reproducible_end_to_end(self, planted):
        hp = Hyperparameters(k0=6, n_iter=150)
        r1 = benchmark(planted, 2, 20, 0.1, hp, seed=9)
        r2 = benchmark(planted, 2, 20, 0.1, hp, seed=9)
        assert r1 == r2
        assert r1.to_json() == r2.to_json()

    def test_ordering_on_planted_data(self, planted):
        report = benchmark(planted, n_subsets=5, subset_size=30, fraction=0.1,
                           hp=Hyperparameters(k0=6, n_iter=300), seed=2)
        bnmf, avg, zero = report.rows
        assert bnmf.rmse < avg.rmse < zero.rmse

    def test_degenerate_single_subset(self):
        x = random_sim(40, 10)
        report = benchmark(x, n_subsets=1, subset_size=10, fraction=0.1,
                           hp=Hyperparameters(k0=3, n_iter=80), seed=0)
        assert report.n_subsets == 1

    def test_table_layout(self, planted):
        report = benchmark(planted, n_subsets=2, subset_size=20, fraction=0.1,
                           hp=Hyperparameters(k0=5, n_iter=100), seed=3)
        table = report.format_table()
        lines = table.strip().split("\n")
        assert len(lines) == 3
        assert lines[1].startswith("RMSE")
        assert lines[2].startswith("NLL")
        assert lines[2].rstrip().endswith("-")
        assert "BNMF" in lines[0] and "Pred-Avg" in lines[0]
