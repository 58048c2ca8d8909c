"""Synthetic generators: planted partitions and model draws."""

import numpy as np
import pytest

from forumcd import (DataValidationError, Hyperparameters, PlantedSpec,
                     fit, sample_generative, sample_planted)


class TestPlanted:
    def test_zero_between_rate_is_block_diagonal(self):
        spec = PlantedSpec(n=30, k=3, sizes=(10, 10, 10), within_rate=5.0,
                           between_rate=0.0, seed=1)
        labels, x = sample_planted(spec)
        cross = labels[:, None] != labels[None, :]
        assert (x.entries[cross] == 0).all()

    def test_smallest_instance(self):
        spec = PlantedSpec(n=2, k=2, sizes=(1, 1), within_rate=4.0,
                           between_rate=0.5, seed=2)
        labels, x = sample_planted(spec)
        assert x.entries.shape == (2, 2)
        assert np.array_equal(labels, [0, 1])

    def test_deterministic_per_seed(self):
        spec = PlantedSpec(n=20, k=2, sizes=(10, 10), within_rate=6.0,
                           between_rate=1.0, seed=9)
        _, x1 = sample_planted(spec)
        _, x2 = sample_planted(spec)
        assert np.array_equal(x1.entries, x2.entries)

    def test_symmetric_output(self):
        spec = PlantedSpec(n=25, k=2, sizes=(12, 13), within_rate=6.0,
                           between_rate=1.0, seed=4)
        _, x = sample_planted(spec)
        assert np.array_equal(x.entries, x.entries.T)

    def test_rates_match_within_three_sigma(self):
        # pooled upper-triangle residuals against the planted rates
        total_resid = 0.0
        total_var = 0.0
        for seed in range(50):
            spec = PlantedSpec(n=20, k=2, sizes=(10, 10), within_rate=5.0,
                               between_rate=1.0, seed=500 + seed)
            labels, x = sample_planted(spec)
            same = labels[:, None] == labels[None, :]
            rates = np.where(same, 5.0, 1.0)
            iu = np.triu_indices(20)
            total_resid += (x.entries[iu] - rates[iu]).sum()
            total_var += rates[iu].sum()
        assert abs(total_resid) <= 3.0 * np.sqrt(total_var)

    def test_spec_validation(self):
        with pytest.raises(DataValidationError):
            PlantedSpec(n=10, k=2, sizes=(5, 4), within_rate=5.0,
                        between_rate=1.0, seed=0)
        with pytest.raises(DataValidationError):
            PlantedSpec(n=10, k=2, sizes=(5, 5), within_rate=1.0,
                        between_rate=1.0, seed=0)
        with pytest.raises(DataValidationError):
            PlantedSpec(n=10, k=1, sizes=(5, 5), within_rate=5.0,
                        between_rate=1.0, seed=0)


class TestGenerative:
    def test_huge_precision_shrinks_everything(self):
        # beta ~ Gamma(1e6, rate 1) concentrates near 1e6, so factor
        # entries sit at the 1e-3 scale and counts are almost surely zero
        hp = Hyperparameters(a=1e6, b=1.0)
        model, x = sample_generative(30, 2, hp, seed=3)
        assert model.w.max() < 0.01
        assert x.entries.sum() == 0

    def test_deterministic_per_seed(self):
        hp = Hyperparameters()
        m1, x1 = sample_generative(15, 3, hp, seed=8)
        m2, x2 = sample_generative(15, 3, hp, seed=8)
        assert np.array_equal(m1.w, m2.w)
        assert np.array_equal(x1.entries, x2.entries)

    def test_counts_match_rates_within_three_sigma(self):
        hp = Hyperparameters(a=5.0, b=2.0)
        total_resid = 0.0
        total_var = 0.0
        for seed in range(200):
            model, x = sample_generative(10, 2, hp, seed=1000 + seed)
            rates = model.rates()
            iu = np.triu_indices(10)
            total_resid += (x.entries[iu] - rates[iu]).sum()
            total_var += rates[iu].sum()
        assert abs(total_resid) <= 3.0 * np.sqrt(total_var)

    def test_symmetric_output(self):
        _, x = sample_generative(20, 3, Hyperparameters(), seed=5)
        assert np.array_equal(x.entries, x.entries.T)

    def test_generated_data_flows_through_fit(self):
        _, x = sample_generative(15, 2, Hyperparameters(), seed=6)
        r = fit(x, Hyperparameters(k0=4, n_iter=60), seed=0)
        assert r.iterations_run >= 1

    def test_invalid_sizes_rejected(self):
        with pytest.raises(DataValidationError):
            sample_generative(0, 2, Hyperparameters(), seed=0)
