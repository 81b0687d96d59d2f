"""Candidate-set synthesis: degenerate q values, closed-form statistics,
determinism, and the serialization round trip."""

import numpy as np
import pytest

from pzsl.candidates import (
    PartialDataset,
    candidate_stats,
    load_candidates,
    save_candidates,
    synthesize_candidates,
)
from pzsl.errors import DataError, ParameterError


def make_truth(rng, n, q_classes):
    return rng.integers(0, q_classes, size=n)


class TestSynthesize:
    def test_q_zero_gives_singletons(self):
        truth = make_truth(np.random.default_rng(0), 200, 5)
        ds = synthesize_candidates(truth, num_seen=5, q=0.0, seed=1)
        sizes = ds.candidate_mask.sum(axis=1)
        assert (sizes == 1).all()
        assert ds.candidate_mask[np.arange(200), truth].all()

    def test_q_one_gives_full_sets(self):
        truth = make_truth(np.random.default_rng(1), 50, 7)
        ds = synthesize_candidates(truth, num_seen=7, q=1.0, seed=2)
        assert (ds.candidate_mask.sum(axis=1) == 7).all()

    def test_mean_size_matches_closed_form(self):
        # E|S| = 1 + (Q-1) q = 4.0 for q=0.3, Q=11.
        truth = make_truth(np.random.default_rng(2), 10_000, 11)
        ds = synthesize_candidates(truth, num_seen=11, q=0.3, seed=3)
        assert abs(candidate_stats(ds)["mean_size"] - 4.0) <= 0.1

    def test_mean_size_within_three_standard_errors(self):
        rng = np.random.default_rng(3)
        for q in (0.1, 0.3, 0.5):
            n, q_classes = 10_000, 11
            truth = make_truth(rng, n, q_classes)
            ds = synthesize_candidates(truth, num_seen=q_classes, q=q, seed=int(q * 100))
            expected = 1 + (q_classes - 1) * q
            se = np.sqrt((q_classes - 1) * q * (1 - q) / n)
            assert abs(candidate_stats(ds)["mean_size"] - expected) <= 3 * se

    def test_truth_always_candidate(self):
        rng = np.random.default_rng(4)
        for q in (0.0, 0.2, 0.5, 0.9, 1.0):
            truth = make_truth(rng, 500, 6)
            ds = synthesize_candidates(truth, num_seen=6, q=q, seed=5)
            assert ds.candidate_mask[np.arange(500), truth].all()

    def test_deterministic_per_seed_and_distinct_across_seeds(self):
        truth = make_truth(np.random.default_rng(5), 100, 8)
        a = synthesize_candidates(truth, 8, 0.4, seed=11)
        b = synthesize_candidates(truth, 8, 0.4, seed=11)
        c = synthesize_candidates(truth, 8, 0.4, seed=12)
        np.testing.assert_array_equal(a.candidate_mask, b.candidate_mask)
        assert not np.array_equal(a.candidate_mask, c.candidate_mask)

    def test_q_out_of_range(self):
        with pytest.raises(ParameterError):
            synthesize_candidates([0], 2, q=1.5, seed=0)
        with pytest.raises(ParameterError):
            synthesize_candidates([0], 2, q=-0.1, seed=0)


class TestStats:
    def test_q_zero_stats(self):
        ds = synthesize_candidates([0, 1, 2], 4, q=0.0, seed=0)
        stats = candidate_stats(ds)
        assert stats["mean_size"] == 1.0
        assert stats["ambiguity_rate"] == 0.0

    def test_q_one_stats(self):
        ds = synthesize_candidates([0, 1], 5, q=1.0, seed=0)
        stats = candidate_stats(ds)
        assert stats["mean_size"] == 5.0
        assert stats["ambiguity_rate"] == 1.0

    def test_ambiguity_rate_closed_form(self):
        # 1 - (1-q)^(Q-1) = 0.99609 for q=0.5, Q=9.
        truth = make_truth(np.random.default_rng(6), 10_000, 9)
        ds = synthesize_candidates(truth, 9, q=0.5, seed=7)
        assert abs(candidate_stats(ds)["ambiguity_rate"] - 0.9961) <= 0.005


class TestSerialization:
    def test_round_trip(self, tmp_path):
        truth = make_truth(np.random.default_rng(7), 64, 6)
        ds = synthesize_candidates(truth, 6, q=0.3, seed=8)
        path = tmp_path / "train.candidates.json"
        save_candidates(ds, path)
        back = load_candidates(path, truth, 6, ds.instance_ids)
        np.testing.assert_array_equal(back.candidate_mask, ds.candidate_mask)
        assert back.q == ds.q and back.seed == ds.seed

    def test_empty_candidate_row_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"q": 0.3, "seed": 1, "rows": [[0], []]}')
        with pytest.raises(DataError):
            load_candidates(path, [0, 0], 3, ["a", "b"])

    def test_truth_outside_mask_rejected(self):
        mask = np.array([[True, False], [True, False]])
        with pytest.raises(DataError):
            PartialDataset(["a", "b"], mask, np.array([0, 1]), q=0.0, seed=0)
