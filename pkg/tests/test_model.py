"""Semantic mining block: initialization contract, attention mechanics
(including the hand-computed cross-attention case), shape contracts,
permutation behavior, and checkpoint round trips."""

import numpy as np
import pytest

from pzsl.errors import ParameterError, ShapeError
from pzsl.model import (
    ForwardResult,
    MiningLayerParams,
    forward,
    init_model,
    kmeans_cross_attention,
    load_checkpoint,
    save_checkpoint,
    self_attention,
)
from pzsl.tensor import Tensor


def small_model(k=6, d=8, num_seen=4, layers=2, seed=0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((k, d)).astype(np.float32)
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    return init_model(c, num_seen=num_seen, num_layers=layers, seed=seed), c


def identity_layer(d):
    """Projections set to the identity, layer norms to the no-op affine."""
    eye = lambda: Tensor(np.eye(d, dtype=np.float32), requires_grad=True)
    ones = lambda: Tensor(np.ones(d, dtype=np.float32), requires_grad=True)
    zeros = lambda: Tensor(np.zeros(d, dtype=np.float32), requires_grad=True)
    zmat = lambda r, c: Tensor(np.zeros((r, c), dtype=np.float32), requires_grad=True)
    return MiningLayerParams(
        sa_wq=eye(), sa_wk=eye(), sa_wv=eye(), sa_wo=eye(),
        sa_ln_gamma=ones(), sa_ln_beta=zeros(),
        p_mlp_w1=zmat(d, 4 * d), p_mlp_w2=zmat(4 * d, d),
        p_ln_gamma=ones(), p_ln_beta=zeros(),
        ca_wq=eye(), ca_wk=eye(), ca_wv=eye(),
        ca_ln_gamma=ones(), ca_ln_beta=zeros(),
        l_mlp_w1=zmat(d, 4 * d), l_mlp_w2=zmat(4 * d, d),
        l_ln_gamma=ones(), l_ln_beta=zeros(),
    )


class TestInit:
    def test_label_embeddings_copy_text_embeddings(self):
        model, c = small_model()
        np.testing.assert_array_equal(model.label_embeddings.data, c)

    def test_default_layer_count_is_three(self):
        c = np.random.default_rng(0).standard_normal((4, 6)).astype(np.float32)
        model = init_model(c, num_seen=3)
        assert len(model.layers) == 3

    def test_same_seed_identical_parameters(self):
        a, _ = small_model(seed=3)
        b, _ = small_model(seed=3)
        for (na, ta), (nb, tb) in zip(a.named_params(), b.named_params()):
            assert na == nb
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_too_small_rejected(self):
        with pytest.raises(ParameterError):
            init_model(np.zeros((1, 8), dtype=np.float32), num_seen=1)
        with pytest.raises(ParameterError):
            init_model(np.zeros((4, 1), dtype=np.float32), num_seen=2)

    def test_classifier_bias_starts_zero(self):
        model, _ = small_model()
        np.testing.assert_array_equal(model.clf_b.data, 0.0)


class TestSelfAttention:
    def test_single_row_attention_weight_is_one(self):
        # B=1: softmax of the 1x1 score matrix is [[1.0]], so the output is
        # layernorm(p + (v(p)) @ Wo).
        d = 6
        model, _ = small_model(d=d, layers=1)
        layer = model.layers[0]
        p = Tensor(np.random.default_rng(1).standard_normal((1, d)).astype(np.float32))
        out = self_attention(p, layer)
        v = p.data @ layer.sa_wv.data
        manual = p.data + v @ layer.sa_wo.data
        mu, sd = manual.mean(), manual.std()
        expected = layer.sa_ln_gamma.data * (manual - mu) / np.sqrt(sd**2 + 1e-5) + layer.sa_ln_beta.data
        np.testing.assert_allclose(out.data, expected, atol=1e-5)

    def test_output_shape_matches_input(self):
        model, _ = small_model(d=8, layers=1)
        for b in (1, 3, 7):
            p = Tensor(np.random.default_rng(b).standard_normal((b, 8)).astype(np.float32))
            assert self_attention(p, model.layers[0]).data.shape == (b, 8)

    def test_duplicate_rows_stay_identical(self):
        model, _ = small_model(d=6, layers=1)
        rng = np.random.default_rng(2)
        base = rng.standard_normal((4, 6)).astype(np.float32)
        base[3] = base[1]
        out = self_attention(Tensor(base), model.layers[0]).data
        np.testing.assert_allclose(out[3], out[1], atol=1e-6)


class TestKmeansCrossAttention:
    def test_hand_computed_identity_case(self):
        # K=2, B=2, identity projections, orthonormal rows: scores are I/sqrt(2),
        # hard argmax down each instance column is the identity assignment, so
        # the pre-norm update doubles each label row.
        d = 2
        layer = identity_layer(d)
        l_m = Tensor(np.eye(d, dtype=np.float32))
        p_bar = Tensor(np.eye(d, dtype=np.float32))
        out, attended, w = kmeans_cross_attention(
            l_m, p_bar, layer, tau=1.0, hard=True, rng=None, return_parts=True
        )
        np.testing.assert_array_equal(w.data, np.eye(2, dtype=np.float32))
        residual = l_m.data + attended.data
        np.testing.assert_allclose(residual, [[2.0, 0.0], [0.0, 2.0]], atol=1e-6)

    def test_all_instances_one_cluster_zero_update_elsewhere(self):
        # Push every instance towards label 0; other label rows get a zero
        # attended update, and row 0 sums the value rows.
        d = 4
        layer = identity_layer(d)
        l_rows = np.zeros((3, d), dtype=np.float32)
        l_rows[0, 0] = 5.0
        l_rows[1, 1] = 0.01
        l_rows[2, 2] = 0.01
        p_rows = np.zeros((4, d), dtype=np.float32)
        p_rows[:, 0] = 1.0
        p_rows[:, 3] = np.arange(4)
        _, attended, w = kmeans_cross_attention(
            Tensor(l_rows), Tensor(p_rows), layer, tau=1.0, hard=True, rng=None, return_parts=True
        )
        np.testing.assert_array_equal(w.data[0], np.ones(4))
        np.testing.assert_array_equal(w.data[1:], np.zeros((2, 4)))
        np.testing.assert_allclose(attended.data[0], p_rows.sum(axis=0), atol=1e-6)
        np.testing.assert_array_equal(attended.data[1:], np.zeros((2, d)))

    def test_hard_label_axis_columns_one_hot(self):
        model, _ = small_model(k=5, d=8, layers=1)
        rng = np.random.default_rng(3)
        p_bar = Tensor(rng.standard_normal((7, 8)).astype(np.float32))
        _, _, w = kmeans_cross_attention(
            model.label_embeddings, p_bar, model.layers[0],
            tau=1.0, hard=True, rng=rng, return_parts=True,
        )
        np.testing.assert_array_equal(w.data.sum(axis=0), np.ones(7))
        assert np.isin(w.data, [0.0, 1.0]).all()

    def test_output_shape_K_by_d_for_any_B(self):
        model, _ = small_model(k=6, d=8, layers=1)
        for b in (1, 2, 9):
            p_bar = Tensor(np.random.default_rng(b).standard_normal((b, 8)).astype(np.float32))
            out = kmeans_cross_attention(
                model.label_embeddings, p_bar, model.layers[0], tau=1.0, hard=True, rng=None
            )
            assert out.data.shape == (6, 8)

    def test_instance_axis_variant_rows_stochastic(self):
        model, _ = small_model(k=4, d=8, layers=1)
        p_bar = Tensor(np.random.default_rng(5).standard_normal((6, 8)).astype(np.float32))
        _, _, w = kmeans_cross_attention(
            model.label_embeddings, p_bar, model.layers[0],
            tau=1.0, hard=False, rng=None, axis="instance", return_parts=True,
        )
        np.testing.assert_allclose(w.data.sum(axis=1), 1.0, atol=1e-5)

    def test_empty_batch_rejected(self):
        model, _ = small_model(layers=1)
        with pytest.raises(ShapeError):
            kmeans_cross_attention(
                model.label_embeddings,
                Tensor(np.zeros((0, 8), dtype=np.float32)),
                model.layers[0],
                tau=1.0,
                hard=True,
                rng=None,
            )


class TestForward:
    def test_shape_contract(self):
        model, _ = small_model(k=6, d=8, num_seen=4, layers=2)
        for b in (1, 5, 16):
            p = np.random.default_rng(b).standard_normal((b, 8)).astype(np.float32)
            res = forward(p, model, rng=np.random.default_rng(0))
            assert res.p_m.data.shape == (b, 8)
            assert res.l_m.data.shape == (6, 8)
            assert res.m_pred.data.shape == (b, 4)

    def test_prediction_rows_sum_to_one(self):
        model, _ = small_model()
        p = np.random.default_rng(1).standard_normal((10, 8)).astype(np.float32)
        res = forward(p, model, rng=np.random.default_rng(2))
        np.testing.assert_allclose(res.m_pred.data.sum(axis=1), 1.0, atol=1e-5)

    def test_zero_classifier_gives_uniform_predictions(self):
        model, _ = small_model(num_seen=4)
        model.clf_w.data[:] = 0.0
        model.clf_b.data[:] = 0.0
        p = np.random.default_rng(3).standard_normal((5, 8)).astype(np.float32)
        res = forward(p, model, rng=np.random.default_rng(4))
        np.testing.assert_allclose(res.m_pred.data, 0.25, atol=1e-6)

    def test_no_mining_bypasses_transformer(self):
        model, c = small_model()
        p = np.random.default_rng(5).standard_normal((4, 8)).astype(np.float32)
        res = forward(p, model, no_mining=True)
        np.testing.assert_array_equal(res.p_m.data, p)
        np.testing.assert_array_equal(res.l_m.data, model.label_embeddings.data)

    def test_permutation_equivariance_noise_disabled(self):
        # With Gumbel noise off, permuting instance rows must permute the
        # outputs row-for-row and keep assignments/labels equal (up to float
        # accumulation order, hence the tight tolerance rather than ==).
        model, _ = small_model(k=6, d=8, num_seen=4, layers=2, seed=9)
        rng = np.random.default_rng(6)
        p = rng.standard_normal((7, 8)).astype(np.float32)
        perm = rng.permutation(7)
        res_a = forward(p, model, hard=True, rng=None, capture=True)
        res_b = forward(p[perm], model, hard=True, rng=None, capture=True)
        np.testing.assert_allclose(res_b.p_m.data, res_a.p_m.data[perm], atol=2e-5)
        np.testing.assert_allclose(res_b.m_pred.data, res_a.m_pred.data[perm], atol=2e-5)
        np.testing.assert_allclose(res_b.l_m.data, res_a.l_m.data, atol=2e-5)
        for wa, wb in zip(res_a.extras["assignments"], res_b.extras["assignments"]):
            np.testing.assert_array_equal(wb, wa[:, perm])

    def test_determinism_per_seed_and_input(self):
        model, _ = small_model(seed=11)
        p = np.random.default_rng(7).standard_normal((6, 8)).astype(np.float32)
        a = forward(p, model, hard=True, rng=np.random.default_rng(42))
        b = forward(p, model, hard=True, rng=np.random.default_rng(42))
        np.testing.assert_array_equal(a.m_pred.data, b.m_pred.data)
        np.testing.assert_array_equal(a.l_m.data, b.l_m.data)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model, _ = small_model(seed=13)
        save_checkpoint(model, tmp_path / "ckpt", epoch=5, config={"lr": 0.001})
        restored, manifest = load_checkpoint(tmp_path / "ckpt")
        assert manifest["epoch"] == 5
        for (name, t), (_, t2) in zip(model.named_params(), restored.named_params()):
            np.testing.assert_array_equal(t.data, t2.data, err_msg=name)
        save_checkpoint(restored, tmp_path / "ckpt2", epoch=5, config={"lr": 0.001})
        assert (tmp_path / "ckpt" / "params.bin").read_bytes() == (
            tmp_path / "ckpt2" / "params.bin"
        ).read_bytes()
