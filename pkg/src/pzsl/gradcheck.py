"""Finite-difference verification of analytic gradients.

Compares reverse-mode gradients against central differences with step
h=1e-3, using rel_err = |a - n| / max(1e-6, |a| + |n|). The harness builds
the graph in float64 so the difference quotient is not dominated by storage
rounding; the op implementations under test are the same ones the float32
engine runs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

H = 1e-3


def make_inputs(shapes: Sequence[tuple[int, ...]], seed: int, scale: float = 1.0) -> list[Tensor]:
    rng = np.random.default_rng(seed)
    return [
        Tensor(scale * rng.standard_normal(s), requires_grad=True, dtype=np.float64)
        for s in shapes
    ]


def gradcheck(
    op: Callable[..., Tensor],
    inputs: list[Tensor],
    seed: int = 0,
) -> float:
    """Max relative error between analytic and numerical gradients.

    `op` maps the input tensors to a single output tensor; `op` must be
    deterministic across calls (stochastic ops get a freshly seeded rng per
    invocation so the noise is frozen). Non-scalar outputs are reduced with a
    fixed random projection so every output element influences the loss.
    """
    probe = op(*inputs)
    proj_rng = np.random.default_rng(seed + 104729)
    weights = proj_rng.standard_normal(probe.data.shape)

    def loss_value(*tensors: Tensor) -> Tensor:
        out = op(*tensors)
        from .tensor import mul, tsum

        return tsum(mul(out, Tensor(weights, dtype=np.float64)))

    for x in inputs:
        x.zero_grad()
    loss = loss_value(*inputs)
    loss.backward()

    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        flat = x.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + H
            f_plus = loss_value(*inputs).data.item()
            flat[i] = orig - H
            f_minus = loss_value(*inputs).data.item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * H)
            a = analytic.reshape(-1)[i]
            rel = abs(a - numeric) / max(1e-6, abs(a) + abs(numeric))
            worst = max(worst, rel)
    return worst


def _f64_params(model) -> None:
    for _, t in model.named_params():
        t.data = t.data.astype(np.float64)


def suite(seed: int = 1) -> dict[str, float]:
    """Gradient checks across every differentiable building block, from bare
    ops up to the full mining forward plus the two-term loss (soft assignment
    mode, where the relaxation is differentiable everywhere)."""
    from .disambiguation import partial_zsl_loss
    from .model import forward, init_model, kmeans_cross_attention, self_attention
    from .tensor import add, layer_norm, matmul, softmax_rows

    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    a, b = make_inputs([(3, 4), (4, 2)], seed)
    results["matmul"] = gradcheck(matmul, [a, b], seed)

    (x,) = make_inputs([(3, 5)], seed + 1)
    results["softmax_rows"] = gradcheck(softmax_rows, [x], seed + 1)

    x, g, bta = make_inputs([(2, 4), (4,), (4,)], seed + 2)
    results["layer_norm"] = gradcheck(layer_norm, [x, g, bta], seed + 2)

    d, k, q, n, m_layers = 6, 6, 4, 8, 1
    base = init_model(rng.standard_normal((k, d)).astype(np.float32), num_seen=q,
                      num_layers=m_layers, seed=seed)
    _f64_params(base)
    for _, t in base.named_params():
        t.data = t.data + 0.05 * rng.standard_normal(t.data.shape)

    layer = base.layers[0]
    (p_sa,) = make_inputs([(5, d)], seed + 3)
    sa_inputs = [p_sa, layer.sa_wq, layer.sa_wk, layer.sa_wv, layer.sa_wo,
                 layer.sa_ln_gamma, layer.sa_ln_beta]

    def sa_op(p, wq, wk, wv, wo, gamma, beta):
        return self_attention(p, layer)

    results["self_attention"] = gradcheck(sa_op, sa_inputs, seed + 3)

    (l_in, p_bar) = make_inputs([(k, d), (5, d)], seed + 4)
    ca_inputs = [l_in, p_bar, layer.ca_wq, layer.ca_wk, layer.ca_wv,
                 layer.ca_ln_gamma, layer.ca_ln_beta]

    def ca_op(l_m, pb, wq, wk, wv, gamma, beta):
        return kmeans_cross_attention(
            l_m, pb, layer, tau=0.8, hard=False, rng=np.random.default_rng(seed + 40)
        )

    results["kmeans_cross_attention_soft"] = gradcheck(ca_op, ca_inputs, seed + 4)

    p_clf, w_clf, b_clf = make_inputs([(4, d), (d, q), (q,)], seed + 5)
    results["classifier"] = gradcheck(
        lambda p, w, bias: softmax_rows(add(matmul(p, w), bias)), [p_clf, w_clf, b_clf], seed + 5
    )

    # Full mining forward plus the two-term loss over every trainable parameter.
    p_data = rng.standard_normal((n, d))
    r_fix = rng.uniform(0, 1, (n, q))
    y_fix = rng.dirichlet(np.ones(q), size=n)
    c_fix = rng.standard_normal((k, d))
    params = base.trainable()

    def full_op(*tensors):
        res = forward(p_data, base, tau=0.8, hard=False,
                      rng=np.random.default_rng(seed + 60))
        terms = partial_zsl_loss(res.m_pred, r_fix, y_fix, c_fix, res.l_m)
        return terms["total"]

    results["full_forward_loss"] = gradcheck(full_op, params, seed + 6)
    return results


def max_suite_error(seed: int = 1) -> float:
    return max(suite(seed).values())
