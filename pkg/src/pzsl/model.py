"""Semantic mining block: learnable label embeddings refined by stacked
layers of instance self-attention and label/instance cross-attention with
hard cluster assignments, plus the seen-class linear classifier.

Per layer, the instance stream runs self-attention and an MLP; the label
stream attends over the self-attended instances with a Gumbel-Softmax
(approximate argmax) assignment so each instance contributes to exactly one
label row, then runs its own MLP. All sublayers are post-norm residual
blocks. The classifier maps final instance features to a row-stochastic
distribution over the seen classes only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericError, ParameterError, ShapeError
from .tensor import (
    Tensor,
    add,
    gelu,
    gumbel_softmax_rows,
    layer_norm,
    matmul,
    mul,
    softmax_rows,
    transpose,
)

CHECKPOINT_VERSION = 1


@dataclass
class MiningLayerParams:
    """Trainable tensors for one mining layer (both streams)."""

    sa_wq: Tensor
    sa_wk: Tensor
    sa_wv: Tensor
    sa_wo: Tensor
    sa_ln_gamma: Tensor
    sa_ln_beta: Tensor
    p_mlp_w1: Tensor
    p_mlp_w2: Tensor
    p_ln_gamma: Tensor
    p_ln_beta: Tensor
    ca_wq: Tensor
    ca_wk: Tensor
    ca_wv: Tensor
    ca_ln_gamma: Tensor
    ca_ln_beta: Tensor
    l_mlp_w1: Tensor
    l_mlp_w2: Tensor
    l_ln_gamma: Tensor
    l_ln_beta: Tensor

    def named(self, prefix: str):
        for name in self.__dataclass_fields__:
            yield f"{prefix}.{name}", getattr(self, name)


@dataclass
class ModelParams:
    """Label embeddings, per-layer weights, and the classifier head."""

    label_embeddings: Tensor  # K x d, row order: seen classes then unseen
    layers: list[MiningLayerParams]
    clf_w: Tensor  # d x Q
    clf_b: Tensor  # Q
    dim: int
    num_seen: int
    num_classes: int
    mlp_hidden: int

    def named_params(self):
        yield "label_embeddings", self.label_embeddings
        for i, layer in enumerate(self.layers):
            yield from layer.named(f"layers.{i}")
        yield "clf_w", self.clf_w
        yield "clf_b", self.clf_b

    def trainable(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]


@dataclass
class ForwardResult:
    p_m: Tensor  # B x d refined instance features
    l_m: Tensor  # K x d refined label embeddings
    m_pred: Tensor  # B x Q row-stochastic seen-class predictions
    extras: dict = field(default_factory=dict)


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32), requires_grad=True)


def init_model(
    label_embeddings: np.ndarray,
    num_seen: int,
    num_layers: int = 3,
    mlp_hidden: int | None = None,
    seed: int = 0,
) -> ModelParams:
    """Build trainable parameters.

    The label embedding matrix starts as an exact copy of the provided text
    embeddings; projections use uniform(-1/sqrt(fan_in), 1/sqrt(fan_in));
    layer-norm scales start at 1, shifts and the classifier bias at 0.
    """
    c = np.asarray(label_embeddings, dtype=np.float32)
    if c.ndim != 2:
        raise ParameterError(f"label embeddings must be K x d, got shape {c.shape}")
    k, d = c.shape
    if k < 2 or d < 2:
        raise ParameterError(f"need at least 2 classes and 2 dims, got K={k}, d={d}")
    if not 1 <= num_seen <= k:
        raise ParameterError(f"num_seen={num_seen} outside [1, {k}]")
    if num_layers < 0:
        raise ParameterError(f"layer count must be >= 0, got {num_layers}")
    h = mlp_hidden if mlp_hidden is not None else 4 * d

    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(num_layers):
        layers.append(
            MiningLayerParams(
                sa_wq=_uniform(rng, (d, d), d),
                sa_wk=_uniform(rng, (d, d), d),
                sa_wv=_uniform(rng, (d, d), d),
                sa_wo=_uniform(rng, (d, d), d),
                sa_ln_gamma=Tensor(np.ones(d, dtype=np.float32), requires_grad=True),
                sa_ln_beta=Tensor(np.zeros(d, dtype=np.float32), requires_grad=True),
                p_mlp_w1=_uniform(rng, (d, h), d),
                p_mlp_w2=_uniform(rng, (h, d), h),
                p_ln_gamma=Tensor(np.ones(d, dtype=np.float32), requires_grad=True),
                p_ln_beta=Tensor(np.zeros(d, dtype=np.float32), requires_grad=True),
                ca_wq=_uniform(rng, (d, d), d),
                ca_wk=_uniform(rng, (d, d), d),
                ca_wv=_uniform(rng, (d, d), d),
                ca_ln_gamma=Tensor(np.ones(d, dtype=np.float32), requires_grad=True),
                ca_ln_beta=Tensor(np.zeros(d, dtype=np.float32), requires_grad=True),
                l_mlp_w1=_uniform(rng, (d, h), d),
                l_mlp_w2=_uniform(rng, (h, d), h),
                l_ln_gamma=Tensor(np.ones(d, dtype=np.float32), requires_grad=True),
                l_ln_beta=Tensor(np.zeros(d, dtype=np.float32), requires_grad=True),
            )
        )
    return ModelParams(
        label_embeddings=Tensor(c.copy(), requires_grad=True),
        layers=layers,
        clf_w=_uniform(rng, (d, num_seen), d),
        clf_b=Tensor(np.zeros(num_seen, dtype=np.float32), requires_grad=True),
        dim=d,
        num_seen=num_seen,
        num_classes=k,
        mlp_hidden=h,
    )


def self_attention(p: Tensor, layer: MiningLayerParams) -> Tensor:
    """Single-head scaled dot-product attention over the instance rows,
    residual connection, post-norm."""
    if p.data.ndim != 2 or p.data.shape[0] < 1:
        raise ShapeError(f"self_attention expects a nonempty B x d input, got {p.data.shape}")
    d = p.data.shape[1]
    q = matmul(p, layer.sa_wq)
    k = matmul(p, layer.sa_wk)
    v = matmul(p, layer.sa_wv)
    attn = softmax_rows(mul(matmul(q, transpose(k)), 1.0 / np.sqrt(d)))
    out = matmul(matmul(attn, v), layer.sa_wo)
    return layer_norm(add(p, out), layer.sa_ln_gamma, layer.sa_ln_beta)


def kmeans_cross_attention(
    l_m: Tensor,
    p_bar: Tensor,
    layer: MiningLayerParams,
    tau: float,
    hard: bool,
    rng: np.random.Generator | None,
    axis: str = "label",
    return_parts: bool = False,
):
    """Pool instance features into label rows by approximate-argmax attention.

    Queries come from the label embeddings, keys/values from the
    self-attended instances; the K x B score matrix is normalized with
    Gumbel-Softmax. axis="label" assigns each instance column to one label
    cluster (so a hard assignment averages value rows per class, and labels
    with no assigned instance get a zero update before the residual);
    axis="instance" is the row-wise reading, normalizing over instances for
    each label.
    """
    if p_bar.data.shape[0] < 1:
        raise ShapeError("cross-attention needs at least one instance row")
    if l_m.data.shape[1] != p_bar.data.shape[1]:
        raise ShapeError(
            f"label/instance dims disagree: {l_m.data.shape} vs {p_bar.data.shape}"
        )
    if axis not in ("label", "instance"):
        raise ParameterError(f"unknown gumbel axis {axis!r}")
    d = l_m.data.shape[1]
    q_m = matmul(l_m, layer.ca_wq)
    k_m = matmul(p_bar, layer.ca_wk)
    v_m = matmul(p_bar, layer.ca_wv)
    logits = mul(matmul(q_m, transpose(k_m)), 1.0 / np.sqrt(d))  # K x B
    if axis == "label":
        w = transpose(gumbel_softmax_rows(transpose(logits), tau, hard, rng))
    else:
        w = gumbel_softmax_rows(logits, tau, hard, rng)
    attended = matmul(w, v_m)  # K x d
    out = layer_norm(add(l_m, attended), layer.ca_ln_gamma, layer.ca_ln_beta)
    if return_parts:
        return out, attended, w
    return out


def _mlp_block(x: Tensor, w1: Tensor, w2: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    return layer_norm(add(x, matmul(gelu(matmul(x, w1)), w2)), gamma, beta)


def forward(
    p: Tensor | np.ndarray,
    model: ModelParams,
    tau: float = 1.0,
    hard: bool = True,
    rng: np.random.Generator | None = None,
    axis: str = "label",
    no_mining: bool = False,
    capture: bool = False,
) -> ForwardResult:
    """Run the mining layers and the classifier.

    With no_mining=True the transformer is bypassed and the raw embeddings
    feed the classifier directly. capture=True records per-layer label
    embeddings and assignment matrices (as plain arrays) in `extras`.
    """
    if not isinstance(p, Tensor):
        p = Tensor(p)
    if p.data.ndim != 2 or p.data.shape[1] != model.dim:
        raise ShapeError(f"expected B x {model.dim} input, got {p.data.shape}")
    l_m = model.label_embeddings
    extras: dict = {"label_layers": [l_m.data.copy()], "assignments": []} if capture else {}
    if not no_mining:
        for i, layer in enumerate(model.layers):
            try:
                p_bar = self_attention(p, layer)
                p = _mlp_block(p_bar, layer.p_mlp_w1, layer.p_mlp_w2, layer.p_ln_gamma, layer.p_ln_beta)
                l_attn, _, w = kmeans_cross_attention(
                    l_m, p_bar, layer, tau, hard, rng, axis, return_parts=True
                )
                l_m = _mlp_block(l_attn, layer.l_mlp_w1, layer.l_mlp_w2, layer.l_ln_gamma, layer.l_ln_beta)
            except NumericError as exc:
                raise NumericError(f"mining layer {i}: {exc}") from exc
            if capture:
                extras["label_layers"].append(l_m.data.copy())
                extras["assignments"].append(w.data.copy())
    m_pred = softmax_rows(add(matmul(p, model.clf_w), model.clf_b))
    return ForwardResult(p_m=p, l_m=l_m, m_pred=m_pred, extras=extras)


def save_checkpoint(model: ModelParams, out_dir: str | Path, epoch: int, config: dict | None = None) -> None:
    """Manifest JSON (shapes, config, epoch) plus one raw little-endian f32
    blob file holding every tensor at the recorded offsets."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensors = []
    offset = 0
    blobs = []
    for name, t in model.named_params():
        raw = t.data.astype("<f4", copy=False).tobytes()
        tensors.append(
            {"name": name, "shape": list(t.data.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "epoch": epoch,
        "model": {
            "dim": model.dim,
            "num_seen": model.num_seen,
            "num_classes": model.num_classes,
            "num_layers": len(model.layers),
            "mlp_hidden": model.mlp_hidden,
        },
        "config": config or {},
        "tensors": tensors,
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")
    with open(out_dir / "params.bin", "wb") as f:
        f.write(b"".join(blobs))


def load_checkpoint(ckpt_dir: str | Path) -> tuple[ModelParams, dict]:
    ckpt_dir = Path(ckpt_dir)
    manifest = json.loads((ckpt_dir / "manifest.json").read_text())
    meta = manifest["model"]
    model = init_model(
        np.zeros((meta["num_classes"], meta["dim"]), dtype=np.float32),
        num_seen=meta["num_seen"],
        num_layers=meta["num_layers"],
        mlp_hidden=meta["mlp_hidden"],
        seed=0,
    )
    raw = (ckpt_dir / "params.bin").read_bytes()
    by_name = dict(model.named_params())
    for entry in manifest["tensors"]:
        t = by_name[entry["name"]]
        expected = tuple(entry["shape"])
        data = np.frombuffer(
            raw, dtype="<f4", count=int(np.prod(expected)), offset=entry["offset"]
        ).reshape(expected)
        if t.data.shape != data.shape:
            raise ShapeError(f"checkpoint tensor {entry['name']} has shape {data.shape}, expected {t.data.shape}")
        t.data = data.copy()
    return model, manifest
