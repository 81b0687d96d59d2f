"""Training orchestration: dataset directory layout, the epoch loop
(mini-batch descent on the partial zero-shot loss interleaved with per-epoch
confidence refinement), evaluation, and the linear-scaling benchmark.

Every stochastic choice is drawn from generators spawned off the config
seed, so a (config, seed) pair reproduces checkpoints and the metrics CSV
byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .candidates import PartialDataset, load_candidates, save_candidates, synthesize_candidates
from .disambiguation import (
    ConfidenceState,
    evaluate,
    label_correction,
    partial_zsl_loss,
    predict_batch,
    refine_confidence,
)
from .embeddings import (
    ClassVocabulary,
    EmbeddingStore,
    load_embeddings,
    load_vocabulary,
    save_embeddings,
    synth_embeddings,
)
from .errors import DataError, NumericError, ValidationError
from .model import ModelParams, forward, init_model, load_checkpoint, save_checkpoint
from .optim import SGDMomentum

CSV_HEADER = "epoch,ce_term,dist_term,total,train_disambiguation_acc,s_acc,u_acc"


@dataclass
class TrainConfig:
    """Hyperparameters and paths; defaults follow the reference protocol
    (100 epochs, batch 64, SGD momentum 0.9, lr 0.001, 3 mining layers)."""

    epochs: int = 100
    batch_size: int = 64
    lr: float = 0.001
    momentum: float = 0.9
    layers: int = 3
    tau: float = 1.0
    hard_gumbel: bool = True
    q: float = 0.3
    seed: int = 7
    mlp_hidden: int | None = None
    no_ce: bool = False
    no_dist: bool = False
    no_mining: bool = False
    gumbel_axis: str = "label"  # "label" (cluster assignment) or "instance"
    normalize_embeddings: bool = True
    correction_source: str = "raw"  # "raw" (frozen embeddings) or "mined" (P_M at epoch t)
    predict_with: str = "text"  # "text" (as written) or "learned" label embeddings
    clamp_negative_r: bool = False
    checkpoint_every: int = 10
    data_dir: str = "data"
    out_dir: str = "out"

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        blob = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(blob) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**blob)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class DatasetBundle:
    """Everything a training or evaluation run reads from a dataset dir."""

    vocab: ClassVocabulary
    label_store: EmbeddingStore  # K x d, seen classes first
    train_store: EmbeddingStore
    partial: PartialDataset
    test_store: EmbeddingStore | None = None
    test_truth: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.label_store.dim


def write_dataset(
    out_dir: str | Path,
    num_classes: int,
    num_unseen: int,
    dim: int,
    noise_sigma: float,
    per_class: int,
    test_per_class: int,
    q: float,
    seed: int,
) -> dict:
    """Generate a synthetic dataset directory: label/instance embeddings,
    candidate sets over the seen classes, and truth files for evaluation.

    Training instances cover seen classes only; the test split covers all
    classes with clean single labels.
    """
    if not 0 < num_unseen < num_classes:
        raise ValidationError(f"need 0 < unseen < classes, got {num_unseen}/{num_classes}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [f"class_{i:02d}" for i in range(num_classes)]
    vocab = ClassVocabulary(seen=names[: num_classes - num_unseen], unseen=names[num_classes - num_unseen :])
    q_seen = vocab.num_seen

    # One draw per class, split into train rows (seen classes only, corrupted
    # into candidate sets) and clean-labeled test rows (all classes).
    inst, labels, truth = synth_embeddings(
        vocab, per_class + test_per_class, dim, noise_sigma, seed=seed
    )
    truth = np.asarray(truth)
    per_total = per_class + test_per_class
    row_in_class = np.arange(inst.count) % per_total
    is_train = (row_in_class < per_class) & (truth < q_seen)
    is_test = row_in_class >= per_class

    train_store = EmbeddingStore(
        data=inst.data[is_train], ids=[i for i, m in zip(inst.ids, is_train) if m]
    )
    train_truth = truth[is_train].tolist()
    train_ids = train_store.ids
    test_inst = EmbeddingStore(
        data=inst.data[is_test], ids=[i for i, m in zip(inst.ids, is_test) if m]
    )
    test_truth = truth[is_test].tolist()

    partial = synthesize_candidates(train_truth, q_seen, q, seed=seed, instance_ids=train_ids)

    save_embeddings(labels, out_dir / "labels.pzslemb", vocab=vocab)
    save_embeddings(train_store, out_dir / "train_instances.pzslemb", vocab=vocab)
    save_embeddings(test_inst, out_dir / "test_instances.pzslemb", vocab=vocab)
    save_candidates(partial, out_dir / "train_candidates.json")
    (out_dir / "train_truth.json").write_text(
        json.dumps({"ids": train_ids, "labels": train_truth}) + "\n"
    )
    (out_dir / "test_truth.json").write_text(
        json.dumps({"ids": test_inst.ids, "labels": test_truth}) + "\n"
    )
    return {
        "classes": num_classes,
        "seen": q_seen,
        "train_instances": train_store.count,
        "test_instances": test_inst.count,
        "dim": dim,
        "q": q,
        "seed": seed,
    }


def load_dataset(data_dir: str | Path, normalize: bool = True) -> DatasetBundle:
    data_dir = Path(data_dir)
    label_store, _ = load_embeddings(data_dir / "labels.pzslemb", normalize=normalize)
    vocab = load_vocabulary(data_dir / "labels.pzslemb")
    train_store, _ = load_embeddings(data_dir / "train_instances.pzslemb", normalize=normalize)
    truth_blob = json.loads((data_dir / "train_truth.json").read_text())
    if truth_blob["ids"] != train_store.ids:
        raise DataError("train truth ids disagree with the instance store")
    partial = load_candidates(
        data_dir / "train_candidates.json",
        truth_blob["labels"],
        vocab.num_seen,
        train_store.ids,
    )
    test_store = None
    test_truth = None
    test_path = data_dir / "test_instances.pzslemb"
    if test_path.exists():
        test_store, _ = load_embeddings(test_path, normalize=normalize)
        test_blob = json.loads((data_dir / "test_truth.json").read_text())
        if test_blob["ids"] != test_store.ids:
            raise DataError("test truth ids disagree with the instance store")
        test_truth = np.asarray(test_blob["labels"], dtype=np.int64)
    if label_store.dim != train_store.dim:
        raise DataError(f"label dim {label_store.dim} != instance dim {train_store.dim}")
    if partial.num_instances != train_store.count:
        raise DataError("candidate file and instance store disagree on N")
    return DatasetBundle(
        vocab=vocab,
        label_store=label_store,
        train_store=train_store,
        partial=partial,
        test_store=test_store,
        test_truth=test_truth,
    )


def _correction_full(p_rows: np.ndarray, c_seen: np.ndarray) -> np.ndarray:
    """Full-dataset correction matrix; rows split across worker threads when
    PZSL_THREADS asks for them (the pass is embarrassingly parallel)."""
    threads = int(os.environ.get("PZSL_THREADS", "1"))
    n = p_rows.shape[0]
    if threads <= 1 or n < 2 * threads:
        return label_correction(p_rows, c_seen)
    chunks = np.array_split(np.arange(n), threads)
    out = np.empty((n, c_seen.shape[0]), dtype=np.float32)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [(chunk, pool.submit(label_correction, p_rows[chunk], c_seen)) for chunk in chunks]
        for chunk, fut in futures:
            out[chunk] = fut.result()
    return out


def _format_row(epoch: int, ce: float, dist: float, total: float, disamb: float, metrics: dict) -> str:
    s_acc = f"{metrics['s_acc']:.8g}" if "s_acc" in metrics else ""
    u_acc = f"{metrics['u_acc']:.8g}" if "u_acc" in metrics else ""
    return f"{epoch},{ce:.8g},{dist:.8g},{total:.8g},{disamb:.8g},{s_acc},{u_acc}"


def _test_metrics(config: TrainConfig, data: DatasetBundle, model: ModelParams) -> dict:
    if data.test_store is None:
        return {}
    if config.predict_with == "learned":
        res = forward(
            data.test_store.data,
            model,
            tau=config.tau,
            hard=config.hard_gumbel,
            rng=None,
            axis=config.gumbel_axis,
            no_mining=config.no_mining,
        )
        class_embs = res.l_m.data
    else:
        class_embs = data.label_store.data
    preds = predict_batch(data.test_store.data, class_embs)
    return evaluate(preds, data.test_truth, data.vocab)


def _assert_epoch_invariants(
    state: ConfidenceState, mask: np.ndarray, epoch: int, assignments: list[np.ndarray], hard: bool
) -> None:
    y = state.y
    if not np.allclose(y.sum(axis=1), 1.0, atol=1e-5):
        raise NumericError(f"epoch {epoch}: confidence rows do not sum to 1")
    if np.any(y[~mask] != 0.0):
        raise NumericError(f"epoch {epoch}: confidence mass outside candidate sets")
    if state.r.min() < -1.0 or state.r.max() > 1.0:
        raise NumericError(f"epoch {epoch}: correction matrix outside [-1, 1]")
    if hard:
        for w in assignments:
            cols = w.sum(axis=0)
            if not (np.all(cols == 1.0) and np.isin(w, [0.0, 1.0]).all()):
                raise NumericError(f"epoch {epoch}: hard assignment columns not one-hot")


@dataclass
class TrainResult:
    model: ModelParams
    state: ConfidenceState
    history: list[dict] = field(default_factory=list)
    report: dict = field(default_factory=dict)


def train(config: TrainConfig, data: DatasetBundle | None = None, write_outputs: bool = True) -> TrainResult:
    """Run the full training loop.

    Per batch: forward through the mining block, partial zero-shot loss with
    the ablation gates applied, backward, SGD step. After the last batch of
    each epoch the correction matrix is recomputed from the cached refined
    instance features and the confidences are renormalized over each
    candidate set. Checkpoints are written every `checkpoint_every` epochs
    plus a final `last`.
    """
    if data is None:
        data = load_dataset(config.data_dir, normalize=config.normalize_embeddings)
    n = data.train_store.count
    q_seen = data.vocab.num_seen
    d = data.dim
    mask = data.partial.candidate_mask
    truth = data.partial.hidden_truth
    c_text = data.label_store.data
    c_seen = c_text[:q_seen]
    p_raw = data.train_store.data

    model = init_model(
        c_text, num_seen=q_seen, num_layers=config.layers,
        mlp_hidden=config.mlp_hidden, seed=config.seed,
    )
    opt = SGDMomentum(model.trainable(), lr=config.lr, momentum=config.momentum)
    shuffle_rng, gumbel_rng, warm_rng = np.random.default_rng(config.seed).spawn(3)

    state = ConfidenceState.initial(mask)
    if config.correction_source == "raw":
        state.r = _correction_full(p_raw, c_seen)
    else:
        warm = forward(
            p_raw, model, tau=config.tau, hard=config.hard_gumbel,
            rng=warm_rng, axis=config.gumbel_axis, no_mining=config.no_mining,
        )
        state.r = _correction_full(warm.p_m.data, c_seen)

    out_dir = Path(config.out_dir)
    metrics_path = out_dir / "metrics.csv"
    if write_outputs:
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path.write_text(CSV_HEADER + "\n")
    history: list[dict] = []
    batches = [(s, min(s + config.batch_size, n)) for s in range(0, n, config.batch_size)]

    for epoch in range(1, config.epochs + 1):
        perm = shuffle_rng.permutation(n)
        p_m_cache = np.empty((n, d), dtype=np.float32)
        m_cache = np.empty((n, q_seen), dtype=np.float32)
        ce_sum = dist_sum = total_sum = 0.0
        last_assignments: list[np.ndarray] = []

        for b, (lo, hi) in enumerate(batches):
            idx = perm[lo:hi]
            capture = b == len(batches) - 1
            try:
                res = forward(
                    p_raw[idx], model, tau=config.tau, hard=config.hard_gumbel,
                    rng=gumbel_rng, axis=config.gumbel_axis,
                    no_mining=config.no_mining, capture=capture,
                )
                p_m_cache[idx] = res.p_m.data
                m_cache[idx] = res.m_pred.data
                if capture:
                    last_assignments = res.extras.get("assignments", [])
                if config.no_ce and config.no_dist:
                    continue
                terms = partial_zsl_loss(
                    res.m_pred, state.r[idx], state.y[idx], c_text, res.l_m,
                    clamp_negative_r=config.clamp_negative_r,
                )
                if config.no_ce:
                    objective = terms["dist_term"]
                elif config.no_dist:
                    objective = terms["ce_term"]
                else:
                    objective = terms["total"]
                ce_val = 0.0 if config.no_ce else float(terms["ce_term"].data)
                dist_val = 0.0 if config.no_dist else float(terms["dist_term"].data)
                if not np.isfinite(ce_val + dist_val):
                    raise NumericError("loss diverged")
                ce_sum += ce_val
                dist_sum += dist_val
                total_sum += ce_val + dist_val
                opt.zero_grad()
                objective.backward()
                opt.step()
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from exc

        if config.correction_source == "raw":
            state.r = _correction_full(p_raw, c_seen)
        else:
            state.r = _correction_full(p_m_cache, c_seen)
        state.y = refine_confidence(state.r, m_cache, mask)
        state.epoch = epoch
        _assert_epoch_invariants(state, mask, epoch, last_assignments, config.hard_gumbel)

        nb = len(batches)
        disamb_acc = float((state.y.argmax(axis=1) == truth).mean())
        metrics = _test_metrics(config, data, model)
        row = {
            "epoch": epoch,
            "ce_term": ce_sum / nb,
            "dist_term": dist_sum / nb,
            "total": total_sum / nb,
            "train_disambiguation_acc": disamb_acc,
            **metrics,
        }
        history.append(row)
        if write_outputs:
            with open(metrics_path, "a") as f:
                f.write(_format_row(epoch, row["ce_term"], row["dist_term"], row["total"],
                                    disamb_acc, metrics) + "\n")
            if epoch % config.checkpoint_every == 0:
                save_checkpoint(model, out_dir / f"epoch_{epoch:04d}", epoch, config.to_dict())

    report = {
        "config_hash": config.config_hash(),
        "s_acc": history[-1].get("s_acc") if history else None,
        "u_acc": history[-1].get("u_acc") if history else None,
        "disambiguation_acc": history[-1]["train_disambiguation_acc"] if history else None,
    }
    if write_outputs:
        save_checkpoint(model, out_dir / "last", config.epochs, config.to_dict())
        (out_dir / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    return TrainResult(model=model, state=state, history=history, report=report)


def evaluate_checkpoint(ckpt_dir: str | Path, data_dir: str | Path) -> dict:
    """Recompute test metrics for a saved checkpoint; matches the final CSV
    row of the run that wrote it."""
    model, manifest = load_checkpoint(ckpt_dir)
    config = TrainConfig(**manifest["config"]) if manifest.get("config") else TrainConfig()
    data = load_dataset(data_dir, normalize=config.normalize_embeddings)
    return _test_metrics(config, data, model)


def benchmark_scaling(
    config: TrainConfig,
    sizes: list[int],
    dim: int = 32,
    epochs: int = 3,
    num_classes: int = 10,
    num_unseen: int = 2,
) -> dict:
    """Median per-epoch wall time for synthetic runs at each training-set
    size. For consecutive exact doublings with N >= 1000 the linear-in-N
    claim is asserted as time(2N)/time(N) <= 2.6."""
    if sorted(sizes) != list(sizes):
        raise ValidationError("sizes must be ascending")
    times: dict[int, float] = {}
    for n_train in sizes:
        per_class = max(1, n_train // (num_classes - num_unseen))
        names = [f"class_{i:02d}" for i in range(num_classes)]
        vocab = ClassVocabulary(seen=names[: num_classes - num_unseen], unseen=names[num_classes - num_unseen :])
        inst, labels, truth = synth_embeddings(vocab, per_class, dim, 0.4, seed=config.seed)
        seen_rows = np.asarray(truth) < vocab.num_seen
        train_store = EmbeddingStore(
            data=inst.data[seen_rows], ids=[i for i, s in zip(inst.ids, seen_rows) if s]
        )
        partial = synthesize_candidates(
            np.asarray(truth)[seen_rows], vocab.num_seen, config.q, seed=config.seed,
            instance_ids=train_store.ids,
        )
        data = DatasetBundle(
            vocab=vocab, label_store=labels, train_store=train_store, partial=partial
        )
        warm_cfg = TrainConfig(**{**config.to_dict(), "epochs": 1})
        train(warm_cfg, data=data, write_outputs=False)  # warmup
        run_cfg = TrainConfig(**{**config.to_dict(), "epochs": max(1, epochs)})
        t0 = time.perf_counter()
        train(run_cfg, data=data, write_outputs=False)
        times[n_train] = (time.perf_counter() - t0) / run_cfg.epochs
    for prev, nxt in zip(sizes, sizes[1:]):
        if prev >= 1000 and nxt == 2 * prev:
            ratio = times[nxt] / times[prev]
            if ratio > 2.6:
                raise NumericError(
                    f"per-epoch time ratio {ratio:.2f} at N={prev}->{nxt} exceeds 2.6"
                )
    return times
