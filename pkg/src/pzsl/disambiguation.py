"""Label correction, the two-term partial zero-shot loss, iterative
confidence refinement, and the seen-plus-unseen prediction rule.

The correction matrix R holds cosine similarities between current instance
features and the seen-class text embeddings; it reweights the candidate
cross-entropy and drives the per-epoch confidence update
Y[i,j] <- (r[i,j] + m[i,j]) normalized over the candidate set. R and Y are
plain arrays: they are recomputed between epochs, never differentiated
through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import ClassVocabulary
from .errors import DataError, NumericError, ShapeError
from .tensor import Tensor, add, clamp_min, log, mul, square, tsum

CONFIDENCE_FLOOR = 1e-8
LOG_CLAMP = 1e-12


@dataclass
class ConfidenceState:
    """Per-instance candidate confidences and the correction matrix at epoch t."""

    y: np.ndarray  # N x Q, zero outside candidates, rows sum to 1
    r: np.ndarray  # N x Q cosine similarities in [-1, 1]
    epoch: int = 0

    @classmethod
    def initial(cls, candidate_mask: np.ndarray) -> "ConfidenceState":
        """Uniform confidence over each candidate set, zero elsewhere."""
        mask = np.asarray(candidate_mask, dtype=bool)
        sizes = mask.sum(axis=1, keepdims=True)
        if (sizes == 0).any():
            raise DataError("empty candidate set")
        y = mask.astype(np.float32) / sizes.astype(np.float32)
        return cls(y=y, r=np.zeros_like(y), epoch=0)


def label_correction(p_t: np.ndarray, c_seen: np.ndarray) -> np.ndarray:
    """Cosine similarity of every instance row against every seen-class row."""
    p_t = np.asarray(p_t, dtype=np.float32)
    c_seen = np.asarray(c_seen, dtype=np.float32)
    if p_t.ndim != 2 or c_seen.ndim != 2 or p_t.shape[1] != c_seen.shape[1]:
        raise ShapeError(f"incompatible shapes {p_t.shape} and {c_seen.shape}")
    p_norm = np.linalg.norm(p_t, axis=1, keepdims=True)
    c_norm = np.linalg.norm(c_seen, axis=1, keepdims=True)
    if (p_norm < 1e-12).any() or (c_norm < 1e-12).any():
        raise NumericError("zero-norm row in cosine similarity")
    r = (p_t / p_norm) @ (c_seen / c_norm).T
    return np.clip(r, -1.0, 1.0)


def partial_zsl_loss(
    m_pred: Tensor,
    r: np.ndarray,
    y: np.ndarray,
    c: np.ndarray,
    l_t: Tensor,
    clamp_negative_r: bool = False,
) -> dict:
    """Doubly-weighted candidate cross-entropy plus the squared distance
    between the text embeddings and the learned label embeddings.

    Returns {"total", "ce_term", "dist_term"} as scalar tensors; total is
    differentiable w.r.t. the prediction graph and the label embeddings.
    clamp_negative_r zeroes negative correction weights (ablation switch;
    default uses them as-is).
    """
    if m_pred.data.shape != r.shape or r.shape != y.shape:
        raise ShapeError(f"prediction {m_pred.data.shape}, r {r.shape}, y {y.shape} disagree")
    if c.shape != l_t.data.shape:
        raise ShapeError(f"text embeddings {c.shape} vs label embeddings {l_t.data.shape}")
    weights = r * y
    if clamp_negative_r:
        weights = np.maximum(r, 0.0) * y
    w = Tensor(weights.astype(m_pred.data.dtype), dtype=m_pred.data.dtype)
    ce = mul(tsum(mul(w, log(clamp_min(m_pred, LOG_CLAMP)))), -1.0)
    dist = tsum(square(add(mul(l_t, -1.0), Tensor(np.asarray(c, dtype=l_t.data.dtype), dtype=l_t.data.dtype))))
    total = add(ce, dist)
    if not np.isfinite(total.data):
        raise NumericError("partial zero-shot loss is non-finite")
    return {"total": total, "ce_term": ce, "dist_term": dist}


def refine_confidence(r: np.ndarray, m_pred: np.ndarray, candidate_mask: np.ndarray) -> np.ndarray:
    """Next-epoch confidences: u = r + m, floored at a tiny epsilon and
    normalized within each candidate set; identically zero outside."""
    r = np.asarray(r, dtype=np.float32)
    m_pred = np.asarray(m_pred, dtype=np.float32)
    mask = np.asarray(candidate_mask, dtype=bool)
    if r.shape != m_pred.shape or r.shape != mask.shape:
        raise ShapeError(f"r {r.shape}, m {m_pred.shape}, mask {mask.shape} disagree")
    if not mask.any(axis=1).all():
        raise DataError("empty candidate set")
    u = np.maximum(r + m_pred, CONFIDENCE_FLOOR)
    u = np.where(mask, u, 0.0)
    return (u / u.sum(axis=1, keepdims=True)).astype(np.float32)


def class_scores(p: np.ndarray, c_all: np.ndarray) -> np.ndarray:
    """Inner products of instance rows against every class embedding."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float32))
    c_all = np.asarray(c_all, dtype=np.float32)
    if c_all.shape[0] < 1:
        raise ShapeError("need at least one class embedding")
    return p @ c_all.T


def predict(p: np.ndarray, c_all: np.ndarray) -> int:
    """Highest-scoring class over seen plus unseen; ties go to the lowest index."""
    return int(class_scores(p, c_all)[0].argmax())


def predict_batch(p: np.ndarray, c_all: np.ndarray) -> np.ndarray:
    return class_scores(p, c_all).argmax(axis=1)


def evaluate(
    predictions: np.ndarray,
    truth: np.ndarray,
    vocab: ClassVocabulary,
) -> dict:
    """Seen/unseen accuracy split. Partitions without test instances are
    simply absent from the result, never reported as zero."""
    predictions = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predictions.shape != truth.shape:
        raise ShapeError("predictions and truth lengths disagree")
    k = vocab.num_classes
    if truth.size and (truth.min() < 0 or truth.max() >= k):
        raise DataError(f"truth label outside the {k}-class vocabulary")
    seen = truth < vocab.num_seen
    out: dict = {}
    if seen.any():
        out["s_acc"] = float((predictions[seen] == truth[seen]).mean())
    if (~seen).any():
        out["u_acc"] = float((predictions[~seen] == truth[~seen]).mean())
    return out
