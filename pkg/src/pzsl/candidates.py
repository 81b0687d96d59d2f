"""Candidate-label corruption of a ground-truth dataset.

Each training instance's candidate set is built by Q-1 independent Bernoulli
decisions: every label other than the true one joins the set with probability
q, and the true label is always a member. Candidate sets are drawn once and
frozen; the JSON serialization {q, seed, rows} makes a run replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError


@dataclass
class PartialDataset:
    """Instances with candidate-label masks over the seen classes.

    hidden_truth is kept for evaluation only; the training loss never sees it.
    """

    instance_ids: list[str]
    candidate_mask: np.ndarray  # N x Q bool
    hidden_truth: np.ndarray  # N int, indices < Q
    q: float
    seed: int

    def __post_init__(self):
        self.candidate_mask = np.asarray(self.candidate_mask, dtype=bool)
        self.hidden_truth = np.asarray(self.hidden_truth, dtype=np.int64)
        n = self.candidate_mask.shape[0]
        if len(self.instance_ids) != n or self.hidden_truth.shape[0] != n:
            raise DataError("ids, mask, and truth lengths disagree")
        if not self.candidate_mask[np.arange(n), self.hidden_truth].all():
            raise DataError("ground-truth label missing from a candidate set")
        if not self.candidate_mask.any(axis=1).all():
            raise DataError("empty candidate set")

    @property
    def num_instances(self) -> int:
        return self.candidate_mask.shape[0]

    @property
    def num_seen(self) -> int:
        return self.candidate_mask.shape[1]


def synthesize_candidates(
    truth: list[int] | np.ndarray,
    num_seen: int,
    q: float,
    seed: int,
    instance_ids: list[str] | None = None,
) -> PartialDataset:
    """Corrupt true labels into candidate sets with per-label flip rate q."""
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"noise probability q must be in [0, 1], got {q}")
    truth = np.asarray(truth, dtype=np.int64)
    if truth.size and (truth.min() < 0 or truth.max() >= num_seen):
        raise ParameterError("truth indices must lie in [0, num_seen)")
    n = truth.shape[0]
    rng = np.random.default_rng(seed)
    mask = rng.random((n, num_seen)) < q
    mask[np.arange(n), truth] = True
    if instance_ids is None:
        instance_ids = [f"inst_{i:06d}" for i in range(n)]
    return PartialDataset(
        instance_ids=list(instance_ids),
        candidate_mask=mask,
        hidden_truth=truth,
        q=q,
        seed=seed,
    )


def candidate_stats(ds: PartialDataset) -> dict:
    sizes = ds.candidate_mask.sum(axis=1)
    return {
        "mean_size": float(sizes.mean()),
        "min_size": int(sizes.min()),
        "max_size": int(sizes.max()),
        "ambiguity_rate": float((sizes > 1).mean()),
    }


def save_candidates(ds: PartialDataset, path: str | Path) -> None:
    rows = [np.flatnonzero(row).tolist() for row in ds.candidate_mask]
    with open(path, "w") as f:
        json.dump({"q": ds.q, "seed": ds.seed, "rows": rows}, f)
        f.write("\n")


def load_candidates(
    path: str | Path, truth: list[int] | np.ndarray, num_seen: int, instance_ids: list[str]
) -> PartialDataset:
    blob = json.loads(Path(path).read_text())
    rows = blob["rows"]
    if len(rows) != len(instance_ids):
        raise DataError(f"{path}: {len(rows)} candidate rows for {len(instance_ids)} instances")
    mask = np.zeros((len(rows), num_seen), dtype=bool)
    for i, cols in enumerate(rows):
        if not cols:
            raise DataError(f"{path}: empty candidate row {i}")
        mask[i, cols] = True
    return PartialDataset(
        instance_ids=list(instance_ids),
        candidate_mask=mask,
        hidden_truth=np.asarray(truth, dtype=np.int64),
        q=float(blob["q"]),
        seed=int(blob["seed"]),
    )
