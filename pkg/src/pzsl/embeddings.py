"""Embedding matrices on disk and in memory.

Binary layout of a `.pzslemb` file:

    bytes 0..8   magic "PZSLEMB1"
    bytes 8..12  u32 little-endian row count
    bytes 12..16 u32 little-endian embedding dimension
    bytes 16..   count * dim little-endian float32, row-major

Row identifiers and the seen/unseen class partition live in a sibling JSON
manifest (`foo.pzslemb` <-> `foo.manifest.json`) with keys
{version, ids, seen, unseen, dim, count}. The format is deliberately dumb so
that independently written exporters can produce bit-exact compatible files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ParameterError, ValidationError

MAGIC = b"PZSLEMB1"
MANIFEST_VERSION = 1
PROMPT_TEMPLATE = "A photo of a {}."


@dataclass
class EmbeddingStore:
    """count x dim float32 matrix plus ordered string row identifiers."""

    data: np.ndarray
    ids: list[str]

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValidationError(f"embedding data must be 2-D, got shape {self.data.shape}")
        if len(self.ids) != self.data.shape[0]:
            raise ValidationError(
                f"{len(self.ids)} ids for {self.data.shape[0]} embedding rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate ids in embedding store")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass
class ClassVocabulary:
    """Ordered seen and unseen class names; seen-first ordering is canonical."""

    seen: list[str]
    unseen: list[str] = field(default_factory=list)
    prompt_template: str = PROMPT_TEMPLATE

    def __post_init__(self):
        overlap = set(self.seen) & set(self.unseen)
        if overlap:
            raise ValidationError(f"seen and unseen classes overlap: {sorted(overlap)}")
        if "{}" not in self.prompt_template:
            raise ValidationError("prompt template needs a '{}' placeholder")

    @property
    def num_seen(self) -> int:
        return len(self.seen)

    @property
    def num_classes(self) -> int:
        return len(self.seen) + len(self.unseen)

    @property
    def all_classes(self) -> list[str]:
        return list(self.seen) + list(self.unseen)


def build_prompts(vocab: ClassVocabulary) -> list[str]:
    """One caption per class, seen then unseen, placeholder substituted."""
    prompts = []
    for name in vocab.all_classes:
        if not name:
            raise ValidationError("empty class name")
        prompts.append(vocab.prompt_template.format(name))
    return prompts


def manifest_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name.removesuffix(".pzslemb") + ".manifest.json")


def l2_normalize_rows(data: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    norms = np.linalg.norm(data, axis=1, keepdims=True)
    return (data / np.maximum(norms, eps)).astype(np.float32)


def save_embeddings(store: EmbeddingStore, path: str | Path, vocab: ClassVocabulary | None = None) -> None:
    path = Path(path)
    payload = store.data.astype("<f4", copy=False).tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", store.count, store.dim))
        f.write(payload)
    manifest = {
        "version": MANIFEST_VERSION,
        "ids": store.ids,
        "seen": vocab.seen if vocab else [],
        "unseen": vocab.unseen if vocab else [],
        "dim": store.dim,
        "count": store.count,
    }
    with open(manifest_path(path), "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")


def load_embeddings(path: str | Path, normalize: bool = True) -> tuple[EmbeddingStore, dict]:
    """Read a `.pzslemb` file and its manifest; returns (store, manifest).

    With normalize=True (default) rows are L2-normalized after reading, so
    cosine similarity downstream reduces to a dot product. Use
    normalize=False for the bit-exact raw payload.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header, file ends at byte {len(raw)} (need 16)")
    if raw[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:8]!r} at byte 0, expected {MAGIC!r}")
    count, dim = struct.unpack("<II", raw[8:16])
    expected = 16 + count * dim * 4
    if len(raw) != expected:
        raise FormatError(
            f"{path}: payload ends at byte {len(raw)}, header implies {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=16).reshape(count, dim).copy()

    mpath = manifest_path(path)
    if not mpath.exists():
        raise FormatError(f"{mpath}: manifest missing")
    manifest = json.loads(mpath.read_text())
    for key in ("ids", "count", "dim"):
        if key not in manifest:
            raise FormatError(f"{mpath}: manifest missing key {key!r}")
    if manifest["count"] != count or manifest["dim"] != dim:
        raise FormatError(
            f"{mpath}: manifest count/dim ({manifest['count']},{manifest['dim']}) "
            f"disagree with header ({count},{dim}) at byte 8"
        )
    if len(manifest["ids"]) != count:
        raise FormatError(
            f"{mpath}: manifest lists {len(manifest['ids'])} ids, header count is {count} at byte 8"
        )
    if normalize:
        data = l2_normalize_rows(data)
    store = EmbeddingStore(data=data, ids=list(manifest["ids"]))
    return store, manifest


def load_vocabulary(labels_path: str | Path) -> ClassVocabulary:
    manifest = json.loads(manifest_path(labels_path).read_text())
    if not manifest.get("seen"):
        raise DataError(f"{manifest_path(labels_path)}: no seen classes recorded")
    return ClassVocabulary(seen=list(manifest["seen"]), unseen=list(manifest.get("unseen", [])))


def synth_embeddings(
    vocab: ClassVocabulary,
    n_per_class: int,
    dim: int,
    noise_sigma: float,
    seed: int,
    id_prefix: str = "inst",
) -> tuple[EmbeddingStore, EmbeddingStore, list[int]]:
    """Synthetic stand-in for the neural encoders.

    Draws one unit-norm prototype per class (uniform on the sphere), uses the
    prototypes as label embeddings, and generates instances by adding
    isotropic Gaussian noise to the class prototype and re-normalizing.
    Returns (instances, labels, generating class index per instance).
    """
    if dim < 2:
        raise ParameterError(f"embedding dim must be >= 2, got {dim}")
    if noise_sigma < 0:
        raise ParameterError(f"noise sigma must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    k = vocab.num_classes
    prototypes = rng.standard_normal((k, dim)).astype(np.float32)
    prototypes = l2_normalize_rows(prototypes)
    label_store = EmbeddingStore(data=prototypes, ids=vocab.all_classes)

    rows = []
    ids = []
    truth = []
    for c in range(k):
        noise = rng.standard_normal((n_per_class, dim)).astype(np.float32) * np.float32(noise_sigma)
        rows.append(l2_normalize_rows(prototypes[c] + noise))
        for j in range(n_per_class):
            ids.append(f"{id_prefix}_{c:03d}_{j:05d}")
            truth.append(c)
    instances = EmbeddingStore(data=np.concatenate(rows, axis=0), ids=ids)
    return instances, label_store, truth
