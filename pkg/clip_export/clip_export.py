#!/usr/bin/env python3
"""Export CLIP ViT-B/16 embeddings for a torchvision dataset in the engine's
binary format.

Writes into the output directory:

    instances.pzslemb / instances.manifest.json   one row per image
    labels.pzslemb / labels.manifest.json         one row per class prompt
    truth.json                                    {"ids": [...], "labels": [...]}

The binary layout is magic "PZSLEMB1", u32 count, u32 dim (little endian),
then count*dim little-endian float32 row-major; the manifest carries
{version, ids, seen, unseen, dim, count}. This file is deliberately
self-contained (no imports from the training package) so the two format
implementations stay independent.

All embeddings are L2-normalized. Preprocessing is deterministic (resize to
224, center crop, no augmentation), so re-exports with identical weights are
bit-identical. The class list is sorted lexicographically and the first
Q names are the seen classes; the counts per dataset follow the standard
splits (cifar10 8/2, cifar100 80/20, food101 80/21).

Usage:
    python3 clip_export.py --dataset cifar10 --split test --out exported/
    python3 clip_export.py --dataset cifar10 --split test --out exported/ --check-baseline

Requires network access (or warm caches) for the pretrained weights and the
dataset download; exits nonzero with a message when either fails.
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"PZSLEMB1"
MODEL_NAME = "openai/clip-vit-base-patch16"
EMBED_DIM = 512
PROMPT = "A photo of a {}."

DATASET_SPLITS = {
    "cifar10": (8, 2),
    "cifar100": (80, 20),
    "food101": (80, 21),
}


@dataclass
class ExportJob:
    dataset: str
    split: str
    out_dir: Path
    device: str = "cpu"
    batch_size: int = 64
    data_root: Path = field(default_factory=lambda: Path("datasets"))

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.data_root = Path(self.data_root)
        if self.dataset not in DATASET_SPLITS:
            raise ValueError(f"unsupported dataset {self.dataset!r}; choose from {sorted(DATASET_SPLITS)}")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")


def partition_classes(class_names: list[str], num_unseen: int) -> tuple[list[str], list[str]]:
    """Lexicographically sorted; first Q are seen, the remainder unseen."""
    ordered = sorted(class_names)
    return ordered[: len(ordered) - num_unseen], ordered[len(ordered) - num_unseen :]


def write_store(path: Path, data: np.ndarray, ids: list[str], seen: list[str], unseen: list[str]) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    count, dim = data.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", count, dim))
        f.write(data.tobytes())
    manifest = {
        "version": 1,
        "ids": ids,
        "seen": seen,
        "unseen": unseen,
        "dim": dim,
        "count": count,
    }
    sidecar = path.with_name(path.name.removesuffix(".pzslemb") + ".manifest.json")
    with open(sidecar, "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")


def l2_normalize(x: np.ndarray) -> np.ndarray:
    return (x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)).astype(np.float32)


def load_clip_encoders(device: str):
    """Returns (encode_images, encode_texts) closures over a frozen CLIP."""
    import torch
    from transformers import CLIPModel, CLIPProcessor

    model = CLIPModel.from_pretrained(MODEL_NAME)
    processor = CLIPProcessor.from_pretrained(MODEL_NAME)
    model.eval().to(device)

    @torch.no_grad()
    def encode_images(images) -> np.ndarray:
        inputs = processor(images=images, return_tensors="pt").to(device)
        feats = model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    @torch.no_grad()
    def encode_texts(texts: list[str]) -> np.ndarray:
        inputs = processor(text=texts, return_tensors="pt", padding=True).to(device)
        feats = model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    return encode_images, encode_texts


def load_dataset(job: ExportJob):
    """Returns (iterable of (PIL image, class index), class names)."""
    from torchvision import datasets

    train = job.split == "train"
    root = str(job.data_root)
    if job.dataset == "cifar10":
        ds = datasets.CIFAR10(root, train=train, download=True)
    elif job.dataset == "cifar100":
        ds = datasets.CIFAR100(root, train=train, download=True)
    else:
        ds = datasets.Food101(root, split="train" if train else "test", download=True)
    return ds, list(ds.classes)


def export(job: ExportJob, encoders=None, dataset=None) -> dict:
    """Embed every image and class prompt; write stores, manifests, truth.

    `encoders` and `dataset` exist for testing with stand-ins; by default the
    pretrained CLIP and the torchvision dataset are loaded.
    """
    if dataset is None:
        dataset, class_names = load_dataset(job)
    else:
        dataset, class_names = dataset
    if encoders is None:
        encode_images, encode_texts = load_clip_encoders(job.device)
    else:
        encode_images, encode_texts = encoders

    num_unseen = DATASET_SPLITS[job.dataset][1]
    seen, unseen = partition_classes(class_names, num_unseen)
    ordered = seen + unseen
    # class index in the dataset -> row in the seen-then-unseen label store
    remap = {class_names.index(name): row for row, name in enumerate(ordered)}

    prompts = [PROMPT.format(name.replace("_", " ")) for name in ordered]
    label_vecs = encode_texts(prompts)
    if label_vecs.shape != (len(ordered), EMBED_DIM):
        raise ValueError(f"text encoder emitted {label_vecs.shape}, expected ({len(ordered)}, {EMBED_DIM})")

    rows = []
    truth = []
    ids = []
    batch_images = []
    for i, (image, target) in enumerate(dataset):
        batch_images.append(image)
        truth.append(remap[int(target)])
        ids.append(f"{job.dataset}_{job.split}_{i:06d}")
        if len(batch_images) == job.batch_size:
            rows.append(encode_images(batch_images))
            batch_images = []
    if batch_images:
        rows.append(encode_images(batch_images))
    instance_vecs = np.concatenate(rows, axis=0)
    if instance_vecs.shape[1] != EMBED_DIM:
        raise ValueError(f"image encoder emitted dim {instance_vecs.shape[1]}, expected {EMBED_DIM}")

    job.out_dir.mkdir(parents=True, exist_ok=True)
    write_store(job.out_dir / "labels.pzslemb", l2_normalize(label_vecs), ordered, seen, unseen)
    write_store(job.out_dir / "instances.pzslemb", l2_normalize(instance_vecs), ids, seen, unseen)
    (job.out_dir / "truth.json").write_text(json.dumps({"ids": ids, "labels": truth}) + "\n")
    return {
        "dataset": job.dataset,
        "split": job.split,
        "instances": int(instance_vecs.shape[0]),
        "classes": len(ordered),
        "seen": len(seen),
        "unseen": len(unseen),
        "dim": EMBED_DIM,
    }


def baseline_metrics(out_dir: Path) -> dict:
    """Zero-shot accuracies of the exported embeddings: every instance goes
    to the class with the highest inner product (no training involved)."""
    out_dir = Path(out_dir)

    def read_store(path: Path) -> np.ndarray:
        raw = path.read_bytes()
        if raw[:8] != MAGIC:
            raise ValueError(f"{path}: bad magic")
        count, dim = struct.unpack("<II", raw[8:16])
        return np.frombuffer(raw, dtype="<f4", offset=16).reshape(count, dim)

    instances = read_store(out_dir / "instances.pzslemb")
    labels = read_store(out_dir / "labels.pzslemb")
    manifest = json.loads((out_dir / "labels.manifest.json").read_text())
    truth = np.asarray(json.loads((out_dir / "truth.json").read_text())["labels"])
    preds = (instances @ labels.T).argmax(axis=1)
    num_seen = len(manifest["seen"])
    seen_mask = truth < num_seen
    metrics = {}
    if seen_mask.any():
        metrics["s_acc"] = float((preds[seen_mask] == truth[seen_mask]).mean())
    if (~seen_mask).any():
        metrics["u_acc"] = float((preds[~seen_mask] == truth[~seen_mask]).mean())
    return metrics


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--dataset", default="cifar10", choices=sorted(DATASET_SPLITS))
    parser.add_argument("--split", default="test", choices=["train", "test"])
    parser.add_argument("--out", required=True)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--data-root", default="datasets")
    parser.add_argument("--check-baseline", action="store_true",
                        help="print zero-shot seen/unseen accuracy of the exported files")
    args = parser.parse_args(argv)

    job = ExportJob(dataset=args.dataset, split=args.split, out_dir=Path(args.out),
                    device=args.device, batch_size=args.batch_size,
                    data_root=Path(args.data_root))
    try:
        info = export(job)
    except Exception as exc:  # download/checksum/weights failures
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(info))
    if args.check_baseline:
        print(json.dumps(baseline_metrics(job.out_dir)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
