"""Partial-label zero-shot learning over embedding matrices.

The package trains a semantic mining block (instance self-attention plus
label/instance cross-attention with approximate-argmax cluster assignments)
under a two-term partial zero-shot loss, while iteratively refining
per-instance confidences over candidate label sets. Embeddings come from the
bundled synthetic generator or from binary `.pzslemb` files produced by an
external exporter.
"""

from .candidates import PartialDataset, candidate_stats, synthesize_candidates
from .disambiguation import (
    ConfidenceState,
    evaluate,
    label_correction,
    partial_zsl_loss,
    predict,
    predict_batch,
    refine_confidence,
)
from .embeddings import (
    ClassVocabulary,
    EmbeddingStore,
    build_prompts,
    load_embeddings,
    save_embeddings,
    synth_embeddings,
)
from .errors import (
    DataError,
    FormatError,
    NumericError,
    ParameterError,
    PzslError,
    ShapeError,
    ValidationError,
)
from .gradcheck import gradcheck
from .model import ModelParams, forward, init_model, load_checkpoint, save_checkpoint
from .optim import SGDMomentum
from .tensor import Tensor, gumbel_softmax_rows, layer_norm, matmul, softmax_rows
from .train import TrainConfig, benchmark_scaling, load_dataset, train, write_dataset

__version__ = "0.1.0"

__all__ = [
    "ClassVocabulary",
    "ConfidenceState",
    "DataError",
    "EmbeddingStore",
    "FormatError",
    "ModelParams",
    "NumericError",
    "ParameterError",
    "PartialDataset",
    "PzslError",
    "SGDMomentum",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "ValidationError",
    "benchmark_scaling",
    "build_prompts",
    "candidate_stats",
    "evaluate",
    "forward",
    "gradcheck",
    "gumbel_softmax_rows",
    "init_model",
    "label_correction",
    "layer_norm",
    "load_checkpoint",
    "load_dataset",
    "load_embeddings",
    "matmul",
    "partial_zsl_loss",
    "predict",
    "predict_batch",
    "refine_confidence",
    "save_checkpoint",
    "save_embeddings",
    "softmax_rows",
    "synth_embeddings",
    "synthesize_candidates",
    "train",
    "write_dataset",
]
