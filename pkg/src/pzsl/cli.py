"""Command-line surface: dataset synthesis, training, evaluation,
prediction, gradient verification, and the scaling benchmark.

Exit codes: 0 success, 1 validation/usage failure, 2 numeric failure.
A JSON file passed via --config overrides any train flags it names.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from .errors import NumericError, PzslError, ValidationError
from .train import (
    TrainConfig,
    benchmark_scaling,
    evaluate_checkpoint,
    load_dataset,
    train,
    write_dataset,
)

GRADCHECK_GATE = 5e-3


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad flags; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _add_synth(sub):
    p = sub.add_parser("synth-data", help="generate a synthetic embedding dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--unseen", type=int, default=2)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise-sigma", type=float, default=0.4)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--q", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)


def _cmd_synth(args) -> int:
    info = write_dataset(
        args.out, args.classes, args.unseen, args.dim, args.noise_sigma,
        args.per_class, args.test_per_class, args.q, args.seed,
    )
    print(json.dumps(info))
    return 0


def _add_train(sub):
    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--config", help="JSON config; values override flags")
    p.add_argument("--data", dest="data_dir", default="data")
    p.add_argument("--out", dest="out_dir", default="out")
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--momentum", type=float, default=TrainConfig.momentum)
    p.add_argument("--layers", type=int, default=TrainConfig.layers)
    p.add_argument("--tau", type=float, default=TrainConfig.tau)
    p.add_argument("--soft-gumbel", action="store_true", help="soft assignments instead of hard")
    p.add_argument("--q", type=float, default=TrainConfig.q)
    p.add_argument("--seed", type=int, default=TrainConfig.seed)
    p.add_argument("--mlp-hidden", type=int, default=None)
    p.add_argument("--no-ce", action="store_true", help="ablation: drop the cross-entropy term")
    p.add_argument("--no-dist", action="store_true", help="ablation: drop the distance term")
    p.add_argument("--no-mining", action="store_true", help="ablation: bypass the mining block")
    p.add_argument("--gumbel-axis", choices=["label", "instance"], default=TrainConfig.gumbel_axis)
    p.add_argument("--no-normalize", action="store_true", help="skip L2 normalization at load")
    p.add_argument("--correction-source", choices=["raw", "mined"], default=TrainConfig.correction_source)
    p.add_argument("--predict-with", choices=["text", "learned"], default=TrainConfig.predict_with)
    p.add_argument("--clamp-negative-r", action="store_true")
    p.add_argument("--checkpoint-every", type=int, default=TrainConfig.checkpoint_every)
    p.set_defaults(func=_cmd_train)


def _config_from_args(args) -> TrainConfig:
    kwargs = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "momentum": args.momentum,
        "layers": args.layers,
        "tau": args.tau,
        "hard_gumbel": not args.soft_gumbel,
        "q": args.q,
        "seed": args.seed,
        "mlp_hidden": args.mlp_hidden,
        "no_ce": args.no_ce,
        "no_dist": args.no_dist,
        "no_mining": args.no_mining,
        "gumbel_axis": args.gumbel_axis,
        "normalize_embeddings": not args.no_normalize,
        "correction_source": args.correction_source,
        "predict_with": args.predict_with,
        "clamp_negative_r": args.clamp_negative_r,
        "checkpoint_every": args.checkpoint_every,
        "data_dir": args.data_dir,
        "out_dir": args.out_dir,
    }
    if args.config:
        blob = json.loads(Path(args.config).read_text())
        known = {f.name for f in fields(TrainConfig)}
        unknown = set(blob) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs.update(blob)
    return TrainConfig(**kwargs)


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    result = train(config)
    print(json.dumps(result.report))
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", dest="data_dir", required=True)
    p.set_defaults(func=_cmd_eval)


def _cmd_eval(args) -> int:
    metrics = evaluate_checkpoint(args.ckpt, args.data_dir)
    parts = []
    for key in ("s_acc", "u_acc"):
        parts.append(f"{key}={metrics[key]:.8g}" if key in metrics else f"{key}=absent")
    print(" ".join(parts))
    return 0


def _add_predict(sub):
    p = sub.add_parser("predict", help="predict classes for a split")
    p.add_argument("--data", dest="data_dir", required=True)
    p.add_argument("--split", choices=["test", "train"], default="test")
    p.add_argument("--ckpt", help="checkpoint dir; required with --use-learned-labels")
    p.add_argument("--use-learned-labels", action="store_true",
                   help="score against refined label embeddings instead of text embeddings")
    p.add_argument("--out", help="write predictions JSON here (default: stdout)")
    p.set_defaults(func=_cmd_predict)


def _cmd_predict(args) -> int:
    from .disambiguation import predict_batch
    from .model import forward, load_checkpoint

    data = load_dataset(args.data_dir)
    store = data.test_store if args.split == "test" else data.train_store
    if store is None:
        raise ValidationError(f"dataset has no {args.split} split")
    if args.use_learned_labels:
        if not args.ckpt:
            raise ValidationError("--use-learned-labels needs --ckpt")
        model, manifest = load_checkpoint(args.ckpt)
        cfg = TrainConfig(**manifest.get("config") or {})
        res = forward(store.data, model, tau=cfg.tau, hard=cfg.hard_gumbel,
                      rng=None, axis=cfg.gumbel_axis, no_mining=cfg.no_mining)
        class_embs = res.l_m.data
    else:
        class_embs = data.label_store.data
    preds = predict_batch(store.data, class_embs)
    names = data.vocab.all_classes
    payload = {
        "ids": store.ids,
        "indices": [int(i) for i in preds],
        "classes": [names[i] for i in preds],
    }
    text = json.dumps(payload)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _add_gradcheck(sub):
    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_gradcheck)


def _cmd_gradcheck(args) -> int:
    from .gradcheck import suite

    results = suite(seed=args.seed)
    for name, err in results.items():
        print(f"{name}: {err:.3e}")
    worst = max(results.values())
    print(f"max relative error: {worst:.3e}")
    return 0 if worst <= GRADCHECK_GATE else 2


def _add_bench(sub):
    p = sub.add_parser("bench", help="per-epoch wall time across training-set sizes")
    p.add_argument("--sizes", default="1000,2000", help="comma-separated ascending N values")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cmd_bench)


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    config = TrainConfig(seed=args.seed)
    times = benchmark_scaling(config, sizes, dim=args.dim, epochs=args.epochs)
    for n, secs in times.items():
        print(f"N={n}: {secs:.4f} s/epoch")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pzsl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_predict(sub)
    _add_gradcheck(sub)
    _add_bench(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (PzslError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
