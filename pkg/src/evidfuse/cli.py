"""Command line interface: one subcommand per pipeline stage.

Every subcommand reads tensors from files, writes tensor outputs to the
paths given by flags, and prints a single JSON summary line on stdout
with the fields command, inputs, outputs, stats, elapsed_ms. train-toy
additionally prints one JSON line per epoch before the summary; those
lines carry no timing, so a fixed seed reproduces them byte for byte.

Exit codes: 0 success, 1 validation error, 2 file or tensor format
error, 3 numerical error. Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .evidence import belief_to_probability, evidence_to_belief
from .exceptions import (
    NumericalError,
    TensorIOError,
    ValidationError,
)
from .fusion import FusionConfig, fuse_volumes
from .mixing import MixMask, generate_mask, mix_pair, restore_predictions
from .tensor_io import load_tensor, save_tensor
from .training import (
    ToyModel,
    TrainConfig,
    evaluate,
    generate_synthetic,
    pretrain,
    self_train,
)
from .uncertainty import uncertainty_volume
from .weighting import (
    ASCENDING,
    DESCENDING,
    WeightSchedule,
    dynamic_weight,
    rank_voxels,
    weight_volume,
    weighted_loss,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; route through the
    # package's validation error instead so the CLI contract holds
    def error(self, message):
        raise ValidationError(message)


def _schedule(args):
    return WeightSchedule(epsilon=args.epsilon, epoch=args.epoch,
                          total_epochs=args.epochs, rank_order=args.order)


def _batch_items(*arrays):
    lead = {a.shape[0] for a in arrays}
    if len(lead) != 1:
        raise ValidationError("batched inputs must share the leading dimension")
    return lead.pop()


def _stats_shape(arr):
    return {"shape": [int(d) for d in arr.shape]}


# -- subcommand handlers -----------------------------------------------


def _cmd_fuse(args):
    a = load_tensor(args.a)
    b = load_tensor(args.b)
    cfg = FusionConfig(renormalize_output=not args.no_renorm,
                       conflict_epsilon=args.conflict_epsilon)
    fused = fuse_volumes(a, b, cfg)
    save_tensor(fused, args.out)
    stats = _stats_shape(fused)
    stats["classes"] = int(fused.shape[-1]) - 1
    return {"a": args.a, "b": args.b}, {"out": args.out}, stats


def _cmd_belief(args):
    logits = load_tensor(args.logits)
    belief = evidence_to_belief(logits)
    save_tensor(belief, args.out)
    inputs = {"logits": args.logits}
    outputs = {"out": args.out}
    if args.probabilities:
        save_tensor(belief_to_probability(belief).astype(np.float32),
                    args.probabilities)
        outputs["probabilities"] = args.probabilities
    stats = _stats_shape(belief)
    stats["classes"] = int(belief.shape[-1]) - 1
    return inputs, outputs, stats


def _cmd_uncertainty(args):
    belief = load_tensor(args.belief)
    u = uncertainty_volume(belief, raw_singletons=args.raw_singletons)
    save_tensor(u, args.out)
    stats = {"min": float(u.min()), "mean": float(u.mean()),
             "max": float(u.max())}
    return {"belief": args.belief}, {"out": args.out}, stats


def _cmd_weights(args):
    u = load_tensor(args.u)
    sched = _schedule(args)
    if args.batched:
        count = _batch_items(u)
        w = np.stack([weight_volume(u[k], sched) for k in range(count)])
    else:
        w = weight_volume(u, sched)
    w = w.astype(np.float32)
    save_tensor(w, args.out)
    stats = {"min": float(w.min()), "mean": float(w.mean()),
             "max": float(w.max())}
    return {"u": args.u}, {"out": args.out}, stats


def _cmd_rank(args):
    u = load_tensor(args.u)
    if args.batched:
        count = _batch_items(u)
        ranks = np.stack([rank_voxels(u[k], args.order) for k in range(count)])
    else:
        ranks = rank_voxels(u, args.order)
    # ranks are small integers; float32 holds them exactly
    save_tensor(ranks.astype(np.float32), args.out)
    return {"u": args.u}, {"out": args.out}, _stats_shape(ranks)


def _cmd_weighted_loss(args):
    loss = load_tensor(args.loss)
    u = load_tensor(args.u)
    sched = _schedule(args)
    if args.batched:
        count = _batch_items(loss, u)
        values = [weighted_loss(loss[k], u[k], sched) for k in range(count)]
    else:
        values = [weighted_loss(loss, u, sched)]
    stats = {"weighted_loss": [float(v) for v in values],
             "batched": bool(args.batched)}
    return {"loss": args.loss, "u": args.u}, {}, stats


def _cmd_weight_at(args):
    try:
        ordinals = [int(part) for part in args.rank.split(",") if part.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --rank list: {args.rank}") from exc
    if not ordinals:
        raise ValidationError("--rank needs at least one ordinal")
    sched = WeightSchedule(epsilon=args.epsilon, epoch=args.epoch,
                           total_epochs=args.epochs)
    values = [float(dynamic_weight(sched, s, args.count)) for s in ordinals]
    return {}, {}, {"weights": values, "count": int(args.count)}


def _load_mask_file(path):
    mask = load_tensor(path)
    if mask.dtype != np.uint8:
        mask = mask.astype(np.uint8)
    return mask


def _cmd_mix(args):
    a = load_tensor(args.a)
    b = load_tensor(args.b)
    inputs = {"a": args.a, "b": args.b}

    if (args.mask is None) == (args.zero_size is None):
        raise ValidationError("give exactly one of --mask or --zero-size")
    if args.mask is not None:
        inputs["mask"] = args.mask
        mask = _load_mask_file(args.mask)
        masks = list(mask) if args.batched else [mask]
    else:
        try:
            zero = tuple(int(p) for p in args.zero_size.split(","))
        except ValueError as exc:
            raise ValidationError(
                f"bad --zero-size: {args.zero_size}") from exc
        shape = a.shape[1:4] if args.batched else a.shape[:3]
        rng = np.random.default_rng(args.seed)
        count = a.shape[0] if args.batched else 1
        masks = [generate_mask(shape, zero, rng).mask for _ in range(count)]

    if args.batched:
        count = _batch_items(a, b)
        if len(masks) != count:
            raise ValidationError(
                f"need {count} masks for {count} volume pairs, got {len(masks)}")
        pairs = [mix_pair(a[k], b[k], masks[k]) for k in range(count)]
        mixed_a = np.stack([p.mixed_a for p in pairs])
        mixed_b = np.stack([p.mixed_b for p in pairs])
        mask_out = np.stack(masks)
    else:
        pair = mix_pair(a, b, masks[0])
        mixed_a, mixed_b, mask_out = pair.mixed_a, pair.mixed_b, masks[0]

    save_tensor(mixed_a, args.out_a)
    save_tensor(mixed_b, args.out_b)
    outputs = {"out_a": args.out_a, "out_b": args.out_b}
    if args.out_mask:
        save_tensor(mask_out.astype(np.uint8), args.out_mask)
        outputs["out_mask"] = args.out_mask
    stats = _stats_shape(mixed_a)
    stats["zero_voxels"] = int((np.asarray(mask_out) == 0).sum())
    return inputs, outputs, stats


def _cmd_restore(args):
    pa = load_tensor(args.a)
    pb = load_tensor(args.b)
    mask = _load_mask_file(args.mask)
    if args.batched:
        count = _batch_items(pa, pb, mask)
        restored = [restore_predictions(pa[k], pb[k], mask[k])
                    for k in range(count)]
        ra = np.stack([r[0] for r in restored])
        rb = np.stack([r[1] for r in restored])
    else:
        ra, rb = restore_predictions(pa, pb, mask)
    save_tensor(ra, args.out_a)
    save_tensor(rb, args.out_b)
    return ({"a": args.a, "b": args.b, "mask": args.mask},
            {"out_a": args.out_a, "out_b": args.out_b}, _stats_shape(ra))


# -- toy training ------------------------------------------------------

_DATA_KEYS = {"count": int, "labeled_count": int}


def _parse_config_file(path):
    """Line oriented key=value pairs; '#' starts a comment."""
    text = Path(path).read_text()
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValidationError(f"{path}:{lineno}: empty key")
        pairs[key] = value
    return pairs


def _train_settings(pairs):
    """Split config file pairs into TrainConfig kwargs and data options."""
    fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    coerce = {"int": int, "float": float, "str": str}
    cfg_kwargs, data = {}, {"count": 40, "labeled_count": None}
    for key, value in pairs.items():
        if key not in _DATA_KEYS and key not in fields:
            # keep this outside the try: ValidationError is a ValueError
            raise ValidationError(f"unknown config key: {key}")
        try:
            if key in _DATA_KEYS:
                data[key] = _DATA_KEYS[key](value)
            else:
                cfg_kwargs[key] = coerce[fields[key]](value)
        except ValueError as exc:
            raise ValidationError(f"bad value for {key}: {value}") from exc
    return cfg_kwargs, data


def _save_model_bundle(out_dir, cfg, data, models):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, model in models.items():
        path = out_dir / f"{name}.npy"
        save_tensor(model.flat().astype(np.float32), str(path))
        written[name] = str(path)
    meta = {
        "n_classes": cfg.n_classes,
        "param_shapes": [list(s) for s in models["student"].param_shapes],
        "config": dataclasses.asdict(cfg),
        "data": data,
    }
    meta_path = out_dir / "meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    written["meta"] = str(meta_path)
    return written


def _cmd_train_toy(args):
    pairs = _parse_config_file(args.config)
    cfg_kwargs, data = _train_settings(pairs)
    if args.seed is not None:
        cfg_kwargs["seed"] = args.seed
    cfg = TrainConfig(**cfg_kwargs)
    dataset = generate_synthetic(data["count"], cfg.seed,
                                 labeled_count=data["labeled_count"])

    def emit(record):
        print(json.dumps(record, sort_keys=True))

    pretrained = pretrain(dataset, cfg, callback=emit)
    if dataset.unlabeled_indices and cfg.selftrain_epochs > 0:
        student, teacher = self_train(pretrained, dataset, cfg, callback=emit)
    else:
        student, teacher = pretrained.copy(), pretrained.copy()

    outputs = {}
    if args.out_dir:
        outputs = _save_model_bundle(
            args.out_dir, cfg, data,
            {"pretrained": pretrained, "student": student, "teacher": teacher})
    train_metrics = evaluate(student, dataset)
    stats = {
        "labeled": len(dataset.labeled_indices),
        "unlabeled": len(dataset.unlabeled_indices),
        "pretrain_epochs": cfg.pretrain_epochs,
        "selftrain_epochs": cfg.selftrain_epochs,
        "train_dice": train_metrics["dice"],
        "train_jaccard": train_metrics["jaccard"],
    }
    return {"config": args.config}, outputs, stats


def _load_model_bundle(model_dir, which):
    model_dir = Path(model_dir)
    meta_path = model_dir / "meta.json"
    if not meta_path.is_file():
        raise TensorIOError(f"missing model metadata: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise TensorIOError(f"unreadable model metadata: {exc}") from exc
    params_path = model_dir / f"{which}.npy"
    if not params_path.is_file():
        raise TensorIOError(f"missing model parameters: {params_path}")
    model = ToyModel(n_classes=int(meta["n_classes"]), seed=0)
    model.load_flat(load_tensor(str(params_path)).astype(np.float64))
    return model


def _cmd_eval(args):
    model = _load_model_bundle(args.model, args.which)
    dataset = generate_synthetic(args.count, args.seed,
                                 labeled_count=args.count)
    metrics = evaluate(model, dataset)
    stats = {"dice": metrics["dice"], "jaccard": metrics["jaccard"],
             "count": metrics["count"], "which": args.which}
    return {"model": args.model}, {}, stats


# -- slice export ------------------------------------------------------


def _cmd_slice_export(args):
    tensor = load_tensor(args.tensor)
    if tensor.ndim == 4:
        if not 0 <= args.channel < tensor.shape[-1]:
            raise ValidationError(
                f"channel {args.channel} out of range for shape {tensor.shape}")
        tensor = tensor[..., args.channel]
    if tensor.ndim != 3:
        raise ValidationError(
            f"slice-export needs a 3-D or 4-D tensor, got shape {tensor.shape}")
    if not 0 <= args.axis <= 2:
        raise ValidationError("axis must be 0, 1, or 2")
    depth = tensor.shape[args.axis]
    index = depth // 2 if args.index is None else args.index
    if not 0 <= index < depth:
        raise ValidationError(f"index {index} out of range for depth {depth}")
    plane = np.take(tensor, index, axis=args.axis).astype(np.float64)

    lo, hi = float(plane.min()), float(plane.max())
    if hi > lo:
        gray = np.round((plane - lo) / (hi - lo) * 255.0)
    else:
        gray = np.zeros_like(plane)
    gray = gray.astype(np.uint8)
    height, width = gray.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(args.out).write_bytes(header + gray.tobytes())
    stats = {"min": lo, "max": hi, "width": int(width), "height": int(height),
             "axis": int(args.axis), "index": int(index)}
    return {"tensor": args.tensor}, {"out": args.out}, stats


# -- parser ------------------------------------------------------------


def _add_schedule_flags(sub):
    sub.add_argument("--epoch", type=int, required=True)
    sub.add_argument("--epochs", type=int, required=True)
    sub.add_argument("--epsilon", type=float, default=1.0)


def _add_order_flag(sub):
    sub.add_argument("--order", choices=[ASCENDING, DESCENDING],
                     default=ASCENDING)


def build_parser():
    parser = _Parser(prog="evidfuse",
                     description="Evidential fusion pipeline tools")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("fuse", help="fuse two belief volumes")
    sub.add_argument("--a", required=True)
    sub.add_argument("--b", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--no-renorm", action="store_true")
    sub.add_argument("--conflict-epsilon", type=float, default=1e-12)
    sub.set_defaults(func=_cmd_fuse)

    sub = subs.add_parser("belief", help="evidence logits to belief volume")
    sub.add_argument("--logits", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--probabilities")
    sub.set_defaults(func=_cmd_belief)

    sub = subs.add_parser("uncertainty", help="per-voxel fused uncertainty")
    sub.add_argument("--belief", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--raw-singletons", action="store_true")
    sub.set_defaults(func=_cmd_uncertainty)

    sub = subs.add_parser("weights", help="per-voxel dynamic weights")
    sub.add_argument("--u", required=True)
    sub.add_argument("--out", required=True)
    _add_schedule_flags(sub)
    _add_order_flag(sub)
    sub.add_argument("--batched", action="store_true")
    sub.set_defaults(func=_cmd_weights)

    sub = subs.add_parser("rank", help="uncertainty ranks per voxel")
    sub.add_argument("--u", required=True)
    sub.add_argument("--out", required=True)
    _add_order_flag(sub)
    sub.add_argument("--batched", action="store_true")
    sub.set_defaults(func=_cmd_rank)

    sub = subs.add_parser("weighted-loss", help="rank-weighted loss scalar")
    sub.add_argument("--loss", required=True)
    sub.add_argument("--u", required=True)
    _add_schedule_flags(sub)
    _add_order_flag(sub)
    sub.add_argument("--batched", action="store_true")
    sub.set_defaults(func=_cmd_weighted_loss)

    sub = subs.add_parser("weight-at", help="dynamic weight at given ranks")
    sub.add_argument("--rank", required=True,
                     help="ordinal or comma-separated ordinals")
    sub.add_argument("--count", type=int, required=True)
    _add_schedule_flags(sub)
    sub.set_defaults(func=_cmd_weight_at)

    sub = subs.add_parser("mix", help="exchange a masked box between volumes")
    sub.add_argument("--a", required=True)
    sub.add_argument("--b", required=True)
    sub.add_argument("--mask")
    sub.add_argument("--zero-size", help="w,h,l of the zero box")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out-a", required=True)
    sub.add_argument("--out-b", required=True)
    sub.add_argument("--out-mask")
    sub.add_argument("--batched", action="store_true")
    sub.set_defaults(func=_cmd_mix)

    sub = subs.add_parser("restore",
                          help="route mixed predictions back to sources")
    sub.add_argument("--a", required=True)
    sub.add_argument("--b", required=True)
    sub.add_argument("--mask", required=True)
    sub.add_argument("--out-a", required=True)
    sub.add_argument("--out-b", required=True)
    sub.add_argument("--batched", action="store_true")
    sub.set_defaults(func=_cmd_restore)

    sub = subs.add_parser("train-toy", help="run the toy training pipeline")
    sub.add_argument("--config", required=True)
    sub.add_argument("--seed", type=int, default=None,
                     help="overrides the config file seed")
    sub.add_argument("--out-dir")
    sub.set_defaults(func=_cmd_train_toy)

    sub = subs.add_parser("eval", help="score a saved model on fresh data")
    sub.add_argument("--model", required=True, help="train-toy --out-dir path")
    sub.add_argument("--which", choices=["student", "teacher", "pretrained"],
                     default="student")
    sub.add_argument("--count", type=int, default=10)
    sub.add_argument("--seed", type=int, default=0)
    sub.set_defaults(func=_cmd_eval)

    sub = subs.add_parser("slice-export", help="write one slice as PGM P5")
    sub.add_argument("--tensor", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--axis", type=int, default=2)
    sub.add_argument("--index", type=int, default=None)
    sub.add_argument("--channel", type=int, default=0)
    sub.set_defaults(func=_cmd_slice_export)

    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help and friends
        code = exc.code
        return int(code) if isinstance(code, int) else 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    start = time.perf_counter()
    try:
        inputs, outputs, stats = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TensorIOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    summary = {
        "command": args.command,
        "inputs": inputs,
        "outputs": outputs,
        "stats": stats,
        "elapsed_ms": round((time.perf_counter() - start) * 1000.0, 3),
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
