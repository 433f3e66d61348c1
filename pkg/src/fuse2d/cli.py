"""Command-line entry point: synth, images, train, eval, gradcheck, protocol.

Every flag may also come from a JSON ``--config`` file whose keys are the
flag names with dashes replaced by underscores, either at top level or
under a section named after the command. Explicit flags win.

Exit codes: 0 success, 2 usage, 3 data validation, 4 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .cnn.model import NonFiniteError, predict
from .cnn.serialize import ModelFormatError, load_model, save_model
from .cnn.train import Dataset, TrainConfig, fit_two_stage, scale_images, write_history
from .colorize import SCHEMES
from .dataset import load_image_dataset, read_manifest, subjects_of, write_image_dataset
from .fusion import BandLayout, WindowConfig, select_arrangements
from .gradcheck import check_gradients
from .ingest import (
    DataValidationError,
    SynthConfig,
    generate_synthetic,
    list_recording_dirs,
    load_recording,
    write_recording,
)
from .metrics import NOSTRESS, STRESS, evaluate, write_report, write_roc_csv

EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 2, 3, 4
SEED_ENV = "FUSE2D_SEED"
POSITIVE = {"nostress": NOSTRESS, "stress": STRESS}

log = logging.getLogger("fuse2d")


def _csv_list(text):
    return [t.strip() for t in str(text).split(",") if t.strip()] if text else []


def _model_meta_path(model_path) -> Path:
    return Path(str(model_path) + ".meta.json")


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _resolve_seed(args, parser):
    if args.seed is None and os.environ.get(SEED_ENV):
        try:
            args.seed = int(os.environ[SEED_ENV])
        except ValueError:
            parser.error(f"{SEED_ENV} must be an integer")
    if args.seed is None:
        parser.error(f"--seed is required (or set {SEED_ENV})")
    return int(args.seed)


# ---------------------------------------------------------------------------

def cmd_synth(args, parser):
    seed = _resolve_seed(args, parser)
    if args.subjects is None or args.subjects < 1:
        parser.error("--subjects must be a positive integer")
    if args.seconds is None or args.seconds < 1:
        parser.error("--seconds must be a positive integer")
    if args.out is None:
        parser.error("--out is required")
    cfg = SynthConfig(n_subjects=args.subjects, seconds_per_condition=args.seconds,
                      separation=args.separation)
    out = Path(args.out)
    for rec in generate_synthetic(cfg, seed):
        write_recording(rec, out / rec.subject_id)
    print(f"wrote {cfg.n_subjects} recordings to {out}")


def cmd_images(args, parser):
    if not args.data or not args.out:
        parser.error("--data and --out are required")
    try:
        arrangements = select_arrangements(args.arrangement)
        wcfg = WindowConfig(args.window, args.stride)
        layout = BandLayout(fill=args.fill)
    except ValueError as exc:
        parser.error(str(exc))
    wanted = set(_csv_list(args.subjects)) or None
    recs = []
    for root in _csv_list(args.data):
        for d in list_recording_dirs(root):
            rec = load_recording(d)
            if wanted is None or rec.subject_id in wanted:
                recs.append(rec)
    if not recs:
        raise DataValidationError("no recordings selected")
    rows = write_image_dataset(recs, args.out, arrangements, args.scheme, layout, wcfg,
                               detrend=not args.no_detrend, workers=args.workers,
                               dump_matrices=args.dump_matrices)
    print(f"wrote {len(rows)} images to {args.out}")


def _load(dirs, side, exclude=(), include=None, weight=1.0):
    images, labels, rows = load_image_dataset(dirs, side, exclude_subjects=exclude, include_subjects=include)
    return Dataset(images, labels, np.full(len(labels), float(weight))), rows


def cmd_train(args, parser):
    seed = _resolve_seed(args, parser)
    if not args.stage1 or not args.out:
        parser.error("--stage1 and --out are required")
    cfg = TrainConfig(
        learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=seed,
        profile=args.profile, pool_after_first=not args.no_first_pool,
        stage2_epochs=args.stage2_epochs, stage2_include_stage1=not args.stage2_exclude_stage1,
    )
    side = {"tiny": 32, "full": 128}[args.profile]
    test_ids = set(_csv_list(args.test_subjects))

    stage1_dirs = _csv_list(args.stage1)
    # subject list is read from manifests first so validation subjects can be held out
    all_subjects = sorted({r.subject for d in stage1_dirs for r in read_manifest(d)} - test_ids)
    if args.val_subjects == "auto":
        val_ids = set(all_subjects[-1:]) if len(all_subjects) > 1 else set()
    elif args.val_subjects in (None, "", "none"):
        val_ids = set()
    else:
        val_ids = set(_csv_list(args.val_subjects))
    exclude = test_ids | val_ids

    stage1, rows1 = _load(stage1_dirs, side, exclude)
    if len(np.unique(stage1.labels)) < 2:
        raise DataValidationError("stage-1 training set contains a single class")
    stage2 = None
    stage2_dirs = _csv_list(args.stage2)
    if stage2_dirs:
        weights = [float(w) for w in _csv_list(args.stage2_weights)] or [1.0] * len(stage2_dirs)
        if len(weights) != len(stage2_dirs):
            parser.error("--stage2-weights needs one weight per --stage2 directory")
        stage2 = [_load([d], side, exclude, weight=w)[0] for d, w in zip(stage2_dirs, weights)]
    validation = _load(stage1_dirs, side, include=val_ids)[0] if val_ids else None

    model, history = fit_two_stage(stage1, stage2, cfg, validation=validation)
    save_model(model, args.out)
    write_history(history, args.history or str(args.out) + ".history.csv")
    meta = {
        "train_subjects": subjects_of(rows1),
        "val_subjects": sorted(val_ids),
        "stage1": stage1_dirs,
        "stage2": stage2_dirs,
        "arrangements": sorted({r.arrangement for r in rows1}),
        "seed": seed,
        "profile": args.profile,
    }
    _model_meta_path(args.out).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    last = history[-1]
    print(f"trained {len(history)} epochs; final loss {last.loss:.4f}, train acc {last.train_acc:.4f}")


def cmd_eval(args, parser):
    if not args.model or not args.data or not args.out:
        parser.error("--model, --data and --out are required")
    model = load_model(args.model)
    meta_path = _model_meta_path(args.model)
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.is_file() else None
    dirs = _csv_list(args.data)
    images, labels, rows = load_image_dataset(dirs, model.input_shape[0])
    eval_subjects = subjects_of(rows)
    if not args.allow_leak:
        if meta is None:
            raise DataValidationError(
                f"cannot verify subject independence: {meta_path} missing (use --allow-leak to override)")
        overlap = sorted(set(eval_subjects) & set(meta["train_subjects"]))
        if overlap:
            raise DataValidationError(
                f"evaluation subjects overlap training subjects: {', '.join(overlap)} "
                "(use --allow-leak to override)")
    positive = POSITIVE[args.positive]
    pred, probs = predict(model, scale_images(images, model.dtype))
    report = evaluate(pred, labels, probs[:, positive], positive, meta={
        "model_id": _sha(args.model),
        "dataset_id": ",".join(Path(d).name for d in dirs),
        "arrangement_set": ",".join(sorted({r.arrangement for r in rows})),
        "seed": None if meta is None else meta.get("seed"),
        "subjects": ",".join(eval_subjects),
        "n_examples": int(len(labels)),
        "leak_override": bool(args.allow_leak),
    })
    write_report(report, args.out)
    if args.roc:
        write_roc_csv(probs[:, positive], labels, args.roc, positive)
    print(f"accuracy {report.accuracy:.4f} precision {report.precision:.4f} "
          f"recall {report.recall:.4f} f1 {report.f1:.4f} auc {report.auc:.4f}")


def cmd_gradcheck(args, parser):
    seed = 0 if args.seed is None else int(args.seed)
    res = check_gradients(h=args.h, seed=seed)
    for name, err in res.per_param.items():
        print(f"{name:12s} max rel err {err:.3e}")
    print(f"max relative error {res.max_rel_error:.3e} over {res.n_checked} parameters")
    if res.max_rel_error >= args.tol:
        print(f"FAILED: exceeds tolerance {args.tol:g}", file=sys.stderr)
        return 1
    return 0


def cmd_protocol(args, parser):
    from .protocol import COMBINED, SINGLE, run_protocol

    seed = _resolve_seed(args, parser)
    if not args.data or not args.test_subjects:
        parser.error("--data and --test-subjects are required")
    recs = [load_recording(d) for root in _csv_list(args.data) for d in list_recording_dirs(root)]
    cfg = TrainConfig(seed=seed, profile=args.profile, epochs=args.epochs)
    weights = tuple(float(w) for w in _csv_list(args.stage2_weights)) or (1.0, 1.0)
    results = run_protocol(recs, set(_csv_list(args.test_subjects)), SINGLE + (COMBINED,), cfg,
                           scheme=args.scheme, stage2_weights=weights)
    table = {name: {"train_acc": r.train_acc, **r.report.to_dict()} for name, r in results.items()}
    if args.out:
        Path(args.out).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{'strategy':10s} {'train':>7s} {'test':>7s} {'prec':>6s} {'rec':>6s} {'f1':>6s}")
    for name, r in results.items():
        rep = r.report
        print(f"{name:10s} {r.train_acc:7.4f} {rep.accuracy:7.4f} {rep.precision:6.3f} "
              f"{rep.recall:6.3f} {rep.f1:6.3f}")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fuse2d", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with default flag values")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic cohort in the recording directory format")
    s.add_argument("--subjects", type=int)
    s.add_argument("--seconds", type=int, help="seconds per condition (no-stress, then stress)")
    s.add_argument("--separation", type=float, default=1.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("images", help="render PNG datasets with a manifest")
    s.add_argument("--data", help="recording directory or parent directory (comma list allowed)")
    s.add_argument("--out")
    s.add_argument("--arrangement", default="all", help='"all" or e.g. "PEA,EPA,EAP"')
    s.add_argument("--scheme", choices=SCHEMES, default="custom")
    s.add_argument("--fill", choices=("zeros", "repeat"), default="zeros")
    s.add_argument("--window", type=int, default=5)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--subjects", help="only these subject ids")
    s.add_argument("--no-detrend", action="store_true")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--dump-matrices", action="store_true")
    s.set_defaults(func=cmd_images)

    s = sub.add_parser("train", help="train a model, optionally with a frozen-feature second stage")
    s.add_argument("--stage1", help="manifest directory (comma list allowed)")
    s.add_argument("--stage2", help="comma list of manifest directories")
    s.add_argument("--stage2-weights", help="per-directory sample weights for stage 2")
    s.add_argument("--stage2-epochs", type=int)
    s.add_argument("--stage2-exclude-stage1", action="store_true",
                   help="do not re-include stage-1 data in stage 2")
    s.add_argument("--profile", choices=("tiny", "full"), default="full")
    s.add_argument("--no-first-pool", action="store_true", help="no max pool after the first conv")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int, default=16)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--lr", type=float, default=0.001)
    s.add_argument("--test-subjects", help="subjects excluded from training")
    s.add_argument("--val-subjects", default="auto", help='"auto", "none" or a comma list')
    s.add_argument("--out")
    s.add_argument("--history", help="history CSV path (default <out>.history.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a model on a held-out manifest")
    s.add_argument("--model")
    s.add_argument("--data", help="manifest directory (comma list allowed)")
    s.add_argument("--out", help="report.json path")
    s.add_argument("--roc", help="optional roc.csv path")
    s.add_argument("--positive", choices=sorted(POSITIVE), default="nostress")
    s.add_argument("--allow-leak", action="store_true",
                   help="skip the subject-overlap guard")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    s.add_argument("--seed", type=int)
    s.add_argument("--h", type=float, default=1e-4)
    s.add_argument("--tol", type=float, default=1e-3)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("protocol", help="compare PEA/EAP/EPA and two-stage training on recordings")
    s.add_argument("--data")
    s.add_argument("--test-subjects")
    s.add_argument("--profile", choices=("tiny", "full"), default="tiny")
    s.add_argument("--scheme", choices=SCHEMES, default="custom")
    s.add_argument("--epochs", type=int, default=16)
    s.add_argument("--stage2-weights", help="weights of the PEA and EPA stage-2 sets")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="optional JSON results path")
    s.set_defaults(func=cmd_protocol)
    return p


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(doc, dict):
        parser.error("config must be a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in sub._actions}
    values = {k: v for k, v in doc.items() if k in dests}
    section = doc.get(args.command, {})
    values.update({k: v for k, v in section.items() if k in dests})
    unknown = set(section) - dests
    if unknown:
        parser.error(f"unknown config key(s) for {args.command}: {', '.join(sorted(unknown))}")
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, parser) or 0
    except NonFiniteError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataValidationError, ModelFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
