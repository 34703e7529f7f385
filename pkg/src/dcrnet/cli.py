"""Command-line entry point: ``dcrnet <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from dcrnet import numerics as nx
from dcrnet._io import atomic_write, atomic_write_many
from dcrnet.config import ModelConfig, RelationKind, load_config, parse_overrides
from dcrnet.corpus import convert_dailydialog, convert_mastodon, encode_dialog, load_canonical, load_dialogs
from dcrnet.decoder import dump_predictions, prediction_record
from dcrnet.metrics import reports_json
from dcrnet.relation import attention_csv
from dcrnet.trainer import evaluate, gradcheck, load_checkpoint, tiny_config, train


def _cmd_convert_mastodon(args):
    counts = convert_mastodon(args.src, args.dst, args.dev_fraction)
    print(json.dumps(counts, sort_keys=True))


def _cmd_convert_dailydialog(args):
    counts = convert_dailydialog(args.src, args.dst)
    print(json.dumps(counts, sort_keys=True))


def _config(args) -> ModelConfig:
    overrides = parse_overrides(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def _cmd_train(args):
    cfg = _config(args)
    corpus = load_canonical(args.data)
    result = train(cfg, corpus)
    out = Path(args.out_dir)
    atomic_write_many({
        out / "train_log.jsonl": result.log_jsonl(),
        out / "best.ckpt": result.best.to_bytes(),
        out / "config.txt": cfg.dumps(),
    })
    best = result.best
    print(f"best epoch {best.epoch}: dev da F1 {best.dev_scores['da_f1']:.2f}, sc F1 {best.dev_scores['sc_f1']:.2f}")


def _cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    corpus = load_canonical(args.data, split=args.split)
    reports = evaluate(ckpt, corpus.split(args.split), args.protocol)
    text = reports_json(reports)
    table = "\n".join(r.table() for r in reports.values()) + "\n"
    if args.out_dir:
        out = Path(args.out_dir)
        atomic_write_many({out / f"report_{args.split}.json": text, out / f"report_{args.split}.txt": table})
    sys.stdout.write(text if args.format == "json" else table)


def _cmd_predict(args):
    ckpt = load_checkpoint(args.checkpoint)
    model = ckpt.model()
    dialogs = load_dialogs(args.input, require_labels=False)
    records = []
    for d in dialogs:
        da, sent = model.predict(encode_dialog(d, model.vocab, model.da_map, model.sent_map))
        records.append(prediction_record(d, da, sent, model.da_map, model.sent_map))
    atomic_write(Path(args.out_dir) / "predictions.jsonl", dump_predictions(records))
    print(f"wrote predictions for {len(records)} dialogs")


def _cmd_gradcheck(args):
    overrides = parse_overrides(args.set or [])
    kinds = [k.value for k in RelationKind] if args.relation == "all" else [args.relation]
    ok = True
    for kind in kinds:
        cfg = tiny_config(kind, **overrides)
        report = gradcheck(cfg, np.random.default_rng([args.seed, len(kind)]))
        print(f"{kind:<12} {report.summary()}")
        ok &= report.passed
    if not ok:
        raise SystemExit(1)


def _cmd_export_attention(args):
    ckpt = load_checkpoint(args.checkpoint)
    model = ckpt.model()
    path = Path(args.data)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    dialog = None
    for f in files:
        for d in load_dialogs(f, require_labels=False):
            if d.id == args.dialog_id:
                dialog = d
                break
        if dialog:
            break
    if dialog is None:
        raise ValueError(f"dialog {args.dialog_id!r} not found in {args.data}")
    with nx.no_grad():
        out = model.forward(encode_dialog(dialog, model.vocab, model.da_map, model.sent_map))
    outdir = Path(args.out_dir)
    written = {}
    if out.encoding.attention is not None:
        written[outdir / "self_attention.csv"] = attention_csv(out.encoding.attention)
    for layer, trace in enumerate(out.traces, start=1):
        for direction, matrix in trace.items():
            written[outdir / f"layer{layer}_{direction}.csv"] = attention_csv(matrix)
    if not any(out.traces):
        raise ValueError(f"checkpoint relation kind {model.cfg.relation.value!r} records no co-attention")
    atomic_write_many(written)
    for p in sorted(written):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dcrnet", description="Joint dialog act and sentiment classification.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert-mastodon", help="Mastodon annotation files -> canonical JSON-lines")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--dev-fraction", type=float, default=0.1)
    p.set_defaults(fn=_cmd_convert_mastodon)

    p = sub.add_parser("convert-dailydialog", help="DailyDialog release -> canonical JSON-lines")
    p.add_argument("src")
    p.add_argument("dst")
    p.set_defaults(fn=_cmd_convert_dailydialog)

    p = sub.add_parser("train", help="train and keep the best dev epoch")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--data", required=True, help="directory with train/dev[/test].jsonl")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--protocol", choices=("dailydialog", "mastodon"))
    p.add_argument("--format", choices=("table", "json"), default="json")
    p.add_argument("--out-dir")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("predict", help="label dialogs (gold labels optional)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of a tiny random model")
    p.add_argument("--relation", default="all", choices=["all"] + [k.value for k in RelationKind])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("export-attention", help="write co-attention matrices of one dialog as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="canonical file or directory")
    p.add_argument("--dialog-id", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=_cmd_export_attention)
    return ap


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # usage errors and --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.fn(args)
    except SystemExit as e:
        return int(e.code or 0)
    except (OSError, ValueError, RuntimeError, KeyError) as e:
        print(f"dcrnet {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
