"""Relation-kind ablation over several seeds.

    python scripts/run_ablation.py --data data/mastodon --out results/ablation
    python scripts/run_ablation.py --synthetic --out results/ablation_synthetic
"""
import argparse
import json
import logging
from pathlib import Path

from dcrnet.config import parse_overrides
from dcrnet.corpus import load_canonical
from dcrnet.experiments import ENCODER_VARIANTS, RELATION_VARIANTS, desk_config, relation_trend, run_ablation, synthetic_corpus


def main():
    ap = argparse.ArgumentParser()
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="canonical corpus directory (train/dev/test.jsonl)")
    src.add_argument("--synthetic", action="store_true", help="use the generated stand-in corpus")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--encoder-ablations", action="store_true", help="also run no-self-attention and CNN variants")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    corpus = synthetic_corpus() if args.synthetic else load_canonical(args.data)
    base = desk_config(**parse_overrides(args.set))
    variants = dict(RELATION_VARIANTS)
    if args.encoder_ablations:
        variants.update(ENCODER_VARIANTS)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "runs.jsonl", "w") as fh:
        def record(res):
            fh.write(json.dumps(res.to_json(), sort_keys=True) + "\n")
            fh.flush()

        summary = run_ablation(corpus, base, variants, args.seeds, on_result=record)
    trend = relation_trend(summary)
    (out / "summary.txt").write_text(summary.table() + "\n\n" + json.dumps(trend, indent=2) + "\n")
    (out / "config.txt").write_text(base.dumps())
    print(summary.table())
    print(json.dumps(trend, indent=2))


if __name__ == "__main__":
    main()
