"""Experiment CLI: train, eval, toyset, report."""

import argparse
import sys
from dataclasses import fields

from . import harness


def _add_config_flags(parser):
    for f in fields(harness.ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(flag, dest=f.name, default=None, metavar="V")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="mewehv",
                                     description="train and evaluate speech classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train per a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default="run", help="output directory")
    _add_config_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--embeddings-dir", dest="embeddings_dir", default=None)

    p_toy = sub.add_parser("toyset", help="synthesize the fusion toy dataset")
    p_toy.add_argument("--seed", type=int, required=True)
    p_toy.add_argument("--out", required=True)
    p_toy.add_argument("--n-per-class", type=int, default=256)
    p_toy.add_argument("--classes", type=int, default=2)

    p_rep = sub.add_parser("report", help="summarize run reports in a directory")
    p_rep.add_argument("--in", dest="in_dir", required=True)
    p_rep.add_argument("--json", action="store_true", help="print JSON instead of text")

    args = parser.parse_args(argv)

    if args.command == "train":
        overrides = {f.name: getattr(args, f.name)
                     for f in fields(harness.ExperimentConfig)}
        config = harness.load_config(args.config, overrides)
        report = harness.train(config, out_dir=args.out)
        for split, metrics in report.splits.items():
            print("%s accuracy: %.4f" % (split, metrics["accuracy"]))
        print("report written to %s/report.json" % args.out)
        return 0

    if args.command == "eval":
        overrides = {}
        if args.embeddings_dir is not None:
            overrides["embeddings_dir"] = args.embeddings_dir
        report = harness.evaluate(args.ckpt, args.manifest, overrides)
        sys.stdout.write(report.to_json())
        return 0

    if args.command == "toyset":
        train_m, val_m = harness.make_toy_fusion_dataset(
            args.seed, args.n_per_class, args.classes, args.out)
        print("wrote %s and %s" % (train_m, val_m))
        return 0

    reports = harness.collect_reports(args.in_dir)
    table = harness.summarize_runs(reports)
    if args.json:
        sys.stdout.write(harness.summary_to_json(table))
    else:
        sys.stdout.write(harness.render_summary(table))
    return 0


if __name__ == "__main__":
    sys.exit(main())
