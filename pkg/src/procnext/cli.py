"""Command-line interface.

Subcommands: ``prepare`` (log + PNML -> dataset dir), ``train`` (dataset ->
checkpoint + report), ``evaluate`` (checkpoint + dataset -> report JSON),
``cv`` (end-to-end 5-fold cross-validation) and ``predict`` (checkpoint +
partial case -> ranked activities). All randomness sits behind ``--seed``;
any error exits nonzero with a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import eventlog, harness, petrinet, training
from .errors import ProcnextError
from .model import ModelConfig, NextActivityModel
from .training import TrainConfig


def _read_log(args) -> eventlog.EventLog:
    data = Path(args.log).read_bytes()
    fmt = args.format or ("csv" if args.log.endswith(".csv") else "xes")
    if fmt == "csv":
        if not args.csv_map:
            raise ProcnextError("--csv-map is required for CSV logs")
        column_map = json.loads(Path(args.csv_map).read_text())
        return eventlog.parse_csv(data, column_map)
    return eventlog.parse_xes(data, attr_keys=args.attr or ())


def _load_configs(path: str | None, seed: int | None) -> tuple[TrainConfig, ModelConfig]:
    obj = json.loads(Path(path).read_text()) if path else {}
    train_cfg = TrainConfig.from_dict(obj.get("train", {}))
    model_cfg = ModelConfig.from_dict(obj.get("model", {}))
    if seed is not None:
        train_cfg = TrainConfig(**{**train_cfg.__dict__, "seed": seed})
    return train_cfg, model_cfg


def cmd_prepare(args) -> int:
    log = _read_log(args)
    pnml = Path(args.pnml).read_bytes()
    net = petrinet.parse_pnml(pnml)
    n = len(log.traces)
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(n)
    n_test = int(round(n * args.test_fraction))
    test_idx = sorted(int(i) for i in order[:n_test])
    train_idx = sorted(int(i) for i in order[n_test:])
    prepared = ds.build_dataset(
        log, net, pnml,
        train_trace_indices=train_idx,
        test_trace_indices=test_idx,
        n_buckets=args.buckets,
        include_end=not args.no_end_label,
        on_missing=args.on_missing,
        seed=args.seed,
    )
    ds.save_dataset(prepared, args.out)
    counts = {name: len(split) for name, split in prepared.splits.items()}
    print(json.dumps({"out": args.out, "traces": n, "prefixes": counts,
                      "max_len": prepared.max_len, "sig": prepared.sig}, indent=1))
    return 0


def cmd_train(args) -> int:
    prepared = ds.load_dataset(args.dataset)
    train_cfg, model_cfg = _load_configs(args.config, args.seed)
    model = NextActivityModel.initialize(
        model_cfg, prepared.model_dims(), prepared.adjacency_norm,
        seed=train_cfg.seed, sig=prepared.sig)
    report = training.train(model, prepared, train_cfg, args.out)
    print(report.to_json())
    return 0


def cmd_evaluate(args) -> int:
    prepared = ds.load_dataset(args.dataset)
    model = NextActivityModel.load(Path(args.checkpoint), expect_vocab_sha=prepared.vocab_sha())
    result = harness.evaluate(model, prepared, split_name=args.split)
    text = json.dumps(result, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_cv(args) -> int:
    log = _read_log(args)
    pnml = Path(args.pnml).read_bytes()
    net = petrinet.parse_pnml(pnml)
    train_cfg, model_cfg = _load_configs(args.config, args.seed)
    report = harness.run_cv(
        log, net, pnml, train_cfg, model_cfg, args.out,
        n_buckets=args.buckets, include_end=not args.no_end_label,
        on_missing=args.on_missing)
    print(json.dumps({"mean_accuracy": report["mean_accuracy"],
                      "folds": [f["accuracy"] for f in report["folds"]],
                      "report": str(Path(args.out) / "eval_report.json")}, indent=1))
    return 0


def cmd_predict(args) -> int:
    prepared = ds.load_dataset(args.dataset)
    model = NextActivityModel.load(Path(args.checkpoint), expect_vocab_sha=prepared.vocab_sha())
    if args.case.endswith(".csv"):
        if not args.csv_map:
            raise ProcnextError("--csv-map is required for CSV cases")
        column_map = json.loads(Path(args.csv_map).read_text())
        log = eventlog.parse_csv(Path(args.case).read_bytes(), column_map)
        if len(log.traces) != 1:
            raise ProcnextError(f"case file must contain exactly one case, found {len(log.traces)}")
        tr = log.traces[0]
        events = [{
            "activity": log.activity_vocab.label(ev.activity),
            "timestamp": ev.timestamp,
            "attrs": {name: log.attr_vocabs[j].label(a)
                      for j, (name, a) in enumerate(zip(log.attr_names, ev.attrs))
                      if a != eventlog.UNK},
        } for ev in tr.events]
    else:
        obj = json.loads(Path(args.case).read_text())
        events = obj["events"] if isinstance(obj, dict) else obj
    result = harness.predict(model, prepared, events, top_k=args.top_k)
    print(json.dumps(result, indent=1, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procnext",
        description="Predict the next activity of running cases by replaying "
                    "event-log prefixes over a Petri net and classifying with "
                    "a graph-convolutional recurrent network.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_log_args(p):
        p.add_argument("--log", required=True, help="event log (.xes or .csv)")
        p.add_argument("--format", choices=("xes", "csv"), help="log format (default: by extension)")
        p.add_argument("--csv-map", help="JSON column map for CSV logs "
                       "(case_col, activity_col, timestamp_col, timestamp_fmt, attr_cols, lifecycle_col)")
        p.add_argument("--attr", action="append",
                       help="XES event attribute to use as a categorical feature (repeatable)")
        p.add_argument("--pnml", required=True, help="process model (PNML)")
        p.add_argument("--buckets", type=int, default=10, help="time quantization buckets")
        p.add_argument("--no-end-label", action="store_true",
                       help="do not emit end-of-case prediction targets")
        p.add_argument("--on-missing", choices=("skip", "error"), default="skip",
                       help="events whose activity has no transition (default: skip)")

    p = sub.add_parser("prepare", help="encode a log + model into a dataset directory")
    add_log_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train on a prepared dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory (checkpoint + report)")
    p.add_argument("--config", help="JSON file with 'train' and 'model' sections")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="accuracy of a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", help="write the report JSON here as well")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cv", help="end-to-end 5-fold cross-validation")
    add_log_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with 'train' and 'model' sections")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", help="rank next activities for a partial case")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--case", required=True, help="partial case (.json or .csv)")
    p.add_argument("--csv-map", help="JSON column map when the case is CSV")
    p.add_argument("--top-k", type=int, default=5)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ProcnextError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
