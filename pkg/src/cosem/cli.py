"""Command-line pipeline: synth -> prepare -> train -> eval.

Conventions:

* stdout carries machine-parsable ``key=value`` result lines (plus the
  fixed-width comparison table for ``eval``); all diagnostics go to stderr.
* Exit codes: 1 usage, 2 input parse failure, 3 empty corpus/split,
  4 io or corrupt/unsupported file, 5 training divergence, 6 every
  evaluation instance skipped.
* Option precedence: command-line flags > ``--config`` JSON file > built-in
  defaults. The effective configuration is echoed into every output artifact.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import evaluation, synth, training
from .errors import (
    AllInstancesSkippedError,
    CheckpointError,
    DivergenceError,
    EmptyCorpusError,
    EmptyTrainSetError,
    ParseError,
    UsageError,
)
from .model import ModelConfig, forward, predict_topk
from .numerics import make_rng

logger = logging.getLogger(__name__)

DEFAULTS = {
    "window_seconds": 3600,
    "history_len": 8,
    "min_app_count": 10,
    "min_user_records": 5,
    "stopwords": "default",
    "embed_dim": 64,
    "hidden_layers": 2,
    "hidden_width": 64,
    "variant": "cosem",
    "learning_rate": 1e-3,
    "batch_size": 32,
    "max_epochs": 100,
    "patience": 10,
    "seed": 0,
    "k": 5,
}

EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_EMPTY = 3
EXIT_IO = 4
EXIT_DIVERGED = 5
EXIT_ALL_SKIPPED = 6


class _Parser(argparse.ArgumentParser):
    """argparse normally exits 2 on bad flags; 2 is reserved for input parse
    failures here, so flag problems surface as UsageError (exit 1) instead."""

    def error(self, message):
        raise UsageError(message)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config file {p}: expected a JSON object")
    unknown = sorted(set(doc) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"config file {p}: unknown keys {unknown}")
    return doc


def _effective(args: argparse.Namespace, keys: list[str]) -> dict:
    """Merge defaults < config file < explicit flags for the given keys."""
    merged = {k: DEFAULTS[k] for k in keys}
    merged.update({k: v for k, v in _load_config_file(args.config).items() if k in keys})
    for key in keys:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    return merged


def _resolve_stopwords(setting: str) -> frozenset[str]:
    if setting == "default":
        return corpus_mod.default_stopwords()
    if setting == "none":
        return frozenset()
    return corpus_mod.load_stopwords(setting)


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        events = synth.synthesize(
            seed=args.seed,
            users=args.users,
            apps=args.apps,
            chunks=args.chunks,
            events_per_user=args.events_per_user,
            coupling=args.coupling,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    with out.open("w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(
                {"user": e.user_id, "ts": e.timestamp, "app": e.app, "sem": list(e.semantic_chunks)}
            ) + "\n")
    print(f"events={len(events)} users={args.users} out={out}")
    return 0


def cmd_prepare(args: argparse.Namespace) -> int:
    cfg = _effective(args, [
        "window_seconds", "history_len", "min_app_count", "min_user_records", "stopwords",
    ])
    stopwords = _resolve_stopwords(cfg["stopwords"])

    events = corpus_mod.ingest(args.input, format=args.format)
    logger.info("ingested %d events from %s", len(events), args.input)
    events = corpus_mod.apply_filters(
        events,
        min_app_count=cfg["min_app_count"],
        min_user_records=cfg["min_user_records"],
        stopwords=stopwords,
    )
    logger.info("%d events after filters", len(events))
    app_vocab, semantic_vocab = corpus_mod.build_vocabularies(events)
    instances = corpus_mod.windowize(
        events, app_vocab, semantic_vocab,
        window_seconds=cfg["window_seconds"], history_len=cfg["history_len"],
    )
    split = corpus_mod.chronological_split(instances, app_vocab, semantic_vocab)

    meta = {"config": cfg, "input": str(args.input), "format": args.format}
    corpus_mod.save_bundle(split, args.out, meta=meta)

    print(f"split=train instances={len(split.train)}")
    print(f"split=validation instances={len(split.validation)}")
    print(f"split=test instances={len(split.test)}")
    print(f"vocab=app size={app_vocab.size}")
    print(f"vocab=semantic size={semantic_vocab.size}")
    print(f"bundle={args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _effective(args, [
        "embed_dim", "hidden_layers", "hidden_width", "variant",
        "learning_rate", "batch_size", "max_epochs", "patience", "seed", "k",
    ])
    split, _meta = corpus_mod.load_bundle(args.corpus)
    try:
        model_config = ModelConfig(
            app_count=split.app_vocab.size,
            chunk_count=split.semantic_vocab.size,
            embed_dim=cfg["embed_dim"],
            hidden_layers=cfg["hidden_layers"],
            hidden_width=cfg["hidden_width"],
            variant=cfg["variant"].replace("-", "_"),
            seed=cfg["seed"],
        )
        train_config = training.TrainConfig(
            learning_rate=cfg["learning_rate"],
            batch_size=cfg["batch_size"],
            max_epochs=cfg["max_epochs"],
            patience=cfg["patience"],
            seed=cfg["seed"],
            k=cfg["k"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    def on_epoch(epoch: int, loss: float, val_mrr: float | None) -> None:
        if val_mrr is None:
            print(f"epoch={epoch} loss={loss:.6f}")
        else:
            print(f"epoch={epoch} loss={loss:.6f} val_mrr={val_mrr:.6f}")

    checkpoint = training.train(split, model_config, train_config, on_epoch=on_epoch)
    training.save_checkpoint(checkpoint, args.out)
    print(f"best_epoch={checkpoint.best_epoch} checkpoint={args.out}")
    return 0


def _checkpoint_ranker(checkpoint: training.Checkpoint, k: int):
    k = min(k, checkpoint.model_config.app_count)

    def ranker(inst: corpus_mod.WindowInstance) -> list[int]:
        probs = forward(checkpoint.params, checkpoint.model_config,
                        inst.semantic_ids, inst.history_ids)
        return predict_topk(probs, k)

    return ranker


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _effective(args, ["k", "seed"])
    k = cfg["k"]
    checkpoints = args.checkpoint or []
    baselines = args.baseline or []
    if not checkpoints and not baselines:
        raise UsageError("nothing to evaluate: pass --checkpoint and/or --baseline")

    split, _meta = corpus_mod.load_bundle(args.corpus)
    instances = getattr(split, args.split)
    if not instances:
        raise EmptyCorpusError(f"bundle has no instances in the {args.split} split")

    rows: list[tuple[str, evaluation.EvalReport]] = []
    for ckpt_path in checkpoints:
        checkpoint = training.load_checkpoint(ckpt_path)
        if (checkpoint.app_vocab == split.app_vocab
                and checkpoint.semantic_vocab == split.semantic_vocab):
            eval_instances, skipped = list(instances), 0
        else:
            eval_instances, skipped = corpus_mod.align_instances(
                instances,
                source_app_vocab=split.app_vocab,
                source_semantic_vocab=split.semantic_vocab,
                target_app_vocab=checkpoint.app_vocab,
                target_semantic_vocab=checkpoint.semantic_vocab,
            )
        report = evaluation.evaluate(
            _checkpoint_ranker(checkpoint, k), eval_instances, k=k, skipped_oov=skipped,
        )
        rows.append((Path(ckpt_path).stem, report))

    for baseline in baselines:
        if baseline == "mru":
            report = evaluation.evaluate(
                lambda inst: evaluation.mru_baseline(inst, k), instances, k=k,
            )
        else:
            rng = make_rng(cfg["seed"])
            app_count = split.app_vocab.size
            predictions = [
                [int(i) for i in rng.permutation(app_count)[:k]] for _ in instances
            ]
            prediction_iter = iter(predictions)
            report = evaluation.evaluate(
                lambda inst: next(prediction_iter), instances, k=k,
            )
        rows.append((baseline, report))

    for label, report in rows:
        print(
            f"model={label} split={args.split} k={k} "
            f"mrr={report.mrr_at_k:.6f} hr={report.hr_at_k:.6f} "
            f"instances={report.instance_count} skipped_oov={report.skipped_oov}"
        )
    print()
    print(evaluation.format_table(rows))

    if args.report:
        doc = {
            "format": "cosem-report",
            "version": 1,
            "split": args.split,
            "k": k,
            "config": cfg,
            "corpus": str(args.corpus),
            "models": [
                {"label": label, **evaluation.report_to_dict(report)}
                for label, report in rows
            ],
        }
        Path(args.report).write_text(
            json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cosem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic event log")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--users", type=int, default=20)
    p_synth.add_argument("--apps", type=int, default=12)
    p_synth.add_argument("--chunks", type=int, default=12)
    p_synth.add_argument("--events-per-user", type=int, default=200)
    p_synth.add_argument("--coupling", choices=synth.COUPLINGS, default="joint")
    p_synth.set_defaults(func=cmd_synth)

    p_prep = sub.add_parser("prepare", help="ingest, filter, window, and split a log")
    p_prep.add_argument("--input", required=True)
    p_prep.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p_prep.add_argument("--out", required=True)
    p_prep.add_argument("--config")
    p_prep.add_argument("--window-seconds", type=int)
    p_prep.add_argument("--history-len", type=int)
    p_prep.add_argument("--min-app-count", type=int)
    p_prep.add_argument("--min-user-records", type=int)
    p_prep.add_argument("--stopwords", help="'default', 'none', or a stopword file path")
    p_prep.set_defaults(func=cmd_prepare)

    p_train = sub.add_parser("train", help="fit a model on a prepared bundle")
    p_train.add_argument("--corpus", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--config")
    p_train.add_argument("--variant", choices=("cosem", "dnn-a", "dnn-s"))
    p_train.add_argument("--embed-dim", type=int)
    p_train.add_argument("--hidden-layers", type=int)
    p_train.add_argument("--hidden-width", type=int)
    p_train.add_argument("--learning-rate", type=float)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--max-epochs", type=int)
    p_train.add_argument("--patience", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--k", type=int)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score checkpoints and baselines on a split")
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--checkpoint", action="append")
    p_eval.add_argument("--baseline", action="append", choices=("mru", "random"))
    p_eval.add_argument("--split", choices=("test", "validation"), default="test")
    p_eval.add_argument("--config")
    p_eval.add_argument("--k", type=int)
    p_eval.add_argument("--seed", type=int)
    p_eval.add_argument("--report", help="write the JSON report here")
    p_eval.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (EmptyCorpusError, EmptyTrainSetError) as exc:
        print(f"empty corpus: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except AllInstancesSkippedError as exc:
        print(f"nothing to score: {exc}", file=sys.stderr)
        return EXIT_ALL_SKIPPED
    except (CheckpointError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
