"""Command-line entry point: parse, gen, pairs, train, eval, predict,
export-embeddings.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal
error. Diagnostics go to stderr; data goes to files or stdout. Every
subcommand is deterministic given --seed (PERFDIFF_SEED is the fallback).
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from dataclasses import replace

from perfdiff import __version__
from perfdiff.ast import load_ast, normalize, save_ast, dumps_ast
from perfdiff.errors import PerfdiffError
from perfdiff.evaluation import (
    cross_eval,
    export_embeddings,
    metrics_from_scores,
    pair_scores,
    report_dict,
    sensitivity_sweep,
    write_cross_csv,
)
from perfdiff.minilang import parse as parse_source
from perfdiff.pairs import (
    filter_by_threshold,
    generate_pairs,
    load_manifest,
    load_pairs,
    save_pairs,
    split_submissions,
)
from perfdiff.synth import CostModel, GenConfig, corpus_to_manifest, generate_corpus
from perfdiff.train import TrainConfig, load_model, predict, save_model, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _log(args, event: str, **fields) -> None:
    if getattr(args, "log_json", False):
        print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)
    else:
        detail = " ".join(f"{k}={v}" for k, v in fields.items())
        print(f"{event} {detail}".rstrip(), file=sys.stderr)


def _seed(value: int | None, default: int = 0) -> int:
    if value is not None:
        return value
    env = os.environ.get("PERFDIFF_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise PerfdiffError(f"PERFDIFF_SEED must be an integer, got {env!r}") from None
    return default


def _read_text(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise PerfdiffError(f"cannot read {path}: {exc}") from exc


# --- subcommands ----------------------------------------------------------


def cmd_parse(args) -> int:
    source = _read_text(args.src)
    source_id = args.source_id or os.path.splitext(os.path.basename(args.src))[0]
    ast = parse_source(source, source_id=source_id)
    if args.output:
        save_ast(ast, args.output)
        _log(args, "parsed", src=args.src, nodes=len(ast), out=args.output)
    else:
        sys.stdout.write(dumps_ast(ast))
    return 0


def cmd_gen(args) -> int:
    config = GenConfig(
        n_programs=args.n,
        max_loop_depth=args.max_depth,
        max_statements=args.max_statements,
        loop_iteration_weight=args.loop_weight,
        seed=_seed(args.seed, 42),
        family=args.family,
    )
    corpus = generate_corpus(config, CostModel(loop_multiplier=args.multiplier))
    manifest = corpus_to_manifest(corpus, args.output)
    _log(args, "generated", programs=len(corpus), manifest=manifest)
    return 0


def cmd_pairs(args) -> int:
    submissions = load_manifest(args.manifest)
    seed = _seed(args.seed, 7)

    def build(subs, split):
        ds = generate_pairs(
            subs,
            ratio=args.ratio,
            symmetric=args.symmetric,
            seed=seed,
            cross_problem=args.cross_problem_pairs,
            split=split,
        )
        if args.min_delta > 0:
            ds = filter_by_threshold(ds, args.min_delta)
        return ds

    if args.test_out:
        train_subs, test_subs = split_submissions(submissions, args.test_fraction, seed)
        train_ds = build(train_subs, "train")
        test_ds = build(test_subs, "test")
        save_pairs(train_ds, args.output)
        save_pairs(test_ds, args.test_out)
        _log(args, "pairs", train=len(train_ds), test=len(test_ds))
    else:
        ds = build(submissions, "all")
        save_pairs(ds, args.output)
        _log(args, "pairs", total=len(ds))
    return 0


_GRID_FIELDS = {"layers": int, "d": int}


def _parse_grid(spec: str) -> list[dict]:
    axes = {}
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise PerfdiffError(f"bad grid axis {part!r}; expected name=v1,v2")
        name, values = part.split("=", 1)
        name = name.strip()
        if name not in _GRID_FIELDS:
            raise PerfdiffError(
                f"unknown grid field {name!r}; supported: {sorted(_GRID_FIELDS)}"
            )
        axes[name] = [_GRID_FIELDS[name](v) for v in values.split(",") if v.strip()]
    if not axes:
        raise PerfdiffError("empty grid specification")
    names = sorted(axes)
    return [dict(zip(names, combo)) for combo in itertools.product(*(axes[n] for n in names))]


def _build_train_config(args) -> TrainConfig:
    base = {}
    if args.config:
        base = json.loads(_read_text(args.config))
        if not isinstance(base, dict):
            raise PerfdiffError(f"{args.config}: config must be a JSON object")
    overrides = {
        "encoder": args.encoder,
        "variant": args.variant,
        "layers": args.layers,
        "d": args.d,
        "embedding_dim": args.embedding_dim,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "seed": args.seed,
        "threshold": args.threshold,
        "early_stop_patience": args.patience,
        "gcn_depth": args.gcn_depth,
    }
    merged = dict(base)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    if "seed" not in merged:
        merged["seed"] = _seed(None, 0)
    try:
        return TrainConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise PerfdiffError(f"bad training config: {exc}") from exc


def cmd_train(args) -> int:
    train_ds = load_pairs(args.pairs)
    valid_ds = load_pairs(args.valid) if args.valid else None
    config = _build_train_config(args)

    def epoch_log(metrics):
        _log(
            args,
            "epoch",
            epoch=metrics.epoch,
            train_loss=round(metrics.train_loss, 6),
            train_accuracy=round(metrics.train_accuracy, 6),
            valid_accuracy=(
                None if metrics.valid_accuracy is None else round(metrics.valid_accuracy, 6)
            ),
        )

    configs = [config]
    if args.grid:
        configs = [replace(config, **combo) for combo in _parse_grid(args.grid)]

    best = None
    for cfg in configs:
        result = train(cfg, train_ds, valid_ds, log=epoch_log)
        last = result.history[-1]
        score = result.final_state.best_metric
        _log(
            args,
            "trained",
            layers=cfg.layers,
            d=cfg.d,
            epochs_run=len(result.history),
            best_metric=round(score, 6),
            final_train_accuracy=round(last.train_accuracy, 6),
        )
        if best is None or score > best[0]:
            best = (score, result)
    save_model(best[1].bundle, args.output)
    _log(args, "saved", model=args.output)
    return 0


def cmd_eval(args) -> int:
    def parse_tagged(entries, default):
        out = {}
        for i, entry in enumerate(entries):
            tag, sep, path = entry.partition("=")
            if not sep:
                tag, path = f"{default}{i}" if len(entries) > 1 else default, entry
            out[tag] = path
        return out

    models = {
        tag: load_model(path)
        for tag, path in parse_tagged(args.model, "model").items()
    }
    datasets = {
        tag: load_pairs(path)
        for tag, path in parse_tagged(args.pairs, "test").items()
    }
    if args.threshold is not None:
        for bundle in models.values():
            bundle.config.threshold = args.threshold

    if args.csv:
        model_tags, data_tags, matrix = cross_eval(models, datasets)
        write_cross_csv(args.csv, model_tags, data_tags, matrix)
        _log(args, "cross-matrix", out=args.csv, shape=f"{len(model_tags)}x{len(data_tags)}")

    if len(models) == 1 and len(datasets) == 1:
        (bundle,) = models.values()
        (dataset,) = datasets.values()
        scores, labels = pair_scores(bundle, dataset, jobs=args.jobs)
        metrics = metrics_from_scores(scores, labels, bundle.config.threshold)
        sensitivity = sensitivity_sweep(bundle, dataset)
        report = report_dict(metrics, sensitivity, threshold=bundle.config.threshold)
        text = json.dumps(report, sort_keys=True, indent=2) + "\n"
        if args.report:
            with open(args.report, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        _log(args, "evaluated", n_pairs=metrics.n_pairs, accuracy=round(metrics.accuracy, 6))
    elif args.report:
        raise PerfdiffError("--report needs exactly one model and one pair set")
    return 0


def cmd_predict(args) -> int:
    bundle = load_model(args.model)
    if args.threshold is not None:
        bundle.config.threshold = args.threshold
    ast_a = normalize(load_ast(args.first))
    ast_b = normalize(load_ast(args.second))
    probability, label = predict(bundle, ast_a, ast_b)
    sys.stdout.write(
        json.dumps(
            {
                "probability": probability,
                "label": label,
                "meaning": "second faster or equivalent" if label == 1 else "first faster",
            },
            sort_keys=True,
        )
        + "\n"
    )
    return 0


def cmd_export_embeddings(args) -> int:
    bundle = load_model(args.model)
    if args.manifest:
        asts = [s.ast for s in load_manifest(args.manifest)]
    else:
        asts = [load_ast(path) for path in args.asts]
    os.makedirs(args.out_dir, exist_ok=True)
    codes = os.path.join(args.out_dir, "codes.csv")
    nodes = os.path.join(args.out_dir, "nodes.csv")
    export_embeddings(bundle, asts, codes, nodes)
    _log(args, "exported", codes=codes, nodes=nodes)
    return 0


# --- argument wiring ------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="perfdiff", description=__doc__)
    parser.add_argument("--version", action="version", version=f"perfdiff {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p):
        p.add_argument("--log-json", action="store_true", help="JSON-lines progress on stderr")
        p.add_argument("--jobs", type=int, default=os.cpu_count(),
                       help="parallel encodings during evaluation")

    p = sub.add_parser("parse", help="parse mini-language source into AST-JSON")
    p.add_argument("src")
    p.add_argument("-o", "--output", help="output path (stdout when omitted)")
    p.add_argument("--source-id", help="source_id to embed (default: file stem)")
    common(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("gen", help="generate a synthetic labeled corpus")
    p.add_argument("--n", type=int, required=True, help="number of programs")
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--max-statements", type=int, default=8)
    p.add_argument("--family", choices=("loopdepth", "statements"), default="loopdepth")
    p.add_argument("--multiplier", type=int, default=10, help="cost multiplier per loop level")
    p.add_argument("--loop-weight", type=float, default=1.0)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pairs", help="build labeled pair datasets from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratio", type=float, default=0.75)
    p.add_argument("--symmetric", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--cross-problem-pairs", action="store_true")
    p.add_argument("--min-delta", type=float, default=0.0)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--test-out", help="also split submissions and write test pairs here")
    p.add_argument("--test-fraction", type=float, default=0.2)
    common(p)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("train", help="train a comparison model on pair files")
    p.add_argument("--pairs", required=True)
    p.add_argument("--valid")
    p.add_argument("--config", help="JSON config; flags override its values")
    p.add_argument("--encoder", choices=("treelstm", "gcn"))
    p.add_argument("--variant", choices=("uni", "bi", "alternating"))
    p.add_argument("--layers", type=int)
    p.add_argument("-d", type=int, help="hidden size")
    p.add_argument("--embedding-dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--gcn-depth", type=int)
    p.add_argument("--grid", help='sweep, e.g. "layers=1,3;d=50,100"')
    p.add_argument("-o", "--output", required=True, help="model file (.pdif)")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate models on pair sets")
    p.add_argument("--model", action="append", required=True,
                   help="model path or tag=path (repeatable)")
    p.add_argument("--pairs", action="append", required=True,
                   help="pairs path or tag=path (repeatable)")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--csv", help="write the train-vs-test accuracy matrix here")
    p.add_argument("--threshold", type=float)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="compare two AST files with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("first", help="AST-JSON of the baseline program")
    p.add_argument("second", help="AST-JSON of the candidate program")
    p.add_argument("--threshold", type=float)
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-embeddings", help="dump tree and node embeddings as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", help="encode every submission in this manifest")
    p.add_argument("asts", nargs="*", help="AST-JSON files to encode")
    p.add_argument("--out-dir", default=".")
    common(p)
    p.set_defaults(func=cmd_export_embeddings)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except PerfdiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
