#!/usr/bin/env python3
"""Full synthetic benchmark: trains tree-LSTM and GCN comparison models on
the loop-depth program family, evaluates on held-out programs, and reports
accuracy, AUC, the runtime-gap sensitivity sweep, and the two-family
cross-generalization matrix.

Everything is seeded; rerunning reproduces the same numbers.

Usage:
    python scripts/run_synthetic_benchmark.py [--fast] [--out-dir DIR]
"""

import argparse
import sys
import time
from pathlib import Path

from perfdiff.ast import with_runtime
from perfdiff.evaluation import (
    cross_eval,
    evaluate,
    sensitivity_sweep,
    write_cross_csv,
)
from perfdiff.minilang import parse
from perfdiff.pairs import Submission, generate_pairs, split_submissions
from perfdiff.synth import GenConfig, generate_corpus
from perfdiff.train import TrainConfig, train


def build_family(family: str, n_programs: int, seed: int):
    corpus = generate_corpus(
        GenConfig(n_programs=n_programs, max_loop_depth=3, seed=seed, family=family)
    )
    submissions = [
        Submission(
            p.source_id,
            with_runtime(parse(p.source, p.source_id), p.cost),
            p.cost,
            p.family,
        )
        for p in corpus
    ]
    train_subs, test_subs = split_submissions(submissions, test_fraction=0.2, seed=5)
    n_tr, n_te = len(train_subs), len(test_subs)
    train_ds = generate_pairs(
        train_subs, ratio=min(1.0, 2400 / (n_tr * (n_tr - 1))),
        symmetric=True, seed=6, split="train",
    )
    test_ds = generate_pairs(
        test_subs, ratio=min(1.0, 1200 / (n_te * (n_te - 1))),
        symmetric=False, seed=7, split="test",
    )
    return train_ds, test_ds


def main(argv=None) -> int:
    cli = argparse.ArgumentParser(description=__doc__)
    cli.add_argument("--fast", action="store_true",
                     help="smaller corpora and fewer epochs (quick look)")
    cli.add_argument("--out-dir", default="benchmark-out")
    args = cli.parse_args(argv)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_programs = 120 if args.fast else 500
    epochs = 4 if args.fast else 8

    started = time.time()
    print(f"generating {n_programs} programs per family...", flush=True)
    loop_train, loop_test = build_family("loopdepth", n_programs, seed=11)
    stmt_train, stmt_test = build_family("statements", n_programs, seed=12)

    config = TrainConfig(
        encoder="treelstm", variant="uni", layers=1, d=24, embedding_dim=12,
        learning_rate=1e-3, batch_size=32, epochs=epochs, seed=0,
        early_stop_patience=epochs,
    )

    print("training tree-LSTM (loopdepth)...", flush=True)
    loop_model = train(config, loop_train).bundle
    print("training tree-LSTM (statements)...", flush=True)
    stmt_model = train(config, stmt_train).bundle
    print("training GCN baseline (loopdepth)...", flush=True)
    gcn_config = TrainConfig(
        encoder="gcn", gcn_depth=3, d=24, embedding_dim=12,
        learning_rate=1e-3, batch_size=32, epochs=epochs, seed=0,
        early_stop_patience=epochs,
    )
    gcn_model = train(gcn_config, loop_train).bundle

    tree_metrics = evaluate(loop_model, loop_test)
    gcn_metrics = evaluate(gcn_model, loop_test)
    print()
    print("== encoder comparison (held-out loopdepth pairs) ==")
    print(f"tree-LSTM  accuracy {tree_metrics.accuracy:.4f}  AUC {tree_metrics.auc:.4f}")
    print(f"GCN        accuracy {gcn_metrics.accuracy:.4f}  AUC {gcn_metrics.auc:.4f}")

    print()
    print("== sensitivity to the minimum runtime gap ==")
    for row in sensitivity_sweep(loop_model, loop_test).rows:
        print(f"  |delta| >= {row.min_delta_ms:10.1f}   pairs {row.n_pairs:5d}   "
              f"accuracy {row.accuracy:.4f}")

    print()
    print("== cross-family generalization (rows: training family) ==")
    model_tags, data_tags, matrix = cross_eval(
        {"loopdepth": loop_model, "statements": stmt_model},
        {"loopdepth": loop_test, "statements": stmt_test},
    )
    header = "            " + "  ".join(f"{t:>10}" for t in data_tags)
    print(header)
    for i, tag in enumerate(model_tags):
        cells = "  ".join(f"{v:10.4f}" for v in matrix[i])
        print(f"{tag:>12}{cells}")
    write_cross_csv(out_dir / "cross_family.csv", model_tags, data_tags, matrix)

    print()
    print(f"done in {time.time() - started:.0f}s; matrix written to "
          f"{out_dir / 'cross_family.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
