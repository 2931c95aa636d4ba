"""Labeled ordered code-pair datasets: sampling, splitting, filtering.

A pair (first, second) carries label 1 when runtime(first) >=
runtime(second), i.e. the second program is faster or equivalent. The
candidate universe excludes self-pairs and, by default, pairs that cross
problem tags.

Submission manifests are CSV files with the header
``source_id,ast_path,runtime_ms,problem_tag``. Several rows may share a
source_id (one per test case); their runtimes are averaged.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from perfdiff.ast import Ast, load_ast
from perfdiff.errors import PairError

MANIFEST_FIELDS = ["source_id", "ast_path", "runtime_ms", "problem_tag"]
PAIRS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Submission:
    source_id: str
    ast: Ast
    runtime_ms: float
    problem_tag: str = ""
    ast_path: str = ""


@dataclass(frozen=True)
class CodePair:
    first: int        # index into PairDataset.submissions
    second: int
    label: int


@dataclass
class PairDataset:
    submissions: list[Submission]
    pairs: list[CodePair]
    split: str = ""
    seed: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def runtimes(self, pair: CodePair) -> tuple[float, float]:
        return (
            self.submissions[pair.first].runtime_ms,
            self.submissions[pair.second].runtime_ms,
        )

    def source_ids(self) -> set[str]:
        return {s.source_id for s in self.submissions}


def pair_label(runtime_first: float, runtime_second: float) -> int:
    return 1 if runtime_first >= runtime_second else 0


def pair_universe(submissions: list[Submission], cross_problem: bool = False) -> list[tuple[int, int]]:
    """Ordered non-self index pairs, same problem tag unless cross_problem."""
    n = len(submissions)
    return [
        (a, b)
        for a in range(n)
        for b in range(n)
        if a != b
        and (cross_problem or submissions[a].problem_tag == submissions[b].problem_tag)
    ]


def generate_pairs(
    submissions: list[Submission],
    ratio: float,
    symmetric: bool,
    seed: int,
    cross_problem: bool = False,
    split: str = "",
) -> PairDataset:
    """Sample ceil(ratio * |universe|) ordered pairs without replacement.

    With symmetric=True each sampled (a, b) also contributes (b, a); the
    deduplicated list is truncated back to the requested count, so the
    flag changes pair content, not dataset size.
    """
    if len(submissions) < 2:
        raise PairError(f"need at least 2 submissions, got {len(submissions)}")
    if not 0.0 < ratio <= 1.0:
        raise PairError(f"ratio must be in (0, 1], got {ratio}")

    universe = pair_universe(submissions, cross_problem)
    if not universe:
        raise PairError("pair universe is empty (no two submissions share a tag)")
    count = math.ceil(ratio * len(universe))
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(universe), size=count, replace=False)

    chosen: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for idx in picked:
        candidates = [universe[int(idx)]]
        if symmetric:
            a, b = universe[int(idx)]
            candidates.append((b, a))
        for cand in candidates:
            if cand not in seen:
                seen.add(cand)
                chosen.append(cand)
    chosen = chosen[:count]

    pairs = [
        CodePair(
            first=a,
            second=b,
            label=pair_label(submissions[a].runtime_ms, submissions[b].runtime_ms),
        )
        for a, b in chosen
    ]
    return PairDataset(submissions=list(submissions), pairs=pairs, split=split, seed=seed)


def split_submissions(
    submissions: list[Submission], test_fraction: float, seed: int
) -> tuple[list[Submission], list[Submission]]:
    """Disjoint train/test partition, deterministic per seed."""
    if not 0.0 < test_fraction < 1.0:
        raise PairError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(submissions)
    n_test = int(round(test_fraction * n))
    if n_test == 0 or n_test == n:
        raise PairError(
            f"degenerate split: {n} submissions at test_fraction {test_fraction}"
        )
    rng = np.random.default_rng(seed)
    test_idx = set(rng.permutation(n)[:n_test].tolist())
    train = [s for i, s in enumerate(submissions) if i not in test_idx]
    test = [s for i, s in enumerate(submissions) if i in test_idx]
    return train, test


def filter_by_threshold(dataset: PairDataset, min_delta_ms: float) -> PairDataset:
    """Keep pairs whose runtime difference is at least min_delta_ms."""
    kept = [
        p
        for p in dataset.pairs
        if abs(dataset.runtimes(p)[0] - dataset.runtimes(p)[1]) >= min_delta_ms
    ]
    return PairDataset(
        submissions=dataset.submissions, pairs=kept, split=dataset.split, seed=dataset.seed
    )


# --- manifest / pairs-file I/O -----------------------------------------


def load_manifest(path) -> list[Submission]:
    """Read a submission manifest CSV; ast paths resolve against its dir."""
    base = os.path.dirname(os.path.abspath(path))
    grouped: dict[str, dict] = {}
    order: list[str] = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != MANIFEST_FIELDS:
                raise PairError(
                    f"{path}: manifest header must be {','.join(MANIFEST_FIELDS)}"
                )
            for row in reader:
                sid = row["source_id"]
                try:
                    runtime = float(row["runtime_ms"])
                except (TypeError, ValueError):
                    raise PairError(
                        f"{path}: bad runtime_ms {row['runtime_ms']!r} for {sid}"
                    ) from None
                if not math.isfinite(runtime) or runtime < 0:
                    raise PairError(f"{path}: runtime_ms must be finite and >= 0 for {sid}")
                entry = grouped.get(sid)
                if entry is None:
                    grouped[sid] = {
                        "ast_path": row["ast_path"],
                        "problem_tag": row["problem_tag"],
                        "runtimes": [runtime],
                    }
                    order.append(sid)
                else:
                    if (
                        entry["ast_path"] != row["ast_path"]
                        or entry["problem_tag"] != row["problem_tag"]
                    ):
                        raise PairError(
                            f"{path}: conflicting rows for submission {sid}"
                        )
                    entry["runtimes"].append(runtime)
    except OSError as exc:
        raise PairError(f"cannot read manifest {path}: {exc}") from exc

    submissions = []
    for sid in order:
        entry = grouped[sid]
        ast_path = entry["ast_path"]
        if not os.path.isabs(ast_path):
            ast_path = os.path.join(base, ast_path)
        ast = load_ast(ast_path)
        submissions.append(
            Submission(
                source_id=sid,
                ast=ast,
                runtime_ms=float(np.mean(entry["runtimes"])),
                problem_tag=entry["problem_tag"],
                ast_path=ast_path,
            )
        )
    return submissions


def save_pairs(dataset: PairDataset, path) -> None:
    """Write a self-contained pairs file (ast paths relative to it)."""
    base = os.path.dirname(os.path.abspath(path))
    subs = []
    for s in dataset.submissions:
        if not s.ast_path:
            raise PairError(f"submission {s.source_id} has no ast_path; cannot save")
        subs.append(
            {
                "source_id": s.source_id,
                "ast_path": os.path.relpath(os.path.abspath(s.ast_path), base),
                "runtime_ms": s.runtime_ms,
                "problem_tag": s.problem_tag,
            }
        )
    obj = {
        "format_version": PAIRS_FORMAT_VERSION,
        "seed": dataset.seed,
        "split": dataset.split,
        "submissions": subs,
        "pairs": [[p.first, p.second, p.label] for p in dataset.pairs],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_pairs(path) -> PairDataset:
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PairError(f"cannot read pairs file {path}: {exc}") from exc
    if obj.get("format_version") != PAIRS_FORMAT_VERSION:
        raise PairError(f"{path}: unsupported pairs format_version")

    submissions = []
    for s in obj["submissions"]:
        ast_path = s["ast_path"]
        if not os.path.isabs(ast_path):
            ast_path = os.path.join(base, ast_path)
        submissions.append(
            Submission(
                source_id=s["source_id"],
                ast=load_ast(ast_path),
                runtime_ms=float(s["runtime_ms"]),
                problem_tag=s["problem_tag"],
                ast_path=ast_path,
            )
        )
    n = len(submissions)
    pairs = []
    for first, second, label in obj["pairs"]:
        if not (0 <= first < n and 0 <= second < n):
            raise PairError(f"{path}: pair index out of range")
        pairs.append(CodePair(first=first, second=second, label=label))
    return PairDataset(
        submissions=submissions,
        pairs=pairs,
        split=obj.get("split", ""),
        seed=int(obj.get("seed", 0)),
    )
