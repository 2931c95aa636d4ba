"""Synthetic mini-language corpora with an analytic execution-cost oracle.

Every generated program parses under perfdiff.minilang, and its "runtime"
is a closed-form weighted statement count: each simple statement
(declaration, expression statement, return) costs one unit, multiplied by
``loop_multiplier`` for every enclosing loop body. Loop headers and
blocks themselves are free. Cost is therefore a pure function of tree
structure, which is exactly what makes the comparison task solvable from
static information alone.

Two program families are available:

* ``loopdepth``  - cost dominated by loop nesting depth;
* ``statements`` - straight-line code, cost driven by statement count.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from perfdiff.ast import Ast, save_ast, with_runtime
from perfdiff.errors import SynthError
from perfdiff.minilang import parse
from perfdiff.pairs import MANIFEST_FIELDS

FAMILIES = ("loopdepth", "statements")

COUNTED_KINDS = frozenset({"declaration", "expression_statement", "return_statement"})


@dataclass(frozen=True)
class CostModel:
    base_cost: float = 1.0
    loop_multiplier: int = 10


@dataclass(frozen=True)
class GenConfig:
    n_programs: int
    max_loop_depth: int = 3
    max_statements: int = 8
    loop_iteration_weight: float = 1.0   # sampling weight for loop segments
    seed: int = 0
    family: str = "loopdepth"
    min_cost_cv: float = 0.3
    retry_budget: int = 20

    def __post_init__(self):
        if self.n_programs < 1 or self.max_loop_depth < 1 or self.max_statements < 1:
            raise SynthError("n_programs, max_loop_depth, max_statements must be >= 1")
        if self.loop_iteration_weight <= 0:
            raise SynthError("loop_iteration_weight must be positive")
        if self.family not in FAMILIES:
            raise SynthError(f"unknown family {self.family!r}")


@dataclass(frozen=True)
class GeneratedProgram:
    source_id: str
    source: str
    cost: float
    family: str


def program_cost(ast: Ast, cost_model: CostModel = CostModel()) -> float:
    """Reference interpreter: weighted count of simple statements.

    Statements in a loop *body* pay the multiplier; a for-loop's
    init/cond/step clauses sit outside the body and do not.
    """

    def walk(nid: int, depth: int) -> float:
        node = ast.nodes[nid]
        total = 0.0
        if node.kind in COUNTED_KINDS:
            total += cost_model.base_cost * cost_model.loop_multiplier**depth
        if node.kind == "for_statement":
            init, _cond, _step, body = node.children
            return total + walk(init, depth) + walk(body, depth + 1)
        if node.kind == "while_statement":
            _cond, body = node.children
            return total + walk(body, depth + 1)
        for child in node.children:
            total += walk(child, depth)
        return total

    return walk(ast.root, 0)


# Simple-statement templates and how many counted statements each holds.
_SIMPLE = (
    ("x = x + 1;", 1),
    ("x += 1;", 1),
    ("x -= 1;", 1),
    ("x = x * 2;", 1),
    ("x = x % 3;", 1),
    ("g(x);", 1),
    ("x = a[x];", 1),
    ("if (x < 10) { x += 1; }", 1),
    ("if (x < 10) { x += 1; } else { x -= 1; }", 2),
)


def _emit_simple(rng, lines, indent, depth, multiplier) -> float:
    text, count = _SIMPLE[int(rng.integers(0, len(_SIMPLE)))]
    lines.append("    " * indent + text)
    return count * multiplier**depth


def _emit_loop_header(rng, lines, indent) -> None:
    if rng.integers(0, 2) == 0:
        lines.append("    " * indent + "for (i = 0; i < 10; i++) {")
    else:
        lines.append("    " * indent + "while (i < 10) {")


def _gen_loopdepth(rng, cfg: GenConfig, multiplier: int) -> tuple[str, float]:
    lines = ["int f0() {"]
    cost = 0.0
    n_segments = int(rng.integers(1, 4))
    for _ in range(n_segments):
        weights = np.ones(cfg.max_loop_depth + 1)
        weights[1:] *= cfg.loop_iteration_weight
        depth = int(rng.choice(cfg.max_loop_depth + 1, p=weights / weights.sum()))
        for level in range(depth):
            _emit_loop_header(rng, lines, 1 + level)
        n_inner = int(rng.integers(1, 4))
        for _ in range(n_inner):
            cost += _emit_simple(rng, lines, 1 + depth, depth, multiplier)
        for level in range(depth - 1, -1, -1):
            lines.append("    " * (1 + level) + "}")
    lines.append("    return x;")
    cost += 1.0
    lines.append("}")
    return "\n".join(lines) + "\n", cost


def _gen_statements(rng, cfg: GenConfig, multiplier: int) -> tuple[str, float]:
    lines = ["int f0() {"]
    cost = 0.0
    for _ in range(int(rng.integers(1, cfg.max_statements + 1))):
        cost += _emit_simple(rng, lines, 1, 0, multiplier)
    lines.append("    return x;")
    cost += 1.0
    lines.append("}")
    return "\n".join(lines) + "\n", cost


def generate_corpus(
    config: GenConfig, cost_model: CostModel = CostModel()
) -> list[GeneratedProgram]:
    """Deterministic per seed; rejects corpora whose cost CV is too low."""
    gen = _gen_loopdepth if config.family == "loopdepth" else _gen_statements
    for attempt in range(config.retry_budget):
        rng = np.random.default_rng((config.seed, attempt))
        programs = []
        for i in range(config.n_programs):
            source, cost = gen(rng, config, cost_model.loop_multiplier)
            programs.append(
                GeneratedProgram(
                    source_id=f"{config.family}-{i:04d}",
                    source=source,
                    cost=cost,
                    family=config.family,
                )
            )
        costs = np.array([p.cost for p in programs])
        mean = costs.mean()
        if config.n_programs == 1 or (mean > 0 and costs.std() / mean >= config.min_cost_cv):
            return programs
    raise SynthError(
        f"could not reach cost CV >= {config.min_cost_cv} in "
        f"{config.retry_budget} attempts; widen the generator bounds"
    )


def corpus_to_manifest(corpus: list[GeneratedProgram], out_dir) -> str:
    """Parse, normalize, and serialize a corpus; returns the manifest path.

    Writes ``asts/<id>.json`` (cost stored as runtime_ms), ``src/<id>.c``,
    and ``manifest.csv`` under out_dir.
    """
    ast_dir = os.path.join(out_dir, "asts")
    src_dir = os.path.join(out_dir, "src")
    os.makedirs(ast_dir, exist_ok=True)
    os.makedirs(src_dir, exist_ok=True)

    rows = []
    for prog in corpus:
        ast = parse(prog.source, source_id=prog.source_id)
        ast = with_runtime(ast, prog.cost)
        ast_rel = os.path.join("asts", f"{prog.source_id}.json")
        save_ast(ast, os.path.join(out_dir, ast_rel))
        with open(os.path.join(src_dir, f"{prog.source_id}.c"), "w", encoding="utf-8") as fh:
            fh.write(prog.source)
        rows.append((prog.source_id, ast_rel, prog.cost, prog.family))

    manifest_path = os.path.join(out_dir, "manifest.csv")
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(MANIFEST_FIELDS) + "\n")
        for sid, ast_rel, cost, family in rows:
            fh.write(f"{sid},{ast_rel},{cost!r},{family}\n")
    return manifest_path
