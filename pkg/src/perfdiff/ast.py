"""AST data model plus JSON ingest, normalization, and basic tree reports.

Trees arrive either from the bundled mini-language parser or from any
external frontend that emits the AST-JSON schema:

    {"source_id": str, "runtime_ms": number|null, "root": int,
     "nodes": [{"id": int, "kind": str, "children": [int, ...]}, ...]}

Node ids are 0-based and tree-local; identity across trees lives in the
node-kind vocabulary, not in ids.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace

from perfdiff.errors import AstFormatError, AstStructureError, NormalizeError

ROOT_KIND = "root"
FUNCTION_DEF_KIND = "function_def"

_TREE_KEYS = {"source_id", "runtime_ms", "root", "nodes"}
_NODE_KEYS = {"id", "kind", "children"}


@dataclass(frozen=True)
class AstNode:
    id: int
    kind: str
    children: tuple[int, ...] = ()


@dataclass(frozen=True)
class Ast:
    """Rooted ordered tree of typed nodes. Immutable after construction."""

    nodes: dict[int, AstNode]
    root: int
    source_id: str = ""
    runtime_ms: float | None = None

    def node(self, node_id: int) -> AstNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)


def make_ast(
    nodes: list[AstNode],
    root: int,
    source_id: str = "",
    runtime_ms: float | None = None,
) -> Ast:
    """Build and validate an Ast from a node list."""
    table: dict[int, AstNode] = {}
    for node in nodes:
        if node.id < 0:
            raise AstStructureError(f"negative node id {node.id}")
        if node.id in table:
            raise AstStructureError(f"duplicate node id {node.id}")
        table[node.id] = node
    ast = Ast(nodes=table, root=root, source_id=source_id, runtime_ms=runtime_ms)
    _validate(ast)
    return ast


def with_runtime(ast: Ast, runtime_ms: float | None) -> Ast:
    return replace(ast, runtime_ms=runtime_ms)


def _validate(ast: Ast) -> None:
    nodes = ast.nodes
    if ast.root not in nodes:
        raise AstStructureError(f"missing root node {ast.root}")
    if ast.runtime_ms is not None and not ast.runtime_ms >= 0:
        raise AstFormatError(f"runtime_ms must be non-negative, got {ast.runtime_ms}")

    parent: dict[int, int] = {}
    for node in nodes.values():
        for child in node.children:
            if child not in nodes:
                raise AstStructureError(
                    f"unknown child {child} referenced by node {node.id}"
                )
            if child == ast.root:
                raise AstStructureError(f"root has a parent (node {node.id})")
            if child in parent:
                raise AstStructureError(f"node {child} has multiple parents")
            parent[child] = node.id

    # A cycle shows up as a parent chain that revisits itself instead of
    # terminating at the root.
    ok: set[int] = {ast.root}
    for start in nodes:
        trail: list[int] = []
        seen: set[int] = set()
        cur = start
        while cur not in ok:
            if cur in seen:
                raise AstStructureError(f"cycle at node {cur}")
            seen.add(cur)
            trail.append(cur)
            if cur not in parent:
                raise AstStructureError(f"node {cur} unreachable from root")
            cur = parent[cur]
        ok.update(trail)


def ast_from_dict(obj: object) -> Ast:
    """Decode the AST-JSON schema. Unknown keys are rejected."""
    if not isinstance(obj, dict):
        raise AstFormatError("top-level value must be an object")
    extra = set(obj) - _TREE_KEYS
    if extra:
        raise AstFormatError(f"unknown keys: {sorted(extra)}")
    missing = _TREE_KEYS - set(obj)
    if missing:
        raise AstFormatError(f"missing keys: {sorted(missing)}")

    source_id = obj["source_id"]
    if not isinstance(source_id, str):
        raise AstFormatError("source_id must be a string")
    runtime = obj["runtime_ms"]
    if runtime is not None and not isinstance(runtime, (int, float)):
        raise AstFormatError("runtime_ms must be a number or null")
    if isinstance(runtime, bool):
        raise AstFormatError("runtime_ms must be a number or null")
    root = obj["root"]
    if not isinstance(root, int) or isinstance(root, bool):
        raise AstFormatError("root must be an integer")
    raw_nodes = obj["nodes"]
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise AstFormatError("nodes must be a non-empty list")

    nodes = []
    for entry in raw_nodes:
        if not isinstance(entry, dict):
            raise AstFormatError("each node must be an object")
        extra = set(entry) - _NODE_KEYS
        if extra:
            raise AstFormatError(f"unknown node keys: {sorted(extra)}")
        missing = _NODE_KEYS - set(entry)
        if missing:
            raise AstFormatError(f"missing node keys: {sorted(missing)}")
        nid, kind, children = entry["id"], entry["kind"], entry["children"]
        if not isinstance(nid, int) or isinstance(nid, bool):
            raise AstFormatError("node id must be an integer")
        if not isinstance(kind, str) or not kind:
            raise AstFormatError(f"node {nid}: kind must be a non-empty string")
        if not isinstance(children, list) or any(
            not isinstance(c, int) or isinstance(c, bool) for c in children
        ):
            raise AstFormatError(f"node {nid}: children must be a list of ints")
        nodes.append(AstNode(id=nid, kind=kind, children=tuple(children)))

    return make_ast(
        nodes,
        root=root,
        source_id=source_id,
        runtime_ms=float(runtime) if runtime is not None else None,
    )


def ast_to_dict(ast: Ast) -> dict:
    return {
        "source_id": ast.source_id,
        "runtime_ms": ast.runtime_ms,
        "root": ast.root,
        "nodes": [
            {"id": n.id, "kind": n.kind, "children": list(n.children)}
            for n in sorted(ast.nodes.values(), key=lambda n: n.id)
        ],
    }


def load_ast(path) -> Ast:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise AstFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise AstFormatError(f"{path}: invalid JSON: {exc}") from exc
    return ast_from_dict(obj)


def dumps_ast(ast: Ast) -> str:
    """Canonical serialization: sorted keys, compact separators."""
    return json.dumps(ast_to_dict(ast), sort_keys=True, separators=(",", ":")) + "\n"


def save_ast(ast: Ast, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_ast(ast))


def normalize(ast: Ast) -> Ast:
    """Rebuild the tree as a synthetic root over function-definition subtrees.

    Function definitions keep their original source order; everything
    outside them is dropped. Node ids are renumbered in preorder, so the
    operation is a bitwise fixed point on already-normalized trees.
    """
    fn_roots: list[int] = []

    def scan(nid: int) -> None:
        node = ast.nodes[nid]
        if node.kind == FUNCTION_DEF_KIND:
            fn_roots.append(nid)
            return
        for child in node.children:
            scan(child)

    scan(ast.root)
    if not fn_roots:
        raise NormalizeError(f"{ast.source_id or '<ast>'}: no function definitions found")

    nodes: list[AstNode] = []
    next_id = 1

    def copy(nid: int) -> int:
        nonlocal next_id
        new_id = next_id
        next_id += 1
        old = ast.nodes[nid]
        placeholder = len(nodes)
        nodes.append(old)  # patched below once children are numbered
        kids = tuple(copy(c) for c in old.children)
        nodes[placeholder] = AstNode(id=new_id, kind=old.kind, children=kids)
        return new_id

    top = tuple(copy(fn) for fn in fn_roots)
    nodes.insert(0, AstNode(id=0, kind=ROOT_KIND, children=top))
    return make_ast(nodes, root=0, source_id=ast.source_id, runtime_ms=ast.runtime_ms)


@dataclass(frozen=True)
class TreeStats:
    node_count: int
    depth: int
    kind_histogram: dict[str, int] = field(default_factory=dict)


def tree_stats(ast: Ast) -> TreeStats:
    """Node count, depth (single node = 1), and per-kind counts."""
    histogram: Counter[str] = Counter()

    def walk(nid: int) -> int:
        node = ast.nodes[nid]
        histogram[node.kind] += 1
        return 1 + max((walk(c) for c in node.children), default=0)

    depth = walk(ast.root)
    return TreeStats(
        node_count=len(ast.nodes), depth=depth, kind_histogram=dict(histogram)
    )


def structurally_equal(a: Ast, b: Ast) -> bool:
    """Compare kinds and shape, ignoring node ids and metadata."""

    def eq(na: int, nb: int) -> bool:
        x, y = a.nodes[na], b.nodes[nb]
        if x.kind != y.kind or len(x.children) != len(y.children):
            return False
        return all(eq(ca, cb) for ca, cb in zip(x.children, y.children))

    return eq(a.root, b.root)
