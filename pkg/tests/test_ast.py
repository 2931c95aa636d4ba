import json

import pytest
from hypothesis import given, strategies as st

from perfdiff.ast import (
    AstNode,
    ast_from_dict,
    dumps_ast,
    load_ast,
    make_ast,
    normalize,
    save_ast,
    structurally_equal,
    tree_stats,
)
from perfdiff.errors import AstFormatError, AstStructureError, NormalizeError


def write_tree(tmp_path, obj, name="tree.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


def minimal_tree(**overrides):
    obj = {
        "source_id": "t",
        "runtime_ms": None,
        "root": 0,
        "nodes": [{"id": 0, "kind": "root", "children": []}],
    }
    obj.update(overrides)
    return obj


class TestLoadAst:
    def test_minimal_tree(self, tmp_path):
        ast = load_ast(write_tree(tmp_path, minimal_tree()))
        assert len(ast) == 1
        assert ast.root == 0
        assert ast.nodes[0].kind == "root"

    def test_self_loop_is_a_cycle(self, tmp_path):
        obj = minimal_tree(
            nodes=[
                {"id": 0, "kind": "root", "children": []},
                {"id": 1, "kind": "block", "children": [1]},
            ]
        )
        with pytest.raises(AstStructureError, match="cycle at node 1"):
            load_ast(write_tree(tmp_path, obj))

    def test_detached_two_cycle(self, tmp_path):
        obj = minimal_tree(
            nodes=[
                {"id": 0, "kind": "root", "children": []},
                {"id": 1, "kind": "a", "children": [2]},
                {"id": 2, "kind": "b", "children": [1]},
            ]
        )
        with pytest.raises(AstStructureError, match="cycle at node"):
            load_ast(write_tree(tmp_path, obj))

    def test_three_node_chain(self, tmp_path):
        # hand-constructed: root -> for_statement -> int_literal
        obj = minimal_tree(
            runtime_ms=12.5,
            nodes=[
                {"id": 0, "kind": "root", "children": [1]},
                {"id": 1, "kind": "for_statement", "children": [2]},
                {"id": 2, "kind": "int_literal", "children": []},
            ],
        )
        ast = load_ast(write_tree(tmp_path, obj))
        stats = tree_stats(ast)
        assert stats.node_count == 3
        assert stats.depth == 3
        assert ast.runtime_ms == 12.5

    def test_unknown_extra_keys_rejected(self, tmp_path):
        obj = minimal_tree(extra="nope")
        with pytest.raises(AstFormatError, match="unknown keys"):
            load_ast(write_tree(tmp_path, obj))

    def test_unknown_node_keys_rejected(self, tmp_path):
        obj = minimal_tree(nodes=[{"id": 0, "kind": "root", "children": [], "x": 1}])
        with pytest.raises(AstFormatError, match="unknown node keys"):
            load_ast(write_tree(tmp_path, obj))

    def test_duplicate_id(self, tmp_path):
        obj = minimal_tree(
            nodes=[
                {"id": 0, "kind": "root", "children": []},
                {"id": 0, "kind": "block", "children": []},
            ]
        )
        with pytest.raises(AstStructureError, match="duplicate node id 0"):
            load_ast(write_tree(tmp_path, obj))

    def test_missing_root(self, tmp_path):
        obj = minimal_tree(root=5)
        with pytest.raises(AstStructureError, match="missing root node 5"):
            load_ast(write_tree(tmp_path, obj))

    def test_orphan_node(self, tmp_path):
        obj = minimal_tree(
            nodes=[
                {"id": 0, "kind": "root", "children": []},
                {"id": 1, "kind": "block", "children": []},
            ]
        )
        with pytest.raises(AstStructureError, match="unreachable"):
            load_ast(write_tree(tmp_path, obj))

    def test_multiple_parents(self, tmp_path):
        obj = minimal_tree(
            nodes=[
                {"id": 0, "kind": "root", "children": [1, 2]},
                {"id": 1, "kind": "block", "children": [2]},
                {"id": 2, "kind": "identifier", "children": []},
            ]
        )
        with pytest.raises(AstStructureError, match="multiple parents"):
            load_ast(write_tree(tmp_path, obj))

    def test_unknown_child_reference(self, tmp_path):
        obj = minimal_tree(nodes=[{"id": 0, "kind": "root", "children": [9]}])
        with pytest.raises(AstStructureError, match="unknown child 9"):
            load_ast(write_tree(tmp_path, obj))

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(AstFormatError, match="invalid JSON"):
            load_ast(path)

    def test_child_order_preserved(self, tmp_path):
        obj = minimal_tree(
            nodes=[
                {"id": 0, "kind": "root", "children": [3, 1, 2]},
                {"id": 1, "kind": "a", "children": []},
                {"id": 2, "kind": "b", "children": []},
                {"id": 3, "kind": "c", "children": []},
            ]
        )
        ast = load_ast(write_tree(tmp_path, obj))
        assert ast.nodes[0].children == (3, 1, 2)


class TestSaveRoundTrip:
    def test_save_load_byte_equivalent(self, tmp_path):
        obj = minimal_tree(
            runtime_ms=3.25,
            nodes=[
                {"id": 0, "kind": "root", "children": [2, 1]},
                {"id": 1, "kind": "block", "children": []},
                {"id": 2, "kind": "identifier", "children": []},
            ],
        )
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        save_ast(load_ast(write_tree(tmp_path, obj)), first)
        save_ast(load_ast(first), second)
        assert first.read_bytes() == second.read_bytes()


def chain(kinds):
    nodes = [
        AstNode(id=i, kind=k, children=(i + 1,) if i + 1 < len(kinds) else ())
        for i, k in enumerate(kinds)
    ]
    return make_ast(nodes, root=0)


class TestNormalize:
    def translation_unit(self):
        # unit with 3 global declarations and 2 function definitions
        nodes = [
            AstNode(0, "translation_unit", (1, 2, 3, 4, 5)),
            AstNode(1, "declaration", ()),
            AstNode(2, "function_def", (6,)),
            AstNode(3, "declaration", ()),
            AstNode(4, "function_def", (7, 8)),
            AstNode(5, "declaration", ()),
            AstNode(6, "block", ()),
            AstNode(7, "param", ()),
            AstNode(8, "block", ()),
        ]
        return make_ast(nodes, root=0, source_id="unit")

    def test_extracts_function_definitions(self):
        result = normalize(self.translation_unit())
        root = result.nodes[result.root]
        assert root.kind == "root"
        assert len(root.children) == 2
        # oracle traversal: functions kept 2 + 3 subtree nodes, globals gone
        assert tree_stats(result).node_count == 1 + 2 + 3
        assert "declaration" not in tree_stats(result).kind_histogram

    def test_idempotent(self):
        once = normalize(self.translation_unit())
        twice = normalize(once)
        assert once == twice

    def test_never_grows(self):
        ast = self.translation_unit()
        assert len(normalize(ast)) <= len(ast)

    def test_no_functions_is_an_error(self):
        ast = chain(["translation_unit", "declaration"])
        with pytest.raises(NormalizeError, match="no function definitions"):
            normalize(ast)

    def test_preserves_metadata(self):
        ast = make_ast(
            [AstNode(0, "function_def", (1,)), AstNode(1, "block", ())],
            root=0,
            source_id="s9",
            runtime_ms=7.0,
        )
        result = normalize(ast)
        assert result.source_id == "s9"
        assert result.runtime_ms == 7.0


class TestTreeStats:
    def test_single_node(self):
        ast = chain(["root"])
        assert tree_stats(ast) == tree_stats(ast)
        assert tree_stats(ast).node_count == 1
        assert tree_stats(ast).depth == 1
        assert tree_stats(ast).kind_histogram == {"root": 1}

    def test_star(self):
        nodes = [AstNode(0, "root", (1, 2, 3))] + [
            AstNode(i, "leaf", ()) for i in (1, 2, 3)
        ]
        stats = tree_stats(make_ast(nodes, root=0))
        assert stats.node_count == 4
        assert stats.depth == 2
        assert sum(stats.kind_histogram.values()) == 4

    def test_balanced_binary(self):
        # 7 nodes, 3 levels, built by construction
        nodes = [
            AstNode(0, "a", (1, 2)),
            AstNode(1, "b", (3, 4)),
            AstNode(2, "b", (5, 6)),
            AstNode(3, "c", ()),
            AstNode(4, "c", ()),
            AstNode(5, "c", ()),
            AstNode(6, "c", ()),
        ]
        stats = tree_stats(make_ast(nodes, root=0))
        assert (stats.node_count, stats.depth) == (7, 3)


@st.composite
def random_trees(draw):
    n = draw(st.integers(min_value=1, max_value=25))
    kinds = st.sampled_from(["a", "b", "c", "for_statement", "identifier"])
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    for i in range(1, n):
        parent = draw(st.integers(min_value=0, max_value=i - 1))
        children[parent].append(i)
    nodes = [
        AstNode(id=i, kind=draw(kinds), children=tuple(children[i])) for i in range(n)
    ]
    return make_ast(nodes, root=0)


class TestProperties:
    @given(random_trees())
    def test_every_child_resolves(self, ast):
        for node in ast.nodes.values():
            for child in node.children:
                assert child in ast.nodes

    @given(random_trees())
    def test_serialization_round_trip(self, ast):
        reloaded = ast_from_dict(json.loads(dumps_ast(ast)))
        assert reloaded == ast

    @given(random_trees())
    def test_stats_count_matches_len(self, ast):
        assert tree_stats(ast).node_count == len(ast)

    @given(random_trees())
    def test_structural_equality_reflexive(self, ast):
        assert structurally_equal(ast, ast)
