import pytest
from hypothesis import given, settings, strategies as st

from perfdiff.ast import structurally_equal, tree_stats
from perfdiff.errors import LexError, ParseError
from perfdiff.minilang import (
    NODE_KINDS,
    TokenKind,
    parse,
    print_source,
    tokenize,
)
from perfdiff.synth import GenConfig, generate_corpus


def kinds_of(tokens):
    return [t.kind for t in tokens]


def texts_of(tokens):
    return [t.text for t in tokens]


class TestTokenize:
    def test_assignment_statement(self):
        tokens = tokenize("x=1;")
        assert texts_of(tokens) == ["x", "=", "1", ";"]
        assert kinds_of(tokens) == [
            TokenKind.IDENTIFIER,
            TokenKind.OPERATOR,
            TokenKind.INT_LITERAL,
            TokenKind.PUNCTUATION,
        ]

    def test_comment_only(self):
        assert tokenize("/*c*/") == []

    def test_line_comment(self):
        assert texts_of(tokenize("x; // trailing\ny;")) == ["x", ";", "y", ";"]

    def test_for_loop_token_enumeration(self):
        # hand-enumerated oracle for every token in the loop header and body
        expected = [
            "for", "(", "i", "=", "0", ";", "i", "<", "n", ";", "i", "++",
            ")", "{", "s", "+=", "i", ";", "}",
        ]
        tokens = tokenize("for(i=0;i<n;i++){s+=i;}")
        assert texts_of(tokens) == expected
        assert len(tokens) == len(expected)

    def test_positions(self):
        tokens = tokenize("x\n  y")
        assert (tokens[0].line, tokens[0].col) == (1, 1)
        assert (tokens[1].line, tokens[1].col) == (2, 3)

    def test_unterminated_string(self):
        with pytest.raises(LexError, match="unterminated string") as err:
            tokenize('x = "abc')
        assert err.value.line == 1

    def test_unterminated_comment(self):
        with pytest.raises(LexError, match="unterminated block comment"):
            tokenize("/* never ends")

    def test_unexpected_character(self):
        with pytest.raises(LexError, match="unexpected character"):
            tokenize("x @ y")

    def test_string_and_char_literals(self):
        tokens = tokenize('"a b" \'c\'')
        assert kinds_of(tokens) == [TokenKind.STRING_LITERAL, TokenKind.CHAR_LITERAL]

    def test_concatenation_reconstructs_significant_source(self):
        source = "int f0() { x += 1; /* gone */ return x; }"
        significant = "".join(source.split())
        significant = significant.replace("/*gone*/", "")
        assert "".join(texts_of(tokenize(source))) == significant


class TestParse:
    def test_minimal_function_shape(self):
        ast = parse("int f(){return 0;}")
        # hand-drawn tree: root -> function_def -> block -> return -> literal
        assert len(ast) == 5
        kinds = [ast.nodes[i].kind for i in range(5)]
        assert kinds == [
            "root", "function_def", "block", "return_statement", "int_literal",
        ]

    def test_duplicate_function_rejected(self):
        with pytest.raises(ParseError, match="duplicate function f"):
            parse("int f(){} int f(){}")

    def test_nested_loop_depth(self):
        ast = parse("int f(){for(i=0;i<2;i++){for(j=0;j<2;j++){x+=1;}}}")

        def loop_depths(nid, depth):
            node = ast.nodes[nid]
            mine = [depth] if node.kind == "for_statement" else []
            inc = depth + 1 if node.kind == "for_statement" else depth
            for child in node.children:
                mine += loop_depths(child, inc)
            return mine

        assert sorted(loop_depths(ast.root, 0)) == [0, 1]

    def test_output_is_normalized(self):
        ast = parse("int a(){return 1;} int b(){return 2;}")
        root = ast.nodes[ast.root]
        assert root.kind == "root"
        assert [ast.nodes[c].kind for c in root.children] == [
            "function_def", "function_def",
        ]

    def test_params_become_leaves(self):
        ast = parse("int f(int a, int b){return a;}")
        fn = ast.nodes[ast.nodes[ast.root].children[0]]
        assert [ast.nodes[c].kind for c in fn.children] == ["param", "param", "block"]

    def test_precedence(self):
        ast = parse("int f(){x = 1 + 2 * 3;}")
        stmt = ast.nodes[4]  # root->fn->block->expr_stmt->assign
        assert stmt.kind == "assign_op"
        add = ast.nodes[stmt.children[1]]
        assert add.kind == "add_op"
        assert ast.nodes[add.children[1]].kind == "mul_op"

    def test_syntax_error_reports_position_and_expectation(self):
        with pytest.raises(ParseError, match=r"expected ';'.*at 1:17"):
            parse("int f(){return 0}")

    def test_invalid_assignment_target(self):
        with pytest.raises(ParseError, match="invalid assignment target"):
            parse("int f(){1 = x;}")

    def test_identifier_names_not_retained(self):
        a = parse("int f(){alpha += 1;}")
        b = parse("int g(){beta += 1;}")
        assert structurally_equal(a, b)

    def test_else_binding(self):
        ast = parse("int f(){if(x<1){x+=1;}else{x-=1;}}")
        fn = ast.nodes[ast.nodes[ast.root].children[0]]
        block = ast.nodes[fn.children[-1]]
        cond = ast.nodes[block.children[0]]
        assert cond.kind == "if_statement"
        assert len(cond.children) == 3

    def test_call_and_index(self):
        ast = parse("int f(){g(x, a[i]);}")
        hist = tree_stats(ast).kind_histogram
        assert hist["call_expr"] == 1
        assert hist["index_expr"] == 1

    def test_emitted_kinds_are_in_vocabulary(self):
        ast = parse(
            'int f(int n){int y = 0;'
            'for(i=0;i<n;i++){while(x<10){y+=a[i];}}'
            'if(x==1&&y!=2||x<=3>=1){g("s",\'c\');}x++;return y%2/1*3-4+5;}'
        )
        for node in ast.nodes.values():
            assert node.kind in NODE_KINDS


def corpus_sources(seed, family):
    config = GenConfig(n_programs=8, seed=seed, family=family)
    return [p.source for p in generate_corpus(config)]


class TestRoundTrip:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_parse_print_parse_loopdepth(self, seed):
        for source in corpus_sources(seed, "loopdepth"):
            ast = parse(source)
            again = parse(print_source(ast))
            assert structurally_equal(ast, again)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_generated_kinds_stay_in_vocabulary(self, seed):
        for source in corpus_sources(seed, "statements"):
            for node in parse(source).nodes.values():
                assert node.kind in NODE_KINDS
