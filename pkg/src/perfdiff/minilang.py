"""Tokenizer and parser for a small C-like language.

The parser emits trees in the shared Ast type, already normalized
(synthetic root over the unit's function definitions). Identifier names
and literal values are deliberately discarded: node kinds carry structure
only. The full grammar lives in docs/grammar.md; the emitted node kinds
are the fixed, versioned vocabulary in NODE_KINDS.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from perfdiff.ast import Ast, AstNode, FUNCTION_DEF_KIND, ROOT_KIND, make_ast
from perfdiff.errors import LexError, ParseError

VOCAB_VERSION = 1

# One kind per grammar production. Additions require a version bump.
NODE_KINDS = (
    ROOT_KIND,
    FUNCTION_DEF_KIND,
    "param",
    "block",
    "if_statement",
    "for_statement",
    "while_statement",
    "return_statement",
    "declaration",
    "expression_statement",
    "assign_op",
    "plus_assign_op",
    "minus_assign_op",
    "logical_or_op",
    "logical_and_op",
    "eq_op",
    "neq_op",
    "lt_op",
    "gt_op",
    "le_op",
    "ge_op",
    "add_op",
    "sub_op",
    "mul_op",
    "div_op",
    "mod_op",
    "increment_op",
    "call_expr",
    "index_expr",
    "identifier",
    "int_literal",
    "string_literal",
    "char_literal",
)

KEYWORDS = frozenset({"int", "void", "char", "if", "else", "for", "while", "return"})
TYPE_KEYWORDS = frozenset({"int", "void", "char"})

_MULTI_OPS = ("++", "+=", "-=", "<=", ">=", "==", "!=", "&&", "||")
_SINGLE_OPS = frozenset("=+-*/%<>")
_PUNCTUATION = frozenset("(){}[];,")

_BINARY_KINDS = {
    "||": "logical_or_op",
    "&&": "logical_and_op",
    "==": "eq_op",
    "!=": "neq_op",
    "<": "lt_op",
    ">": "gt_op",
    "<=": "le_op",
    ">=": "ge_op",
    "+": "add_op",
    "-": "sub_op",
    "*": "mul_op",
    "/": "div_op",
    "%": "mod_op",
}
_ASSIGN_KINDS = {"=": "assign_op", "+=": "plus_assign_op", "-=": "minus_assign_op"}


class TokenKind(enum.Enum):
    KEYWORD = "keyword"
    IDENTIFIER = "identifier"
    INT_LITERAL = "int_literal"
    STRING_LITERAL = "string_literal"
    CHAR_LITERAL = "char_literal"
    OPERATOR = "operator"
    PUNCTUATION = "punctuation"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    """Split source into tokens, stripping whitespace and comments."""
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(source)

    def advance(count: int) -> None:
        nonlocal i, line, col
        for _ in range(count):
            if source[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = source[i]
        if ch.isspace():
            advance(1)
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                advance(1)
            continue
        if source.startswith("/*", i):
            start_line, start_col = line, col
            advance(2)
            while i < n and not source.startswith("*/", i):
                advance(1)
            if i >= n:
                raise LexError("unterminated block comment", start_line, start_col)
            advance(2)
            continue

        start_line, start_col = line, col
        if ch.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            text = source[i:j]
            advance(j - i)
            tokens.append(Token(TokenKind.INT_LITERAL, text, start_line, start_col))
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            advance(j - i)
            kind = TokenKind.KEYWORD if text in KEYWORDS else TokenKind.IDENTIFIER
            tokens.append(Token(kind, text, start_line, start_col))
            continue
        if ch == '"' or ch == "'":
            quote = ch
            j = i + 1
            while j < n and source[j] != quote:
                if source[j] == "\n":
                    break
                j += 2 if source[j] == "\\" else 1
            if j >= n or source[j] != quote:
                what = "string" if quote == '"' else "char"
                raise LexError(f"unterminated {what} literal", start_line, start_col)
            text = source[i : j + 1]
            advance(j + 1 - i)
            kind = (
                TokenKind.STRING_LITERAL if quote == '"' else TokenKind.CHAR_LITERAL
            )
            tokens.append(Token(kind, text, start_line, start_col))
            continue
        multi = next((op for op in _MULTI_OPS if source.startswith(op, i)), None)
        if multi is not None:
            advance(len(multi))
            tokens.append(Token(TokenKind.OPERATOR, multi, start_line, start_col))
            continue
        if ch in _SINGLE_OPS:
            advance(1)
            tokens.append(Token(TokenKind.OPERATOR, ch, start_line, start_col))
            continue
        if ch in _PUNCTUATION:
            advance(1)
            tokens.append(Token(TokenKind.PUNCTUATION, ch, start_line, start_col))
            continue
        raise LexError(f"unexpected character {ch!r}", start_line, start_col)

    return tokens


@dataclass
class _Node:
    """Parser-internal tree; flattened into Ast ids afterwards."""

    kind: str
    children: list["_Node"]


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.end_line, self.end_col = (
            (tokens[-1].line, tokens[-1].col + len(tokens[-1].text))
            if tokens
            else (1, 1)
        )

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def error(self, expected: str) -> ParseError:
        tok = self.peek()
        if tok is None:
            return ParseError(
                f"expected {expected}, found end of input", self.end_line, self.end_col
            )
        return ParseError(f"expected {expected}, found {tok.text!r}", tok.line, tok.col)

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(repr(text))
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_identifier(self) -> Token:
        tok = self.peek()
        if tok is None or tok.kind is not TokenKind.IDENTIFIER:
            raise self.error("identifier")
        self.pos += 1
        return tok

    def expect_type(self) -> Token:
        tok = self.peek()
        if tok is None or tok.text not in TYPE_KEYWORDS:
            raise self.error("type name")
        self.pos += 1
        return tok

    # --- declarations -------------------------------------------------

    def parse_unit(self) -> list[_Node]:
        functions = []
        seen: set[str] = set()
        while self.peek() is not None:
            fn, name = self.function_def()
            if name in seen:
                tok = self.tokens[self.pos - 1]
                raise ParseError(f"duplicate function {name}", tok.line, tok.col)
            seen.add(name)
            functions.append(fn)
        if not functions:
            raise ParseError("expected function definition, found end of input", 1, 1)
        return functions

    def function_def(self) -> tuple[_Node, str]:
        self.expect_type()
        name = self.expect_identifier().text
        self.expect("(")
        params: list[_Node] = []
        if not self.at(")"):
            while True:
                self.expect_type()
                self.expect_identifier()
                params.append(_Node("param", []))
                if not self.accept(","):
                    break
        self.expect(")")
        body = self.block()
        return _Node(FUNCTION_DEF_KIND, params + [body]), name

    # --- statements ---------------------------------------------------

    def block(self) -> _Node:
        self.expect("{")
        statements = []
        while not self.at("}"):
            if self.peek() is None:
                raise self.error("'}'")
            statements.append(self.statement())
        self.expect("}")
        return _Node("block", statements)

    def statement(self) -> _Node:
        tok = self.peek()
        if tok is None:
            raise self.error("statement")
        if tok.text == "{":
            return self.block()
        if tok.text == "if":
            return self.if_statement()
        if tok.text == "for":
            return self.for_statement()
        if tok.text == "while":
            return self.while_statement()
        if tok.text == "return":
            return self.return_statement()
        if tok.text in TYPE_KEYWORDS:
            decl = self.declaration()
            self.expect(";")
            return decl
        expr = self.expression()
        self.expect(";")
        return _Node("expression_statement", [expr])

    def declaration(self) -> _Node:
        self.expect_type()
        self.expect_identifier()
        children = []
        if self.accept("="):
            children.append(self.expression())
        return _Node("declaration", children)

    def if_statement(self) -> _Node:
        self.expect("if")
        self.expect("(")
        cond = self.expression()
        self.expect(")")
        then = self.statement()
        children = [cond, then]
        if self.accept("else"):
            children.append(self.statement())
        return _Node("if_statement", children)

    def for_statement(self) -> _Node:
        self.expect("for")
        self.expect("(")
        tok = self.peek()
        if tok is not None and tok.text in TYPE_KEYWORDS:
            init = self.declaration()
        else:
            init = self.expression()
        self.expect(";")
        cond = self.expression()
        self.expect(";")
        step = self.expression()
        self.expect(")")
        body = self.statement()
        return _Node("for_statement", [init, cond, step, body])

    def while_statement(self) -> _Node:
        self.expect("while")
        self.expect("(")
        cond = self.expression()
        self.expect(")")
        body = self.statement()
        return _Node("while_statement", [cond, body])

    def return_statement(self) -> _Node:
        self.expect("return")
        children = [] if self.at(";") else [self.expression()]
        self.expect(";")
        return _Node("return_statement", children)

    # --- expressions (standard C precedence, low to high) --------------

    def expression(self) -> _Node:
        return self.assignment()

    def assignment(self) -> _Node:
        left = self.binary(0)
        tok = self.peek()
        if tok is not None and tok.text in _ASSIGN_KINDS:
            if left.kind not in ("identifier", "index_expr"):
                raise ParseError("invalid assignment target", tok.line, tok.col)
            self.pos += 1
            right = self.assignment()
            return _Node(_ASSIGN_KINDS[tok.text], [left, right])
        return left

    _PRECEDENCE = (
        ("||",),
        ("&&",),
        ("==", "!="),
        ("<", ">", "<=", ">="),
        ("+", "-"),
        ("*", "/", "%"),
    )

    def binary(self, level: int) -> _Node:
        if level == len(self._PRECEDENCE):
            return self.postfix()
        node = self.binary(level + 1)
        ops = self._PRECEDENCE[level]
        while True:
            tok = self.peek()
            if tok is None or tok.kind is not TokenKind.OPERATOR or tok.text not in ops:
                return node
            self.pos += 1
            rhs = self.binary(level + 1)
            node = _Node(_BINARY_KINDS[tok.text], [node, rhs])

    def postfix(self) -> _Node:
        node = self.primary()
        while True:
            if self.accept("("):
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.expression())
                        if not self.accept(","):
                            break
                self.expect(")")
                node = _Node("call_expr", [node] + args)
            elif self.accept("["):
                index = self.expression()
                self.expect("]")
                node = _Node("index_expr", [node, index])
            elif self.accept("++"):
                node = _Node("increment_op", [node])
            else:
                return node

    def primary(self) -> _Node:
        tok = self.peek()
        if tok is None:
            raise self.error("expression")
        if tok.kind is TokenKind.INT_LITERAL:
            self.pos += 1
            return _Node("int_literal", [])
        if tok.kind is TokenKind.STRING_LITERAL:
            self.pos += 1
            return _Node("string_literal", [])
        if tok.kind is TokenKind.CHAR_LITERAL:
            self.pos += 1
            return _Node("char_literal", [])
        if tok.kind is TokenKind.IDENTIFIER:
            self.pos += 1
            return _Node("identifier", [])
        if self.accept("("):
            inner = self.expression()
            self.expect(")")
            return inner
        raise self.error("expression")


def parse(source: str, source_id: str = "") -> Ast:
    """Parse a source unit into a normalized Ast (root over functions)."""
    parser = _Parser(tokenize(source))
    functions = parser.parse_unit()

    flat: list[AstNode] = []

    def flatten(node: _Node) -> int:
        nid = len(flat)
        flat.append(AstNode(id=nid, kind=node.kind))  # patched below
        kids = tuple(flatten(c) for c in node.children)
        flat[nid] = AstNode(id=nid, kind=node.kind, children=kids)
        return nid

    root = _Node(ROOT_KIND, functions)
    flatten(root)
    return make_ast(flat, root=0, source_id=source_id)


def print_source(ast: Ast) -> str:
    """Emit compilable placeholder source for a normalized tree.

    Names and literal values were discarded at parse time, so the printer
    substitutes canonical placeholders; round-tripping through parse()
    reproduces the tree structure exactly.
    """
    out: list[str] = []
    fn_count = 0

    def expr(nid: int) -> str:
        node = ast.nodes[nid]
        k = node.kind
        if k == "identifier":
            return "x"
        if k == "int_literal":
            return "0"
        if k == "string_literal":
            return '"s"'
        if k == "char_literal":
            return "'c'"
        if k == "call_expr":
            callee = expr(node.children[0])
            args = ", ".join(expr(c) for c in node.children[1:])
            return f"{callee}({args})"
        if k == "index_expr":
            return f"{expr(node.children[0])}[{expr(node.children[1])}]"
        if k == "increment_op":
            return f"{expr(node.children[0])}++"
        if k in _ASSIGN_KINDS.values():
            op = next(t for t, kk in _ASSIGN_KINDS.items() if kk == k)
            return f"{expr(node.children[0])} {op} {expr(node.children[1])}"
        op = next(t for t, kk in _BINARY_KINDS.items() if kk == k)
        return f"({expr(node.children[0])} {op} {expr(node.children[1])})"

    def stmt(nid: int, indent: int) -> None:
        node = ast.nodes[nid]
        pad = "    " * indent
        k = node.kind
        if k == "block":
            out.append(pad + "{")
            for c in node.children:
                stmt(c, indent + 1)
            out.append(pad + "}")
        elif k == "declaration":
            init = f" = {expr(node.children[0])}" if node.children else ""
            out.append(f"{pad}int x{init};")
        elif k == "expression_statement":
            out.append(f"{pad}{expr(node.children[0])};")
        elif k == "return_statement":
            value = f" {expr(node.children[0])}" if node.children else ""
            out.append(f"{pad}return{value};")
        elif k == "if_statement":
            out.append(f"{pad}if ({expr(node.children[0])})")
            stmt(node.children[1], indent + 1)
            if len(node.children) == 3:
                out.append(pad + "else")
                stmt(node.children[2], indent + 1)
        elif k == "while_statement":
            out.append(f"{pad}while ({expr(node.children[0])})")
            stmt(node.children[1], indent + 1)
        elif k == "for_statement":
            init_node = ast.nodes[node.children[0]]
            if init_node.kind == "declaration":
                init = "int x" + (
                    f" = {expr(init_node.children[0])}" if init_node.children else ""
                )
            else:
                init = expr(node.children[0])
            cond = expr(node.children[1])
            step = expr(node.children[2])
            out.append(f"{pad}for ({init}; {cond}; {step})")
            stmt(node.children[3], indent + 1)
        else:
            raise ValueError(f"unprintable statement kind {k!r}")

    def function(nid: int) -> None:
        nonlocal fn_count
        node = ast.nodes[nid]
        params = ", ".join(
            f"int p{i}" for i, c in enumerate(node.children[:-1])
        )
        out.append(f"int f{fn_count}({params})")
        fn_count += 1
        stmt(node.children[-1], 0)

    root = ast.nodes[ast.root]
    if root.kind != ROOT_KIND:
        raise ValueError("print_source expects a normalized tree")
    for child in root.children:
        function(child)
    return "\n".join(out) + "\n"
