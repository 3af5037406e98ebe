"""Branching condition language: parser and strict-typed evaluator.

Grammar (keywords are case-sensitive upper-case ASCII):

    expr    := or
    or      := and ("OR" and)*
    and     := unary ("AND" unary)*
    unary   := "NOT" unary | "(" expr ")" | cmp
    cmp     := operand op operand
    op      := == | != | < | <= | > | >= | CONTAINS | IN
    operand := variable-ref | literal

Literals: double-quoted strings, integers, floats, true/false, and
bracketed lists of literals. Variable references use the ``__name__``
delimiter convention shared with command interpolation.
"""

import re
from dataclasses import dataclass

from ..errors import ConditionSyntaxError, TypeMismatchError, UnboundVariableError

_VAR_RE = re.compile(r"__[a-z0-9_-]{1,64}?__")
_NUM_RE = re.compile(r"-?[0-9]+(\.[0-9]+)?")

COMPARISON_OPS = ("==", "!=", "<=", ">=", "<", ">", "CONTAINS", "IN")


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class Literal:
    value: object


@dataclass(frozen=True)
class Comparison:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class NotExpr:
    operand: object


@dataclass(frozen=True)
class AndExpr:
    left: object
    right: object


@dataclass(frozen=True)
class OrExpr:
    left: object
    right: object


@dataclass(frozen=True)
class _Token:
    kind: str  # op, keyword, var, string, number, boolean, lparen, rparen, lbracket, rbracket, comma, eof
    text: str
    value: object
    pos: int


def _lex(source: str):
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            i += 1
            continue
        if ch == "(":
            tokens.append(_Token("lparen", "(", None, i)); i += 1; continue
        if ch == ")":
            tokens.append(_Token("rparen", ")", None, i)); i += 1; continue
        if ch == "[":
            tokens.append(_Token("lbracket", "[", None, i)); i += 1; continue
        if ch == "]":
            tokens.append(_Token("rbracket", "]", None, i)); i += 1; continue
        if ch == ",":
            tokens.append(_Token("comma", ",", None, i)); i += 1; continue
        if source.startswith("==", i):
            tokens.append(_Token("op", "==", None, i)); i += 2; continue
        if source.startswith("!=", i):
            tokens.append(_Token("op", "!=", None, i)); i += 2; continue
        if source.startswith("<=", i):
            tokens.append(_Token("op", "<=", None, i)); i += 2; continue
        if source.startswith(">=", i):
            tokens.append(_Token("op", ">=", None, i)); i += 2; continue
        if ch == "<":
            tokens.append(_Token("op", "<", None, i)); i += 1; continue
        if ch == ">":
            tokens.append(_Token("op", ">", None, i)); i += 1; continue
        if ch == '"':
            j = i + 1
            out = []
            while j < n and source[j] != '"':
                if source[j] == "\\":
                    if j + 1 >= n:
                        raise ConditionSyntaxError(j, "escape character")
                    esc = source[j + 1]
                    mapped = {"\\": "\\", '"': '"', "n": "\n", "t": "\t", "r": "\r", "/": "/"}.get(esc)
                    if mapped is None:
                        raise ConditionSyntaxError(j + 1, "valid escape", repr(esc))
                    out.append(mapped)
                    j += 2
                else:
                    out.append(source[j])
                    j += 1
            if j >= n:
                raise ConditionSyntaxError(n, "closing quote")
            tokens.append(_Token("string", source[i:j + 1], "".join(out), i))
            i = j + 1
            continue
        if ch == "_":
            m = _VAR_RE.match(source, i)
            if m is None:
                raise ConditionSyntaxError(i, "variable reference")
            tokens.append(_Token("var", m.group(0), m.group(0), i))
            i = m.end()
            continue
        m = _NUM_RE.match(source, i)
        if m is not None and (ch.isdigit() or ch == "-"):
            text = m.group(0)
            value = float(text) if "." in text else int(text)
            tokens.append(_Token("number", text, value, i))
            i = m.end()
            continue
        m = re.match(r"[A-Za-z]+", source[i:])
        if m is not None:
            word = m.group(0)
            if word in ("OR", "AND", "NOT", "CONTAINS", "IN"):
                kind = "op" if word in ("CONTAINS", "IN") else "keyword"
                tokens.append(_Token(kind, word, None, i))
            elif word == "true":
                tokens.append(_Token("boolean", word, True, i))
            elif word == "false":
                tokens.append(_Token("boolean", word, False, i))
            else:
                raise ConditionSyntaxError(i, "operator or literal", repr(word))
            i += len(word)
            continue
        raise ConditionSyntaxError(i, "token", repr(ch))
    tokens.append(_Token("eof", "", None, n))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def parse(self):
        expr = self.parse_or()
        tok = self.peek()
        if tok.kind != "eof":
            raise ConditionSyntaxError(tok.pos, "end of input", repr(tok.text))
        return expr

    def parse_or(self):
        node = self.parse_and()
        while self.peek().kind == "keyword" and self.peek().text == "OR":
            self.take()
            node = OrExpr(node, self.parse_and())
        return node

    def parse_and(self):
        node = self.parse_unary()
        while self.peek().kind == "keyword" and self.peek().text == "AND":
            self.take()
            node = AndExpr(node, self.parse_unary())
        return node

    def parse_unary(self):
        tok = self.peek()
        if tok.kind == "keyword" and tok.text == "NOT":
            self.take()
            return NotExpr(self.parse_unary())
        if tok.kind == "lparen":
            self.take()
            inner = self.parse_or()
            closing = self.take()
            if closing.kind != "rparen":
                raise ConditionSyntaxError(closing.pos, "')'", repr(closing.text))
            return inner
        return self.parse_cmp()

    def parse_cmp(self):
        left = self.parse_operand()
        tok = self.take()
        if tok.kind != "op" or tok.text not in COMPARISON_OPS:
            raise ConditionSyntaxError(tok.pos, "comparison operator", repr(tok.text))
        right = self.parse_operand()
        return Comparison(tok.text, left, right)

    def parse_operand(self):
        tok = self.peek()
        if tok.kind == "var":
            self.take()
            return VarRef(tok.value)
        if tok.kind in ("string", "number", "boolean"):
            self.take()
            return Literal(tok.value)
        if tok.kind == "lbracket":
            self.take()
            items = []
            if self.peek().kind == "rbracket":
                self.take()
                return Literal(tuple(items))
            while True:
                item = self.peek()
                if item.kind not in ("string", "number", "boolean"):
                    raise ConditionSyntaxError(item.pos, "list literal element", repr(item.text))
                self.take()
                items.append(item.value)
                sep = self.take()
                if sep.kind == "rbracket":
                    return Literal(tuple(items))
                if sep.kind != "comma":
                    raise ConditionSyntaxError(sep.pos, "',' or ']'", repr(sep.text))
        raise ConditionSyntaxError(tok.pos, "operand", repr(tok.text) if tok.text else None)


def parse_condition(source: str):
    """Parse a condition source string to its AST.

    Raises ConditionSyntaxError with the character position at fault.
    """
    return _Parser(_lex(source)).parse()


def condition_variables(expr) -> set:
    """All variable names referenced by the expression."""
    if isinstance(expr, VarRef):
        return {expr.name}
    if isinstance(expr, Literal):
        return set()
    if isinstance(expr, NotExpr):
        return condition_variables(expr.operand)
    if isinstance(expr, (AndExpr, OrExpr)):
        return condition_variables(expr.left) | condition_variables(expr.right)
    if isinstance(expr, Comparison):
        return condition_variables(expr.left) | condition_variables(expr.right)
    raise TypeError(f"not a condition node: {expr!r}")


def value_type(value) -> str:
    """Type tag used by the strict comparison rules."""
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    if isinstance(value, (list, tuple)):
        return "list"
    return type(value).__name__


def _strict_eq(left, right) -> bool:
    lt, rt = value_type(left), value_type(right)
    if lt in ("integer", "float") and rt in ("integer", "float"):
        return float(left) == float(right)
    if lt != rt:
        return False
    if lt == "list":
        return len(left) == len(right) and all(_strict_eq(a, b) for a, b in zip(left, right))
    return left == right


def _compatible_eq(lt, rt) -> bool:
    numeric = ("integer", "float")
    return lt == rt or (lt in numeric and rt in numeric)


def _evaluate_cmp(op, left, right):
    lt, rt = value_type(left), value_type(right)
    if op in ("==", "!="):
        if not _compatible_eq(lt, rt):
            raise TypeMismatchError(op, lt, rt)
        result = _strict_eq(left, right)
        return result if op == "==" else not result
    if op in ("<", "<=", ">", ">="):
        numeric = lt in ("integer", "float") and rt in ("integer", "float")
        textual = lt == "string" and rt == "string"
        if not (numeric or textual):
            raise TypeMismatchError(op, lt, rt)
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        return left >= right
    if op == "CONTAINS":
        if lt == "string":
            if rt != "string":
                raise TypeMismatchError(op, lt, rt)
            return right in left
        if lt == "list":
            return any(_compatible_eq(value_type(item), rt) and _strict_eq(item, right) for item in left)
        raise TypeMismatchError(op, lt, rt)
    if op == "IN":
        if rt != "list":
            raise TypeMismatchError(op, lt, rt)
        return any(_compatible_eq(value_type(item), lt) and _strict_eq(item, left) for item in right)
    raise TypeMismatchError(op, lt, rt)


def _resolve(operand, bindings):
    if isinstance(operand, VarRef):
        if operand.name not in bindings:
            raise UnboundVariableError(operand.name)
        return bindings[operand.name]
    return operand.value


def evaluate_condition(expr, bindings) -> bool:
    """Evaluate against a name -> typed-value mapping; strict typing throughout."""
    if isinstance(expr, OrExpr):
        return evaluate_condition(expr.left, bindings) or evaluate_condition(expr.right, bindings)
    if isinstance(expr, AndExpr):
        return evaluate_condition(expr.left, bindings) and evaluate_condition(expr.right, bindings)
    if isinstance(expr, NotExpr):
        return not evaluate_condition(expr.operand, bindings)
    if isinstance(expr, Comparison):
        return _evaluate_cmp(expr.op, _resolve(expr.left, bindings), _resolve(expr.right, bindings))
    raise TypeError(f"not a boolean condition node: {expr!r}")
