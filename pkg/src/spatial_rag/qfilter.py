"""Attribute filter expressions in the ``price>=10;price<=20`` style.

Grammar (``;`` = AND binds tighter than ``|`` = OR, parentheses group)::

    expr       := or_expr
    or_expr    := and_expr ('|' and_expr)*
    and_expr   := unit (';' unit)*
    unit       := '(' expr ')' | comparison
    comparison := attribute op literal
    op         := '==' | '!=' | '<=' | '>=' | '<' | '>'
    literal    := number | 'true' | 'false' | quoted string | bare word

Evaluation semantics:

* every comparison over an attribute the entity does not carry is false,
  including ``!=`` (negation only applies when the attribute exists);
* ``==`` against a list value means membership, ``!=`` means the attribute
  exists and the literal is not a member;
* ordering comparisons work number-vs-number or string-vs-string; a numeric
  literal ordered against a string value is a silent no-match, while a string
  literal ordered against a numeric value raises :class:`TypeMismatch`.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Union

from .entities import Entity

OPERATORS = ("==", "!=", "<=", ">=", "<", ">")


class InvalidFilter(ValueError):
    """The filter text does not follow the grammar."""


class TypeMismatch(TypeError):
    """A comparison was asked between incompatible operand types."""


@dataclass(frozen=True)
class Comparison:
    attribute: str
    op: str
    literal: Union[int, float, str, bool]

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise InvalidFilter(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class And:
    parts: tuple  # Comparison | Or, at least two

    def __post_init__(self):
        if len(self.parts) < 2:
            raise InvalidFilter("AND needs at least two operands")


@dataclass(frozen=True)
class Or:
    parts: tuple  # Comparison | And, at least two

    def __post_init__(self):
        if len(self.parts) < 2:
            raise InvalidFilter("OR needs at least two operands")


QFilterExpr = Union[Comparison, And, Or]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<lparen>\() | (?P<rparen>\))
  | (?P<and>;) | (?P<or>\|)
  | (?P<op>==|!=|<=|>=|<|>)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<word>[A-Za-z_][A-Za-z0-9_.:-]*)
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise InvalidFilter(f"unexpected character {text[pos]!r} at position {pos}")
        kind = match.lastgroup
        if kind != "ws":
            tokens.append((kind, match.group(), pos))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.index = 0

    def peek(self):
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def take(self, kind: Optional[str] = None):
        token = self.peek()
        if token is None:
            raise InvalidFilter("unexpected end of filter")
        if kind is not None and token[0] != kind:
            raise InvalidFilter(f"expected {kind} at position {token[2]}, got {token[1]!r}")
        self.index += 1
        return token

    def parse(self) -> QFilterExpr:
        expr = self.or_expr()
        leftover = self.peek()
        if leftover is not None:
            raise InvalidFilter(f"trailing input at position {leftover[2]}: {leftover[1]!r}")
        return expr

    def or_expr(self):
        parts = [self.and_expr()]
        while self.peek() is not None and self.peek()[0] == "or":
            self.take("or")
            parts.append(self.and_expr())
        if len(parts) == 1:
            return parts[0]
        return Or(tuple(parts))

    def and_expr(self):
        parts = [self.unit()]
        while self.peek() is not None and self.peek()[0] == "and":
            self.take("and")
            parts.append(self.unit())
        if len(parts) == 1:
            return parts[0]
        return And(tuple(parts))

    def unit(self):
        token = self.peek()
        if token is None:
            raise InvalidFilter("unexpected end of filter")
        if token[0] == "lparen":
            self.take("lparen")
            inner = self.or_expr()
            self.take("rparen")
            return inner
        return self.comparison()

    def comparison(self) -> Comparison:
        attr = self.take("word")[1]
        op = self.take("op")[1]
        token = self.take()
        kind, text, pos = token
        if kind == "number":
            literal = float(text) if any(c in text for c in ".eE") else int(text)
        elif kind == "string":
            try:
                literal = json.loads(text)
            except json.JSONDecodeError:
                raise InvalidFilter(f"bad string literal at position {pos}") from None
        elif kind == "word":
            if text == "true":
                literal = True
            elif text == "false":
                literal = False
            else:
                literal = text
        else:
            raise InvalidFilter(f"expected a literal at position {pos}, got {text!r}")
        return Comparison(attr, op, literal)


def parse_q(text: str) -> Optional[QFilterExpr]:
    """Parse filter text; empty or whitespace-only input means "match all"."""
    if text is None or not text.strip():
        return None
    return _Parser(_tokenize(text)).parse()


_MISSING = object()


def _lookup(entity: Entity, attribute: str):
    pv = entity.properties.get(attribute)
    if pv is not None:
        return pv.value
    target = entity.relationships.get(attribute)
    if target is not None:
        return target
    return _MISSING


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _equal(value, literal) -> bool:
    if isinstance(value, tuple):
        return any(_equal(item, literal) for item in value)
    if isinstance(value, bool) or isinstance(literal, bool):
        return isinstance(value, bool) and isinstance(literal, bool) and value == literal
    if _is_number(value) and _is_number(literal):
        return float(value) == float(literal)
    if isinstance(value, str) and isinstance(literal, str):
        return value == literal
    return False


def _ordered(op: str, value, literal) -> bool:
    if isinstance(value, tuple) or isinstance(value, bool) or isinstance(literal, bool):
        return False
    if _is_number(literal):
        if not _is_number(value):
            return False  # e.g. a numeric bound against a free-text price
        left, right = float(value), float(literal)
    elif isinstance(literal, str):
        if not isinstance(value, str):
            raise TypeMismatch(
                f"cannot order {type(value).__name__} value against string literal {literal!r}"
            )
        left, right = value, literal
    else:
        return False
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


def _compare(op: str, value, literal) -> bool:
    if op == "==":
        return _equal(value, literal)
    if op == "!=":
        return not _equal(value, literal)
    return _ordered(op, value, literal)


def evaluate(expr: Optional[QFilterExpr], entity: Entity) -> bool:
    """Evaluate a parsed filter against one entity. ``None`` matches all."""
    if expr is None:
        return True
    if isinstance(expr, Comparison):
        value = _lookup(entity, expr.attribute)
        if value is _MISSING:
            return False
        return _compare(expr.op, value, expr.literal)
    if isinstance(expr, And):
        return all(evaluate(part, entity) for part in expr.parts)
    if isinstance(expr, Or):
        return any(evaluate(part, entity) for part in expr.parts)
    raise TypeError(f"not a filter expression: {expr!r}")


_BARE_WORD_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.:-]*$")


def _literal_text(literal) -> str:
    if isinstance(literal, bool):
        return "true" if literal else "false"
    if isinstance(literal, (int, float)):
        return repr(literal)
    if _BARE_WORD_RE.match(literal) and literal not in ("true", "false"):
        return literal
    return json.dumps(literal, ensure_ascii=False)


def unparse(expr: Optional[QFilterExpr]) -> str:
    """Render an expression back to filter text that reparses to it."""
    if expr is None:
        return ""
    if isinstance(expr, Comparison):
        return f"{expr.attribute}{expr.op}{_literal_text(expr.literal)}"
    if isinstance(expr, And):
        rendered = []
        for part in expr.parts:
            text = unparse(part)
            rendered.append(f"({text})" if isinstance(part, Or) else text)
        return ";".join(rendered)
    if isinstance(expr, Or):
        return "|".join(unparse(part) for part in expr.parts)
    raise TypeError(f"not a filter expression: {expr!r}")
