"""Condition -> action automation language.

Grammar (see docs/GRAMMAR.md):

    rule <ident>: when <expr> then <action> {, <action>}
    expr   := or_expr
    or_expr  := and_expr { "or" and_expr }
    and_expr := unary { "and" unary }
    unary    := "not" unary | "(" expr ")" | comparison
    comparison := ident "." ident op literal
    action := "set" ident "." ident "=" literal
    op     := = | != | < | <= | > | >=
    literal := true | false | number[unit] | "string"

Precedence: not > and > or.  `#` starts a line comment.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .domain import (
    AttributeValue,
    DeviceKind,
    UNIT_CELSIUS,
    UNIT_NONE,
    UNIT_PERCENT,
    UNIT_PPM,
    attribute_spec,
    compare_values,
)

KEYWORDS = {"rule", "when", "then", "set", "and", "or", "not", "true", "false"}
COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")
_UNIT_SUFFIXES = {"C": UNIT_CELSIUS, "%": UNIT_PERCENT, "ppm": UNIT_PPM}


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, expected: tuple[str, ...] = ()):
        self.line = line
        self.col = col
        self.expected = expected
        suffix = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{line}:{col}: {message}{suffix}")


class RuleTypeError(Exception):
    """One or more type violations collected during typecheck."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


class EvalError(Exception):
    pass


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Comparison:
    device: str
    attribute: str
    op: str
    literal: AttributeValue
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class NotExpr:
    operand: "Expr"


@dataclass(frozen=True)
class AndExpr:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class OrExpr:
    left: "Expr"
    right: "Expr"


Expr = Union[Comparison, NotExpr, AndExpr, OrExpr]


@dataclass(frozen=True)
class SetAction:
    device: str
    attribute: str
    value: AttributeValue
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class RuleAst:
    name: str
    condition: Expr
    actions: tuple[SetAction, ...]
    enabled: bool = True


# ---------------------------------------------------------------------------
# Lexer

@dataclass(frozen=True)
class Token:
    type: str  # IDENT NUMBER STRING OP PUNCT KEYWORD EOF
    value: object
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?(?P<unit>ppm|C|%)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<op><=|>=|!=|=|<|>)
  | (?P<punct>[:.,()])
    """,
    re.VERBOSE,
)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        col = pos - line_start + 1
        pos = m.end()
        if m.group("ws") or m.group("comment"):
            continue
        if m.group("newline"):
            line += 1
            line_start = pos
            continue
        if m.group("number"):
            unit = _UNIT_SUFFIXES.get(m.group("unit") or "", UNIT_NONE)
            num_text = m.group("number")
            if m.group("unit"):
                num_text = num_text[: -len(m.group("unit"))]
            tokens.append(Token("NUMBER", AttributeValue(float(num_text), unit), line, col))
        elif m.group("ident"):
            word = m.group("ident")
            ttype = "KEYWORD" if word in KEYWORDS else "IDENT"
            tokens.append(Token(ttype, word, line, col))
        elif m.group("string"):
            tokens.append(Token("STRING", json.loads(m.group("string")), line, col))
        elif m.group("op"):
            tokens.append(Token("OP", m.group("op"), line, col))
        else:
            tokens.append(Token("PUNCT", m.group("punct"), line, col))
    end_col = pos - line_start + 1
    tokens.append(Token("EOF", None, line, end_col))
    return tokens


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.current
        self.pos += 1
        return tok

    def fail(self, *expected: str):
        tok = self.current
        what = "end of input" if tok.type == "EOF" else repr(tok.value)
        raise ParseError(f"unexpected {what}", tok.line, tok.col, expected)

    def expect(self, ttype: str, value=None) -> Token:
        tok = self.current
        if tok.type != ttype or (value is not None and tok.value != value):
            self.fail(value if value is not None else ttype)
        return self.advance()

    def at_keyword(self, word: str) -> bool:
        return self.current.type == "KEYWORD" and self.current.value == word

    def parse_file(self) -> list[RuleAst]:
        rules = []
        seen: set[str] = set()
        while self.current.type != "EOF":
            rule = self.parse_rule()
            if rule.name in seen:
                tok = self.tokens[0]
                raise ParseError(f"duplicate rule name {rule.name!r}", tok.line, tok.col)
            seen.add(rule.name)
            rules.append(rule)
        return rules

    def parse_rule(self) -> RuleAst:
        self.expect("KEYWORD", "rule")
        name = self.expect("IDENT").value
        self.expect("PUNCT", ":")
        self.expect("KEYWORD", "when")
        condition = self.parse_or()
        self.expect("KEYWORD", "then")
        actions = [self.parse_action()]
        while self.current.type == "PUNCT" and self.current.value == ",":
            self.advance()
            actions.append(self.parse_action())
        return RuleAst(name, condition, tuple(actions))

    def parse_or(self) -> Expr:
        left = self.parse_and()
        while self.at_keyword("or"):
            self.advance()
            left = OrExpr(left, self.parse_and())
        return left

    def parse_and(self) -> Expr:
        left = self.parse_unary()
        while self.at_keyword("and"):
            self.advance()
            left = AndExpr(left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at_keyword("not"):
            self.advance()
            return NotExpr(self.parse_unary())
        if self.current.type == "PUNCT" and self.current.value == "(":
            self.advance()
            expr = self.parse_or()
            self.expect("PUNCT", ")")
            return expr
        return self.parse_comparison()

    def parse_comparison(self) -> Comparison:
        tok = self.current
        device = self.expect("IDENT").value
        self.expect("PUNCT", ".")
        attribute = self.expect("IDENT").value
        op_tok = self.current
        if op_tok.type != "OP":
            self.fail(*COMPARISON_OPS)
        self.advance()
        literal = self.parse_literal()
        return Comparison(device, attribute, op_tok.value, literal, pos=(tok.line, tok.col))

    def parse_action(self) -> SetAction:
        tok = self.current
        self.expect("KEYWORD", "set")
        device = self.expect("IDENT").value
        self.expect("PUNCT", ".")
        attribute = self.expect("IDENT").value
        self.expect("OP", "=")
        value = self.parse_literal()
        return SetAction(device, attribute, value, pos=(tok.line, tok.col))

    def parse_literal(self) -> AttributeValue:
        tok = self.current
        if tok.type == "KEYWORD" and tok.value in ("true", "false"):
            self.advance()
            return AttributeValue(tok.value == "true")
        if tok.type == "NUMBER":
            self.advance()
            return tok.value
        if tok.type == "STRING":
            self.advance()
            return AttributeValue(tok.value)
        self.fail("true", "false", "number", "string")


def parse_rule(text: str) -> RuleAst:
    """Parse exactly one rule definition."""
    parser = _Parser(tokenize(text))
    rule = parser.parse_rule()
    if parser.current.type != "EOF":
        parser.fail("end of input")
    return rule


def parse_rules(text: str) -> list[RuleAst]:
    """Parse a rules file (zero or more rule blocks, # comments)."""
    return _Parser(tokenize(text)).parse_file()


# ---------------------------------------------------------------------------
# Typecheck

def _check_ref(errors: list[str], rule: str, directory: dict[str, DeviceKind],
               device: str, attribute: str, pos, want_writable: bool) -> Optional[object]:
    line, col = pos
    if device not in directory:
        errors.append(f"rule {rule} at {line}:{col}: unknown device {device!r}")
        return None
    try:
        spec = attribute_spec(directory[device], attribute)
    except KeyError:
        errors.append(
            f"rule {rule} at {line}:{col}: device {device!r} has no attribute {attribute!r}"
        )
        return None
    if want_writable and not spec.writable:
        errors.append(f"rule {rule} at {line}:{col}: {device}.{attribute} is read-only")
        return None
    return spec


def _typecheck_expr(errors: list[str], rule: str, directory, expr: Expr):
    if isinstance(expr, Comparison):
        spec = _check_ref(errors, rule, directory, expr.device, expr.attribute,
                          expr.pos, want_writable=False)
        if spec is None:
            return
        line, col = expr.pos
        lit = expr.literal
        if lit.tag != spec.value_type:
            errors.append(
                f"rule {rule} at {line}:{col}: {expr.device}.{expr.attribute} is "
                f"{spec.value_type}, compared with {lit.tag}"
            )
        elif lit.tag == "number" and lit.unit != spec.unit:
            errors.append(
                f"rule {rule} at {line}:{col}: unit mismatch on {expr.device}."
                f"{expr.attribute}: {spec.unit} vs {lit.unit}"
            )
        elif lit.tag != "number" and expr.op not in ("=", "!="):
            errors.append(
                f"rule {rule} at {line}:{col}: operator {expr.op!r} not defined "
                f"for {lit.tag} values"
            )
    elif isinstance(expr, NotExpr):
        _typecheck_expr(errors, rule, directory, expr.operand)
    else:
        _typecheck_expr(errors, rule, directory, expr.left)
        _typecheck_expr(errors, rule, directory, expr.right)


def typecheck_rule(ast: RuleAst, directory: dict[str, DeviceKind]):
    """Validate one rule against the device directory; raises RuleTypeError
    carrying every violation, not just the first."""
    errors: list[str] = []
    _typecheck_expr(errors, ast.name, directory, ast.condition)
    for action in ast.actions:
        spec = _check_ref(errors, ast.name, directory, action.device, action.attribute,
                          action.pos, want_writable=True)
        if spec is None:
            continue
        line, col = action.pos
        if action.value.tag != spec.value_type or (
            action.value.tag == "number" and action.value.unit != spec.unit
        ):
            errors.append(
                f"rule {ast.name} at {line}:{col}: cannot assign {action.value.tag} "
                f"to {action.device}.{action.attribute} ({spec.value_type})"
            )
    if errors:
        raise RuleTypeError(errors)


def typecheck_rules(rules: list[RuleAst], directory: dict[str, DeviceKind]):
    errors: list[str] = []
    for rule in rules:
        try:
            typecheck_rule(rule, directory)
        except RuleTypeError as e:
            errors.extend(e.errors)
    if errors:
        raise RuleTypeError(errors)


# ---------------------------------------------------------------------------
# Evaluation

WorldSnapshot = dict[tuple[str, str], AttributeValue]


def eval_condition(expr: Expr, snapshot: WorldSnapshot) -> bool:
    if isinstance(expr, Comparison):
        key = (expr.device, expr.attribute)
        if key not in snapshot:
            raise EvalError(f"snapshot has no value for {expr.device}.{expr.attribute}")
        return compare_values(snapshot[key], expr.literal, expr.op)
    if isinstance(expr, NotExpr):
        return not eval_condition(expr.operand, snapshot)
    if isinstance(expr, AndExpr):
        return eval_condition(expr.left, snapshot) and eval_condition(expr.right, snapshot)
    return eval_condition(expr.left, snapshot) or eval_condition(expr.right, snapshot)


def evaluate_all(rules: list[RuleAst], snapshot: WorldSnapshot
                 ) -> tuple[list[tuple[str, SetAction]], list[tuple[str, SetAction]]]:
    """Level-triggered pass over all enabled rules.

    Returns (commands, shadowed), both as (rule_name, action) pairs: commands
    deduplicated last-writer-wins per (device, attribute); shadowed lists the
    overwritten actions for audit logging.  Per-rule evaluation errors skip
    that rule.
    """
    emitted: list[tuple[str, SetAction]] = []
    for rule in rules:
        if not rule.enabled:
            continue
        try:
            if eval_condition(rule.condition, snapshot):
                emitted.extend((rule.name, a) for a in rule.actions)
        except EvalError:
            continue
    last_writer: dict[tuple[str, str], int] = {}
    for i, (_, action) in enumerate(emitted):
        last_writer[(action.device, action.attribute)] = i
    commands: list[tuple[str, SetAction]] = []
    shadowed: list[tuple[str, SetAction]] = []
    for i, (rule_name, action) in enumerate(emitted):
        if last_writer[(action.device, action.attribute)] == i:
            commands.append((rule_name, action))
        else:
            shadowed.append((rule_name, action))
    return commands, shadowed


# ---------------------------------------------------------------------------
# Formatter

def _format_literal(value: AttributeValue) -> str:
    if value.tag == "bool":
        return "true" if value.value else "false"
    if value.tag == "string":
        return json.dumps(value.value)
    text = repr(value.value)
    suffix = {v: k for k, v in _UNIT_SUFFIXES.items()}.get(value.unit, "")
    return text + suffix


_PREC = {OrExpr: 1, AndExpr: 2, NotExpr: 3, Comparison: 4}


def _format_expr(expr: Expr, parent_prec: int = 0) -> str:
    prec = _PREC[type(expr)]
    if isinstance(expr, Comparison):
        text = f"{expr.device}.{expr.attribute} {expr.op} {_format_literal(expr.literal)}"
    elif isinstance(expr, NotExpr):
        text = f"not {_format_expr(expr.operand, prec)}"
    elif isinstance(expr, AndExpr):
        # left-associative: right child needs parens at equal precedence
        text = f"{_format_expr(expr.left, prec)} and {_format_expr(expr.right, prec + 1)}"
    else:
        text = f"{_format_expr(expr.left, prec)} or {_format_expr(expr.right, prec + 1)}"
    return f"({text})" if prec < parent_prec else text


def format_rule(ast: RuleAst) -> str:
    """Canonical text such that parse_rule(format_rule(a)) == a."""
    actions = ", ".join(
        f"set {a.device}.{a.attribute} = {_format_literal(a.value)}" for a in ast.actions
    )
    return f"rule {ast.name}: when {_format_expr(ast.condition)} then {actions}"


# ---------------------------------------------------------------------------
# Standard automation pack (thermostat, fire safety, lawn water, motion)

STANDARD_PACK = """\
# temperature control
rule ac_on: when thermostat.temperature > 28.0C then set ac.on = true
rule ac_off: when thermostat.temperature <= 27.0C then set ac.on = false
rule furnace_on: when thermostat.temperature < 18.0C then set furnace.on = true
rule furnace_off: when thermostat.temperature >= 19.0C then set furnace.on = false

# fire safety
rule fire_response: when fire_monitor.fire = true or smoke_detector.smoke = true then set fire_sprinkler.on = true, set siren.on = true, set window.open = true
rule fire_clear: when fire_monitor.fire = false and smoke_detector.smoke = false then set fire_sprinkler.on = false, set siren.on = false, set window.open = false

# lawn watering
rule lawn_on: when water_level_monitor.level < 33.0% then set lawn_sprinkler.on = true
rule lawn_off: when water_level_monitor.level > 66.0% then set lawn_sprinkler.on = false

# motion response (the engine turns light/webcam off when the motion window lapses)
rule motion_on: when motion_detector.motion = true then set light.on = true, set webcam.recording = true
"""


def standard_pack() -> list[RuleAst]:
    return parse_rules(STANDARD_PACK)
