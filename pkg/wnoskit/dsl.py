# wnoskit - Turn centralized network control programs into distributed solvers
# Copyright (C) 2019-2020 wnoskit contributors
#
# This file is part of wnoskit.
#
# wnoskit is free software: you can redistribute it and/or modify
# it under the terms of the GNU Lesser General Public License as published
# by the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# wnoskit is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Lesser General Public License for more details.
#
# You should have received a copy of the GNU Lesser General Public License
# along with wnoskit.  If not, see <http://www.gnu.org/licenses/>.

import logging
import math
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Set, Tuple, Union

from . import expressions as ex
from .errors import ParseError, SchemaMismatch, UnknownElement, ValidationError
from .expressions import Expression, SumOver, VarRef
from .schema import (
    DEFAULT_BOUNDS,
    NetworkSchema,
    Scope,
    VirtualElement,
    build_default_schema,
    canonical_name,
    join_path,
    read,
    split_path,
)

PROGRAMS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "programs")


class Sense(Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"


RELATIONS = {
    "<": ("le", True),
    "<=": ("le", False),
    ">": ("ge", True),
    ">=": ("ge", False),
    "==": ("eq", False),
    "le": ("le", False),
    "ge": ("ge", False),
    "eq": ("eq", False),
}

IndexSpec = Union[int, str, None]


@dataclass(frozen=True)
class VariableDecl:
    """A family of decision variables, e.g. the rate of every session

    :param name: The family name used in the program, e.g. ``'wos_x'``
    :param chain: Canonical element names from a global element down to an attribute
    :param index: One index spec per hop: an integer, ``'all'`` or ``None`` (attributes)
    :param bounds: The box every member of the family lives in
    """

    name: str
    chain: Tuple[str, ...]
    index: Tuple[IndexSpec, ...]
    bounds: Tuple[float, float]
    line: int = field(default=0, compare=False)

    @property
    def attribute(self) -> str:
        return self.chain[-1]

    @property
    def scope(self) -> str:
        """The path of the entity set the family ranges over, e.g. ``netses[1].seslnk``"""

        hops = []
        for name, spec in zip(self.chain[:-1], self.index[:-1]):
            hops.append((name, None if spec in ("all", None) else str(spec)))
        return join_path(hops)


@dataclass(frozen=True)
class Constraint:
    """``lhs rel rhs``, quantified over every member of ``scope`` when given"""

    lhs: Expression
    rel: str
    rhs: Expression
    scope: Optional[str] = None
    strict: bool = False
    variables: Tuple[str, ...] = ()
    line: int = field(default=0, compare=False)

    def render(self) -> str:
        symbol = {"le": "<", "ge": ">"}.get(self.rel) if self.strict else None
        symbol = symbol or {"le": "<=", "ge": ">=", "eq": "=="}[self.rel]
        return f"{self.lhs.render()} {symbol} {self.rhs.render()}"


@dataclass(frozen=True)
class ControlProblemSpec:
    sense: Sense
    utility: Expression
    constraints: Tuple[Constraint, ...]
    variables: Tuple[VariableDecl, ...]
    settings: Tuple[Tuple[str, Any], ...] = ()
    utility_vars: Tuple[str, ...] = ()

    @property
    def settings_map(self) -> Dict[str, Any]:
        return dict(self.settings)

    def variable(self, name: str) -> VariableDecl:
        for decl in self.variables:
            if decl.name == name:
                return decl
        raise KeyError(name)

    @property
    def decision_attributes(self) -> Set[str]:
        return {decl.attribute for decl in self.variables}


def _element_names(expr: Expression) -> Set[str]:
    names = set()
    for node in ex.walk(expr):
        if isinstance(node, VarRef):
            names.add(node.path)
        elif isinstance(node, SumOver):
            names.update(name for name, _ in split_path(node.element))
    return names


def compare(
    lhs: Expression, rel: str, rhs: Expression, schema: Optional[NetworkSchema] = None, **kwargs
) -> Constraint:
    """Builds the constraint ``lhs rel rhs``

    :param rel: One of ``< <= > >= ==`` (or ``le``, ``ge``, ``eq``)
    :type rel: str
    :param schema: The schema both sides must resolve against, defaults to the built-in one
    :type schema: class: ``NetworkSchema``, optional
    :raises SchemaMismatch: If one side references elements the schema does not hold
    """

    schema = schema or build_default_schema()
    try:
        rel_name, strict = RELATIONS[rel]
    except KeyError:
        raise ValidationError(f"unknown relation {rel!r}") from None
    for side, expr in (("left", lhs), ("right", rhs)):
        unknown = sorted(name for name in _element_names(expr) if name not in schema)
        if unknown:
            raise SchemaMismatch(f"{side}-hand side references {', '.join(unknown)}, unknown to the schema")
    if lhs == rhs:
        logging.warning(f"{{Abstraction}} Constraint '{lhs.render()} {rel} {rhs.render()}' is reflexive")
    return Constraint(lhs, rel_name, rhs, strict=strict or kwargs.pop("strict", False), **kwargs)


# Tokenizers #

_STATEMENT_TOKENS = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
   |(?P<comment>\#[^\n]*)
   |(?P<newline>\n)
   |(?P<string>'[^'\n]*'|"[^"\n]*")
   |(?P<number>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)
   |(?P<ident>[A-Za-z_]\w*)
   |(?P<punct>[()\[\],=;.\-])
    """,
    re.VERBOSE,
)

_MATH_TOKENS = re.compile(
    r"""
    (?P<ws>\s+)
   |(?P<number>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)
   |(?P<ident>[A-Za-z_]\w*(?:\[(?:\d+|all)\])?(?:\.[A-Za-z_]\w*(?:\[(?:\d+|all)\])?)*)
   |(?P<op><=|>=|==|<|>|[-+*/(),])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(pattern, text: str, line: int = 1, column: int = 1, skip=("ws", "comment")) -> List[_Token]:
    tokens = []
    position = 0
    while position < len(text):
        match = pattern.match(text, position)
        if not match:
            raise ParseError(f"unexpected character {text[position]!r}", line, column)
        kind = match.lastgroup
        chunk = match.group()
        if kind not in skip:
            tokens.append(_Token(kind, chunk, line, column))
        if kind == "newline":
            line += 1
            column = 1
        else:
            column += len(chunk)
        position = match.end()
    tokens.append(_Token("eof", "", line, column))
    return tokens


class _Cursor:
    def __init__(self, tokens: List[_Token]):
        self.tokens = tokens
        self.position = 0

    def peek(self, offset: int = 0) -> _Token:
        return self.tokens[min(self.position + offset, len(self.tokens) - 1)]

    def next(self) -> _Token:
        token = self.peek()
        self.position += 1
        return token

    def accept(self, text: str) -> bool:
        if self.peek().text == text and self.peek().kind not in ("string", "eof"):
            self.position += 1
            return True
        return False

    def expect(self, text: str) -> _Token:
        token = self.peek()
        if token.text != text or token.kind in ("string", "eof"):
            found = token.text or "end of input"
            raise ParseError(f"expected {text!r}, found {found!r}", token.line, token.column)
        return self.next()

    def fail(self, message: str, token: Optional[_Token] = None):
        token = token or self.peek()
        raise ParseError(message, token.line, token.column)


# Math sublanguage #


@dataclass(frozen=True)
class _ImplicitSum(Expression):
    """``sum(<family expression>)`` before the family scope is known"""

    body: Expression

    def render(self):
        return f"sum({self.body.render()})"


class _MathParser:
    """Recursive descent over ``+ - * / sum log sqrt`` and one optional comparison"""

    def __init__(self, text: str, line: int, column: int):
        self.cursor = _Cursor(_tokenize(_MATH_TOKENS, text, line, column, skip=("ws",)))

    def relation(self) -> Tuple[Expression, Optional[str], Optional[Expression]]:
        lhs = self.expr()
        token = self.cursor.peek()
        if token.kind == "op" and token.text in ("<", "<=", ">", ">=", "=="):
            self.cursor.next()
            rhs = self.expr()
            self._end()
            return lhs, token.text, rhs
        self._end()
        return lhs, None, None

    def _end(self):
        if self.cursor.peek().kind != "eof":
            self.cursor.fail(f"unexpected {self.cursor.peek().text!r}")

    def expr(self) -> Expression:
        result = self.term()
        while self.cursor.peek().text in ("+", "-") and self.cursor.peek().kind == "op":
            op = self.cursor.next().text
            right = self.term()
            result = ex.add(result, right if op == "+" else ex.neg(right))
        return result

    def term(self) -> Expression:
        result = self.unary()
        while self.cursor.peek().text in ("*", "/") and self.cursor.peek().kind == "op":
            op = self.cursor.next().text
            right = self.unary()
            result = ex.mul(result, right) if op == "*" else ex.quotient(result, right)
        return result

    def unary(self) -> Expression:
        if self.cursor.accept("-"):
            return ex.neg(self.unary())
        if self.cursor.accept("+"):
            return self.unary()
        return self.primary()

    def primary(self) -> Expression:
        token = self.cursor.next()
        if token.kind == "number":
            return ex.Constant(float(token.text))
        if token.text == "(":
            inner = self.expr()
            self.cursor.expect(")")
            return inner
        if token.kind == "ident":
            if token.text in ("log", "sqrt", "sum") and self.cursor.peek().text == "(":
                return self.call(token)
            return VarRef(token.text)
        self.cursor.fail(f"unexpected {token.text or 'end of expression'!r}", token)

    def call(self, name: _Token) -> Expression:
        self.cursor.expect("(")
        if name.text == "sum":
            first = self.cursor.peek()
            if first.kind == "ident" and self.cursor.peek(1).text == ",":
                self.cursor.next()
                self.cursor.next()
                body = self.expr()
                self.cursor.expect(")")
                return SumOver(first.text, body)
            body = self.expr()
            self.cursor.expect(")")
            return _ImplicitSum(body)
        arg = self.expr()
        self.cursor.expect(")")
        return ex.log(arg) if name.text == "log" else ex.sqrt(arg)


# Statement level #


@dataclass
class _Call:
    name: str
    args: list
    token: _Token
    target: Optional[str] = None


class _Path(str):
    """An unquoted path argument, e.g. ``netlnk`` or ``netses[1].seslnk``"""


class _StatementParser:
    def __init__(self, text: str):
        self.cursor = _Cursor(_tokenize(_STATEMENT_TOKENS, text))

    def statements(self) -> List[_Call]:
        calls = []
        while True:
            while self.cursor.peek().kind == "newline" or self.cursor.peek().text == ";":
                self.cursor.next()
            if self.cursor.peek().kind == "eof":
                return calls
            calls.append(self.statement())
            self.cursor.accept(",")
            token = self.cursor.peek()
            if not (token.kind in ("newline", "eof") or token.text == ";"):
                self.cursor.fail(f"expected end of statement, found {token.text!r}")

    def statement(self) -> _Call:
        start = self.cursor.peek()
        if start.kind != "ident":
            self.cursor.fail(f"expected a statement, found {start.text!r}")
        target = None
        if self.cursor.peek(1).text == "=":
            target = self.cursor.next().text
            self.cursor.next()
        name = self.path()
        self.cursor.expect("(")
        args = []
        if not self.cursor.accept(")"):
            args.append(self.value())
            while self.cursor.accept(","):
                args.append(self.value())
            self.cursor.expect(")")
        return _Call(str(name), args, start, target)

    def path(self) -> _Path:
        token = self.cursor.next()
        if token.kind != "ident":
            self.cursor.fail(f"expected an identifier, found {token.text!r}", token)
        text = token.text
        while True:
            if self.cursor.peek().text == "[" and self.cursor.peek(1).kind in ("number", "ident"):
                self.cursor.next()
                text += f"[{self.cursor.next().text}]"
                self.cursor.expect("]")
            elif self.cursor.peek().text == "." and self.cursor.peek(1).kind == "ident":
                self.cursor.next()
                text += f".{self.cursor.next().text}"
            else:
                return _Path(text)

    def value(self):
        token = self.cursor.peek()
        if token.kind == "string":
            self.cursor.next()
            return (token.text[1:-1], token)
        if token.text == "-" or token.kind == "number":
            sign = -1 if self.cursor.accept("-") else 1
            number = self.cursor.next()
            if number.kind == "number":
                return (_number(number.text) * sign, token)
            if number.text == "inf":
                return (math.inf * sign, token)
            self.cursor.fail(f"expected a number, found {number.text!r}", number)
        if token.text == "[":
            self.cursor.next()
            items = []
            if not self.cursor.accept("]"):
                items.append(self.value())
                while self.cursor.accept(","):
                    items.append(self.value())
                self.cursor.expect("]")
            return ([item for item, _ in items], token)
        if token.kind == "ident":
            path = self.path()
            literal = {"None": None, "true": True, "True": True, "false": False, "False": False,
                       "inf": math.inf}
            if path in literal:
                return (literal[path], token)
            return (path, token)
        self.cursor.fail(f"unexpected {token.text or 'end of input'!r}")


def _number(text: str) -> Union[int, float]:
    return int(text) if text.isdigit() else float(text)


class _Builder:
    """Turns parsed statements into a validated ``ControlProblemSpec``"""

    def __init__(self, schema: NetworkSchema):
        self.schema = schema
        self.variables: Dict[str, VariableDecl] = {}
        self.expressions: Dict[str, Tuple[Expression, Tuple[str, ...], _Token]] = {}
        self.constraints: List[Constraint] = []
        self.settings: Dict[str, Any] = {}
        self.objective: Optional[Tuple[Sense, str]] = None
        self.last_expression: Optional[str] = None
        self.mentioned: Set[str] = set()

    def handle(self, call: _Call):
        handler = {
            "nt.set": self.set,
            "nt.make_var": self.make_var,
            "mkexpr": self.mkexpr,
            "nt.add_cstr": self.add_cstr,
            "nt.objective": self.set_objective,
        }.get(call.name)
        if handler is None:
            raise ParseError(f"unknown statement {call.name!r}", call.token.line, call.token.column)
        if (call.name == "mkexpr") != (call.target is not None):
            raise ParseError(
                "mkexpr must be assigned to a name and only mkexpr may be assigned",
                call.token.line,
                call.token.column,
            )
        handler(call)

    @staticmethod
    def _arity(call: _Call, low: int, high: int):
        if not low <= len(call.args) <= high:
            raise ParseError(
                f"{call.name} takes {low} to {high} arguments, got {len(call.args)}",
                call.token.line,
                call.token.column,
            )

    def set(self, call: _Call):
        self._arity(call, 2, 2)
        (key, _), (value, _) = call.args
        self.settings[str(key)] = str(value) if isinstance(value, _Path) else value

    def make_var(self, call: _Call):
        self._arity(call, 3, 4)
        line = call.token.line
        (name, _), (chain, chain_token), (index, _) = call.args[:3]
        if not isinstance(name, str) or not isinstance(chain, list) or not isinstance(index, list):
            raise ParseError("make_var expects a name, a chain list and an index list", line, call.token.column)
        if name in self.variables:
            raise ValidationError(f"variable {name!r} declared twice", line)
        chain = tuple(canonical_name(str(hop)) for hop in chain)
        if len(chain) != len(index) or len(chain) < 2:
            raise ValidationError(f"chain and index of {name!r} must have the same length (at least 2)", line)
        try:
            leaf = read(self.schema, ".".join(chain))
            root = self.schema.element(chain[0])
        except UnknownElement as error:
            raise ValidationError(str(error), line) from None
        if not isinstance(root, VirtualElement) or root.scope is not Scope.GLOBAL:
            raise ValidationError(f"{name!r} must start from a global element", line)
        if isinstance(leaf, VirtualElement) or not self.schema.is_attribute(chain[-1]):
            raise ValidationError(f"{name!r} must end with an attribute", line)
        specs = []
        for hop, spec in zip(chain, index):
            if isinstance(spec, _Path):
                spec = str(spec)
            if spec is None or spec == "all" or (isinstance(spec, int) and spec >= 0):
                specs.append(spec)
            else:
                raise ValidationError(f"invalid index {spec!r} for {hop} in {name!r}", line)
        if specs[-1] is not None or any(spec is None for spec in specs[:-1]):
            raise ValidationError(f"only the attribute of {name!r} takes a None index", line)
        if len(call.args) == 4:
            bounds = call.args[3][0]
            if not (isinstance(bounds, list) and len(bounds) == 2):
                raise ValidationError(f"bounds of {name!r} must be [lo, hi]", line)
            bounds = (float(bounds[0]), float(bounds[1]))
        else:
            bounds = DEFAULT_BOUNDS.get(chain[-1], (-math.inf, math.inf))
        if bounds[0] > bounds[1]:
            raise ValidationError(f"empty bounds for {name!r}", line)
        self.variables[name] = VariableDecl(name, chain, tuple(specs), bounds, line)

    def _var_list(self, text: str, line: int) -> Tuple[str, ...]:
        names = tuple(part.strip() for part in text.split(",") if part.strip())
        for name in names:
            if name not in self.variables:
                raise ValidationError(f"unbound variable {name!r}", line)
        self.mentioned.update(names)
        return names

    def _math(self, argument) -> Tuple[Expression, Optional[str], Optional[Expression]]:
        text, token = argument
        if not isinstance(text, str) or token.kind != "string":
            raise ParseError("expected a quoted expression", token.line, token.column)
        return _MathParser(text, token.line, token.column + 1).relation()

    def _bind(self, expr: Expression, line: int) -> Tuple[Expression, Set[str]]:
        """Replaces family names with attribute references, returning the scopes
        of the families left unsummed"""

        if isinstance(expr, VarRef):
            if expr.path in self.variables:
                decl = self.variables[expr.path]
                self.mentioned.add(decl.name)
                return VarRef(decl.attribute), {decl.scope}
            name = canonical_name(expr.path)
            if name in self.schema and self.schema.is_attribute(name):
                return VarRef(name), set()
            raise ValidationError(f"unbound variable {expr.path!r}", line)
        if isinstance(expr, _ImplicitSum):
            body, scopes = self._bind(expr.body, line)
            if len(scopes) != 1:
                raise ValidationError(
                    f"sum({expr.body.render()}) must range over exactly one variable family", line
                )
            return SumOver(scopes.pop(), body), set()
        if isinstance(expr, SumOver):
            try:
                element = read(self.schema, expr.element)
            except UnknownElement as error:
                raise ValidationError(str(error), line) from None
            if not isinstance(element, VirtualElement):
                raise ValidationError(f"cannot sum over {expr.element!r}", line)
            path = join_path(split_path(expr.element))
            body, scopes = self._bind(expr.body, line)
            return SumOver(path, body), scopes
        if isinstance(expr, ex.Constant):
            return expr, set()
        scopes: Set[str] = set()
        bound = []
        for child in ex.children(expr):
            new, inner = self._bind(child, line)
            bound.append(new)
            scopes |= inner
        if isinstance(expr, ex.Add):
            return ex.add(*bound), scopes
        if isinstance(expr, ex.Product):
            return ex.mul(*bound), scopes
        if isinstance(expr, ex.Quotient):
            return ex.quotient(*bound), scopes
        if isinstance(expr, ex.Negate):
            return ex.neg(*bound), scopes
        if isinstance(expr, ex.Log):
            return ex.log(*bound), scopes
        if isinstance(expr, ex.Sqrt):
            return ex.sqrt(*bound), scopes
        raise ValidationError(f"unsupported expression {expr.render()!r}", line)

    def mkexpr(self, call: _Call):
        self._arity(call, 1, 2)
        line = call.token.line
        lhs, rel, _ = self._math(call.args[0])
        if rel is not None:
            raise ValidationError("mkexpr takes an expression, not a comparison", line)
        names = self._var_list(call.args[1][0], line) if len(call.args) == 2 else ()
        utility, scopes = self._bind(lhs, line)
        if len(scopes) > 1:
            raise ValidationError("utility mixes variable families of different scopes", line)
        if scopes:
            utility = SumOver(scopes.pop(), utility)
        self.expressions[call.target] = (utility, names, call.token)
        self.last_expression = call.target

    def add_cstr(self, call: _Call):
        self._arity(call, 1, 3)
        line = call.token.line
        lhs, rel, rhs = self._math(call.args[0])
        if rel is None:
            raise ValidationError("add_cstr needs a comparison", line)
        names = self._var_list(call.args[1][0], line) if len(call.args) >= 2 else ()
        lhs, left_scopes = self._bind(lhs, line)
        rhs, right_scopes = self._bind(rhs, line)
        scopes = left_scopes | right_scopes
        quantifier = None
        if len(call.args) == 3:
            value = call.args[2][0]
            if not isinstance(value, str):
                raise ParseError("the quantifier must be an element path", line, call.args[2][1].column)
            try:
                element = read(self.schema, value)
            except UnknownElement as error:
                raise ValidationError(str(error), line) from None
            if not isinstance(element, VirtualElement):
                raise ValidationError(f"cannot quantify over {value!r}", line)
            quantifier = join_path(split_path(value))
        if len(scopes) > 1 or (scopes and quantifier and scopes != {quantifier}):
            raise ValidationError("constraint mixes variable families of different scopes", line)
        if scopes:
            quantifier = scopes.pop()
        try:
            constraint = compare(
                lhs, rel, rhs, self.schema, scope=quantifier, variables=names, line=line
            )
        except SchemaMismatch as error:
            raise ValidationError(str(error), line) from None
        self.constraints.append(constraint)

    def set_objective(self, call: _Call):
        self._arity(call, 2, 2)
        (sense, _), (name, token) = call.args
        if sense not in ("max", "min", "maximize", "minimize"):
            raise ValidationError(f"objective sense must be max or min, got {sense!r}", call.token.line)
        if str(name) not in self.expressions:
            raise ValidationError(f"unknown expression {name!r}", token.line)
        self.objective = (Sense.MAXIMIZE if str(sense).startswith("max") else Sense.MINIMIZE, str(name))

    def build(self) -> ControlProblemSpec:
        if not self.expressions:
            raise ValidationError("the program defines no utility (mkexpr)")
        sense, name = self.objective or (Sense.MAXIMIZE, self.last_expression)
        utility, names, _ = self.expressions[name]
        unused = [decl for decl in self.variables.values() if decl.name not in self.mentioned]
        if unused:
            decl = unused[0]
            raise ValidationError(
                f"variable {decl.name!r} appears neither in the utility nor in a constraint", decl.line
            )
        flat = ex.strip_sums(utility)
        for decl in self.variables.values():
            if math.isinf(decl.bounds[0]) or math.isinf(decl.bounds[1]):
                if ex.is_linear_in(flat, VarRef(decl.attribute)):
                    raise ValidationError(
                        f"the utility is linear in {decl.name!r}: it needs finite bounds", decl.line
                    )
        return ControlProblemSpec(
            sense=sense,
            utility=utility,
            constraints=tuple(self.constraints),
            variables=tuple(self.variables.values()),
            settings=tuple(sorted(self.settings.items())),
            utility_vars=names,
        )


def parse_program(text: str, schema: Optional[NetworkSchema] = None) -> ControlProblemSpec:
    """Parses and validates a control program

    :param text: The program source
    :type text: str
    :param schema: The schema identifiers resolve against, defaults to the built-in one
    :type schema: class: ``NetworkSchema``, optional
    :returns: The validated problem
    :rtype: class: ``ControlProblemSpec``
    :raises ParseError: If the text does not follow the grammar
    :raises ValidationError: For unbound, unused or unbounded variables
    """

    builder = _Builder(schema or build_default_schema())
    for call in _StatementParser(text).statements():
        builder.handle(call)
    spec = builder.build()
    logging.debug(
        f"{{Abstraction}} Parsed program with {len(spec.variables)} variable family(ies) "
        f"and {len(spec.constraints)} constraint(s)"
    )
    return spec


def program_path(name: str) -> str:
    """Resolves a file path, or the name of a bundled program (``cp1``)"""

    if os.path.exists(name):
        return name
    bundled = os.path.join(PROGRAMS_DIR, name if name.endswith(".wnos") else f"{name}.wnos")
    if os.path.exists(bundled):
        return bundled
    raise FileNotFoundError(f"no program file or bundled program named {name!r}")


def load_program(path: str, schema: Optional[NetworkSchema] = None) -> ControlProblemSpec:
    """Loads a program file (or bundled program name)

    :raises FileNotFoundError: If neither exists
    """

    with open(program_path(path), encoding="utf-8") as source:
        return parse_program(source.read(), schema)


def bundled_programs() -> List[str]:
    return sorted(os.path.splitext(name)[0] for name in os.listdir(PROGRAMS_DIR) if name.endswith(".wnos"))


def _format_value(value) -> str:
    if value is None:
        return "None"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return ex.Constant(float(value)).render() if isinstance(value, float) else str(value)
    return repr(str(value))


def format_program(spec: ControlProblemSpec) -> str:
    """Pretty-prints ``spec`` as a program that parses back to an equal spec"""

    lines = []
    for key, value in spec.settings:
        lines.append(f"nt.set('{key}', {_format_value(value)})")
    for decl in spec.variables:
        chain = ", ".join(decl.chain)
        index = ", ".join("None" if spec_ is None else str(spec_) for spec_ in decl.index)
        text = f"nt.make_var('{decl.name}', [{chain}], [{index}]"
        if not any(math.isinf(bound) for bound in decl.bounds):
            text += f", [{_format_value(decl.bounds[0])}, {_format_value(decl.bounds[1])}]"
        lines.append(text + ")")
    lines.append(f"expr = mkexpr('{spec.utility.render()}', '{','.join(spec.utility_vars)}')")
    lines.append(f"nt.objective({spec.sense.value}, expr)")
    for constraint in spec.constraints:
        text = f"nt.add_cstr('{constraint.render()}', '{','.join(constraint.variables)}'"
        if constraint.scope:
            text += f", {constraint.scope}"
        lines.append(text + ")")
    return "\n".join(lines) + "\n"
