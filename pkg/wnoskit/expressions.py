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

"""
Immutable expression trees over network elements.

Every builder (``add``, ``mul``, ``neg``, ...) normalizes eagerly: nested sums and
products are flattened, additive and multiplicative identities are dropped and
constants are folded, so that two programs spelling the same formula the same
way always produce equal trees. ``canonical`` goes further and expands an
expression into a sorted sum of monomials, which is what equality checks
across decomposition stages rely on. Expansion and differentiation run on
sympy; the dataclasses here are the thin layer programs are written in.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Iterator, Mapping, Optional, Tuple, Union

import sympy as sp

from .errors import ArityMismatch, AbstractionError

Number = Union[int, float]
_EPSILON = 1e-12


class Expression:
    """Base class of every expression node"""

    __slots__ = ()

    def render(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.render()

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return quotient(self, _wrap(other))

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True)
class Constant(Expression):
    value: float

    def render(self):
        return _format_number(self.value)


@dataclass(frozen=True)
class VarRef(Expression):
    """A reference to an element attribute. Abstract references have no index,
    instantiated ones carry the index of the entity they belong to"""

    path: str
    index: Optional[int] = None

    def render(self):
        if self.index is None:
            return self.path
        return f"{self.path}_{self.index:02d}"


@dataclass(frozen=True)
class Dual(Expression):
    """A dual coefficient. ``index=None`` stands for the coefficient of the
    entity that runs the subproblem"""

    family: int = 0
    index: Optional[int] = None

    def render(self):
        name = dual_name(self.family)
        if self.index is None:
            return name
        return f"{name}_{self.index:02d}"


@dataclass(frozen=True)
class DualSum(Expression):
    """The sum of the dual coefficients received from the members of ``element``"""

    family: int
    element: str

    def render(self):
        return f"sum({self.element}, {dual_name(self.family)})"


@dataclass(frozen=True)
class SumOver(Expression):
    element: str
    body: Expression

    def render(self):
        return f"sum({self.element}, {self.body.render()})"


@dataclass(frozen=True)
class Add(Expression):
    args: Tuple[Expression, ...]

    def render(self):
        text = ""
        for position, arg in enumerate(self.args):
            negative, magnitude = _split_sign(arg)
            body = _paren(magnitude, (Add,))
            if position == 0:
                text = f"-{body}" if negative else body
            else:
                text += f" - {body}" if negative else f" + {body}"
        return text


@dataclass(frozen=True)
class Product(Expression):
    args: Tuple[Expression, ...]

    def render(self):
        head, rest = self.args[0], self.args[1:]
        if isinstance(head, Constant) and head.value < 0:
            first = f"-{_format_number(-head.value)}"
        else:
            first = _paren(head, (Add, Negate, Quotient))
        return "*".join([first] + [_paren(arg, (Add, Negate, Quotient)) for arg in rest])


@dataclass(frozen=True)
class Quotient(Expression):
    num: Expression
    den: Expression

    def render(self):
        return f"{_paren(self.num, (Add, Negate))}/{_paren(self.den, (Add, Product, Quotient, Negate))}"


@dataclass(frozen=True)
class Negate(Expression):
    arg: Expression

    def render(self):
        return f"-{_paren(self.arg, (Add,))}"


@dataclass(frozen=True)
class Log(Expression):
    arg: Expression

    def render(self):
        return f"log({self.arg.render()})"


@dataclass(frozen=True)
class Sqrt(Expression):
    arg: Expression

    def render(self):
        return f"sqrt({self.arg.render()})"


ATOMS = (VarRef, Dual, DualSum)
ZERO = Constant(0.0)
ONE = Constant(1.0)


def dual_name(family: int) -> str:
    return "lbd" if family == 0 else f"lbd{family}"


def _format_number(value: float) -> str:
    value = float(value)
    if value.is_integer():
        return str(int(value))
    return repr(value)


def _paren(expr: Expression, kinds) -> str:
    if isinstance(expr, kinds) or (isinstance(expr, Constant) and expr.value < 0):
        return f"({expr.render()})"
    return expr.render()


def _split_sign(expr: Expression) -> Tuple[bool, Expression]:
    """Splits an addend into (is_negative, magnitude) for rendering"""

    if isinstance(expr, Negate):
        return True, expr.arg
    if isinstance(expr, Constant) and expr.value < 0:
        return True, Constant(-expr.value)
    if isinstance(expr, Product) and isinstance(expr.args[0], Constant) and expr.args[0].value < 0:
        return True, mul(Constant(-expr.args[0].value), *expr.args[1:])
    return False, expr


def _wrap(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float)):
        return Constant(float(value))
    raise TypeError(f"cannot use {value!r} in an expression")


# Builders #


def add(*args: Expression) -> Expression:
    terms = []
    constant = 0.0
    for arg in args:
        parts = arg.args if isinstance(arg, Add) else (arg,)
        for part in parts:
            if isinstance(part, Constant):
                constant += part.value
            else:
                terms.append(part)
    if abs(constant) > _EPSILON or not terms:
        terms.append(Constant(constant))
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))


def mul(*args: Expression) -> Expression:
    factors = []
    constant = 1.0
    for arg in args:
        parts = arg.args if isinstance(arg, Product) else (arg,)
        for part in parts:
            while isinstance(part, Negate):
                constant = -constant
                part = part.arg
            if isinstance(part, Product):
                # a negated product unwrapped above
                for inner in part.args:
                    if isinstance(inner, Constant):
                        constant *= inner.value
                    else:
                        factors.append(inner)
            elif isinstance(part, Constant):
                constant *= part.value
            else:
                factors.append(part)
    if abs(constant) <= _EPSILON:
        return ZERO
    if not factors:
        return Constant(constant)
    body = factors[0] if len(factors) == 1 else Product(tuple(factors))
    if constant == 1.0:
        return body
    if constant == -1.0:
        return Negate(body)
    return Product((Constant(constant),) + tuple(factors))


def neg(arg: Expression) -> Expression:
    if isinstance(arg, Constant):
        return Constant(-arg.value)
    if isinstance(arg, Negate):
        return arg.arg
    if isinstance(arg, Product) and isinstance(arg.args[0], Constant):
        return mul(Constant(-arg.args[0].value), *arg.args[1:])
    return Negate(arg)


def quotient(num: Expression, den: Expression) -> Expression:
    if isinstance(den, Constant):
        if abs(den.value) <= _EPSILON:
            raise AbstractionError("division by zero")
        return mul(Constant(1.0 / den.value), num)
    if isinstance(num, Constant) and abs(num.value) <= _EPSILON:
        return ZERO
    return Quotient(num, den)


def log(arg: Expression) -> Expression:
    if isinstance(arg, Constant) and arg.value > 0:
        return Constant(math.log(arg.value))
    return Log(arg)


def sqrt(arg: Expression) -> Expression:
    if isinstance(arg, Constant) and arg.value >= 0:
        return Constant(math.sqrt(arg.value))
    return Sqrt(arg)


def sum_over(element: str, body: Expression) -> Expression:
    return SumOver(element, body)


_OPERATORS = {
    "add": (add, None),
    "mul": (mul, None),
    "neg": (neg, 1),
    "log": (log, 1),
    "sqrt": (sqrt, 1),
    "div": (quotient, 2),
}


def compose(op: str, args, element: Optional[str] = None) -> Expression:
    """Builds a new expression by applying ``op`` to ``args``

    :param op: One of ``add``, ``mul``, ``neg``, ``log``, ``sqrt``, ``div`` or ``sum``
    :type op: str
    :param args: The operands
    :type args: list
    :param element: The virtual element to sum over, only for ``sum``
    :type element: str, optional
    :returns: The normalized expression
    :rtype: class: ``Expression``
    :raises ArityMismatch: If the number of operands does not fit the operator
    """

    args = [_wrap(arg) for arg in args]
    if not args:
        raise ArityMismatch(f"{op} needs at least one argument")
    if op == "sum":
        if len(args) != 1 or not element:
            raise ArityMismatch("sum takes one body and an element to sum over")
        return sum_over(element, args[0])
    try:
        builder, arity = _OPERATORS[op]
    except KeyError:
        raise AbstractionError(f"unknown operator {op!r}") from None
    if arity is not None and len(args) != arity:
        raise ArityMismatch(f"{op} takes {arity} argument(s), got {len(args)}")
    return builder(*args)


# Traversal #


def children(expr: Expression) -> Tuple[Expression, ...]:
    if isinstance(expr, (Add, Product)):
        return expr.args
    if isinstance(expr, Quotient):
        return expr.num, expr.den
    if isinstance(expr, (Negate, Log, Sqrt)):
        return (expr.arg,)
    if isinstance(expr, SumOver):
        return (expr.body,)
    return ()


def walk(expr: Expression) -> Iterator[Expression]:
    """Yields every node of ``expr``, parents first"""

    yield expr
    for child in children(expr):
        yield from walk(child)


def atoms(expr: Expression) -> Iterator[Expression]:
    for node in walk(expr):
        if isinstance(node, ATOMS):
            yield node


def transform(expr: Expression, fn: Callable[[Expression], Optional[Expression]]) -> Expression:
    """Rebuilds ``expr`` bottom-up through the normalizing builders. ``fn`` is
    called on every node before its children and may return a replacement"""

    replacement = fn(expr)
    if replacement is not None:
        return replacement
    if isinstance(expr, Add):
        return add(*(transform(arg, fn) for arg in expr.args))
    if isinstance(expr, Product):
        return mul(*(transform(arg, fn) for arg in expr.args))
    if isinstance(expr, Quotient):
        return quotient(transform(expr.num, fn), transform(expr.den, fn))
    if isinstance(expr, Negate):
        return neg(transform(expr.arg, fn))
    if isinstance(expr, Log):
        return log(transform(expr.arg, fn))
    if isinstance(expr, Sqrt):
        return sqrt(transform(expr.arg, fn))
    if isinstance(expr, SumOver):
        return SumOver(expr.element, transform(expr.body, fn))
    return expr


def evaluate(expr: Expression, env: Mapping[Expression, float]) -> float:
    """Evaluates ``expr`` numerically, looking atoms up in ``env``

    :raises KeyError: If an atom has no value in ``env``
    :raises ValueError: If ``expr`` still holds an abstract sum
    """

    if isinstance(expr, Constant):
        return expr.value
    if isinstance(expr, ATOMS):
        return float(env[expr])
    if isinstance(expr, Add):
        return math.fsum(evaluate(arg, env) for arg in expr.args)
    if isinstance(expr, Product):
        result = 1.0
        for arg in expr.args:
            result *= evaluate(arg, env)
        return result
    if isinstance(expr, Quotient):
        return evaluate(expr.num, env) / evaluate(expr.den, env)
    if isinstance(expr, Negate):
        return -evaluate(expr.arg, env)
    if isinstance(expr, Log):
        return math.log(evaluate(expr.arg, env))
    if isinstance(expr, Sqrt):
        return math.sqrt(evaluate(expr.arg, env))
    raise ValueError(f"cannot evaluate {expr.render()}: instantiate it first")


# Symbolic backend #

Monomial = Tuple[Tuple[Expression, int], ...]

# atoms and abstract sums stand in sympy as opaque symbols
_SYMBOLS: Dict[Expression, sp.Symbol] = {}
_ATOMS: Dict[sp.Symbol, Expression] = {}


def _symbol(atom: Expression) -> sp.Symbol:
    try:
        return _SYMBOLS[atom]
    except KeyError:
        symbol = sp.Symbol(f"w{len(_SYMBOLS)}")
        _SYMBOLS[atom] = symbol
        _ATOMS[symbol] = atom
        return symbol


def to_sympy(expr: Expression) -> sp.Expr:
    """Translates ``expr`` into a sympy expression. Atoms and abstract sums
    become symbols that ``canonical`` maps back"""

    if isinstance(expr, Constant):
        return sp.Float(expr.value)
    if isinstance(expr, ATOMS):
        return _symbol(expr)
    if isinstance(expr, SumOver):
        return _symbol(SumOver(expr.element, canonical(expr.body)))
    if isinstance(expr, Add):
        return sp.Add(*(to_sympy(arg) for arg in expr.args))
    if isinstance(expr, Product):
        return sp.Mul(*(to_sympy(arg) for arg in expr.args))
    if isinstance(expr, Quotient):
        return to_sympy(expr.num) / to_sympy(expr.den)
    if isinstance(expr, Negate):
        return -to_sympy(expr.arg)
    if isinstance(expr, Log):
        return sp.log(to_sympy(expr.arg))
    if isinstance(expr, Sqrt):
        return sp.sqrt(to_sympy(expr.arg))
    raise AbstractionError(f"cannot translate {expr!r}")


def _real(value: sp.Expr) -> float:
    number = complex(value)
    if abs(number.imag) > _EPSILON:
        raise AbstractionError(f"{value} is not a real coefficient")
    return number.real


def _atom(base: sp.Expr) -> Expression:
    if base.is_Symbol:
        return _ATOMS[base]
    if isinstance(base, sp.log):
        return Log(_rebuild(_terms(base.args[0])))
    if base.is_Add:
        return _rebuild(_terms(base))
    raise AbstractionError(f"cannot expand {base}")


def _factor(factor: sp.Expr) -> Tuple[Expression, int]:
    base, exponent = factor.as_base_exp()
    if exponent.is_Integer:
        return _atom(base), int(exponent)
    if exponent.is_Rational and exponent.q == 2:
        return Sqrt(_rebuild(_terms(base))), int(exponent.p)
    raise AbstractionError(f"cannot expand {factor}")


def _terms(expr: sp.Expr) -> Dict[Monomial, float]:
    """Splits an expanded sympy expression into monomials over wnoskit atoms"""

    poly: Dict[Monomial, float] = {}
    # log=False keeps log(2*x) whole
    for term in sp.Add.make_args(sp.expand(expr, log=False)):
        coeff, factors = term.as_coeff_mul()
        scale = _real(coeff)
        powers: Dict[Expression, int] = {}
        for factor in factors:
            if factor.is_number:
                scale *= _real(factor)
                continue
            atom, power = _factor(factor)
            powers[atom] = powers.get(atom, 0) + power
        monomial = tuple(
            sorted(((a, p) for a, p in powers.items() if p != 0), key=lambda item: item[0].render())
        )
        poly[monomial] = poly.get(monomial, 0.0) + scale
    return poly


@lru_cache(maxsize=4096)
def differentiate(expr: Expression, var: Expression) -> Expression:
    """Returns the partial derivative of ``expr`` with respect to the atom ``var``,
    in canonical form"""

    if not isinstance(var, ATOMS):
        raise AbstractionError(f"cannot differentiate with respect to {var.render()}")
    return _rebuild(_terms(sp.diff(to_sympy(expr), _symbol(var))))


def strip_sums(expr: Expression) -> Expression:
    """Replaces every abstract sum with its body"""

    return transform(expr, lambda node: strip_sums(node.body) if isinstance(node, SumOver) else None)


def is_linear_in(expr: Expression, var: Expression) -> bool:
    """True when ``expr`` is affine in ``var`` with a nonzero slope"""

    first = differentiate(expr, var)
    if first == ZERO:
        return False
    return differentiate(first, var) == ZERO


# Canonical form #


def _monomial_key(monomial: Monomial) -> str:
    return "*".join(f"{atom.render()}^{power}" for atom, power in monomial)


def from_monomial(monomial: Monomial, coef: float = 1.0) -> Expression:
    """Builds ``coef`` times the product of the monomial's atoms, negative powers
    going to a denominator"""

    numerator = []
    denominator = []
    for atom, power in monomial:
        if power > 0:
            numerator.extend([atom] * power)
        else:
            denominator.extend([atom] * -power)
    body = mul(*numerator) if numerator else ONE
    if denominator:
        body = quotient(body, mul(*denominator))
    return mul(Constant(coef), body)


def _rebuild(poly: Dict[Monomial, float]) -> Expression:
    items = [(m, c) for m, c in poly.items() if abs(c) > _EPSILON]
    items.sort(key=lambda item: _monomial_key(item[0]))
    if not items:
        return ZERO
    return add(*(from_monomial(m, c) for m, c in items))


@lru_cache(maxsize=4096)
def canonical(expr: Expression) -> Expression:
    """Expands ``expr`` into a sum of monomials with like terms merged and addends
    and factors sorted by a stable key. Two expressions are equal up to
    commutativity, associativity and distributivity iff their canonical forms are equal"""

    return _rebuild(_terms(to_sympy(expr)))


def monomials(expr: Expression) -> Dict[Monomial, float]:
    """The merged monomials of ``expr``, as used by ``canonical``"""

    return {m: c for m, c in _terms(to_sympy(expr)).items() if abs(c) > _EPSILON}


def addends(expr: Expression) -> Tuple[Expression, ...]:
    return expr.args if isinstance(expr, Add) else (expr,)


def equivalent(left: Expression, right: Expression) -> bool:
    return canonical(left) == canonical(right)
