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
Solver synthesis.

Every lifted role template is matched against a small set of shapes and
turned into a ``SolverPlan``; every constraint family gets a ``DualUpdateRule``.
Transport plans are solved in closed form where the shape allows it, physical
plans through one of the three distributed cases selected by the
``distribution`` setting.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from scipy.optimize import minimize_scalar

from . import expressions as ex
from .channel import DB_SLOPE, LN2
from .config import Settings
from .decomposer import AbstractProgram, ConstraintFamily, RoleTemplate
from .errors import AbstractionError, MissingParameter, NoApplicableMethod, NotDifferentiable
from .expressions import Dual, DualSum, Expression, Log, VarRef
from .schema import DEFAULT_BOUNDS, Layer

Box = Tuple[float, float]

CAPACITY = "lnkcap"
POWER = "lnkpwr"

# A physical agent is its transmitter (index 0); the registers it reads are
# parameters held by everybody else (index 1)
TX_POWER = VarRef("txpower", 0)
LINK_PARAMETERS = {name: VarRef(name, 1) for name in ("channel_gain", "interference", "scale")}
INTERFERENCE_PRICE = VarRef("price", 1)


class Method(Enum):
    CLOSED_FORM_RECIPROCAL = "closed_form_reciprocal"
    BOUND_PROJECTION = "bound_projection"
    PROJECTED_GRADIENT = "projected_gradient"
    BEST_RESPONSE = "best_response"
    DPL = "dpl"


class Case(Enum):
    CASE1_BEST_RESPONSE = "case1_best_response"
    CASE2_GRADIENT = "case2_gradient"
    CASE3_DPL = "case3_dpl"


# distribution setting -> (physical method, distributed case)
DISTRIBUTIONS = {
    "best_response": (Method.BEST_RESPONSE, Case.CASE1_BEST_RESPONSE),
    "gradient": (Method.PROJECTED_GRADIENT, Case.CASE2_GRADIENT),
    "dpl": (Method.DPL, Case.CASE3_DPL),
}


@dataclass(frozen=True)
class StepSchedule:
    """``constant`` steps are ``alpha0``, ``diminishing`` ones ``alpha0 / ceil(k / period)``"""

    kind: str = "diminishing"
    alpha0: float = 0.05
    period: int = 10

    def __post_init__(self):
        if self.kind not in ("constant", "diminishing"):
            raise ValueError("kind must be 'constant' or 'diminishing'!")
        if self.alpha0 <= 0 or self.period < 1:
            raise ValueError("alpha0 and period must be positive!")

    @classmethod
    def from_settings(cls, settings: Settings) -> "StepSchedule":
        return cls(settings.step, settings.alpha0, settings.step_period)

    def alpha(self, k: int) -> float:
        if k < 1:
            raise ValueError("the iteration index starts at 1")
        if self.kind == "constant":
            return self.alpha0
        return self.alpha0 / math.ceil(k / self.period)

    def render(self) -> str:
        alpha0 = ex.Constant(self.alpha0).render()
        if self.kind == "constant":
            return f"constant({alpha0})"
        return f"diminishing({alpha0}/ceil(k/{self.period}))"


@dataclass(frozen=True)
class DualUpdateRule:
    """``lbd <- max(0, lbd + alpha_k * slack)`` for every member of the family's scope"""

    family: int
    scope: Optional[str]
    slack: Expression
    step: StepSchedule

    @property
    def name(self) -> str:
        return ex.dual_name(self.family)

    def line(self) -> str:
        return f"family={self.name} scope={self.scope or '-'} step={self.step.render()} slack={self.slack.render()}"


@dataclass(frozen=True)
class SolverPlan:
    """How the entities of one role solve their subproblem

    :param price: For transport plans, the expression of the dual coefficients
        multiplying the variable (``sum(seslnk, lbd)`` for rate control)
    :param coefficient: The ``a`` of ``a log(x)`` or ``a x``
    :param local: The part of the template that does not depend on the duals
    """

    role: str
    layer: Layer
    method: Method
    variable: str
    bounds: Box
    template: Expression
    step: Optional[StepSchedule] = None
    iterations: int = 1
    coefficient: float = 0.0
    price: Expression = ex.ZERO
    local: Expression = ex.ZERO
    case: Optional[Case] = None
    high_sinr: bool = False
    max_step: float = math.inf

    def line(self) -> str:
        step = self.step.render() if self.step else "none"
        lo, hi = (ex.Constant(bound).render() for bound in self.bounds)
        return f"entity={self.role} method={self.method.value} step={step} bounds={lo},{hi}"

    @property
    def dual_refs(self) -> Tuple[Expression, ...]:
        refs = {node for node in ex.walk(self.template) if isinstance(node, (Dual, DualSum))}
        return tuple(sorted(refs, key=lambda node: node.render()))


@dataclass(frozen=True)
class PlanSet:
    """Every plan and dual update rule of a program"""

    plans: Tuple[SolverPlan, ...]
    rules: Tuple[DualUpdateRule, ...]
    program: AbstractProgram = field(compare=False, repr=False)

    def plan(self, role: str) -> SolverPlan:
        for plan in self.plans:
            if plan.role == role:
                return plan
        raise KeyError(role)

    def plan_for(self, template: RoleTemplate) -> SolverPlan:
        return self.plan(template.name)

    def rule(self, family: int) -> DualUpdateRule:
        for rule in self.rules:
            if rule.family == family:
                return rule
        raise KeyError(family)

    def dump(self) -> List[str]:
        return [plan.line() for plan in self.plans] + [rule.line() for rule in self.rules]


@dataclass(frozen=True)
class PenalizedUtility:
    """``theta + gamma``: the utility an agent maximizes in a distributed scheme"""

    case: Case
    agent: int
    theta: Expression
    gamma: Expression

    @property
    def total(self) -> Expression:
        return ex.add(self.theta, self.gamma)


@lru_cache(maxsize=64)
def link_utility(template: Expression, high_sinr: bool = False) -> Expression:
    """Rewrites a physical template over the transmit power in mW

    ``lnkcap`` becomes ``scale * log2(1 + g p / I)`` (``log2(g p / I)`` with
    ``high_sinr``) and ``lnkpwr`` the gain ``10 log10(p)`` in dB
    """

    sinr = ex.quotient(ex.mul(LINK_PARAMETERS["channel_gain"], TX_POWER), LINK_PARAMETERS["interference"])
    argument = sinr if high_sinr else ex.add(ex.ONE, sinr)
    capacity = ex.mul(ex.Constant(1.0 / LN2), LINK_PARAMETERS["scale"], ex.log(argument))
    gain_db = ex.mul(ex.Constant(10.0 / math.log(10.0)), ex.log(TX_POWER))
    replacements = {VarRef(CAPACITY): capacity, VarRef(POWER): gain_db}
    return ex.transform(template, lambda node: replacements.get(node))


def _without_duals(expr: Expression) -> Expression:
    return ex.canonical(ex.transform(expr, lambda node: ex.ZERO if isinstance(node, (Dual, DualSum)) else None))


def _own_variable(template: RoleTemplate, controlled: Iterable[str], layer: Layer) -> str:
    controlled = set(controlled)
    attributes = set(template.attributes)
    if layer is Layer.PHYSICAL and POWER in controlled and attributes & {POWER, CAPACITY}:
        return POWER
    candidates = sorted(attributes & controlled)
    if len(candidates) != 1:
        raise NoApplicableMethod(
            f"{template.name}: expected one controlled variable, found {candidates or 'none'}"
        )
    return candidates[0]


def _transport_plan(template: RoleTemplate, variable: str, bounds: Box, settings: Settings) -> SolverPlan:
    x = VarRef(variable)
    local = _without_duals(template.expression)
    coupling = ex.canonical(ex.add(template.expression, ex.neg(local)))
    price = ex.canonical(ex.neg(ex.differentiate(coupling, x)))
    if any(isinstance(node, VarRef) for node in ex.walk(price)) or ex.canonical(
        ex.add(coupling, ex.mul(x, price))
    ) != ex.ZERO:
        raise NoApplicableMethod(f"{template.name}: the dual coupling is not linear in {variable}")
    poly = ex.monomials(local)
    shapes = {monomial for monomial in poly if monomial}
    common = dict(
        role=template.name,
        layer=template.layer,
        variable=variable,
        bounds=bounds,
        template=template.expression,
        price=price,
        local=local,
    )
    if shapes == {((Log(x), 1),)} and poly[((Log(x), 1),)] > 0:
        return SolverPlan(method=Method.CLOSED_FORM_RECIPROCAL, coefficient=poly[((Log(x), 1),)], **common)
    if shapes <= {((x, 1),)}:
        return SolverPlan(method=Method.BOUND_PROJECTION, coefficient=poly.get(((x, 1),), 0.0), **common)
    try:
        ex.differentiate(local, x)
    except AbstractionError as error:
        raise NoApplicableMethod(f"{template.name}: {error}") from None
    if any(not isinstance(node, (VarRef, ex.Constant)) or (isinstance(node, VarRef) and node != x)
           for node in ex.walk(local) if not ex.children(node)):
        raise NoApplicableMethod(f"{template.name}: the local utility depends on foreign quantities")
    return SolverPlan(
        method=Method.PROJECTED_GRADIENT,
        step=StepSchedule("constant", settings.transport_step, 1),
        iterations=settings.gradient_iterations,
        **common,
    )


def _physical_plan(template: RoleTemplate, variable: str, bounds: Box, settings: Settings) -> SolverPlan:
    allowed = {CAPACITY, POWER}
    foreign = sorted(set(template.attributes) - allowed)
    if variable != POWER or foreign:
        raise NoApplicableMethod(
            f"{template.name}: physical plans control {POWER} through {CAPACITY}, found {foreign or variable}"
        )
    try:
        for attribute in allowed:
            ex.differentiate(template.expression, VarRef(attribute))
    except AbstractionError as error:
        raise NoApplicableMethod(f"{template.name}: {error}") from None
    method, case = DISTRIBUTIONS[settings.distribution]
    step = StepSchedule("constant", settings.physical_step, 1) if method is Method.PROJECTED_GRADIENT else None
    return SolverPlan(
        role=template.name,
        layer=template.layer,
        method=method,
        variable=variable,
        bounds=bounds,
        template=template.expression,
        step=step,
        iterations=settings.gradient_iterations if method is Method.PROJECTED_GRADIENT else 1,
        local=_without_duals(template.expression),
        case=case,
        high_sinr=settings.high_sinr,
        max_step=math.inf if method is Method.BEST_RESPONSE else settings.max_step_db,
    )


def synthesize_plan(
    template: RoleTemplate,
    settings: Optional[Settings] = None,
    bounds: Optional[Box] = None,
    controlled: Optional[Iterable[str]] = None,
) -> SolverPlan:
    """Chooses a solution method for ``template`` by pattern matching its shape

    ``a log(x) - x L`` gives ``closed_form_reciprocal``, ``a x - x L`` gives
    ``bound_projection`` and any other smooth transport utility ``projected_gradient``.
    Physical templates follow the ``distribution`` setting

    :param bounds: The box of the controlled variable, defaults to the attribute's default box
    :param controlled: The attributes the program controls, defaults to every attribute of the template
    :raises NoApplicableMethod: If the template matches no shape
    """

    settings = settings or Settings()
    if controlled is None:
        controlled = template.attributes + ((POWER,) if CAPACITY in template.attributes else ())
    variable = _own_variable(template, controlled, template.layer)
    if bounds is None:
        bounds = DEFAULT_BOUNDS.get(variable, (-math.inf, math.inf))
    if any(math.isinf(bound) for bound in bounds):
        raise NoApplicableMethod(f"{template.name}: {variable} has no finite bounds")
    if template.layer is Layer.TRANSPORT:
        plan = _transport_plan(template, variable, bounds, settings)
    elif template.layer is Layer.PHYSICAL:
        plan = _physical_plan(template, variable, bounds, settings)
    else:
        raise NoApplicableMethod(f"{template.name}: no solver for layer {template.layer.value}")
    logging.debug(f"{{AlgoGen}} {plan.line()}")
    return plan


def dual_rule(family: ConstraintFamily, settings: Optional[Settings] = None) -> DualUpdateRule:
    settings = settings or Settings()
    return DualUpdateRule(family.family, family.scope, family.slack, StepSchedule.from_settings(settings))


def synthesize(program: AbstractProgram, settings: Optional[Settings] = None) -> PlanSet:
    """Synthesizes every plan and dual update rule of ``program``"""

    settings = settings or Settings()
    boxes = program.boxes_map
    plans = []
    for template in program.roles:
        variable = _own_variable(template, program.controlled, template.layer)
        bounds = boxes.get(variable, DEFAULT_BOUNDS.get(variable, (-math.inf, math.inf)))
        plans.append(synthesize_plan(template, settings, bounds, program.controlled))
    rules = tuple(dual_rule(family, settings) for family in program.families)
    logging.info(f"{{AlgoGen}} Synthesized {len(plans)} plan(s) and {len(rules)} dual update rule(s)")
    return PlanSet(tuple(plans), rules, program)


# Execution #


def _evaluate(expr: Expression, env: Mapping[Expression, float]) -> float:
    try:
        return ex.evaluate(expr, env)
    except KeyError as error:
        raise MissingParameter(f"no value for {error.args[0].render()}") from None


def _require(state: Mapping[str, float], key: str) -> float:
    try:
        return float(state[key])
    except KeyError:
        raise MissingParameter(f"the register snapshot has no {key!r}") from None


def _clip(value: float, bounds: Box) -> float:
    return min(max(value, bounds[0]), bounds[1])


def _maximize(objective, bounds: Box, current: float) -> float:
    lo, hi = bounds
    if hi - lo < 1e-9:
        return lo
    result = minimize_scalar(lambda g: -objective(g), bounds=(lo, hi), method="bounded", options={"xatol": 1e-5})
    candidates = [current, lo, hi, float(result.x)]
    # a flat objective keeps the knob where it is
    return max(candidates, key=lambda g: (objective(g), -abs(g - current)))


def solve_local(
    plan: SolverPlan,
    duals: Mapping[Expression, float],
    state: Mapping[str, float],
    bounds: Optional[Box] = None,
) -> Dict[str, float]:
    """Solves one subproblem for the received dual values and the register snapshot

    Transport plans need the current value of their variable only for
    ``projected_gradient``. Physical plans need ``lnkpwr`` (gain in dB),
    ``channel_gain``, ``interference`` (mW) and ``scale`` (packets/s per bit/s/Hz)
    and, outside of best response, ``price``: the interference price per mW
    reported by the receivers this transmitter disturbs

    :param duals: Values of the plan's dual references, e.g. ``{DualSum(0, 'seslnk'): 0.4}``
    :param bounds: Overrides the plan's bounds (per-entity bound rules)
    :returns: ``{variable: value}``, always within bounds
    :raises MissingParameter: If a dual or a register is missing
    :raises ValueError: If a dual value is negative
    """

    if any(value < 0 for value in duals.values()):
        raise ValueError("dual coefficients must be nonnegative")
    bounds = bounds or plan.bounds
    lo, hi = bounds
    if plan.layer is Layer.TRANSPORT:
        price = _evaluate(plan.price, duals)
        if plan.method is Method.CLOSED_FORM_RECIPROCAL:
            value = hi if price <= 0 else _clip(plan.coefficient / price, bounds)
        elif plan.method is Method.BOUND_PROJECTION:
            value = hi if plan.coefficient - price > 0 else lo
        else:
            x = VarRef(plan.variable)
            slope = ex.differentiate(plan.local, x)
            value = _clip(_require(state, plan.variable), bounds)
            for _ in range(plan.iterations):
                gradient = _evaluate(slope, {x: value}) - price
                value = _clip(value + plan.step.alpha(1) * gradient, bounds)
        return {plan.variable: value}

    current = _clip(_require(state, plan.variable), bounds)
    env = dict(duals)
    for name, ref in LINK_PARAMETERS.items():
        env[ref] = _require(state, name)
    price = 0.0 if plan.case is Case.CASE1_BEST_RESPONSE else _require(state, "price")
    env[INTERFERENCE_PRICE] = price
    utilities = {0: link_utility(plan.template, plan.high_sinr), 1: ex.neg(ex.mul(INTERFERENCE_PRICE, TX_POWER))}

    def at(gain_db: float) -> Dict[Expression, float]:
        return {**env, TX_POWER: 10.0 ** (gain_db / 10.0)}

    if plan.method is Method.PROJECTED_GRADIENT:
        value = current
        for _ in range(plan.iterations):
            penalized = penalize(plan.case, 0, utilities, at(value))
            # linear in the own power and zero at the reference
            slope = _evaluate(penalized.total, {**at(value), TX_POWER: 10.0 ** (value / 10.0) + 1.0})
            gradient = slope * 10.0 ** (value / 10.0) * DB_SLOPE
            move = plan.step.alpha(1) * gradient
            move = max(-plan.max_step, min(plan.max_step, move))
            value = _clip(value + move, bounds)
        return {plan.variable: value}

    penalized = penalize(plan.case, 0, utilities, at(current))
    target = _maximize(lambda gain_db: _evaluate(penalized.total, at(gain_db)), bounds, current)
    if plan.method is Method.DPL:
        target = current + max(-plan.max_step, min(plan.max_step, target - current))
    return {plan.variable: _clip(target, bounds)}


def dual_update(lam: float, slack: float, rule: Union[DualUpdateRule, StepSchedule], k: int) -> float:
    """Projected subgradient step: ``max(0, lam + alpha_k * slack)``"""

    step = rule.step if isinstance(rule, DualUpdateRule) else rule
    return max(0.0, lam + step.alpha(k) * slack)


def penalize(
    case: Case,
    agent: int,
    utilities: Mapping[int, Expression],
    reference: Mapping[Expression, float],
) -> PenalizedUtility:
    """Builds the penalized utility of ``agent`` for a distributed case

    ``utilities`` maps every agent to its own utility ``U_j``, the joint
    utility being their sum; the variables of agent ``i`` are the references
    indexed ``i``. Case 1 keeps ``U_i`` with no penalty, case 2 linearizes
    everything around ``reference`` and case 3 keeps the agent's own
    nonlinearity while linearizing the others' sensitivity

    :raises NotDifferentiable: If a gradient cannot be evaluated at ``reference``
    :raises MissingParameter: If ``reference`` misses a value
    """

    own_utility = utilities[agent]
    own = sorted(
        {
            node
            for expr in utilities.values()
            for node in ex.walk(expr)
            if isinstance(node, VarRef) and node.index == agent
        },
        key=lambda node: node.render(),
    )
    if case is Case.CASE1_BEST_RESPONSE:
        return PenalizedUtility(case, agent, own_utility, ex.ZERO)

    def gradient(expr: Expression, var: VarRef) -> float:
        try:
            return _evaluate(ex.differentiate(expr, var), reference)
        except (ValueError, ZeroDivisionError, AbstractionError) as error:
            raise NotDifferentiable(f"agent {agent}: {error}") from None

    others = {j: utility for j, utility in utilities.items() if j != agent}
    if case is Case.CASE2_GRADIENT:
        theta_terms = []
        gamma_terms = []
        for var in own:
            delta = ex.add(var, ex.Constant(-_evaluate(var, reference)))
            theta_terms.append(ex.mul(ex.Constant(gradient(own_utility, var)), delta))
            weight = sum(gradient(utility, var) for utility in others.values())
            gamma_terms.append(ex.mul(ex.Constant(weight), delta))
        return PenalizedUtility(case, agent, ex.add(*theta_terms), ex.add(*gamma_terms))

    frozen = {
        node: ex.Constant(_evaluate(node, reference))
        for node in ex.walk(own_utility)
        if isinstance(node, VarRef) and node.index != agent
    }
    theta = ex.transform(own_utility, lambda node: frozen.get(node))
    gamma_terms = []
    for var in own:
        weight = sum(gradient(utility, var) for utility in others.values())
        gamma_terms.append(ex.mul(ex.Constant(weight), var))
    return PenalizedUtility(case, agent, theta, ex.add(*gamma_terms))
