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
Dual decomposition of instantiated control problems.

The pipeline is ``instantiate_problem -> build_dual -> build_tree ->
decompose_cross_layer -> decompose_per_entity -> lift``. Every stage consumes
immutable values and returns new ones, ``compile_problem`` runs them all and
keeps every intermediate result for the ``compile`` dump.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple

from . import expressions as ex
from .dsl import Constraint, ControlProblemSpec, Sense
from .errors import (
    AmbiguousMatch,
    DecompositionError,
    InstantiationError,
    MissingInstance,
    NoMatchingInstance,
    NonSeparable,
    NotNormalized,
    UnattributableTerm,
    UnsupportedConstraintSense,
)
from .expressions import Dual, DualSum, Expression, SumOver, VarRef
from .instantiation import InstancePool
from .schema import (
    DEFAULT_BOUNDS,
    GLOBAL_ELEMENTS,
    EntityType,
    Layer,
    NetworkSchema,
    build_default_schema,
    split_path,
)

Box = Tuple[float, float]


@dataclass(frozen=True)
class ConstraintFamily:
    """One constraint of the program, dualized as ``slack <= 0`` for every member of ``scope``

    :param family: The dual family index (``lbd`` is 0, ``lbd1`` is 1, ...)
    :param scope: The quantifier path, ``None`` for a single constraint
    :param entity_type: The entity type of the quantifier members
    :param slack: The abstract ``lhs - rhs`` of the constraint in ``<=`` form
    """

    family: int
    scope: Optional[str]
    entity_type: Optional[EntityType]
    slack: Expression
    strict: bool = False
    line: int = field(default=0, compare=False)

    def render(self) -> str:
        scope = self.scope or "-"
        return f"family={ex.dual_name(self.family)} scope={scope} slack={self.slack.render()} <= 0"


@dataclass(frozen=True)
class InstantiatedConstraint:
    family: int
    index: int
    lhs: Expression
    rhs: Expression

    @property
    def dual(self) -> Dual:
        return Dual(self.family, self.index)

    @property
    def slack(self) -> Expression:
        return ex.canonical(ex.add(self.lhs, ex.neg(self.rhs)))


@dataclass(frozen=True)
class BoundRule:
    """A box constraint on ``attribute`` for every member of ``scope``, kept out of the dual"""

    scope: str
    attribute: str
    rel: str
    value: float

    def render(self) -> str:
        return f"scope={self.scope} attribute={self.attribute} rel={self.rel} value={ex.Constant(self.value).render()}"

    def apply(self, box: Box) -> Box:
        lo, hi = box
        if self.rel == "le":
            return lo, min(hi, self.value)
        return max(lo, self.value), hi


@dataclass(frozen=True)
class ProblemInstance:
    """A problem with every virtual element replaced by pool instances

    ``utility`` is always to be maximized: minimization problems are negated here
    and ``report`` negates values back
    """

    spec: ControlProblemSpec
    pool: InstancePool = field(compare=False)
    utility: Expression
    constraints: Tuple[InstantiatedConstraint, ...]
    families: Tuple[ConstraintFamily, ...]
    bounds: Tuple[Tuple[VarRef, Box], ...]
    decision: FrozenSet[str]
    bound_rules: Tuple[BoundRule, ...] = ()

    @property
    def duals(self) -> Tuple[Dual, ...]:
        return tuple(constraint.dual for constraint in self.constraints)

    @property
    def bounds_map(self) -> Dict[VarRef, Box]:
        return dict(self.bounds)

    def report(self, value: float) -> float:
        return -value if self.spec.sense is Sense.MINIMIZE else value


@dataclass(frozen=True)
class ExprTree:
    """The dual as a three-level tree: the root, its addends, and each addend
    split into its dual factor (``1`` if none) and its primal part"""

    root: Expression
    level1: Tuple[Expression, ...]
    level2: Tuple[Tuple[Expression, Expression], ...]

    def reassemble(self) -> Expression:
        return ex.add(*(ex.mul(dual, primal) for dual, primal in self.level2))


@dataclass(frozen=True)
class Subproblem:
    """A layer group (``entity`` is ``None``) or a per-entity subproblem.
    ``layer`` is ``None`` for the dual-update group"""

    layer: Optional[Layer]
    entity: Optional[Tuple[EntityType, int]]
    expression: Expression
    variables: FrozenSet[VarRef] = frozenset()
    param_refs: FrozenSet[Dual] = frozenset()

    @property
    def label(self) -> str:
        layer = self.layer.value if self.layer else "dual-update"
        if self.entity is None:
            return f"layer={layer}"
        entity_type, index = self.entity
        return f"layer={layer} entity={entity_type.value}_{index:02d}"

    def render(self) -> str:
        return f"{self.label}: {self.expression.render()}"


@dataclass(frozen=True)
class RoleTemplate:
    """A lifted subproblem, valid for every entity playing the role. ``index``
    is set when a single entity needs its own template"""

    layer: Layer
    entity_type: EntityType
    expression: Expression
    index: Optional[int] = None

    @property
    def name(self) -> str:
        name = f"{self.layer.value}/{self.entity_type.value}"
        return name if self.index is None else f"{name}[{self.index}]"

    @property
    def attributes(self) -> Tuple[str, ...]:
        return tuple(sorted({node.path for node in ex.walk(self.expression) if isinstance(node, VarRef)}))

    @property
    def dual_refs(self) -> Tuple[Expression, ...]:
        refs = {node for node in ex.walk(self.expression) if isinstance(node, (Dual, DualSum))}
        return tuple(sorted(refs, key=lambda node: node.render()))

    def render(self) -> str:
        return f"role={self.name}: {self.expression.render()}"


@dataclass(frozen=True)
class AbstractProgram:
    """The distributed program, independent of the instances it was compiled from

    :param roles: One template per role
    :param families: The constraint families, each with its own dual update
    :param bound_rules: Box constraints resolved against the run time topology
    :param boxes: The default box of every decision attribute
    :param controlled: The attributes declared as variables
    :param matches: For each entity, the coefficient set matched per family and
        the element it was lifted to. Depends on the pool, so it is not part of equality
    """

    sense: Sense
    utility: Expression
    roles: Tuple[RoleTemplate, ...]
    families: Tuple[ConstraintFamily, ...]
    bound_rules: Tuple[BoundRule, ...]
    boxes: Tuple[Tuple[str, Box], ...]
    controlled: Tuple[str, ...]
    decision: Tuple[str, ...]
    settings: Tuple[Tuple[str, object], ...] = ()
    matches: Tuple[Tuple[Tuple[EntityType, int], int, Tuple[int, ...], str], ...] = field(
        default=(), compare=False
    )

    def role(self, layer: Layer, entity_type: EntityType, index: int) -> Optional[RoleTemplate]:
        """The template entity ``index`` runs for ``layer``: its own one if any, the generic one otherwise"""

        generic = None
        for template in self.roles:
            if template.layer is layer and template.entity_type is entity_type:
                if template.index == index:
                    return template
                if template.index is None:
                    generic = template
        return generic

    def layers(self) -> Set[Layer]:
        return {template.layer for template in self.roles}

    @property
    def boxes_map(self) -> Dict[str, Box]:
        return dict(self.boxes)

    def controls(self, attribute: str) -> bool:
        return attribute in self.controlled

    def dump(self) -> List[str]:
        lines = [template.render() for template in self.roles]
        lines += [family.render() for family in self.families]
        lines += [f"bound {rule.render()}" for rule in self.bound_rules]
        lines += [
            f"box attribute={attribute} lo={ex.Constant(lo).render()} hi={ex.Constant(hi).render()}"
            for attribute, (lo, hi) in self.boxes
        ]
        return lines


# Instantiation #


def decision_attributes(spec: ControlProblemSpec, schema: NetworkSchema) -> FrozenSet[str]:
    """The declared attributes plus every attribute that is a function of one of them
    (``lnkcap`` is a decision quantity as soon as ``lnkpwr`` is controlled)"""

    declared = spec.decision_attributes
    derived = set()
    for element in schema.elements:
        if schema.is_attribute(element.name) and any(
            schema.depends_on(element.name, attribute) for attribute in declared
        ):
            derived.add(element.name)
    return frozenset(declared | derived)


def _members(pool: InstancePool, path: str, bindings: Mapping[EntityType, int]):
    try:
        return pool.members(path, bindings)
    except InstantiationError as error:
        raise MissingInstance(str(error)) from None


def expand_expression(
    expr: Expression, pool: InstancePool, schema: NetworkSchema, bindings: Mapping[EntityType, int]
) -> Expression:
    """Replaces sums over virtual elements with explicit sums and indexes every attribute"""

    if isinstance(expr, SumOver):
        entity_type, members = _members(pool, expr.element, bindings)
        return ex.add(
            *(expand_expression(expr.body, pool, schema, {**bindings, entity_type: member}) for member in members)
        )
    if isinstance(expr, VarRef):
        if expr.index is not None:
            return expr
        owner = schema.attribute_owner(expr.path)
        if owner not in bindings:
            raise MissingInstance(f"{expr.path} is used outside of any {owner.value} scope")
        return VarRef(expr.path, bindings[owner])

    def visit(node):
        if isinstance(node, (SumOver, VarRef)):
            return expand_expression(node, pool, schema, bindings)
        return None

    return ex.transform(expr, visit)


def _normalized(constraint: Constraint) -> List[Tuple[Expression, Expression]]:
    """``(lhs, rhs)`` pairs meaning ``lhs <= rhs``"""

    if constraint.rel == "le":
        return [(constraint.lhs, constraint.rhs)]
    if constraint.rel == "ge":
        return [(constraint.rhs, constraint.lhs)]
    if constraint.rel == "eq":
        return [(constraint.lhs, constraint.rhs), (constraint.rhs, constraint.lhs)]
    raise UnsupportedConstraintSense(f"unsupported relation {constraint.rel!r}")


def _as_bound(lhs: Expression, rhs: Expression, declared: Set[str]) -> Optional[Tuple[str, str, float]]:
    """Recognizes ``a * x + b <= 0`` for a declared attribute ``x``"""

    if any(isinstance(node, SumOver) for side in (lhs, rhs) for node in ex.walk(side)):
        return None
    poly = ex.monomials(ex.add(lhs, ex.neg(rhs)))
    variable = [(monomial, coef) for monomial, coef in poly.items() if monomial]
    if len(variable) != 1 or len(variable[0][0]) != 1:
        return None
    ((atom, power),), coef = variable[0]
    if not isinstance(atom, VarRef) or power != 1 or atom.path not in declared:
        return None
    value = -poly.get((), 0.0) / coef
    return atom.path, "le" if coef > 0 else "ge", value


def _quantifier_type(pool: InstancePool, scope: Optional[str]) -> Optional[EntityType]:
    if scope is None:
        return None
    element = pool.schema.element(split_path(scope)[-1][0])
    return element.member_entity_type


def instantiate_problem(
    spec: ControlProblemSpec, pool: InstancePool, schema: Optional[NetworkSchema] = None
) -> ProblemInstance:
    """Replaces every virtual element of ``spec`` with the instances of ``pool``

    Sums become explicit finite sums, each quantified constraint becomes one
    constraint per quantifier member, and single-variable constraints against
    a constant are folded into the variables' boxes

    :raises MissingInstance: If ``spec`` references an element ``pool`` has no instance for
    """

    schema = schema or pool.schema
    decision = decision_attributes(spec, schema)
    declared = spec.decision_attributes
    utility = expand_expression(spec.utility, pool, schema, {})
    if spec.sense is Sense.MINIMIZE:
        utility = ex.neg(utility)

    bounds: Dict[VarRef, Box] = {}
    for decl in spec.variables:
        _, members = _members(pool, decl.scope, {})
        for member in members:
            ref = VarRef(decl.attribute, member)
            lo, hi = bounds.get(ref, (-math.inf, math.inf))
            bounds[ref] = (max(lo, decl.bounds[0]), min(hi, decl.bounds[1]))

    families: List[ConstraintFamily] = []
    constraints: List[InstantiatedConstraint] = []
    rules: List[BoundRule] = []
    for constraint in spec.constraints:
        if constraint.strict:
            logging.warning(
                f"{{Decomposer}} Strict constraint '{constraint.render()}' is compiled as non-strict"
            )
        for lhs, rhs in _normalized(constraint):
            bound = _as_bound(lhs, rhs, declared)
            if bound is not None:
                attribute, rel, value = bound
                if constraint.scope is None:
                    raise MissingInstance(f"the bound on {attribute} needs a quantifier")
                rules.append(BoundRule(constraint.scope, attribute, rel, value))
                continue
            family = len(families)
            slack = ex.canonical(ex.add(lhs, ex.neg(rhs)))
            families.append(
                ConstraintFamily(
                    family,
                    constraint.scope,
                    _quantifier_type(pool, constraint.scope),
                    slack,
                    constraint.strict,
                    constraint.line,
                )
            )
            if constraint.scope is None:
                targets = [(None, 0)]
            else:
                entity_type, members = _members(pool, constraint.scope, {})
                targets = [(entity_type, member) for member in members]
            for entity_type, member in targets:
                scope = {} if entity_type is None else {entity_type: member}
                constraints.append(
                    InstantiatedConstraint(
                        family,
                        member,
                        expand_expression(lhs, pool, schema, scope),
                        expand_expression(rhs, pool, schema, scope),
                    )
                )

    for rule in rules:
        entity_type, members = _members(pool, rule.scope, {})
        if schema.attribute_owner(rule.attribute) is not entity_type:
            raise MissingInstance(f"{rule.scope} does not range over the owners of {rule.attribute}")
        for member in members:
            ref = VarRef(rule.attribute, member)
            bounds[ref] = rule.apply(bounds.get(ref, DEFAULT_BOUNDS.get(rule.attribute, (-math.inf, math.inf))))
    for ref, (lo, hi) in bounds.items():
        if lo > hi:
            raise DecompositionError(f"the box of {ref.render()} is empty")

    logging.info(
        f"{{Decomposer}} Instantiated {len(constraints)} constraint(s) in {len(families)} "
        f"family(ies), {len(rules)} folded bound(s)"
    )
    return ProblemInstance(
        spec=spec,
        pool=pool,
        utility=utility,
        constraints=tuple(constraints),
        families=tuple(families),
        bounds=tuple(sorted(bounds.items(), key=lambda item: item[0].render())),
        decision=decision,
        bound_rules=tuple(rules),
    )


# Dualization #


def build_dual(instance: ProblemInstance) -> Expression:
    """Returns the Lagrangian ``U(x) + sum_j lbd_j (rhs_j - lhs_j)`` in canonical form

    :raises UnsupportedConstraintSense: If a constraint has no dual family
    """

    terms = [instance.utility]
    known = {family.family for family in instance.families}
    for constraint in instance.constraints:
        if constraint.family not in known:
            raise UnsupportedConstraintSense(f"constraint {constraint.dual.render()} has no family")
        terms.append(ex.mul(constraint.dual, ex.add(constraint.rhs, ex.neg(constraint.lhs))))
    dual = ex.canonical(ex.add(*terms))
    logging.debug(f"{{Decomposer}} Dual has {len(ex.addends(dual))} addend(s)")
    return dual


def _split(addend: Expression) -> Tuple[Expression, Expression]:
    poly = ex.monomials(addend)
    if len(poly) != 1:
        raise NotNormalized(f"'{addend.render()}' is not a single product")
    ((monomial, coef),) = poly.items()
    duals = [(atom, power) for atom, power in monomial if isinstance(atom, Dual)]
    if len(duals) > 1 or any(power != 1 for _, power in duals):
        raise NotNormalized(f"'{addend.render()}' is not linear in a single dual coefficient")
    primal = tuple((atom, power) for atom, power in monomial if not isinstance(atom, Dual))
    dual_part = duals[0][0] if duals else ex.ONE
    return dual_part, ex.from_monomial(primal, coef)


def build_tree(dual: Expression) -> ExprTree:
    """Builds the three-level tree of a normalized dual

    :raises NotNormalized: If an addend is not a product of at most one dual coefficient and a primal term
    """

    level1 = tuple(addend for addend in ex.addends(dual) if addend != ex.ZERO)
    level2 = tuple(_split(addend) for addend in level1)
    return ExprTree(dual, level1, level2)


def _decision_refs(expr: Expression, decision: Iterable[str]) -> FrozenSet[VarRef]:
    decision = set(decision)
    return frozenset(node for node in ex.walk(expr) if isinstance(node, VarRef) and node.path in decision)


def _dual_refs(expr: Expression) -> FrozenSet[Dual]:
    return frozenset(node for node in ex.walk(expr) if isinstance(node, Dual))


def decompose_cross_layer(
    tree: ExprTree, schema: Optional[NetworkSchema] = None, decision: Optional[Iterable[str]] = None
) -> List[Subproblem]:
    """Splits the level-1 children of ``tree`` by the layer of their decision variables

    Returns the transport group, the physical group and the dual-update group
    (children without decision variables), in this order. Groups may be empty

    :param decision: Attributes to treat as decision variables, defaults to every layered attribute
    :raises UnattributableTerm: If a child mixes variables of two layers
    """

    schema = schema or build_default_schema()
    if decision is None:
        decision = [
            element.name
            for element in schema.elements
            if schema.is_attribute(element.name) and element.layer is not Layer.NONE
        ]
    decision = frozenset(decision)
    groups: Dict[Optional[Layer], List[Expression]] = {Layer.TRANSPORT: [], Layer.PHYSICAL: [], None: []}
    for child, (_, primal) in zip(tree.level1, tree.level2):
        refs = _decision_refs(primal, decision)
        layers = {schema.element(ref.path).layer for ref in refs}
        if not layers:
            groups[None].append(child)
            continue
        if len(layers) > 1 or Layer.NONE in layers:
            raise UnattributableTerm(
                f"'{child.render()}' mixes variables of layers {', '.join(sorted(l.value for l in layers))}"
            )
        groups.setdefault(layers.pop(), []).append(child)
    result = []
    for layer, children in groups.items():
        expression = ex.add(*children) if children else ex.ZERO
        result.append(
            Subproblem(layer, None, expression, _decision_refs(expression, decision), _dual_refs(expression))
        )
    logging.debug(
        "{Decomposer} Layer groups: "
        + ", ".join(f"{sub.label} ({len(ex.addends(sub.expression))})" for sub in result)
    )
    return result


def decompose_per_entity(group: Subproblem, schema: Optional[NetworkSchema] = None) -> List[Subproblem]:
    """Splits a layer group into one subproblem per entity owning its variables

    :raises NonSeparable: If an addend couples variables of two entities
    """

    schema = schema or build_default_schema()
    if group.expression == ex.ZERO:
        return []
    if group.layer is None:
        return [group]
    decision = {ref.path for ref in group.variables}
    buckets: Dict[Tuple[EntityType, int], List[Expression]] = {}
    for addend in ex.addends(group.expression):
        owners = {(schema.attribute_owner(ref.path), ref.index) for ref in _decision_refs(addend, decision)}
        if len(owners) != 1:
            raise NonSeparable(f"'{addend.render()}' couples {len(owners)} entities")
        buckets.setdefault(owners.pop(), []).append(addend)
    result = []
    for entity in sorted(buckets, key=lambda key: (key[0].value, key[1])):
        expression = ex.add(*buckets[entity])
        result.append(
            Subproblem(
                group.layer, entity, expression, _decision_refs(expression, decision), _dual_refs(expression)
            )
        )
    return result


# Lifting #


def _strip_indices(expr: Expression) -> Expression:
    return ex.transform(expr, lambda node: VarRef(node.path) if isinstance(node, VarRef) else None)


def _lift_one(
    sub: Subproblem, pool: InstancePool, families: Mapping[int, ConstraintFamily]
) -> Tuple[Expression, List[Tuple[int, Tuple[int, ...], str]]]:
    entity_type, index = sub.entity
    # (abstract primal, family) -> [coefficient, dual indices]
    groups: Dict[Tuple[Expression, Optional[int]], List] = {}
    for addend in ex.addends(sub.expression):
        dual, primal = _split(addend)
        poly = ex.monomials(primal)
        ((monomial, coef),) = poly.items() if poly else (((), 0.0),)
        abstract = _strip_indices(ex.from_monomial(monomial))
        family = dual.family if isinstance(dual, Dual) else None
        entry = groups.setdefault((abstract, family), [coef, set()])
        if family is None:
            if entry[1] == set():
                entry[1] = {None}
            else:
                entry[0] += coef
            continue
        if not math.isclose(entry[0], coef):
            raise NonSeparable(
                f"{sub.label}: coefficients of {ex.dual_name(family)} differ across the members of its sum"
            )
        entry[1].add(dual.index)

    terms = []
    matches = []
    for (abstract, family), (coef, indices) in groups.items():
        if family is None:
            terms.append(ex.mul(ex.Constant(coef), abstract))
            continue
        constraint_family = families[family]
        members = tuple(sorted(indices))
        if constraint_family.scope is None:
            reference, element = Dual(family, 0), "-"
        elif members == (index,) and constraint_family.entity_type is entity_type:
            reference, element = Dual(family, None), "self"
        else:
            candidates = []
            for instance in pool.match(members, constraint_family.entity_type):
                if instance.owner is None:
                    candidates.append(instance)
                    continue
                owner_type = pool.schema.element(instance.element).owner.entity_type
                if owner_type is entity_type and instance.owner == index:
                    candidates.append(instance)
            if not candidates:
                raise NoMatchingInstance(
                    f"{sub.label}: no instance holds {ex.dual_name(family)} indices {list(members)}"
                )
            if len(candidates) > 1:
                raise AmbiguousMatch(
                    f"{sub.label}: {', '.join(c.element for c in candidates)} all hold {list(members)}"
                )
            element = candidates[0].element
            reference = DualSum(family, element)
        terms.append(ex.mul(ex.Constant(coef), abstract, reference))
        matches.append((family, members, element))
    return ex.canonical(ex.add(*terms)), matches


def lift(
    subs: Iterable[Subproblem],
    pool: InstancePool,
    instance: Optional[ProblemInstance] = None,
    families: Iterable[ConstraintFamily] = (),
) -> AbstractProgram:
    """Maps instance-indexed subproblems back to role templates

    Each set of dual coefficients a subproblem depends on is matched, as a
    sorted set, against the pool instances and replaced by the sum over the
    matching virtual element. Entities of one role sharing a template get a
    single generic template, the others their own

    :param instance: The instance ``subs`` come from, which supplies the families, boxes and bound rules
    :raises NoMatchingInstance: If a coefficient set matches no instance
    :raises AmbiguousMatch: If it matches more than one
    """

    families = tuple(instance.families) if instance is not None else tuple(families)
    by_family = {family.family: family for family in families}
    lifted: Dict[Tuple[Layer, EntityType], Dict[int, Expression]] = {}
    matches = []
    for sub in subs:
        if sub.layer is None or sub.entity is None:
            continue
        template, matched = _lift_one(sub, pool, by_family)
        lifted.setdefault((sub.layer, sub.entity[0]), {})[sub.entity[1]] = template
        matches.extend((sub.entity, family, members, element) for family, members, element in matched)

    roles = []
    for (layer, entity_type), templates in sorted(lifted.items(), key=lambda item: (item[0][0].value, item[0][1].value)):
        counts = Counter(templates.values())
        generic = min(counts, key=lambda expr: (-counts[expr], expr.render()))
        roles.append(RoleTemplate(layer, entity_type, generic))
        for index, template in sorted(templates.items()):
            if template != generic:
                roles.append(RoleTemplate(layer, entity_type, template, index))

    if instance is not None:
        spec = instance.spec
        boxes, extra = _boxes(spec, pool)
        program = AbstractProgram(
            sense=spec.sense,
            utility=spec.utility,
            roles=tuple(roles),
            families=families,
            bound_rules=tuple(extra) + instance.bound_rules,
            boxes=boxes,
            controlled=tuple(sorted(spec.decision_attributes)),
            decision=tuple(sorted(instance.decision)),
            settings=spec.settings,
            matches=tuple(matches),
        )
    else:
        program = AbstractProgram(
            sense=Sense.MAXIMIZE,
            utility=ex.ZERO,
            roles=tuple(roles),
            families=families,
            bound_rules=(),
            boxes=(),
            controlled=(),
            decision=(),
            matches=tuple(matches),
        )
    logging.info(f"{{Decomposer}} Lifted {len(matches)} coefficient set(s) into {len(roles)} role template(s)")
    return program


def _boxes(spec: ControlProblemSpec, pool: InstancePool) -> Tuple[Tuple[Tuple[str, Box], ...], List[BoundRule]]:
    """Boxes of families ranging over a whole global element, and bound rules for the narrower ones"""

    boxes: Dict[str, Box] = {}
    narrower = []
    global_names = set(GLOBAL_ELEMENTS.values())
    for decl in spec.variables:
        if decl.scope in global_names:
            lo, hi = boxes.get(decl.attribute, (-math.inf, math.inf))
            boxes[decl.attribute] = (max(lo, decl.bounds[0]), min(hi, decl.bounds[1]))
        else:
            narrower.append(decl)
    rules = []
    for decl in narrower:
        box = boxes.setdefault(decl.attribute, DEFAULT_BOUNDS.get(decl.attribute, decl.bounds))
        if decl.bounds[0] > box[0]:
            rules.append(BoundRule(decl.scope, decl.attribute, "ge", decl.bounds[0]))
        if decl.bounds[1] < box[1]:
            rules.append(BoundRule(decl.scope, decl.attribute, "le", decl.bounds[1]))
    return tuple(sorted(boxes.items())), rules


# Whole pipeline #


@dataclass(frozen=True)
class Compilation:
    """Every intermediate result of compiling one program"""

    instance: ProblemInstance
    dual: Expression
    tree: ExprTree
    groups: Tuple[Subproblem, ...]
    subproblems: Tuple[Subproblem, ...]
    program: AbstractProgram

    def dump(self) -> str:
        """The deterministic text dump written by ``compile``"""

        lines = ["# dual", self.dual.render(), "# tree", f"level0: {self.tree.root.render()}"]
        for position, child in enumerate(self.tree.level1):
            lines.append(f"level1[{position}]: {child.render()}")
        for position, (dual, primal) in enumerate(self.tree.level2):
            lines.append(f"level2[{position}]: {dual.render()} | {primal.render()}")
        lines.append("# groups")
        lines += [group.render() for group in self.groups]
        lines.append("# subproblems")
        lines += [sub.render() for sub in self.subproblems]
        lines.append("# templates")
        lines += self.program.dump()
        return "\n".join(lines) + "\n"


def reassemble(subproblems: Iterable[Subproblem]) -> Expression:
    """Sums subproblem expressions back, for comparison with the dual"""

    return ex.canonical(ex.add(*(sub.expression for sub in subproblems)))


def compile_problem(
    spec: ControlProblemSpec, pool: InstancePool, schema: Optional[NetworkSchema] = None
) -> Compilation:
    """Runs the whole decomposition pipeline on ``spec`` instantiated with ``pool``"""

    schema = schema or pool.schema
    instance = instantiate_problem(spec, pool, schema)
    dual = build_dual(instance)
    tree = build_tree(dual)
    groups = decompose_cross_layer(tree, schema, instance.decision)
    subproblems = []
    for group in groups:
        subproblems.extend(decompose_per_entity(group, schema))
    program = lift(subproblems, pool, instance)
    return Compilation(instance, dual, tree, tuple(groups), tuple(subproblems), program)
