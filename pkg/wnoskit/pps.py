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
The programmable protocol stack run by every node.

A ``NodeStack`` owns a register plane (what the node measured or was told),
a decision plane (the solver plans installed on it) and the knobs of its
protocol layers. Nodes never touch each other's state: everything they
learn from the rest of the network arrives as a ``SignalingMessage``.
"""

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

from . import expressions as ex
from .algogen import CAPACITY, POWER, PlanSet, SolverPlan, dual_update, solve_local
from .channel import FEC_RATES, interference_sensitivity
from .config import Settings
from .decomposer import AbstractProgram, RoleTemplate
from .errors import InstantiationError, RoleMismatch, StaleRegisters, StopPropagation, UnknownElement
from .expressions import Dual, DualSum, Expression, VarRef
from .instantiation import InstancePool
from .schema import DEFAULT_BOUNDS, EntityType, Layer
from .signals import Filters, MessageKind, SignalingMessage, SignalRouter

Box = Tuple[float, float]

GAIN_RANGE = (0.0, 30.0)
MODULATIONS = ("gmsk", "bpsk", "qpsk")


@dataclass
class RegisterPlane:
    """What a node knows about the network

    Dual values are stored with the slot they were emitted at, and a value is
    only replaced by a strictly fresher one from the same source
    """

    noise_plus_interference: Dict[int, float] = field(default_factory=dict)
    channel_gain: Dict[int, float] = field(default_factory=dict)
    cross_gain: Dict[Tuple[int, int], float] = field(default_factory=dict)
    queue_len: Dict[int, float] = field(default_factory=dict)
    measured_link_rate: Dict[int, float] = field(default_factory=dict)
    received_signal: Dict[int, float] = field(default_factory=dict)
    received_duals: Dict[Tuple[int, int], Tuple[float, int]] = field(default_factory=dict)
    interference_prices: Dict[int, Tuple[float, int]] = field(default_factory=dict)
    neighbor_powers: Dict[int, float] = field(default_factory=dict)
    own_duals: Dict[Tuple[int, int], float] = field(default_factory=dict)
    scale: float = 0.0

    def record_dual(self, family: int, link: int, value: float, timestamp: int) -> bool:
        """Stores a received dual value. Returns ``False`` for stale or duplicate reports"""

        current = self.received_duals.get((family, link))
        if current is not None and timestamp <= current[1]:
            return False
        self.received_duals[(family, link)] = (value, timestamp)
        return True

    def record_price(self, link: int, value: float, timestamp: int) -> bool:
        current = self.interference_prices.get(link)
        if current is not None and timestamp <= current[1]:
            return False
        self.interference_prices[link] = (value, timestamp)
        return True

    def measure(self, **measurements: Mapping):
        """Overwrites measured registers, e.g. ``measure(queue_len={3: 12.0})``"""

        for name, values in measurements.items():
            register = getattr(self, name)
            for key, value in values.items():
                if name in ("noise_plus_interference", "neighbor_powers") and value < 0:
                    raise ValueError(f"{name} cannot be negative")
                register[key] = value


@dataclass
class DecisionPlane:
    """The plans installed on a node and the period (in slots) of every layer

    ``installed`` maps a layer to (role template, plan, entity id) triples
    """

    installed: Dict[Layer, List[Tuple[RoleTemplate, SolverPlan, int]]] = field(default_factory=dict)
    timescales: Dict[Layer, int] = field(default_factory=dict)

    @classmethod
    def empty(cls, settings: Settings) -> "DecisionPlane":
        return cls(
            {},
            {Layer.PHYSICAL: settings.physical_period, Layer.TRANSPORT: settings.transport_period},
        )

    @property
    def ratio(self) -> int:
        return self.timescales[Layer.TRANSPORT] // self.timescales[Layer.PHYSICAL]

    def due(self, layer: Layer, t: int) -> bool:
        return t > 0 and t % self.timescales[layer] == 0

    def plans(self, layer: Layer) -> List[Tuple[RoleTemplate, SolverPlan, int]]:
        return self.installed.get(layer, [])


@dataclass
class LayerKnobs:
    """The parameters a node's protocol stack exposes to its solvers"""

    rate: Dict[int, float] = field(default_factory=dict)
    window: int = 16
    packet_size: int = 2048
    next_hop: Dict[int, int] = field(default_factory=dict)
    fec_rate: float = 0.2
    max_retx: int = 3
    tx_gain_db: Dict[int, float] = field(default_factory=dict)
    band: Dict[int, int] = field(default_factory=dict)
    modulation: str = "gmsk"

    def __post_init__(self):
        if not any(math.isclose(self.fec_rate, rate) for rate in FEC_RATES):
            raise ValueError(f"fec_rate must be one of {FEC_RATES}!")
        if self.modulation not in MODULATIONS:
            raise ValueError(f"modulation must be one of {', '.join(MODULATIONS)}!")

    def set_rate(self, session: int, value: float):
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"invalid rate {value} for session {session}")
        self.rate[session] = float(value)

    def set_gain(self, link: int, value: float):
        if not GAIN_RANGE[0] <= value <= GAIN_RANGE[1]:
            raise ValueError(f"transmit gain {value} dB of link {link} is out of range")
        self.tx_gain_db[link] = float(value)

    def as_dict(self) -> dict:
        return {
            "rate": {str(k): v for k, v in sorted(self.rate.items())},
            "tx_gain_db": {str(k): v for k, v in sorted(self.tx_gain_db.items())},
            "fec_rate": self.fec_rate,
            "modulation": self.modulation,
        }


@dataclass(frozen=True)
class NodeView:
    """The part of the topology a node is told about at deployment

    :param sources: Sessions originating at the node
    :param out_links: Links the node transmits on
    :param in_links: Links the node receives on, whose dual coefficients it updates
    :param report_targets: For every incoming link, the (node, hops) pairs its dual reports go to
    :param price_targets: For every incoming link, the same-band transmitters its interference price goes to
    """

    node: int
    sources: Tuple[int, ...] = ()
    out_links: Tuple[int, ...] = ()
    in_links: Tuple[int, ...] = ()
    report_targets: Mapping[int, Tuple[Tuple[int, int], ...]] = field(default_factory=dict)
    price_targets: Mapping[int, Tuple[Tuple[int, int], ...]] = field(default_factory=dict)


@dataclass
class TickResult:
    writes: Dict[str, Dict[int, float]] = field(default_factory=dict)
    messages: List[SignalingMessage] = field(default_factory=list)


def entity_bounds(program: AbstractProgram, pool: InstancePool) -> Dict[VarRef, Box]:
    """Resolves the program's boxes and bound rules against a run time topology

    Rules whose scope does not exist in the topology (e.g. a session the
    network does not carry) are skipped
    """

    boxes = program.boxes_map
    bounds: Dict[VarRef, Box] = {}
    for rule in program.bound_rules:
        try:
            _, members = pool.members(rule.scope, {})
        except (InstantiationError, UnknownElement) as error:
            logging.warning(f"{{PPS}} Skipping bound rule '{rule.render()}': {error}")
            continue
        for member in members:
            ref = VarRef(rule.attribute, member)
            box = bounds.get(ref, boxes.get(rule.attribute, DEFAULT_BOUNDS.get(rule.attribute, (0.0, 0.0))))
            bounds[ref] = rule.apply(box)
    return bounds


class NodeStack:
    """
    The protocol stack of one node

    :param view: What the node knows of the topology
    :type view: class: ``NodeView``
    :param pool: The run time instances, used to resolve lifted sums
    :type pool: class: ``InstancePool``
    :param settings: The tunables (timescales, staleness bound, knob initialization)
    :type settings: class: ``Settings``
    :param rng: The stream used when ``init_mode`` is ``random``
    :type rng: class: ``random.Random``, optional
    """

    def __init__(
        self,
        view: NodeView,
        pool: InstancePool,
        settings: Settings,
        rng: Optional[random.Random] = None,
        fec_rate: float = 0.2,
    ):
        self.node_id = view.node
        self.view = view
        self.pool = pool
        self.settings = settings
        self.rng = rng or random.Random(settings.rng_seed)
        self.registers = RegisterPlane()
        self.decision = DecisionPlane.empty(settings)
        self.knobs = LayerKnobs(fec_rate=fec_rate)
        self.program: Optional[AbstractProgram] = None
        self.bounds: Dict[VarRef, Box] = {}
        self.price_plan: Optional[SolverPlan] = None
        self.rejected = 0
        self.dropped = 0
        self.stale_events = 0
        self.executions = {Layer.TRANSPORT: 0, Layer.PHYSICAL: 0}
        self._pending: Optional[Tuple[AbstractProgram, DecisionPlane, Optional[SolverPlan]]] = None
        self._updated: Set[Tuple[int, int]] = set()
        self._interesting: FrozenSet[Tuple[int, int]] = frozenset()
        # refreshed on every activation, see _activate()
        self._report_sources = Filters.Source(())
        self._report_families = Filters.Family(())
        self.router = SignalRouter()
        self.router.register_handler(self._reject_invalid, group=-1)
        self.router.register_handler(
            self._on_dual_report,
            Filters.Kind(MessageKind.DUAL_REPORT),
            self._report_sources,
            self._report_families,
        )
        self.router.register_handler(self._on_gradient_report, Filters.Kind(MessageKind.GRADIENT_REPORT))
        self.router.register_handler(self._drop_unknown, Filters.Kind(MessageKind.DUAL_REPORT))

    def __repr__(self):
        return f"NodeStack({self.node_id})"

    # Installation #

    def _role_entries(
        self, program: AbstractProgram, plans: PlanSet, layers: Sequence[Layer]
    ) -> Dict[Layer, List[Tuple[RoleTemplate, SolverPlan, int]]]:
        installed: Dict[Layer, List[Tuple[RoleTemplate, SolverPlan, int]]] = {}
        wanted = [
            (Layer.TRANSPORT, EntityType.SESSION, self.view.sources),
            (Layer.PHYSICAL, EntityType.LINK, self.view.out_links),
        ]
        for layer, entity_type, entities in wanted:
            if layer not in layers:
                continue
            for entity in entities:
                template = program.role(layer, entity_type, entity)
                if template is None:
                    raise RoleMismatch(
                        f"node {self.node_id}: the program has no {layer.value} role for {entity_type.value} {entity}"
                    )
                installed.setdefault(layer, []).append((template, plans.plan_for(template), entity))
        return installed

    def install(
        self, program: AbstractProgram, plans: PlanSet, layers: Sequence[Layer] = (Layer.TRANSPORT, Layer.PHYSICAL)
    ) -> DecisionPlane:
        """Installs ``program`` for the roles this node plays

        The first installation takes effect at once and initializes the knobs;
        later ones replace the running program at the next tick boundary

        :param layers: The layers to control, the others keep their knob values
        :raises RoleMismatch: If a role of the node has no template in ``program``
        """

        installed = self._role_entries(program, plans, layers)
        plane = DecisionPlane(installed, dict(self.decision.timescales))
        price_plan = None
        if Layer.PHYSICAL in layers and self.view.in_links:
            for template in program.roles:
                if template.layer is Layer.PHYSICAL and template.index is None:
                    price_plan = plans.plan_for(template)
        if self.program is None:
            self._activate(program, plane, price_plan)
        else:
            self._pending = (program, plane, price_plan)
        logging.debug(
            f"(node {self.node_id}) {{PPS}} Installed "
            + ", ".join(f"{len(entries)} {layer.value} plan(s)" for layer, entries in installed.items())
        )
        return plane

    def _activate(self, program: AbstractProgram, plane: DecisionPlane, price_plan: Optional[SolverPlan]):
        first = self.program is None
        self.program = program
        self.decision = plane
        self.price_plan = price_plan
        self.bounds = entity_bounds(program, self.pool)
        interesting = set()
        for _, plan, entity in plane.plans(Layer.TRANSPORT):
            interesting |= set(self._dual_keys(plan, EntityType.SESSION, entity))
        for _, plan, entity in plane.plans(Layer.PHYSICAL):
            interesting |= set(self._dual_keys(plan, EntityType.LINK, entity))
        self._interesting = frozenset(interesting)
        self._report_families.families = {family for family, _ in interesting}
        self._report_sources.sources = {link for _, link in interesting}
        for key in interesting:
            self.registers.received_duals.setdefault(key, (0.0, 0))
        for family in program.families:
            for link in self.view.in_links:
                self.registers.own_duals.setdefault((family.family, link), 0.0)
        if first:
            self.initialize_knobs()

    def box(self, attribute: str, entity: int) -> Box:
        default = self.program.boxes_map.get(attribute, DEFAULT_BOUNDS.get(attribute)) if self.program else None
        return self.bounds.get(VarRef(attribute, entity), default or DEFAULT_BOUNDS[attribute])

    def initialize_knobs(self):
        """Rates at the middle of their box (or uniformly drawn), gains at ``init_gain_db``"""

        random_init = self.settings.init_mode == "random"
        for session in self.view.sources:
            lo, hi = self.box("sesrate", session)
            self.knobs.set_rate(session, self.rng.uniform(lo, hi) if random_init else (lo + hi) / 2.0)
        for link in self.view.out_links:
            lo, hi = self.box("lnkpwr", link)
            gain = self.rng.uniform(lo, hi) if random_init else min(max(self.settings.init_gain_db, lo), hi)
            self.knobs.set_gain(link, gain)

    # Dual coefficients #

    def _dual_keys(self, plan: SolverPlan, entity_type: EntityType, entity: int) -> List[Tuple[int, int]]:
        keys = []
        for ref in plan.dual_refs:
            if isinstance(ref, DualSum):
                _, members = self.pool.members(ref.element, {entity_type: entity})
                keys.extend((ref.family, member) for member in members)
            elif ref.index is None:
                keys.append((ref.family, entity))
            else:
                keys.append((ref.family, ref.index))
        return keys

    def _dual_values(self, plan: SolverPlan, entity_type: EntityType, entity: int, t: int) -> Dict[Expression, float]:
        values: Dict[Expression, float] = {}
        oldest = t
        for ref in plan.dual_refs:
            if isinstance(ref, DualSum):
                _, members = self.pool.members(ref.element, {entity_type: entity})
                keys = [(ref.family, member) for member in members]
            else:
                keys = [(ref.family, entity if ref.index is None else ref.index)]
            total = 0.0
            for key in keys:
                value, stamp = self.registers.received_duals.get(key, (0.0, 0))
                total += value
                oldest = min(oldest, stamp)
            values[ref] = total
        if t - oldest > self.settings.staleness_bound:
            raise StaleRegisters(f"dual coefficients are {t - oldest} slot(s) old")
        return values

    def update_duals(self, t: int, slack: Mapping[Tuple[int, int], float], plans: PlanSet, k: int):
        """Runs the dual update of every incoming link for the measured ``slack``
        (keyed by (family, link))"""

        for (family, link), value in slack.items():
            if link not in self.view.in_links:
                continue
            current = self.registers.own_duals.get((family, link), 0.0)
            self.registers.own_duals[(family, link)] = dual_update(current, value, plans.rule(family), k)
            self._updated.add((family, link))

    # Signals #

    def _reject_invalid(self, _, message: SignalingMessage):
        if message.kind is MessageKind.DUAL_REPORT and message.payload < 0:
            self.rejected += 1
            logging.warning(f"(node {self.node_id}) {{PPS}} Rejected negative dual from link {message.source}")
            raise StopPropagation
        if message.kind is MessageKind.GRADIENT_REPORT and message.payload < 0:
            self.rejected += 1
            logging.warning(f"(node {self.node_id}) {{PPS}} Rejected negative price from link {message.source}")
            raise StopPropagation
        if message.destination != self.node_id:
            self.dropped += 1
            logging.warning(f"(node {self.node_id}) {{PPS}} Dropped a message addressed to node {message.destination}")
            raise StopPropagation

    def _on_dual_report(self, node, message: SignalingMessage):
        # the filters pass the cross product of families and sources
        if (message.family, message.source) not in self._interesting:
            return self._drop_unknown(node, message)
        self.registers.record_dual(message.family, message.source, message.payload, message.timestamp)

    def _drop_unknown(self, _, message: SignalingMessage):
        self.dropped += 1
        logging.info(
            f"(node {self.node_id}) {{PPS}} Dropped a dual report of family {message.family} "
            f"from unknown link {message.source}"
        )

    def _on_gradient_report(self, _, message: SignalingMessage):
        self.registers.record_price(message.source, message.payload, message.timestamp)

    def handle_signal(self, message: SignalingMessage) -> bool:
        """Delivers ``message`` to this node's registers. Duplicates and older
        reports leave the registers untouched

        :returns: ``False`` if the message was rejected or dropped
        """

        return self.router.dispatch(self, message)

    # Ticks #

    def _price(self, link: int) -> float:
        total = 0.0
        for victim, (value, _) in self.registers.interference_prices.items():
            total += value * self.registers.cross_gain.get((link, victim), 0.0)
        return total

    def _physical_state(self, link: int) -> Dict[str, float]:
        return {
            POWER: self.knobs.tx_gain_db[link],
            "channel_gain": self.registers.channel_gain[link],
            "interference": self.registers.noise_plus_interference[link],
            "scale": self.registers.scale,
            "price": self._price(link),
        }

    def _run(self, layer: Layer, t: int, result: TickResult):
        ran = False
        for template, plan, entity in self.decision.plans(layer):
            entity_type = EntityType.SESSION if layer is Layer.TRANSPORT else EntityType.LINK
            try:
                duals = self._dual_values(plan, entity_type, entity, t)
            except StaleRegisters as error:
                self.stale_events += 1
                logging.warning(f"(node {self.node_id}) {{PPS}} Stale registers for {template.name} {entity}, holding knobs: {error}")
                continue
            if layer is Layer.TRANSPORT:
                state = {plan.variable: self.knobs.rate.get(entity, 0.0)}
                value = solve_local(plan, duals, state, self.box(plan.variable, entity))[plan.variable]
                self.knobs.set_rate(entity, value)
                result.writes.setdefault("rate", {})[entity] = value
            else:
                state = self._physical_state(entity)
                value = solve_local(plan, duals, state, self.box(plan.variable, entity))[plan.variable]
                self.knobs.set_gain(entity, value)
                result.writes.setdefault("tx_gain_db", {})[entity] = value
            ran = True
        if ran:
            self.executions[layer] += 1

    def _reports(self, t: int) -> List[SignalingMessage]:
        messages = []
        for family, link in sorted(self._updated):
            value = self.registers.own_duals[(family, link)]
            for destination, hops in self.view.report_targets.get(link, ()):
                messages.append(
                    SignalingMessage(MessageKind.DUAL_REPORT, link, value, t, destination, hops, family)
                )
        if self.price_plan is not None:
            for link in self.view.in_links:
                price = self.interference_price(link)
                for destination, hops in self.view.price_targets.get(link, ()):
                    messages.append(SignalingMessage(MessageKind.GRADIENT_REPORT, link, price, t, destination, hops))
        self._updated.clear()
        return messages

    def interference_price(self, link: int) -> float:
        """``-(d template / d lnkcap) * d c / d I`` at the receiver of ``link``, per mW of interference"""

        signal = self.registers.received_signal.get(link)
        interference = self.registers.noise_plus_interference.get(link)
        if self.price_plan is None or interference is None or signal is None:
            return 0.0
        env = {}
        for ref in self.price_plan.dual_refs:
            if isinstance(ref, Dual) and ref.index is None:
                env[ref] = self.registers.own_duals.get((ref.family, link), 0.0)
            else:
                env[ref] = 0.0
        env[VarRef(CAPACITY)] = 0.0
        env[VarRef(POWER)] = 0.0
        weight = ex.evaluate(ex.differentiate(self.price_plan.template, VarRef(CAPACITY)), env)
        sensitivity = interference_sensitivity(self.registers.scale, signal, interference)
        return max(0.0, weight * sensitivity)

    def tick(self, t: int) -> TickResult:
        """Runs the plans due at slot ``t`` and emits the reports of the dual
        coefficients updated since the last tick

        Transport plans run every ``transport_period`` slots, physical ones
        every ``physical_period``. Plans whose dual inputs are older than
        ``staleness_bound`` hold their knobs
        """

        if self._pending is not None:
            self._activate(*self._pending)
            self._pending = None
        result = TickResult()
        for layer in (Layer.PHYSICAL, Layer.TRANSPORT):
            if layer in self.decision.timescales and self.decision.due(layer, t):
                self._run(layer, t, result)
        result.messages = self._reports(t)
        return result

    def snapshot(self, t: int) -> dict:
        """The per-node state dump record"""

        return {
            "slot": t,
            "node": self.node_id,
            "knobs": self.knobs.as_dict(),
            "lambda": {
                f"{ex.dual_name(family)}_{link:02d}": value
                for (family, link), value in sorted(self.registers.own_duals.items())
            },
        }
