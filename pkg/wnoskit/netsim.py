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
The slotted network simulator.

A simpy clock process runs every slot in this order: link capacities from the
current powers, fluid packet delivery, slack measurement and dual updates at
the link receivers, delivery of the signaling messages due this slot and the
tick of every node's stack. Each message travels in its own process, one hop
per slot.
"""

import logging
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import simpy

from . import expressions as ex
from .algogen import CAPACITY, POWER, PlanSet, synthesize
from .channel import db_to_mw, mw_to_db
from .config import Settings
from .decomposer import AbstractProgram, expand_expression
from .dsl import Sense
from .errors import IncompatibleProgram, SimulationError
from .expressions import Expression, VarRef
from .pps import NodeStack, NodeView
from .scenario import Scenario
from .schema import EntityType, Layer
from .signals import SignalingMessage

WNOS_T_P = "WNOS-T-P"
WNOS_T = "WNOS-T"
WNOS_P = "WNOS-P"
NO_CONTROL = "NoControl"
BEST_RESPONSE = "BestResponse"
SCHEMES = (WNOS_T_P, WNOS_T, WNOS_P, NO_CONTROL, BEST_RESPONSE)

# The layers each scheme lets the installed program control
SCHEME_LAYERS = {
    WNOS_T_P: (Layer.TRANSPORT, Layer.PHYSICAL),
    WNOS_T: (Layer.TRANSPORT,),
    WNOS_P: (Layer.PHYSICAL,),
    NO_CONTROL: (),
    BEST_RESPONSE: (),
}

COLUMNS = ("slot", "session_id", "throughput_pps", "node_id", "tx_power_mw", "link_id", "lambda", "utility")
ID_COLUMNS = ("session_id", "node_id", "link_id")
FLOAT_FORMAT = "%.6f"
SESSION = "sesrate"


def link_capacity(scenario: Scenario, link_id: int, powers_mw: Sequence[float]) -> float:
    """The capacity in packets/s of ``link_id`` when the links transmit at
    ``powers_mw`` (one value per link, ascending link id)

    :raises ValueError: If a power is negative
    """

    powers = np.asarray(powers_mw, dtype=float)
    if np.any(powers < 0):
        raise ValueError("powers cannot be negative")
    position = scenario.link_ids.index(link_id)
    return float(scenario.link_channel().capacities(powers)[position])


def check_scheme(program: AbstractProgram, scheme: str) -> Tuple[Layer, ...]:
    """Returns the layers ``scheme`` lets ``program`` control

    :raises ValueError: If ``scheme`` is unknown
    :raises IncompatibleProgram: If the scheme needs a layer the program does not control
        or a constraint family is not quantified over links
    """

    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {', '.join(SCHEMES)}")
    layers = SCHEME_LAYERS[scheme]
    missing = [layer.value for layer in layers if layer not in program.layers()]
    if missing:
        raise IncompatibleProgram(f"{scheme} needs {', '.join(missing)} roles the program does not have")
    for family in program.families:
        if family.entity_type is not EntityType.LINK:
            raise IncompatibleProgram(
                f"constraint family {ex.dual_name(family.family)} is not quantified over links"
            )
    return layers


@dataclass
class LinkState:
    capacity: float = 0.0
    aggregate_rate: float = 0.0
    duals: Dict[int, float] = field(default_factory=dict)
    band: int = 0


class MetricsLog:
    """The long format per-slot log of one run

    Every slot contributes one row per session (throughput), one per
    transmitting node (power, the largest of its links) and one per link
    (the sum of its dual coefficients), each carrying the slot's utility

    :param frame: The rows, with the ``COLUMNS`` columns
    :param contention_end: The slot the first session completed at, ``None`` if none did
    """

    def __init__(self, frame: pd.DataFrame, scheme: str = "", contention_end: Optional[int] = None):
        self.frame = frame
        self.scheme = scheme
        self.contention_end = contention_end

    def __repr__(self):
        return f"MetricsLog({self.scheme!r}, {len(self.frame)} rows)"

    def __len__(self):
        return len(self.frame)

    @classmethod
    def from_rows(cls, rows: List[dict], scheme: str = "", contention_end: Optional[int] = None) -> "MetricsLog":
        frame = pd.DataFrame(rows, columns=list(COLUMNS))
        frame["slot"] = frame["slot"].astype("int64")
        for column in ID_COLUMNS:
            frame[column] = frame[column].astype("Int64")
        for column in ("throughput_pps", "tx_power_mw", "lambda", "utility"):
            frame[column] = frame[column].astype("float64")
        return cls(frame, scheme, contention_end)

    def to_csv(self, path: Optional[str] = None) -> Optional[str]:
        return self.frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    @property
    def slots(self) -> int:
        return 0 if self.frame.empty else int(self.frame["slot"].max()) + 1

    def utility_series(self) -> pd.Series:
        return self.frame.groupby("slot")["utility"].first()

    def throughput(self) -> pd.DataFrame:
        """Slots by sessions"""

        rows = self.frame.dropna(subset=["session_id"])
        return rows.pivot(index="slot", columns="session_id", values="throughput_pps")

    def power(self) -> pd.DataFrame:
        """Slots by nodes, in mW"""

        rows = self.frame.dropna(subset=["node_id"])
        return rows.pivot(index="slot", columns="node_id", values="tx_power_mw")

    def duals(self) -> pd.DataFrame:
        rows = self.frame.dropna(subset=["link_id"])
        return rows.pivot(index="slot", columns="link_id", values="lambda")

    def steady_window(self, fraction: float = 0.2) -> Tuple[int, int]:
        """The final ``fraction`` of the contention window, as a [start, end) slot range"""

        end = self.contention_end if self.contention_end is not None else self.slots
        start = end - max(1, int(math.ceil(end * fraction))) if end > 0 else 0
        return max(0, start), end

    def mean_utility(self, fraction: float = 0.2) -> float:
        start, end = self.steady_window(fraction)
        series = self.utility_series()
        window = series[(series.index >= start) & (series.index < end)]
        return float(window.mean()) if len(window) else math.nan

    def mean_power(self, fraction: float = 0.2) -> float:
        """Mean total transmit power (mW) over the steady window"""

        start, end = self.steady_window(fraction)
        power = self.power()
        window = power[(power.index >= start) & (power.index < end)]
        return float(window.sum(axis=1).mean()) if len(window) else math.nan


class SimWorld:
    """
    The state of one simulated network running one scheme

    :param scenario: The network and its traffic
    :param program: The compiled program the nodes install
    :param plans: The synthesized plans of ``program``
    :param scheme: One of ``SCHEMES``
    :param settings: Timescales, dual steps, delivery and logging parameters
    :param seed: Seeds the knob initialization and the NoControl draws
    :param env: The simpy environment driving the slot clock, a fresh one by default
    :raises IncompatibleProgram: If the scheme needs a layer the program does not control
        or a constraint family is not quantified over links
    """

    def __init__(
        self,
        scenario: Scenario,
        program: AbstractProgram,
        plans: PlanSet,
        scheme: str,
        settings: Settings,
        seed: int = 0,
        env: Optional[simpy.Environment] = None,
    ):
        layers = check_scheme(program, scheme)
        self.scenario = scenario
        self.program = program
        self.plans = plans
        self.scheme = scheme
        self.settings = settings
        self.seed = seed
        self.t = 0
        self.dt = settings.slot_seconds
        self.channel = scenario.link_channel()
        self.pool = scenario.topology_pool()
        self.link_ids = scenario.link_ids
        self.position = {link: position for position, link in enumerate(self.link_ids)}
        self.links = {link.id: LinkState(band=link.band) for link in scenario.links}
        self.paths = {session.id: session.path for session in scenario.sessions}
        self.budget = {session.id: session.packet_count for session in scenario.sessions}
        self.injected = {session: 0.0 for session in self.paths}
        self.delivered = {session: 0.0 for session in self.paths}
        self.queues: Dict[Tuple[int, int], float] = {
            (link, session): 0.0 for session, path in self.paths.items() for link in path
        }
        self.window: Dict[int, Deque[float]] = {
            session: deque(maxlen=settings.throughput_window) for session in self.paths
        }
        self.completed: Dict[int, int] = {}
        self.in_flight = 0
        self.rows: List[dict] = []
        self.snapshots: List[dict] = []
        self.control_rng = random.Random(seed)
        self._slacks = self._build_slacks()
        self._utility = self._build_utility()
        self.stacks = self._deploy(layers)
        self._override_knobs()
        self.env = env or simpy.Environment()
        self.env.process(self._clock())

    def __repr__(self):
        return f"SimWorld({self.scenario.name!r}, {self.scheme!r}, t={self.t})"

    # Setup #

    def _build_slacks(self) -> Dict[Tuple[int, int], Expression]:
        schema = self.pool.schema
        slacks = {}
        for family in self.program.families:
            for link in self.link_ids:
                slacks[(family.family, link)] = ex.canonical(
                    expand_expression(family.slack, self.pool, schema, {EntityType.LINK: link})
                )
        return slacks

    def _build_utility(self) -> Tuple[Expression, ...]:
        utility = expand_expression(self.program.utility, self.pool, self.pool.schema, {})
        return ex.addends(ex.canonical(utility))

    def _views(self) -> Dict[int, NodeView]:
        hop_delay = self.settings.hop_delay
        links = {link.id: link for link in self.scenario.links}
        targets: Dict[int, Dict[int, int]] = {}
        for link in self.link_ids:
            destinations = {links[link].tx: 1}
            for session, path in self.paths.items():
                if link in path:
                    source = self.scenario.session(session).source
                    hops = path.index(link) + 1
                    destinations[source] = min(hops, destinations.get(source, hops))
            targets[link] = destinations
        views = {}
        for node in self.scenario.node_ids:
            in_links = tuple(link for link in self.link_ids if links[link].rx == node)
            prices = {}
            for link in in_links:
                victim = self.position[link]
                interferers = sorted(
                    {links[other].tx for other in self.link_ids if self.channel.coupled[self.position[other], victim]}
                )
                prices[link] = tuple((tx, hop_delay) for tx in interferers)
            views[node] = NodeView(
                node=node,
                sources=tuple(session.id for session in self.scenario.sessions if session.source == node),
                out_links=tuple(link for link in self.link_ids if links[link].tx == node),
                in_links=in_links,
                report_targets={
                    link: tuple(sorted((dest, hops * hop_delay) for dest, hops in targets[link].items()))
                    for link in in_links
                },
                price_targets=prices,
            )
        return views

    def _deploy(self, layers: Sequence[Layer]) -> Dict[int, NodeStack]:
        stacks = {}
        for node, view in self._views().items():
            stack = NodeStack(
                view,
                self.pool,
                self.settings,
                rng=random.Random(self.seed * 1009 + node),
                fec_rate=self.scenario.channel.fec_rate,
            )
            stack.registers.scale = self.channel.model.scale
            for link in view.out_links:
                position = self.position[link]
                stack.registers.channel_gain[link] = float(self.channel.gains[position, position])
                for victim in self.link_ids:
                    if self.channel.coupled[position, self.position[victim]]:
                        stack.registers.cross_gain[(link, victim)] = float(
                            self.channel.gains[position, self.position[victim]]
                        )
                stack.knobs.band[link] = self.links[link].band
            stack.install(self.program, self.plans, layers)
            stacks[node] = stack
        logging.info(
            f"{{Simulator}} Deployed {self.scheme} on {len(stacks)} node(s) of {self.scenario.name}"
        )
        return stacks

    def _source(self, session: int) -> NodeStack:
        return self.stacks[self.scenario.session(session).source]

    def _transmitter(self, link: int) -> NodeStack:
        return self.stacks[self.scenario.link(link).tx]

    def _override_knobs(self):
        """The fixed knobs of the schemes that do not run the program: one seeded
        uniform draw per knob for NoControl, the box maxima for BestResponse"""

        if self.scheme == NO_CONTROL:
            for session in sorted(self.paths):
                stack = self._source(session)
                lo, hi = stack.box(SESSION, session)
                stack.knobs.set_rate(session, self.control_rng.uniform(lo, hi))
            for link in self.link_ids:
                stack = self._transmitter(link)
                lo, hi = stack.box(POWER, link)
                stack.knobs.set_gain(link, self.control_rng.uniform(lo, hi))
        elif self.scheme == BEST_RESPONSE:
            for session in self.paths:
                stack = self._source(session)
                stack.knobs.set_rate(session, stack.box(SESSION, session)[1])
            for link in self.link_ids:
                stack = self._transmitter(link)
                stack.knobs.set_gain(link, stack.box(POWER, link)[1])

    # Slot #

    def rates(self) -> Dict[int, float]:
        """The rate of every session still injecting packets"""

        return {
            session: self._source(session).knobs.rate[session]
            for session in self.paths
            if self.injected[session] < self.budget[session]
        }

    def gains_db(self) -> np.ndarray:
        return np.array([self._transmitter(link).knobs.tx_gain_db[link] for link in self.link_ids])

    def _deliver(self, capacities: np.ndarray, rates: Mapping[int, float]) -> Dict[int, float]:
        beta = self.settings.overload_penalty
        arrivals: Dict[Tuple[int, int], float] = {}
        for session, rate in rates.items():
            amount = min(rate * self.dt, self.budget[session] - self.injected[session])
            self.injected[session] += amount
            self.queues[(self.paths[session][0], session)] += amount
        delivered = {session: 0.0 for session in self.paths}
        for link in self.link_ids:
            state = self.links[link]
            capacity = float(capacities[self.position[link]])
            offered = sum(rate for session, rate in rates.items() if link in self.paths[session])
            state.capacity = capacity
            state.aggregate_rate = offered
            if offered <= capacity or capacity <= 0:
                service = capacity
            else:
                service = capacity / (1.0 + beta * (offered / capacity - 1.0))
            queued = {session: self.queues[(link, session)] for session in self.paths if link in self.paths[session]}
            total = sum(queued.values())
            if total <= 0:
                continue
            served = min(total, service * self.dt)
            for session, amount in queued.items():
                share = served * amount / total
                self.queues[(link, session)] -= share
                path = self.paths[session]
                position = path.index(link)
                if position + 1 < len(path):
                    key = (path[position + 1], session)
                    arrivals[key] = arrivals.get(key, 0.0) + share
                else:
                    delivered[session] += share
        for key, amount in arrivals.items():
            self.queues[key] += amount
        for session, amount in delivered.items():
            self.delivered[session] += amount
            self.window[session].append(amount)
            if session not in self.completed and self.delivered[session] >= self.budget[session] - 1e-9:
                self.completed[session] = self.t
                logging.info(f"(session {session}) {{Simulator}} Completed at slot {self.t}")
        return delivered

    def _check_conservation(self):
        for session in self.paths:
            queued = sum(self.queues[(link, session)] for link in self.paths[session])
            balance = self.injected[session] - self.delivered[session] - queued
            if abs(balance) > 1e-6 * max(1.0, self.injected[session]) or min(
                self.queues[(link, session)] for link in self.paths[session]
            ) < -1e-9:
                raise SimulationError(f"session {session} lost {balance} packet(s)", slot=self.t)

    def demands(self) -> Dict[int, float]:
        """The rate of every session that has not completed, the load its links are priced for"""

        return {
            session: self._source(session).knobs.rate[session]
            for session in self.paths
            if session not in self.completed
        }

    def _measure(self, capacities: np.ndarray, powers: np.ndarray):
        signal = self.channel.signal(powers)
        interference = self.channel.interference(powers)
        # the utility sees the powers the log records
        gains = mw_to_db(powers)
        demands = self.demands()
        for link in self.link_ids:
            position = self.position[link]
            spec = self.scenario.link(link)
            for stack in (self.stacks[spec.tx], self.stacks[spec.rx]):
                stack.registers.measure(noise_plus_interference={link: float(interference[position])})
            self.stacks[spec.rx].registers.measure(
                received_signal={link: float(signal[position])},
                measured_link_rate={link: float(capacities[position])},
            )
            self.stacks[spec.tx].registers.measure(
                queue_len={link: sum(self.queues[(link, s)] for s in self.paths if link in self.paths[s])},
                neighbor_powers={
                    other: float(powers[self.position[other]])
                    for other in self.link_ids
                    if self.channel.coupled[self.position[other], position]
                },
            )
        env: Dict[Expression, float] = {}
        for session in self.paths:
            env[VarRef(SESSION, session)] = demands.get(session, 0.0)
        for link in self.link_ids:
            env[VarRef(CAPACITY, link)] = float(capacities[self.position[link]])
            env[VarRef(POWER, link)] = float(gains[self.position[link]])
        return env

    def _update_duals(self, env: Mapping[Expression, float]):
        k = 1 + self.t // self.settings.transport_period
        by_receiver: Dict[int, Dict[Tuple[int, int], float]] = {}
        for (family, link), slack in self._slacks.items():
            value = ex.evaluate(slack, env)
            by_receiver.setdefault(self.scenario.link(link).rx, {})[(family, link)] = value
        for node, slacks in by_receiver.items():
            stack = self.stacks[node]
            stack.update_duals(self.t, slacks, self.plans, k)
            for (family, link), _ in slacks.items():
                self.links[link].duals[family] = stack.registers.own_duals[(family, link)]

    def _carry(self, message: SignalingMessage):
        """Moves ``message`` one hop per slot and hands it to its destination"""

        self.in_flight += 1
        while not message.delivered:
            yield self.env.timeout(1)
            message = message.advance()
        self.in_flight -= 1
        self.stacks[message.destination].handle_signal(message)

    def _utility_value(self, throughput: Mapping[int, float], env: Mapping[Expression, float]) -> float:
        floor = self.settings.utility_floor
        active = {session for session in self.paths if session not in self.completed}
        values = dict(env)
        for session in self.paths:
            values[VarRef(SESSION, session)] = max(throughput[session], floor)
        total = 0.0
        for addend in self._utility:
            sessions = {
                node.index for node in ex.walk(addend) if isinstance(node, VarRef) and node.path == SESSION
            }
            if sessions and not sessions & active:
                continue
            total += ex.evaluate(addend, values)
        return total

    def _log(self, powers: np.ndarray, env: Mapping[Expression, float]):
        throughput = {
            session: sum(window) / (len(window) * self.dt) if window else 0.0
            for session, window in self.window.items()
        }
        utility = self._utility_value(throughput, env)
        base = dict.fromkeys(COLUMNS)
        for session in sorted(self.paths):
            self.rows.append({**base, "slot": self.t, "session_id": session,
                              "throughput_pps": throughput[session], "utility": utility})
        for node in self.scenario.node_ids:
            out_links = self.stacks[node].view.out_links
            if out_links:
                power = max(float(powers[self.position[link]]) for link in out_links)
                self.rows.append({**base, "slot": self.t, "node_id": node, "tx_power_mw": power,
                                  "utility": utility})
        for link in self.link_ids:
            self.rows.append({**base, "slot": self.t, "link_id": link,
                              "lambda": sum(self.links[link].duals.values()), "utility": utility})

    def _clock(self):
        while True:
            powers = db_to_mw(self.gains_db())
            capacities = self.channel.capacities(powers)
            self._deliver(capacities, self.rates())
            self._check_conservation()
            env = self._measure(capacities, powers)
            self._update_duals(env)
            # the messages due this slot land before the stacks tick
            yield self.env.timeout(0)
            for node in sorted(self.stacks):
                result = self.stacks[node].tick(self.t)
                for message in result.messages:
                    self.env.process(self._carry(message))
            if self.t % self.settings.transport_period == 0:
                self.snapshots.extend(self.stacks[node].snapshot(self.t) for node in sorted(self.stacks))
            self._log(powers, env)
            self.t += 1
            yield self.env.timeout(1)

    def step(self) -> "SimWorld":
        """Runs slot ``t`` and moves to ``t + 1``"""

        self.env.run(until=self.t + 1)
        return self

    def metrics(self) -> MetricsLog:
        contention_end = min(self.completed.values()) if self.completed else None
        return MetricsLog.from_rows(self.rows, self.scheme, contention_end)


def default_settings(program: AbstractProgram) -> Settings:
    """The defaults with the program's own ``nt.set`` tunables applied"""

    return Settings().apply_program(dict(program.settings))


def step(world: SimWorld) -> SimWorld:
    return world.step()


def simulate(
    scenario: Scenario,
    program: AbstractProgram,
    scheme: str,
    settings: Optional[Settings] = None,
    seed: Optional[int] = None,
    plans: Optional[PlanSet] = None,
) -> SimWorld:
    """Runs one scheme for the scenario's duration and returns the final world"""

    settings = settings or default_settings(program)
    plans = plans or synthesize(program, settings)
    world = SimWorld(scenario, program, plans, scheme, settings, scenario.seed if seed is None else seed)
    for _ in range(scenario.duration):
        world.step()
    logging.info(
        f"{{Simulator}} {scheme} on {scenario.name}: {scenario.duration} slot(s), "
        f"{len(world.completed)} session(s) completed"
    )
    return world


def run(
    scenario: Scenario,
    program: AbstractProgram,
    schemes: Iterable[str],
    settings: Optional[Settings] = None,
    seed: Optional[int] = None,
) -> Dict[str, MetricsLog]:
    """Runs every scheme with the same seed

    :raises IncompatibleProgram: If a scheme needs roles the program does not have
    """

    settings = settings or default_settings(program)
    plans = synthesize(program, settings)
    return {
        scheme: simulate(scenario, program, scheme, settings, seed, plans).metrics() for scheme in schemes
    }


def replicate(
    scenario: Scenario,
    program: AbstractProgram,
    scheme: str,
    seeds: Iterable[int],
    settings: Optional[Settings] = None,
) -> List[MetricsLog]:
    """Runs one scheme once per seed"""

    settings = settings or default_settings(program)
    plans = synthesize(program, settings)
    return [simulate(scenario, program, scheme, settings, seed, plans).metrics() for seed in seeds]


def gain_over(utility: float, baseline: float, sense: Sense, sessions: int, logarithmic: bool) -> float:
    """The percentage gain of ``utility`` over ``baseline``

    For sum-log utilities the difference is turned into the gain of the
    geometric mean throughput; otherwise it is relative to ``|baseline|``.
    Minimization programs gain when their utility decreases
    """

    difference = utility - baseline if sense is Sense.MAXIMIZE else baseline - utility
    if logarithmic:
        return 100.0 * (math.exp(difference / max(1, sessions)) - 1.0)
    if baseline == 0:
        return math.nan
    return 100.0 * difference / abs(baseline)


def compare(
    logs: Mapping[str, Union[MetricsLog, Sequence[MetricsLog]]],
    program: AbstractProgram,
    sessions: int,
    fraction: float = 0.2,
) -> pd.DataFrame:
    """The steady state mean utility of every scheme and its gain over NoControl

    A scheme may come with several logs, e.g. NoControl over many seeds; its
    mean utility is then the average over the runs

    :returns: A frame with the ``scheme``, ``mean_utility`` and ``gain_pct`` columns
    """

    logarithmic = any(isinstance(node, ex.Log) for node in ex.walk(program.utility))
    means = {}
    for scheme, runs in logs.items():
        runs = [runs] if isinstance(runs, MetricsLog) else list(runs)
        means[scheme] = float(np.mean([log.mean_utility(fraction) for log in runs]))
    baseline = means.get(NO_CONTROL)
    rows = []
    for scheme, mean in means.items():
        gain = math.nan if baseline is None else gain_over(mean, baseline, program.sense, sessions, logarithmic)
        rows.append({"scheme": scheme, "mean_utility": mean, "gain_pct": gain})
    return pd.DataFrame(rows, columns=["scheme", "mean_utility", "gain_pct"])
