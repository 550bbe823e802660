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
Scenario files.

A scenario is an INI file::

    [scenario]
    name = scenario-1
    duration = 3000
    seed = 1
    bands = 2
    bandwidth = 200000
    packet_size = 2048

    [channel]
    path_loss_exponent = 3.0

    [nodes]
    # id = x, y (meters)
    1 = 0, 0

    [links]
    # id = tx, rx, band
    1 = 1, 2, 0

    [sessions]
    # id = source, destination, path (link ids), packet_count
    1 = 1, 3, 1 2, 60
"""

import configparser
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import networkx as nx

from .channel import ChannelModel, LinkChannel
from .errors import FormatError, TopologyError
from .instantiation import InstancePool

SCENARIOS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "scenarios")

CHANNEL_OPTIONS = {
    "path_loss_exponent": float,
    "reference_gain": float,
    "noise_floor": float,
    "efficiency": float,
    "fec_rate": float,
    "high_snr_approx": bool,
}


@dataclass(frozen=True)
class NodeSpec:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class LinkSpec:
    id: int
    tx: int
    rx: int
    band: int


@dataclass(frozen=True)
class SessionSpec:
    id: int
    source: int
    destination: int
    path: Tuple[int, ...]
    packet_count: int


@dataclass(frozen=True)
class Scenario:
    """A static multi-hop network with its traffic

    Ids are the ones of the file; link and session order is ascending id
    everywhere (channel matrices, metrics)
    """

    name: str
    nodes: Tuple[NodeSpec, ...]
    links: Tuple[LinkSpec, ...]
    sessions: Tuple[SessionSpec, ...]
    bands: int = 1
    duration: int = 3000
    seed: int = 0
    channel: ChannelModel = field(default_factory=ChannelModel)

    def __post_init__(self):
        validate(self)

    @property
    def bandwidth(self) -> float:
        return self.channel.bandwidth

    @property
    def packet_size(self) -> int:
        return self.channel.packet_size

    @property
    def node_ids(self) -> Tuple[int, ...]:
        return tuple(node.id for node in self.nodes)

    @property
    def link_ids(self) -> Tuple[int, ...]:
        return tuple(link.id for link in self.links)

    @property
    def session_ids(self) -> Tuple[int, ...]:
        return tuple(session.id for session in self.sessions)

    def node(self, node_id: int) -> NodeSpec:
        return next(node for node in self.nodes if node.id == node_id)

    def link(self, link_id: int) -> LinkSpec:
        return next(link for link in self.links if link.id == link_id)

    def session(self, session_id: int) -> SessionSpec:
        return next(session for session in self.sessions if session.id == session_id)

    def with_duration(self, duration: int) -> "Scenario":
        return replace(self, duration=duration)

    def link_channel(self, high_snr_approx: Optional[bool] = None) -> LinkChannel:
        """The channel between the links, indexed by position in ``links``"""

        model = self.channel
        if high_snr_approx is not None and high_snr_approx != model.high_snr_approx:
            model = replace(model, high_snr_approx=high_snr_approx)
        tx = [(self.node(link.tx).x, self.node(link.tx).y) for link in self.links]
        rx = [(self.node(link.rx).x, self.node(link.rx).y) for link in self.links]
        return LinkChannel(model, tx, rx, [link.band for link in self.links])

    def topology_pool(self) -> InstancePool:
        """The run time instances of this network"""

        return InstancePool.from_topology(
            self.node_ids,
            {link.id: (link.tx, link.rx) for link in self.links},
            {session.id: session.path for session in self.sessions},
        )

    def graph(self) -> nx.MultiDiGraph:
        graph = nx.MultiDiGraph()
        for node in self.nodes:
            graph.add_node(node.id, pos=(node.x, node.y))
        for link in self.links:
            graph.add_edge(link.tx, link.rx, key=link.id, band=link.band)
        return graph


def validate(scenario: Scenario):
    """Checks ids, bands and that every session path is a connected chain of links

    :raises FormatError: On duplicate ids, unknown references or out of range values
    :raises TopologyError: If a session path is not connected
    """

    for kind, ids in (("node", scenario.node_ids), ("link", scenario.link_ids), ("session", scenario.session_ids)):
        if len(set(ids)) != len(ids):
            raise FormatError(f"{scenario.name}: duplicate {kind} ids")
    if scenario.bands < 1 or scenario.duration < 0:
        raise FormatError(f"{scenario.name}: bands must be positive and duration nonnegative")
    nodes = set(scenario.node_ids)
    for link in scenario.links:
        if link.tx not in nodes or link.rx not in nodes:
            raise FormatError(f"{scenario.name}: link {link.id} joins unknown nodes")
        if link.tx == link.rx:
            raise FormatError(f"{scenario.name}: link {link.id} is a self loop")
        if not 0 <= link.band < scenario.bands:
            raise FormatError(f"{scenario.name}: link {link.id} uses band {link.band} of {scenario.bands}")
    graph = scenario.graph()
    links = {link.id: link for link in scenario.links}
    for session in scenario.sessions:
        if session.packet_count < 0:
            raise FormatError(f"{scenario.name}: session {session.id} has a negative packet count")
        if not session.path:
            raise TopologyError(f"{scenario.name}: session {session.id} has an empty path")
        unknown = [link for link in session.path if link not in links]
        if unknown:
            raise FormatError(f"{scenario.name}: session {session.id} uses unknown links {unknown}")
        hops = [(links[link].tx, links[link].rx) for link in session.path]
        if session.source not in nodes or session.destination not in nodes:
            raise FormatError(f"{scenario.name}: session {session.id} has unknown endpoints")
        if not nx.has_path(graph, session.source, session.destination):
            raise TopologyError(f"{scenario.name}: node {session.destination} is unreachable from {session.source}")
        chain = [hops[0][0]] + [rx for _, rx in hops]
        broken = [position for position in range(1, len(hops)) if hops[position][0] != hops[position - 1][1]]
        if broken or chain[0] != session.source or chain[-1] != session.destination:
            raise TopologyError(f"{scenario.name}: the path of session {session.id} is not a connected chain")
        if len(set(chain)) != len(chain):
            raise TopologyError(f"{scenario.name}: the path of session {session.id} has a loop")


def _numbers(section: str, key: str, raw: str, count: int) -> List[str]:
    parts = [part.strip() for part in raw.split(",")]
    if len(parts) != count or not all(parts):
        raise FormatError(f"[{section}] {key}: expected {count} comma separated fields, got {raw!r}")
    return parts


def _int(section: str, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise FormatError(f"[{section}] {key}: {raw!r} is not an integer") from None


def _float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise FormatError(f"[{section}] {key}: {raw!r} is not a number") from None


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    """Parses the text of a scenario file

    :raises FormatError: If the text is not a valid scenario
    :raises TopologyError: If a session path is disconnected
    """

    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as error:
        raise FormatError(f"{name}: {error}") from None
    for section in ("scenario", "nodes", "links", "sessions"):
        if not parser.has_section(section):
            raise FormatError(f"{name}: missing [{section}] section")

    head = parser["scenario"]
    name = head.get("name", name)
    channel_args: Dict[str, object] = {
        "bandwidth": _float("scenario", "bandwidth", head.get("bandwidth", "200000")),
        "packet_size": _int("scenario", "packet_size", head.get("packet_size", "2048")),
    }
    if parser.has_section("channel"):
        for option, kind in CHANNEL_OPTIONS.items():
            raw = parser.get("channel", option, fallback=None)
            if raw is None:
                continue
            if kind is bool:
                try:
                    channel_args[option] = parser.getboolean("channel", option)
                except ValueError:
                    raise FormatError(f"[channel] {option}: {raw!r} is not a boolean") from None
            else:
                channel_args[option] = _float("channel", option, raw)
    try:
        channel = ChannelModel(**channel_args)
    except ValueError as error:
        raise FormatError(f"{name}: {error}") from None

    nodes = []
    for key, raw in parser["nodes"].items():
        x, y = _numbers("nodes", key, raw, 2)
        nodes.append(NodeSpec(_int("nodes", key, key), _float("nodes", key, x), _float("nodes", key, y)))
    links = []
    for key, raw in parser["links"].items():
        tx, rx, band = _numbers("links", key, raw, 3)
        links.append(
            LinkSpec(_int("links", key, key), _int("links", key, tx), _int("links", key, rx), _int("links", key, band))
        )
    sessions = []
    for key, raw in parser["sessions"].items():
        source, destination, path, packets = _numbers("sessions", key, raw, 4)
        sessions.append(
            SessionSpec(
                _int("sessions", key, key),
                _int("sessions", key, source),
                _int("sessions", key, destination),
                tuple(_int("sessions", key, hop) for hop in path.split()),
                _int("sessions", key, packets),
            )
        )
    scenario = Scenario(
        name=name,
        nodes=tuple(sorted(nodes, key=lambda node: node.id)),
        links=tuple(sorted(links, key=lambda link: link.id)),
        sessions=tuple(sorted(sessions, key=lambda session: session.id)),
        bands=_int("scenario", "bands", head.get("bands", "1")),
        duration=_int("scenario", "duration", head.get("duration", "3000")),
        seed=_int("scenario", "seed", head.get("seed", "0")),
        channel=channel,
    )
    logging.debug(
        f"{{Scenario}} Loaded {name}: {len(nodes)} node(s), {len(links)} link(s), {len(sessions)} session(s)"
    )
    return scenario


def scenario_path(name: str) -> str:
    """Resolves a file path, or the name of a bundled scenario (``scenario-2``)"""

    if os.path.exists(name):
        return name
    bundled = os.path.join(SCENARIOS_DIR, name if name.endswith(".ini") else f"{name}.ini")
    if os.path.exists(bundled):
        return bundled
    raise FormatError(f"no scenario file or bundled scenario named {name!r}")


def load_scenario(path: str) -> Scenario:
    """Loads and validates a scenario file (or bundled scenario name)

    :raises FormatError: If the file is unreadable or malformed
    :raises TopologyError: If a session path is disconnected
    """

    path = scenario_path(path)
    try:
        with open(path) as scenario_file:
            text = scenario_file.read()
    except OSError as error:
        raise FormatError(f"cannot read {path}: {error}") from None
    return parse_scenario(text, os.path.splitext(os.path.basename(path))[0])


def bundled_scenarios() -> List[str]:
    return sorted(os.path.splitext(name)[0] for name in os.listdir(SCENARIOS_DIR) if name.endswith(".ini"))
