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

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Tuple, Union

import networkx as nx

from .errors import UnknownElement, AbstractionError


class Kind(Enum):
    PRIMITIVE = "primitive"
    VIRTUAL = "virtual"


class EntityType(Enum):
    NODE = "node"
    LINK = "link"
    SESSION = "session"
    PARAMETER = "parameter"


class Layer(Enum):
    APPLICATION = "application"
    TRANSPORT = "transport"
    NETWORK = "network"
    DATALINK = "datalink"
    PHYSICAL = "physical"
    NONE = "none"


class Relation(Enum):
    HAS_ATTRIBUTE = "has_attribute"
    EACH_MEMBER_IS = "each_member_is"
    IS_FUNCTION_OF = "is_function_of"


class Scope(Enum):
    GLOBAL = "global"
    LOCAL = "local"


@dataclass(frozen=True)
class ElementRef:
    """A primitive (or the reference part of a virtual) network element

    :param id: The element name, e.g. ``'lnkcap'``
    :type id: str
    :param kind: Whether the element is primitive or virtual
    :type kind: class: ``Kind``
    :param entity_type: The entity type the element maps to
    :type entity_type: class: ``EntityType``
    :param layer: The protocol layer of the element, ``Layer.NONE`` for topological elements
    :type layer: class: ``Layer``
    """

    id: str
    kind: Kind
    entity_type: EntityType
    layer: Layer = Layer.NONE

    @property
    def name(self) -> str:
        return self.id

    def __str__(self):
        return self.id


@dataclass(frozen=True)
class VirtualElement:
    """A set of entities, resolved only at run time. Global elements span the
    whole network, local ones are attached to an owner element"""

    ref: ElementRef
    scope: Scope
    member_entity_type: EntityType
    owner: Optional[ElementRef] = None

    def __post_init__(self):
        if self.scope is Scope.GLOBAL and self.owner is not None:
            raise AbstractionError(f"global element {self.ref.id} cannot have an owner")
        if self.scope is Scope.LOCAL and self.owner is None:
            raise AbstractionError(f"local element {self.ref.id} needs an owner")

    @property
    def name(self) -> str:
        return self.ref.id

    @property
    def kind(self) -> Kind:
        return Kind.VIRTUAL

    @property
    def layer(self) -> Layer:
        return self.ref.layer

    def __str__(self):
        return self.ref.id


Element = Union[ElementRef, VirtualElement]


@dataclass(frozen=True)
class DependencyEdge:
    src: ElementRef
    dst: ElementRef
    relation: Relation

    def __str__(self):
        return f"{self.src} {self.relation.value} {self.dst}"


ALIASES = {
    "ntses": "netses",
    "ntlk": "netlnk",
    "ntlnk": "netlnk",
    "ntnd": "netnd",
    "lkpwr": "lnkpwr",
    "lkcap": "lnkcap",
    "lkses": "lnkses",
    "lksinr": "lnksinr",
}

# Element names of the primitive entities and of their global sets
ENTITY_ELEMENTS = {
    EntityType.NODE: "nd",
    EntityType.LINK: "lnk",
    EntityType.SESSION: "ses",
}
GLOBAL_ELEMENTS = {
    EntityType.NODE: "netnd",
    EntityType.LINK: "netlnk",
    EntityType.SESSION: "netses",
}

# Default variable bounds, keyed by attribute
DEFAULT_BOUNDS = {
    "sesrate": (0.1, 20.0),
    "lnkpwr": (0.0, 30.0),
}

_SEGMENT = re.compile(r"^([A-Za-z_]\w*)(?:\[(\d+|all)\])?$")


def canonical_name(name: str) -> str:
    """Resolves element aliases, e.g. ``lkpwr`` to ``lnkpwr``"""

    return ALIASES.get(name, name)


def split_path(path: str) -> List[Tuple[str, Optional[str]]]:
    """Splits an element path like ``netses[1].seslnk`` into ``[('netses', '1'), ('seslnk', None)]``,
    applying aliases to each hop

    :raises UnknownElement: If a hop is not a valid identifier
    """

    hops = []
    for segment in path.strip().split("."):
        match = _SEGMENT.match(segment.strip())
        if not match:
            raise UnknownElement(f"malformed hop {segment!r} in {path!r}")
        hops.append((canonical_name(match.group(1)), match.group(2)))
    return hops


def join_path(hops: Iterable[Tuple[str, Optional[str]]]) -> str:
    return ".".join(name if index is None else f"{name}[{index}]" for name, index in hops)


class NetworkSchema:
    """The element multigraph: every element is a vertex, every dependency
    relation a labelled edge. Instances are immutable, ``register_element``
    returns a new schema"""

    def __init__(self, elements: Iterable[Element], edges: Iterable[DependencyEdge]):
        self._elements: Dict[str, Element] = {}
        for element in elements:
            self._elements[element.name] = element
        self._edges = tuple(sorted(set(edges), key=str))
        graph = nx.MultiDiGraph()
        for name in sorted(self._elements):
            graph.add_node(name)
        for edge in self._edges:
            for end in (edge.src.id, edge.dst.id):
                if end not in self._elements:
                    raise UnknownElement(f"edge {edge} references unknown element {end}")
            if edge.relation is Relation.EACH_MEMBER_IS and not isinstance(
                self._elements[edge.src.id], VirtualElement
            ):
                raise AbstractionError(f"each_member_is edge must start at a virtual element: {edge}")
            graph.add_edge(edge.src.id, edge.dst.id, key=edge.relation.value)
        for element in self._elements.values():
            if isinstance(element, VirtualElement) and element.owner is not None:
                if element.owner.id not in self._elements:
                    raise UnknownElement(f"{element.name} is owned by unknown element {element.owner.id}")
        self.graph = nx.freeze(graph)
        self.fingerprint = hash((tuple(sorted(self._elements)), tuple(str(e) for e in self._edges)))

    @property
    def elements(self) -> Tuple[Element, ...]:
        return tuple(self._elements[name] for name in sorted(self._elements))

    @property
    def edges(self) -> Tuple[DependencyEdge, ...]:
        return self._edges

    def __contains__(self, name: str):
        return canonical_name(name) in self._elements

    def __eq__(self, other):
        return isinstance(other, NetworkSchema) and self.fingerprint == other.fingerprint

    def __hash__(self):
        return self.fingerprint

    def __repr__(self):
        return f"NetworkSchema({len(self._elements)} elements, {len(self._edges)} edges)"

    def element(self, name: str) -> Element:
        """Returns the element called ``name`` (aliases allowed)

        :raises UnknownElement: If no such element exists
        """

        try:
            return self._elements[canonical_name(name)]
        except KeyError:
            raise UnknownElement(f"unknown element {name!r}") from None

    def has_edge(self, src: str, dst: str, relation: Relation) -> bool:
        return self.graph.has_edge(canonical_name(src), canonical_name(dst), key=relation.value)

    def targets(self, src: str, relation: Relation) -> List[str]:
        """Returns the sorted names reachable from ``src`` through one ``relation`` edge"""

        src = canonical_name(src)
        if src not in self.graph:
            return []
        return sorted(
            dst for _, dst, key in self.graph.out_edges(src, keys=True) if key == relation.value
        )

    def entity_element(self, entity_type: EntityType) -> str:
        return ENTITY_ELEMENTS[entity_type]

    def global_element(self, entity_type: EntityType) -> VirtualElement:
        return self.element(GLOBAL_ELEMENTS[entity_type])

    def attribute_owner(self, attribute: str) -> EntityType:
        """Returns the entity type carrying ``attribute`` (``sesrate`` belongs to sessions)

        :raises UnknownElement: If no primitive entity has such attribute
        """

        attribute = canonical_name(attribute)
        for entity_type, entity in ENTITY_ELEMENTS.items():
            if self.has_edge(entity, attribute, Relation.HAS_ATTRIBUTE):
                return entity_type
        raise UnknownElement(f"{attribute!r} is not an attribute of any entity")

    def is_attribute(self, name: str) -> bool:
        if canonical_name(name) in ENTITY_ELEMENTS.values():
            return False
        try:
            self.attribute_owner(name)
        except UnknownElement:
            return False
        return not isinstance(self.element(name), VirtualElement)

    def inverse_of(self, name: str) -> Optional[VirtualElement]:
        """Returns the local element holding the transposed membership of ``name``
        (Sessions-of-Link for Links-of-Session and the other way round), if any"""

        element = self.element(name)
        if not isinstance(element, VirtualElement) or element.scope is not Scope.LOCAL:
            return None
        for other in self._elements.values():
            if (
                isinstance(other, VirtualElement)
                and other.scope is Scope.LOCAL
                and other.name != element.name
                and other.owner.entity_type is element.member_entity_type
                and other.member_entity_type is element.owner.entity_type
            ):
                return other
        return None

    def depends_on(self, name: str, target: str) -> bool:
        """True when ``name`` is (transitively) a function of ``target``"""

        name, target = canonical_name(name), canonical_name(target)
        return target in _function_closure(self, name)

    def register_element(
        self, element: Element, edges: Iterable[DependencyEdge] = ()
    ) -> "NetworkSchema":
        """Returns a new schema holding ``element`` and ``edges`` on top of this one's

        :raises AbstractionError: If an element with the same name already exists
        """

        if element.name in self._elements:
            raise AbstractionError(f"element {element.name!r} already exists")
        return NetworkSchema(list(self._elements.values()) + [element], self._edges + tuple(edges))

    def describe(self) -> List[str]:
        """One line per element, then one per edge"""

        lines = []
        for element in self.elements:
            if isinstance(element, VirtualElement):
                owner = f" owner={element.owner.id}" if element.owner else ""
                lines.append(
                    f"{element.name}: virtual {element.scope.value} of {element.member_entity_type.value}{owner}"
                )
            else:
                lines.append(
                    f"{element.name}: primitive {element.entity_type.value} layer={element.layer.value}"
                )
        lines.extend(str(edge) for edge in self._edges)
        return lines


@lru_cache(maxsize=None)
def _function_closure(schema: NetworkSchema, name: str) -> frozenset:
    sub = nx.DiGraph(
        (u, v) for u, v, key in schema.graph.edges(keys=True) if key == Relation.IS_FUNCTION_OF.value
    )
    if name not in sub:
        return frozenset()
    return frozenset(nx.descendants(sub, name))


def read(schema: NetworkSchema, path: str) -> Element:
    """Resolves a dot-separated chain of attribute/member hops

    Virtual hops step into their member entity before the next lookup, so
    ``netses.seslnk`` is the Links-of-Session element of a session

    :param schema: The schema to resolve against
    :type schema: class: ``NetworkSchema``
    :param path: The element path
    :type path: str
    :returns: The resolved element
    :raises UnknownElement: If any hop fails to resolve
    """

    hops = split_path(path)
    current = schema.element(hops[0][0])
    for name, _ in hops[1:]:
        if isinstance(current, VirtualElement):
            holder = ENTITY_ELEMENTS.get(current.member_entity_type)
        else:
            holder = current.id
        if holder is None or not (
            schema.has_edge(holder, name, Relation.HAS_ATTRIBUTE)
            or schema.has_edge(current.name, name, Relation.EACH_MEMBER_IS)
        ):
            raise UnknownElement(f"{name!r} does not resolve from {current.name!r} in {path!r}")
        current = schema.element(name)
    return current


def build_default_schema() -> NetworkSchema:
    """Returns the schema holding every built-in element and dependency edge"""

    return _DEFAULT_SCHEMA


def _make_default_schema() -> NetworkSchema:
    nd = ElementRef("nd", Kind.PRIMITIVE, EntityType.NODE)
    lnk = ElementRef("lnk", Kind.PRIMITIVE, EntityType.LINK)
    ses = ElementRef("ses", Kind.PRIMITIVE, EntityType.SESSION)

    def param(name, layer):
        return ElementRef(name, Kind.PRIMITIVE, EntityType.PARAMETER, layer)

    lnkcap = param("lnkcap", Layer.PHYSICAL)
    lnkpwr = param("lnkpwr", Layer.PHYSICAL)
    lnksinr = param("lnksinr", Layer.PHYSICAL)
    maxpwr = param("maxpwr", Layer.PHYSICAL)
    sesrate = param("sesrate", Layer.TRANSPORT)

    def virtual(name, scope, member, owner=None):
        return VirtualElement(
            ElementRef(name, Kind.VIRTUAL, member), scope, member, owner
        )

    netnd = virtual("netnd", Scope.GLOBAL, EntityType.NODE)
    netlnk = virtual("netlnk", Scope.GLOBAL, EntityType.LINK)
    netses = virtual("netses", Scope.GLOBAL, EntityType.SESSION)
    nbrnd = virtual("nbrnd", Scope.LOCAL, EntityType.NODE, nd)
    lnknd = virtual("lnknd", Scope.LOCAL, EntityType.LINK, nd)
    lnkses = virtual("lnkses", Scope.LOCAL, EntityType.SESSION, lnk)
    seslnk = virtual("seslnk", Scope.LOCAL, EntityType.LINK, ses)

    has, member, func = Relation.HAS_ATTRIBUTE, Relation.EACH_MEMBER_IS, Relation.IS_FUNCTION_OF
    edges = [
        DependencyEdge(netnd.ref, nd, member),
        DependencyEdge(netlnk.ref, lnk, member),
        DependencyEdge(netses.ref, ses, member),
        DependencyEdge(nd, nbrnd.ref, has),
        DependencyEdge(nd, lnknd.ref, has),
        DependencyEdge(nd, lnk, has),
        DependencyEdge(nd, maxpwr, has),
        DependencyEdge(nbrnd.ref, nd, member),
        DependencyEdge(lnknd.ref, lnk, member),
        DependencyEdge(lnk, lnkcap, has),
        DependencyEdge(lnk, lnkpwr, has),
        DependencyEdge(lnk, lnksinr, has),
        DependencyEdge(lnk, lnkses.ref, has),
        DependencyEdge(lnkses.ref, ses, member),
        DependencyEdge(ses, sesrate, has),
        DependencyEdge(ses, seslnk.ref, has),
        DependencyEdge(seslnk.ref, lnk, member),
        DependencyEdge(lnksinr, lnkpwr, func),
        DependencyEdge(lnkcap, lnksinr, func),
    ]
    elements = [
        nd, lnk, ses, lnkcap, lnkpwr, lnksinr, maxpwr, sesrate,
        netnd, netlnk, netses, nbrnd, lnknd, lnkses, seslnk,
    ]
    return NetworkSchema(elements, edges)


_DEFAULT_SCHEMA = _make_default_schema()
