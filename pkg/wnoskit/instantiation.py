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

import hashlib
import itertools
import logging
import math
import random
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import (
    EmptyInstance,
    ExhaustedResampling,
    IncompletePool,
    InstantiationError,
    NotGlobal,
)
from .schema import (
    GLOBAL_ELEMENTS,
    EntityType,
    NetworkSchema,
    Scope,
    VirtualElement,
    build_default_schema,
    split_path,
)


@dataclass(frozen=True)
class DIConfig:
    """Disciplined instantiation parameters

    :param n_global: Cardinality of global instances, defaults to 20
    :param n_local: Cardinality of sampled local instances, defaults to 10
    :param rng_seed: Seed of the peer sampling stream
    :param max_resample: Random draws attempted before enumerating the remaining space
    """

    n_global: int = 20
    n_local: int = 10
    rng_seed: int = 0
    max_resample: int = 1000

    def __post_init__(self):
        if not 0 < self.n_local <= self.n_global:
            raise ValueError("n_local must be in (0, n_global]!")
        if self.max_resample < 1:
            raise ValueError("max_resample must be at least 1!")

    @classmethod
    def from_settings(cls, settings) -> "DIConfig":
        return cls(settings.n_global, settings.n_local, settings.rng_seed, settings.max_resample)


def capacity(config: DIConfig) -> int:
    """The number of unique local instances one element type can receive"""

    return math.comb(config.n_global, config.n_local)


def hash_id(members: Iterable[int]) -> str:
    """Order-insensitive 64 bit digest of an instance, as a hex string

    :raises EmptyInstance: If ``members`` is empty
    """

    members = sorted(int(member) for member in members)
    if not members:
        raise EmptyInstance("cannot hash an empty instance")
    payload = ",".join(str(member) for member in members).encode("ascii")
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


@dataclass(frozen=True)
class Instance:
    element: str
    members: Tuple[int, ...]
    hash_id: str
    member_entity_type: EntityType
    owner: Optional[int] = None

    @classmethod
    def build(
        cls, element: str, members: Iterable[int], member_entity_type: EntityType, owner: Optional[int] = None
    ) -> "Instance":
        members = tuple(sorted(int(member) for member in members))
        return cls(element, members, hash_id(members), member_entity_type, owner)

    def line(self) -> str:
        owner = "-" if self.owner is None else str(self.owner)
        return (
            f"element={self.element} owner={owner} "
            f"members={','.join(str(m) for m in self.members)} hash={self.hash_id}"
        )


class InstancePool:
    """The instances generated for one compilation

    Sampled local elements obey equal cardinality and sorted uniqueness; derived
    ones (the transposes of sampled ones) only uniqueness. ``hash_index`` maps
    every digest to the instances carrying it, collisions being told apart by
    exact comparison of the sorted members

    :param config: The instantiation parameters
    :type config: class: ``DIConfig``
    :param schema: The schema the instantiated elements belong to
    :type schema: class: ``NetworkSchema``, optional
    :param disciplined: If ``False`` (run time topologies) the two rules are not enforced
    :type disciplined: bool, optional
    """

    def __init__(self, config: DIConfig, schema: Optional[NetworkSchema] = None, disciplined: bool = True):
        self.config = config
        self.schema = schema or build_default_schema()
        self.disciplined = disciplined
        self.global_instances: Dict[str, Instance] = {}
        self.local_instances: Dict[Tuple[str, int], Instance] = {}
        self.hash_index: Dict[str, List[Tuple[str, Optional[int]]]] = {}
        self.derived: Set[str] = set()
        self.rng = random.Random(config.rng_seed)
        self._frozen = False

    def __repr__(self):
        return f"InstancePool({len(self.global_instances)} global, {len(self.local_instances)} local)"

    def __eq__(self, other):
        return (
            isinstance(other, InstancePool)
            and self.global_instances == other.global_instances
            and self.local_instances == other.local_instances
        )

    @property
    def capacity(self) -> int:
        return capacity(self.config)

    def freeze(self):
        self._frozen = True
        return self

    def _key_instance(self, key: Tuple[str, Optional[int]]) -> Instance:
        element, owner = key
        return self.global_instances[element] if owner is None else self.local_instances[(element, owner)]

    def is_unique(self, element: str, members: Sequence[int]) -> bool:
        """True when no instance of ``element`` already holds exactly ``members``"""

        members = tuple(sorted(members))
        for key in self.hash_index.get(hash_id(members), ()):
            if key[0] == element and self._key_instance(key).members == members:
                return False
        return True

    def add(self, instance: Instance, derived: bool = False):
        """Registers ``instance``, enforcing both rules for sampled local elements

        :raises InstantiationError: If the pool is frozen or a rule would be broken
        """

        if self._frozen:
            raise InstantiationError("the pool is frozen")
        if instance.owner is None:
            self.global_instances[instance.element] = instance
        else:
            if self.disciplined:
                if not self.is_unique(instance.element, instance.members):
                    raise InstantiationError(f"duplicate instance {instance.line()}")
                if not derived:
                    if len(instance.members) != self.config.n_local:
                        raise InstantiationError(
                            f"{instance.element} instances must have {self.config.n_local} members"
                        )
            self.local_instances[(instance.element, instance.owner)] = instance
        if derived:
            self.derived.add(instance.element)
        self.hash_index.setdefault(instance.hash_id, []).append((instance.element, instance.owner))

    def remove_element(self, element: str):
        """Drops every local instance of ``element`` (used when a derivation is redrawn)"""

        if self._frozen:
            raise InstantiationError("the pool is frozen")
        for key in [key for key in self.local_instances if key[0] == element]:
            instance = self.local_instances.pop(key)
            bucket = self.hash_index[instance.hash_id]
            bucket.remove(key)
            if not bucket:
                del self.hash_index[instance.hash_id]
        self.derived.discard(element)

    def global_instance(self, element: str) -> Instance:
        try:
            return self.global_instances[element]
        except KeyError:
            raise InstantiationError(f"no global instance for {element}") from None

    def local_instance(self, element: str, owner: int) -> Instance:
        try:
            return self.local_instances[(element, owner)]
        except KeyError:
            raise InstantiationError(f"no instance of {element} for owner {owner}") from None

    def instances_of(self, element: str) -> Dict[int, Instance]:
        return {owner: inst for (name, owner), inst in sorted(self.local_instances.items()) if name == element}

    def elements(self) -> List[str]:
        return sorted(set(self.global_instances) | {name for name, _ in self.local_instances})

    def has_element(self, element: str) -> bool:
        return element in self.global_instances or any(name == element for name, _ in self.local_instances)

    def match(self, members: Iterable[int], member_entity_type: EntityType) -> List[Instance]:
        """Every instance over ``member_entity_type`` whose sorted members equal ``members``"""

        members = tuple(sorted(members))
        if not members:
            return []
        found = []
        for key in self.hash_index.get(hash_id(members), ()):
            instance = self._key_instance(key)
            if instance.members == members and instance.member_entity_type is member_entity_type:
                found.append(instance)
        return found

    def dump(self) -> List[str]:
        """The ``inspect`` listing, one line per instance sorted by (element, owner)"""

        instances = list(self.global_instances.values()) + list(self.local_instances.values())
        instances.sort(key=lambda inst: (inst.element, -1 if inst.owner is None else inst.owner))
        return [instance.line() for instance in instances]

    def members(self, path: str, bindings: Mapping[EntityType, int]) -> Tuple[EntityType, Tuple[int, ...]]:
        """Resolves an element path like ``lnkses`` or ``netses[1].seslnk`` to the
        member entity type and members it denotes. Local hops without an explicit
        owner take it from ``bindings``

        :raises InstantiationError: If an instance is missing or an index is out of range
        """

        entity_type = None
        members: Tuple[int, ...] = ()
        owner: Optional[int] = None
        for position, (name, index) in enumerate(split_path(path)):
            element = self.schema.element(name)
            if not isinstance(element, VirtualElement):
                raise InstantiationError(f"{name} in {path!r} is not a set of entities")
            if element.scope is Scope.GLOBAL:
                instance = self.global_instance(name)
            else:
                if owner is None:
                    if position > 0 or element.owner.entity_type not in bindings:
                        raise InstantiationError(f"{name} in {path!r} has no owner in scope")
                    owner = bindings[element.owner.entity_type]
                instance = self.local_instance(name, owner)
            entity_type = element.member_entity_type
            members = instance.members
            owner = None
            if index is not None and index != "all":
                selected = int(index)
                if selected not in members:
                    raise InstantiationError(f"{selected} is not a member of {name} in {path!r}")
                owner = selected
                members = (selected,)
        return entity_type, members

    @classmethod
    def from_instances(
        cls,
        config: DIConfig,
        local: Mapping[str, Mapping[int, Sequence[int]]],
        global_: Optional[Mapping[str, Sequence[int]]] = None,
        schema: Optional[NetworkSchema] = None,
        derive: bool = True,
    ) -> "InstancePool":
        """Builds a validated pool from explicit member lists, deriving the
        transposed elements when ``derive`` is set

        :raises InstantiationError: If the given instances break a rule
        """

        pool = cls(config, schema)
        _add_globals(pool, global_)
        for element_name, owners in sorted(local.items()):
            element = pool.schema.element(element_name)
            for owner, members in sorted(owners.items()):
                pool.add(Instance.build(element.name, members, element.member_entity_type, owner))
        if derive:
            for element_name in sorted(local):
                inverse = pool.schema.inverse_of(element_name)
                if inverse is not None and inverse.name not in local:
                    if not _derive(pool, element_name, inverse):
                        raise InstantiationError(f"the transpose of {element_name} breaks uniqueness")
        return pool.freeze()

    @classmethod
    def from_topology(
        cls,
        nodes: Sequence[int],
        links: Mapping[int, Tuple[int, int]],
        sessions: Mapping[int, Sequence[int]],
        schema: Optional[NetworkSchema] = None,
    ) -> "InstancePool":
        """Builds the (undisciplined) pool describing a concrete network, used to
        resolve lifted templates at run time

        :param nodes: Node ids
        :param links: Link id -> (tx node, rx node)
        :param sessions: Session id -> path as a list of link ids
        """

        size = max(len(nodes), len(links), len(sessions), 1)
        pool = cls(DIConfig(size, 1), schema, disciplined=False)
        for entity_type, ids in (
            (EntityType.NODE, nodes),
            (EntityType.LINK, links),
            (EntityType.SESSION, sessions),
        ):
            name = GLOBAL_ELEMENTS[entity_type]
            pool.global_instances[name] = _loose(name, ids, entity_type)
        for session, path in sessions.items():
            pool.local_instances[("seslnk", session)] = _loose("seslnk", path, EntityType.LINK, session)
        for link in links:
            users = [session for session, path in sessions.items() if link in path]
            pool.local_instances[("lnkses", link)] = _loose("lnkses", users, EntityType.SESSION, link)
        for node in nodes:
            outgoing = [link for link, (tx, _) in links.items() if tx == node]
            neighbours = sorted(
                {rx for tx, rx in links.values() if tx == node} | {tx for tx, rx in links.values() if rx == node}
            )
            pool.local_instances[("lnknd", node)] = _loose("lnknd", outgoing, EntityType.LINK, node)
            pool.local_instances[("nbrnd", node)] = _loose("nbrnd", neighbours, EntityType.NODE, node)
        return pool.freeze()


def _loose(element: str, members: Iterable[int], entity_type: EntityType, owner: Optional[int] = None) -> Instance:
    members = tuple(sorted(int(member) for member in members))
    digest = hash_id(members) if members else ""
    return Instance(element, members, digest, entity_type, owner)


def _add_globals(pool: InstancePool, given: Optional[Mapping[str, Sequence[int]]] = None):
    given = given or {}
    for entity_type, name in GLOBAL_ELEMENTS.items():
        element = pool.schema.element(name)
        if name in given:
            pool.add(Instance.build(name, given[name], entity_type))
        else:
            pool.add(instantiate_global(element, pool.config))


def instantiate_global(element: VirtualElement, config: DIConfig) -> Instance:
    """Instantiates a global element as ``[0 .. n_global - 1]``

    :raises NotGlobal: If ``element`` is local
    """

    if not isinstance(element, VirtualElement) or element.scope is not Scope.GLOBAL:
        raise NotGlobal(f"{element.name} is not a global virtual element")
    return Instance.build(element.name, range(config.n_global), element.member_entity_type)


def instantiate_local(
    element: VirtualElement, mother: Instance, pool: InstancePool, config: DIConfig, owner: int = 0
) -> Instance:
    """Draws a unique instance of ``element`` for ``owner`` from ``mother`` by
    peer random sampling, resampling on hash hits, and registers it in ``pool``

    :raises ExhaustedResampling: If every combination of ``mother`` is already taken
    """

    if element.scope is not Scope.LOCAL:
        raise InstantiationError(f"{element.name} is not a local virtual element")
    if config.n_local > len(mother.members):
        raise InstantiationError(f"cannot draw {config.n_local} members out of {len(mother.members)}")
    taken = len(pool.instances_of(element.name))
    if taken >= math.comb(len(mother.members), config.n_local):
        raise ExhaustedResampling(
            f"{element.name}: all {taken} unique instances of size {config.n_local} are taken"
        )
    for attempt in range(config.max_resample):
        members = sorted(pool.rng.sample(mother.members, config.n_local))
        if pool.is_unique(element.name, members):
            break
        logging.debug(f"({element.name} {owner}) {{Instantiation}} Hash hit on draw {attempt + 1}, resampling")
    else:
        remaining = [
            combo
            for combo in itertools.combinations(mother.members, config.n_local)
            if pool.is_unique(element.name, combo)
        ]
        if not remaining:
            raise ExhaustedResampling(f"{element.name}: no unique instance left")
        members = list(remaining[pool.rng.randrange(len(remaining))])
    instance = Instance.build(element.name, members, element.member_entity_type, owner)
    pool.add(instance)
    return instance


def transpose(mapping: Mapping[int, Iterable[int]], owners: Iterable[int]) -> Dict[int, Tuple[int, ...]]:
    """Transposes a membership relation: ``o`` is in ``result[m]`` iff ``m`` is in ``mapping[o]``"""

    result: Dict[int, List[int]] = {owner: [] for owner in owners}
    for owner, members in mapping.items():
        for member in members:
            if member not in result:
                raise IncompletePool(f"member {member} has no slot in the transposed relation")
            result[member].append(owner)
    return {owner: tuple(sorted(members)) for owner, members in sorted(result.items())}


def invert_membership(pool: InstancePool, forward: str, inverse: str) -> Dict[int, Tuple[int, ...]]:
    """Derives the membership of ``inverse`` from the instances of ``forward``
    (Links-of-Session from Sessions-of-Link)

    :raises IncompletePool: If some owner of ``forward`` has no instance
    """

    forward_element = pool.schema.element(forward)
    inverse_element = pool.schema.element(inverse)
    owners = pool.global_instance(GLOBAL_ELEMENTS[forward_element.owner.entity_type]).members
    instances = pool.instances_of(forward)
    missing = [owner for owner in owners if owner not in instances]
    if missing:
        raise IncompletePool(f"{forward} has no instance for owner(s) {missing}")
    targets = pool.global_instance(GLOBAL_ELEMENTS[inverse_element.owner.entity_type]).members
    return transpose({owner: inst.members for owner, inst in instances.items()}, targets)


def _derive(pool: InstancePool, forward: str, inverse: VirtualElement) -> bool:
    """Adds the transpose of ``forward`` as instances of ``inverse``. Returns
    ``False`` (and adds nothing) when a derived instance is empty or collides"""

    relation = invert_membership(pool, forward, inverse.name)
    seen: Set[Tuple[int, ...]] = set()
    for owner, members in relation.items():
        if not members or members in seen or pool.match(members, inverse.member_entity_type):
            return False
        seen.add(members)
    for owner, members in relation.items():
        pool.add(Instance.build(inverse.name, members, inverse.member_entity_type, owner), derived=True)
    return True


def referenced_elements(spec, schema: Optional[NetworkSchema] = None) -> List[str]:
    """Names of the virtual elements a problem references, in order of first use
    (constraints first, then the utility, then variable scopes)"""

    from . import expressions as ex

    schema = schema or build_default_schema()
    names: List[str] = []

    def note(path: str):
        for name, _ in split_path(path):
            if name not in names and isinstance(schema.element(name), VirtualElement):
                names.append(name)

    for constraint in spec.constraints:
        for side in (constraint.lhs, constraint.rhs):
            for node in ex.walk(side):
                if isinstance(node, ex.SumOver):
                    note(node.element)
        if constraint.scope:
            note(constraint.scope)
    for node in ex.walk(spec.utility):
        if isinstance(node, ex.SumOver):
            note(node.element)
    for decl in spec.variables:
        note(decl.scope)
    return names


def build_pool(spec, config: DIConfig, schema: Optional[NetworkSchema] = None) -> InstancePool:
    """Runs disciplined instantiation for every element ``spec`` references

    Global elements get ``[0 .. n_global - 1]``. Local elements are sampled;
    when their transpose exists in the schema it is derived from them, and a
    derivation that yields an empty or duplicate instance redraws the sampled
    element

    :raises ExhaustedResampling: If no valid pool can be drawn
    """

    pool = InstancePool(config, schema)
    _add_globals(pool)
    referenced = referenced_elements(spec, pool.schema)
    sampled: List[str] = []
    for name in referenced:
        element = pool.schema.element(name)
        if element.scope is not Scope.LOCAL:
            continue
        inverse = pool.schema.inverse_of(name)
        if inverse is not None and inverse.name in sampled:
            continue
        sampled.append(name)
    for name in sampled:
        element = pool.schema.element(name)
        mother = pool.global_instance(GLOBAL_ELEMENTS[element.member_entity_type])
        owners = pool.global_instance(GLOBAL_ELEMENTS[element.owner.entity_type]).members
        inverse = pool.schema.inverse_of(name)
        for attempt in range(config.max_resample):
            for owner in owners:
                instantiate_local(element, mother, pool, config, owner)
            if inverse is None or _derive(pool, name, inverse):
                break
            logging.debug(f"{{Instantiation}} Transpose of {name} is degenerate, redrawing (attempt {attempt + 1})")
            pool.remove_element(name)
        else:
            raise ExhaustedResampling(f"could not draw {name} with a valid transpose")
    logging.info(
        f"{{Instantiation}} Pool ready: {len(pool.global_instances)} global and "
        f"{len(pool.local_instances)} local instance(s), capacity {pool.capacity}"
    )
    return pool.freeze()
