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
from dataclasses import dataclass, replace
from enum import Enum
from types import FunctionType
from typing import Dict, Iterable, List, Optional, Union

from .errors import StopPropagation


class MessageKind(Enum):
    DUAL_REPORT = "dual_report"
    GRADIENT_REPORT = "gradient_report"


@dataclass(frozen=True)
class SignalingMessage:
    """A control message travelling between protocol stacks

    :param kind: Dual report (link price toward sources) or gradient report
        (interference price toward same-band transmitters)
    :param source: The id of the link that emitted the message
    :param payload: The reported value
    :param timestamp: The slot the message was emitted at
    :param destination: The id of the node the message is addressed to
    :param hop_budget: Hops left before delivery
    :param family: The dual family the payload belongs to
    :raises ValueError: If the payload is not finite
    """

    kind: MessageKind
    source: int
    payload: float
    timestamp: int
    destination: int
    hop_budget: int = 0
    family: int = 0

    def __post_init__(self):
        if not math.isfinite(self.payload):
            raise ValueError("message payloads must be finite")
        if self.hop_budget < 0:
            raise ValueError("hop_budget cannot be negative")

    def advance(self) -> "SignalingMessage":
        """The message one hop closer to its destination"""

        return replace(self, hop_budget=max(0, self.hop_budget - 1))

    @property
    def delivered(self) -> bool:
        return self.hop_budget == 0

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "source": self.source,
            "payload": self.payload,
            "timestamp": self.timestamp,
            "destination": self.destination,
            "family": self.family,
        }


class Filter(object):
    """The standard base for all filters"""

    def check(self, node, message):
        """Dummy check method"""
        return


class Filters(Filter):

    """
    The filters handlers of a ``SignalRouter`` can be restricted with
    """

    class Kind(Filter):
        """
        Lets only the given message kinds pass

        :param kinds: One or more message kinds
        :type kinds: Union[MessageKind, List[MessageKind]]
        """

        def __init__(self, kinds: Union[MessageKind, Iterable[MessageKind]]):
            if isinstance(kinds, MessageKind):
                kinds = [kinds]
            kinds = set(kinds)
            if not kinds or not all(isinstance(kind, MessageKind) for kind in kinds):
                raise ValueError("kinds must be one or more MessageKind values!")
            self.kinds = kinds

        def __repr__(self):
            return f"Filters.Kind({self.kinds})"

        def check(self, _, message):
            return message.kind in self.kinds

    class Source(Filter):
        """
        Lets only messages emitted by the given links pass.
        Note: This filter is dynamic, ``sources`` can be updated at run time

        :param sources: A link id or a list of link ids
        :type sources: Union[int, List[int]]
        """

        def __init__(self, sources: Union[int, Iterable[int]]):
            if isinstance(sources, int):
                sources = [sources]
            self.sources = set(sources)

        def __repr__(self):
            return f"Filters.Source({self.sources})"

        def check(self, _, message):
            return message.source in self.sources

    class Family(Filter):
        """
        Lets only messages of the given dual families pass

        :param families: One or more family indexes
        :type families: Union[int, List[int]]
        """

        def __init__(self, families: Union[int, Iterable[int]]):
            if isinstance(families, int):
                families = [families]
            self.families = set(families)

        def __repr__(self):
            return f"Filters.Family({self.families})"

        def check(self, _, message):
            return message.family in self.families


class Handler:
    """
    Every function registered on a router is wrapped inside a ``Handler`` object together
    with its filters

    :param function: The function, accepting two positional parameters (the node and the message)
    :type function: function
    :param filters: A list of ``Filter`` objects, defaults to ``None``
    :type filters: List[Filter]
    """

    def __init__(self, function: FunctionType, filters: Optional[List[Filter]] = None):
        """
        Object constructor
        """

        if not filters:
            filters = []
        self.filters = filters
        self.function = function

    def __repr__(self):
        return f"Handler({self.function}, {self.filters})"

    def check(self, node, message: SignalingMessage) -> bool:
        """
        Returns ``True`` if all filters of the handler let the node/message pair pass

        :rtype: bool
        """

        return all(map(lambda f: f.check(node, message), self.filters))

    def call(self, *args):
        return self.function(*args)


class SignalRouter:
    """
    Dispatches delivered messages to handlers

    Handlers are organized in groups, checked in ascending order: in every
    group, the first handler whose filters pass is called. A handler raising
    ``StopPropagation`` prevents every later group from seeing the message
    """

    def __init__(self):
        self._handlers: Dict[int, List[Handler]] = {}

    def register_handler(self, handler, *filters, **kwargs):
        """
        Registers an handler

        :param handler: A function object
        :type handler: FunctionType
        :param filters: Pass one or more filters to allow only a subset of messages to reach your handler
        :type filters: Filter, optional
        :param group: The group id, default to 0
        :type group: int, optional
        """

        group = kwargs.get("group", 0)
        if group in self._handlers:
            self._handlers[group].append(Handler(handler, list(filters)))
        else:
            self._handlers[group] = [Handler(handler, list(filters))]
        # This keeps our handlers sorted
        self._handlers = dict(sorted(self._handlers.items()))

    def dispatch(self, node, message: SignalingMessage) -> bool:
        """
        Hands ``message`` to the handlers of ``node``

        :returns: ``False`` if a handler stopped the propagation, ``True`` otherwise
        :rtype: bool
        """

        for group, handlers in self._handlers.items():
            for handler in handlers:
                if handler.check(node, message):
                    logging.debug(
                        f"({message.destination}) {{Dispatcher}} Calling '{handler.function.__name__}' in group {group}"
                    )
                    try:
                        handler.call(node, message)
                    except StopPropagation:
                        logging.debug(
                            f"({message.destination}) {{Dispatcher}} Propagation stopped by '{handler.function.__name__}'"
                        )
                        return False
                    break
        return True
