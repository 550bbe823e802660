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

from typing import Optional


class WNOSError(Exception):
    """The base class for every error raised by wnoskit"""

    pass


class StopPropagation(Exception):
    """This exception is meant to be raised by a signal handler to prevent the
    dispatcher from forwarding the message to the handlers of the next groups"""

    pass


# Abstraction #


class AbstractionError(WNOSError):
    """Base for errors raised while building schemas, expressions and programs"""

    pass


class UnknownElement(AbstractionError):
    """Raised by ``read`` when a hop of an element path does not resolve"""

    pass


class ArityMismatch(AbstractionError):
    """Raised by ``compose`` when an operator receives the wrong number of arguments"""

    pass


class SchemaMismatch(AbstractionError):
    """Raised by ``compare`` when the two sides were built against different schemas"""

    pass


class ParseError(AbstractionError):
    """Raised when a control program does not conform to the DSL grammar

    :param message: What went wrong
    :type message: str
    :param line: The 1-based line of the offending token
    :type line: int
    :param column: The 1-based column of the offending token
    :type column: int
    """

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ValidationError(AbstractionError):
    """Raised when a syntactically valid program is semantically invalid
    (unbound variables, unused variables, unbounded linear variables...)"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# Instantiation #


class InstantiationError(WNOSError):
    """Base for disciplined instantiation errors"""

    pass


class NotGlobal(InstantiationError):
    """Raised when a local element is instantiated as a global one"""

    pass


class ExhaustedResampling(InstantiationError):
    """Raised when no unique instance can be drawn any more for an element type,
    i.e. more than C(n_global, n_local) instances were requested"""

    pass


class EmptyInstance(InstantiationError):
    """Raised when hashing an instance with no members"""

    pass


class IncompletePool(InstantiationError):
    """Raised when an inverse membership is asked for but some owners have no instance"""

    pass


# Decomposition #


class DecompositionError(WNOSError):
    """Base for errors raised while dualizing, splitting and lifting a problem"""

    pass


class MissingInstance(DecompositionError):
    """Raised when the problem references a virtual element the pool does not hold"""

    pass


class UnsupportedConstraintSense(DecompositionError):
    """Raised for constraint forms that cannot be dualized"""

    pass


class NotNormalized(DecompositionError):
    """Raised when the dual expression is not in sum-of-products form"""

    pass


class UnattributableTerm(DecompositionError):
    """Raised when an addend mixes decision variables of two protocol layers"""

    pass


class NonSeparable(DecompositionError):
    """Raised when an addend couples decision variables of two entities of the same layer"""

    pass


class NoMatchingInstance(DecompositionError):
    """Raised when a dual coefficient set matches no pool instance"""

    pass


class AmbiguousMatch(DecompositionError):
    """Raised when a dual coefficient set matches more than one pool instance"""

    pass


# Solver synthesis #


class SynthesisError(WNOSError):
    """Base for solver plan synthesis errors"""

    pass


class NoApplicableMethod(SynthesisError):
    """Raised when no solver method applies to a lifted template"""

    pass


class MissingParameter(SynthesisError):
    """Raised when a local solve is missing a registered parameter"""

    pass


class NotDifferentiable(SynthesisError):
    """Raised when a penalized utility needs a gradient the utility does not have"""

    pass


# Protocol stack and simulation #


class StackError(WNOSError):
    """Base for programmable protocol stack errors"""

    pass


class RoleMismatch(StackError):
    """Raised when a program does not cover the roles a node plays"""

    pass


class StaleRegisters(StackError):
    """Raised when the received dual coefficients are older than the staleness bound"""

    pass


class SimulationError(WNOSError):
    """Base for simulator errors

    :param message: What went wrong
    :type message: str
    :param slot: The slot at which the simulator stopped, if any
    :type slot: int, optional
    """

    def __init__(self, message: str, slot: Optional[int] = None):
        self.slot = slot
        if slot is not None:
            message = f"slot {slot}: {message}"
        super().__init__(message)


class IncompatibleProgram(SimulationError):
    """Raised when a compiled program cannot drive the given scenario"""

    pass


class FormatError(SimulationError):
    """Raised when a scenario file is malformed"""

    pass


class TopologyError(SimulationError):
    """Raised when a scenario describes a disconnected session path"""

    pass
