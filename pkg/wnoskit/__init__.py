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

__author__ = "wnoskit contributors"
__version__ = (0, 1, 0)

from .config import Settings
from .dsl import PROGRAMS_DIR, load_program, parse_program
from .instantiation import DIConfig, InstancePool, build_pool
from .decomposer import compile_problem
from .algogen import synthesize
from .scenario import SCENARIOS_DIR, load_scenario
from .netsim import SCHEMES, replicate, run, simulate

__all__ = [
    "Settings",
    "PROGRAMS_DIR",
    "SCENARIOS_DIR",
    "SCHEMES",
    "DIConfig",
    "InstancePool",
    "build_pool",
    "compile_problem",
    "load_program",
    "load_scenario",
    "parse_program",
    "replicate",
    "run",
    "simulate",
    "synthesize",
]
