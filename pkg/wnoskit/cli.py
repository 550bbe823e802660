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
The ``wnoskit`` command.

Exit codes:

- ``0`` success
- ``1`` unexpected failure
- ``2`` malformed input (program, scenario, configuration or arguments)
- ``3`` the program cannot be instantiated, decomposed or turned into solvers
- ``4`` the compiled program cannot drive the scenario
"""

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import trio

from .algogen import PlanSet, synthesize
from .config import SEED_ENV_VAR, Settings, resolve_seed, setup_logging
from .decomposer import Compilation, compile_problem
from .dsl import ControlProblemSpec, load_program, program_path
from .dump import StateCodec, write_atomic, write_states
from .errors import (
    DecompositionError,
    FormatError,
    IncompatibleProgram,
    InstantiationError,
    ParseError,
    RoleMismatch,
    SynthesisError,
    TopologyError,
    ValidationError,
)
from .instantiation import DIConfig, InstancePool, build_pool
from .netsim import NO_CONTROL, SCHEMES, MetricsLog, check_scheme, compare, simulate
from .plotting import plot_run, plot_states
from .scenario import Scenario, load_scenario

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_COMPILE = 3
EXIT_INCOMPATIBLE = 4


@dataclass
class RunConfig:
    """Everything one ``run`` or ``compare`` invocation needs

    :raises ValueError: If a scheme is unknown or no scheme is given
    """

    program: str
    scenario: str
    schemes: List[str] = field(default_factory=lambda: [SCHEMES[0]])
    seed: Optional[int] = None
    out: str = "."
    plot: bool = False
    duration: Optional[int] = None

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("at least one scheme is required!")
        unknown = [scheme for scheme in self.schemes if scheme not in SCHEMES]
        if unknown:
            raise ValueError(f"unknown scheme(s) {', '.join(unknown)}, expected one of {', '.join(SCHEMES)}")
        # repeated schemes run once, in first-seen order
        self.schemes = list(dict.fromkeys(self.schemes))


def exit_code(error: BaseException) -> int:
    """Maps an exception to the documented exit code"""

    # failures of the scheme workers come back grouped by the nursery
    grouped = getattr(error, "exceptions", None)
    if isinstance(grouped, (list, tuple)) and len(grouped) == 1:
        return exit_code(grouped[0])
    if isinstance(error, (ParseError, ValidationError, FormatError, TopologyError, OSError, ValueError)):
        return EXIT_INPUT
    if isinstance(error, (IncompatibleProgram, RoleMismatch)):
        return EXIT_INCOMPATIBLE
    if isinstance(error, (DecompositionError, InstantiationError, SynthesisError)):
        return EXIT_COMPILE
    return EXIT_FAILURE


def explicit_seed(seed: Optional[int]) -> Optional[int]:
    """The ``--seed`` value, or the ``WNOS_KIT_SEED`` fallback, or ``None``"""

    if seed is None and SEED_ENV_VAR not in os.environ:
        return None
    return resolve_seed(seed)


def load_settings(config: Optional[str], spec: Optional[ControlProblemSpec], seed: Optional[int]) -> Settings:
    """Defaults, then ``--config``, then the program's ``nt.set`` keys, then the seed"""

    settings = Settings()
    if config:
        settings.load_config(config)
    if spec is not None:
        settings.apply_program(spec.settings_map)
    if seed is not None:
        settings.update(rng_seed=seed)
    return settings


def prepare(
    program: str, config: Optional[str], seed: Optional[int]
) -> Tuple[ControlProblemSpec, Settings, InstancePool, Compilation]:
    """Parses, instantiates and decomposes a program"""

    spec = load_program(program)
    settings = load_settings(config, spec, explicit_seed(seed))
    setup_logging(settings)
    pool = build_pool(spec, DIConfig.from_settings(settings))
    logging.info(
        f"{{CLI}} Instantiated {os.path.basename(program_path(program))} with seed {settings.rng_seed}: "
        f"{len(pool.local_instances)} local instance(s)"
    )
    return spec, settings, pool, compile_problem(spec, pool)


def _write_text(path: str, text: str):
    write_atomic(path, text.encode("utf-8"))
    logging.info(f"{{CLI}} Wrote {path}")


def cmd_compile(args) -> int:
    _, settings, _, compilation = prepare(args.program, args.config, args.seed)
    text = compilation.dump()
    plans: Optional[PlanSet] = None
    if args.plans:
        plans = synthesize(compilation.program, settings)
        text += "# plans\n" + "\n".join(plans.dump()) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        stem = os.path.splitext(os.path.basename(program_path(args.program)))[0]
        _write_text(os.path.join(args.out, f"{stem}.decomposition.txt"), compilation.dump())
        if plans is not None:
            _write_text(os.path.join(args.out, f"{stem}.plans.txt"), "\n".join(plans.dump()) + "\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def inspect_report(pool: InstancePool, compilation: Compilation) -> str:
    lines = ["# instances"]
    lines += pool.dump()
    lines.append("# capacity")
    lines.append(f"C({pool.config.n_global}, {pool.config.n_local}) = {pool.capacity}")
    lines.append("# elements")
    lines += pool.schema.describe()
    tree = compilation.tree
    lines.append("# tree")
    lines.append(f"level0: {tree.root.render()}")
    lines += [f"level1[{position}]: {child.render()}" for position, child in enumerate(tree.level1)]
    lines += [
        f"level2[{position}]: {dual.render()} | {primal.render()}"
        for position, (dual, primal) in enumerate(tree.level2)
    ]
    return "\n".join(lines) + "\n"


def cmd_inspect(args) -> int:
    _, _, pool, compilation = prepare(args.program, args.config, args.seed)
    sys.stdout.write(inspect_report(pool, compilation))
    return EXIT_OK


def _run_scheme(
    scenario: Scenario, compilation: Compilation, plans: PlanSet, scheme: str, settings: Settings, seed: int
) -> Tuple[MetricsLog, List[dict]]:
    world = simulate(scenario, compilation.program, scheme, settings, seed, plans)
    return world.metrics(), world.snapshots


async def _run_all(
    scenario: Scenario,
    compilation: Compilation,
    plans: PlanSet,
    schemes: Sequence[str],
    settings: Settings,
    seed: int,
) -> Dict[str, Tuple[MetricsLog, List[dict]]]:
    """Runs the schemes in worker threads, at most ``settings.workers`` at a time"""

    limiter = trio.CapacityLimiter(settings.workers)
    results: Dict[str, Tuple[MetricsLog, List[dict]]] = {}

    async def one(scheme: str):
        results[scheme] = await trio.to_thread.run_sync(
            partial(_run_scheme, scenario, compilation, plans, scheme, settings, seed), limiter=limiter
        )

    async with trio.open_nursery() as nursery:
        for scheme in schemes:
            nursery.start_soon(one, scheme)
    return {scheme: results[scheme] for scheme in schemes}


def execute(
    config: RunConfig, settings_file: Optional[str] = None
) -> Tuple[Dict[str, MetricsLog], Compilation, Scenario, Settings]:
    """Compiles the program, runs every scheme of ``config`` and writes their files

    Without an explicit seed the scenario's own seed drives the simulation
    """

    _, settings, _, compilation = prepare(config.program, settings_file, config.seed)
    scenario = load_scenario(config.scenario)
    if config.duration is not None:
        scenario = scenario.with_duration(config.duration)
    seed = explicit_seed(config.seed)
    seed = scenario.seed if seed is None else seed
    plans = synthesize(compilation.program, settings)
    for scheme in config.schemes:
        check_scheme(compilation.program, scheme)
    results = trio.run(_run_all, scenario, compilation, plans, config.schemes, settings, seed)
    os.makedirs(config.out, exist_ok=True)
    codec = StateCodec.from_settings(settings)
    logs = {}
    for scheme, (log, snapshots) in results.items():
        path = os.path.join(config.out, f"{scheme}.csv")
        write_atomic(path, log.to_csv().encode("utf-8"))
        logging.info(f"{{CLI}} Wrote {path} ({log.slots} slot(s))")
        states = write_states(snapshots, config.out, scheme, codec)
        if config.plot:
            plot_run(log, config.out, settings.slot_seconds)
            plot_states(states, config.out, scheme, settings.slot_seconds)
        logs[scheme] = log
    return logs, compilation, scenario, settings


def _config(args, minimum: int = 1) -> RunConfig:
    if len(args.scheme) < minimum:
        raise ValueError(f"at least {minimum} schemes are required")
    return RunConfig(args.program, args.scenario, args.scheme, args.seed, args.out, args.plot, args.duration)


def cmd_run(args) -> int:
    execute(_config(args), args.config)
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _config(args, minimum=2)
    # NoControl is the baseline of every gain
    if NO_CONTROL not in config.schemes:
        config.schemes.append(NO_CONTROL)
    logs, compilation, scenario, settings = execute(config, args.config)
    table = compare(logs, compilation.program, len(scenario.sessions), settings.steady_fraction)
    sys.stdout.write(table.to_csv(sep="\t", index=False, float_format="%.6f", lineterminator="\n", na_rep="nan"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wnoskit", description="Compile network control programs into distributed solvers and simulate them"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub, program_positional: bool = True):
        if program_positional:
            sub.add_argument("program", help="A .wnos file or the name of a bundled program")
        sub.add_argument("--seed", type=int, default=None, help="Seed of every random stream")
        sub.add_argument("--config", default=None, help="An INI configuration file")

    compile_ = commands.add_parser("compile", help="Decompose a program and dump every stage")
    common(compile_)
    compile_.add_argument("--plans", action="store_true", help="Also synthesize and dump the solver plans")
    compile_.add_argument("--out", default=None, help="Write the dumps to this directory instead of stdout")
    compile_.set_defaults(handler=cmd_compile)

    inspect = commands.add_parser("inspect", help="Print the instantiation tables and the decomposition tree")
    common(inspect)
    inspect.set_defaults(handler=cmd_inspect)

    for name, handler, default in (
        ("run", cmd_run, [SCHEMES[0]]),
        ("compare", cmd_compare, [SCHEMES[0], NO_CONTROL]),
    ):
        sub = commands.add_parser(name, help=f"{name.capitalize()} control schemes on a scenario")
        common(sub, program_positional=False)
        sub.add_argument("--program", required=True, help="A .wnos file or the name of a bundled program")
        sub.add_argument("--scenario", required=True, help="A scenario .ini file or the name of a bundled scenario")
        sub.add_argument("--scheme", nargs="+", choices=SCHEMES, default=default, help="The schemes to run")
        sub.add_argument("--out", default=".", help="The output directory")
        sub.add_argument("--plot", action="store_true", help="Also plot throughput and power")
        sub.add_argument("--duration", type=int, default=None, help="Override the scenario duration (slots)")
        sub.set_defaults(handler=handler)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except Exception as error:
        code = exit_code(error)
        logging.error(f"{{CLI}} {type(error).__name__}: {error}")
        if code == EXIT_FAILURE:
            logging.debug("{CLI} Traceback follows", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
