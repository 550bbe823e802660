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

import configparser
import logging
import os
from typing import Any, Dict, Mapping, Optional

SEED_ENV_VAR = "WNOS_KIT_SEED"

# option name -> (section, type, default)
OPTIONS = {
    # [WNOSKit]
    "logging_level": ("WNOSKit", int, logging.INFO),
    "console_format": ("WNOSKit", str, "[%(levelname)s] %(asctime)s %(message)s"),
    "datefmt": ("WNOSKit", str, "%d/%m/%Y %H:%M:%S %p"),
    "state_encoding": ("WNOSKit", str, "json"),
    "header_size": ("WNOSKit", int, 4),
    "byteorder": ("WNOSKit", str, "big"),
    "workers": ("WNOSKit", int, 5),
    # [instantiation]
    "n_global": ("instantiation", int, 20),
    "n_local": ("instantiation", int, 10),
    "rng_seed": ("instantiation", int, 0),
    "max_resample": ("instantiation", int, 1000),
    # [algogen]
    "alpha0": ("algogen", float, 0.05),
    "step_period": ("algogen", int, 10),
    "step": ("algogen", str, "diminishing"),
    "distribution": ("algogen", str, "dpl"),
    "high_sinr": ("algogen", bool, False),
    "physical_step": ("algogen", float, 2.0),
    "max_step_db": ("algogen", float, 3.0),
    "gradient_iterations": ("algogen", int, 1),
    "transport_step": ("algogen", float, 0.5),
    # [pps]
    "timescale_ratio": ("pps", int, 30),
    "physical_period": ("pps", int, 1),
    "staleness_bound": ("pps", int, 600),
    "hop_delay": ("pps", int, 1),
    "init_mode": ("pps", str, "midpoint"),
    "init_gain_db": ("pps", float, 15.0),
    # [netsim]
    "slot_seconds": ("netsim", float, 0.01),
    "overload_penalty": ("netsim", float, 1.0),
    "throughput_window": ("netsim", int, 100),
    "utility_floor": ("netsim", float, 1e-3),
    "steady_fraction": ("netsim", float, 0.2),
}

# Keys a control program may override through ``nt.set``
PROGRAM_KEYS = (
    "n_global",
    "n_local",
    "rng_seed",
    "max_resample",
    "timescale_ratio",
    "alpha0",
    "step_period",
    "step",
    "distribution",
    "high_sinr",
)

CHOICES = {
    "state_encoding": ("json", "ziproto"),
    "byteorder": ("big", "little"),
    "step": ("constant", "diminishing"),
    "distribution": ("best_response", "gradient", "dpl"),
    "init_mode": ("midpoint", "random"),
}


def _coerce(name: str, value: Any):
    """Converts a raw configuration value to the declared type of ``name``"""

    kind = OPTIONS[name][1]
    if isinstance(value, str):
        raw = value.strip()
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"{name} must be a boolean, got {value!r}")
        if kind is int:
            if raw.lstrip("-").isdigit():
                return int(raw)
            raise ValueError(f"{name} must be an integer, got {value!r}")
        if kind is float:
            return float(raw)
        return raw
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


class Settings:
    """Every tunable of the toolkit, with the type checks performed
    at construction time

    Unknown keyword arguments are rejected. Values may be given with their final type
    or as strings (as read from an INI file or from ``nt.set``)

    :raises TypeError: If a value has the wrong type
    :raises ValueError: If a value is outside of its valid range
    """

    def __init__(self, **overrides):
        """Object constructor"""

        for name, (_, _, default) in OPTIONS.items():
            setattr(self, name, default)
        self.update(**overrides)

    def update(self, **overrides):
        """Applies the given overrides and re-validates the whole object

        :returns: ``self``
        :rtype: Settings
        """

        for name, value in overrides.items():
            if name not in OPTIONS:
                raise TypeError(f"unknown setting {name!r}")
            setattr(self, name, _coerce(name, value))
        self._check()
        return self

    def _check(self):
        for name, (_, kind, _) in OPTIONS.items():
            value = getattr(self, name)
            if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
                raise TypeError(f"{name} must be an integer!")
            if kind is float and not isinstance(value, float):
                raise TypeError(f"{name} must be a float!")
            if kind is bool and not isinstance(value, bool):
                raise TypeError(f"{name} must be a boolean!")
            if kind is str and not isinstance(value, str):
                raise TypeError(f"{name} must be a string!")
            if name in CHOICES and value not in CHOICES[name]:
                raise ValueError(f"{name} must be one of {', '.join(CHOICES[name])}!")
        if not 0 < self.n_local <= self.n_global:
            raise ValueError("n_local must be in (0, n_global]!")
        if self.max_resample < 1:
            raise ValueError("max_resample must be at least 1!")
        if self.timescale_ratio < 1 or self.physical_period < 1:
            raise ValueError("timescale_ratio and physical_period must be positive!")
        if self.alpha0 <= 0 or self.step_period < 1:
            raise ValueError("alpha0 and step_period must be positive!")
        if self.physical_step <= 0 or self.transport_step <= 0 or self.max_step_db <= 0:
            raise ValueError("physical_step, transport_step and max_step_db must be positive!")
        if self.gradient_iterations < 1:
            raise ValueError("gradient_iterations must be at least 1!")
        if self.slot_seconds <= 0 or self.throughput_window < 1:
            raise ValueError("slot_seconds and throughput_window must be positive!")
        if not 0 < self.steady_fraction <= 1:
            raise ValueError("steady_fraction must be in (0, 1]!")
        if self.header_size < 1:
            raise ValueError("header_size must be positive!")

    @property
    def transport_period(self) -> int:
        """The transport tick period in slots"""

        return self.physical_period * self.timescale_ratio

    def load_config(self, config: str, cfg_parser: Optional[configparser.ConfigParser] = None):
        """
        Loads an INI file and applies every option it sets. Options absent from the file
        keep their current value

        :param config: The path to the configuration file
        :type config: str
        :param cfg_parser: If you want to use a custom configparser object, you can specify it here
        :type cfg_parser: class: ``configparser.ConfigParser()``, optional
        :returns: ``self``
        :rtype: Settings
        """

        parser = cfg_parser if cfg_parser else configparser.ConfigParser()
        with open(config) as config_file:
            parser.read_file(config_file)
        options = {}
        for option, (section, _, _) in OPTIONS.items():
            options[option] = parser.get(section, option, fallback=None)
        found = {}
        for option_name, option_value in options.items():
            if option_value:
                found[option_name] = option_value
        logging.debug(f"{{Config}} Loaded {len(found)} option(s) from {config}")
        return self.update(**found)

    def apply_program(self, program_settings: Mapping[str, Any]):
        """Applies the ``nt.set`` statements of a control program. Keys that are not
        tunables (e.g. routing preferences) are passed through uninterpreted

        :returns: ``self``
        :rtype: Settings
        """

        known = {k: v for k, v in program_settings.items() if k in PROGRAM_KEYS}
        return self.update(**known)

    def as_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in OPTIONS}

    def copy(self) -> "Settings":
        return Settings(**self.as_dict())

    def __repr__(self):
        return f"Settings({', '.join(f'{k}={v!r}' for k, v in self.as_dict().items())})"

    def __eq__(self, other):
        return isinstance(other, Settings) and self.as_dict() == other.as_dict()


def resolve_seed(seed: Optional[int], settings: Optional[Settings] = None) -> int:
    """Returns the seed to use: the explicit one first, then ``WNOS_KIT_SEED``,
    then the configured ``rng_seed``"""

    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None and env.strip().lstrip("-").isdigit():
        return int(env)
    return settings.rng_seed if settings else OPTIONS["rng_seed"][2]


def setup_logging(settings: Settings):
    """Configures the root logger the way every entry point does"""

    logging.basicConfig(
        datefmt=settings.datefmt,
        format=settings.console_format,
        level=settings.logging_level,
    )
