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
import os
from typing import Dict, List, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .dump import read_states  # noqa: E402
from .netsim import MetricsLog  # noqa: E402


def plot_run(log: MetricsLog, directory: str, slot_seconds: float = 0.01) -> List[str]:
    """Writes the throughput and power traces of one run as PNG files

    :returns: The paths of the written files
    """

    paths = []
    series = (
        ("throughput", log.throughput(), "Session", "Throughput (packets/s)"),
        ("power", log.power(), "Node", "Transmit power (mW)"),
    )
    for name, frame, label, ylabel in series:
        fig, ax = plt.subplots(figsize=(10, 4))
        seconds = frame.index.to_numpy() * slot_seconds
        for column in frame.columns:
            ax.plot(seconds, frame[column].to_numpy(dtype=float), "-", alpha=0.8, label=f"{label} {column}")
        if log.contention_end is not None:
            ax.axvline(log.contention_end * slot_seconds, color="gray", linestyle="--", alpha=0.5)
        ax.set_xlabel("Time (s)")
        ax.set_ylabel(ylabel)
        ax.set_title(f"{log.scheme}: {name}")
        ax.grid(True, alpha=0.3)
        if len(frame.columns):
            ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        path = os.path.join(directory, f"{log.scheme}.{name}.png")
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        logging.debug(f"{{Plotting}} Saved {path}")
        paths.append(path)
    return paths


def plot_states(path: str, directory: str, scheme: str, slot_seconds: float = 0.01) -> str:
    """Plots the dual coefficients the receivers recorded in a state dump

    :param path: A dump written by ``write_states()``
    :returns: The path of the written file
    """

    traces: Dict[str, Tuple[List[float], List[float]]] = {}
    for record in read_states(path):
        for name, value in record["lambda"].items():
            seconds, values = traces.setdefault(name, ([], []))
            seconds.append(record["slot"] * slot_seconds)
            values.append(float(value))
    fig, ax = plt.subplots(figsize=(10, 4))
    for name, (seconds, values) in sorted(traces.items()):
        ax.plot(seconds, values, "-", alpha=0.8, label=name)
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Dual coefficient")
    ax.set_title(f"{scheme}: lambda")
    ax.grid(True, alpha=0.3)
    if traces:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    target = os.path.join(directory, f"{scheme}.lambda.png")
    fig.savefig(target, dpi=150, bbox_inches="tight")
    plt.close(fig)
    logging.debug(f"{{Plotting}} Saved {target} from {len(traces)} trace(s)")
    return target
