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

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FEC_RATES = (0.1, 0.2, 0.3, 0.4)
LN2 = math.log(2.0)
DB_SLOPE = math.log(10.0) / 10.0


def db_to_mw(gain_db):
    """Transmit power in mW for a gain in dB over a 1 mW reference"""

    return np.power(10.0, np.asarray(gain_db, dtype=float) / 10.0)


def mw_to_db(power_mw):
    return 10.0 * np.log10(np.asarray(power_mw, dtype=float))


@dataclass(frozen=True)
class ChannelModel:
    """Log-distance path loss and Shannon capacity with SINR

    :param path_loss_exponent: Path loss exponent, in [2, 6]
    :param reference_gain: Channel gain at 1 m
    :param noise_floor: Noise power in mW
    :param bandwidth: Band width in Hz
    :param packet_size: Packet length in bits
    :param efficiency: Fraction of the Shannon rate achieved by the modem
    :param fec_rate: Fraction of each packet spent on coding
    :param high_snr_approx: Solvers use ``log2(SINR)`` instead of ``log2(1 + SINR)``
    """

    path_loss_exponent: float = 3.0
    reference_gain: float = 1e-3
    noise_floor: float = 1e-7
    bandwidth: float = 200e3
    packet_size: int = 2048
    efficiency: float = 0.005
    fec_rate: float = 0.2
    high_snr_approx: bool = False

    def __post_init__(self):
        if not 2.0 <= self.path_loss_exponent <= 6.0:
            raise ValueError("path_loss_exponent must be in [2, 6]!")
        if self.noise_floor <= 0 or self.reference_gain <= 0:
            raise ValueError("noise_floor and reference_gain must be positive!")
        if self.bandwidth <= 0 or self.packet_size <= 0 or not 0 < self.efficiency <= 1:
            raise ValueError("bandwidth, packet_size and efficiency must be positive!")
        if not any(math.isclose(self.fec_rate, rate) for rate in FEC_RATES):
            raise ValueError(f"fec_rate must be one of {FEC_RATES}!")

    @property
    def scale(self) -> float:
        """Packets/s per bit/s/Hz of spectral efficiency"""

        return self.efficiency * (1.0 - self.fec_rate) * self.bandwidth / self.packet_size

    def gain(self, distance) -> np.ndarray:
        distance = np.maximum(np.asarray(distance, dtype=float), 1.0)
        return self.reference_gain * np.power(distance, -self.path_loss_exponent)


class LinkChannel:
    """The channel between the links of one scenario

    ``gains[k, j]`` is the gain from the transmitter of link ``k`` to the receiver
    of link ``j``; ``coupled[k, j]`` is set when ``k`` interferes with ``j`` (same
    band, distinct links)

    :param model: The channel model
    :type model: class: ``ChannelModel``
    :param tx_positions: (L, 2) transmitter positions in meters
    :param rx_positions: (L, 2) receiver positions in meters
    :param bands: Band index of every link
    """

    def __init__(self, model: ChannelModel, tx_positions, rx_positions, bands: Sequence[int]):
        self.model = model
        tx = np.asarray(tx_positions, dtype=float).reshape(-1, 2)
        rx = np.asarray(rx_positions, dtype=float).reshape(-1, 2)
        distance = np.linalg.norm(tx[:, None, :] - rx[None, :, :], axis=2)
        self.gains = model.gain(distance)
        bands = np.asarray(bands)
        self.coupled = (bands[:, None] == bands[None, :]) & ~np.eye(len(bands), dtype=bool)
        self.size = len(bands)

    def signal(self, powers) -> np.ndarray:
        return np.diag(self.gains) * np.asarray(powers, dtype=float)

    def interference(self, powers) -> np.ndarray:
        """Noise plus same-band interference at every receiver, in mW"""

        powers = np.asarray(powers, dtype=float)
        return self.model.noise_floor + (self.coupled * self.gains).T @ powers

    def sinr(self, powers) -> np.ndarray:
        return self.signal(powers) / self.interference(powers)

    def capacities(self, powers, approx: bool = False) -> np.ndarray:
        """Link capacities in packets/s. ``approx`` selects the high-SINR form"""

        sinr = self.sinr(powers)
        if approx:
            return self.model.scale * np.log2(np.maximum(sinr, 1e-12))
        return self.model.scale * np.log2(1.0 + sinr)


def interference_sensitivity(scale, signal, interference):
    """``-d c / d I``: capacity lost per mW of extra interference at a receiver,
    for scalars or arrays"""

    return scale / LN2 * signal / (interference * (interference + signal))
