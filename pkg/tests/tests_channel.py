import math

import numpy as np
import pytest

from wnoskit.channel import ChannelModel, LinkChannel, db_to_mw, interference_sensitivity, mw_to_db

TX = [(0.0, 0.0), (40.0, 10.0), (80.0, 0.0), (20.0, 60.0)]
RX = [(25.0, 5.0), (60.0, 30.0), (100.0, 20.0), (45.0, 70.0)]
BANDS = [0, 0, 0, 1]
POWERS = np.array([10.0, 20.0, 15.0, 5.0])


@pytest.fixture
def channel():
    return LinkChannel(ChannelModel(), TX, RX, BANDS)


class TestModel:
    def test_units(self):
        assert db_to_mw(20.0) == pytest.approx(100.0)
        assert mw_to_db(1.0) == pytest.approx(0.0)
        assert ChannelModel().scale == pytest.approx(0.390625)

    def test_path_loss(self):
        model = ChannelModel()
        assert model.gain(10.0) == pytest.approx(1e-6)
        # receivers closer than a meter see the reference gain
        assert model.gain(0.2) == pytest.approx(1e-3)

    def test_invalid_models(self):
        with pytest.raises(ValueError):
            ChannelModel(path_loss_exponent=1.5)
        with pytest.raises(ValueError):
            ChannelModel(fec_rate=0.25)
        with pytest.raises(ValueError):
            ChannelModel(noise_floor=0.0)


class TestLinkChannel:
    def test_bands_do_not_interfere(self, channel):
        assert not channel.coupled[3].any()
        assert not channel.coupled[:, 3].any()
        assert not np.diag(channel.coupled).any()
        alone = LinkChannel(ChannelModel(), TX[3:], RX[3:], BANDS[3:])
        assert channel.capacities(POWERS)[3] == pytest.approx(alone.capacities(POWERS[3:])[0])

    def test_more_interference_less_capacity(self, channel):
        louder = POWERS.copy()
        louder[1] *= 4.0
        before, after = channel.capacities(POWERS), channel.capacities(louder)
        assert after[0] < before[0] and after[2] < before[2]
        assert after[1] > before[1]
        assert after[3] == pytest.approx(before[3])

    def test_interference_sensitivity(self, channel):
        scale = channel.model.scale
        signal, interference = channel.signal(POWERS), channel.interference(POWERS)

        def capacity(extra):
            return scale * np.log2(1.0 + signal / (interference + extra))

        h = 1e-6 * interference
        numeric = (capacity(-h) - capacity(h)) / (2 * h)
        np.testing.assert_allclose(interference_sensitivity(scale, signal, interference), numeric, rtol=1e-5)
        assert interference_sensitivity(scale, 1e-6, 1e-7) == pytest.approx(scale / math.log(2.0) * 1e-6 / 1.1e-13)

    def test_high_sinr_form(self, channel):
        sinr = channel.sinr(POWERS)
        expected = ChannelModel().scale * np.log2(sinr)
        np.testing.assert_allclose(channel.capacities(POWERS, approx=True), expected)
