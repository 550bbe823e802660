import pytest

from wnoskit.errors import FormatError, TopologyError
from wnoskit.schema import EntityType
from wnoskit.scenario import bundled_scenarios, load_scenario, parse_scenario

LINE = """
[scenario]
name = line
duration = 50
seed = 4
bands = 2

[nodes]
1 = 0, 0
2 = 10, 0
3 = 20, 0

[links]
1 = 1, 2, 0
2 = 2, 3, 1

[sessions]
1 = 1, 3, 1 2, 40
"""


def edited(old: str, new: str) -> str:
    assert old in LINE
    return LINE.replace(old, new)


class TestLoading:
    @pytest.mark.parametrize("name", bundled_scenarios())
    def test_bundled(self, name):
        scenario = load_scenario(name)
        assert scenario.name == name
        assert scenario.duration > 0
        assert scenario.link_channel().size == len(scenario.links)

    def test_parse(self):
        scenario = parse_scenario(LINE)
        assert scenario.name == "line"
        assert (scenario.duration, scenario.seed, scenario.bands) == (50, 4, 2)
        assert scenario.link_ids == (1, 2)
        assert scenario.session(1).path == (1, 2)
        assert scenario.bandwidth == 200000.0
        assert scenario.with_duration(0).duration == 0
        assert scenario.graph().number_of_edges() == 2

    def test_topology_pool(self):
        pool = parse_scenario(LINE).topology_pool()
        assert pool.members("seslnk", {EntityType.SESSION: 1}) == (EntityType.LINK, (1, 2))
        assert pool.members("lnkses", {EntityType.LINK: 2}) == (EntityType.SESSION, (1,))

    def test_channel_section(self):
        scenario = parse_scenario(LINE + "\n[channel]\npath_loss_exponent = 4.0\nhigh_snr_approx = true\n")
        assert scenario.channel.path_loss_exponent == 4.0
        assert scenario.channel.high_snr_approx


class TestErrors:
    def test_unknown_name(self):
        with pytest.raises(FormatError):
            load_scenario("scenario-42")

    def test_missing_section(self):
        with pytest.raises(FormatError):
            parse_scenario(edited("[sessions]\n1 = 1, 3, 1 2, 40\n", ""))

    def test_duplicate_ids(self):
        with pytest.raises(FormatError):
            parse_scenario(edited("3 = 20, 0\n", "3 = 20, 0\n3 = 30, 0\n"))

    def test_bad_fields(self):
        with pytest.raises(FormatError):
            parse_scenario(edited("1 = 1, 2, 0", "1 = 1, 2"))
        with pytest.raises(FormatError):
            parse_scenario(edited("2 = 10, 0", "2 = ten, 0"))
        with pytest.raises(FormatError):
            parse_scenario(edited("1 = 1, 3, 1 2, 40", "1 = 1, 3, 1 2, -1"))

    def test_band_out_of_range(self):
        with pytest.raises(FormatError):
            parse_scenario(edited("2 = 2, 3, 1", "2 = 2, 3, 2"))

    def test_self_loop(self):
        with pytest.raises(FormatError):
            parse_scenario(edited("2 = 2, 3, 1", "2 = 2, 2, 1"))

    def test_unknown_link_in_path(self):
        with pytest.raises(FormatError):
            parse_scenario(edited("1 = 1, 3, 1 2, 40", "1 = 1, 3, 1 5, 40"))

    def test_disconnected_path(self):
        with pytest.raises(TopologyError):
            parse_scenario(edited("1 = 1, 3, 1 2, 40", "1 = 1, 3, 2 1, 40"))
        with pytest.raises(TopologyError):
            parse_scenario(edited("1 = 1, 3, 1 2, 40", "1 = 1, 3, 1, 40"))

    def test_invalid_channel(self):
        with pytest.raises(FormatError):
            parse_scenario(LINE + "\n[channel]\nfec_rate = 0.7\n")
