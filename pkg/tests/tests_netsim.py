import math
import os

import numpy as np
import pytest
import simpy

from wnoskit.algogen import synthesize
from wnoskit.channel import db_to_mw
from wnoskit.config import Settings
from wnoskit.decomposer import compile_problem
from wnoskit.dsl import Sense, load_program
from wnoskit.dump import StateCodec, write_states
from wnoskit.errors import IncompatibleProgram
from wnoskit.instantiation import DIConfig, build_pool
from wnoskit.netsim import (
    BEST_RESPONSE,
    COLUMNS,
    NO_CONTROL,
    WNOS_P,
    WNOS_T,
    WNOS_T_P,
    MetricsLog,
    SimWorld,
    compare,
    default_settings,
    gain_over,
    link_capacity,
    replicate,
    run,
    simulate,
)
from wnoskit.plotting import plot_run, plot_states
from wnoskit.scenario import load_scenario
from wnoskit.schema import Layer


def program_of(name: str):
    spec = load_program(name)
    return compile_problem(spec, build_pool(spec, DIConfig(rng_seed=0))).program


@pytest.fixture(scope="module")
def jocp():
    return program_of("jocp")


@pytest.fixture(scope="module")
def scenario():
    return load_scenario("scenario-1").with_duration(90)


class TestMetrics:
    def rows(self, slots: int):
        return [{"slot": slot, "session_id": 1, "throughput_pps": 1.0, "utility": float(slot)} for slot in range(slots)]

    def test_steady_window(self):
        log = MetricsLog.from_rows(self.rows(10))
        assert log.steady_window() == (8, 10)
        assert log.mean_utility() == pytest.approx(8.5)
        ended = MetricsLog.from_rows(self.rows(10), contention_end=5)
        assert ended.steady_window() == (4, 5)
        assert ended.mean_utility() == pytest.approx(4.0)

    def test_empty_log(self):
        log = MetricsLog.from_rows([])
        assert log.slots == 0
        assert log.to_csv() == ",".join(COLUMNS) + "\n"
        assert math.isnan(log.mean_utility())

    def test_gain(self):
        assert gain_over(2 * math.log(2.0), 0.0, Sense.MAXIMIZE, 2, True) == pytest.approx(100.0)
        assert gain_over(90.0, 100.0, Sense.MINIMIZE, 1, False) == pytest.approx(10.0)
        assert math.isnan(gain_over(1.0, 0.0, Sense.MAXIMIZE, 1, False))


class TestSimulation:
    def test_zero_duration(self, jocp, scenario):
        world = simulate(scenario.with_duration(0), jocp, WNOS_T_P, seed=1)
        assert world.metrics().to_csv() == ",".join(COLUMNS) + "\n"

    def test_runs_are_deterministic(self, jocp, scenario):
        first = simulate(scenario, jocp, WNOS_T_P, seed=3).metrics().to_csv()
        second = simulate(scenario, jocp, WNOS_T_P, seed=3).metrics().to_csv()
        assert first == second

    def test_log_layout(self, jocp, scenario):
        world = simulate(scenario, jocp, WNOS_T_P, seed=1)
        frame = world.metrics().frame
        assert list(frame.columns) == list(COLUMNS)
        # two sessions, four transmitting nodes and four links per slot
        assert len(frame) == 90 * (2 + 4 + 4)
        assert (frame["lambda"].dropna() >= 0).all()
        assert len(world.snapshots) == 3 * 6

    def test_best_response_transmits_at_full_power(self, jocp, scenario):
        frame = simulate(scenario, jocp, BEST_RESPONSE, seed=1).metrics().frame
        powers = frame["tx_power_mw"].dropna()
        assert powers.to_numpy() == pytest.approx(1000.0)

    def test_packets_are_conserved(self, jocp, scenario):
        world = simulate(scenario, jocp, NO_CONTROL, seed=2)
        for session, path in world.paths.items():
            queued = sum(world.queues[(link, session)] for link in path)
            assert world.injected[session] == pytest.approx(world.delivered[session] + queued)
            assert world.delivered[session] <= world.budget[session] + 1e-9

    def test_power_cap_is_enforced(self, scenario):
        program = program_of("cp3")
        world = SimWorld(scenario, program, synthesize(program), WNOS_T_P, Settings(), seed=1)
        capped = scenario.session(1).path
        for _ in range(60):
            world.step()
            gains = dict(zip(world.link_ids, world.gains_db()))
            assert all(gains[link] <= 5.0 + 1e-9 for link in capped)

    def test_layer_schemes_need_their_roles(self, scenario):
        toy = program_of("toy")
        with pytest.raises(IncompatibleProgram):
            simulate(scenario, toy, WNOS_P)
        with pytest.raises(ValueError):
            simulate(scenario, toy, "WNOS-X")
        world = simulate(scenario.with_duration(5), toy, WNOS_T)
        assert world.t == 5

    def test_link_capacity(self, scenario):
        powers = [10.0, 10.0, 10.0, 10.0]
        assert link_capacity(scenario, 2, powers) > 0
        with pytest.raises(ValueError):
            link_capacity(scenario, 2, [10.0, -1.0, 10.0, 10.0])


class TestCompare:
    def test_baseline_has_no_gain(self, jocp, scenario):
        logs = run(scenario.with_duration(60), jocp, [WNOS_T_P, NO_CONTROL], seed=1)
        table = compare(logs, jocp, sessions=2)
        assert list(table["scheme"]) == [WNOS_T_P, NO_CONTROL]
        assert table.loc[table["scheme"] == NO_CONTROL, "gain_pct"].iloc[0] == pytest.approx(0.0)
        assert table["mean_utility"].notna().all()


class TestPlotting:
    def test_plot_run(self, tmp_path):
        rows = [
            {"slot": slot, "session_id": 1, "throughput_pps": 2.0, "utility": 0.5} for slot in range(5)
        ] + [{"slot": slot, "node_id": 1, "tx_power_mw": 31.6, "utility": 0.5} for slot in range(5)]
        log = MetricsLog.from_rows(rows, WNOS_T_P, contention_end=4)
        paths = plot_run(log, str(tmp_path))
        assert [os.path.basename(path) for path in paths] == ["WNOS-T-P.throughput.png", "WNOS-T-P.power.png"]
        assert all(os.path.getsize(path) > 0 for path in paths)

    @pytest.mark.parametrize("encoding", ["json", "ziproto"])
    def test_plot_states(self, tmp_path, encoding):
        records = [
            {"slot": slot, "node": 2, "knobs": {}, "lambda": {"lbd_01": 0.1 * slot}} for slot in range(1, 6)
        ]
        dump = write_states(records, str(tmp_path), WNOS_T_P, StateCodec(encoding))
        path = plot_states(dump, str(tmp_path), WNOS_T_P)
        assert os.path.basename(path) == "WNOS-T-P.lambda.png"
        assert os.path.getsize(path) > 0


def world_of(scenario, program, scheme, seed=1, env=None):
    settings = default_settings(program)
    return SimWorld(scenario, program, synthesize(program, settings), scheme, settings, seed, env)


class TestClock:
    def test_one_slot_moves_the_dual_by_one_step(self, jocp, scenario):
        world = world_of(scenario, jocp, WNOS_T_P).step()
        rule = world.plans.rule(0)
        assert rule.step.alpha0 == pytest.approx(0.003)
        stepped = 0
        for link, state in world.links.items():
            slack = state.aggregate_rate - state.capacity
            assert state.duals[0] == pytest.approx(max(0.0, rule.step.alpha(1) * slack))
            stepped += state.duals[0] > 0
        # the initial rates overload the links
        assert stepped > 0

    def test_given_environment_drives_the_slots(self, jocp, scenario):
        env = simpy.Environment()
        world = world_of(scenario, jocp, WNOS_T_P, env=env)
        world.step().step()
        assert (world.t, env.now) == (2, 2)
        assert world.in_flight > 0

    def test_reports_travel_one_hop_per_slot(self, jocp, scenario):
        world = world_of(scenario, jocp, WNOS_T_P)
        world.step().step()
        first, second = world.links[1].duals[0], world.links[2].duals[0]
        received = world.stacks[1].registers.received_duals
        assert received[(0, 1)][1] == 0 and received[(0, 2)][1] == 0
        # link 1 ends at the next node, link 2 two hops away from the source
        world.step()
        assert received[(0, 1)] == (pytest.approx(first), 1)
        assert received[(0, 2)][1] == 0
        world.step()
        assert received[(0, 2)] == (pytest.approx(second), 1)

    def test_no_control_knobs_are_drawn_once(self, jocp, scenario):
        log = simulate(scenario, jocp, NO_CONTROL, seed=4).metrics()
        assert (log.power().nunique() == 1).all()
        other = simulate(scenario, jocp, NO_CONTROL, seed=5).metrics()
        assert not log.power().iloc[0].equals(other.power().iloc[0])

    def test_logged_utility_matches_the_logged_powers(self):
        program = program_of("powermin")
        log = simulate(load_scenario("scenario-5").with_duration(60), program, WNOS_T_P, seed=1).metrics()
        power = log.power()
        recomputed = (10.0 * np.log10(power.to_numpy(dtype=float))).sum(axis=1)
        np.testing.assert_allclose(log.utility_series().loc[power.index].to_numpy(), recomputed, rtol=1e-9, atol=1e-9)

    def test_timescale_ratio(self, jocp, scenario):
        world = world_of(scenario.with_duration(660), jocp, WNOS_T_P)
        counts = []
        for _ in range(660):
            world.step()
            counts.append(dict(world.stacks[1].executions))
        for start in range(30, 360):
            end = start + 300
            transport = counts[end][Layer.TRANSPORT] - counts[start][Layer.TRANSPORT]
            physical = counts[end][Layer.PHYSICAL] - counts[start][Layer.PHYSICAL]
            assert abs(transport * 30 - physical) <= 1


INTERFERENCE_LEVELS = ("scenario-1", "scenario-2", "scenario-3")
BASELINE_SEEDS = range(16)


def run_with_load(scenario, program, scheme, seed=1):
    """The metrics of a full run and the worst link load ratio of every slot"""

    world = world_of(scenario, program, scheme, seed)
    ratios = []
    for _ in range(scenario.duration):
        world.step()
        ratios.append(max(state.aggregate_rate / state.capacity for state in world.links.values()))
    return world.metrics(), ratios


@pytest.fixture(scope="module")
def interference_runs(jocp):
    runs = {}
    for name in INTERFERENCE_LEVELS:
        scenario = load_scenario(name)
        joint, ratios = run_with_load(scenario, jocp, WNOS_T_P)
        runs[name] = {
            "ratios": ratios,
            "logs": {
                WNOS_T_P: joint,
                WNOS_T: simulate(scenario, jocp, WNOS_T, seed=1).metrics(),
                WNOS_P: simulate(scenario, jocp, WNOS_P, seed=1).metrics(),
                NO_CONTROL: replicate(scenario, jocp, NO_CONTROL, BASELINE_SEEDS),
            },
        }
    return runs


class TestBehaviour:
    def gains(self, runs, program):
        table = compare(runs["logs"], program, sessions=2)
        return dict(zip(table["scheme"], table["gain_pct"]))

    def test_joint_gain_grows_with_interference(self, interference_runs, jocp):
        joint = [self.gains(interference_runs[name], jocp)[WNOS_T_P] for name in INTERFERENCE_LEVELS]
        assert joint[0] > 0
        assert joint[0] < joint[1] < joint[2]

    @pytest.mark.parametrize("name", INTERFERENCE_LEVELS)
    def test_single_layer_schemes_gain(self, interference_runs, jocp, name):
        gains = self.gains(interference_runs[name], jocp)
        assert gains[WNOS_T] > 0
        assert gains[WNOS_P] > 0

    @pytest.mark.parametrize("name", INTERFERENCE_LEVELS)
    def test_steady_state_is_feasible(self, interference_runs, name):
        runs = interference_runs[name]
        start, end = runs["logs"][WNOS_T_P].steady_window()
        assert max(runs["ratios"][start:end]) <= 1.05

    @pytest.mark.parametrize("seed", range(10))
    def test_capped_session_stays_capped(self, seed):
        program = program_of("cp3")
        log = simulate(load_scenario("scenario-1").with_duration(300), program, WNOS_T_P, seed=seed).metrics()
        power = log.power()
        # nodes 1 and 2 transmit the links of session 1 only
        late = power[power.index >= 150]
        assert (late[[1, 2]].to_numpy() <= db_to_mw(5.0) + 1e-9).all()

    def test_power_minimization_meets_the_rates_with_less_power(self):
        scenario = load_scenario("scenario-5")
        frugal = simulate(scenario, program_of("powermin"), WNOS_T_P, seed=1).metrics()
        greedy = simulate(scenario, program_of("cp1"), WNOS_T_P, seed=1).metrics()
        start, end = frugal.steady_window()
        throughput = frugal.throughput()
        window = throughput[(throughput.index >= start) & (throughput.index < end)]
        assert window.mean().to_numpy() == pytest.approx(2.0, rel=0.1)
        assert frugal.mean_power() < greedy.mean_power()
