import math

import numpy as np
import pytest
from scipy.optimize import minimize

from wnoskit import expressions as ex
from wnoskit.algogen import (
    LINK_PARAMETERS,
    TX_POWER,
    Case,
    Method,
    StepSchedule,
    dual_update,
    link_utility,
    penalize,
    solve_local,
    synthesize,
    synthesize_plan,
)
from wnoskit.config import Settings
from wnoskit.decomposer import RoleTemplate, compile_problem
from wnoskit.dsl import load_program
from wnoskit.errors import MissingParameter, NoApplicableMethod, NotDifferentiable
from wnoskit.expressions import Dual, DualSum, VarRef
from wnoskit.instantiation import DIConfig, InstancePool, build_pool
from wnoskit.schema import EntityType, Layer

TOY_LNKSES = {0: [0, 1], 1: [0, 2], 2: [1, 2]}
PRICE = DualSum(0, "seslnk")


def toy():
    pool = InstancePool.from_instances(DIConfig(3, 2), {"lnkses": TOY_LNKSES})
    return compile_problem(load_program("toy"), pool), pool


def jocp_plans(settings: Settings):
    spec = load_program("jocp")
    program = compile_problem(spec, build_pool(spec, DIConfig(rng_seed=1))).program
    return synthesize(program, settings)


def radio(gain_db: float, price: float = 0.0) -> dict:
    return {"lnkpwr": gain_db, "channel_gain": 1e-3, "interference": 1e-6, "scale": 1.0, "price": price}


class TestDualUpdate:
    def test_constant_step(self):
        schedule = StepSchedule("constant", 0.05)
        assert dual_update(0.2, 1.0, schedule, 1) == pytest.approx(0.25)
        assert dual_update(0.02, -1.0, schedule, 7) == 0.0

    def test_diminishing_step(self):
        schedule = StepSchedule("diminishing", 0.1, 1)
        assert schedule.alpha(10) == pytest.approx(0.01)
        assert dual_update(0.3, 0.5, schedule, 10) == pytest.approx(0.305)
        assert StepSchedule("diminishing", 0.1, 10).alpha(11) == pytest.approx(0.05)

    def test_schedule_checks(self):
        with pytest.raises(ValueError):
            StepSchedule("quadratic")
        with pytest.raises(ValueError):
            StepSchedule().alpha(0)
        assert StepSchedule("constant", 0.05).render() == "constant(0.05)"
        assert StepSchedule("diminishing", 0.1, 10).render() == "diminishing(0.1/ceil(k/10))"


class TestSynthesis:
    def test_rate_control_is_closed_form(self):
        compilation, _ = toy()
        plans = synthesize(compilation.program)
        plan = plans.plan("transport/session")
        assert plan.method is Method.CLOSED_FORM_RECIPROCAL
        assert plan.coefficient == pytest.approx(1.0)
        assert plan.price == PRICE
        assert plan.bounds == (0.1, 20.0)
        assert plans.dump()[0] == "entity=transport/session method=closed_form_reciprocal step=none bounds=0.1,20"
        assert plans.rule(0).line().startswith("family=lbd scope=netlnk step=diminishing(0.05/ceil(k/10))")

    def test_physical_method_follows_distribution(self):
        expected = {
            "best_response": (Method.BEST_RESPONSE, Case.CASE1_BEST_RESPONSE),
            "gradient": (Method.PROJECTED_GRADIENT, Case.CASE2_GRADIENT),
            "dpl": (Method.DPL, Case.CASE3_DPL),
        }
        for distribution, (method, case) in expected.items():
            plan = jocp_plans(Settings(distribution=distribution)).plan("physical/link")
            assert (plan.method, plan.case, plan.variable) == (method, case, "lnkpwr")
            assert plan.bounds == (0.0, 30.0)

    def test_linear_rate_utility(self):
        spec = load_program("powermin")
        program = compile_problem(spec, build_pool(spec, DIConfig(rng_seed=0))).program
        plan = synthesize(program).plan("transport/session")
        assert plan.method is Method.BOUND_PROJECTION
        assert plan.coefficient == 0.0
        assert solve_local(plan, {PRICE: 0.3}, {}, bounds=(2.0, 20.0)) == {"sesrate": 2.0}

    def test_smooth_utility_uses_gradient(self):
        x = VarRef("sesrate")
        template = RoleTemplate(
            Layer.TRANSPORT, EntityType.SESSION, ex.canonical(ex.sqrt(x) - x * PRICE)
        )
        plan = synthesize_plan(template)
        assert plan.method is Method.PROJECTED_GRADIENT
        assert solve_local(plan, {PRICE: 0.5}, {"sesrate": 1.0})["sesrate"] == pytest.approx(1.0)
        assert solve_local(plan, {PRICE: 0.5}, {"sesrate": 4.0})["sesrate"] == pytest.approx(3.875)

    def test_unsupported_templates(self):
        x = VarRef("sesrate")
        two_variables = RoleTemplate(Layer.TRANSPORT, EntityType.SESSION, ex.log(x) + VarRef("lnkpwr"))
        with pytest.raises(NoApplicableMethod):
            synthesize_plan(two_variables)
        nonlinear_price = RoleTemplate(Layer.TRANSPORT, EntityType.SESSION, ex.log(x) - x * x * PRICE)
        with pytest.raises(NoApplicableMethod):
            synthesize_plan(nonlinear_price)
        with pytest.raises(NoApplicableMethod):
            synthesize_plan(RoleTemplate(Layer.TRANSPORT, EntityType.SESSION, ex.log(x)), bounds=(0.0, math.inf))


class TestSolveLocal:
    def setup_method(self):
        compilation, _ = toy()
        self.plan = synthesize(compilation.program).plan("transport/session")

    def test_reciprocal(self):
        assert solve_local(self.plan, {PRICE: 0.5}, {}) == {"sesrate": pytest.approx(2.0)}
        assert solve_local(self.plan, {PRICE: 0.0}, {}) == {"sesrate": 20.0}
        assert solve_local(self.plan, {PRICE: 0.01}, {}) == {"sesrate": 20.0}
        assert solve_local(self.plan, {PRICE: 100.0}, {}) == {"sesrate": 0.1}

    def test_bad_duals(self):
        with pytest.raises(ValueError):
            solve_local(self.plan, {PRICE: -0.1}, {})
        with pytest.raises(MissingParameter):
            solve_local(self.plan, {}, {})

    def test_physical_cases(self):
        dual = {Dual(0, None): 0.5}
        best = jocp_plans(Settings(distribution="best_response")).plan("physical/link")
        assert solve_local(best, dual, {k: v for k, v in radio(10.0).items() if k != "price"}) == {
            "lnkpwr": pytest.approx(30.0)
        }
        dpl = jocp_plans(Settings(distribution="dpl")).plan("physical/link")
        assert solve_local(dpl, dual, radio(10.0)) == {"lnkpwr": pytest.approx(13.0)}
        gradient = jocp_plans(Settings(distribution="gradient")).plan("physical/link")
        lowered = solve_local(gradient, {Dual(0, None): 0.0}, radio(10.0, price=1e-3))["lnkpwr"]
        assert 7.0 < lowered < 10.0

    def test_missing_register(self):
        plan = jocp_plans(Settings(distribution="dpl")).plan("physical/link")
        with pytest.raises(MissingParameter):
            solve_local(plan, {Dual(0, None): 0.5}, {"lnkpwr": 10.0})


class TestConvergence:
    def test_toy_matches_centralized_optimum(self):
        compilation, pool = toy()
        plans = synthesize(compilation.program, Settings(step="constant", alpha0=0.05))
        plan, rule = plans.plan("transport/session"), plans.rule(0)
        seslnk = pool.instances_of("seslnk")
        lnkses = pool.instances_of("lnkses")
        lam = [0.5, 0.5, 0.5]
        rates = [0.0, 0.0, 0.0]
        for k in range(1, 2001):
            for s in range(3):
                price = sum(lam[link] for link in seslnk[s].members)
                rates[s] = solve_local(plan, {PRICE: price}, {})["sesrate"]
            for link in range(3):
                slack = sum(rates[s] for s in lnkses[link].members) - 1.0
                lam[link] = dual_update(lam[link], slack, rule, k)

        constraints = [
            {"type": "ineq", "fun": lambda x, members=tuple(lnkses[link].members): 1.0 - sum(x[s] for s in members)}
            for link in range(3)
        ]
        oracle = minimize(
            lambda x: -np.sum(np.log(x)), x0=np.full(3, 0.3), bounds=[(0.1, 20.0)] * 3,
            constraints=constraints, method="SLSQP",
        )
        distributed = float(np.sum(np.log(rates)))
        assert distributed == pytest.approx(-oracle.fun, rel=0.02)
        assert rates == pytest.approx([0.5, 0.5, 0.5], rel=0.02)


class TestPenalize:
    def setup_method(self):
        self.p0, self.p1 = VarRef("lnkpwr", 0), VarRef("lnkpwr", 1)
        self.utilities = {0: ex.log(self.p0), 1: ex.neg(ex.mul(self.p0, self.p1))}
        self.reference = {self.p0: 2.0, self.p1: 3.0}

    def test_best_response_has_no_penalty(self):
        penalized = penalize(Case.CASE1_BEST_RESPONSE, 0, self.utilities, self.reference)
        assert penalized.theta == self.utilities[0]
        assert penalized.gamma == ex.ZERO

    def test_gradient_linearizes_everything(self):
        penalized = penalize(Case.CASE2_GRADIENT, 0, self.utilities, self.reference)
        env = {self.p0: 4.0}
        assert ex.evaluate(penalized.theta, env) == pytest.approx(1.0)
        assert ex.evaluate(penalized.gamma, env) == pytest.approx(-6.0)

    def test_dpl_keeps_own_nonlinearity(self):
        penalized = penalize(Case.CASE3_DPL, 0, self.utilities, self.reference)
        env = {self.p0: 4.0}
        assert ex.evaluate(penalized.theta, env) == pytest.approx(math.log(4.0))
        assert ex.evaluate(penalized.gamma, env) == pytest.approx(-12.0)
        assert ex.evaluate(penalized.total, env) == pytest.approx(math.log(4.0) - 12.0)

    def test_not_differentiable(self):
        with pytest.raises(NotDifferentiable):
            penalize(Case.CASE2_GRADIENT, 0, self.utilities, {self.p0: 0.0, self.p1: 3.0})


class TestPhysicalUtility:
    def setup_method(self):
        self.template = ex.add(ex.mul(Dual(0, None), VarRef("lnkcap")), ex.mul(ex.Constant(-0.1), VarRef("lnkpwr")))

    def env(self, lam, gain, interference, scale=0.390625):
        return {
            Dual(0, None): lam,
            LINK_PARAMETERS["channel_gain"]: gain,
            LINK_PARAMETERS["interference"]: interference,
            LINK_PARAMETERS["scale"]: scale,
        }

    def test_matches_the_capacity_formula(self):
        env = {**self.env(2.0, 1e-6, 1e-7), TX_POWER: 100.0}
        expected = 2.0 * 0.390625 * math.log2(1.0 + 1e-4 / 1e-7) - 0.1 * 20.0
        assert ex.evaluate(link_utility(self.template), env) == pytest.approx(expected)
        high = 2.0 * 0.390625 * math.log2(1e-4 / 1e-7) - 0.1 * 20.0
        assert ex.evaluate(link_utility(self.template, True), env) == pytest.approx(high)

    @pytest.mark.parametrize("high_sinr", [False, True])
    def test_symbolic_gradient_matches_central_differences(self, high_sinr):
        rng = np.random.default_rng(11)
        utility = link_utility(self.template, high_sinr)
        slope = ex.differentiate(utility, TX_POWER)
        for _ in range(100):
            env = self.env(rng.uniform(0.0, 2.0), 10 ** rng.uniform(-7, -4), 10 ** rng.uniform(-7, -5))
            power = 10 ** rng.uniform(0.0, 3.0)
            h = 1e-5 * power
            up = ex.evaluate(utility, {**env, TX_POWER: power + h})
            down = ex.evaluate(utility, {**env, TX_POWER: power - h})
            numeric = (up - down) / (2 * h)
            assert ex.evaluate(slope, {**env, TX_POWER: power}) == pytest.approx(numeric, rel=1e-4, abs=1e-9)

    def test_dpl_maximizes_the_penalized_utility(self):
        dpl = jocp_plans(Settings(distribution="dpl")).plan("physical/link")
        value = solve_local(dpl, {Dual(0, None): 0.5}, radio(24.0, price=2e-3))["lnkpwr"]
        # 0.5 * log2(1 + 1000 p) - 2e-3 p peaks where 1 + 1000 p = 0.5 * 1000 / (ln 2 * 2e-3)
        expected = 10.0 * math.log10((0.5 * 1000.0 / (math.log(2.0) * 2e-3) - 1.0) / 1000.0)
        assert value == pytest.approx(expected, abs=1e-3)

    def test_flat_objective_keeps_the_gain(self):
        idle = {Dual(0, None): 0.0}
        best = jocp_plans(Settings(distribution="best_response")).plan("physical/link")
        state = {k: v for k, v in radio(12.0).items() if k != "price"}
        assert solve_local(best, idle, state) == {"lnkpwr": pytest.approx(12.0)}
        dpl = jocp_plans(Settings(distribution="dpl")).plan("physical/link")
        assert solve_local(dpl, idle, radio(12.0)) == {"lnkpwr": pytest.approx(12.0)}
