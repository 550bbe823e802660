import pytest

from wnoskit import expressions as ex
from wnoskit.decomposer import (
    BoundRule,
    ConstraintFamily,
    Subproblem,
    build_dual,
    build_tree,
    compile_problem,
    decompose_cross_layer,
    decompose_per_entity,
    instantiate_problem,
    lift,
    reassemble,
)
from wnoskit.dsl import Sense, load_program, parse_program
from wnoskit.errors import MissingInstance, NoMatchingInstance, NonSeparable, NotNormalized, UnattributableTerm
from wnoskit.expressions import Dual, DualSum, VarRef
from wnoskit.instantiation import DIConfig, InstancePool, build_pool
from wnoskit.schema import EntityType, Layer

# Link l carries the sessions of TOY_LNKSES[l]
TOY_LNKSES = {0: [0, 1], 1: [0, 2], 2: [1, 2]}


def toy_pool() -> InstancePool:
    return InstancePool.from_instances(DIConfig(3, 2), {"lnkses": TOY_LNKSES})


def rate(session: int) -> VarRef:
    return VarRef("sesrate", session)


def session_subproblem(session: int) -> ex.Expression:
    """log(x_s) minus x_s times the coefficient of every link s crosses"""

    links = [link for link, sessions in TOY_LNKSES.items() if session in sessions]
    terms = [ex.log(rate(session))] + [ex.neg(ex.mul(Dual(0, link), rate(session))) for link in links]
    return ex.add(*terms)


class TestToyDecomposition:
    def setup_method(self):
        self.compilation = compile_problem(load_program("toy"), toy_pool())

    def test_dual(self):
        expected = ex.add(
            *(ex.log(rate(s)) for s in range(3)),
            *(
                ex.mul(Dual(0, link), ex.add(VarRef("lnkcap", link), ex.neg(ex.add(*(rate(s) for s in sessions)))))
                for link, sessions in TOY_LNKSES.items()
            ),
        )
        assert ex.equivalent(self.compilation.dual, expected)

    def test_tree(self):
        tree = self.compilation.tree
        assert len(tree.level1) == 3 + 3 + 6
        assert ex.equivalent(tree.reassemble(), self.compilation.dual)
        assert (Dual(0, 1), VarRef("lnkcap", 1)) in tree.level2
        assert (ex.ONE, ex.log(rate(2))) in tree.level2

    def test_layer_groups(self):
        transport, physical, update = self.compilation.groups
        assert (transport.layer, physical.layer, update.layer) == (Layer.TRANSPORT, Layer.PHYSICAL, None)
        assert physical.expression == ex.ZERO
        assert ex.equivalent(
            update.expression, ex.add(*(ex.mul(Dual(0, l), VarRef("lnkcap", l)) for l in range(3)))
        )
        assert transport.variables == frozenset(rate(s) for s in range(3))

    def test_session_subproblems(self):
        sessions = [sub for sub in self.compilation.subproblems if sub.layer is Layer.TRANSPORT]
        assert [sub.entity for sub in sessions] == [(EntityType.SESSION, s) for s in range(3)]
        for sub in sessions:
            assert ex.equivalent(sub.expression, session_subproblem(sub.entity[1]))
        assert ex.equivalent(reassemble(self.compilation.subproblems), self.compilation.dual)

    def test_lifted_template(self):
        program = self.compilation.program
        (role,) = program.roles
        expected = ex.add(ex.log(VarRef("sesrate")), ex.neg(ex.mul(VarRef("sesrate"), DualSum(0, "seslnk"))))
        assert role.name == "transport/session"
        assert role.expression == ex.canonical(expected)
        assert role.dual_refs == (DualSum(0, "seslnk"),)
        assert program.role(Layer.TRANSPORT, EntityType.SESSION, 2) is role
        assert program.role(Layer.PHYSICAL, EntityType.LINK, 0) is None

    def test_dump(self):
        text = self.compilation.dump()
        for header in ("# dual", "# tree", "# groups", "# subproblems", "# templates"):
            assert header in text
        assert "role=transport/session" in text
        assert text == compile_problem(load_program("toy"), toy_pool()).dump()


class TestLifting:
    @pytest.mark.parametrize("seed", range(100))
    def test_session_sets_match_links_of_session(self, seed):
        spec = load_program("jocp")
        pool = build_pool(spec, DIConfig(20, 10, rng_seed=seed))
        program = compile_problem(spec, pool).program
        seslnk = pool.instances_of("seslnk")
        session_matches = [m for m in program.matches if m[0][0] is EntityType.SESSION]
        assert len(session_matches) == 20
        for (_, session), family, members, element in session_matches:
            assert family == 0
            assert element == "seslnk"
            assert members == seslnk[session].members

    def test_joint_program_roles(self):
        spec = load_program("jocp")
        compilation = compile_problem(spec, build_pool(spec, DIConfig(rng_seed=3)))
        program = compilation.program
        assert [role.name for role in program.roles] == ["physical/link", "transport/session"]
        physical = program.role(Layer.PHYSICAL, EntityType.LINK, 4)
        assert physical.expression == ex.canonical(ex.mul(Dual(0, None), VarRef("lnkcap")))
        assert "lnkcap" in program.decision and "lnkpwr" in program.controlled
        # lnkcap is a decision quantity, so no term is left to the dual update
        assert compilation.groups[2].expression == ex.ZERO

    def test_templates_do_not_depend_on_the_seed(self):
        spec = load_program("jocp")
        first = compile_problem(spec, build_pool(spec, DIConfig(rng_seed=1))).program
        second = compile_problem(spec, build_pool(spec, DIConfig(rng_seed=2))).program
        assert first == second

    def test_unmatched_coefficients(self):
        family = ConstraintFamily(0, "netlnk", EntityType.LINK, ex.ZERO)
        sub = Subproblem(
            Layer.TRANSPORT,
            (EntityType.SESSION, 0),
            ex.add(ex.log(rate(0)), ex.neg(ex.mul(Dual(0, 0), rate(0))), ex.neg(ex.mul(Dual(0, 2), rate(0)))),
        )
        with pytest.raises(NoMatchingInstance):
            lift([sub], toy_pool(), families=[family])


class TestConstraints:
    def test_capped_power_becomes_bound(self, caplog):
        spec = load_program("cp3")
        compilation = compile_problem(spec, build_pool(spec, DIConfig(rng_seed=0)))
        assert compilation.program.bound_rules == (BoundRule("netses[1].seslnk", "lnkpwr", "le", 5.0),)
        assert len(compilation.program.families) == 1
        assert "non-strict" in caplog.text
        capped = compilation.instance.pool.instances_of("seslnk")[1].members
        bounds = compilation.instance.bounds_map
        for link in range(20):
            assert bounds[VarRef("lnkpwr", link)] == ((0.0, 5.0) if link in capped else (0.0, 30.0))

    def test_minimization_is_negated(self):
        spec = load_program("powermin")
        compilation = compile_problem(spec, build_pool(spec, DIConfig(rng_seed=0)))
        instance = compilation.instance
        assert instance.report(-3.0) == 3.0
        assert compilation.program.sense is Sense.MINIMIZE
        assert BoundRule("netses", "sesrate", "ge", 2.0) in compilation.program.bound_rules
        assert instance.bounds_map[VarRef("sesrate", 0)] == (2.0, 20.0)

    def test_equality_splits_in_two_families(self):
        text = (
            "nt.set('n_global', 3)\nnt.set('n_local', 2)\n"
            "nt.make_var('wos_x', [ntses, sesrate], [all, None])\n"
            "expr = mkexpr('sum(log(wos_x))', 'wos_x')\n"
            "nt.add_cstr('sum(lnkses, sesrate) == lnkcap', 'wos_x', netlnk)\n"
        )
        instance = instantiate_problem(parse_program(text), toy_pool())
        assert [family.family for family in instance.families] == [0, 1]
        assert len(instance.constraints) == 6
        assert {dual.family for dual in instance.duals} == {0, 1}

    def test_missing_instance(self):
        bare = InstancePool.from_instances(DIConfig(3, 2), {})
        with pytest.raises(MissingInstance):
            instantiate_problem(load_program("toy"), bare)


class TestErrors:
    def test_mixed_layers(self):
        tree = build_tree(ex.canonical(ex.mul(rate(0), VarRef("lnkpwr", 0))))
        with pytest.raises(UnattributableTerm):
            decompose_cross_layer(tree)

    def test_two_dual_factors(self):
        with pytest.raises(NotNormalized):
            build_tree(ex.canonical(ex.mul(Dual(0, 0), Dual(0, 1), rate(0))))

    def test_coupled_entities(self):
        expression = ex.mul(rate(0), rate(1))
        group = Subproblem(Layer.TRANSPORT, None, expression, frozenset({rate(0), rate(1)}))
        with pytest.raises(NonSeparable):
            decompose_per_entity(group)

    def test_dual_of_instance(self):
        instance = instantiate_problem(load_program("toy"), toy_pool())
        assert len(instance.duals) == 3
        assert ex.equivalent(build_dual(instance), compile_problem(load_program("toy"), toy_pool()).dual)
