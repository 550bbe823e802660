import math

import pytest

from wnoskit import expressions as ex
from wnoskit.dsl import Sense, bundled_programs, compare, format_program, load_program, parse_program
from wnoskit.errors import AbstractionError, ParseError, SchemaMismatch, UnknownElement, ValidationError
from wnoskit.expressions import Constant, SumOver, VarRef
from wnoskit.schema import (
    DependencyEdge,
    ElementRef,
    EntityType,
    Kind,
    Layer,
    Relation,
    Scope,
    VirtualElement,
    build_default_schema,
    read,
)

TOY = """
nt.set('n_global', 3)
nt.set('n_local', 2)
nt.make_var('wos_x', [ntses, sesrate], [all, None])
expr = mkexpr('sum(log(wos_x))', 'wos_x')
nt.add_cstr('sum(lnkses, sesrate) <= lnkcap', 'wos_x', netlnk)
"""


class TestSchema:
    def test_read_follows_members(self):
        schema = build_default_schema()
        assert read(schema, "netses.seslnk").name == "seslnk"
        assert read(schema, "netses.sesrate").name == "sesrate"
        assert read(schema, "lnk.lnkses").scope is Scope.LOCAL

    def test_aliases(self):
        schema = build_default_schema()
        assert read(schema, "ntlk.lkpwr").name == "lnkpwr"
        assert "ntses" in schema

    def test_unknown_element(self):
        with pytest.raises(UnknownElement):
            read(build_default_schema(), "netses.lnkcap")
        with pytest.raises(UnknownElement):
            build_default_schema().element("nope")

    def test_layers_and_owners(self):
        schema = build_default_schema()
        assert schema.element("sesrate").layer is Layer.TRANSPORT
        assert schema.element("lnkcap").layer is Layer.PHYSICAL
        assert schema.attribute_owner("lnkpwr") is EntityType.LINK
        assert schema.inverse_of("lnkses").name == "seslnk"
        assert schema.depends_on("lnkcap", "lnkpwr")
        assert not schema.depends_on("sesrate", "lnkpwr")

    def test_register_element(self):
        schema = build_default_schema()
        delay = ElementRef("lnkdelay", Kind.PRIMITIVE, EntityType.PARAMETER, Layer.DATALINK)
        extended = schema.register_element(delay, [DependencyEdge(schema.element("lnk"), delay, Relation.HAS_ATTRIBUTE)])
        assert read(extended, "netlnk.lnkdelay").name == "lnkdelay"
        assert "lnkdelay" not in schema
        with pytest.raises(AbstractionError):
            extended.register_element(delay)

    def test_local_element_needs_owner(self):
        with pytest.raises(AbstractionError):
            VirtualElement(ElementRef("x", Kind.VIRTUAL, EntityType.LINK), Scope.LOCAL, EntityType.LINK)


class TestExpressions:
    def test_canonical_ignores_order(self):
        x, y = VarRef("sesrate", 1), VarRef("sesrate", 2)
        assert ex.equivalent(x * (y + 2), 2 * x + y * x)
        assert ex.canonical(x - x) == ex.ZERO

    def test_evaluate_and_differentiate(self):
        x = VarRef("sesrate", 1)
        expr = ex.log(x) - 0.5 * x
        assert ex.evaluate(expr, {x: 2.0}) == pytest.approx(math.log(2.0) - 1.0)
        derivative = ex.differentiate(expr, x)
        assert ex.evaluate(derivative, {x: 2.0}) == pytest.approx(0.0)

    def test_canonical_merges_radicals_and_quotients(self):
        x, y = VarRef("sesrate", 1), VarRef("lnkpwr", 2)
        assert ex.equivalent(ex.sqrt(x) * ex.sqrt(x), x)
        assert ex.equivalent(ex.quotient(x * y, y), x)
        assert ex.equivalent(ex.log(2 * x) + ex.log(2 * x), 2 * ex.log(x * 2))
        assert not ex.equivalent(ex.log(x * y), ex.log(x) + ex.log(y))
        assert ex.canonical(x * (y + 2)) is ex.canonical(x * (y + 2))

    def test_derivatives_of_nonlinear_terms(self):
        x = VarRef("sesrate", 1)
        ratio = ex.differentiate(ex.log(2 * x + 1), x)
        assert ex.evaluate(ratio, {x: 1.5}) == pytest.approx(0.5)
        root = ex.differentiate(ex.sqrt(x), x)
        assert ex.evaluate(root, {x: 4.0}) == pytest.approx(0.25)
        with pytest.raises(AbstractionError):
            ex.differentiate(x, ex.log(x))

    def test_abstract_sums_are_opaque(self):
        x = VarRef("sesrate")
        total = ex.sum_over("lnkses", x)
        assert ex.differentiate(total, x) == ex.ZERO
        assert ex.evaluate(ex.differentiate(ex.strip_sums(total), x), {}) == pytest.approx(1.0)
        assert ex.equivalent(total + total, 2 * total)

    def test_linearity(self):
        x = VarRef("sesrate")
        assert ex.is_linear_in(3 * x + 1, x)
        assert not ex.is_linear_in(ex.log(x), x)
        assert not ex.is_linear_in(Constant(4.0), x)

    def test_render(self):
        x = VarRef("sesrate", 3)
        assert x.render() == "sesrate_03"
        assert (x - 1).render() == "sesrate_03 - 1"
        assert ex.Dual(0, 2).render() == "lbd_02"
        assert ex.DualSum(1, "seslnk").render() == "sum(seslnk, lbd1)"


class TestParser:
    def test_toy(self):
        spec = parse_program(TOY)
        assert spec.sense is Sense.MAXIMIZE
        assert spec.utility == SumOver("netses", ex.log(VarRef("sesrate")))
        assert spec.settings_map == {"n_global": 3, "n_local": 2}
        (constraint,) = spec.constraints
        assert constraint.lhs == SumOver("lnkses", VarRef("sesrate"))
        assert constraint.rhs == VarRef("lnkcap")
        assert constraint.rel == "le"
        assert constraint.scope == "netlnk"
        assert spec.variable("wos_x").bounds == (0.1, 20.0)
        assert spec.decision_attributes == {"sesrate"}

    def test_indexed_family(self):
        spec = load_program("cp3")
        decl = spec.variable("wos_z")
        assert decl.scope == "netses[1].seslnk"
        assert decl.attribute == "lnkpwr"
        capped = spec.constraints[-1]
        assert capped.strict and capped.rel == "le"
        assert capped.scope == "netses[1].seslnk"
        assert capped.rhs == Constant(5.0)

    def test_objective_and_settings(self):
        spec = load_program("powermin")
        assert spec.sense is Sense.MINIMIZE
        assert spec.settings_map["step"] == "constant"
        assert spec.variable("wos_r").bounds == (0.5, 20.0)

    def test_syntax_error_position(self):
        text = "nt.make_var('wos_x', [ntses, sesrate], [all, None])\nexpr = mkexpr('sum(log(wos_x))' 'wos_x')\n"
        with pytest.raises(ParseError) as error:
            parse_program(text)
        assert error.value.line == 2
        assert error.value.column > 1

    def test_unknown_statement(self):
        with pytest.raises(ParseError):
            parse_program("nt.frobnicate('x')\n")

    def test_unbound_variable(self):
        text = "nt.make_var('wos_x', [ntses, sesrate], [all, None])\nexpr = mkexpr('sum(log(wos_y))', 'wos_x')\n"
        with pytest.raises(ValidationError):
            parse_program(text)

    def test_unused_variable(self):
        text = TOY + "nt.make_var('wos_p', [ntlk, lkpwr], [all, None])\n"
        with pytest.raises(ValidationError):
            parse_program(text)

    def test_unbounded_linear_utility(self):
        text = "nt.make_var('wos_x', [ntses, sesrate], [all, None], [0, inf])\nexpr = mkexpr('sum(wos_x)', 'wos_x')\n"
        with pytest.raises(ValidationError):
            parse_program(text)

    def test_missing_utility(self):
        with pytest.raises(ValidationError):
            parse_program("nt.set('n_global', 3)\n")

    def test_compare_rejects_foreign_elements(self):
        with pytest.raises(SchemaMismatch):
            compare(VarRef("lnkdelay"), "<=", Constant(1.0))

    def test_reflexive_constraint_warns(self, caplog):
        constraint = compare(VarRef("sesrate"), "<=", VarRef("sesrate"))
        assert constraint.rel == "le"
        assert "reflexive" in caplog.text

    @pytest.mark.parametrize("name", bundled_programs())
    def test_format_parses_back(self, name):
        spec = load_program(name)
        assert parse_program(format_program(spec)) == spec
