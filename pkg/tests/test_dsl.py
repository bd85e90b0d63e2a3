"""Expression language: parsing, printing, jets against finite differences."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shadowgeom import shapes
from shadowgeom.expr import (
    ChartExpr,
    EvalDomainError,
    ParseError,
    parse_chart,
    product_chart,
)

from oracles import richardson_hessian, richardson_jacobian

TORUS_SRC = "((R + r*cos(t))*cos(p), (R + r*cos(t))*sin(p), r*sin(t))"


def torus_chart():
    return parse_chart(TORUS_SRC, ("t", "p"), {"R": 2.0, "r": 1.0})


def test_torus_value_at_origin():
    chart = torus_chart()
    val = chart.eval_values(np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(val[0], [3.0, 0.0, 0.0], atol=1e-15)


def test_batched_value_shapes():
    chart = torus_chart()
    pts = np.random.default_rng(0).uniform(0, 2 * math.pi, size=(17, 2))
    vals = chart.eval_values(pts)
    assert vals.shape == (17, 3)
    jets = chart.eval_jets(pts)
    assert jets.value.shape == (17, 3)
    assert jets.jac.shape == (17, 3, 2)
    assert jets.hess.shape == (17, 3, 2, 2)
    np.testing.assert_array_equal(jets.value, vals)


def test_constant_output_broadcasts():
    chart = parse_chart("(u, 1.5, 0)", ("u",))
    jets = chart.eval_jets(np.array([[0.3], [0.7]]))
    np.testing.assert_array_equal(jets.value[:, 1], [1.5, 1.5])
    np.testing.assert_array_equal(jets.jac[:, 1, :], 0.0)
    np.testing.assert_array_equal(jets.jac[:, 0, 0], [1.0, 1.0])


@pytest.mark.parametrize("name", sorted(shapes.BUILTIN_PATCHES))
def test_jets_match_finite_differences(name):
    patch = shapes.build_patch(name)
    rng = np.random.default_rng(hash(name) % 2**32)
    lo = np.array(patch.domain.lo) + 0.05 * np.array(patch.domain.spans)
    hi = np.array(patch.domain.hi) - 0.05 * np.array(patch.domain.spans)
    pts = rng.uniform(lo, hi, size=(12, patch.n))
    jets = patch.chart.eval_jets(pts)
    for b, u in enumerate(pts):
        jac_fd = richardson_jacobian(patch.chart, u)
        hess_fd = richardson_hessian(patch.chart, u)
        assert np.abs(jets.jac[b] - jac_fd).max() < 1e-6
        assert np.abs(jets.hess[b] - hess_fd).max() < 1e-4


def test_hessian_bitwise_symmetric():
    chart = parse_chart(
        "(sin(u)*cos(v)*exp(0.1*u) + u^3*v, atan2(u, 1 + v^2), sqrt(4 + u*v))",
        ("u", "v"),
    )
    pts = np.random.default_rng(3).uniform(0.1, 1.5, size=(40, 2))
    hess = chart.eval_jets(pts).hess
    np.testing.assert_array_equal(hess, np.swapaxes(hess, 2, 3))


ROUNDTRIP_SOURCES = [
    "((R + r*cos(u))*cos(v), (R + r*cos(u))*sin(v), r*sin(u))",
    "(u - v - 1, -u^2, 2^u)",
    "(-u*v, u/(v + 3)/2, (u + v)^2)",
    "(atan2(u, v), sqrt(u*u + v*v + 1), tan(u/4))",
    "(exp(-u) - log(v + 2), u**2**2, 0.5)",
]


@pytest.mark.parametrize("src", ROUNDTRIP_SOURCES)
def test_print_parse_roundtrip(src):
    chart = parse_chart(src, ("u", "v"), {"R": 2.0, "r": 1.0})
    again = parse_chart(chart.to_source(), ("u", "v"), {"R": 2.0, "r": 1.0})
    pts = np.random.default_rng(7).uniform(0.2, 1.1, size=(25, 2))
    np.testing.assert_array_equal(chart.eval_values(pts), again.eval_values(pts))


@settings(max_examples=40, deadline=None)
@given(
    t=st.floats(min_value=0.0, max_value=2 * math.pi),
    p=st.floats(min_value=0.0, max_value=2 * math.pi),
)
def test_torus_jet_first_order_property(t, p):
    chart = torus_chart()
    jet = chart.eval_jet(np.array([t, p]))
    jac_fd = richardson_jacobian(chart, np.array([t, p]))
    assert np.abs(jet.jac - jac_fd).max() < 1e-6


def test_parse_error_unknown_identifier():
    with pytest.raises(ParseError) as err:
        parse_chart("(cos(t), w)", ("t",))
    assert "unknown identifier 'w'" in str(err.value)
    assert "column 10" in str(err.value)


def test_parse_error_arity():
    with pytest.raises(ParseError, match="atan2 takes 2 arguments, got 1"):
        parse_chart("(atan2(t))", ("t",))


def test_parse_error_syntax():
    with pytest.raises(ParseError):
        parse_chart("(cos(t), )", ("t",))
    with pytest.raises(ParseError):
        parse_chart("(t +* 2)", ("t",))
    with pytest.raises(ParseError):
        parse_chart("", ("t",))


def test_domain_error_division_by_zero():
    chart = parse_chart("(1/u)", ("u",))
    with pytest.raises(EvalDomainError) as err:
        chart.eval_values(np.array([[0.5], [0.0]]))
    assert "division by zero" in str(err.value)
    assert err.value.point == (0.0,)


def test_domain_error_log_and_sqrt():
    chart = parse_chart("(log(u))", ("u",))
    with pytest.raises(EvalDomainError, match="log"):
        chart.eval_values(np.array([[-1.0]]))
    chart = parse_chart("(sqrt(u))", ("u",))
    with pytest.raises(EvalDomainError, match="sqrt"):
        chart.eval_values(np.array([[-0.1]]))
    # value at zero is fine, first derivative is not
    assert chart.eval_values(np.array([[0.0]]))[0, 0] == 0.0
    with pytest.raises(EvalDomainError):
        chart.eval_jets(np.array([[0.0]]))


def test_domain_error_fractional_power():
    chart = parse_chart("(u^0.5)", ("u",))
    with pytest.raises(EvalDomainError, match="fractional power"):
        chart.eval_values(np.array([[-2.0]]))
    # integer powers of negative bases are fine
    chart = parse_chart("(u^3)", ("u",))
    assert chart.eval_values(np.array([[-2.0]]))[0, 0] == -8.0


def test_power_precedence_and_unary_minus():
    chart = parse_chart("(-u^2, 2^u^2)", ("u",))
    vals = chart.eval_values(np.array([[3.0]]))
    assert vals[0, 0] == -9.0  # -(u^2)
    assert vals[0, 1] == 2.0**9.0  # right-associative


def test_pi_constant_and_scene_constants():
    chart = parse_chart("(pi*u, c*u)", ("u",), {"c": -2.5})
    vals = chart.eval_values(np.array([[1.0]]))
    assert vals[0, 0] == math.pi
    assert vals[0, 1] == -2.5


def test_general_power_jets():
    chart = parse_chart("(u^v)", ("u", "v"))
    pts = np.array([[1.7, 2.3]])
    jet = chart.eval_jets(pts).at(0)
    jac_fd = richardson_jacobian(chart, pts[0])
    hess_fd = richardson_hessian(chart, pts[0])
    assert np.abs(jet.jac - jac_fd).max() < 1e-8
    assert np.abs(jet.hess - hess_fd).max() < 1e-5
    with pytest.raises(EvalDomainError, match="non-positive base"):
        chart.eval_values(np.array([[-1.0, 2.3]]))


def test_atan2_jets():
    chart = parse_chart("(atan2(u, v))", ("u", "v"))
    pts = np.array([[0.4, -0.8]])
    jet = chart.eval_jets(pts).at(0)
    assert np.abs(jet.jac - richardson_jacobian(chart, pts[0])).max() < 1e-8
    assert np.abs(jet.hess - richardson_hessian(chart, pts[0])).max() < 1e-5
    with pytest.raises(EvalDomainError, match="atan2"):
        chart.eval_values(np.array([[0.0, 0.0]]))


def test_product_chart_blocks():
    a = parse_chart("(cos(u), sin(u))", ("u",))
    b = parse_chart("(v, 2*v)", ("v",))
    prod = product_chart(a, b)
    assert prod.params == ("u1", "v2")
    vals = prod.eval_values(np.array([[0.0, 3.0]]))
    np.testing.assert_allclose(vals[0], [1.0, 0.0, 3.0, 6.0])
    jets = prod.eval_jets(np.array([[0.5, 1.0]]))
    # block structure: first factor outputs do not depend on second params
    np.testing.assert_array_equal(jets.jac[0, :2, 1], 0.0)
    np.testing.assert_array_equal(jets.jac[0, 2:, 0], 0.0)


def test_compose_substitution():
    outer = parse_chart("(a + b, a*b)", ("a", "b"))
    inner = parse_chart("(t^2, t + 1)", ("t",))
    from shadowgeom.expr import compose

    comp = compose(outer, inner)
    assert comp.n_params == 1
    val = comp.eval_values(np.array([[2.0]]))
    np.testing.assert_allclose(val[0], [7.0, 12.0])
