"""Transport, holonomy probing, transported fields, geodesic traces."""

import math

import numpy as np
import pytest

from shadowgeom import shapes
from shadowgeom.expr import parse_chart
from shadowgeom.fields import ExprField
from shadowgeom.geometry import (
    Box,
    GeometryError,
    SubmanifoldPatch,
    TangencyError,
)
from shadowgeom.transport import (
    OBSTRUCTION_CLEAR_NOTE,
    ParamCurve,
    TransportField,
    construct_parallel_field,
    geodesic_trace,
    holonomy_loop,
    parallel_normal_frame_tgs_check,
    parallel_transport,
    parallelity_residual,
    probe_loops,
)

from oracles import cone_development_angle

TWO_PI = 2.0 * math.pi
THETA0 = math.pi / 3.0


def latitude(theta0=THETA0):
    return shapes.sphere_cap(theta0)


def wrap_loop():
    return ParamCurve.polyline([[0.0], [TWO_PI]], label="wrap")


# -- curves ---------------------------------------------------------------------


def test_polyline_steps_split_by_length():
    curve = ParamCurve.polyline([[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]])
    u, du, h = curve.stage_points(9)
    assert u.shape == (9, 3, 2)
    # lengths 1 and 2 get 3 and 6 steps; the corner is an exact boundary
    np.testing.assert_array_equal(u[2, 2], [1.0, 0.0])
    np.testing.assert_array_equal(u[3, 0], [1.0, 0.0])
    np.testing.assert_allclose(h[:3], 1.0 / 3.0)
    np.testing.assert_allclose(h[3:], 1.0 / 6.0)
    np.testing.assert_array_equal(du[0, 0], [1.0, 0.0])
    np.testing.assert_array_equal(du[-1, 2], [0.0, 2.0])


def test_polyline_drops_duplicate_vertices():
    curve = ParamCurve.polyline([[0.0], [0.0], [1.0]])
    assert curve.vertices.shape == (2, 1)
    with pytest.raises(ValueError):
        ParamCurve.polyline([[0.5], [0.5]])


def test_expr_curve_stages():
    chart = parse_chart("(t, 2*t)", ("t",))
    curve = ParamCurve.from_expr(chart, 0.0, 1.0)
    u, du, h = curve.stage_points(4)
    assert u.shape == (4, 3, 2)
    np.testing.assert_allclose(u[0, 0], [0.0, 0.0])
    np.testing.assert_allclose(u[-1, 2], [1.0, 2.0])
    np.testing.assert_allclose(du[2, 1], [1.0, 2.0])
    np.testing.assert_allclose(h, 0.25)


# -- transport -------------------------------------------------------------------


def test_flat_ambient_transport_is_exact_identity():
    patch = shapes.torus()
    curve = ParamCurve.polyline([[0.0, 0.0], [2.0, 1.0], [4.0, 5.0]])
    res = parallel_transport(patch, curve, [0.3, -0.2, 0.9], steps=64)
    assert np.array_equal(res.vectors, np.tile([0.3, -0.2, 0.9], (65, 1)))
    assert res.norm_drift == 0.0
    assert res.tangency_drift == 0.0
    assert res.step_error == 0.0


def test_latitude_transport_drifts_stay_tiny():
    res = parallel_transport(latitude(), wrap_loop(), [0.0, 1.0, 0.0], steps=2048)
    assert res.norm_drift < 1e-12
    assert res.tangency_drift < 1e-12
    assert res.step_error < 1e-12


def test_transport_round_trip_restores_seed():
    patch = latitude()
    seed = np.array([-math.sin(0.2), math.cos(0.2), 0.0])
    fwd = parallel_transport(patch, ParamCurve.polyline([[0.2], [2.5]]), seed, steps=1024)
    back = parallel_transport(patch, ParamCurve.polyline([[2.5], [0.2]]), fwd.vectors[-1], steps=1024)
    np.testing.assert_allclose(back.vectors[-1], seed, atol=1e-10)


def test_seed_vector_must_be_ambient_tangent():
    x0 = latitude().chart.eval_values(np.zeros((1, 1)))[0]
    with pytest.raises(TangencyError):
        parallel_transport(latitude(), wrap_loop(), x0, steps=64)  # radial seed


# -- holonomy ---------------------------------------------------------------------


def test_latitude_holonomy_rotation():
    hol = holonomy_loop(latitude(), wrap_loop(), steps=2048)
    assert hol.rotation == pytest.approx(TWO_PI * (1.0 - math.cos(THETA0)), abs=1e-9)
    assert hol.deviation == pytest.approx(
        2.0 * abs(math.sin(math.pi * (1.0 - math.cos(THETA0)))), abs=1e-9
    )
    other = holonomy_loop(latitude(1.0), wrap_loop(), steps=2048)
    assert other.rotation == pytest.approx(TWO_PI * (1.0 - math.cos(1.0)), abs=1e-9)


def test_equator_holonomy_trivial():
    hol = holonomy_loop(latitude(math.pi / 2), wrap_loop(), steps=2048)
    assert hol.deviation < 1e-10


def test_sphere_cell_holonomy_equals_enclosed_area():
    # Gauss-Bonnet on the unit sphere: the rotation equals the cell area
    chart = parse_chart("(sin(th)*cos(ph), sin(th)*sin(ph), cos(th))", ("th", "ph"))
    region = SubmanifoldPatch(
        chart, Box((0.5, 0.0), (1.8, 1.5), (False, False)), shapes.sphere_ambient()
    )
    loop = ParamCurve.polyline(
        [[1.0, 0.2], [1.6, 0.2], [1.6, 1.0], [1.0, 1.0]], closed=True
    )
    hol = holonomy_loop(region, loop, steps=4096)
    area = (math.cos(1.0) - math.cos(1.6)) * 0.8
    assert hol.rotation == pytest.approx(area, abs=1e-8)


def test_cone_holonomy_matches_development():
    alpha = 0.6
    slant = 1.5
    chart = parse_chart(
        "(s*sin(alpha)*cos(u), s*sin(alpha)*sin(u), s*cos(alpha))",
        ("u",),
        {"alpha": alpha, "s": slant},
    )
    patch = SubmanifoldPatch(
        chart, Box((0.0,), (TWO_PI,), (True,)), shapes.cone_ambient(alpha)
    )
    hol = holonomy_loop(patch, wrap_loop(), steps=2048)
    assert hol.rotation == pytest.approx(TWO_PI * (1.0 - math.sin(alpha)), abs=1e-9)

    # independent check: develop the circle onto the plane around the fit apex
    pts = patch.chart.eval_values(patch.domain.grid(4096))
    rulings = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    deficit = cone_development_angle(pts, rulings)
    assert hol.rotation == pytest.approx(deficit, abs=1e-6)


def test_loop_must_close_in_ambient_space():
    with pytest.raises(GeometryError):
        holonomy_loop(latitude(), ParamCurve.polyline([[0.0], [math.pi]]), steps=64)


# -- probe loops and obstruction ----------------------------------------------------


def test_probe_loops_deterministic_and_counted():
    a = probe_loops(shapes.torus(), seed=7)
    b = probe_loops(shapes.torus(), seed=7)
    assert len(a) == (4 + 16 + 64) + 20 + 2
    assert [l.label for l in a] == [l.label for l in b]
    for la, lb in zip(a, b):
        np.testing.assert_array_equal(la.vertices, lb.vertices)


def test_flat_ambient_has_exactly_zero_obstruction():
    fld, rep = construct_parallel_field(shapes.torus(), seed=3)
    assert rep.ok
    assert rep.max_deviation == 0.0
    assert rep.note == OBSTRUCTION_CLEAR_NOTE
    pts = shapes.torus().domain.grid(5)
    np.testing.assert_array_equal(fld.values(pts), np.tile(fld.vector, (25, 1)))


def test_equator_field_certificate_wording():
    _, rep = construct_parallel_field(latitude(math.pi / 2), seed=3)
    assert rep.ok
    assert rep.note == "no obstruction found at probe resolution"
    assert rep.max_deviation < 1e-9


def test_latitude_obstruction_found_on_wrap():
    _, rep = construct_parallel_field(latitude(), seed=3)
    assert not rep.ok
    assert rep.worst_loop == "wrap-ax0"
    assert rep.n_loops == 21
    assert rep.max_deviation == pytest.approx(
        2.0 * abs(math.sin(math.pi * (1.0 - math.cos(THETA0)))), abs=1e-8
    )
    assert rep.note != OBSTRUCTION_CLEAR_NOTE


def test_curved_region_obstruction_found():
    chart = parse_chart("(sin(th)*cos(ph), sin(th)*sin(ph), cos(th))", ("th", "ph"))
    region = SubmanifoldPatch(
        chart, Box((0.6, 0.5), (1.4, 1.5), (False, False)), shapes.sphere_ambient()
    )
    _, rep = construct_parallel_field(region, seed=3)
    assert not rep.ok
    assert rep.max_deviation > 1e-3


# -- transported fields ---------------------------------------------------------------


def test_transport_field_is_parallel_along_latitude():
    fld = TransportField(latitude(), np.array([math.pi]), np.array([0.0, -1.0, 0.0]))
    value, _ = parallelity_residual(latitude(), fld, resolution=17)
    assert value < 1e-8


def test_coordinate_tangent_parallelity_residual():
    tangent = ExprField(
        parse_chart(
            "(-sin(th0)*sin(u), sin(th0)*cos(u), 0)", ("u",), {"th0": THETA0}
        )
    )
    value, _ = parallelity_residual(latitude(), tangent, resolution=17)
    assert value == pytest.approx(math.cos(THETA0), abs=1e-10)


def test_transport_field_batch_independent():
    fld = TransportField(latitude(), np.array([0.0]), np.array([0.0, 1.0, 0.0]))
    batch = fld.values(np.array([[1.0], [2.0], [3.0]]))
    alone = fld.values(np.array([[2.0]]))
    np.testing.assert_array_equal(batch[1], alone[0])


def test_transport_field_value_at_base_is_seed():
    seed = 0.7 * np.array([-math.sin(1.3), math.cos(1.3), 0.0])
    fld = TransportField(latitude(), np.array([1.3]), seed)
    got = fld.value(np.array([1.3]))
    np.testing.assert_allclose(got, seed, atol=1e-15)


# -- frame transport theorem ---------------------------------------------------------


def test_parallel_frame_check_equator_confirmed_small():
    rep = parallel_normal_frame_tgs_check(shapes.circle3(shapes.sphere_ambient()))
    assert rep.verdict == "confirmed"
    assert all(e.status == "small" for e in rep.hypotheses)
    assert all(e.status == "small" for e in rep.conclusions)


def test_parallel_frame_check_latitude_confirmed_large():
    rep = parallel_normal_frame_tgs_check(latitude())
    assert rep.verdict == "confirmed"
    assert rep.hypotheses[0].status == "large"
    assert rep.conclusions[0].value == pytest.approx(1.0 / math.tan(THETA0), abs=1e-9)
    assert rep.conclusions[0].status == "large"


def test_parallel_frame_check_flat_patches():
    assert parallel_normal_frame_tgs_check(shapes.plane()).verdict == "confirmed"
    rep = parallel_normal_frame_tgs_check(shapes.torus())
    assert rep.verdict == "confirmed"
    assert rep.hypotheses[0].status == "large"


def test_parallel_frame_check_needs_normal_directions():
    chart = parse_chart("(sin(th)*cos(ph), sin(th)*sin(ph), cos(th))", ("th", "ph"))
    region = SubmanifoldPatch(
        chart, Box((0.6, 0.5), (1.4, 1.5), (False, False)), shapes.sphere_ambient()
    )
    rep = parallel_normal_frame_tgs_check(region)
    assert rep.verdict == "hypotheses-not-met"
    assert not rep.preconditions[0].ok


# -- geodesics -------------------------------------------------------------------------


def test_great_circle_is_patch_geodesic_not_ambient_geodesic():
    g = geodesic_trace(shapes.sphere(), (math.pi / 2, 0.0), (0.0, 1.0), t1=5.0, steps=2048)
    assert np.abs(g.params[:, 0] - math.pi / 2).max() < 1e-12
    assert g.speed_drift < 1e-12
    assert g.tangential_residual < 1e-9
    assert g.ambient_residual == pytest.approx(1.0, abs=1e-6)


def test_plane_geodesic_is_straight():
    g = geodesic_trace(shapes.plane(), (0.0, 0.0), (0.3, 0.2), t1=2.0, steps=512)
    np.testing.assert_allclose(g.params[-1], [0.6, 0.4], atol=1e-12)
    assert g.tangential_residual < 1e-10
    assert g.ambient_residual < 1e-10


def test_cone_ruling_is_both_patch_and_ambient_geodesic():
    g = geodesic_trace(shapes.cone(), (0.5, 1.0), (1.0, 0.0), t1=1.0, steps=1024)
    assert g.tangential_residual < 1e-8
    assert g.ambient_residual < 1e-8
    np.testing.assert_allclose(g.params[-1], [1.5, 1.0], atol=1e-10)


def test_geodesic_domain_exit_raises():
    with pytest.raises(GeometryError):
        geodesic_trace(shapes.plane(), (0.0, 0.0), (1.0, 0.0), t1=3.0, steps=256)
