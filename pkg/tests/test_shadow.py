import numpy as np
import pytest

from shadowgeom import shapes
from shadowgeom.fields import ConstantField
from shadowgeom.geometry import GeometryError, validate_patch
from shadowgeom.shadow import (
    extract_shadow_set,
    product_field,
    product_patch,
    product_shadow_check,
    shadow_jacobian_consistency,
    shadow_residual,
    shadow_system,
    shadow_values,
    smoothness_certificate,
)

E1 = ConstantField([1.0, 0.0, 0.0])
E2 = ConstantField([0.0, 1.0, 0.0])
E3 = ConstantField([0.0, 0.0, 1.0])


# -- residual values -----------------------------------------------------------


def test_sphere_residual_is_cos_theta():
    sp = shapes.sphere()
    pts = sp.domain.grid(9)
    f = shadow_values(sp, E3, pts)
    assert f.shape == (81, 1)
    # single normal is +-(position vector), so |F| = |cos theta|
    np.testing.assert_allclose(np.abs(f[:, 0]), np.abs(np.cos(pts[:, 0])), atol=1e-12)


def test_cylinder_axis_field_residual_vanishes():
    cy = shapes.cylinder()
    f = shadow_values(cy, E3, cy.domain.grid(8))
    np.testing.assert_allclose(f, 0.0, atol=1e-14)


def test_shadow_residual_bundle():
    pl = shapes.plane()
    r = shadow_residual(pl, E3, [0.3, -0.4])
    assert abs(abs(r.values[0]) - 1.0) < 1e-12
    assert not r.on_set
    np.testing.assert_allclose(r.jacobian, 0.0, atol=1e-14)

    cy = shapes.cylinder()
    assert shadow_residual(cy, E3, [1.0, 0.3]).on_set


def test_sphere_jacobian_closed_form_at_equator():
    sp = shapes.sphere()
    _, jac, _ = shadow_system(sp, E3, np.array([[np.pi / 2, 1.1]]))
    # F = +-cos theta, so |dF/dtheta| = 1 and dF/dphi = 0 on the equator
    np.testing.assert_allclose(np.abs(jac[0]), [[1.0, 0.0]], atol=1e-12)


# -- Jacobian consistency ------------------------------------------------------


def test_jacobian_consistency_sphere_equator():
    sp = shapes.sphere()
    pts = np.stack([np.full(16, np.pi / 2), np.linspace(0, 2 * np.pi, 16, endpoint=False)], axis=1)
    diff, _ = shadow_jacobian_consistency(sp, E3, pts)
    assert diff < 1e-5


def test_jacobian_consistency_plane_tilted_field():
    pl = shapes.plane()
    tilted = ConstantField(np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0))
    diff, _ = shadow_jacobian_consistency(pl, tilted, pl.domain.grid(5))
    assert diff < 1e-11


def test_jacobian_consistency_torus_full_grid():
    # exact for a single unit normal even off the zero set
    to = shapes.torus()
    diff, _ = shadow_jacobian_consistency(to, E3, to.domain.grid(32))
    assert diff < 1e-5


# -- extraction: curves on surfaces --------------------------------------------


def test_extract_sphere_equator():
    sp = shapes.sphere()
    s = extract_shadow_set(sp, E3, 64)
    assert not s.degenerate
    assert s.n_points == 64
    assert len(s.polylines) == 1
    line = s.polylines[0]
    assert line[0] == line[-1] and len(line) == 65
    np.testing.assert_allclose(s.params[:, 0], np.pi / 2, atol=1e-9)
    assert np.max(np.abs(s.ambient[:, 2])) < 1e-9
    assert np.all(s.residuals < 1e-8)
    assert s.rank_ok


def test_extract_torus_two_circles():
    to = shapes.torus()
    s = extract_shadow_set(to, E3, 64)
    assert s.n_components == 2
    for line in s.polylines:
        assert line[0] == line[-1]
    tvals = s.params[:, 0]
    dist = np.minimum(np.abs(tvals), np.abs(tvals - np.pi))
    dist = np.minimum(dist, np.abs(tvals - 2 * np.pi))
    assert np.max(dist) < 1e-8
    assert s.n_points == 128
    cert = smoothness_certificate(to, E3, s.params)
    assert cert.ok and bool(cert.flags.all())


def test_extract_circle_two_points():
    c = shapes.circle2()
    s = extract_shadow_set(c, ConstantField([0.0, 1.0]), 64)
    assert s.n_points == 2
    xs = np.sort(s.ambient[:, 0])
    np.testing.assert_allclose(xs, [-1.0, 1.0], atol=1e-9)
    np.testing.assert_allclose(s.ambient[:, 1], 0.0, atol=1e-9)


def test_extract_cylinder_degenerate():
    cy = shapes.cylinder()
    s = extract_shadow_set(cy, E3, 32)
    assert s.degenerate
    assert s.degenerate_fraction == 1.0
    assert s.n_points == 32 * 32
    assert s.rank_ratio is None
    d = s.as_dict()
    assert d["degenerate"] and d["n_components"] == 1


def test_extract_plane_empty():
    s = extract_shadow_set(shapes.plane(), E3, 32)
    assert s.n_points == 0
    assert not s.degenerate
    assert s.polylines == ()


def test_extract_saddle_line():
    sa = shapes.saddle()
    s = extract_shadow_set(sa, E1, 48)
    # normal ~ (-a v, -a u, 1): e1-component zero exactly on v = 0
    assert s.n_points == 48
    np.testing.assert_allclose(s.params[:, 1], 0.0, atol=1e-9)
    assert len(s.polylines) == 1
    line = s.polylines[0]
    assert line[0] != line[-1]  # open chain, domain is not periodic


def test_extract_cylinder_sideways_two_rulings():
    cy = shapes.cylinder()
    s = extract_shadow_set(cy, E1, 64)
    assert s.n_components == 2
    uvals = np.unique(np.round(s.params[:, 0], 8))
    np.testing.assert_allclose(uvals, [np.pi / 2, 3 * np.pi / 2], atol=1e-8)


def test_polyline_neighbors_within_cell():
    to = shapes.torus()
    res = 64
    s = extract_shadow_set(to, E3, res)
    diag = np.linalg.norm(to.domain.cell_sizes(res))
    for line in s.polylines:
        pts = s.params[list(line)]
        gaps = to.domain.param_distance(pts[1:], pts[:-1])
        assert np.max(gaps) <= diag + 1e-12


def test_polyline_orthogonal_to_gradient():
    # level-curve tangent vs residual gradient: within 2 degrees of square
    for patch, field in ((shapes.sphere(), E3), (shapes.torus(), E3)):
        s = extract_shadow_set(patch, field, 48)
        _, jac, _ = shadow_system(patch, field, s.params)
        grad = jac[:, 0, :]
        box = patch.domain
        span = np.array(box.hi) - np.array(box.lo)
        for line in s.polylines:
            idx = np.array(line)
            d = s.params[idx[1:]] - s.params[idx[:-1]]
            for i, per in enumerate(box.periodic):
                if per:
                    d[:, i] = (d[:, i] + 0.5 * span[i]) % span[i] - 0.5 * span[i]
            g = grad[idx[:-1]]
            cosang = np.abs(np.einsum("bn,bn->b", d, g))
            cosang /= np.linalg.norm(d, axis=1) * np.linalg.norm(g, axis=1)
            assert np.max(cosang) < np.sin(np.radians(2.0))


def test_extract_deterministic():
    to = shapes.torus()
    a = extract_shadow_set(to, E3, 48)
    b = extract_shadow_set(to, E3, 48)
    assert np.array_equal(a.params, b.params)
    assert a.polylines == b.polylines


# -- extraction: Newton route --------------------------------------------------


def test_newton_circle_in_r3():
    c3 = shapes.circle3()
    s = extract_shadow_set(c3, E2, 64)
    assert s.n_points == 2
    us = np.sort(s.params[:, 0])
    np.testing.assert_allclose(us, [0.0, np.pi], atol=1e-9)
    assert np.all(s.residuals <= 1e-8)
    cert = smoothness_certificate(c3, E2, s.params)
    assert cert.ok
    assert cert.expected_dim == 0


def test_newton_empty_when_never_tangent():
    c3 = shapes.circle3()
    s = extract_shadow_set(c3, E3, 48)
    assert s.n_points == 0
    assert s.dropped_seeds == 48


def test_equator_in_sphere_ambient_empty():
    eq = shapes.circle3(ambient=shapes.sphere_ambient())
    s = extract_shadow_set(eq, E3, 48)
    assert s.n_points == 0 and not s.degenerate


def test_meridian_in_sphere_ambient_degenerate():
    me = shapes.meridian_circle()
    s = extract_shadow_set(me, E3, 48)
    assert s.degenerate


# -- certificates ---------------------------------------------------------------


def test_certificate_rank_deficient_case():
    pl = shapes.plane()
    cert = smoothness_certificate(pl, E1, np.array([[0.1, 0.2], [0.0, 0.0]]))
    assert not cert.ok
    assert cert.min_ratio == 0.0


def test_certificate_empty_raises():
    with pytest.raises(GeometryError):
        smoothness_certificate(shapes.plane(), E1, np.zeros((0, 2)))


# -- products -------------------------------------------------------------------


def test_product_circles_in_r4():
    c = shapes.circle2()
    y = ConstantField([0.0, 1.0])
    rep = product_shadow_check(c, y, shapes.circle2(), y, resolution=24)
    assert rep.report.verdict == "confirmed"
    assert rep.n_direct == 4
    assert rep.n_reference == 4
    assert rep.hausdorff < rep.cell_diagonal


def test_product_tori_in_spheres_full():
    me = shapes.meridian_circle()
    zero = ConstantField([0.0, 0.0, 0.0])
    rep = product_shadow_check(me, E3, shapes.meridian_circle(), zero, resolution=16)
    assert rep.report.verdict == "confirmed"
    assert rep.direct_degenerate
    assert rep.factor_degenerate == (True, True)
    assert rep.hausdorff == 0.0


def test_product_tori_in_spheres_empty():
    eq = shapes.circle3(ambient=shapes.sphere_ambient())
    zero = ConstantField([0.0, 0.0, 0.0])
    rep = product_shadow_check(eq, E3, shapes.meridian_circle(), zero, resolution=16)
    assert rep.report.verdict == "confirmed"
    assert rep.n_direct == 0 and rep.n_reference == 0
    assert rep.hausdorff == 0.0


def test_product_zero_field_factor_contributes_everything():
    c = shapes.circle2()
    rep = product_shadow_check(c, ConstantField([0.0, 1.0]),
                               shapes.circle2(), ConstantField([0.0, 0.0]),
                               resolution=24)
    assert rep.report.verdict == "confirmed"
    assert rep.factor_degenerate == (False, True)
    assert rep.n_reference == 2 * 24
    assert rep.hausdorff < rep.cell_diagonal


def test_product_patch_constraints_stack():
    eq = shapes.circle3(ambient=shapes.sphere_ambient())
    me = shapes.meridian_circle()
    pp = product_patch(eq, me)
    assert pp.m == 6
    assert pp.ambient.n_constraints == 2
    report = validate_patch(pp, resolution=7)
    assert report.ok


def test_product_mixed_flat_and_curved():
    c2 = shapes.circle2()
    me = shapes.meridian_circle()
    pp = product_patch(c2, me)
    assert pp.m == 5
    assert pp.ambient.n_constraints == 1
    assert validate_patch(pp, resolution=7).ok


def test_block_field_jacobian_consistency():
    c = shapes.circle2()
    y = ConstantField([0.0, 1.0])
    pp = product_patch(c, shapes.circle2())
    pf = product_field(y, y, c)
    pts = np.array([[0.0, np.pi], [np.pi, 0.0], [np.pi, np.pi]])
    diff, _ = shadow_jacobian_consistency(pp, pf, pts)
    assert diff < 1e-6
