"""Extrinsic curvature of embedded patches.

The second fundamental form of a patch is read off the chart Hessian:
for coordinate fields, II(d_p, d_q) is the normal-frame component of the
second chart derivative, since the normal frame already lies inside the
ambient tangent space.  Components are kept both in chart coordinates
and in the orthonormal tangent basis.

For a nested patch L inside M, II of L within M is computed
intrinsically from M's induced metric via its Christoffel symbols, which
keeps it independent of the ambient route and lets the two be compared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import ChartExpr
from .geometry import (
    Box,
    FrameBatch,
    FrameData,
    GeometryError,
    SubmanifoldPatch,
    composed_patch,
    frames_at,
)
from .tolerances import DEFAULT_TOLS, Tolerances

__all__ = [
    "SecondForm",
    "second_form_components",
    "second_fundamental_form",
    "shape_operator",
    "principal_curvatures",
    "mean_curvature",
    "mean_curvature_batch",
    "gauss_kronecker",
    "totally_geodesic_residual",
    "tgs_scan",
    "christoffels",
    "NestedCurvature",
    "nested_second_form",
    "normal_connection_derivative",
    "BangReport",
    "bang_decomposition_check",
]


@dataclass(frozen=True)
class SecondForm:
    """Second fundamental form at one point.

    coord[p, q, a] = <II(d_p, d_q), xi_a> over chart coordinate fields;
    orth[i, j, a] the same over the orthonormal tangent basis.
    """

    frame: FrameData
    coord: np.ndarray  # (n, n, k)
    orth: np.ndarray  # (n, n, k)

    def vector(self, w1, w2) -> np.ndarray:
        """Ambient II(W1, W2) for parameter-space directions w1, w2."""
        comps = np.einsum("p,q,pqa->a", w1, w2, self.coord)
        return self.frame.normal @ comps


def second_form_components(frames: FrameBatch):
    """Batched (coord, orth) components, shapes (B, n, n, k)."""
    if frames.hess is None:
        raise GeometryError("second-order frame data required")
    coord = np.einsum("bma,bmpq->bpqa", frames.normal, frames.hess)
    orth = np.einsum("bpi,bqj,bpqa->bija", frames.rinv, frames.rinv, coord)
    return coord, orth


def second_fundamental_form(patch: SubmanifoldPatch, point,
                            tols: Tolerances = DEFAULT_TOLS) -> SecondForm:
    frames = frames_at(patch, np.asarray(point, dtype=float)[None, :], order=2, tols=tols)
    coord, orth = second_form_components(frames)
    return SecondForm(frames.at(0), coord[0], orth[0])


def shape_operator(patch: SubmanifoldPatch, point, index: int = 0,
                   tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Matrix of the shape operator for normal frame vector `index`,
    in the orthonormal tangent basis (symmetric, n x n)."""
    form = second_fundamental_form(patch, point, tols)
    if not 0 <= index < form.orth.shape[2]:
        raise GeometryError(f"normal index {index} out of range", point)
    return form.orth[:, :, index]


def principal_curvatures(patch: SubmanifoldPatch, point, index: int = 0,
                         tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Eigenvalues of the shape operator, ascending."""
    return np.linalg.eigvalsh(shape_operator(patch, point, index, tols))


def mean_curvature_batch(frames: FrameBatch) -> np.ndarray:
    """Mean curvature vectors H = (1/n) trace II, (B, m)."""
    _, orth = second_form_components(frames)
    n = frames.tangent.shape[2]
    traces = np.einsum("biia->ba", orth) / n
    return np.einsum("bma,ba->bm", frames.normal, traces)


def mean_curvature(patch: SubmanifoldPatch, point,
                   tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    frames = frames_at(patch, np.asarray(point, dtype=float)[None, :], order=2, tols=tols)
    return mean_curvature_batch(frames)[0]


def gauss_kronecker(patch: SubmanifoldPatch, point,
                    tols: Tolerances = DEFAULT_TOLS) -> float:
    """Determinant of the shape operator; hypersurfaces only."""
    frames = frames_at(patch, np.asarray(point, dtype=float)[None, :], order=2, tols=tols)
    if frames.k != 1:
        raise GeometryError(
            f"Gauss-Kronecker needs codimension 1, patch has codimension {frames.k}", point
        )
    _, orth = second_form_components(frames)
    return float(np.linalg.det(orth[0, :, :, 0]))


def totally_geodesic_residual(patch: SubmanifoldPatch, point, direction,
                              tols: Tolerances = DEFAULT_TOLS) -> float:
    """|II(W, W)| / |W|^2 for the tangent vector W = Dphi w."""
    form = second_fundamental_form(patch, point, tols)
    w = np.asarray(direction, dtype=float)
    wnorm2 = float(w @ form.frame.metric @ w)
    if wnorm2 <= 0.0:
        raise GeometryError("direction must be nonzero", point)
    return float(np.linalg.norm(form.vector(w, w))) / wnorm2


def _direction_set(n: int):
    dirs = [np.eye(n)[i] for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros(n)
            e[i] = e[j] = 1.0
            dirs.append(e)
            f = np.zeros(n)
            f[i], f[j] = 1.0, -1.0
            dirs.append(f)
    return np.asarray(dirs)


def tgs_scan(patch: SubmanifoldPatch, grid_points, tols: Tolerances = DEFAULT_TOLS):
    """Max totally-geodesic residual over grid points and a spanning
    direction set (coordinate directions and their pairwise sums and
    differences).  Returns (max_residual, argmax_point)."""
    pts = np.atleast_2d(np.asarray(grid_points, dtype=float))
    frames = frames_at(patch, pts, order=2, tols=tols)
    coord, _ = second_form_components(frames)
    dirs = _direction_set(patch.n)
    comps = np.einsum("dp,dq,bpqa->bda", dirs, dirs, coord)
    vecs = np.einsum("bma,bda->bdm", frames.normal, comps)
    norms2 = np.einsum("dp,bpq,dq->bd", dirs, frames.metric, dirs)
    resid = np.linalg.norm(vecs, axis=2) / norms2
    flat_i = int(np.argmax(resid))
    bi = flat_i // resid.shape[1]
    return float(resid.reshape(-1)[flat_i]), tuple(pts[bi])


def christoffels(patch: SubmanifoldPatch, points) -> np.ndarray:
    """Christoffel symbols of the induced metric, (B, n, n, n) as [b, k, i, j].

    Metric derivatives come from the chart jet:
    d_l g_ij = <phi_li, phi_j> + <phi_i, phi_lj>.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    jets = patch.chart.eval_jets(pts, order=2)
    jac, hess = jets.jac, jets.hess
    metric = np.einsum("bmi,bmj->bij", jac, jac)
    ginv = np.linalg.inv(metric)
    dg = np.einsum("bail,baj->blij", hess, jac) + np.einsum("bai,bajl->blij", jac, hess)
    t1 = np.einsum("bkl,bijl->bkij", ginv, dg)  # reads dg[b,i,j,l] = d_i g_jl
    t2 = np.einsum("bkl,bjil->bkij", ginv, dg)  # d_j g_il
    t3 = np.einsum("bkl,blij->bkij", ginv, dg)  # d_l g_ij
    return 0.5 * (t1 + t2 - t3)


# -- nested patches ----------------------------------------------------------


@dataclass(frozen=True)
class NestedCurvature:
    """Curvature data of L inside M along a batch of L-parameters.

    ii_in_parent is the intrinsic second fundamental form of L within M
    (ambient vectors, (B, m, l, l)); mean_in_parent its metric trace."""

    points: np.ndarray  # (B, l) parameters of L
    parent_points: np.ndarray  # (B, n) images in M parameters
    tangent_coords: np.ndarray  # (B, n, l) dpsi
    metric: np.ndarray  # (B, l, l) induced metric of L
    ii_in_parent: np.ndarray  # (B, m, l, l)
    mean_in_parent: np.ndarray  # (B, m)


def nested_second_form(parent: SubmanifoldPatch, sub_chart: ChartExpr,
                       points, tols: Tolerances = DEFAULT_TOLS) -> NestedCurvature:
    """Second fundamental form of the nested patch within its parent,
    computed from the parent metric and Christoffel symbols only."""
    if sub_chart.n_outputs != parent.n:
        raise GeometryError("nested chart must map into the parent parameters")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sub_jets = sub_chart.eval_jets(pts, order=2)
    u = sub_jets.value  # (B, n)
    t = sub_jets.jac  # (B, n, l)
    parent_jets = parent.chart.eval_jets(u, order=2)
    g = np.einsum("bmi,bmj->bij", parent_jets.jac, parent_jets.jac)
    gamma = christoffels(parent, u)
    acc = sub_jets.hess + np.einsum("bkij,bia,bjc->bkac", gamma, t, t)
    # remove the g-orthogonal projection onto span(dpsi)
    g_l = np.einsum("bia,bij,bjc->bac", t, g, t)
    rhs = np.einsum("bia,bij,bjcd->bacd", t, g, acc)
    b, l = rhs.shape[:2]
    coef = np.linalg.solve(g_l, rhs.reshape(b, l, -1)).reshape(rhs.shape)
    perp = acc - np.einsum("bka,bacd->bkcd", t, coef)
    ii_amb = np.einsum("bmk,bkcd->bmcd", parent_jets.jac, perp)
    gl_inv = np.linalg.inv(g_l)
    mean = np.einsum("bmcd,bcd->bm", ii_amb, gl_inv) / l
    return NestedCurvature(pts, u, t, g_l, ii_amb, mean)


def normal_connection_derivative(patch: SubmanifoldPatch, field, point, direction,
                                 tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Normal-bundle derivative of a normal field along a parameter direction."""
    point = np.asarray(point, dtype=float)
    w = np.asarray(direction, dtype=float)
    frame = frames_at(patch, point[None, :], order=1, tols=tols).at(0)
    z = field.value(point, patch=patch, tols=tols)
    tan_part = np.linalg.norm(frame.tangent.T @ z)
    if tan_part > tols.on_ambient_tol * (1.0 + np.linalg.norm(z)):
        raise GeometryError(
            f"field is not normal to the patch (tangential part {tan_part:.3e})", point
        )
    dz = field.param_jacobian(point[None, :], patch=patch, tols=tols)[0] @ w
    amb = frame.ambient @ (frame.ambient.T @ dz)
    return frame.normal @ (frame.normal.T @ amb)


# -- additivity of the second fundamental form --------------------------------


@dataclass(frozen=True)
class BangReport:
    """Residuals of the two-stage curvature decomposition for L in M in N."""

    ii_residual: float
    ii_argmax: tuple
    mean_residual: float
    mean_argmax: tuple
    n_points: int

    def as_dict(self):
        return {
            "ii_residual": self.ii_residual,
            "ii_argmax": list(self.ii_argmax),
            "mean_residual": self.mean_residual,
            "mean_argmax": list(self.mean_argmax),
            "n_points": self.n_points,
        }


def bang_decomposition_check(parent: SubmanifoldPatch, sub_chart: ChartExpr,
                             sub_domain: Box, points=None, resolution: int = 9,
                             tols: Tolerances = DEFAULT_TOLS) -> BangReport:
    """Check II(L in N) = II(L in M) + II(M in N) on L's tangent vectors.

    The three forms are computed by independent routes: the composite
    chart for L in N, the parent chart for M in N, and the intrinsic
    connection of M for L in M.  Mean curvatures are compared the same
    way.  Residuals are absolute, maxed over a parameter grid of L.
    """
    if points is None:
        points = sub_domain.grid(resolution)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    l_dim = pts.shape[1]

    nested = nested_second_form(parent, sub_chart, pts, tols)

    composite = composed_patch(parent, sub_chart, sub_domain)
    frames_l = frames_at(composite, pts, order=2, tols=tols)
    coord_l, _ = second_form_components(frames_l)
    ii_n = np.einsum("bcda,bma->bmcd", coord_l, frames_l.normal)

    frames_m = frames_at(parent, nested.parent_points, order=2, tols=tols)
    coord_m, _ = second_form_components(frames_m)
    t = nested.tangent_coords
    comps = np.einsum("bpc,bqd,bpqa->bacd", t, t, coord_m)
    ii_m = np.einsum("bma,bacd->bmcd", frames_m.normal, comps)

    diff = ii_n - nested.ii_in_parent - ii_m
    flat = np.linalg.norm(diff, axis=1)  # (B, l, l)
    i = int(np.argmax(flat))
    bi = i // (l_dim * l_dim)
    ii_res = float(flat.reshape(-1)[i])

    gl_inv = np.linalg.inv(nested.metric)
    h_n = np.einsum("bmcd,bcd->bm", ii_n, gl_inv) / l_dim
    h_mn = np.einsum("bmcd,bcd->bm", ii_m, gl_inv) / l_dim
    h_diff = np.linalg.norm(h_n - nested.mean_in_parent - h_mn, axis=1)
    j = int(np.argmax(h_diff))
    return BangReport(
        ii_residual=ii_res,
        ii_argmax=tuple(pts[bi]),
        mean_residual=float(h_diff[j]),
        mean_argmax=tuple(pts[j]),
        n_points=len(pts),
    )
