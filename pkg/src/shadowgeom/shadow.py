"""Shadow sets of a patch relative to an ambient vector field.

The shadow set of (M, Y) collects the points where Y is tangent to M.
With an orthonormal normal frame xi_1..xi_k it is the zero set of the
residual F_j(u) = <Y(x(u)), xi_j(u)>.  On that zero set the parameter
Jacobian has the closed form

    dF_j/du_l = <dY/du_l, xi_j> - sum_p yc_p <xi_j, d2x/du_p du_l>

where yc are the chart coordinates of the tangential part of Y.  The
frame-rotation term <Y_nor, d xi_j> drops out because Y_nor = 0 there,
so the formula is exact at zeros for any smooth choice of frame.  Full
rank of this Jacobian certifies that the shadow set is locally a
submanifold of dimension n - rank.

Extraction walks a parameter grid.  Codimension-one sets on surfaces
come out as chained polylines (marching squares with bisected edge
crossings); curves yield isolated bisected points; everything else goes
through damped Gauss-Newton from grid seeds.  Normal frames built
pointwise carry an arbitrary sign/rotation, so every comparison of F
across nearby points first aligns the frames (sign for k = 1, polar
factor for k >= 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvature import second_form_components
from .expr import ChartExpr, Param, product_chart, substitute_params
from .fields import BlockField, FieldAlongM
from .geometry import (
    AmbientSpace,
    Box,
    GeometryError,
    SubmanifoldPatch,
    frames_at,
)
from .reporting import ResidualEntry, TheoremReport, build_report
from .tolerances import DEFAULT_TOLS, Tolerances

__all__ = [
    "ShadowResidual",
    "ShadowSet",
    "SmoothnessReport",
    "ProductShadowReport",
    "shadow_residual",
    "shadow_values",
    "shadow_system",
    "shadow_jacobian",
    "shadow_jacobian_consistency",
    "extract_shadow_set",
    "smoothness_certificate",
    "product_patch",
    "product_field",
    "product_shadow_check",
]

DEGENERATE_FRACTION = 0.95
_BISECT_TOL = 1e-10
_NEWTON_ITERS = 30


# -- residual and Jacobian ---------------------------------------------------


def shadow_values(patch: SubmanifoldPatch, field: FieldAlongM, points,
                  tols: Tolerances = DEFAULT_TOLS, frames=None) -> np.ndarray:
    """Normal components F = Xi^T Y at parameter points, (B, k)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if frames is None:
        frames = frames_at(patch, points, order=1, tols=tols)
    y = field.values(points, patch=patch, tols=tols)
    return np.einsum("bmj,bm->bj", frames.normal, y)


def shadow_system(patch: SubmanifoldPatch, field: FieldAlongM, points,
                  tols: Tolerances = DEFAULT_TOLS):
    """Residual, Jacobian and frames in one pass: (F (B,k), J (B,k,n), frames).

    J is exact where F vanishes and first-order accurate elsewhere.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    frames = frames_at(patch, points, order=2, tols=tols)
    y = field.values(points, patch=patch, tols=tols)
    f = np.einsum("bmj,bm->bj", frames.normal, y)
    coord, _ = second_form_components(frames)          # (B, n, n, k)
    rhs = np.einsum("bmp,bm->bp", frames.jac, y)
    yc = np.linalg.solve(frames.metric, rhs[..., None])[..., 0]
    jac = -np.einsum("bp,bpla->bal", yc, coord)
    dy = field.param_jacobian(points, patch=patch, tols=tols)
    jac += np.einsum("bma,bml->bal", frames.normal, dy)
    return f, jac, frames


def shadow_jacobian(patch: SubmanifoldPatch, field: FieldAlongM, points,
                    tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    return shadow_system(patch, field, points, tols)[1]


@dataclass(frozen=True)
class ShadowResidual:
    """Residual and Jacobian of the tangency system at one point."""

    point: np.ndarray
    values: np.ndarray      # (k,)
    jacobian: np.ndarray    # (k, n)
    on_set: bool

    def as_dict(self) -> dict:
        return {
            "point": list(self.point),
            "values": list(self.values),
            "jacobian": [list(r) for r in self.jacobian],
            "on_set": self.on_set,
        }


def shadow_residual(patch: SubmanifoldPatch, field: FieldAlongM, point,
                    tols: Tolerances = DEFAULT_TOLS) -> ShadowResidual:
    point = np.asarray(point, dtype=float)
    f, jac, _ = shadow_system(patch, field, point[None, :], tols)
    return ShadowResidual(
        point=point,
        values=f[0],
        jacobian=jac[0],
        on_set=bool(np.max(np.abs(f[0])) < tols.extract_tol),
    )


def _frame_rotation(normals, anchor):
    """Orthogonal k x k factors R minimizing |N R - N0| per batch row."""
    m = np.einsum("bmi,bmj->bij", normals, anchor)
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def shadow_jacobian_consistency(patch: SubmanifoldPatch, field: FieldAlongM,
                                points, tols: Tolerances = DEFAULT_TOLS):
    """Max |analytic - central-difference| Jacobian entry, with argmax point.

    Differencing F requires the perturbed frames rotated back onto the
    center frame; meaningful where F is (near) zero.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _, jac, frames = shadow_system(patch, field, points, tols)
    h = tols.jacobian_fd_step
    n = points.shape[1]
    fd = np.empty_like(jac)
    for l in range(n):
        step = np.zeros(n)
        step[l] = h
        sided = []
        for sgn in (1.0, -1.0):
            pts = points + sgn * step
            fr = frames_at(patch, pts, order=1, tols=tols)
            rot = _frame_rotation(fr.normal, frames.normal)
            f = shadow_values(patch, field, pts, tols, frames=fr)
            sided.append(np.einsum("bij,bi->bj", rot, f))
        fd[:, :, l] = (sided[0] - sided[1]) / (2.0 * h)
    diff = np.abs(jac - fd)
    flat = int(np.argmax(diff))
    b = flat // (diff.shape[1] * diff.shape[2])
    return float(diff.max()), points[b]


# -- extraction --------------------------------------------------------------


@dataclass(frozen=True)
class ShadowSet:
    """Extracted shadow set in parameter space.

    `polylines` holds index tuples into `params` for chained crossing
    curves (surface patches with one normal direction); other routes
    leave it empty.  A degenerate set (residual below tolerance on
    nearly the whole grid) is materialized as the grid itself.
    """

    params: np.ndarray
    ambient: np.ndarray
    residuals: np.ndarray
    polylines: tuple
    degenerate: bool
    degenerate_fraction: float
    resolution: tuple
    rank_ratio: float | None
    rank_ok: bool | None
    dropped_seeds: int = 0

    @property
    def n_points(self) -> int:
        return int(self.params.shape[0])

    @property
    def n_components(self):
        if self.degenerate:
            return 1
        if self.polylines:
            return len(self.polylines)
        return self.n_points

    def as_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "n_components": self.n_components,
            "degenerate": self.degenerate,
            "degenerate_fraction": self.degenerate_fraction,
            "resolution": list(self.resolution),
            "max_residual": float(self.residuals.max()) if self.n_points else 0.0,
            "rank_ratio": self.rank_ratio,
            "rank_ok": self.rank_ok,
            "dropped_seeds": self.dropped_seeds,
        }


def _sign(values):
    return np.where(values < 0.0, -1.0, 1.0)


def _edge_endpoints(f, normals, axis, periodic):
    """Endpoint residuals and normals for all grid edges along `axis`."""
    if periodic:
        fa, na = f, normals
        fb = np.roll(f, -1, axis=axis)
        nb = np.roll(normals, -1, axis=axis)
    else:
        sl_a = [slice(None)] * f.ndim
        sl_b = [slice(None)] * f.ndim
        sl_a[axis] = slice(None, -1)
        sl_b[axis] = slice(1, None)
        fa, fb = f[tuple(sl_a)], f[tuple(sl_b)]
        na, nb = normals[tuple(sl_a)], normals[tuple(sl_b)]
    return fa, fb, na, nb


def _classify_edges(fa, fb, na, nb, ztol):
    """Split edges into strict sign changes and single-vertex zeros.

    Roots sitting exactly on grid nodes defeat a plain sign test (the
    frame sign at a node is arbitrary, and sign(0) has to pick a side),
    so node zeros are classified separately and taken as roots as-is.
    """
    dots = np.einsum("...m,...m->...", na, nb)
    flip = np.where(dots < 0.0, -1.0, 1.0)
    za = np.abs(fa) <= ztol
    zb = np.abs(fb) <= ztol
    strict = ~za & ~zb & (fa * (flip * fb) < 0.0)
    vertex = za ^ zb
    return strict, vertex, za


def _bisect(patch, field, a_pts, b_pts, anchors, tols):
    """Roots of the aligned scalar residual on segments [a, b], batched."""
    lo = np.array(a_pts, dtype=float)
    hi = np.array(b_pts, dtype=float)

    def aligned(pts):
        fr = frames_at(patch, pts, order=1, tols=tols)
        nm = fr.normal[:, :, 0]
        flip = _sign(np.einsum("bm,bm->b", nm, anchors))
        y = field.values(pts, patch=patch, tols=tols)
        return flip * np.einsum("bm,bm->b", nm, y)

    s_lo = _sign(aligned(lo))
    for _ in range(64):
        if float(np.max(np.linalg.norm(hi - lo, axis=1))) <= _BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        same = _sign(aligned(mid)) == s_lo
        lo = np.where(same[:, None], mid, lo)
        hi = np.where(same[:, None], hi, mid)
    root = 0.5 * (lo + hi)
    res = np.abs(aligned(root))
    return root, res


def _merge_roots(box: Box, roots, resids, keys, radius):
    """Cluster near-coincident roots; returns points, residuals, key->id map.

    Node zeros get reported once per incident edge; after wrapping they
    collapse to a single point here.
    """
    wrapped = box.wrap(roots)
    points: list[np.ndarray] = []
    point_res = []
    idmap = {}
    for key, p, r in zip(keys, wrapped, resids):
        if points:
            d = box.param_distance(np.array(points), p)
            j = int(np.argmin(d))
            if d[j] < radius:
                idmap[key] = j
                point_res[j] = min(point_res[j], float(r))
                continue
        idmap[key] = len(points)
        points.append(p)
        point_res.append(float(r))
    return np.array(points).reshape(-1, box.n), np.array(point_res), idmap


def _extract_1d(patch, field, f, normals, res, tols):
    box = patch.domain
    fa, fb, na, nb = _edge_endpoints(f[:, 0], normals, 0, box.periodic[0])
    strict, vertex, za = _classify_edges(fa, fb, na, nb, tols.extract_tol)
    grid = box.axis_grid(0, res[0])[: fa.shape[0]]
    h = box.cell_sizes(res)[0]

    keys, roots, resids = [], [], []
    idx = np.nonzero(strict)[0]
    if idx.size:
        a = grid[idx][:, None]
        r, rs = _bisect(patch, field, a, a + h, na[idx], tols)
        for n_i, i in enumerate(idx):
            keys.append((0, int(i)))
            roots.append(r[n_i])
            resids.append(rs[n_i])
    for i in np.nonzero(vertex)[0]:
        u = grid[i] if za[i] else grid[i] + h
        keys.append((0, int(i)))
        roots.append(np.array([u]))
        resids.append(abs(fa[i]) if za[i] else abs(fb[i]))
    if not keys:
        return np.zeros((0, 1)), np.zeros(0), ()
    pts, rs, _ = _merge_roots(box, np.array(roots), np.array(resids), keys,
                              1e-6 * h)
    return pts, rs, ()


def _march_cells(point_ids, center_sign_fn, res, periodic):
    """Pair edge crossings inside each grid cell into segments."""
    r0, r1 = res
    c0 = r0 if periodic[0] else r0 - 1
    c1 = r1 if periodic[1] else r1 - 1
    segments = []
    saddles = []
    for i in range(c0):
        for j in range(c1):
            sides = [
                (0, i, j),
                (0, i, (j + 1) % r1),
                (1, i, j),
                (1, (i + 1) % r0, j),
            ]
            hit = [s for s in sides if point_ids.get(s) is not None]
            if len(hit) == 2:
                a, b = point_ids[hit[0]], point_ids[hit[1]]
                if a != b:
                    segments.append((a, b))
            elif len(hit) == 4:
                saddles.append((i, j))
    # ambiguous cells: the residual sign at the center picks the pairing
    if saddles:
        flags = center_sign_fn(saddles)
        for (i, j), through in zip(saddles, flags):
            a0 = point_ids[(0, i, j)]
            a1 = point_ids[(0, i, (j + 1) % r1)]
            b0 = point_ids[(1, i, j)]
            b1 = point_ids[(1, (i + 1) % r0, j)]
            pairs = ((a0, b1), (b0, a1)) if through else ((a0, b0), (a1, b1))
            segments.extend(p for p in pairs if p[0] != p[1])
    return segments


def _chain(segments, n_points):
    """Chain unordered segments into polylines; deterministic order."""
    neighbors = [[] for _ in range(n_points)]
    for a, b in sorted(segments):
        neighbors[a].append(b)
        neighbors[b].append(a)
    for lst in neighbors:
        lst.sort()
    used = set()
    lines = []

    def walk(start):
        line = [start]
        prev = -1
        cur = start
        while True:
            nxt = [x for x in neighbors[cur] if x != prev and (min(cur, x), max(cur, x)) not in used]
            if not nxt:
                break
            step = nxt[0]
            used.add((min(cur, step), max(cur, step)))
            line.append(step)
            prev, cur = cur, step
            if cur == start:
                break
        return line

    degree = [len(lst) for lst in neighbors]
    for start in range(n_points):
        if degree[start] == 1 and all(
            (min(start, x), max(start, x)) in used for x in neighbors[start]
        ):
            continue
        if degree[start] == 1:
            lines.append(tuple(walk(start)))
    for start in range(n_points):
        if neighbors[start] and any(
            (min(start, x), max(start, x)) not in used for x in neighbors[start]
        ):
            lines.append(tuple(walk(start)))
    return tuple(lines)


def _extract_marching(patch, field, f, normals, res, tols):
    r0, r1 = res
    ff = f[:, 0].reshape(r0, r1)
    nn = normals.reshape(r0, r1, -1)
    box = patch.domain
    per = box.periodic
    g0 = box.axis_grid(0, r0)
    g1 = box.axis_grid(1, r1)
    h0, h1 = box.cell_sizes(res)

    keys = []
    bis_keys, bis_a, bis_off, bis_anchor = [], [], [], []
    roots_fixed, resid_fixed, fixed_keys = [], [], []
    for axis, h in ((0, h0), (1, h1)):
        fa, fb, na, nb = _edge_endpoints(ff, nn, axis, per[axis])
        strict, vertex, za = _classify_edges(fa, fb, na, nb, tols.extract_tol)
        off = (h, 0.0) if axis == 0 else (0.0, h)
        for i, j in zip(*np.nonzero(strict)):
            bis_keys.append((axis, int(i), int(j)))
            bis_a.append((g0[i], g1[j]))
            bis_off.append(off)
            bis_anchor.append(na[i, j])
        for i, j in zip(*np.nonzero(vertex)):
            a = np.array((g0[i], g1[j]))
            fixed_keys.append((axis, int(i), int(j)))
            roots_fixed.append(a if za[i, j] else a + off)
            resid_fixed.append(abs(fa[i, j]) if za[i, j] else abs(fb[i, j]))

    if not bis_keys and not fixed_keys:
        return np.zeros((0, 2)), np.zeros(0), ()

    all_roots, all_res, all_keys = list(roots_fixed), list(resid_fixed), list(fixed_keys)
    if bis_keys:
        a_pts = np.array(bis_a)
        r, rs = _bisect(patch, field, a_pts, a_pts + np.array(bis_off),
                        np.array(bis_anchor), tols)
        all_roots.extend(r)
        all_res.extend(rs)
        all_keys.extend(bis_keys)

    pts, rs, idmap = _merge_roots(box, np.array(all_roots), np.array(all_res),
                                  all_keys, 1e-6 * min(h0, h1))

    def center_signs(cells):
        centers = np.array([(g0[i] + 0.5 * h0, g1[j] + 0.5 * h1) for i, j in cells])
        fr = frames_at(patch, centers, order=1, tols=tols)
        nm = fr.normal[:, :, 0]
        base = np.array([nn[i, j] for i, j in cells])
        flip = _sign(np.einsum("bm,bm->b", nm, base))
        y = field.values(centers, patch=patch, tols=tols)
        fc = flip * np.einsum("bm,bm->b", nm, y)
        f00 = np.array([ff[i, j] for i, j in cells])
        return _sign(fc) == _sign(f00)

    segments = _march_cells(idmap, center_signs, res, per)
    lines = _chain(segments, pts.shape[0])
    return pts, rs, lines


def _dedup(box: Box, points, residuals, radius):
    if points.shape[0] == 0:
        return points, residuals
    order = np.lexsort(points.T[::-1])
    pts = points[order]
    res = residuals[order]
    scale = max(radius, 1e-300)
    bins = np.floor((pts - box.lo) / scale).astype(np.int64)
    _, first = np.unique(bins, axis=0, return_index=True)
    first.sort()
    pts, res = pts[first], res[first]
    keep_pts: list[np.ndarray] = []
    keep_res = []
    for p, r in zip(pts, res):
        if keep_pts and bool(np.any(box.param_distance(np.array(keep_pts), p) < radius)):
            continue
        keep_pts.append(p)
        keep_res.append(r)
    return np.array(keep_pts).reshape(-1, box.n), np.array(keep_res)


def _extract_newton(patch, field, grid, res, tols):
    box = patch.domain
    cell = np.array(box.cell_sizes(res))
    diag = float(np.linalg.norm(cell))
    u = grid.copy()
    alive = np.ones(u.shape[0], dtype=bool)
    for _ in range(_NEWTON_ITERS):
        f, jac, _ = shadow_system(patch, field, u[alive], tols)
        bad = np.max(np.abs(f), axis=1)
        move = bad > tols.extract_tol
        if not bool(move.any()):
            break
        pinv = np.linalg.pinv(jac[move], rcond=1e-10)
        step = -np.einsum("bnk,bk->bn", pinv, f[move])
        norms = np.linalg.norm(step, axis=1)
        scale = np.minimum(1.0, diag / np.maximum(norms, 1e-300))
        idx = np.nonzero(alive)[0][move]
        u[idx] += step * scale[:, None]
        u[idx] = box.wrap(u[idx])
        alive[idx] = box.contains(u[idx], pad=float(cell.max()))
        if not bool(alive.any()):
            break
    if not bool(alive.any()):
        return np.zeros((0, box.n)), np.zeros(0), (), int(u.shape[0])
    u = box.wrap(u[alive])
    f = shadow_values(patch, field, u, tols)
    resid = np.max(np.abs(f), axis=1)
    good = (resid <= tols.extract_tol) & box.contains(u, pad=1e-9)
    dropped = int(grid.shape[0] - np.count_nonzero(good))
    pts, res_kept = _dedup(box, u[good], resid[good], 0.5 * diag)
    return pts, res_kept, (), dropped


def extract_shadow_set(patch: SubmanifoldPatch, field: FieldAlongM,
                       resolution=128, tols: Tolerances = DEFAULT_TOLS) -> ShadowSet:
    """Locate the zero set of F on the chart domain.

    A grid scan decides degeneracy first; otherwise zeros are pinned by
    bisection (curves and surface level sets) or damped Gauss-Newton
    (higher codimension), then rank-certified.
    """
    res = patch.domain._res_tuple(resolution)
    grid = patch.domain.grid(res)
    frames = frames_at(patch, grid, order=1, tols=tols)
    f = shadow_values(patch, field, grid, tols, frames=frames)
    flat_mag = np.max(np.abs(f), axis=1)
    frac = float(np.mean(flat_mag < tols.extract_tol))
    k = frames.normal.shape[2]

    if frac >= DEGENERATE_FRACTION:
        return ShadowSet(
            params=grid,
            ambient=frames.x,
            residuals=flat_mag,
            polylines=(),
            degenerate=True,
            degenerate_fraction=frac,
            resolution=res,
            rank_ratio=None,
            rank_ok=None,
        )

    dropped = 0
    if k == 1 and patch.n == 1:
        pts, resid, lines = _extract_1d(patch, field, f, frames.normal[:, :, 0], res, tols)
    elif k == 1 and patch.n == 2:
        pts, resid, lines = _extract_marching(patch, field, f, frames.normal[:, :, 0], res, tols)
    else:
        pts, resid, lines, dropped = _extract_newton(patch, field, grid, res, tols)

    if pts.shape[0]:
        ambient = patch.chart.eval_values(pts)
        ratio, ok = _rank_ratio(patch, field, pts, tols)
    else:
        ambient = np.zeros((0, patch.m))
        ratio, ok = None, None
    return ShadowSet(
        params=pts,
        ambient=ambient,
        residuals=resid,
        polylines=lines,
        degenerate=False,
        degenerate_fraction=frac,
        resolution=res,
        rank_ratio=ratio,
        rank_ok=ok,
        dropped_seeds=dropped,
    )


# -- smoothness certificate --------------------------------------------------


@dataclass(frozen=True)
class SmoothnessReport:
    """Per-point Jacobian conditioning over a set of shadow points.

    `ratios` holds sigma_min / sigma_max per point; `flags` marks the
    points whose ratio clears rank_tol; `ok` means all of them do.
    """

    ratios: np.ndarray
    flags: np.ndarray
    sigma_min: np.ndarray
    min_ratio: float
    argmin: np.ndarray
    ok: bool
    n_points: int
    expected_dim: int

    def as_dict(self) -> dict:
        return {
            "min_ratio": self.min_ratio,
            "argmin": list(np.asarray(self.argmin, dtype=float)),
            "ok": self.ok,
            "n_certified": int(np.count_nonzero(self.flags)),
            "n_points": self.n_points,
            "expected_dim": self.expected_dim,
        }


def _rank_ratio(patch, field, points, tols):
    _, jac, _ = shadow_system(patch, field, points, tols)
    svals = np.linalg.svd(jac, compute_uv=False)
    ratios = svals[:, -1] / np.maximum(svals[:, 0], 1e-300)
    i = int(np.argmin(ratios))
    return float(ratios[i]), bool(ratios[i] > tols.rank_tol)


def smoothness_certificate(patch: SubmanifoldPatch, field: FieldAlongM, points,
                           tols: Tolerances = DEFAULT_TOLS) -> SmoothnessReport:
    """Full-rank check of the shadow Jacobian at given zero-set points.

    sigma_min / sigma_max above rank_tol at every point certifies the
    set as a submanifold of dimension n - min(k, n) near those points.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise GeometryError("no points to certify")
    _, jac, _ = shadow_system(patch, field, points, tols)
    svals = np.linalg.svd(jac, compute_uv=False)
    ratios = svals[:, -1] / np.maximum(svals[:, 0], 1e-300)
    i = int(np.argmin(ratios))
    rank = min(jac.shape[1], jac.shape[2])
    return SmoothnessReport(
        ratios=ratios,
        flags=ratios > tols.rank_tol,
        sigma_min=svals[:, -1],
        min_ratio=float(ratios[i]),
        argmin=points[i],
        ok=bool(ratios[i] > tols.rank_tol),
        n_points=points.shape[0],
        expected_dim=patch.n - rank,
    )


# -- products ----------------------------------------------------------------


def _offset_constraint(chart: ChartExpr, names, offset):
    reps = [Param((0, 0), i + offset, names[i + offset]) for i in range(chart.n_params)]
    outs = tuple(substitute_params(o, reps) for o in chart.outputs)
    return outs


def _product_ambient(a: AmbientSpace, b: AmbientSpace) -> AmbientSpace:
    m = a.dim + b.dim
    if a.flat and b.flat:
        return AmbientSpace(m, None)
    names = tuple(f"x{i + 1}" for i in range(m))
    outs = ()
    constants: dict = {}
    if not a.flat:
        outs += _offset_constraint(a.constraint, names, 0)
        constants.update(a.constraint.constants)
    if not b.flat:
        outs += _offset_constraint(b.constraint, names, a.dim)
        constants.update(b.constraint.constants)
    return AmbientSpace(m, ChartExpr(names, outs, constants))


def product_patch(a: SubmanifoldPatch, b: SubmanifoldPatch,
                  name: str | None = None) -> SubmanifoldPatch:
    """Block patch of a Cartesian product, constraints stacked."""
    chart = product_chart(a.chart, b.chart)
    box = Box(a.domain.lo + b.domain.lo, a.domain.hi + b.domain.hi,
              a.domain.periodic + b.domain.periodic)
    return SubmanifoldPatch(chart, box, _product_ambient(a.ambient, b.ambient),
                            name=name or f"{a.name}x{b.name}")


def product_field(field_a: FieldAlongM, field_b: FieldAlongM,
                  patch_a: SubmanifoldPatch) -> BlockField:
    return BlockField(field_a, field_b, patch_a.n, patch_a.m)


@dataclass(frozen=True)
class ProductShadowReport:
    hausdorff: float
    cell_diagonal: float
    n_direct: int
    n_reference: int
    direct_degenerate: bool
    factor_degenerate: tuple
    report: TheoremReport

    def as_dict(self) -> dict:
        return {
            "hausdorff": self.hausdorff,
            "cell_diagonal": self.cell_diagonal,
            "n_direct": self.n_direct,
            "n_reference": self.n_reference,
            "direct_degenerate": self.direct_degenerate,
            "factor_degenerate": list(self.factor_degenerate),
            "report": self.report.as_dict(),
        }


def _pair_grid(pts_a, pts_b):
    if pts_a.shape[0] == 0 or pts_b.shape[0] == 0:
        return np.zeros((0, pts_a.shape[1] + pts_b.shape[1]))
    left = np.repeat(pts_a, pts_b.shape[0], axis=0)
    right = np.tile(pts_b, (pts_a.shape[0], 1))
    return np.hstack([left, right])


def _hausdorff(box: Box, a, b):
    if a.shape[0] == 0 and b.shape[0] == 0:
        return 0.0
    if a.shape[0] == 0 or b.shape[0] == 0:
        return float("inf")
    d = box.param_distance(a[:, None, :], b[None, :, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def product_shadow_check(patch_a: SubmanifoldPatch, field_a: FieldAlongM,
                         patch_b: SubmanifoldPatch, field_b: FieldAlongM,
                         resolution=24,
                         tols: Tolerances = DEFAULT_TOLS) -> ProductShadowReport:
    """Shadow set of a product vs product of factor shadow sets.

    Both are point clouds in product parameter space; agreement means
    symmetric Hausdorff distance under one grid-cell diagonal.  A
    degenerate factor contributes its whole grid.
    """
    prod = product_patch(patch_a, patch_b)
    pf = product_field(field_a, field_b, patch_a)

    direct = extract_shadow_set(prod, pf, resolution, tols)
    sa = extract_shadow_set(patch_a, field_a, resolution, tols)
    sb = extract_shadow_set(patch_b, field_b, resolution, tols)
    reference = _pair_grid(sa.params, sb.params)

    res = prod.domain._res_tuple(resolution)
    cell_diag = float(np.linalg.norm(prod.domain.cell_sizes(res)))
    gap = _hausdorff(prod.domain, direct.params, reference)

    residuals = [0.0]
    for s in (direct, sa, sb):
        if s.n_points and not s.degenerate:
            residuals.append(float(s.residuals.max()))
    hyp = [ResidualEntry("extraction-residual", max(residuals),
                         tols.extract_tol * 10.0, 1e-3)]
    concl = [ResidualEntry("hausdorff-gap", gap, cell_diag, 2.0 * cell_diag)]
    report = build_report(
        "product-shadow",
        prod.name,
        hypotheses=hyp,
        conclusions=concl,
        details={
            "n_direct": direct.n_points,
            "n_reference": int(reference.shape[0]),
            "cell_diagonal": cell_diag,
            "direct_degenerate": direct.degenerate,
            "factor_degenerate": [sa.degenerate, sb.degenerate],
        },
    )
    return ProductShadowReport(
        hausdorff=gap,
        cell_diagonal=cell_diag,
        n_direct=direct.n_points,
        n_reference=int(reference.shape[0]),
        direct_degenerate=direct.degenerate,
        factor_degenerate=(sa.degenerate, sb.degenerate),
        report=report,
    )
