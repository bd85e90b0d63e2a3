"""Embedded patches, adapted frames, and tangent/normal splitting.

The ambient space N is either flat Euclidean space or the zero set of a
constraint map inside it.  A submanifold patch M is a chart into the
ambient coordinates over a box of parameters.  Frames are built per
point: an orthonormal tangent basis from the chart Jacobian, an
orthonormal basis of the ambient tangent space from the constraint
kernel, and an orthonormal normal frame spanning the complement of the
patch tangent inside the ambient tangent.

Frame vectors follow one deterministic sign convention: the component of
largest magnitude (first such index on ties) is made positive.  Two
evaluations at the same parameters produce bit-identical frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import ChartExpr, Jet2Batch, compose
from .tolerances import DEFAULT_TOLS, Tolerances

__all__ = [
    "GeometryError",
    "ChartRankError",
    "OffAmbientError",
    "TangencyError",
    "Box",
    "AmbientSpace",
    "SubmanifoldPatch",
    "FrameBatch",
    "FrameData",
    "fix_column_signs",
    "orthonormal_span",
    "ambient_tangent_basis",
    "frames_at",
    "frame_at",
    "split_tangent_normal",
    "covariant_derivative_along",
    "composed_patch",
    "ValidationReport",
    "validate_patch",
]


class GeometryError(RuntimeError):
    def __init__(self, msg, point=None):
        if point is not None:
            msg = f"{msg} at parameters {tuple(np.asarray(point, dtype=float))}"
        super().__init__(msg)
        self.point = None if point is None else tuple(np.asarray(point, dtype=float))


class ChartRankError(GeometryError):
    pass


class OffAmbientError(GeometryError):
    pass


class TangencyError(GeometryError):
    pass


# -- parameter domain -------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis-aligned parameter domain; axes may be periodic."""

    lo: tuple
    hi: tuple
    periodic: tuple

    def __post_init__(self):
        if not (len(self.lo) == len(self.hi) == len(self.periodic)):
            raise ValueError("box axis lists disagree in length")
        for a, b in zip(self.lo, self.hi):
            if not b > a:
                raise ValueError(f"empty box axis [{a}, {b}]")

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def spans(self):
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    def wrap(self, points):
        """Map periodic coordinates into [lo, hi); clamp nothing else."""
        pts = np.array(points, dtype=float, copy=True)
        flat = pts.reshape(-1, self.n)
        for i, per in enumerate(self.periodic):
            if per:
                span = self.hi[i] - self.lo[i]
                flat[:, i] = self.lo[i] + np.mod(flat[:, i] - self.lo[i], span)
        return pts

    def contains(self, points, pad: float = 0.0):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(pts.shape[0], dtype=bool)
        for i, per in enumerate(self.periodic):
            if per:
                continue
            ok &= (pts[:, i] >= self.lo[i] - pad) & (pts[:, i] <= self.hi[i] + pad)
        return ok

    def axis_grid(self, i: int, res: int):
        if self.periodic[i]:
            return self.lo[i] + (self.hi[i] - self.lo[i]) * np.arange(res) / res
        return np.linspace(self.lo[i], self.hi[i], res)

    def grid(self, res):
        """Lexicographic (C-order) grid of parameter points, (prod(res), n)."""
        res = self._res_tuple(res)
        axes = [self.axis_grid(i, r) for i, r in enumerate(res)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def cell_sizes(self, res):
        res = self._res_tuple(res)
        out = []
        for i, r in enumerate(res):
            cells = r if self.periodic[i] else r - 1
            out.append((self.hi[i] - self.lo[i]) / max(cells, 1))
        return tuple(out)

    def _res_tuple(self, res):
        if np.isscalar(res):
            return (int(res),) * self.n
        res = tuple(int(r) for r in res)
        if len(res) != self.n:
            raise ValueError(f"expected {self.n} resolutions, got {len(res)}")
        return res

    def param_distance(self, a, b):
        """Componentwise distance honoring periodic wrap."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = a - b
        for i, per in enumerate(self.periodic):
            if per:
                span = self.hi[i] - self.lo[i]
                d[..., i] = (d[..., i] + 0.5 * span) % span - 0.5 * span
        return np.linalg.norm(d, axis=-1)


# -- spaces ------------------------------------------------------------------


def ambient_coord_names(m: int):
    return tuple(f"x{i + 1}" for i in range(m))


@dataclass(frozen=True)
class AmbientSpace:
    """Flat R^m, or the zero set of a constraint map inside it."""

    dim: int
    constraint: ChartExpr | None = None

    def __post_init__(self):
        if self.constraint is not None:
            if self.constraint.n_params != self.dim:
                raise ValueError(
                    f"constraint expects {self.constraint.n_params} coordinates, ambient has {self.dim}"
                )
            if self.constraint.n_outputs >= self.dim:
                raise ValueError("constraint leaves no tangent directions")

    @property
    def flat(self) -> bool:
        return self.constraint is None

    @property
    def n_constraints(self) -> int:
        return 0 if self.constraint is None else self.constraint.n_outputs

    @property
    def tangent_dim(self) -> int:
        return self.dim - self.n_constraints

    def constraint_values(self, x):
        if self.flat:
            return np.zeros((np.atleast_2d(x).shape[0], 0))
        return self.constraint.eval_values(x)


@dataclass(frozen=True)
class SubmanifoldPatch:
    chart: ChartExpr
    domain: Box
    ambient: AmbientSpace
    name: str = "M"

    def __post_init__(self):
        if self.chart.n_params != self.domain.n:
            raise ValueError("chart parameter count disagrees with domain")
        if self.chart.n_outputs != self.ambient.dim:
            raise ValueError(
                f"chart maps to R^{self.chart.n_outputs}, ambient is R^{self.ambient.dim}"
            )

    @property
    def n(self) -> int:
        return self.chart.n_params

    @property
    def m(self) -> int:
        return self.ambient.dim

    @property
    def codim(self) -> int:
        """Codimension inside the ambient tangent space."""
        return self.ambient.tangent_dim - self.n


def composed_patch(parent: SubmanifoldPatch, sub_chart: ChartExpr, sub_domain: Box, name="L"):
    """Ambient patch of a nested submanifold given by a chart into the
    parent's parameter space."""
    if sub_chart.n_outputs != parent.n:
        raise ValueError("nested chart must map into the parent parameters")
    return SubmanifoldPatch(
        chart=compose(parent.chart, sub_chart),
        domain=sub_domain,
        ambient=parent.ambient,
        name=name,
    )


# -- linear algebra helpers --------------------------------------------------


def column_signs(q):
    """Sign per column from the largest-magnitude component rule.

    Ties take the first index; exact zeros count positive.  q: (B, m, r).
    """
    idx = np.argmax(np.abs(q), axis=1)  # (B, r)
    vals = np.take_along_axis(q, idx[:, None, :], axis=1)[:, 0, :]
    return np.where(vals < 0.0, -1.0, 1.0)


def fix_column_signs(q):
    """Flip columns so each vector's largest-magnitude component is positive."""
    if q.shape[2] == 0:
        return q
    return q * column_signs(q)[:, None, :]


def orthonormal_span(mats, k: int, orthogonal_to=None, point_hint=None):
    """Orthonormal basis of the leading k-dimensional column span.

    Pivoted modified Gram-Schmidt, vectorized over the batch: each round
    takes the column of largest remaining norm, re-orthogonalizes it, and
    deflates.  Ties pick the first column, so the result is deterministic.
    mats: (B, m, c); returns (B, m, k).
    """
    work = np.array(mats, dtype=float, copy=True)
    b, m, c = work.shape
    if k > c:
        raise GeometryError(f"need {k} directions, only {c} columns available", point_hint)
    first_norm = None
    cols = []
    for _ in range(k):
        norms = np.linalg.norm(work, axis=1)  # (B, c)
        p = np.argmax(norms, axis=1)
        nv = np.take_along_axis(norms, p[:, None], axis=1)[:, 0]
        if first_norm is None:
            first_norm = np.maximum(nv, 1e-300)
        bad = nv <= 1e-12 * first_norm
        if bad.any():
            hint = None if point_hint is None else point_hint[int(np.argmax(bad))]
            raise GeometryError("requested span is rank-deficient", hint)
        q = np.take_along_axis(work, p[:, None, None], axis=2)[:, :, 0] / nv[:, None]
        if orthogonal_to is not None:
            q = q - np.einsum("bmr,br->bm", orthogonal_to, np.einsum("bmr,bm->br", orthogonal_to, q))
        for qprev in cols:
            q = q - qprev * np.einsum("bm,bm->b", qprev, q)[:, None]
        q = q / np.linalg.norm(q, axis=1)[:, None]
        work = work - q[:, :, None] * np.einsum("bm,bmc->bc", q, work)[:, None, :]
        cols.append(q)
    return np.stack(cols, axis=2)


# -- frames ------------------------------------------------------------------


@dataclass(frozen=True)
class FrameBatch:
    """Per-point frame data over a batch of parameter points.

    tangent columns are an orthonormal basis of T_x M, ambient columns of
    T_x N, normal columns of the orthogonal complement of T_x M inside
    T_x N.  rinv converts orthonormal tangent coordinates to chart
    coordinates: e_i = jac @ rinv[:, i].
    """

    points: np.ndarray  # (B, n)
    x: np.ndarray  # (B, m)
    jac: np.ndarray  # (B, m, n)
    hess: np.ndarray | None  # (B, m, n, n)
    metric: np.ndarray  # (B, n, n)
    tangent: np.ndarray  # (B, m, n)
    rinv: np.ndarray  # (B, n, n)
    ambient: np.ndarray  # (B, m, d)
    normal: np.ndarray  # (B, m, k)
    valid: np.ndarray | None = None  # (B,) bool when built non-strict

    def __len__(self):
        return self.points.shape[0]

    @property
    def k(self) -> int:
        return self.normal.shape[2]

    def at(self, i) -> "FrameData":
        h = None if self.hess is None else self.hess[i]
        return FrameData(
            self.points[i], self.x[i], self.jac[i], h, self.metric[i],
            self.tangent[i], self.rinv[i], self.ambient[i], self.normal[i],
        )


@dataclass(frozen=True)
class FrameData:
    point: np.ndarray
    x: np.ndarray
    jac: np.ndarray
    hess: np.ndarray | None
    metric: np.ndarray
    tangent: np.ndarray
    rinv: np.ndarray
    ambient: np.ndarray
    normal: np.ndarray

    @property
    def k(self) -> int:
        return self.normal.shape[1]


def ambient_tangent_basis(ambient: AmbientSpace, x, tols: Tolerances = DEFAULT_TOLS):
    """Orthonormal basis of ker Dc(x), (B, m, d); identity columns when flat."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    b, m = x.shape
    if ambient.flat:
        return np.broadcast_to(np.eye(m), (b, m, m)).copy()
    jets = ambient.constraint.eval_jets(x, order=1)
    resid = np.abs(jets.value).max(axis=1)
    scale = 1.0 + np.linalg.norm(x, axis=1)
    bad = resid > tols.on_ambient_tol * scale
    if bad.any():
        i = int(np.argmax(bad))
        raise OffAmbientError(
            f"point is off the ambient manifold (constraint residual {resid[i]:.3e})",
            x[i],
        )
    dc = jets.jac  # (B, kc, m)
    svals = np.linalg.svd(dc, compute_uv=False)
    bad = svals[:, -1] < tols.rank_tol * svals[:, 0]
    if bad.any():
        i = int(np.argmax(bad))
        raise ChartRankError("constraint Jacobian is rank-deficient", x[i])
    _, _, vh = np.linalg.svd(dc, full_matrices=True)
    kernel = vh[:, ambient.n_constraints :, :].transpose(0, 2, 1)
    return fix_column_signs(kernel)


def frames_at(patch: SubmanifoldPatch, points, order: int = 2,
              tols: Tolerances = DEFAULT_TOLS, strict: bool = True) -> FrameBatch:
    """Build adapted frames at a batch of parameter points.

    With strict=False, rank failures mark rows invalid instead of raising;
    invalid rows hold unspecified values.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    jets = patch.chart.eval_jets(points, order=order)
    x, jac = jets.value, jets.jac
    b, m, n = jac.shape
    svals = np.linalg.svd(jac, compute_uv=False)
    good = svals[:, -1] >= tols.rank_tol * np.maximum(svals[:, 0], 1e-300)
    valid = None
    if not good.all():
        if strict:
            i = int(np.argmax(~good))
            raise ChartRankError(
                f"chart Jacobian is rank-deficient (singular value ratio "
                f"{svals[i, -1] / max(svals[i, 0], 1e-300):.3e})",
                points[i],
            )
        valid = good.copy()
        jac = jac.copy()
        jac[~good] = np.eye(m, n)  # placeholder, keeps decompositions finite
    q, r = np.linalg.qr(jac)
    signs = column_signs(q)
    q = q * signs[:, None, :]
    r = r * signs[:, :, None]
    rinv = np.linalg.inv(r)
    metric = np.einsum("bmi,bmj->bij", jets.jac, jets.jac)
    amb = ambient_tangent_basis(patch.ambient, x, tols)
    d = amb.shape[2]
    k = d - n
    if k < 0:
        raise GeometryError(
            f"patch dimension {n} exceeds ambient tangent dimension {d}", points[0]
        )
    if k == 0:
        normal = np.zeros((b, m, 0))
    else:
        resid = amb - q @ np.einsum("bmn,bmd->bnd", q, amb)
        normal = orthonormal_span(resid, k, orthogonal_to=q, point_hint=points)
        normal = fix_column_signs(normal)
    return FrameBatch(points, x, jets.jac, jets.hess, metric, q, rinv, amb, normal, valid)


def frame_at(patch: SubmanifoldPatch, point, order: int = 2,
             tols: Tolerances = DEFAULT_TOLS) -> FrameData:
    return frames_at(patch, np.asarray(point, dtype=float)[None, :], order, tols).at(0)


def split_tangent_normal(frame: FrameData, vector, tols: Tolerances = DEFAULT_TOLS):
    """Split an ambient-tangent vector into patch-tangential and normal parts."""
    v = np.asarray(vector, dtype=float)
    amb_part = frame.ambient @ (frame.ambient.T @ v)
    defect = np.linalg.norm(v - amb_part)
    if defect > tols.on_ambient_tol * (1.0 + np.linalg.norm(v)):
        raise TangencyError(
            f"vector is not tangent to the ambient manifold (defect {defect:.3e})",
            frame.point,
        )
    tan = frame.tangent @ (frame.tangent.T @ v)
    nor = frame.normal @ (frame.normal.T @ v)
    return tan, nor


def covariant_derivative_along(patch: SubmanifoldPatch, field, point, direction,
                               tols: Tolerances = DEFAULT_TOLS):
    """Ambient-tangential derivative of a field along a parameter direction.

    direction lives in parameter space; the Euclidean directional
    derivative of the field is projected onto the ambient tangent space.
    """
    point = np.asarray(point, dtype=float)
    w = np.asarray(direction, dtype=float)
    dy = field.param_jacobian(point[None, :], patch=patch, tols=tols)[0]  # (m, n)
    deriv = dy @ w
    frame = frames_at(patch, point[None, :], order=1, tols=tols)
    basis = frame.ambient[0]
    return basis @ (basis.T @ deriv)


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    max_constraint_residual: float
    constraint_argmax: tuple | None
    min_jacobian_ratio: float
    jacobian_argmin: tuple | None
    max_tangency_residual: float
    tangency_argmax: tuple | None
    rank_failures: tuple
    messages: tuple

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "max_constraint_residual": self.max_constraint_residual,
            "constraint_argmax": list(self.constraint_argmax) if self.constraint_argmax else None,
            "min_jacobian_ratio": self.min_jacobian_ratio,
            "jacobian_argmin": list(self.jacobian_argmin) if self.jacobian_argmin else None,
            "max_tangency_residual": self.max_tangency_residual,
            "tangency_argmax": list(self.tangency_argmax) if self.tangency_argmax else None,
            "rank_failures": [list(u) for u in self.rank_failures],
            "messages": list(self.messages),
        }


def validate_patch(patch: SubmanifoldPatch, field=None, resolution=9,
                   tols: Tolerances = DEFAULT_TOLS) -> ValidationReport:
    """Sample a grid and report chart rank, constraint, and field health."""
    grid = patch.domain.grid(resolution)
    jets = patch.chart.eval_jets(grid, order=1)
    svals = np.linalg.svd(jets.jac, compute_uv=False)
    ratios = svals[:, -1] / np.maximum(svals[:, 0], 1e-300)
    i_rank = int(np.argmin(ratios))
    rank_bad = ratios < tols.rank_tol
    failures = tuple(tuple(u) for u in grid[rank_bad][:8])
    messages = []
    if rank_bad.any():
        messages.append(
            f"chart Jacobian rank-deficient at {int(rank_bad.sum())} of {len(grid)} grid points"
        )

    cons = patch.ambient.constraint_values(jets.value)
    if cons.shape[1]:
        scale = 1.0 + np.linalg.norm(jets.value, axis=1)
        cres = np.abs(cons).max(axis=1) / scale
        i_cons = int(np.argmax(cres))
        max_cons = float(cres[i_cons])
        cons_arg = tuple(grid[i_cons])
        if max_cons > tols.on_ambient_tol:
            messages.append(
                f"chart leaves the ambient manifold (max constraint residual {max_cons:.3e})"
            )
    else:
        max_cons, cons_arg = 0.0, None

    max_tan, tan_arg = 0.0, None
    if field is not None:
        ok_rows = ~rank_bad
        if ok_rows.any() and max_cons <= tols.on_ambient_tol:
            pts = grid[ok_rows]
            y = field.values(pts, patch=patch, tols=tols)
            basis = ambient_tangent_basis(patch.ambient, jets.value[ok_rows], tols)
            resid = y - np.einsum("bmd,bd->bm", basis, np.einsum("bmd,bm->bd", basis, y))
            norms = np.linalg.norm(resid, axis=1) / (1.0 + np.linalg.norm(y, axis=1))
            i_t = int(np.argmax(norms))
            max_tan = float(norms[i_t])
            tan_arg = tuple(pts[i_t])
            if max_tan > tols.on_ambient_tol:
                messages.append(
                    f"field is not tangent to the ambient manifold (max residual {max_tan:.3e})"
                )
        else:
            messages.append("field tangency not checked: chart unhealthy on grid")

    ok = not messages
    return ValidationReport(
        ok=ok,
        max_constraint_residual=max_cons,
        constraint_argmax=cons_arg,
        min_jacobian_ratio=float(ratios[i_rank]),
        jacobian_argmin=tuple(grid[i_rank]),
        max_tangency_residual=max_tan,
        tangency_argmax=tan_arg,
        rank_failures=failures,
        messages=tuple(messages),
    )
