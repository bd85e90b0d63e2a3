"""Parallel transport, holonomy probes, geodesics, transported fields.

Vectors transported here are tangent to the ambient manifold N and move
along curves that run inside a patch.  Writing c for the constraint map
presenting N, a field V along x(t) is parallel for the Levi-Civita
connection of N exactly when dV/dt is normal to N, which closes to the
linear matrix equation

    dV/dt = -Dc(x)^T (Dc Dc^T)^{-1} (xdot . Hess c) V .

Flat ambient spaces carry no constraint, the right side vanishes, and
parallel fields are the constant ones.  Integration is classical
fourth-order Runge-Kutta on per-step matrices, with the projection onto
the tangent space of N folded into every step; all stage data is built
in batch before the sequential fold.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .curvature import christoffels, tgs_scan
from .fields import FieldAlongM
from .geometry import (
    GeometryError,
    OffAmbientError,
    SubmanifoldPatch,
    TangencyError,
    ambient_tangent_basis,
    frame_at,
    frames_at,
)
from .reporting import Precondition, ResidualEntry, build_report
from .tolerances import DEFAULT_TOLS, Tolerances

__all__ = [
    "DEFAULT_STEPS",
    "OBSTRUCTION_CLEAR_NOTE",
    "ParamCurve",
    "TransportResult",
    "parallel_transport",
    "HolonomyResult",
    "holonomy_loop",
    "probe_loops",
    "TransportField",
    "ObstructionReport",
    "construct_parallel_field",
    "parallelity_residual",
    "parallel_normal_frame_tgs_check",
    "GeodesicResult",
    "geodesic_trace",
    "geodesic_traces",
    "track_defects",
]

DEFAULT_STEPS = 4096
OBSTRUCTION_CLEAR_NOTE = "no obstruction found at probe resolution"


# -- curves in parameter space -------------------------------------------------


class ParamCurve:
    """A curve in patch parameters: a polyline or a closed-form chart.

    Polylines parametrize each segment over unit time, so step counts
    are split among segments by length and every vertex lands exactly on
    a step boundary.  Closed-form curves take a one-parameter chart over
    [t0, t1].
    """

    def __init__(self, *, vertices=None, chart=None, t0=0.0, t1=1.0, label=""):
        if (vertices is None) == (chart is None):
            raise ValueError("give either polyline vertices or a curve chart")
        self.label = label
        self.chart = chart
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.vertices = None
        if vertices is not None:
            verts = np.atleast_2d(np.asarray(vertices, dtype=float))
            keep = [0]
            for i in range(1, len(verts)):
                if np.linalg.norm(verts[i] - verts[keep[-1]]) > 0.0:
                    keep.append(i)
            verts = verts[keep]
            if len(verts) < 2:
                raise ValueError("polyline needs two distinct vertices")
            self.vertices = verts
        else:
            if chart.n_params != 1:
                raise ValueError("a curve chart takes exactly one parameter")
            if not self.t1 > self.t0:
                raise ValueError("curve needs t1 > t0")

    @classmethod
    def polyline(cls, vertices, closed: bool = False, label: str = "polyline"):
        verts = np.atleast_2d(np.asarray(vertices, dtype=float))
        if closed and np.linalg.norm(verts[0] - verts[-1]) > 0.0:
            verts = np.vstack([verts, verts[:1]])
        return cls(vertices=verts, label=label)

    @classmethod
    def from_expr(cls, chart, t0: float = 0.0, t1: float = 1.0, label: str = "curve"):
        return cls(chart=chart, t0=t0, t1=t1, label=label)

    @property
    def n(self) -> int:
        if self.vertices is not None:
            return self.vertices.shape[1]
        return self.chart.n_outputs

    @property
    def start(self):
        if self.vertices is not None:
            return self.vertices[0]
        return self.chart.eval_values(np.array([[self.t0]]))[0]

    def param_length(self) -> float:
        if self.vertices is not None:
            return float(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1).sum())
        # rough arc length in parameter space, good enough for step sizing
        t = np.linspace(self.t0, self.t1, 257)[:, None]
        pts = self.chart.eval_values(t)
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())

    def _allocate(self, steps: int):
        lengths = np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)
        raw = steps * lengths / lengths.sum()
        alloc = np.maximum(1, np.floor(raw).astype(int))
        deficit = steps - int(alloc.sum())
        if deficit > 0:
            order = np.argsort(-(raw - np.floor(raw)), kind="stable")
            for i in order[:deficit]:
                alloc[i] += 1
        return alloc

    def stage_points(self, steps: int):
        """Per-step stage samples: (u (S,3,n), du (S,3,n), h (S,)).

        Stages are step start, midpoint, end; du is the parameter
        velocity at each stage for the step's own parametrization.
        """
        steps = int(steps)
        if steps < 1:
            raise ValueError("need at least one step")
        if self.vertices is not None:
            u_parts, du_parts, h_parts = [], [], []
            alloc = self._allocate(steps)
            for seg, s_count in enumerate(alloc):
                a, b = self.vertices[seg], self.vertices[seg + 1]
                d = b - a
                tl = (np.arange(s_count)[:, None] + np.array([0.0, 0.5, 1.0])) / s_count
                u_parts.append(a + tl[:, :, None] * d)
                du_parts.append(np.broadcast_to(d, (s_count, 3, len(d))))
                h_parts.append(np.full(s_count, 1.0 / s_count))
            return (
                np.concatenate(u_parts),
                np.concatenate(du_parts).astype(float),
                np.concatenate(h_parts),
            )
        tg = np.linspace(self.t0, self.t1, 2 * steps + 1)[:, None]
        jets = self.chart.eval_jets(tg, order=1)
        u, du = jets.value, jets.jac[:, :, 0]
        u3 = np.stack([u[0:-1:2], u[1::2], u[2::2]], axis=1)
        du3 = np.stack([du[0:-1:2], du[1::2], du[2::2]], axis=1)
        h = np.full(steps, (self.t1 - self.t0) / steps)
        return u3, du3, h


# -- step matrices --------------------------------------------------------------


def _check_on_ambient(patch, values, params, tols):
    resid = np.abs(values).max(axis=1)
    scale = 1.0 + np.linalg.norm(params, axis=1)
    bad = resid > tols.on_ambient_tol * scale
    if bad.any():
        i = int(np.argmax(bad))
        raise OffAmbientError(
            f"curve leaves the ambient manifold (constraint residual {resid[i]:.3e})",
            params[i],
        )


def _step_matrices(patch: SubmanifoldPatch, curve: ParamCurve, steps: int,
                   tols: Tolerances):
    """RK4 step matrices (S, m, m) plus step-end parameters and positions."""
    u3, du3, h = curve.stage_points(steps)
    s_count, n = u3.shape[0], u3.shape[2]
    flat_u = u3.reshape(-1, n)
    jets = patch.chart.eval_jets(flat_u, order=1)
    x = jets.value
    m = x.shape[1]
    xr = x.reshape(s_count, 3, m)
    end_u = np.concatenate([u3[:, 0, :], u3[-1:, 2, :]], axis=0)
    end_x = np.concatenate([xr[:, 0, :], xr[-1:, 2, :]], axis=0)
    if patch.ambient.flat:
        mats = np.broadcast_to(np.eye(m), (s_count, m, m)).copy()
        return mats, end_u, end_x
    xdot = np.einsum("bmn,bn->bm", jets.jac, du3.reshape(-1, n))
    cjets = patch.ambient.constraint.eval_jets(x, order=2)
    _check_on_ambient(patch, cjets.value, flat_u, tols)
    dc = cjets.jac
    dcdot = np.einsum("bi,baij->baj", xdot, cjets.hess)
    gram = np.einsum("bai,bci->bac", dc, dc)
    w = np.linalg.solve(gram, dcdot)
    big_l = -np.einsum("bai,baj->bij", dc, w).reshape(s_count, 3, m, m)
    l0, lm, le = big_l[:, 0], big_l[:, 1], big_l[:, 2]
    half = (0.5 * h)[:, None, None]
    k1 = l0
    k2 = lm + half * (lm @ k1)
    k3 = lm + half * (lm @ k2)
    k4 = le + h[:, None, None] * (le @ k3)
    mats = np.eye(m) + (h / 6.0)[:, None, None] * (k1 + 2 * k2 + 2 * k3 + k4)
    basis = ambient_tangent_basis(patch.ambient, xr[:, 2, :], tols)
    proj = np.einsum("bmd,bjd->bmj", basis, basis)
    return proj @ mats, end_u, end_x


def _fold_vectors(mats, v0):
    out = np.empty((mats.shape[0] + 1, v0.shape[0]))
    out[0] = v0
    v = v0
    for i in range(mats.shape[0]):
        v = mats[i] @ v
        out[i + 1] = v
    return out


def _fold_matrices(mats):
    total = np.eye(mats.shape[1])
    for i in range(mats.shape[0]):
        total = mats[i] @ total
    return total


def _check_seed_tangent(patch, x0, v, tols, point):
    if patch.ambient.flat:
        return
    dc = patch.ambient.constraint.eval_jets(x0[None, :], order=1).jac[0]
    defect = np.linalg.norm(dc @ v)
    if defect > tols.on_ambient_tol * (1.0 + np.linalg.norm(v)):
        raise TangencyError(
            f"seed vector is not tangent to the ambient manifold (defect {defect:.3e})",
            point,
        )


# -- transport along one curve --------------------------------------------------


@dataclass(frozen=True)
class TransportResult:
    params: np.ndarray  # (S+1, n) step-end parameters
    positions: np.ndarray  # (S+1, m)
    vectors: np.ndarray  # (S+1, m)
    norm_drift: float
    tangency_drift: float
    step_error: float  # Richardson estimate from a half-resolution run
    steps: int

    def as_dict(self) -> dict:
        return {
            "steps": self.steps,
            "start_vector": [float(v) for v in self.vectors[0]],
            "end_vector": [float(v) for v in self.vectors[-1]],
            "norm_drift": float(self.norm_drift),
            "tangency_drift": float(self.tangency_drift),
            "step_error": float(self.step_error),
        }


def parallel_transport(patch: SubmanifoldPatch, curve: ParamCurve, vector,
                       steps: int = DEFAULT_STEPS,
                       tols: Tolerances = DEFAULT_TOLS) -> TransportResult:
    """Transport an ambient-tangent vector along a curve in the patch."""
    v0 = np.asarray(vector, dtype=float)
    mats, end_u, end_x = _step_matrices(patch, curve, steps, tols)
    _check_seed_tangent(patch, end_x[0], v0, tols, end_u[0])
    vecs = _fold_vectors(mats, v0)
    coarse_mats, _, _ = _step_matrices(patch, curve, max(steps // 2, 1), tols)
    v_coarse = _fold_vectors(coarse_mats, v0)[-1]
    step_error = float(np.linalg.norm(vecs[-1] - v_coarse) / 15.0)
    norms = np.linalg.norm(vecs, axis=1)
    norm_drift = float(np.abs(norms - norms[0]).max())
    if patch.ambient.flat:
        tangency_drift = 0.0
    else:
        dc = patch.ambient.constraint.eval_jets(end_x, order=1).jac
        dots = np.linalg.norm(np.einsum("bam,bm->ba", dc, vecs), axis=1)
        tangency_drift = float((dots / (1.0 + norms)).max())
    return TransportResult(
        params=end_u,
        positions=end_x,
        vectors=vecs,
        norm_drift=norm_drift,
        tangency_drift=tangency_drift,
        step_error=step_error,
        steps=int(mats.shape[0]),
    )


# -- holonomy --------------------------------------------------------------------


@dataclass(frozen=True)
class HolonomyResult:
    """Loop transport expressed in the ambient tangent basis at the start."""

    matrix: np.ndarray  # (d, d)
    ambient_matrix: np.ndarray  # (m, m)
    base_point: np.ndarray
    base_x: np.ndarray
    deviation: float  # spectral distance from the identity
    rotation: float | None  # principal rotation angle when d == 2
    steps: int
    label: str

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "deviation": float(self.deviation),
            "rotation": None if self.rotation is None else float(self.rotation),
            "base_point": [float(v) for v in self.base_point],
            "steps": self.steps,
        }


def holonomy_loop(patch: SubmanifoldPatch, loop: ParamCurve,
                  steps: int = DEFAULT_STEPS,
                  tols: Tolerances = DEFAULT_TOLS) -> HolonomyResult:
    """Full transport around a loop; the loop must close in ambient space.

    Parameter-space endpoints may differ (periodic wrap loops do), only
    the chart images must agree.
    """
    mats, end_u, end_x = _step_matrices(patch, loop, steps, tols)
    gap = np.linalg.norm(end_x[-1] - end_x[0])
    if gap > tols.on_ambient_tol * (1.0 + np.linalg.norm(end_x[0])):
        raise GeometryError(
            f"loop does not close in the ambient space (gap {gap:.3e})", end_u[0]
        )
    total = _fold_matrices(mats)
    basis0 = ambient_tangent_basis(patch.ambient, end_x[:1], tols)[0]
    hol = basis0.T @ total @ basis0
    d = hol.shape[0]
    deviation = float(np.linalg.norm(hol - np.eye(d), ord=2))
    rotation = None
    if d == 2:
        tr = 0.5 * (hol[0, 0] + hol[1, 1])
        rotation = float(math.acos(min(1.0, max(-1.0, tr))))
    return HolonomyResult(
        matrix=hol,
        ambient_matrix=total,
        base_point=end_u[0],
        base_x=end_x[0],
        deviation=deviation,
        rotation=rotation,
        steps=int(mats.shape[0]),
        label=loop.label,
    )


def probe_loops(patch: SubmanifoldPatch, levels=(1, 2, 3), n_random: int = 20,
                seed: int = 0):
    """Deterministic probe family: dyadic cell boundaries over every axis
    pair, seeded random polygons, and one wrap segment per periodic axis."""
    box = patch.domain
    n = box.n
    lo = np.asarray(box.lo, dtype=float)
    hi = np.asarray(box.hi, dtype=float)
    span = hi - lo
    mid = 0.5 * (lo + hi)
    loops = []
    for lev in levels:
        parts = 2 ** lev
        for i, j in itertools.combinations(range(n), 2):
            edges_i = lo[i] + span[i] * np.arange(parts + 1) / parts
            edges_j = lo[j] + span[j] * np.arange(parts + 1) / parts
            for a in range(parts):
                for b in range(parts):
                    corners = []
                    for ci, cj in ((a, b), (a + 1, b), (a + 1, b + 1), (a, b + 1)):
                        p = mid.copy()
                        p[i] = edges_i[ci]
                        p[j] = edges_j[cj]
                        corners.append(p)
                    loops.append(
                        ParamCurve.polyline(
                            corners, closed=True,
                            label=f"cell-l{lev}-ax{i}{j}-{a}-{b}",
                        )
                    )
    rng = np.random.default_rng(seed)
    for r in range(n_random):
        k = int(rng.integers(3, 7))
        verts = lo + rng.random((k, n)) * span
        loops.append(ParamCurve.polyline(verts, closed=True, label=f"random-{r}"))
    for i in range(n):
        if box.periodic[i]:
            a = mid.copy()
            a[i] = lo[i]
            b = a.copy()
            b[i] = hi[i]
            loops.append(ParamCurve.polyline([a, b], label=f"wrap-ax{i}"))
    return loops


# -- transported fields -----------------------------------------------------------


class TransportField(FieldAlongM):
    """Field built by transporting a seed vector along axis staircases.

    The value at u transports the seed from the base point along the
    path that walks each parameter axis in index order: first axis 0
    from the base to u[0], then axis 1, and so on.  Cumulative station
    transports along each visited line are cached, so structured grids
    and repeated nearby queries cost one extra integrator step each.

    Over a flat ambient the field is the constant seed vector.
    """

    kind = "transport_seed"

    def __init__(self, patch: SubmanifoldPatch, base_point, vector,
                 stations_per_span: int = 1024, tols: Tolerances = DEFAULT_TOLS):
        self.patch = patch
        self.base_point = np.asarray(base_point, dtype=float)
        self.vector = np.asarray(vector, dtype=float)
        self.tols = tols
        self.stations = int(stations_per_span)
        box = patch.domain
        self._h = np.array([(b - a) / self.stations for a, b in zip(box.lo, box.hi)])
        self._margin = 2
        self._lines: dict = {}
        if not patch.ambient.flat:
            x0 = patch.chart.eval_values(self.base_point[None, :])[0]
            _check_seed_tangent(patch, x0, self.vector, tols, self.base_point)

    # one RK4 step per segment, batched; starts (B, n), lengths (B,)
    def _segment_matrices(self, starts, axis: int, lengths):
        b = starts.shape[0]
        n = starts.shape[1]
        offs = np.array([0.0, 0.5, 1.0])
        u3 = np.repeat(starts[:, None, :], 3, axis=1)
        u3[:, :, axis] += offs[None, :] * lengths[:, None]
        flat_u = u3.reshape(-1, n)
        jets = self.patch.chart.eval_jets(flat_u, order=1)
        x = jets.value
        m = x.shape[1]
        xdot = jets.jac[:, :, axis] * lengths.repeat(3)[:, None]
        cjets = self.patch.ambient.constraint.eval_jets(x, order=2)
        _check_on_ambient(self.patch, cjets.value, flat_u, self.tols)
        dc = cjets.jac
        dcdot = np.einsum("bi,baij->baj", xdot, cjets.hess)
        gram = np.einsum("bai,bci->bac", dc, dc)
        w = np.linalg.solve(gram, dcdot)
        big_l = -np.einsum("bai,baj->bij", dc, w).reshape(b, 3, m, m)
        l0, lm, le = big_l[:, 0], big_l[:, 1], big_l[:, 2]
        k1 = l0
        k2 = lm + 0.5 * (lm @ k1)
        k3 = lm + 0.5 * (lm @ k2)
        k4 = le + le @ k3
        mats = np.eye(m) + (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        xe = x.reshape(b, 3, m)[:, 2, :]
        basis = ambient_tangent_basis(self.patch.ambient, xe, self.tols)
        proj = np.einsum("bmd,bjd->bmj", basis, basis)
        return proj @ mats

    def _build_lines(self, axis: int, keys):
        """Cache cumulative station transports along axis for new keys."""
        missing = [k for k in dict.fromkeys(keys) if (axis, k) not in self._lines]
        if not missing:
            return
        m = self.patch.m
        reach = self.stations + self._margin
        h = self._h[axis]
        q = len(missing)
        # line start: walked coordinates from the key, the rest at the base
        starts = np.tile(self.base_point, (q, 1))
        for col in range(axis):
            starts[:, col] = [k[col] for k in missing]
        cum = np.empty((q, 2 * reach + 1, m, m))
        cum[:, reach] = np.eye(m)
        for sign in (1.0, -1.0):
            pos = starts.copy()
            run = np.repeat(np.eye(m)[None], q, axis=0)
            lengths = np.full(q, sign * h)
            for s in range(1, reach + 1):
                mats = self._segment_matrices(pos, axis, lengths)
                run = mats @ run
                cum[:, reach + int(sign) * s] = run
                pos[:, axis] += sign * h
        for k, idx in zip(missing, range(q)):
            self._lines[(axis, k)] = cum[idx]

    def _leg_transport(self, axis: int, pts, vecs):
        """Advance vectors along one staircase leg, batched over queries."""
        base = self.base_point[axis]
        h = self._h[axis]
        reach = self.stations + self._margin
        delta = pts[:, axis] - base
        s = np.trunc(delta / h).astype(int)
        if np.abs(s).max() > reach:
            i = int(np.argmax(np.abs(s)))
            raise GeometryError(
                "transport query is outside the covered parameter band", pts[i]
            )
        rem = delta - s * h
        keys = [tuple(row) for row in pts[:, :axis]]
        self._build_lines(axis, keys)
        cums = np.stack([self._lines[(axis, k)][reach + si] for k, si in zip(keys, s)])
        out = np.einsum("bij,bj->bi", cums, vecs)
        # one extra step covers the off-station remainder
        starts = pts.copy()
        starts[:, axis] = base + s * h
        for j in range(axis + 1, pts.shape[1]):
            starts[:, j] = self.base_point[j]
        live = np.abs(rem) > 0.0
        if live.any():
            mats = self._segment_matrices(starts[live], axis, rem[live])
            out[live] = np.einsum("bij,bj->bi", mats, out[live])
        return out

    def values(self, points, patch=None, tols=None):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        b = pts.shape[0]
        m = self.patch.m
        if self.patch.ambient.flat:
            return np.broadcast_to(self.vector, (b, m)).copy()
        vecs = np.broadcast_to(self.vector, (b, m)).copy()
        for axis in range(self.patch.n):
            vecs = self._leg_transport(axis, pts, vecs)
        return vecs

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "base_point": [float(v) for v in self.base_point],
            "vector": [float(v) for v in self.vector],
        }


@dataclass(frozen=True)
class ObstructionReport:
    """Outcome of probing a patch for holonomy obstructions."""

    ok: bool
    max_deviation: float
    worst_loop: str
    n_loops: int
    note: str
    per_loop: tuple

    def as_dict(self) -> dict:
        return {
            "ok": bool(self.ok),
            "max_deviation": float(self.max_deviation),
            "worst_loop": self.worst_loop,
            "n_loops": self.n_loops,
            "note": self.note,
            "per_loop": [
                {"label": lbl, "deviation": float(dev)} for lbl, dev in self.per_loop
            ],
        }


def construct_parallel_field(patch: SubmanifoldPatch, base_point=None, vector=None,
                             *, probe_steps: int = 1024, levels=(1, 2, 3),
                             n_random: int = 20, seed: int = 0,
                             tols: Tolerances = DEFAULT_TOLS):
    """Best-effort parallel extension of a seed vector over the patch.

    Returns the transported field together with an obstruction report:
    each probe loop transports the field's value at the loop base all
    the way around, and the deviation from returning unchanged is
    recorded.  A clean report certifies flatness of the connection only
    at the probe resolution, which the note says verbatim.
    """
    box = patch.domain
    if base_point is None:
        base_point = 0.5 * (np.asarray(box.lo, float) + np.asarray(box.hi, float))
    base_point = np.asarray(base_point, dtype=float)
    if vector is None:
        x0 = patch.chart.eval_values(base_point[None, :])[0]
        vector = ambient_tangent_basis(patch.ambient, x0[None, :], tols)[0][:, 0]
    vector = np.asarray(vector, dtype=float)
    fld = TransportField(patch, base_point, vector, tols=tols)
    loops = probe_loops(patch, levels=levels, n_random=n_random, seed=seed)
    per = []
    if loops:
        # batch the field values at all loop bases so line caches build once
        bases = np.array([loop.start for loop in loops])
        y_bases = fld.values(bases, patch=patch, tols=tols)
        for loop, y0 in zip(loops, y_bases):
            hol = holonomy_loop(patch, loop, steps=probe_steps, tols=tols)
            dev = float(np.linalg.norm(hol.ambient_matrix @ y0 - y0))
            per.append((loop.label, dev))
    if per:
        worst = max(range(len(per)), key=lambda i: per[i][1])
        max_dev, worst_label = per[worst][1], per[worst][0]
    else:
        max_dev, worst_label = 0.0, ""
    ok = max_dev <= tols.holonomy_tol
    note = OBSTRUCTION_CLEAR_NOTE if ok else (
        f"holonomy moves the field by {max_dev:.3e} around loop {worst_label}"
    )
    report = ObstructionReport(
        ok=ok,
        max_deviation=max_dev,
        worst_loop=worst_label,
        n_loops=len(per),
        note=note,
        per_loop=tuple(per),
    )
    return fld, report


def parallelity_residual(patch: SubmanifoldPatch, field, resolution: int = 9,
                         tols: Tolerances = DEFAULT_TOLS):
    """Max over a grid of |tangential dY/du_i| / |Y|; (value, argmax)."""
    grid = patch.domain.grid(resolution)
    y = field.values(grid, patch=patch, tols=tols)
    jac = field.param_jacobian(grid, patch=patch, tols=tols)
    x = patch.chart.eval_values(grid)
    basis = ambient_tangent_basis(patch.ambient, x, tols)
    comp = np.einsum("bmd,bmi->bdi", basis, jac)
    per_axis = np.linalg.norm(comp, axis=1)  # (B, n)
    rel = per_axis.max(axis=1) / np.maximum(np.linalg.norm(y, axis=1), 1e-300)
    i = int(np.argmax(rel))
    return float(rel[i]), tuple(grid[i])


def parallel_normal_frame_tgs_check(patch: SubmanifoldPatch, resolution: int = 7,
                                    tols: Tolerances = DEFAULT_TOLS):
    """Equivalence check: the normal frame transported from a base point
    stays normal to the patch exactly when the patch is totally geodesic."""
    box = patch.domain
    base = 0.5 * (np.asarray(box.lo, float) + np.asarray(box.hi, float))
    fb = frame_at(patch, base, tols=tols)
    pre = []
    if fb.k == 0:
        pre.append(Precondition("normal-directions", ok=False, value=0.0, threshold=1.0))
        return build_report(
            "parallel-normal-frame-tgs", patch.name, hypotheses=(
                ResidualEntry("transported-frame-tangential-part", 0.0,
                              tols.tgs_tol, tols.ntgs_floor),
            ),
            conclusions=(
                ResidualEntry("second-form-residual", 0.0, tols.tgs_tol,
                              tols.ntgs_floor),
            ),
            preconditions=pre,
            details={"base_point": [float(v) for v in base]},
        )
    grid = box.grid(resolution)
    frames = frames_at(patch, grid, order=2, tols=tols)
    worst_overlap = 0.0
    worst_point = tuple(base)
    for a in range(fb.k):
        fld = TransportField(patch, base, fb.normal[:, a], tols=tols)
        yv = fld.values(grid)
        overlap = np.linalg.norm(
            np.einsum("bmi,bm->bi", frames.tangent, yv), axis=1
        ) / np.maximum(np.linalg.norm(yv, axis=1), 1e-300)
        i = int(np.argmax(overlap))
        if overlap[i] > worst_overlap:
            worst_overlap = float(overlap[i])
            worst_point = tuple(grid[i])
    tgs_value, tgs_point = tgs_scan(patch, grid, tols=tols)
    return build_report(
        "parallel-normal-frame-tgs",
        patch.name,
        hypotheses=(
            ResidualEntry("transported-frame-tangential-part", worst_overlap,
                          tols.tgs_tol, tols.ntgs_floor),
        ),
        conclusions=(
            ResidualEntry("second-form-residual", tgs_value, tols.tgs_tol,
                          tols.ntgs_floor),
        ),
        details={
            "base_point": [float(v) for v in base],
            "overlap_argmax": list(worst_point),
            "second_form_argmax": list(tgs_point),
        },
    )


# -- geodesics --------------------------------------------------------------------


@dataclass(frozen=True)
class GeodesicResult:
    params: np.ndarray  # (S+1, n)
    positions: np.ndarray  # (S+1, m)
    speed_drift: float
    tangential_residual: float  # defect as a geodesic of the patch
    ambient_residual: float  # defect as a geodesic of the ambient manifold
    steps: int
    t1: float

    def as_dict(self) -> dict:
        return {
            "steps": self.steps,
            "t1": float(self.t1),
            "start": [float(v) for v in self.params[0]],
            "end": [float(v) for v in self.params[-1]],
            "speed_drift": float(self.speed_drift),
            "tangential_residual": float(self.tangential_residual),
            "ambient_residual": float(self.ambient_residual),
        }


def track_defects(patch: SubmanifoldPatch, traj, xs, speeds, h: float,
                  tols: Tolerances = DEFAULT_TOLS):
    """Geodesic defects of recorded parameter tracks.

    ``traj`` is (S+1, G, n) in patch parameters, ``xs`` (S+1, G, m) the
    same track in the ambient space, ``speeds`` (S+1, G), ``h`` the time
    step.  The track is differentiated twice by Richardson-extrapolated
    second differences and the acceleration is projected onto the patch
    tangent (patch-geodesic defect) and onto the ambient tangent
    (ambient-geodesic defect), both relative to the squared speed.
    Returns per-track maxima, NaN when the track is too short.
    """
    steps = traj.shape[0] - 1
    g_count, n = traj.shape[1], traj.shape[2]
    m = xs.shape[2]
    kk = 8
    if steps < 8 * kk:
        return np.full(g_count, np.nan), np.full(g_count, np.nan)

    def second_diff(lag):
        num = xs[2 * lag:] - 2.0 * xs[lag:-lag] + xs[:-2 * lag]
        return num / (lag * h) ** 2

    d_fine = second_diff(kk)[kk:-kk]
    d_coarse = second_diff(2 * kk)
    acc_est = (4.0 * d_fine - d_coarse) / 3.0  # (S+1-4k, G, m)
    mid_params = traj[2 * kk:-2 * kk].reshape(-1, n)
    mid_frames = frames_at(patch, mid_params, order=1, tols=tols)
    acc_flat = acc_est.reshape(-1, m)
    sp2 = np.maximum(speeds[2 * kk:-2 * kk].reshape(-1) ** 2, 1e-300)
    tan_res = (
        np.linalg.norm(np.einsum("bmi,bm->bi", mid_frames.tangent, acc_flat), axis=1)
        / sp2
    ).reshape(-1, g_count)
    amb_res = (
        np.linalg.norm(np.einsum("bmd,bm->bd", mid_frames.ambient, acc_flat), axis=1)
        / sp2
    ).reshape(-1, g_count)
    return tan_res.max(axis=0), amb_res.max(axis=0)


def geodesic_traces(patch: SubmanifoldPatch, starts, velocities, t1: float = 1.0,
                    steps: int = DEFAULT_STEPS, tols: Tolerances = DEFAULT_TOLS):
    """Integrate several patch geodesics at once; returns one result each.

    The residuals are independent of the integrator: the recorded track
    is differentiated twice by Richardson-extrapolated second
    differences, and the acceleration is projected onto the patch
    tangent (patch-geodesic defect) and onto the ambient tangent
    (ambient-geodesic defect), both relative to the squared speed.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
    g_count, n = starts.shape
    h = t1 / steps
    u = starts.copy()
    v = velocities.copy()
    traj = np.empty((steps + 1, g_count, n))
    vels = np.empty((steps + 1, g_count, n))
    traj[0], vels[0] = u, v

    def acc(uu, vv):
        gam = christoffels(patch, uu)
        return -np.einsum("gkij,gi,gj->gk", gam, vv, vv)

    for s in range(steps):
        k1u, k1v = v, acc(u, v)
        u2 = u + 0.5 * h * k1u
        k2u = v + 0.5 * h * k1v
        k2v = acc(u2, k2u)
        u3 = u + 0.5 * h * k2u
        k3u = v + 0.5 * h * k2v
        k3v = acc(u3, k3u)
        u4 = u + h * k3u
        k4u = v + h * k3v
        k4v = acc(u4, k4u)
        u = u + (h / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        inside = patch.domain.contains(u, pad=1e-12)
        if not inside.all():
            bad = int(np.argmin(inside))
            raise GeometryError(
                f"geodesic left the chart domain at t={(s + 1) * h:.6f}", u[bad]
            )
        traj[s + 1], vels[s + 1] = u, v

    flat_pts = traj.reshape(-1, n)
    jets = patch.chart.eval_jets(flat_pts, order=1)
    m = jets.value.shape[1]
    xs = jets.value.reshape(steps + 1, g_count, m)
    metric = np.einsum("bmi,bmj->bij", jets.jac, jets.jac)
    vflat = vels.reshape(-1, n)
    speeds = np.sqrt(
        np.einsum("bi,bij,bj->b", vflat, metric, vflat)
    ).reshape(steps + 1, g_count)
    speed_drift = np.abs(speeds - speeds[0]).max(axis=0)

    tangential, ambient = track_defects(patch, traj, xs, speeds, h, tols=tols)

    results = []
    for g in range(g_count):
        results.append(
            GeodesicResult(
                params=traj[:, g, :],
                positions=xs[:, g, :],
                speed_drift=float(speed_drift[g]),
                tangential_residual=float(tangential[g]),
                ambient_residual=float(ambient[g]),
                steps=steps,
                t1=float(t1),
            )
        )
    return results


def geodesic_trace(patch: SubmanifoldPatch, start, velocity, t1: float = 1.0,
                   steps: int = DEFAULT_STEPS,
                   tols: Tolerances = DEFAULT_TOLS) -> GeodesicResult:
    return geodesic_traces(patch, [start], [velocity], t1=t1, steps=steps, tols=tols)[0]
