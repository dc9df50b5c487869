"""Zero curves of the Judd determinant and the tail limit in the (g, delta) plane.

For a fixed level index n the exceptional eigenvalue x = n exists wherever
either J_n(g, delta) = det W_0^{n-1} or the tail limit F_n(g, delta) vanishes.
This module samples those fields on a rectangular grid, extracts their zero
sets by marching squares (each edge crossing refined by bisection on the
field itself), links the segments into polylines and sorts the tail branches
into closed loops and open lines.

Both fields are even in g and in delta.  A branch whose two ends lie on a
region edge that coincides with g = 0 or delta = 0 is therefore the visible
half of a closed curve and is reported as closed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .recurrence import SolverOptions, finite_determinant_array, tail_values

__all__ = [
    "FieldKind",
    "GridRegion",
    "FieldGrid",
    "Polyline",
    "ZeroSet",
    "CurvePointSet",
    "AxisIntercept",
    "default_region",
    "field_function",
    "sample_function",
    "sample_field",
    "extract_zero_set",
    "classify_branches",
    "axis_intercepts",
    "refine_on_line",
]


class FieldKind(str, Enum):
    JUDD = "judd"
    TAIL = "tail"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class GridRegion:
    g_min: float
    g_max: float
    delta_min: float
    delta_max: float
    nx: int = 400
    ny: int = 400

    def __post_init__(self):
        if not self.g_min < self.g_max:
            raise ValueError("need g_min < g_max")
        if not self.delta_min < self.delta_max:
            raise ValueError("need delta_min < delta_max")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("need at least 2 nodes per axis")

    @property
    def g_axis(self) -> np.ndarray:
        return np.linspace(self.g_min, self.g_max, self.nx)

    @property
    def delta_axis(self) -> np.ndarray:
        return np.linspace(self.delta_min, self.delta_max, self.ny)

    @property
    def cell(self) -> tuple[float, float]:
        return ((self.g_max - self.g_min) / (self.nx - 1), (self.delta_max - self.delta_min) / (self.ny - 1))


def default_region(n: int, nx: int = 400, ny: int = 400) -> GridRegion:
    return GridRegion(0.0, 1.2, -n - 3.0, n + 3.0, nx, ny)


# A field maps broadcast (g, delta) arrays to (values, ok) arrays.
FieldFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class FieldGrid:
    """Sampled field; ``values[i, j]`` sits at (g_axis[i], delta_axis[j])."""

    region: GridRegion
    values: np.ndarray
    mask: np.ndarray  # True where the node is unusable
    field: FieldFn | None = None
    n: int | None = None
    kind: FieldKind | None = None

    @property
    def scale(self) -> float:
        good = np.abs(self.values[~self.mask])
        return float(np.median(good)) if good.size else 0.0


def field_function(n: int, kind: FieldKind | str, opts: SolverOptions | None = None) -> FieldFn:
    kind = FieldKind(kind)
    if kind is FieldKind.JUDD:
        def judd(g, delta):
            v = finite_determinant_array(0, n - 1, float(n), g, delta)
            return v, np.ones(v.shape, dtype=bool)
        return judd

    def tail(g, delta):
        lim = tail_values(n, g, delta, opts)
        return lim.value, lim.converged
    return tail


def sample_function(f: FieldFn, region: GridRegion, threads: int = 1, **meta) -> FieldGrid:
    G, D = np.meshgrid(region.g_axis, region.delta_axis, indexing="ij")
    if threads > 1 and region.nx > 1:
        chunks = np.array_split(np.arange(region.nx), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda rows: f(G[rows], D[rows]), chunks))
        values = np.concatenate([p[0] for p in parts])
        ok = np.concatenate([p[1] for p in parts])
    else:
        values, ok = f(G, D)
    mask = ~(np.asarray(ok, dtype=bool) & np.isfinite(values))
    return FieldGrid(region, np.asarray(values, dtype=float), mask, f, **meta)


def sample_field(
    n: int,
    region: GridRegion,
    kind: FieldKind | str,
    opts: SolverOptions | None = None,
    threads: int = 1,
) -> FieldGrid:
    """Judd determinant or tail limit at x = n on every grid node.

    Nodes where the tail limit did not converge are masked.
    """
    kind = FieldKind(kind)
    return sample_function(field_function(n, kind, opts), region, threads, n=n, kind=kind)


# --------------------------------------------------------------------------
# marching squares


@dataclass
class Polyline:
    points: np.ndarray  # (k, 2) columns g, delta
    cycle: bool


@dataclass
class ZeroSet:
    polylines: list
    region: GridRegion
    saddle_cells: int = 0
    max_residual: float = 0.0
    scale: float = 0.0


def _refine(grid: FieldGrid, p0, p1, s0, iterations=52):
    """Bisect each edge p0 -> p1 on the field; s0 is the sign class at p0."""
    lo, hi = p0.copy(), p1.copy()
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        v, _ = grid.field(mid[:, 0], mid[:, 1])
        same = (v >= 0) == s0
        lo = np.where(same[:, None], mid, lo)
        hi = np.where(same[:, None], hi, mid)
        if np.all(np.abs(hi - lo) <= 1e-15 * (1.0 + np.abs(lo))):
            break
    # keep whichever end evaluates closer to zero
    v_lo, _ = grid.field(lo[:, 0], lo[:, 1])
    v_hi, _ = grid.field(hi[:, 0], hi[:, 1])
    return np.where((np.abs(v_lo) <= np.abs(v_hi))[:, None], lo, hi)


def extract_zero_set(grid: FieldGrid) -> ZeroSet:
    """Zero level set of a sampled field as linked polylines.

    Nodes with value >= 0 count as positive.  Ambiguous (saddle) cells are
    split according to the sign of the field at the cell centre.
    """
    reg = grid.region
    nx, ny = reg.nx, reg.ny
    gs, ds = reg.g_axis, reg.delta_axis
    V, bad = grid.values, grid.mask
    pos = V >= 0

    # edge ids: horizontal (i,j)-(i+1,j) first, then vertical (i,j)-(i,j+1)
    n_h = (nx - 1) * ny
    h_cross = (pos[:-1, :] != pos[1:, :]) & ~bad[:-1, :] & ~bad[1:, :]
    v_cross = (pos[:, :-1] != pos[:, 1:]) & ~bad[:, :-1] & ~bad[:, 1:]

    def hid(i, j):
        return i * ny + j

    def vid(i, j):
        return n_h + i * (ny - 1) + j

    hi_, hj_ = np.nonzero(h_cross)
    vi_, vj_ = np.nonzero(v_cross)
    p0 = np.concatenate([np.stack([gs[hi_], ds[hj_]], 1), np.stack([gs[vi_], ds[vj_]], 1)])
    p1 = np.concatenate([np.stack([gs[hi_ + 1], ds[hj_]], 1), np.stack([gs[vi_], ds[vj_ + 1]], 1)])
    s0 = np.concatenate([pos[hi_, hj_], pos[vi_, vj_]])
    ids = np.concatenate([hid(hi_, hj_), vid(vi_, vj_)])
    if ids.size == 0:
        return ZeroSet([], reg, 0, 0.0, grid.scale)

    if grid.field is None:
        v0 = np.concatenate([V[hi_, hj_], V[vi_, vj_]])
        v1 = np.concatenate([V[hi_ + 1, hj_], V[vi_, vj_ + 1]])
        w = v0 / (v0 - v1)
        pts = p0 + w[:, None] * (p1 - p0)
        residual = 0.0
    else:
        pts = _refine(grid, p0, p1, s0)
        fv, _ = grid.field(pts[:, 0], pts[:, 1])
        residual = float(np.max(np.abs(fv)))
    where = {int(k): pts[i] for i, k in enumerate(ids)}

    # cells: corners c0=(i,j) c1=(i+1,j) c2=(i+1,j+1) c3=(i,j+1)
    cell_bad = bad[:-1, :-1] | bad[1:, :-1] | bad[1:, 1:] | bad[:-1, 1:]
    e0 = h_cross[:, :-1]
    e1 = v_cross[1:, :]
    e2 = h_cross[:, 1:]
    e3 = v_cross[:-1, :]
    count = e0.astype(int) + e1 + e2 + e3
    ci, cj = np.nonzero((count > 0) & ~cell_bad)

    adj: dict[int, list[int]] = {}

    def link(a, b):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    saddles = 0
    for i, j in zip(ci.tolist(), cj.tolist()):
        edges = [hid(i, j), vid(i + 1, j), hid(i, j + 1), vid(i, j)]
        crossing = [e0[i, j], e1[i, j], e2[i, j], e3[i, j]]
        live = [e for e, c in zip(edges, crossing) if c]
        if len(live) == 2:
            link(*live)
            continue
        saddles += 1
        centre = np.array([gs[i] + 0.5 * (gs[i + 1] - gs[i])]), np.array([ds[j] + 0.5 * (ds[j + 1] - ds[j])])
        if grid.field is not None:
            vc = float(grid.field(*centre)[0][0])
        else:
            vc = float(V[i, j] + V[i + 1, j] + V[i + 1, j + 1] + V[i, j + 1]) / 4
        if (vc >= 0) == pos[i, j]:
            # c0 and c2 joined through the centre: cut off c1 and c3
            link(edges[0], edges[1])
            link(edges[2], edges[3])
        else:
            link(edges[3], edges[0])
            link(edges[1], edges[2])

    polylines = []
    seen: set[int] = set()

    def walk(start):
        chain = [start]
        seen.add(start)
        prev, cur = None, start
        while True:
            nxt = [e for e in adj[cur] if e != prev and e not in seen]
            if not nxt:
                closes = len(chain) > 2 and start in adj[cur] and prev is not None
                return chain, closes
            prev, cur = cur, nxt[0]
            chain.append(cur)
            seen.add(cur)

    for e in sorted(adj):
        if e not in seen and len(adj[e]) == 1:
            chain, _ = walk(e)
            polylines.append(Polyline(np.array([where[k] for k in chain]), False))
    for e in sorted(adj):
        if e not in seen:
            chain, closes = walk(e)
            pts_ = [where[k] for k in chain]
            if closes:
                pts_.append(pts_[0])
            polylines.append(Polyline(np.array(pts_), closes))
    return ZeroSet(polylines, reg, saddles, residual, grid.scale)


# --------------------------------------------------------------------------
# branch classification


@dataclass
class CurvePointSet:
    n: int
    field_kind: FieldKind
    branch_id: int
    points: np.ndarray
    closed: bool
    on_judd: bool
    max_judd: float = math.nan
    ends: tuple = field(default_factory=tuple)

    @property
    def consistent(self) -> bool:
        """Loops should lie on the Judd curve and lines should not."""
        return self.closed == self.on_judd


def _edge_tags(p, region, eps):
    tags = set()
    g, d = p
    if abs(g - region.g_min) <= eps[0]:
        tags.add("g_min")
    if abs(g - region.g_max) <= eps[0]:
        tags.add("g_max")
    if abs(d - region.delta_min) <= eps[1]:
        tags.add("delta_min")
    if abs(d - region.delta_max) <= eps[1]:
        tags.add("delta_max")
    return tags


def _mirror_tags(region):
    tags = set()
    if region.g_min == 0.0:
        tags.add("g_min")
    if region.g_max == 0.0:
        tags.add("g_max")
    if region.delta_min == 0.0:
        tags.add("delta_min")
    if region.delta_max == 0.0:
        tags.add("delta_max")
    return tags


def classify_branches(
    zero_set: ZeroSet,
    n: int,
    field_kind: FieldKind | str = FieldKind.TAIL,
    judd_grid: FieldGrid | None = None,
    tol_judd: float = 1e-6,
) -> list[CurvePointSet]:
    """Label each polyline closed/open and, for tail branches, on/off the Judd curve.

    Closed: the walk returned to its start, or both ends sit on a symmetry
    edge (g = 0 or delta = 0) of the region.  Any end on another edge of the
    region makes the branch open.  on_judd: |J_n| <= tol_judd * scale at
    every point, with scale the median |J_n| over ``judd_grid``.
    """
    field_kind = FieldKind(field_kind)
    region = zero_set.region
    eps = tuple(1e-9 * c for c in region.cell)
    mirror = _mirror_tags(region)
    judd_fn = field_function(n, FieldKind.JUDD)
    scale = judd_grid.scale if judd_grid is not None else 1.0

    out = []
    for k, line in enumerate(zero_set.polylines):
        pts = line.points
        if line.cycle:
            closed, ends = True, ()
        else:
            ends = (_edge_tags(pts[0], region, eps), _edge_tags(pts[-1], region, eps))
            closed = all(t and t <= mirror for t in ends)
        on_judd = False
        max_j = math.nan
        if field_kind is FieldKind.TAIL:
            j, _ = judd_fn(pts[:, 0], pts[:, 1])
            max_j = float(np.max(np.abs(j)))
            on_judd = bool(max_j <= tol_judd * scale)
        out.append(CurvePointSet(n, field_kind, k, pts, closed, on_judd, max_j, ends))
    return out


@dataclass(frozen=True)
class AxisIntercept:
    branch_id: int
    delta: float
    closed: bool
    on_judd: bool


def axis_intercepts(curves, tol: float = 1e-12) -> list[AxisIntercept]:
    """Where each branch meets g = 0, by linear interpolation between the two
    polyline points that straddle (or touch) the axis."""
    out = []
    for c in curves:
        pts = c.points
        found = []
        for (g0, d0), (g1, d1) in zip(pts[:-1], pts[1:]):
            if abs(g0) <= tol:
                found.append(d0)
            elif g0 * g1 < 0:
                found.append(d0 + (d1 - d0) * g0 / (g0 - g1))
        if len(pts) and abs(pts[-1][0]) <= tol and not (c.closed and len(pts) > 1 and np.allclose(pts[0], pts[-1])):
            found.append(pts[-1][1])
        for d in sorted(set(float(v) for v in found)):
            out.append(AxisIntercept(c.branch_id, d, c.closed, c.on_judd))
    return out


def refine_on_line(
    n: int,
    g: float,
    delta_lo: float,
    delta_hi: float,
    kind: FieldKind | str = FieldKind.TAIL,
    opts: SolverOptions | None = None,
    width: float = 1e-13,
) -> float:
    """Bisect the field along delta at fixed g to locate a curve point."""
    f = field_function(n, kind, opts)

    def val(d):
        return float(f(np.array([g]), np.array([d]))[0][0])

    lo, hi = float(delta_lo), float(delta_hi)
    s_lo = val(lo) >= 0
    if (val(hi) >= 0) == s_lo:
        raise ValueError("field does not change sign on the given delta interval")
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if (val(mid) >= 0) == s_lo:
            lo = mid
        else:
            hi = mid
    return lo if abs(val(lo)) <= abs(val(hi)) else hi
