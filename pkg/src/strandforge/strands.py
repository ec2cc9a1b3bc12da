"""Strand-level hair: representation, voxelization, and field-guided growth.

A strand is an ordered polyline whose first vertex is the upstream (scalp)
end. Growth runs in two phases: phase 1 marches from sampled scalp roots
through the vector field, phase 2 seeds leftover valid cells, grows both
ways, and tries to adopt a similar rooted strand as a guide so the candidate
can be extended down to the scalp.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bust import RootSampling, world_box_center
from .fields import VALID_CELL_SQNORM, VectorField3D, ViewPose

__all__ = [
    "Strand", "StrandSet", "GrowthParams",
    "voxelize_strands", "grow_hair", "rotate_strands", "strand_curvature",
]

# sampling density used when rasterizing segments into grid cells
VOXELIZE_SUBSTEP_FRACTION = 0.1


@dataclass(frozen=True)
class Strand:
    vertices: np.ndarray  # (N, 3)
    rooted: bool = False
    color: tuple[float, float, float] | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 2:
            raise ValueError(f"strand needs >= 2 3D vertices, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("strand vertices must be finite")
        if np.any(np.all(v[1:] == v[:-1], axis=1)):
            raise ValueError("consecutive strand vertices must be distinct")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return len(self.vertices)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices[:-1], self.vertices[1:]


@dataclass(frozen=True)
class StrandSet:
    strands: list[Strand]
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.strands)

    def vertex_count(self) -> int:
        return sum(len(s) for s in self.strands)

    def all_vertices(self) -> np.ndarray:
        if not self.strands:
            return np.zeros((0, 3))
        return np.vstack([s.vertices for s in self.strands])


@dataclass(frozen=True)
class GrowthParams:
    """Knobs of the growing algorithm; defaults follow the reference setup."""

    stop_angle_deg: float = 150.0   # terminate when cell direction turns further than this
    blend_angle_deg: float = 60.0   # above this, average the new and previous direction
    require_rooted: bool = True
    seed: int = 0
    phase2_seed_count: int = 400
    curvature_tol: float = 0.1      # radians, per-vertex match tolerance
    match_fraction: float = 1.0 / 3.0
    root_connect_radius_cells: float = 2.0
    seed_search_cells: int = 1      # radius used to find a valid start cell around a root
    max_steps: int | None = None    # default: 4 x box diagonal in steps


def strand_curvature(strand: Strand) -> np.ndarray:
    """Discrete turning angle (radians) per vertex; endpoints copy inward."""
    v = strand.vertices
    if len(v) < 3:
        raise ValueError("curvature needs >= 3 vertices")
    d = v[1:] - v[:-1]
    n = np.linalg.norm(d, axis=1)
    d = d / n[:, None]
    dots = np.clip(np.einsum("ij,ij->i", d[:-1], d[1:]), -1.0, 1.0)
    inner = np.arccos(dots)
    out = np.empty(len(v))
    out[1:-1] = inner
    out[0] = inner[0]
    out[-1] = inner[-1]
    return out


def rotate_strands(strands: StrandSet, pose: ViewPose, center: np.ndarray | None = None) -> StrandSet:
    """Rigid rotation of every strand about the box center."""
    r = pose.matrix()
    return rotate_strands_matrix(strands, r, center)


def rotate_strands_matrix(strands: StrandSet, r: np.ndarray, center: np.ndarray | None = None) -> StrandSet:
    c = world_box_center() if center is None else np.asarray(center, dtype=np.float64)
    out = [replace(s, vertices=(s.vertices - c) @ r.T + c) for s in strands.strands]
    return StrandSet(out, dict(strands.provenance))


# ---------------------------------------------------------------------------
# Voxelization

def _segment_cells(p0: np.ndarray, p1: np.ndarray, box_min, cell, grid_shape, substep: float):
    """Cells crossed by one segment, sampled at `substep` world units.

    Samples are evenly spaced over [0, L] inclusive of both endpoints with
    spacing <= substep; points outside the grid are dropped. A straight
    segment never re-enters a cell, so consecutive de-duplication yields the
    exact crossed-cell set.
    """
    seg = p1 - p0
    length = float(np.linalg.norm(seg))
    nsamp = int(np.ceil(length / substep)) + 1
    t = np.linspace(0.0, 1.0, nsamp)
    pts = p0[None, :] + t[:, None] * seg[None, :]
    idx = np.floor((pts - box_min) / cell).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < np.asarray(grid_shape)), axis=1)
    idx = idx[ok]
    if len(idx) == 0:
        return idx
    keep = np.ones(len(idx), dtype=bool)
    keep[1:] = np.any(idx[1:] != idx[:-1], axis=1)
    return idx[keep]


def voxelize_strands(strands: StrandSet, grid_shape, box_min, box_max) -> VectorField3D:
    """Average unit segment tangents into the grid cells each segment crosses.

    Every segment contributes its unit tangent once to every cell it passes
    through (sampled at one tenth of the smallest cell edge); a cell's value
    is the arithmetic mean of the tangents collected there.
    """
    box_min = np.asarray(box_min, dtype=np.float64)
    box_max = np.asarray(box_max, dtype=np.float64)
    if not np.all(box_max > box_min):
        raise ValueError("world box must be non-degenerate")
    if not strands.strands:
        raise ValueError("voxelize needs at least one strand")
    nx, ny, nz = (int(n) for n in grid_shape)
    cell = (box_max - box_min) / np.array([nx, ny, nz], dtype=np.float64)
    substep = VOXELIZE_SUBSTEP_FRACTION * float(cell.min())

    p0s, p1s = [], []
    for s in strands.strands:
        a, b = s.segments()
        p0s.append(a)
        p1s.append(b)
    p0 = np.vstack(p0s)
    p1 = np.vstack(p1s)
    seg = p1 - p0
    lengths = np.sqrt(seg[:, 0] ** 2 + seg[:, 1] ** 2 + seg[:, 2] ** 2)
    tangents = seg / lengths[:, None]
    nsamp = np.ceil(lengths / substep).astype(np.int64) + 1

    shape_arr = np.array([nx, ny, nz])
    flat_parts: list[np.ndarray] = []
    seg_parts: list[np.ndarray] = []
    # batch segments that share a sample count so the walk stays vectorized
    for n in np.unique(nsamp):
        sel = np.nonzero(nsamp == n)[0]
        t = np.linspace(0.0, 1.0, int(n))
        pts = p0[sel, None, :] + t[None, :, None] * seg[sel, None, :]  # (S, n, 3)
        idx = np.floor((pts - box_min) / cell).astype(np.int64)
        inb = np.all((idx >= 0) & (idx < shape_arr), axis=2)
        # de-duplicate consecutive samples that stayed in the same cell; a
        # straight segment cannot re-enter a cell, so this is the full set
        same = np.zeros_like(inb)
        same[:, 1:] = np.all(idx[:, 1:] == idx[:, :-1], axis=2) & inb[:, :-1]
        take = inb & ~same
        si, pi = np.nonzero(take)
        cells = idx[si, pi]
        flat_parts.append((cells[:, 0] * ny + cells[:, 1]) * nz + cells[:, 2])
        seg_parts.append(sel[si])
    flat = np.concatenate(flat_parts) if flat_parts else np.zeros(0, dtype=np.int64)
    seg_idx = np.concatenate(seg_parts) if seg_parts else np.zeros(0, dtype=np.int64)
    # accumulate in original segment order so per-cell float summation matches
    # a sequential walk bit for bit
    order = np.argsort(seg_idx, kind="stable")
    flat = flat[order]
    seg_idx = seg_idx[order]
    ncell = nx * ny * nz
    acc = np.stack(
        [np.bincount(flat, weights=tangents[seg_idx, c], minlength=ncell) for c in range(3)],
        axis=1,
    ).reshape(nx, ny, nz, 3)
    cnt = np.bincount(flat, minlength=ncell).astype(np.float64).reshape(nx, ny, nz)
    out = np.zeros_like(acc)
    hit = cnt > 0
    out[hit] = acc[hit] / cnt[hit][:, None]
    return VectorField3D(out, box_min, box_max)


# ---------------------------------------------------------------------------
# Growth

def _march(field_data, valid, box_min, cell, step, starts, start_dirs, params, reverse=False):
    """Vectorized field marching shared by both growth phases.

    Returns (verts, lengths): verts is (M, max_steps + 1, 3) with lengths[i]
    valid vertices per strand. `start_dirs` may hold NaN rows, which means
    "take the first direction from the field". When `reverse` is set, the
    field direction is negated (used for the upstream half of phase 2).
    """
    nx, ny, nz = valid.shape
    shape_arr = np.array([nx, ny, nz])
    m = len(starts)
    max_steps = params.max_steps
    if max_steps is None:
        diag = float(np.linalg.norm(cell * shape_arr))
        max_steps = int(np.ceil(4.0 * diag / step))
    verts = np.zeros((m, max_steps + 1, 3))
    verts[:, 0] = starts
    lengths = np.ones(m, dtype=np.int64)
    pos = starts.copy()
    prev = start_dirs.copy()
    active = np.ones(m, dtype=bool)
    cos_stop = np.cos(np.deg2rad(params.stop_angle_deg))
    cos_blend = np.cos(np.deg2rad(params.blend_angle_deg))
    sign = -1.0 if reverse else 1.0

    for _ in range(max_steps):
        if not active.any():
            break
        ai = np.nonzero(active)[0]
        idx = np.floor((pos[ai] - box_min) / cell).astype(np.int64)
        inb = np.all((idx >= 0) & (idx < shape_arr), axis=1)
        ok = ai[inb]
        idx = idx[inb]
        active[ai[~inb]] = False
        if len(ok) == 0:
            continue
        cell_ok = valid[idx[:, 0], idx[:, 1], idx[:, 2]]
        active[ok[~cell_ok]] = False
        ok = ok[cell_ok]
        idx = idx[cell_ok]
        if len(ok) == 0:
            continue
        v = field_data[idx[:, 0], idx[:, 1], idx[:, 2]] * sign
        d = v / np.linalg.norm(v, axis=1)[:, None]
        pd = prev[ok]
        have_prev = np.isfinite(pd[:, 0])
        cosang = np.einsum("ij,ij->i", d, np.where(have_prev[:, None], pd, d))
        # stop rule checks the raw cell direction before any smoothing
        stop = have_prev & (cosang < cos_stop)
        active[ok[stop]] = False
        keep = ~stop
        ok = ok[keep]
        if len(ok) == 0:
            continue
        d = d[keep]
        pd = pd[keep]
        have_prev = have_prev[keep]
        cosang = cosang[keep]
        blend = have_prev & (cosang < cos_blend)
        if blend.any():
            mixed = d[blend] + pd[blend]
            norm = np.linalg.norm(mixed, axis=1)
            norm[norm < 1e-12] = 1.0
            d[blend] = mixed / norm[:, None]
        new_pos = pos[ok] + d * step
        inside = np.all((new_pos >= box_min) & (new_pos <= box_min + cell * shape_arr), axis=1)
        active[ok[~inside]] = False
        ok = ok[inside]
        if len(ok) == 0:
            continue
        d = d[inside]
        new_pos = new_pos[inside]
        pos[ok] = new_pos
        prev[ok] = d
        verts[ok, lengths[ok]] = new_pos
        lengths[ok] += 1
    return verts, lengths


def _nearest_valid_dir(field_data, valid, idx, radius):
    """Direction of the closest valid cell within a Chebyshev radius, or None."""
    nx, ny, nz = valid.shape
    best = None
    best_d2 = None
    for dx in range(-radius, radius + 1):
        for dy in range(-radius, radius + 1):
            for dz in range(-radius, radius + 1):
                i, j, k = idx[0] + dx, idx[1] + dy, idx[2] + dz
                if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz and valid[i, j, k]:
                    d2 = dx * dx + dy * dy + dz * dz
                    if best is None or d2 < best_d2:
                        best, best_d2 = (i, j, k), d2
    if best is None:
        return None
    v = field_data[best]
    return v / np.linalg.norm(v)


def _strand_cells(vertices, box_min, cell, shape_arr):
    idx = np.floor((vertices - box_min) / cell).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < shape_arr), axis=1)
    return idx[ok]


def _longest_match_run(diff_ok: np.ndarray) -> np.ndarray:
    """Per row, the longest run of True values. diff_ok is (G, L)."""
    g, l = diff_ok.shape
    pos = np.arange(l)
    last_false = np.maximum.accumulate(np.where(~diff_ok, pos[None, :], -1), axis=1)
    runs = (pos[None, :] - last_false) * diff_ok
    return runs.max(axis=1) if l else np.zeros(g, dtype=np.int64)


def grow_hair(field: VectorField3D, roots: RootSampling, params: GrowthParams | None = None) -> StrandSet:
    """Two-phase strand growth through a 3D orientation field."""
    params = params or GrowthParams()
    if len(roots) == 0:
        raise ValueError("grow_hair needs at least one root")
    valid = field.valid_mask()
    if not valid.any():
        return StrandSet([], {"rooted_phase": 0, "seeded_phase": 0})
    box_min = field.box_min
    cell = field.cell_size()
    step = float(cell.min())
    shape_arr = np.array(field.shape)
    data = field.data

    # phase 1: march from every root
    starts = roots.points.copy()
    start_dirs = np.full((len(starts), 3), np.nan)
    idx0 = np.floor((starts - box_min) / cell).astype(np.int64)
    inb0 = np.all((idx0 >= 0) & (idx0 < shape_arr), axis=1)
    verts, lengths = _march(data, valid, box_min, cell, step, starts, start_dirs, params)

    # roots sitting in invalid cells but near valid ones: take one manual
    # step along the borrowed direction, then march from there
    dead = lengths < 2
    if dead.any() and params.seed_search_cells > 0:
        fix_idx = []
        fix_starts = []
        fix_dirs = []
        for i in np.nonzero(dead)[0]:
            if not inb0[i]:
                continue
            t = tuple(idx0[i])
            if valid[t]:
                continue
            d = _nearest_valid_dir(data, valid, t, params.seed_search_cells)
            if d is not None:
                fix_idx.append(i)
                fix_starts.append(roots.points[i] + d * step)
                fix_dirs.append(d)
        if fix_idx:
            fverts, flens = _march(
                data, valid, box_min, cell, step,
                np.array(fix_starts), np.array(fix_dirs), params,
            )
            for j, i in enumerate(fix_idx):
                n = flens[j]
                verts[i, 0] = roots.points[i]
                verts[i, 1:n + 1] = fverts[j, :n]
                lengths[i] = n + 1

    good: list[Strand] = []
    visited = np.zeros(field.shape, dtype=bool)
    for i in range(len(starts)):
        n = int(lengths[i])
        if n < 2:
            continue
        v = verts[i, :n]
        good.append(Strand(v, rooted=True))
        c = _strand_cells(v, box_min, cell, shape_arr)
        visited[c[:, 0], c[:, 1], c[:, 2]] = True

    # phase 2: seed valid cells nobody passed, grow both ways, then adopt a
    # similar rooted strand as guide to reach the scalp
    rng = np.random.default_rng(params.seed)
    free = np.argwhere(valid & ~visited)
    n_candidates = 0
    adopted: list[Strand] = []
    unrooted: list[Strand] = []
    if len(free) and params.phase2_seed_count > 0 and good:
        order = rng.permutation(len(free))
        seeds = []
        taken = visited.copy()
        for oi in order:
            c = free[oi]
            if taken[c[0], c[1], c[2]]:
                continue
            seeds.append(c)
            taken[c[0], c[1], c[2]] = True
            if len(seeds) >= params.phase2_seed_count:
                break
        if seeds:
            seeds = np.array(seeds)
            centers = box_min + (seeds + 0.5) * cell
            nan_dirs = np.full((len(seeds), 3), np.nan)
            fwd_v, fwd_n = _march(data, valid, box_min, cell, step, centers, nan_dirs, params)
            bwd_v, bwd_n = _march(data, valid, box_min, cell, step, centers, nan_dirs, params, reverse=True)
            cand_list = []
            for i in range(len(seeds)):
                back = bwd_v[i, 1:bwd_n[i]][::-1]
                fwd = fwd_v[i, :fwd_n[i]]
                v = np.vstack([back, fwd])
                if len(v) >= 2:
                    cand_list.append(v)
            n_candidates = len(cand_list)
            adopted, unrooted = _adopt_candidates(cand_list, good, roots, params, step, box_min, cell * shape_arr + box_min)

    strands = list(good) + adopted + ([] if params.require_rooted else unrooted)
    return StrandSet(strands, {"rooted_phase": len(good), "seeded_phase": len(adopted) + (0 if params.require_rooted else len(unrooted)),
                               "candidates": n_candidates})


def _adopt_candidates(cand_list, good, roots, params, step, box_lo, box_hi):
    """Match candidates to rooted strands by curvature; extend and connect."""
    adopted: list[Strand] = []
    unrooted: list[Strand] = []
    if not cand_list:
        return adopted, unrooted
    # curvature profiles aligned from the tip (downstream end)
    good_k = []
    for s in good:
        k = strand_curvature(s) if len(s) >= 3 else np.zeros(len(s))
        good_k.append(k[::-1])
    lmax = max(len(k) for k in good_k)
    kg = np.full((len(good), lmax), np.inf)
    for i, k in enumerate(good_k):
        kg[i, :len(k)] = k
    root_tree = roots.points
    connect_r = params.root_connect_radius_cells * step
    cos_stop = np.cos(np.deg2rad(params.stop_angle_deg))

    for v in cand_list:
        cand = Strand(v)
        if len(v) < 3:
            unrooted.append(cand)
            continue
        ki = strand_curvature(cand)[::-1]
        width = min(len(ki), lmax)
        ok = np.abs(kg[:, :width] - ki[None, :width]) <= params.curvature_tol
        runs = _longest_match_run(ok)
        j = int(np.argmax(runs))
        if runs[j] <= params.match_fraction * len(v):
            unrooted.append(cand)
            continue
        guide = good[j]
        extended = _extend_along_guide(v, guide.vertices, box_lo, box_hi, cos_stop)
        connected = _connect_to_root(extended, root_tree, connect_r, cos_stop)
        if connected is not None:
            adopted.append(Strand(connected, rooted=True))
        else:
            unrooted.append(Strand(extended) if len(extended) >= 2 else cand)
    return adopted, unrooted


def _extend_along_guide(cand: np.ndarray, guide: np.ndarray, box_lo, box_hi, cos_stop: float) -> np.ndarray:
    """Prepend the guide's below-correspondence segments to the candidate."""
    li, lj = len(cand), len(guide)
    extra = lj - li
    if extra <= 0:
        return cand
    # the junction turn must stay inside the growth stop angle
    jseg = guide[extra] - guide[extra - 1]
    cseg = cand[1] - cand[0]
    nj, nc = np.linalg.norm(jseg), np.linalg.norm(cseg)
    if nj > 0 and nc > 0 and np.dot(jseg / nj, cseg / nc) < cos_stop:
        return cand
    prepend = []
    cur = cand[0]
    for m in range(extra - 1, -1, -1):
        seg = guide[m + 1] - guide[m]
        nxt = cur - seg
        if np.any(nxt < box_lo) or np.any(nxt > box_hi):
            break
        prepend.append(nxt)
        cur = nxt
    if not prepend:
        return cand
    return np.vstack([np.array(prepend)[::-1], cand])


def _connect_to_root(v: np.ndarray, roots: np.ndarray, radius: float, cos_stop: float) -> np.ndarray | None:
    """Snap the upstream end to the nearest root if close and smooth enough."""
    d = np.linalg.norm(roots - v[0], axis=1)
    i = int(np.argmin(d))
    if d[i] < 1e-12:
        return v  # already starts at a root
    if d[i] > radius:
        return None
    first = v[0] - roots[i]
    nf = np.linalg.norm(first)
    if nf > 0 and len(v) >= 2:
        nxt = v[1] - v[0]
        nn = np.linalg.norm(nxt)
        if nn > 0 and np.dot(first / nf, nxt / nn) < cos_stop:
            return None
    return np.vstack([roots[i], v])
