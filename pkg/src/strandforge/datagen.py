"""Synthetic training data: rendering, sketch tracing, procedural hair.

Rendering uses the fixed orthographic front camera described in
:mod:`strandforge.fields`; the ``pose`` argument rotates the scene (strands
and bust together) about the box center before projection, which is how view
augmentation and multi-view ground truth are produced.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .bust import BustModel, WORLD_BOX_MAX, WORLD_BOX_MIN, default_bust, sample_roots, world_box_center
from .fields import DepthMap, MaskMap, OrientationMap2D, VectorField3D, ViewPose
from .strands import GrowthParams, Strand, StrandSet, grow_hair, rotate_strands, voxelize_strands

__all__ = [
    "RASTER_SAMPLE_STEP_PX",
    "TraceParams", "StyleParams", "DatagenConfig",
    "TrainingSampleSV", "TrainingSampleMV",
    "render_orientation_map", "render_mask", "render_bust_depth",
    "trace_sketch_map", "augment_pose_samples", "synth_procedural_hair",
    "make_sv_sample", "build_sv_dataset", "build_mv_dataset",
    "write_sv_sample", "read_sv_sample", "crop_field",
]

RASTER_SAMPLE_STEP_PX = 0.4  # line rasterization sampling step, in pixels


# ---------------------------------------------------------------------------
# Rasterization

def _project_xy(points: np.ndarray, width: int, height: int,
                box_min=WORLD_BOX_MIN, box_max=WORLD_BOX_MAX):
    """World points -> continuous (row, col) raster coordinates."""
    sx = (box_max[0] - box_min[0]) / width
    sy = (box_max[1] - box_min[1]) / height
    col = (points[..., 0] - box_min[0]) / sx - 0.5
    row = (box_max[1] - points[..., 1]) / sy - 0.5
    return row, col


def _raster_samples(strands: StrandSet, pose: ViewPose, width: int, height: int,
                    box_min=WORLD_BOX_MIN, box_max=WORLD_BOX_MAX):
    """Sample every (rotated) strand segment densely along its pixel span.

    Returns arrays (rows, cols, depth_z, tangent3d) for all in-frame samples.
    """
    rotated = strands if pose.is_identity() else rotate_strands(strands, pose)
    rows_out, cols_out, z_out, tan_out = [], [], [], []
    for s in rotated.strands:
        v = s.vertices
        r, c = _project_xy(v, width, height, box_min, box_max)
        seg = v[1:] - v[:-1]
        seg_len_px = np.hypot(np.diff(r), np.diff(c))
        nsamp = np.ceil(seg_len_px / RASTER_SAMPLE_STEP_PX).astype(np.int64) + 1
        tangent = seg / np.linalg.norm(seg, axis=1)[:, None]
        for n in np.unique(nsamp):
            sel = np.nonzero(nsamp == n)[0]
            t = np.linspace(0.0, 1.0, int(n))
            pr = r[sel, None] * (1 - t)[None, :] + r[sel + 1, None] * t[None, :]
            pc = c[sel, None] * (1 - t)[None, :] + c[sel + 1, None] * t[None, :]
            pz = v[sel, 2, None] * (1 - t)[None, :] + v[sel + 1, 2, None] * t[None, :]
            tt = np.repeat(tangent[sel][:, None, :], int(n), axis=1)
            rows_out.append(pr.ravel())
            cols_out.append(pc.ravel())
            z_out.append(pz.ravel())
            tan_out.append(tt.reshape(-1, 3))
    if not rows_out:
        empty = np.zeros(0)
        return empty.astype(int), empty.astype(int), empty, np.zeros((0, 3))
    rows = np.round(np.concatenate(rows_out)).astype(np.int64)
    cols = np.round(np.concatenate(cols_out)).astype(np.int64)
    z = np.concatenate(z_out)
    tan = np.vstack(tan_out)
    ok = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    return rows[ok], cols[ok], z[ok], tan[ok]


def render_orientation_map(strands: StrandSet, pose: ViewPose, resolution: int,
                           box_min=WORLD_BOX_MIN, box_max=WORLD_BOX_MAX) -> OrientationMap2D:
    """Project front-most strand tangents into a dense 2D orientation map.

    A depth test keeps, per pixel, the tangent of the sample with the
    smallest z (closest to the camera); samples whose tangent is parallel to
    the view axis carry no 2D direction and are skipped.
    """
    if not strands.strands:
        raise ValueError("render needs at least one strand")
    w = h = int(resolution)
    rows, cols, z, tan = _raster_samples(strands, pose, w, h, box_min, box_max)
    t2 = tan[:, :2]
    n2 = np.linalg.norm(t2, axis=1)
    keep = n2 > 1e-9
    rows, cols, z, t2, n2 = rows[keep], cols[keep], z[keep], t2[keep], n2[keep]
    t2 = t2 / n2[:, None]
    out = np.zeros((h, w, 2))
    # paint far-to-near so the nearest sample lands last
    order = np.argsort(-z, kind="stable")
    out[rows[order], cols[order]] = t2[order]
    return OrientationMap2D(out)


def render_mask(strands: StrandSet, pose: ViewPose, resolution: int,
                box_min=WORLD_BOX_MIN, box_max=WORLD_BOX_MAX) -> MaskMap:
    """Binary coverage of the same rasterization as the orientation render."""
    w = h = int(resolution)
    if not strands.strands:
        return MaskMap(np.zeros((h, w)))
    rows, cols, _, _ = _raster_samples(strands, pose, w, h, box_min, box_max)
    out = np.zeros((h, w), dtype=bool)
    out[rows, cols] = True
    return MaskMap(out)


def render_bust_depth(bust: BustModel, pose: ViewPose, resolution: int,
                      box_min=WORLD_BOX_MIN, box_max=WORLD_BOX_MAX) -> DepthMap:
    """Normalized first-hit depth of the bust under the front camera.

    Depth is ``(z - b_min.z) / (b_max.z - b_min.z)`` at the nearest surface
    hit; rays that miss the bust store exactly 0.
    """
    w = h = int(resolution)
    verts = bust.vertices
    if not pose.is_identity():
        c = world_box_center()
        verts = (verts - c) @ pose.matrix().T + c
    tris = verts[bust.faces]
    r0, c0 = _project_xy(tris, w, h, box_min, box_max)  # (F, 3) each
    zbuf = np.full((h, w), np.inf)

    cols_px = np.arange(w)
    rows_px = np.arange(h)
    for f in range(len(tris)):
        rmin = max(0, int(np.floor(r0[f].min())))
        rmax = min(h - 1, int(np.ceil(r0[f].max())))
        cmin = max(0, int(np.floor(c0[f].min())))
        cmax = min(w - 1, int(np.ceil(c0[f].max())))
        if rmin > rmax or cmin > cmax:
            continue
        rr, cc = np.meshgrid(rows_px[rmin:rmax + 1], cols_px[cmin:cmax + 1], indexing="ij")
        ax, ay = c0[f, 0], r0[f, 0]
        bx, by = c0[f, 1], r0[f, 1]
        cx, cy = c0[f, 2], r0[f, 2]
        d = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy)
        if abs(d) < 1e-12:
            continue
        l1 = ((by - cy) * (cc - cx) + (cx - bx) * (rr - cy)) / d
        l2 = ((cy - ay) * (cc - cx) + (ax - cx) * (rr - cy)) / d
        l3 = 1.0 - l1 - l2
        inside = (l1 >= 0) & (l2 >= 0) & (l3 >= 0)
        if not inside.any():
            continue
        z = l1 * tris[f, 0, 2] + l2 * tris[f, 1, 2] + l3 * tris[f, 2, 2]
        patch = zbuf[rmin:rmax + 1, cmin:cmax + 1]
        upd = inside & (z < patch)
        patch[upd] = z[upd]
    depth = np.zeros((h, w))
    hit = np.isfinite(zbuf)
    depth[hit] = (zbuf[hit] - box_min[2]) / (box_max[2] - box_min[2])
    return DepthMap(depth)


# ---------------------------------------------------------------------------
# Sketch tracing

@dataclass(frozen=True)
class TraceParams:
    """Controls for turning a dense orientation map into sparse sketch curves."""

    curve_count: int = 10
    seed: int = 0
    min_curve_px: int = 4
    agreement_threshold: float = 0.5  # dot product below this disqualifies a neighbor
    bucket_px: int = 8
    seed_pixels: tuple | None = None  # explicit (row, col) seeds override the RNG


_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def trace_sketch_map(dense: OrientationMap2D, params: TraceParams | None = None) -> OrientationMap2D:
    """Trace flow-following curves over a dense map to make a sparse sketch.

    Seeds are drawn round-robin from distinct 8x8 pixel buckets so curves
    spread uniformly. From a seed, the walk considers the 8 neighbors whose
    direction agrees with the current pixel AND whose step direction follows
    the current tangent (both dot products above the threshold), moving to
    the neighbor with the best step agreement; it stops when no candidate
    remains, e.g. at the map boundary or where the flow turns against the
    trace. Emitted pixels copy the dense map's vectors verbatim.
    """
    params = params or TraceParams()
    valid = dense.valid_mask()
    if not valid.any():
        raise ValueError("dense map has no valid pixels")
    h, w = valid.shape
    visited = np.zeros((h, w), dtype=bool)
    out = np.zeros((h, w, 2))

    if params.seed_pixels is not None:
        seed_iter = iter([tuple(p) for p in params.seed_pixels])
        next_seed = lambda: next(seed_iter, None)
    else:
        rng = np.random.default_rng(params.seed)
        buckets: dict[tuple[int, int], list[tuple[int, int]]] = {}
        ys, xs = np.nonzero(valid)
        for r, c in zip(ys.tolist(), xs.tolist()):
            buckets.setdefault((r // params.bucket_px, c // params.bucket_px), []).append((r, c))
        keys = sorted(buckets)
        for k in keys:
            order = rng.permutation(len(buckets[k]))
            buckets[k] = [buckets[k][i] for i in order]
        key_order = [keys[i] for i in rng.permutation(len(keys))]
        cursor = {k: 0 for k in keys}
        round_robin = {"i": 0}

        def next_seed():
            tried = 0
            while tried < len(key_order):
                k = key_order[round_robin["i"] % len(key_order)]
                round_robin["i"] += 1
                tried += 1
                lst = buckets[k]
                while cursor[k] < len(lst):
                    p = lst[cursor[k]]
                    cursor[k] += 1
                    if not visited[p]:
                        return p
            return None

    emitted = 0
    while emitted < params.curve_count:
        seed_px = next_seed()
        if seed_px is None:
            break
        r, c = seed_px
        if not valid[r, c] or visited[r, c]:
            continue
        curve = [(r, c)]
        visited[r, c] = True
        while True:
            p = dense.data[r, c]
            best = None
            best_score = -np.inf
            for dr, dc in _NEIGHBORS:
                rr, cc = r + dr, c + dc
                if rr < 0 or rr >= h or cc < 0 or cc >= w:
                    continue
                if not valid[rr, cc] or visited[rr, cc]:
                    continue
                if float(p @ dense.data[rr, cc]) <= params.agreement_threshold:
                    continue
                # step (dr, dc) in raster space is (dc, -dr) in world axes
                step = np.array([dc, -dr], dtype=np.float64)
                score = float(p @ step) / np.linalg.norm(step)
                if score <= params.agreement_threshold:
                    continue
                if score > best_score:
                    best_score = score
                    best = (rr, cc)
            if best is None:
                break
            r, c = best
            visited[r, c] = True
            curve.append(best)
        if len(curve) >= params.min_curve_px:
            for rr, cc in curve:
                out[rr, cc] = dense.data[rr, cc]
            emitted += 1
    return OrientationMap2D(out)


# ---------------------------------------------------------------------------
# Pose augmentation

def augment_pose_samples(count: int, seed: int = 0) -> list[ViewPose]:
    """Uniform augmentation poses: yaw in +-30 deg, pitch and roll in +-15."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        out.append(ViewPose(
            y_deg=float(rng.uniform(-30.0, 30.0)),
            x_deg=float(rng.uniform(-15.0, 15.0)),
            z_deg=float(rng.uniform(-15.0, 15.0)),
        ))
    return out


# ---------------------------------------------------------------------------
# Procedural hair

@dataclass(frozen=True)
class StyleParams:
    """Parametric hairstyle family used to stand in for captured hair models."""

    wave_amp: float = 0.0        # lateral sinusoid amplitude, world units
    wave_freq: float = 2.0       # periods per strand
    curl_amp: float = 0.0        # helix radius, world units
    curl_freq: float = 4.0       # helix turns per strand
    length_range: tuple[float, float] = (0.25, 0.45)
    droop_deg: float = 60.0      # how far directions bend toward straight down
    vertices: int = 32
    root_count: int = 300

    def validate(self) -> None:
        if self.wave_amp < 0 or self.curl_amp < 0:
            raise ValueError("wave and curl amplitudes must be >= 0")
        if self.wave_freq < 0 or self.curl_freq < 0:
            raise ValueError("wave and curl frequencies must be >= 0")
        lo, hi = self.length_range
        if not (0 < lo <= hi):
            raise ValueError("length range must be positive and ordered")
        if self.vertices < 4 or self.root_count < 1:
            raise ValueError("need >= 4 vertices and >= 1 root")


def _slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    dot = float(np.clip(a @ b, -1.0, 1.0))
    ang = np.arccos(dot)
    if ang < 1e-9:
        return a
    return (np.sin((1 - t) * ang) * a + np.sin(t * ang) * b) / np.sin(ang)


def synth_procedural_hair(style: StyleParams, seed: int = 0,
                          bust: BustModel | None = None) -> StrandSet:
    """Grow a deterministic parametric hairstyle from scalp roots.

    Each strand follows a smooth base curve (outward from the scalp, bending
    toward straight down by ``droop_deg``) plus a lateral wave sinusoid and a
    helical curl, then is clipped to the world box and pushed out of the head
    sphere.
    """
    style.validate()
    bust = bust or default_bust()
    roots = sample_roots(bust, count=style.root_count, seed=seed)
    rng = np.random.default_rng(seed + 1)
    down = np.array([0.0, -1.0, 0.0])
    from .bust import HEAD_CENTER, HEAD_RADIUS

    strands = []
    for p0, n0 in zip(roots.points, roots.normals):
        length = float(rng.uniform(*style.length_range))
        nv = style.vertices
        s_vals = np.linspace(0.0, length, nv)
        step = s_vals[1] - s_vals[0]
        d0 = n0 / np.linalg.norm(n0)
        droop = np.deg2rad(style.droop_deg)
        # base curve: integrate the slerped direction
        dirs = np.empty((nv - 1, 3))
        total_ang = np.arccos(np.clip(d0 @ down, -1, 1))
        bend = min(droop / max(total_ang, 1e-9), 1.0)
        for i in range(nv - 1):
            t = (i / max(nv - 2, 1)) * bend
            dirs[i] = _slerp(d0, down, t)
        base = np.vstack([p0, p0 + np.cumsum(dirs * step, axis=0)])
        # local frame around the mean direction for the offsets
        axis = base[-1] - base[0]
        axis = axis / max(np.linalg.norm(axis), 1e-9)
        e1 = np.cross(axis, down if abs(axis @ down) < 0.95 else np.array([1.0, 0, 0]))
        e1 /= max(np.linalg.norm(e1), 1e-9)
        e2 = np.cross(axis, e1)
        phase_w, phase_c = rng.uniform(0, 2 * np.pi, size=2)
        u = s_vals / length
        ramp = np.minimum(1.0, 4.0 * u)  # offsets fade in so roots stay on the scalp
        wave = style.wave_amp * np.sin(2 * np.pi * style.wave_freq * u + phase_w) * ramp
        curl1 = style.curl_amp * np.cos(2 * np.pi * style.curl_freq * u + phase_c) * ramp
        curl2 = style.curl_amp * np.sin(2 * np.pi * style.curl_freq * u + phase_c) * ramp
        pts = base + np.outer(wave, e1) + np.outer(curl1, e1) + np.outer(curl2, e2)
        # keep out of the head sphere
        off = pts - HEAD_CENTER
        dist = np.linalg.norm(off, axis=1)
        inside = dist < HEAD_RADIUS
        if inside.any():
            pts[inside] = HEAD_CENTER + off[inside] / dist[inside, None] * HEAD_RADIUS
        # clip to the world box: keep the prefix that stays inside
        ok = np.all((pts >= WORLD_BOX_MIN) & (pts <= WORLD_BOX_MAX), axis=1)
        cut = np.argmin(ok) if not ok.all() else len(pts)
        if cut >= 2:
            pts = pts[:cut]
            keep = np.ones(len(pts), dtype=bool)
            keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-12
            pts = pts[keep]
            if len(pts) >= 2:
                strands.append(Strand(pts, rooted=True))
    return StrandSet(strands, {"rooted_phase": len(strands), "seeded_phase": 0})


# ---------------------------------------------------------------------------
# Dataset assembly

@dataclass(frozen=True)
class DatagenConfig:
    resolution: int = 32
    grid: tuple[int, int, int] = (32, 32, 24)
    seed: int = 0
    curve_count_range: tuple[int, int] = (5, 15)
    style_pool: tuple[str, ...] = ("straight", "wavy", "curly")


@dataclass(frozen=True)
class TrainingSampleSV:
    sketch: OrientationMap2D
    mask: MaskMap
    depth: DepthMap
    dense: OrientationMap2D
    fld: VectorField3D
    pose: ViewPose
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TrainingSampleMV:
    rotated_field: VectorField3D
    dense: OrientationMap2D
    depth: DepthMap
    target: VectorField3D
    pose: ViewPose
    meta: dict = field(default_factory=dict)


def style_from_name(name: str, rng: np.random.Generator) -> StyleParams:
    """Default style pool; the curvature per grid cell stays modest so the
    rendered maps and voxelized fields remain consistent at desk grids
    (tighter curls need the full-resolution grid to avoid aliasing)."""
    if name == "straight":
        return StyleParams(wave_amp=0.0, curl_amp=0.0,
                           droop_deg=float(rng.uniform(40, 75)))
    if name == "wavy":
        return StyleParams(wave_amp=float(rng.uniform(0.010, 0.018)),
                           wave_freq=float(rng.uniform(1.0, 1.4)),
                           droop_deg=float(rng.uniform(40, 75)))
    if name == "curly":
        return StyleParams(curl_amp=float(rng.uniform(0.006, 0.010)),
                           curl_freq=float(rng.uniform(0.8, 1.2)),
                           droop_deg=float(rng.uniform(40, 75)))
    raise ValueError(f"unknown style {name!r}")


def make_sv_sample(config: DatagenConfig, index: int, bust: BustModel | None = None) -> TrainingSampleSV:
    """One single-view training tuple; worker-safe (seed derives from index)."""
    bust = bust or default_bust()
    rng = np.random.default_rng((config.seed, index))
    style_name = config.style_pool[int(rng.integers(len(config.style_pool)))]
    style = style_from_name(style_name, rng)
    strand_seed = int(rng.integers(2**31))
    strands = synth_procedural_hair(style, seed=strand_seed, bust=bust)
    pose = augment_pose_samples(1, seed=int(rng.integers(2**31)))[0]

    dense = render_orientation_map(strands, pose, config.resolution)
    mask = render_mask(strands, pose, config.resolution)
    depth = render_bust_depth(bust, pose, config.resolution)
    fld = voxelize_strands(rotate_strands(strands, pose), config.grid, WORLD_BOX_MIN, WORLD_BOX_MAX)
    n_curves = int(rng.integers(config.curve_count_range[0], config.curve_count_range[1] + 1))
    sketch = trace_sketch_map(dense, TraceParams(curve_count=n_curves, seed=int(rng.integers(2**31))))
    meta = {"style": style_name, "style_params": asdict(style), "strand_seed": strand_seed,
            "index": index, "pose": [pose.y_deg, pose.x_deg, pose.z_deg], "seed": config.seed}
    return TrainingSampleSV(sketch, mask, depth, dense, fld, pose, meta)


def build_sv_dataset(config: DatagenConfig, count: int, out_dir=None, bust: BustModel | None = None):
    samples = []
    for i in range(count):
        s = make_sv_sample(config, i, bust=bust)
        if out_dir is not None:
            write_sv_sample(Path(out_dir), i, s)
        samples.append(s)
    return samples


def write_sv_sample(root: Path, index: int, s: TrainingSampleSV) -> None:
    d = Path(root) / "samples" / f"{index:05d}"
    d.mkdir(parents=True, exist_ok=True)
    formats.write_fmap(d / "sketch.fmap", s.sketch.data)
    formats.write_fmap(d / "mask.fmap", s.mask.data.astype(np.float32))
    formats.write_fmap(d / "depth.fmap", s.depth.data)
    formats.write_fmap(d / "dense.fmap", s.dense.data)
    formats.write_vfld(d / "field.vfld", s.fld)
    (d / "meta.json").write_text(json.dumps(s.meta, indent=2, sort_keys=True))


def read_sv_sample(root: Path, index: int) -> TrainingSampleSV:
    d = Path(root) / "samples" / f"{index:05d}"
    sketch = formats.orientation_from_fmap(d / "sketch.fmap")
    mask = formats.mask_from_fmap(d / "mask.fmap")
    depth = formats.depth_from_fmap(d / "depth.fmap")
    dense = formats.orientation_from_fmap(d / "dense.fmap")
    fld = formats.read_vfld(d / "field.vfld")
    meta = json.loads((d / "meta.json").read_text())
    pose = ViewPose(*meta.get("pose", [0, 0, 0]))
    return TrainingSampleSV(sketch, mask, depth, dense, fld, pose, meta)


def crop_field(fld: VectorField3D, fraction: float, rng: np.random.Generator) -> VectorField3D:
    """Zero out an axis-aligned box removing about `fraction` of valid cells."""
    if fraction <= 0:
        return fld
    valid = fld.valid_mask()
    total = int(valid.sum())
    if total == 0:
        return fld
    idx = np.argwhere(valid)
    center = idx[int(rng.integers(len(idx)))]
    shape = np.array(fld.shape)
    for radius in range(1, int(shape.max())):
        lo = np.maximum(center - radius, 0)
        hi = np.minimum(center + radius + 1, shape)
        box = valid[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
        if box.sum() >= fraction * total:
            data = fld.data.copy()
            data[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]] = 0.0
            return fld.with_data(data)
    return fld.with_data(np.zeros_like(fld.data))


def build_mv_dataset(sv_samples, lift_backend, count: int, seed: int = 0,
                     bust: BustModel | None = None, grid=None,
                     crop_probability: float = 0.5,
                     growth: GrowthParams | None = None,
                     roots=None):
    """Multi-view training tuples from single-view samples plus a lift backend.

    Per sample: the backend lifts the dense map to a field, strands grown
    from it are rotated to a fresh view and re-voxelized (optionally cropped);
    the rotated ground-truth strands provide the target field and the new
    view's dense map and bust depth.
    """
    bust = bust or default_bust()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        sv = sv_samples[i % len(sv_samples)]
        g = grid or sv.fld.shape
        y = lift_backend(sv.dense, sv.mask, sv.depth)
        r = roots if roots is not None else sample_roots(bust, count=1500, seed=seed + i)
        gp = growth or GrowthParams(seed=seed + i, phase2_seed_count=100)
        grown = grow_hair(y, r, gp)
        pose = augment_pose_samples(1, seed=(seed, i, 7))[0]
        meta = {"sv_index": sv.meta.get("index", i), "pose": [pose.y_deg, pose.x_deg, pose.z_deg]}
        if not len(grown):
            continue
        rot = rotate_strands(grown, pose)
        r_field = voxelize_strands(rot, g, WORLD_BOX_MIN, WORLD_BOX_MAX)
        if rng.random() < crop_probability:
            frac = float(rng.uniform(0.1, 0.4))
            r_field = crop_field(r_field, frac, rng)
            meta["crop_fraction"] = frac
        # ground truth in the new view comes from the original hair model
        sp = sv.meta.get("style_params", {})
        if "length_range" in sp:
            sp = dict(sp, length_range=tuple(sp["length_range"]))
        gt_strands = synth_procedural_hair(
            StyleParams(**sp), seed=int(sv.meta.get("strand_seed", 0)), bust=bust,
        )
        # compose the sample pose with the new view rotation
        sv_pose = sv.pose
        gt_rot = rotate_strands(rotate_strands(gt_strands, sv_pose), pose)
        dense_star = render_orientation_map(gt_rot, ViewPose(), sv.dense.width)
        depth_star = _depth_in_composed_view(bust, sv_pose, pose, sv.dense.width)
        target = voxelize_strands(gt_rot, g, WORLD_BOX_MIN, WORLD_BOX_MAX)
        out.append(TrainingSampleMV(r_field, dense_star, depth_star, target, pose, meta))
    return out


def _depth_in_composed_view(bust: BustModel, pose_a: ViewPose, pose_b: ViewPose, resolution: int) -> DepthMap:
    c = world_box_center()
    verts = (bust.vertices - c) @ pose_a.matrix().T @ pose_b.matrix().T + c
    rotated = BustModel(verts, bust.faces, bust.scalp_faces)
    return render_bust_depth(rotated, ViewPose(), resolution)
