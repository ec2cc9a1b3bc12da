"""Strand-level editing: cutting, trimming, wisp selection, reshaping.

2D tools (cut stroke, mask trim, sketch-based selection) operate in the
image space of the given view pose using the same projection as the
renderer; stroke and mask coordinates are raster pixels (col, row).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bust import BustModel
from .datagen import _project_xy, render_mask
from .fields import MaskMap, ViewPose
from .strands import Strand, StrandSet, rotate_strands, strand_curvature

__all__ = [
    "EditSelection", "cut_by_stroke", "trim_by_mask", "select_wisp",
    "laplacian_deform", "scale_length", "recolor", "resample_polyline",
]

CUT_TOLERANCE_PX = 1.0


@dataclass(frozen=True)
class EditSelection:
    """Strand indices plus per-strand vertex ranges (half-open)."""

    indices: tuple[int, ...]
    ranges: tuple[tuple[int, int], ...]
    source: str = "scalp-region"

    def __post_init__(self):
        if len(self.indices) != len(self.ranges):
            raise ValueError("indices and ranges must align")
        for lo, hi in self.ranges:
            if hi <= lo:
                raise ValueError("selection ranges must be non-empty")

    def __len__(self):
        return len(self.indices)

    @staticmethod
    def whole_strands(indices, strands: StrandSet, source="scalp-region") -> "EditSelection":
        return EditSelection(tuple(indices),
                            tuple((0, len(strands.strands[i])) for i in indices), source)


def _project_strand_px(s: Strand, pose: ViewPose, resolution: int) -> np.ndarray:
    verts = s.vertices
    if not pose.is_identity():
        rotated = rotate_strands(StrandSet([s]), pose)
        verts = rotated.strands[0].vertices
    r, c = _project_xy(verts, resolution, resolution)
    return np.stack([c, r], axis=1)  # (x=col, y=row)


def _seg_intersection_t(p0, p1, q0, q1, tol):
    """Parameter t on [p0, p1] of the first contact with [q0, q1], or None."""
    d1 = p1 - p0
    d2 = q1 - q0
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(denom) > 1e-12:
        rel = q0 - p0
        t = (rel[0] * d2[1] - rel[1] * d2[0]) / denom
        u = (rel[0] * d1[1] - rel[1] * d1[0]) / denom
        if -1e-9 <= t <= 1 + 1e-9 and -1e-9 <= u <= 1 + 1e-9:
            return float(np.clip(t, 0.0, 1.0))
    # near-miss within tolerance: closest approach of p-segment to q endpoints
    best = None
    for q in (q0, q1):
        l2 = d1 @ d1
        t = float(np.clip((q - p0) @ d1 / l2, 0, 1)) if l2 > 0 else 0.0
        if np.linalg.norm(p0 + t * d1 - q) <= tol:
            best = t if best is None else min(best, t)
    return best


def cut_by_stroke(strands: StrandSet, stroke_px: np.ndarray, pose: ViewPose,
                  resolution: int = 128) -> StrandSet:
    """Truncate strands at their first image-space crossing with the stroke.

    The root side (vertex 0 onward) is kept, ending at the intersection
    point; strands the stroke misses pass through unchanged.
    """
    stroke = np.asarray(stroke_px, dtype=np.float64)
    if stroke.ndim != 2 or stroke.shape[0] < 2:
        raise ValueError("stroke needs >= 2 points")
    s_lo = stroke.min(axis=0) - CUT_TOLERANCE_PX
    s_hi = stroke.max(axis=0) + CUT_TOLERANCE_PX
    out = []
    for s in strands.strands:
        px = _project_strand_px(s, pose, resolution)
        if np.all(px.max(axis=0) < s_lo) or np.all(px.min(axis=0) > s_hi):
            out.append(s)
            continue
        cut = None  # (segment index, parameter)
        for i in range(len(px) - 1):
            for j in range(len(stroke) - 1):
                t = _seg_intersection_t(px[i], px[i + 1], stroke[j], stroke[j + 1], CUT_TOLERANCE_PX)
                if t is not None:
                    cut = (i, t)
                    break
            if cut:
                break
        if cut is None:
            out.append(s)
            continue
        i, t = cut
        v = s.vertices
        point = v[i] + t * (v[i + 1] - v[i])
        kept = v[:i + 1]
        if np.linalg.norm(point - kept[-1]) > 1e-9:
            kept = np.vstack([kept, point])
        if len(kept) >= 2:
            out.append(replace(s, vertices=kept))
    return StrandSet(out, dict(strands.provenance))


def trim_by_mask(strands: StrandSet, new_mask: MaskMap, pose: ViewPose,
                 old_mask: MaskMap | None = None) -> tuple[StrandSet, bool]:
    """Drop strand vertices projecting outside the mask; report enlargement.

    Keeps each strand's root-connected prefix. The resynthesis flag compares
    the new mask against the previous session mask when given, otherwise
    against the strands' current rendered silhouette.
    """
    res = new_mask.height
    m = new_mask.as_bool()
    out = []
    for s in strands.strands:
        px = _project_strand_px(s, pose, res)
        cols = np.clip(np.round(px[:, 0]).astype(int), 0, res - 1)
        rows = np.clip(np.round(px[:, 1]).astype(int), 0, res - 1)
        inside = m[rows, cols]
        # also treat points that project off-frame as outside
        off = (px[:, 0] < -0.5) | (px[:, 0] > res - 0.5) | (px[:, 1] < -0.5) | (px[:, 1] > res - 0.5)
        inside &= ~off
        if inside.all():
            out.append(s)
            continue
        cut = int(np.argmin(inside))  # first outside vertex
        if cut >= 2:
            out.append(replace(s, vertices=s.vertices[:cut]))
    if old_mask is not None:
        reference = old_mask.as_bool()
    else:
        reference = render_mask(strands, pose, res).as_bool() if strands.strands else np.zeros_like(m)
    needs_resynthesis = bool((m & ~reference).any())
    return StrandSet(out, dict(strands.provenance)), needs_resynthesis


def resample_polyline(points: np.ndarray, step: float) -> np.ndarray:
    """Uniform-arclength resampling (2D or 3D polyline)."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = seg.sum()
    if total <= 0:
        return pts[:1].copy()
    n = max(2, int(np.floor(total / step)) + 1)
    targets = np.linspace(0.0, total, n)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    out = np.empty((n, pts.shape[1]))
    for k, t in enumerate(targets):
        i = min(np.searchsorted(cum, t, side="right") - 1, len(seg) - 1)
        denom = seg[i] if seg[i] > 0 else 1.0
        a = (t - cum[i]) / denom
        out[k] = pts[i] * (1 - a) + pts[i + 1] * a
    return out


def _polyline_curvature_2d(px: np.ndarray) -> np.ndarray:
    d = np.diff(px, axis=0)
    n = np.linalg.norm(d, axis=1)
    keep = n > 1e-12
    d = d[keep] / n[keep][:, None]
    if len(d) < 2:
        return np.zeros(max(len(px), 1))
    dots = np.clip(np.einsum("ij,ij->i", d[:-1], d[1:]), -1, 1)
    inner = np.arccos(dots)
    out = np.empty(len(d) + 1)
    out[1:-1] = inner
    out[0] = inner[0]
    out[-1] = inner[-1]
    return out


def _match_run_from_tip(ka: np.ndarray, kb: np.ndarray, tol: float) -> int:
    width = min(len(ka), len(kb))
    if width == 0:
        return 0
    a = ka[::-1][:width]
    b = kb[::-1][:width]
    ok = np.abs(a - b) <= tol
    best = run = 0
    for v in ok:
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def select_wisp(strands: StrandSet, mode: str, payload: dict,
                pose: ViewPose = ViewPose(), resolution: int = 128) -> EditSelection:
    """Pick a wisp either by scalp area or by matching a drawn strand shape."""
    if mode == "scalp-region":
        center = np.asarray(payload["center"], dtype=np.float64)
        radius = float(payload["radius"])
        picked = [i for i, s in enumerate(strands.strands)
                  if s.rooted and np.linalg.norm(s.vertices[0] - center) <= radius]
        return EditSelection.whole_strands(picked, strands, "scalp-region")
    if mode == "sketch-match":
        stroke = resample_polyline(np.asarray(payload["stroke_px"], dtype=np.float64),
                                   payload.get("resample_px", 2.0))
        k_stroke = _polyline_curvature_2d(stroke)
        tol = float(payload.get("curvature_tol", 0.1))
        frac = float(payload.get("match_fraction", 1.0 / 3.0))
        picked = []
        for i, s in enumerate(strands.strands):
            px = resample_polyline(_project_strand_px(s, pose, resolution),
                                   payload.get("resample_px", 2.0))
            ks = _polyline_curvature_2d(px)
            run = _match_run_from_tip(ks, k_stroke, tol)
            if run > frac * len(ks):
                picked.append(i)
        return EditSelection.whole_strands(picked, strands, "sketch-match")
    raise ValueError(f"unknown wisp mode {mode!r}")


def _path_laplacian(n: int) -> np.ndarray:
    l = np.zeros((n, n))
    for i in range(n):
        nbrs = [j for j in (i - 1, i + 1) if 0 <= j < n]
        l[i, i] = 1.0
        for j in nbrs:
            l[i, j] = -1.0 / len(nbrs)
    return l


def laplacian_deform(strands: StrandSet, selection: EditSelection,
                     handles: list[tuple[int, int, np.ndarray]]) -> StrandSet:
    """Move handle vertices and re-solve each selected strand's shape.

    Minimizes the change of the path Laplacian coordinates subject to the
    handle positions, with the root vertex anchored; unselected strands pass
    through untouched.
    """
    by_strand: dict[int, dict[int, np.ndarray]] = {}
    sel_set = set(selection.indices)
    for si, vi, pos in handles:
        if si not in sel_set:
            raise ValueError(f"handle strand {si} is not in the selection")
        if not (0 <= vi < len(strands.strands[si])):
            raise ValueError(f"handle vertex {vi} out of range")
        by_strand.setdefault(si, {})[vi] = np.asarray(pos, dtype=np.float64)

    out = list(strands.strands)
    for si in selection.indices:
        s = strands.strands[si]
        v = s.vertices
        n = len(v)
        cons = {0: v[0].copy()}
        cons.update(by_strand.get(si, {}))
        if n == len(cons):
            new_v = np.vstack([cons[i] for i in range(n)])
        else:
            l = _path_laplacian(n)
            delta = l @ v
            fixed = sorted(cons)
            free = [i for i in range(n) if i not in cons]
            a = l[:, free]
            b = delta - l[:, fixed] @ np.vstack([cons[i] for i in fixed])
            sol, *_ = np.linalg.lstsq(a, b, rcond=None)
            new_v = v.copy()
            new_v[free] = sol
            for i, p in cons.items():
                new_v[i] = p
        keep = np.ones(len(new_v), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(new_v, axis=0), axis=1) > 1e-12
        new_v = new_v[keep]
        if len(new_v) >= 2:
            out[si] = replace(s, vertices=new_v)
    return StrandSet(out, dict(strands.provenance))


def scale_length(strands: StrandSet, selection: EditSelection, factor: float) -> StrandSet:
    """Rescale segment lengths about the root, preserving directions."""
    if factor <= 0:
        raise ValueError("scale factor must be > 0")
    out = list(strands.strands)
    for si in selection.indices:
        s = strands.strands[si]
        d = np.diff(s.vertices, axis=0) * factor
        v = np.vstack([s.vertices[:1], s.vertices[0] + np.cumsum(d, axis=0)])
        out[si] = replace(s, vertices=v)
    return StrandSet(out, dict(strands.provenance))


def recolor(strands: StrandSet, selection: EditSelection, color) -> StrandSet:
    c = tuple(float(x) for x in color)
    if len(c) != 3:
        raise ValueError("color must be RGB")
    out = list(strands.strands)
    for si in selection.indices:
        out[si] = replace(strands.strands[si], color=c)
    return StrandSet(out, dict(strands.provenance))
