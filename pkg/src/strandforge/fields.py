"""Raster and volumetric orientation field types and operators.

Coordinate conventions (shared by every module in this package)
---------------------------------------------------------------
World space is right-handed with +y up. All volumetric data lives inside an
axis-aligned box ``[b_min, b_max]``. The viewing camera is orthographic and
fixed: rays travel parallel to +z and enter the box at ``z = b_min.z``, so a
smaller z coordinate is closer to the viewer.

Images are rasters of shape ``(height, width, channels)``. Column ``c`` maps
to world +x and row ``r`` maps to world -y (row 0 sits at the top of the
image, ``y = b_max.y``). Volumes use cell indices ``(ix, iy, iz)`` aligned
with world axes; a pixel ``(r, c)`` of a map rendered at the grid resolution
corresponds to the cell column ``ix = c``, ``iy = ny - 1 - r``.

Orientation vectors are stored as floating-point direction components in
world axes: a 2D map holds ``(x, y)`` per pixel, a 3D field holds
``(x, y, z)`` per cell. Directions are signed (they encode the growing
direction of hair, not a line orientation). Background pixels/cells are
exactly zero. The RGB byte encoding exists only at I/O boundaries; internal
math always runs on floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OrientationMap2D",
    "MaskMap",
    "DepthMap",
    "VectorField3D",
    "VisibilityIndex",
    "ViewPose",
    "VALID_CELL_SQNORM",
    "encode_orientation_rgb",
    "decode_orientation_rgb",
    "project_field",
    "field_laplacian",
    "build_visibility_index",
]

# A cell participates in projection/growth only when |v|^2 reaches this bound.
VALID_CELL_SQNORM = 0.5


class DimensionError(ValueError):
    """Raised when rasters or grids that must share a shape do not."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class OrientationMap2D:
    """Dense or sparse per-pixel 2D direction map, background = (0, 0)."""

    data: np.ndarray  # (H, W, 2) float

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 2:
            raise DimensionError(f"orientation map must be (H, W, 2), got {d.shape}")
        object.__setattr__(self, "data", _readonly(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def valid_mask(self) -> np.ndarray:
        """Boolean (H, W) mask of non-background pixels."""
        return np.linalg.norm(self.data, axis=2) > 0.0

    def normalized(self) -> "OrientationMap2D":
        """Unit-normalize valid pixels, keep background exactly zero."""
        n = np.linalg.norm(self.data, axis=2)
        out = np.zeros_like(self.data)
        ok = n > 0.0
        out[ok] = self.data[ok] / n[ok, None]
        return OrientationMap2D(out)

    def validate(self, norm_tol: float = 1e-3) -> None:
        ok = self.valid_mask()
        norms = np.linalg.norm(self.data[ok], axis=1)
        if norms.size and (np.any(norms < 1.0 - norm_tol) or np.any(norms > 1.0 + norm_tol)):
            raise ValueError("valid pixels must hold unit vectors after normalization")

    @staticmethod
    def zeros(height: int, width: int) -> "OrientationMap2D":
        return OrientationMap2D(np.zeros((height, width, 2)))


@dataclass(frozen=True)
class MaskMap:
    """Binary per-pixel coverage map."""

    data: np.ndarray  # (H, W) in {0, 1}

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise DimensionError(f"mask must be (H, W), got {d.shape}")
        d = (d != 0).astype(np.uint8)
        object.__setattr__(self, "data", _readonly(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def as_bool(self) -> np.ndarray:
        return self.data.astype(bool)


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel normalized hit depth in [0, 1]; 0 marks a missed ray."""

    data: np.ndarray  # (H, W) float

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise DimensionError(f"depth map must be (H, W), got {d.shape}")
        object.__setattr__(self, "data", _readonly(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def hit_mask(self) -> np.ndarray:
        return self.data > 0.0


@dataclass(frozen=True)
class VectorField3D:
    """Per-cell mean strand tangents on a regular grid inside a world box."""

    data: np.ndarray  # (nx, ny, nz, 3) float
    box_min: np.ndarray  # (3,)
    box_max: np.ndarray  # (3,)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 4 or d.shape[3] != 3:
            raise DimensionError(f"field data must be (nx, ny, nz, 3), got {d.shape}")
        bmin = np.asarray(self.box_min, dtype=np.float64).reshape(3)
        bmax = np.asarray(self.box_max, dtype=np.float64).reshape(3)
        if not np.all(bmax > bmin):
            raise DimensionError("world box must be non-degenerate (b_max > b_min)")
        object.__setattr__(self, "data", _readonly(d))
        object.__setattr__(self, "box_min", _readonly(bmin))
        object.__setattr__(self, "box_max", _readonly(bmax))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape[:3]

    @property
    def nx(self) -> int:
        return self.data.shape[0]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def nz(self) -> int:
        return self.data.shape[2]

    def cell_size(self) -> np.ndarray:
        return (self.box_max - self.box_min) / np.array(self.shape, dtype=np.float64)

    def valid_mask(self) -> np.ndarray:
        """Cells whose squared norm reaches the growth threshold."""
        return np.einsum("...k,...k->...", self.data, self.data) >= VALID_CELL_SQNORM

    def with_data(self, data: np.ndarray) -> "VectorField3D":
        return VectorField3D(data, self.box_min, self.box_max)

    @staticmethod
    def zeros(shape: tuple[int, int, int], box_min=(0.0, 0.0, 0.0), box_max=(1.0, 1.0, 1.0)) -> "VectorField3D":
        return VectorField3D(np.zeros(shape + (3,)), np.asarray(box_min), np.asarray(box_max))


@dataclass(frozen=True)
class VisibilityIndex:
    """First valid cell along each pixel's view ray, or -1 where none exists.

    ``cells`` is an (ny, nx) int array of flat cell indices into the field's
    ``(nx, ny, nz)`` grid (C order), arranged like an image raster so that
    ``cells[r, c]`` belongs to pixel ``(r, c)``.
    """

    cells: np.ndarray  # (H, W) int64, -1 = no visible cell
    grid_shape: tuple[int, int, int]

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=np.int64)
        if c.ndim != 2:
            raise DimensionError(f"visibility index must be (H, W), got {c.shape}")
        object.__setattr__(self, "cells", _readonly(c))
        object.__setattr__(self, "grid_shape", tuple(int(n) for n in self.grid_shape))

    def pixel_mask(self) -> np.ndarray:
        return self.cells >= 0


@dataclass(frozen=True)
class ViewPose:
    """View rotation as Euler angles in degrees about the box center.

    Composition order is fixed: Y first, then X, then Z
    (``R = Rz @ Rx @ Ry``).
    """

    y_deg: float = 0.0
    x_deg: float = 0.0
    z_deg: float = 0.0

    def __post_init__(self):
        for v in (self.y_deg, self.x_deg, self.z_deg):
            if not np.isfinite(v):
                raise ValueError("pose angles must be finite")

    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix applying Y, then X, then Z."""
        ay, ax, az = np.deg2rad([self.y_deg, self.x_deg, self.z_deg])
        cy, sy = np.cos(ay), np.sin(ay)
        cx, sx = np.cos(ax), np.sin(ax)
        cz, sz = np.cos(az), np.sin(az)
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return rz @ rx @ ry

    def is_identity(self, tol: float = 0.0) -> bool:
        return abs(self.y_deg) <= tol and abs(self.x_deg) <= tol and abs(self.z_deg) <= tol


def encode_orientation_rgb(m: OrientationMap2D) -> np.ndarray:
    """Encode a 2D orientation map as a byte raster (H, W, 3).

    R and G carry the x and y components mapped linearly from [-1, 1] to
    [0, 255] (ties round down, so the error stays within half a bin). B is a
    validity flag: 255 inside valid pixels, 0 on background. Background
    pixels encode as exact (0, 0, 0).
    """
    valid = m.valid_mask()
    scaled = (np.clip(m.data, -1.0, 1.0) + 1.0) * (255.0 / 2.0)
    b = np.ceil(scaled - 0.5).astype(np.int64)
    out = np.zeros((m.height, m.width, 3), dtype=np.uint8)
    out[..., 0] = np.where(valid, b[..., 0], 0)
    out[..., 1] = np.where(valid, b[..., 1], 0)
    out[..., 2] = np.where(valid, 255, 0)
    return out


def decode_orientation_rgb(raster: np.ndarray) -> OrientationMap2D:
    """Invert :func:`encode_orientation_rgb` up to quantization error."""
    r = np.asarray(raster)
    if r.ndim != 3 or r.shape[2] != 3:
        raise DimensionError(f"encoded raster must be (H, W, 3), got {r.shape}")
    valid = r[..., 2] > 127
    comp = r[..., :2].astype(np.float64) * (2.0 / 255.0) - 1.0
    out = np.zeros(r.shape[:2] + (2,), dtype=np.float64)
    out[valid] = comp[valid]
    return OrientationMap2D(out)


def build_visibility_index(field: VectorField3D, pose: ViewPose | None = None) -> VisibilityIndex:
    """Record, per pixel, the first valid cell along the front-to-back ray.

    Fields are always stored view-aligned (rotation happens at the strand
    level before re-voxelization), so the walk always runs along the grid's
    +z axis; ``pose`` is accepted for call-site symmetry and ignored.
    """
    del pose
    nx, ny, nz = field.shape
    valid = field.valid_mask()  # (nx, ny, nz)
    any_valid = valid.any(axis=2)
    first = np.argmax(valid, axis=2)  # first True along z, 0 when none
    iz = np.where(any_valid, first, -1)
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    flat = (ix * ny + iy) * nz + iz
    flat = np.where(any_valid, flat, -1)  # (nx, ny)
    # reorder to raster layout: rows top-down over y, columns over x
    cells = flat.T[::-1].copy()
    return VisibilityIndex(cells, (nx, ny, nz))


def project_field(field: VectorField3D, vis: VisibilityIndex) -> OrientationMap2D:
    """Project visible cells to a 2D map of their (x, y) components."""
    if vis.grid_shape != field.shape:
        raise DimensionError(f"visibility {vis.grid_shape} does not match field {field.shape}")
    flat = field.data.reshape(-1, 3)
    h, w = vis.cells.shape
    out = np.zeros((h, w, 2), dtype=np.float64)
    ok = vis.pixel_mask()
    out[ok] = flat[vis.cells[ok]][:, :2]
    return OrientationMap2D(out)


def field_laplacian(field: VectorField3D) -> VectorField3D:
    """Discrete vector Laplacian: per cell, mean of 6-neighborhood differences.

    Boundary cells shrink their neighborhood to the neighbors that exist, so
    constants and (in the interior) linear ramps map to zero.
    """
    v = field.data
    nx, ny, nz = field.shape
    acc = np.zeros_like(v)
    cnt = np.zeros(field.shape, dtype=np.float64)
    for axis in range(3):
        n = v.shape[axis]
        if n < 2:
            continue
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        lo_t, hi_t = tuple(lo), tuple(hi)
        acc[lo_t] += v[hi_t] - v[lo_t]
        acc[hi_t] += v[lo_t] - v[hi_t]
        cnt[lo_t] += 1.0
        cnt[hi_t] += 1.0
    cnt = np.maximum(cnt, 1.0)
    return field.with_data(acc / cnt[..., None])
