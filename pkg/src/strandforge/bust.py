"""Procedural bust model (head and shoulders) with a marked scalp region.

The bust is generated deterministically instead of shipping a mesh asset: a
UV-sphere head plus an ellipsoidal shoulder block, placed inside the default
world box so that the face looks toward the camera (-z). The scalp is the
subset of head faces above the hairline, excluding the face area, and is the
support for root sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WORLD_BOX_MIN", "WORLD_BOX_MAX", "world_box_center",
    "BustModel", "RootSampling", "default_bust", "sample_roots",
]

# Default scene box: x and y span [0, 1], z spans 0.75 so that the reference
# 128 x 128 x 96 grid (and the desk-scale 32 x 32 x 24 one) has cubic cells.
WORLD_BOX_MIN = np.array([0.0, 0.0, 0.0])
WORLD_BOX_MAX = np.array([1.0, 1.0, 0.75])

HEAD_CENTER = np.array([0.5, 0.60, 0.375])
HEAD_RADIUS = 0.17
SHOULDER_CENTER = np.array([0.5, 0.16, 0.375])
SHOULDER_AXES = np.array([0.30, 0.20, 0.15])


def world_box_center() -> np.ndarray:
    return 0.5 * (WORLD_BOX_MIN + WORLD_BOX_MAX)


@dataclass(frozen=True)
class BustModel:
    """Triangle mesh with a scalp face subset."""

    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int
    scalp_faces: np.ndarray  # (S,) int indices into faces

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        s = np.asarray(self.scalp_faces, dtype=np.int64)
        if s.size and (s.min() < 0 or s.max() >= len(f)):
            raise ValueError("scalp faces must index into faces")
        for a in (v, f, s):
            a.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "scalp_faces", s)

    def face_normals(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        l = np.linalg.norm(n, axis=1)
        l[l == 0] = 1.0
        return n / l[:, None]

    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def scalp_point_distance(self, points: np.ndarray) -> np.ndarray:
        """Exact distance from each point to the nearest scalp triangle."""
        tri = self.vertices[self.faces[self.scalp_faces]]
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty(len(pts))
        # chunk the (points x triangles) product to bound memory
        step = max(1, 2_000_000 // max(len(tri), 1))
        for s in range(0, len(pts), step):
            d = _point_triangle_distance(pts[s:s + step], tri)
            out[s:s + step] = d.min(axis=1)
        return out


def _point_triangle_distance(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Pairwise point-to-triangle distances, (P, T). Ericson's region test."""
    p = points[:, None, :]
    a, b, c = tris[None, :, 0], tris[None, :, 1], tris[None, :, 2]
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ptk,ptk->pt", ab, ap)
    d2 = np.einsum("ptk,ptk->pt", ac, ap)
    bp = p - b
    d3 = np.einsum("ptk,ptk->pt", ab, bp)
    d4 = np.einsum("ptk,ptk->pt", ac, bp)
    cp = p - c
    d5 = np.einsum("ptk,ptk->pt", ab, cp)
    d6 = np.einsum("ptk,ptk->pt", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    denom = np.where(np.abs(denom) < 1e-300, 1.0, denom)
    v = vb / denom
    w = vc / denom

    closest = a + v[..., None] * ab + w[..., None] * ac  # face region default
    # vertex regions
    closest = np.where(((d1 <= 0) & (d2 <= 0))[..., None], a, closest)
    closest = np.where(((d3 >= 0) & (d4 <= d3))[..., None], b, closest)
    closest = np.where(((d6 >= 0) & (d5 <= d6))[..., None], c, closest)
    # edge AB
    vab = np.clip(np.where(d1 - d3 != 0, d1 / np.where(d1 - d3 == 0, 1.0, d1 - d3), 0.0), 0, 1)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    closest = np.where(on_ab[..., None], a + vab[..., None] * ab, closest)
    # edge AC
    vac = np.clip(np.where(d2 - d6 != 0, d2 / np.where(d2 - d6 == 0, 1.0, d2 - d6), 0.0), 0, 1)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    closest = np.where(on_ac[..., None], a + vac[..., None] * ac, closest)
    # edge BC
    num, den = d4 - d3, (d4 - d3) + (d5 - d6)
    vbc = np.clip(num / np.where(den == 0, 1.0, den), 0, 1)
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    closest = np.where(on_bc[..., None], b + vbc[..., None] * (c - b), closest)
    return np.linalg.norm(p - closest, axis=2)


def _uv_sphere(center, radius_xyz, n_lat=16, n_lon=24):
    """Triangulated UV sphere; returns (verts, faces)."""
    rx, ry, rz = np.broadcast_to(np.asarray(radius_xyz, dtype=np.float64), (3,))
    verts = [center + np.array([0.0, ry, 0.0])]
    for i in range(1, n_lat):
        phi = np.pi * i / n_lat
        y = np.cos(phi)
        s = np.sin(phi)
        for j in range(n_lon):
            th = 2 * np.pi * j / n_lon
            verts.append(center + np.array([rx * s * np.cos(th), ry * y, rz * s * np.sin(th)]))
    verts.append(center + np.array([0.0, -ry, 0.0]))
    verts = np.array(verts)
    faces = []
    top, bot = 0, len(verts) - 1
    ring = lambda i, j: 1 + (i - 1) * n_lon + (j % n_lon)
    for j in range(n_lon):
        faces.append((top, ring(1, j + 1), ring(1, j)))
        faces.append((bot, ring(n_lat - 1, j), ring(n_lat - 1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, b, d))
            faces.append((a, d, c))
    return verts, np.array(faces, dtype=np.int64)


def default_bust(n_lat: int = 16, n_lon: int = 24) -> BustModel:
    """The bundled head-and-shoulders fixture with its scalp marked."""
    hv, hf = _uv_sphere(HEAD_CENTER, HEAD_RADIUS, n_lat, n_lon)
    sv, sf = _uv_sphere(SHOULDER_CENTER, SHOULDER_AXES, max(8, n_lat // 2), n_lon)
    verts = np.vstack([hv, sv])
    faces = np.vstack([hf, sf + len(hv)])

    centroids = hv[hf].mean(axis=1)
    u = (centroids - HEAD_CENTER) / HEAD_RADIUS
    # scalp: above the hairline, excluding the face patch (the face looks
    # toward -z, i.e. toward the camera)
    above = u[:, 1] > -0.05
    face_patch = (u[:, 2] < -0.35) & (u[:, 1] < 0.45)
    scalp = np.nonzero(above & ~face_patch)[0]
    return BustModel(verts, faces, scalp)


@dataclass(frozen=True)
class RootSampling:
    """Points (and surface normals) on the scalp where strands start."""

    points: np.ndarray  # (N, 3)
    normals: np.ndarray  # (N, 3)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        n = np.asarray(self.normals, dtype=np.float64)
        if p.shape != n.shape or p.ndim != 2 or p.shape[1] != 3:
            raise ValueError("points and normals must both be (N, 3)")
        p.flags.writeable = False
        n.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "normals", n)

    def __len__(self) -> int:
        return len(self.points)


def sample_roots(bust: BustModel, count: int = 10_000, seed: int = 0) -> RootSampling:
    """Blue-noise (dart throwing) root sampling over the scalp faces."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    faces = bust.scalp_faces
    areas = bust.face_areas()[faces]
    normals = bust.face_normals()[faces]
    weights = areas / areas.sum()
    total_area = areas.sum()
    radius = 0.75 * np.sqrt(total_area / (count * np.pi))

    accepted_pts: list[np.ndarray] = []
    accepted_nrm: list[np.ndarray] = []
    grid: dict[tuple[int, int, int], list[int]] = {}

    def rebuild_grid() -> None:
        grid.clear()
        for i, p in enumerate(accepted_pts):
            grid.setdefault(tuple((p // radius).astype(np.int64)), []).append(i)

    def try_accept(p, n) -> bool:
        key = tuple((p // radius).astype(np.int64))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for idx in grid.get((key[0] + dx, key[1] + dy, key[2] + dz), ()):
                        if np.linalg.norm(accepted_pts[idx] - p) < radius:
                            return False
        grid.setdefault(key, []).append(len(accepted_pts))
        accepted_pts.append(p)
        accepted_nrm.append(n)
        return True

    # fixed rounds of darts; shrink the radius whenever a round saturates
    for _ in range(8):
        darts = 15 * (count - len(accepted_pts))
        while darts > 0 and len(accepted_pts) < count:
            batch = min(8192, darts)
            darts -= batch
            fi = rng.choice(len(faces), size=batch, p=weights)
            r1 = np.sqrt(rng.random(batch))
            r2 = rng.random(batch)
            tri = bust.vertices[bust.faces[faces[fi]]]
            pts = (1 - r1)[:, None] * tri[:, 0] + (r1 * (1 - r2))[:, None] * tri[:, 1] + (r1 * r2)[:, None] * tri[:, 2]
            for p, n in zip(pts, normals[fi]):
                if try_accept(p, n) and len(accepted_pts) >= count:
                    break
        if len(accepted_pts) >= count:
            break
        radius *= 0.7
        rebuild_grid()
    return RootSampling(np.array(accepted_pts), np.array(accepted_nrm))
