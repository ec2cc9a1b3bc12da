"""Binary file formats: FMAP rasters, VFLD fields, HAIR strands, WTS1 weights.

All formats are little-endian. Layouts:

FMAP   magic ``FMAP``, u32 width, u32 height, u32 channels, then f32 data
       row-major, channel-interleaved.
VFLD   magic ``VFLD``, u32 nx, ny, nz, 6 x f32 world box (b_min then b_max),
       then f32 xyz triples with the x index varying fastest.
HAIR   magic ``HAIR``, u32 strand count, then per strand u32 vertex count and
       f32 xyz per vertex. Optional trailing extension blocks, each a 4-byte
       tag plus u32 payload length plus payload: ``ROOT`` (u8 rooted flag per
       strand) and ``COLR`` (f32 rgb per strand).
WTS1   magic ``WTS1``, u32 entry count, per entry u32 name length, UTF-8
       name, u32 rank, u32 dims, f32 data. Training metadata travels in a
       JSON sidecar next to the file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .fields import DepthMap, MaskMap, OrientationMap2D, VectorField3D

__all__ = [
    "FormatError",
    "write_fmap", "read_fmap", "fmap_bytes", "fmap_from_bytes",
    "map_to_fmap", "orientation_from_fmap", "mask_from_fmap", "depth_from_fmap",
    "write_vfld", "read_vfld", "vfld_bytes", "vfld_from_bytes",
    "hair_bytes", "hair_from_bytes", "write_hair", "read_hair",
    "strands_to_obj",
    "write_weights", "read_weights",
]


class FormatError(ValueError):
    """Malformed or truncated binary payload."""


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise FormatError(msg)


# ---------------------------------------------------------------------------
# FMAP

def fmap_bytes(data: np.ndarray) -> bytes:
    """Serialize an (H, W) or (H, W, C) float array."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    _expect(a.ndim == 3, f"raster must be 2D or 3D, got shape {a.shape}")
    h, w, c = a.shape
    head = b"FMAP" + struct.pack("<III", w, h, c)
    return head + np.ascontiguousarray(a).tobytes()


def fmap_from_bytes(blob: bytes) -> np.ndarray:
    _expect(len(blob) >= 16 and blob[:4] == b"FMAP", "not an FMAP payload")
    w, h, c = struct.unpack("<III", blob[4:16])
    n = w * h * c
    _expect(len(blob) == 16 + 4 * n, "FMAP payload length mismatch")
    a = np.frombuffer(blob, dtype="<f4", count=n, offset=16)
    return a.reshape(h, w, c).astype(np.float64)


def write_fmap(path, data: np.ndarray) -> None:
    Path(path).write_bytes(fmap_bytes(data))


def read_fmap(path) -> np.ndarray:
    return fmap_from_bytes(Path(path).read_bytes())


def map_to_fmap(m) -> bytes:
    """Serialize any of the raster dataclasses."""
    return fmap_bytes(m.data)


def orientation_from_fmap(blob_or_path) -> OrientationMap2D:
    a = fmap_from_bytes(blob_or_path) if isinstance(blob_or_path, (bytes, bytearray)) else read_fmap(blob_or_path)
    _expect(a.shape[2] == 2, f"orientation FMAP needs 2 channels, got {a.shape[2]}")
    return OrientationMap2D(a)


def mask_from_fmap(blob_or_path) -> MaskMap:
    a = fmap_from_bytes(blob_or_path) if isinstance(blob_or_path, (bytes, bytearray)) else read_fmap(blob_or_path)
    _expect(a.shape[2] == 1, f"mask FMAP needs 1 channel, got {a.shape[2]}")
    return MaskMap(a[:, :, 0] > 0.5)


def depth_from_fmap(blob_or_path) -> DepthMap:
    a = fmap_from_bytes(blob_or_path) if isinstance(blob_or_path, (bytes, bytearray)) else read_fmap(blob_or_path)
    _expect(a.shape[2] == 1, f"depth FMAP needs 1 channel, got {a.shape[2]}")
    return DepthMap(a[:, :, 0])


# ---------------------------------------------------------------------------
# VFLD

def vfld_bytes(field: VectorField3D) -> bytes:
    nx, ny, nz = field.shape
    head = b"VFLD" + struct.pack("<III", nx, ny, nz)
    head += struct.pack("<6f", *field.box_min.astype(np.float32), *field.box_max.astype(np.float32))
    # x-fastest: serialize in (iz, iy, ix) nesting with ix innermost
    body = np.ascontiguousarray(field.data.transpose(2, 1, 0, 3), dtype=np.float32).tobytes()
    return head + body


def vfld_from_bytes(blob: bytes) -> VectorField3D:
    _expect(len(blob) >= 40 and blob[:4] == b"VFLD", "not a VFLD payload")
    nx, ny, nz = struct.unpack("<III", blob[4:16])
    box = struct.unpack("<6f", blob[16:40])
    n = nx * ny * nz * 3
    _expect(len(blob) == 40 + 4 * n, "VFLD payload length mismatch")
    a = np.frombuffer(blob, dtype="<f4", count=n, offset=40).reshape(nz, ny, nx, 3)
    return VectorField3D(a.transpose(2, 1, 0, 3).astype(np.float64), np.array(box[:3]), np.array(box[3:]))


def write_vfld(path, field: VectorField3D) -> None:
    Path(path).write_bytes(vfld_bytes(field))


def read_vfld(path) -> VectorField3D:
    return vfld_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# HAIR

def hair_bytes(strands) -> bytes:
    """Serialize a StrandSet; rooted flags and colors ride extension blocks."""
    parts = [b"HAIR", struct.pack("<I", len(strands.strands))]
    for s in strands.strands:
        v = np.asarray(s.vertices, dtype=np.float32)
        parts.append(struct.pack("<I", v.shape[0]))
        parts.append(np.ascontiguousarray(v).tobytes())
    roots = np.array([1 if s.rooted else 0 for s in strands.strands], dtype=np.uint8)
    parts.append(b"ROOT" + struct.pack("<I", roots.size) + roots.tobytes())
    if any(s.color is not None for s in strands.strands):
        cols = np.array(
            [s.color if s.color is not None else (0.0, 0.0, 0.0) for s in strands.strands],
            dtype=np.float32,
        ).reshape(len(strands.strands), 3)
        parts.append(b"COLR" + struct.pack("<I", cols.size * 4) + np.ascontiguousarray(cols).tobytes())
    return b"".join(parts)


def hair_from_bytes(blob: bytes):
    from .strands import Strand, StrandSet

    _expect(len(blob) >= 8 and blob[:4] == b"HAIR", "not a HAIR payload")
    (count,) = struct.unpack("<I", blob[4:8])
    off = 8
    verts = []
    for _ in range(count):
        _expect(off + 4 <= len(blob), "truncated HAIR strand header")
        (n,) = struct.unpack("<I", blob[off:off + 4])
        off += 4
        _expect(off + 12 * n <= len(blob), "truncated HAIR strand data")
        v = np.frombuffer(blob, dtype="<f4", count=3 * n, offset=off).reshape(n, 3)
        verts.append(v.astype(np.float64))
        off += 12 * n
    rooted = [False] * count
    colors = [None] * count
    while off < len(blob):
        _expect(off + 8 <= len(blob), "truncated HAIR extension header")
        tag = blob[off:off + 4]
        (plen,) = struct.unpack("<I", blob[off + 4:off + 8])
        off += 8
        _expect(off + plen <= len(blob), "truncated HAIR extension payload")
        payload = blob[off:off + plen]
        off += plen
        if tag == b"ROOT":
            _expect(plen == count, "ROOT block size mismatch")
            rooted = [b != 0 for b in payload]
        elif tag == b"COLR":
            _expect(plen == 12 * count, "COLR block size mismatch")
            c = np.frombuffer(payload, dtype="<f4").reshape(count, 3)
            colors = [tuple(float(x) for x in row) for row in c]
        # unknown tags are skipped so the format can grow
    strands = [Strand(v, rooted=r, color=c) for v, r, c in zip(verts, rooted, colors)]
    return StrandSet(strands)


def write_hair(path, strands) -> None:
    Path(path).write_bytes(hair_bytes(strands))


def read_hair(path):
    return hair_from_bytes(Path(path).read_bytes())


def strands_to_obj(strands) -> str:
    """OBJ polyline export (v records plus l records per strand)."""
    lines = []
    base = 1
    for s in strands.strands:
        for p in s.vertices:
            lines.append(f"v {p[0]:.6f} {p[1]:.6f} {p[2]:.6f}")
        idx = " ".join(str(base + i) for i in range(len(s.vertices)))
        lines.append(f"l {idx}")
        base += len(s.vertices)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# WTS1

def write_weights(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    parts = [b"WTS1", struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        a = np.asarray(tensors[name], dtype=np.float32)
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(np.ascontiguousarray(a).tobytes())
    Path(path).write_bytes(b"".join(parts))
    if meta is not None:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_weights(path) -> tuple[dict[str, np.ndarray], dict | None]:
    blob = Path(path).read_bytes()
    _expect(len(blob) >= 8 and blob[:4] == b"WTS1", "not a WTS1 payload")
    (count,) = struct.unpack("<I", blob[4:8])
    off = 8
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", blob[off:off + 4])
        off += 4
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack("<I", blob[off:off + 4])
        off += 4
        dims = struct.unpack(f"<{rank}I", blob[off:off + 4 * rank])
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        a = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        out[name] = a.astype(np.float32).copy()
    _expect(off == len(blob), "WTS1 payload length mismatch")
    sidecar = Path(str(path) + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else None
    return out, meta
