"""Differentiable layers: convolutions, pooling, tiling, upsampling.

All structured layers reduce to gather/scatter index maps plus matmul, so
every layer is twice differentiable for free. Index maps are cached per
geometry; they depend only on shapes, never on values.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, add, expand, matmul, put, relu, reshape, take, transpose

__all__ = [
    "conv2d", "conv3d", "deconv2d", "deconv3d", "maxpool2d",
    "linear", "tile_depth", "concat_channels", "stack_new_axis1",
    "conv2d_out_hw", "deconv2d_out_hw", "init_uniform_fan_in",
]

_IDX_CACHE: dict = {}


def _cached(key, builder):
    if key not in _IDX_CACHE:
        _IDX_CACHE[key] = builder()
    return _IDX_CACHE[key]


def conv2d_out_hw(h, w, k, stride, pad):
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def deconv2d_out_hw(h, w, k, stride, pad):
    return (h - 1) * stride - 2 * pad + k, (w - 1) * stride - 2 * pad + k


def _pad_idx_nd(shape, spatial_pad):
    """Flat positions of the original entries inside the zero-padded array."""
    padded = tuple(
        s + 2 * spatial_pad if i >= 2 else s for i, s in enumerate(shape)
    )
    grids = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
    coords = [g + (spatial_pad if i >= 2 else 0) for i, g in enumerate(grids)]
    flat = np.zeros_like(coords[0])
    for c, ps in zip(coords, padded):
        flat = flat * ps + c
    return flat.reshape(-1), padded


def _crop_idx_nd(padded_shape, out_shape, spatial_pad):
    grids = np.meshgrid(*[np.arange(s) for s in out_shape], indexing="ij")
    coords = [g + (spatial_pad if i >= 2 else 0) for i, g in enumerate(grids)]
    flat = np.zeros_like(coords[0])
    for c, ps in zip(coords, padded_shape):
        flat = flat * ps + c
    return flat


def _im2col_idx(padded_shape, k, stride):
    """Gather map (N*prod(O), C*prod(K)) over an already padded nd array.

    ``padded_shape`` is (N, C, *spatial); k and stride are per-spatial-dim
    tuples. Rows iterate (n, *out); cols iterate (c, *k).
    """
    n, c = padded_shape[0], padded_shape[1]
    spatial = padded_shape[2:]
    nd = len(spatial)
    out = tuple((spatial[i] - k[i]) // stride[i] + 1 for i in range(nd))

    out_grids = np.meshgrid(*[np.arange(o) * s for o, s in zip(out, stride)], indexing="ij")
    k_grids = np.meshgrid(*[np.arange(kk) for kk in k], indexing="ij")
    out_flat = [g.reshape(-1) for g in out_grids]  # len prod(out)
    k_flat = [g.reshape(-1) for g in k_grids]  # len prod(k)

    # spatial index per (outpos, kpos)
    pos = np.zeros((len(out_flat[0]), len(k_flat[0])), dtype=np.int64)
    for dim in range(nd):
        coord = out_flat[dim][:, None] + k_flat[dim][None, :]
        pos = pos * spatial[dim] + coord

    sp_size = int(np.prod(spatial))
    n_idx = np.arange(n)
    c_idx = np.arange(c)
    # flat index = ((n*C + c) * prod(spatial)) + pos
    idx = (
        (n_idx[:, None, None, None] * c + c_idx[None, None, :, None]) * sp_size
        + pos[None, :, None, :]
    )  # (N, prod(out), C, prod(k))
    idx = idx.reshape(n * int(np.prod(out)), c * int(np.prod(k)))
    return idx, out


def _conv_geometry(shape, k, stride, pad):
    def build():
        if pad > 0:
            pad_idx, padded = _pad_idx_nd(shape, pad)
        else:
            pad_idx, padded = None, tuple(shape)
        cols_idx, out = _im2col_idx(padded, k, stride)
        return pad_idx, padded, cols_idx, out

    return _cached(("conv", shape, k, stride, pad), build)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 1) -> Tensor:
    """Cross-correlation; x (N,C,H,W), w (OC,C,KH,KW), bias per channel."""
    n, c, h, wd = x.shape
    oc, c2, kh, kw = w.shape
    if c != c2:
        raise ValueError(f"conv2d channel mismatch: input {c}, weight {c2}")
    pad_idx, padded, cols_idx, out = _conv_geometry((n, c, h, wd), (kh, kw), (stride, stride), pad)
    xp = put(x, pad_idx, padded) if pad_idx is not None else x
    cols = take(xp, cols_idx)
    wm = reshape(w, (oc, c * kh * kw))
    y = matmul(cols, transpose(wm))  # (N*OH*OW, OC)
    oh, ow = out
    y = transpose(reshape(y, (n, oh, ow, oc)), (0, 3, 1, 2))
    if b is not None:
        y = add(y, expand(reshape(b, (1, oc, 1, 1)), y.shape))
    return y


def conv3d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 1) -> Tensor:
    """x (N,C,D,H,W), w (OC,C,KD,KH,KW)."""
    n, c, d, h, wd = x.shape
    oc, c2, kd, kh, kw = w.shape
    if c != c2:
        raise ValueError(f"conv3d channel mismatch: input {c}, weight {c2}")
    pad_idx, padded, cols_idx, out = _conv_geometry(
        (n, c, d, h, wd), (kd, kh, kw), (stride, stride, stride), pad
    )
    xp = put(x, pad_idx, padded) if pad_idx is not None else x
    cols = take(xp, cols_idx)
    wm = reshape(w, (oc, c * kd * kh * kw))
    y = matmul(cols, transpose(wm))
    od, oh, ow = out
    y = transpose(reshape(y, (n, od, oh, ow, oc)), (0, 4, 1, 2, 3))
    if b is not None:
        y = add(y, expand(reshape(b, (1, oc, 1, 1, 1)), y.shape))
    return y


def _deconv(x: Tensor, w: Tensor, b: Tensor | None, stride: int, pad: int, nd: int) -> Tensor:
    shape = x.shape
    n, ic = shape[0], shape[1]
    spatial = shape[2:]
    wic = w.shape[0]
    if ic != wic:
        raise ValueError(f"deconv channel mismatch: input {ic}, weight {wic}")
    oc = w.shape[1]
    k = w.shape[2:]
    out_sp = tuple((spatial[i] - 1) * stride - 2 * pad + k[i] for i in range(nd))
    out_shape = (n, oc) + out_sp

    def build():
        if pad > 0:
            _, padded = _pad_idx_nd(out_shape, pad)
            crop = _crop_idx_nd(padded, out_shape, pad)
        else:
            padded, crop = tuple(out_shape), None
        cols_idx, back = _im2col_idx(padded, k, (stride,) * nd)
        assert back == tuple(spatial), f"deconv geometry mismatch {back} vs {spatial}"
        return padded, crop, cols_idx

    padded, crop, cols_idx = _cached(("deconv", shape, w.shape, stride, pad), build)

    perm = (0,) + tuple(range(2, 2 + nd)) + (1,)
    rows = reshape(transpose(x, perm), (n * int(np.prod(spatial)), ic))
    wm = reshape(w, (ic, oc * int(np.prod(k))))
    cols = matmul(rows, wm)  # matches the cols gather of the output geometry
    y = put(cols, cols_idx, padded)
    if crop is not None:
        y = take(y, crop, out_shape)
    if b is not None:
        bshape = (1, oc) + (1,) * nd
        y = add(y, expand(reshape(b, bshape), y.shape))
    return y


def deconv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 2, pad: int = 1) -> Tensor:
    """Transposed convolution; x (N,IC,H,W), w (IC,OC,KH,KW)."""
    return _deconv(x, w, b, stride, pad, nd=2)


def deconv3d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 2, pad: int = 1) -> Tensor:
    """Transposed convolution; x (N,IC,D,H,W), w (IC,OC,KD,KH,KW)."""
    return _deconv(x, w, b, stride, pad, nd=3)


def maxpool2d(x: Tensor, k: int = 2, stride: int = 2) -> Tensor:
    n, c, h, w = x.shape
    oh, ow = conv2d_out_hw(h, w, k, stride, 0)

    def build():
        # window gather per (n, c, oh, ow): reuse the im2col map with the
        # channel folded into the batch dimension
        idx, _ = _im2col_idx((n * c, 1, h, w), (k, k), (stride, stride))
        return idx  # (N*C*OH*OW, k*k)

    idx = _cached(("pool", x.shape, k, stride), build)
    vals = x.data.reshape(-1)[idx]
    best = idx[np.arange(idx.shape[0]), np.argmax(vals, axis=1)]
    from .tensor import relu_monitor

    relu_monitor.observe_pool(best)
    return take(x, best, (n, c, oh, ow))


def linear(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    """x (N, IN) (flattened by the caller), w (OUT, IN)."""
    n = x.shape[0]
    flat = reshape(x, (n, x.size // n))
    y = matmul(flat, transpose(w))
    if b is not None:
        y = add(y, expand(reshape(b, (1, w.shape[0])), y.shape))
    return y


def tile_depth(x: Tensor, depth: int) -> Tensor:
    """Tile (N,C,H,W) features to (N,C,D,H,W) by repetition along depth."""
    n, c, h, w = x.shape

    def build():
        base = np.arange(n * c * h * w).reshape(n, c, h, w)
        return np.repeat(base[:, :, None, :, :], depth, axis=2)

    idx = _cached(("tile", x.shape, depth), build)
    return take(x, idx, (n, c, depth, h, w))


def concat_channels(parts: list[Tensor]) -> Tensor:
    """Concatenate along axis 1 (channels) via scatter maps."""
    shapes = [p.shape for p in parts]
    n = shapes[0][0]
    rest = shapes[0][2:]
    for s in shapes:
        if s[0] != n or s[2:] != rest:
            raise ValueError(f"concat shape mismatch: {shapes}")
    ctotal = sum(s[1] for s in shapes)
    out_shape = (n, ctotal) + rest

    def build():
        maps = []
        offset = 0
        for s in shapes:
            grids = list(np.meshgrid(*[np.arange(d) for d in s], indexing="ij"))
            grids[1] = grids[1] + offset
            flat = np.zeros_like(grids[0])
            for g, dim in zip(grids, out_shape):
                flat = flat * dim + g
            maps.append(flat.reshape(-1))
            offset += s[1]
        return maps

    maps = _cached(("concat", tuple(shapes)), build)
    out = put(parts[0], maps[0], out_shape)
    for p, m in zip(parts[1:], maps[1:]):
        out = add(out, put(p, m, out_shape))
    return out


def stack_new_axis1(parts: list[Tensor]) -> Tensor:
    """Stack k same-shape tensors (N, *sp) into (N, k, *sp)."""
    n = parts[0].shape[0]
    rest = parts[0].shape[1:]
    expanded = [reshape(p, (n, 1) + rest) for p in parts]
    return concat_channels(expanded)


def init_uniform_fan_in(shape, rng: np.random.Generator, fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
