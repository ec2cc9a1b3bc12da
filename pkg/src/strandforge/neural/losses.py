"""Loss terms for the three adversarial pairs.

Generators are trained with a content + style combination measured through
the critic's feature stack (plus projection, Laplacian, and
orientation-preservation terms for the volumetric nets); critics follow the
Wasserstein objective with a gradient penalty. Feature layer 0 means the raw
maps themselves: the content term compares the generated map to the target
per pixel, the style term takes the Gram matrix of the (map, condition)
stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..fields import VectorField3D, build_visibility_index
from . import nets
from .layers import concat_channels, tile_depth
from .tensor import (
    Tensor, add, cmul, constant, grad_of, matmul, mul, pow_, put, reshape,
    smul, square, sub, sum_to, take, tensor, transpose, tsum,
)

__all__ = [
    "LossWeights", "disc_features", "loss_content", "loss_style", "loss_gp",
    "critic_loss", "loss_proj", "loss_lap", "loss_ori",
    "total_generator_loss", "field_to_vol", "vol_to_field", "map_to_plane",
    "vis_tensor_indices", "invisible_tensor_indices", "make_condition",
]


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights; defaults follow the reference configuration."""

    content_2d: float = 0.01   # alpha
    style_2d: float = 5.0      # beta
    content_3d: float = 0.01   # iota
    style_3d: float = 5.0      # kappa
    proj_dense: float = 0.1    # gamma
    proj_sketch: float = 0.5   # delta
    laplacian: float = 2e-5    # epsilon
    keep_invisible: float = 0.1  # zeta
    gp_lambda: float = 10.0
    content_layers: tuple[int, ...] = (0, 2)
    style_layers: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        for k in ("content_2d", "style_2d", "content_3d", "style_3d", "proj_dense",
                  "proj_sketch", "laplacian", "keep_invisible", "gp_lambda"):
            if getattr(self, k) < 0:
                raise ValueError(f"loss weight {k} must be >= 0")


# ---------------------------------------------------------------------------
# layout helpers

def field_to_vol(field: VectorField3D) -> np.ndarray:
    """(nx, ny, nz, 3) field -> (3, D, H, W) tensor plane (rows top-down)."""
    return np.ascontiguousarray(field.data.transpose(3, 2, 1, 0)[:, :, ::-1, :])


def vol_to_field(vol: np.ndarray, box_min, box_max) -> VectorField3D:
    data = np.asarray(vol)
    return VectorField3D(np.ascontiguousarray(data[:, :, ::-1, :].transpose(3, 2, 1, 0)), box_min, box_max)


def map_to_plane(data: np.ndarray) -> np.ndarray:
    """(H, W, C) raster -> (C, H, W) tensor plane."""
    return np.ascontiguousarray(np.transpose(data, (2, 0, 1)))


def make_condition(*maps) -> np.ndarray:
    """Stack raster maps/channels into one (C, H, W) condition plane."""
    planes = []
    for m in maps:
        a = m if isinstance(m, np.ndarray) else m.data
        if a.ndim == 2:
            a = a[:, :, None]
        planes.append(map_to_plane(a.astype(np.float64)))
    return np.concatenate(planes, axis=0)


def vis_tensor_indices(vis_cells: np.ndarray, grid_shape, sample: int, comps=(0, 1)) -> tuple[np.ndarray, np.ndarray]:
    """Flat gather indices into an (N,3,D,H,W) tensor for visible cells.

    Returns (idx, pixel_rc): idx has shape (P, len(comps)) and pixel_rc the
    matching (P, 2) integer pixel coordinates.
    """
    nx, ny, nz = grid_shape
    h, w = vis_cells.shape
    rs, cs = np.nonzero(vis_cells >= 0)
    v = vis_cells[rs, cs]
    iz = v % nz
    idx = []
    for k in comps:
        flat = (((sample * 3 + k) * nz + iz) * h + rs) * w + cs
        idx.append(flat)
    return np.stack(idx, axis=1), np.stack([rs, cs], axis=1)


def invisible_tensor_indices(field: VectorField3D, sample: int) -> np.ndarray:
    """Flat indices (all 3 components) of valid-but-invisible cells."""
    nx, ny, nz = field.shape
    valid = field.valid_mask()
    vis = build_visibility_index(field)
    visible = np.zeros(nx * ny * nz, dtype=bool)
    cells = vis.cells[vis.cells >= 0]
    visible[cells] = True
    gamma = np.nonzero(valid.reshape(-1) & ~visible)[0]
    ix = gamma // (ny * nz)
    iy = (gamma // nz) % ny
    iz = gamma % nz
    r = ny - 1 - iy
    idx = []
    for k in range(3):
        idx.append((((sample * 3 + k) * nz + iz) * ny + r) * nx + ix)
    return np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64)


# ---------------------------------------------------------------------------
# feature stack

def disc_features(spec: nets.NetSpec, params, image: Tensor, cond: Tensor):
    """Critic features [raw concat, conv activations...] plus the score."""
    x = concat_channels([image, cond])
    vals = nets.forward(spec, params, {"x": x})
    feats = [x] + [vals[t] for t in spec.feature_taps]
    return feats, vals[spec.output]


def cond_to_volume(cond2d: Tensor, depth: int) -> Tensor:
    return tile_depth(cond2d, depth)


def _sq_sum(t: Tensor) -> Tensor:
    return tsum(square(t))


def loss_content(fake: Tensor, real: Tensor, cond: Tensor,
                 spec: nets.NetSpec, params, layers=(0, 2)) -> Tensor:
    """Half squared feature differences; layer 0 compares the maps per pixel."""
    total = None
    need_feats = [l for l in layers if l > 0]
    if need_feats:
        ff, _ = disc_features(spec, params, fake, cond)
        fr, _ = disc_features(spec, params, real.detach(), cond)
    for l in layers:
        if l == 0:
            term = smul(_sq_sum(sub(fake, real.detach())), 0.5)
        else:
            if l >= len(ff):
                raise IndexError(f"content layer {l} out of range (have {len(ff)})")
            term = smul(_sq_sum(sub(ff[l], fr[l].detach())), 0.5)
        total = term if total is None else add(total, term)
    return total


def _gram(feat: Tensor) -> Tensor:
    """Channel Gram matrix per sample; feat is one sample (C, ...)."""
    c = feat.shape[0]
    f = reshape(feat, (c, feat.size // c))
    return matmul(f, transpose(f))


def loss_style(fake: Tensor, real: Tensor, cond: Tensor,
               spec: nets.NetSpec, params, layers=(0, 1, 2, 3, 4)) -> Tensor:
    """Gram matrix differences with 1 / (4 N_l^2 M_l^2) normalization."""
    ff, _ = disc_features(spec, params, fake, cond)
    fr, _ = disc_features(spec, params, real.detach(), cond)
    n = fake.shape[0]
    total = None
    for l in layers:
        if l >= len(ff):
            raise IndexError(f"style layer {l} out of range (have {len(ff)})")
        fl, rl = ff[l], fr[l]
        nch = fl.shape[1]
        m = fl.size // (n * nch)
        norm = 1.0 / (4.0 * (nch ** 2) * (m ** 2))
        for s in range(n):
            sz = fl.size // n
            sample_idx = np.arange(s * sz, (s + 1) * sz)
            gf = _gram(take(fl, sample_idx, (nch, m)))
            gr = _gram(take(rl, sample_idx, (nch, m)))
            term = smul(_sq_sum(sub(gf, gr.detach())), norm)
            total = term if total is None else add(total, term)
    return total


def loss_gp(spec: nets.NetSpec, params, real: np.ndarray, fake: np.ndarray,
            cond: Tensor, eps) -> Tensor:
    """(|grad of the critic at the interpolate| - 1)^2, averaged over batch.

    ``eps`` is a scalar or per-sample array in [0, 1]; the interpolate is
    ``eps * real + (1 - eps) * fake``.
    """
    real = np.asarray(real)
    fake = np.asarray(fake)
    e = np.asarray(eps, dtype=real.dtype)
    if e.ndim == 0:
        e = np.full(real.shape[0], float(e), dtype=real.dtype)
    if np.any(e < 0) or np.any(e > 1):
        raise ValueError("eps must lie in [0, 1]")
    ebc = e.reshape((-1,) + (1,) * (real.ndim - 1))
    xhat = tensor(ebc * real + (1.0 - ebc) * fake, requires_grad=True)
    _, score = disc_features(spec, params, xhat, cond)
    (gx,) = grad_of(tsum(score), [xhat], create_graph=True)
    n = real.shape[0]
    sq = reshape(square(gx), (n, gx.size // n))
    norms = pow_(sum_to(sq, (n, 1)), 0.5)
    pen = square(sub(norms, constant(np.ones((n, 1), dtype=real.dtype))))
    return smul(tsum(pen), 1.0 / n)


def critic_loss(spec: nets.NetSpec, params, real: np.ndarray, fake: np.ndarray,
                cond: Tensor, eps, gp_lambda: float = 10.0):
    """Critic objective: D(real) - D(fake) + lambda * gradient penalty."""
    _, s_real = disc_features(spec, params, tensor(real), cond)
    _, s_fake = disc_features(spec, params, tensor(fake), cond)
    n = real.shape[0]
    w = sub(smul(tsum(s_real), 1.0 / n), smul(tsum(s_fake), 1.0 / n))
    gp = loss_gp(spec, params, real, fake, cond, eps)
    return add(w, smul(gp, gp_lambda)), gp


def loss_proj(field_out: Tensor, targets, vis_list, grid_shape) -> Tensor:
    """Squared difference between projected field pixels and 2D targets.

    ``targets`` is a list of (H, W, 2) arrays (one per sample) whose valid
    pixels define the support; ``vis_list`` holds the per-sample visibility
    index built from the ground-truth field. Pixels with a target but no
    visible cell contribute nothing (their gradient has nowhere to land).
    """
    total = None
    for s, (tgt, vis) in enumerate(zip(targets, vis_list)):
        tgt = np.asarray(tgt)
        valid = np.linalg.norm(tgt, axis=2) > 0
        cells = np.where(valid, vis.cells, -1)
        idx, rc = vis_tensor_indices(cells, grid_shape, s)
        if len(idx) == 0:
            continue
        pred = take(field_out, idx, idx.shape)
        want = constant(tgt[rc[:, 0], rc[:, 1]].astype(field_out.dtype))
        term = _sq_sum(sub(pred, want))
        total = term if total is None else add(total, term)
    if total is None:
        total = smul(tsum(field_out), 0.0)
    return total


_LAP_CACHE: dict = {}


def _lap_maps(shape):
    key = tuple(shape)
    if key in _LAP_CACHE:
        return _LAP_CACHE[key]
    n, c, d, h, w = shape
    base = np.arange(n * c * d * h * w).reshape(shape)
    shifts = []
    deg = np.zeros(shape, dtype=np.float64)
    for axis in (2, 3, 4):
        for sign in (1, -1):
            idx = base.copy()
            sl_src = [slice(None)] * 5
            sl_dst = [slice(None)] * 5
            if sign == 1:
                sl_dst[axis] = slice(0, shape[axis] - 1)
                sl_src[axis] = slice(1, shape[axis])
            else:
                sl_dst[axis] = slice(1, shape[axis])
                sl_src[axis] = slice(0, shape[axis] - 1)
            idx[tuple(sl_dst)] = base[tuple(sl_src)]
            # cells missing this neighbor keep their own index: the
            # (neighbor - self) difference then vanishes for them
            shifts.append(idx)
            deg[tuple(sl_dst)] += 1.0
    _LAP_CACHE[key] = (shifts, np.maximum(deg, 1.0))
    return _LAP_CACHE[key]


def tensor_laplacian(vol: Tensor) -> Tensor:
    """Mean of existing 6-neighborhood differences, batched over (N, C)."""
    shifts, deg = _lap_maps(vol.shape)
    acc = None
    for idx in shifts:
        t = take(vol, idx, vol.shape)
        acc = t if acc is None else add(acc, t)
    acc = sub(acc, smul(vol, 6.0))
    return cmul(acc, 1.0 / deg)


def loss_lap(field_out: Tensor, field_target: Tensor) -> Tensor:
    """Squared difference of discrete Laplacians over all cells."""
    if field_out.shape != field_target.shape:
        raise ValueError("laplacian loss needs matching grids")
    return _sq_sum(sub(tensor_laplacian(field_out), tensor_laplacian(field_target.detach())))


def loss_ori(field_out: Tensor, rotated_input: Tensor, gamma_idx: np.ndarray) -> Tensor:
    """Squared difference on the invisible cell set (keeps prior content)."""
    if len(gamma_idx) == 0:
        return smul(tsum(field_out), 0.0)
    pred = take(field_out, gamma_idx, gamma_idx.shape)
    want = take(rotated_input.detach(), gamma_idx, gamma_idx.shape)
    return _sq_sum(sub(pred, want.detach()))


def total_generator_loss(net_id: str, parts: dict, weights: LossWeights | None = None):
    """Weighted sum per net; works on Tensors or plain floats, unnormalized."""
    w = weights or LossWeights()
    if net_id == "s2o":
        terms = [("content", w.content_2d), ("style", w.style_2d)]
    elif net_id == "o2v":
        terms = [("content", w.content_3d), ("style", w.style_3d),
                 ("proj_dense", w.proj_dense), ("proj_sketch", w.proj_sketch),
                 ("laplacian", w.laplacian)]
    elif net_id == "v2v":
        terms = [("content", w.content_3d), ("style", w.style_3d),
                 ("proj_dense", w.proj_dense), ("proj_sketch", w.proj_sketch),
                 ("laplacian", w.laplacian), ("keep_invisible", w.keep_invisible)]
    else:
        raise ValueError(f"unknown net id {net_id!r}")
    total = None
    for name, weight in terms:
        if name not in parts:
            raise KeyError(f"missing loss part {name!r} for {net_id}")
        p = parts[name]
        term = smul(p, weight) if isinstance(p, Tensor) else p * weight
        total = term if total is None else (add(total, term) if isinstance(term, Tensor) else total + term)
    return total
