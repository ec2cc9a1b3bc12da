"""WGAN-GP training loop with deferred projection/Laplacian staging.

One critic update per generator update, adaptive moment estimation with
lr 1e-4 and decay (0.5, 0.9). For the volumetric nets the projection and
Laplacian terms stay disabled for the first half of the run (scaled from the
reference schedule), which speeds up early convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
from pathlib import Path

import numpy as np

from .. import formats
from ..fields import build_visibility_index
from . import losses, nets
from .losses import LossWeights
from .tensor import Tensor, grad_of, no_grad, tensor

__all__ = ["TrainHyper", "TrainingDiverged", "Adam", "train", "prepare_samples",
           "save_weights", "load_weights", "generator_forward"]


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainHyper:
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.9)
    adam_eps: float = 1e-8
    seed: int = 0
    scale: float = 0.25
    stage_fraction: float = 0.5  # fraction of epochs before proj/lap switch on
    weights: LossWeights = dfield(default_factory=LossWeights)
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    critic_steps: int = 1
    log_every: int = 25


class Adam:
    """Adaptive moment estimation over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr=1e-4, betas=(0.5, 0.9), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1t = 1 - self.b1 ** self.t
        b2t = 1 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mh = self.m[k] / b1t
            vh = self.v[k] / b2t
            p.data -= (self.lr * mh / (np.sqrt(vh) + self.eps)).astype(p.data.dtype)


# ---------------------------------------------------------------------------
# sample preparation

def prepare_samples(net_id: str, samples, trace_seed: int = 0) -> list[dict]:
    """Convert dataset tuples into per-sample tensor-ready arrays."""
    prepared = []
    for i, s in enumerate(samples):
        if net_id == "s2o":
            x = losses.make_condition(s.sketch, s.mask.data.astype(np.float64))
            real = losses.map_to_plane(s.dense.data)
            prepared.append({"x": x.astype(np.float32), "real": real.astype(np.float32)})
        elif net_id == "o2v":
            x = losses.make_condition(s.dense, s.depth.data)
            real = losses.field_to_vol(s.fld)
            vis = build_visibility_index(s.fld)
            prepared.append({
                "x": x.astype(np.float32),
                "real": real.astype(np.float32),
                "vis": vis,
                "proj_dense": s.dense.data,
                "proj_sketch": s.sketch.data,
                "grid": s.fld.shape,
            })
        elif net_id == "v2v":
            from ..datagen import TraceParams, trace_sketch_map

            x = losses.make_condition(s.dense, s.depth.data)
            vol = losses.field_to_vol(s.rotated_field)
            real = losses.field_to_vol(s.target)
            vis = build_visibility_index(s.target)
            try:
                sketch = trace_sketch_map(s.dense, TraceParams(curve_count=8, seed=trace_seed + i)).data
            except ValueError:
                sketch = np.zeros_like(s.dense.data)
            gamma = losses.invisible_tensor_indices(s.rotated_field, 0)
            prepared.append({
                "x": x.astype(np.float32),
                "vol": vol.astype(np.float32),
                "real": real.astype(np.float32),
                "vis": vis,
                "proj_dense": s.dense.data,
                "proj_sketch": sketch,
                "gamma_single": gamma,
                "grid": s.target.shape,
            })
        else:
            raise ValueError(f"unknown net id {net_id!r}")
    return prepared


def generator_forward(net_id: str, gen: nets.NetSpec, g_params, batch) -> Tensor:
    if net_id == "v2v":
        vals = nets.forward(gen, g_params, {"vol": tensor(batch["vol"]), "x2d": tensor(batch["x"])})
    else:
        vals = nets.forward(gen, g_params, {"x2d": tensor(batch["x"])} if net_id == "o2v" else {"x": tensor(batch["x"])})
    return vals[gen.output]


def _stack(prepared, idx, key):
    return np.stack([prepared[i][key] for i in idx])


def _gamma_batched(prepared, idx, vol_shape):
    """Recompute per-sample invisible sets at their batch offsets."""
    per = int(np.prod(vol_shape[1:]))
    out = []
    for bi, i in enumerate(idx):
        out.append(prepared[i]["gamma_single"] + bi * per)
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def train(net_id: str, samples, hyper: TrainHyper, resolution: int | None = None,
          depth: int | None = None, progress=None):
    """Train one generator/critic pair; returns (g_params, d_params, history).

    History rows carry the per-iteration critic and generator losses plus the
    individual generator terms. Divergence (non-finite loss) aborts with a
    diagnostic that names the offending term.
    """
    if not samples:
        raise ValueError("training needs a non-empty dataset")
    prepared = prepare_samples(net_id, samples, trace_seed=hyper.seed)
    if resolution is None:
        resolution = prepared[0]["x"].shape[-1]
    if depth is None and net_id in ("o2v", "v2v"):
        depth = prepared[0]["real"].shape[1]
    gen, disc = nets.build_pair(net_id, resolution, depth or 0, hyper.scale)

    rng = np.random.default_rng(hyper.seed)
    g_params = {k: tensor(v, requires_grad=True) for k, v in nets.init_params(gen, hyper.seed).items()}
    d_params = {k: tensor(v, requires_grad=True) for k, v in nets.init_params(disc, hyper.seed + 1).items()}
    g_opt = Adam(g_params, hyper.lr, hyper.betas, hyper.adam_eps)
    d_opt = Adam(d_params, hyper.lr, hyper.betas, hyper.adam_eps)
    w = hyper.weights

    history: list[dict] = []
    n = len(prepared)
    iteration = 0
    stage_switch = int(hyper.stage_fraction * hyper.epochs)

    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        staged = net_id != "s2o" and epoch < stage_switch
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            if len(idx) == 0:
                continue
            batch = {"x": _stack(prepared, idx, "x")}
            if net_id == "v2v":
                batch["vol"] = _stack(prepared, idx, "vol")
            real = _stack(prepared, idx, "real")
            cond2d = tensor(batch["x"])

            # critic update(s)
            with no_grad():
                fake = generator_forward(net_id, gen, g_params, batch).data
            if net_id == "s2o":
                cond = cond2d
            else:
                cond = losses.cond_to_volume(cond2d, real.shape[2])
            d_loss_val = gp_val = 0.0
            for _ in range(hyper.critic_steps):
                eps = rng.random(len(idx))
                d_loss, gp = losses.critic_loss(disc, d_params, real, fake, cond, eps, w.gp_lambda)
                d_grads = grad_of(d_loss, list(d_params.values()))
                d_opt.step({k: g.data for k, g in zip(d_params, d_grads)})
                d_loss_val, gp_val = d_loss.item(), gp.item()

            # generator update
            out = generator_forward(net_id, gen, g_params, batch)
            real_t = tensor(real)
            parts_t = {
                "content": losses.loss_content(out, real_t, cond, disc, d_params, w.content_layers),
                "style": losses.loss_style(out, real_t, cond, disc, d_params, w.style_layers),
            }
            if net_id in ("o2v", "v2v"):
                if staged:
                    zero = losses.smul(losses.tsum(out), 0.0)
                    parts_t["proj_dense"] = zero
                    parts_t["proj_sketch"] = zero
                    parts_t["laplacian"] = zero
                else:
                    vis_list = [prepared[i]["vis"] for i in idx]
                    dense_targets = [prepared[i]["proj_dense"] for i in idx]
                    sketch_targets = [prepared[i]["proj_sketch"] for i in idx]
                    grid = prepared[idx[0]]["grid"]
                    parts_t["proj_dense"] = losses.loss_proj(out, dense_targets, vis_list, grid)
                    parts_t["proj_sketch"] = losses.loss_proj(out, sketch_targets, vis_list, grid)
                    parts_t["laplacian"] = losses.loss_lap(out, real_t)
            if net_id == "v2v":
                gamma = _gamma_batched(prepared, idx, out.shape)
                parts_t["keep_invisible"] = losses.loss_ori(out, tensor(batch["vol"]), gamma)
            g_loss = losses.total_generator_loss(net_id, parts_t, w)
            g_grads = grad_of(g_loss, list(g_params.values()))
            g_opt.step({k: g.data for k, g in zip(g_params, g_grads)})

            row = {
                "iteration": iteration, "epoch": epoch,
                "d_loss": d_loss_val, "gp": gp_val, "g_loss": g_loss.item(),
                "staged": staged,
            }
            for k, v in parts_t.items():
                row[k] = v.item()
            row["content_per_element"] = row["content"] / out.size
            if not all(np.isfinite(v) for k, v in row.items() if isinstance(v, float)):
                bad = [k for k, v in row.items() if isinstance(v, float) and not np.isfinite(v)]
                raise TrainingDiverged(f"non-finite loss terms {bad} at iteration {iteration}")
            history.append(row)
            if progress and iteration % hyper.log_every == 0:
                progress(row)
            iteration += 1

        if hyper.checkpoint_every and hyper.checkpoint_dir and (epoch + 1) % hyper.checkpoint_every == 0:
            ckpt = Path(hyper.checkpoint_dir)
            ckpt.mkdir(parents=True, exist_ok=True)
            save_weights(ckpt / f"{net_id}_g_ep{epoch + 1}.wts", gen, g_params,
                         {"epoch": epoch + 1, "seed": hyper.seed})

    return g_params, d_params, {"history": history, "gen": gen, "disc": disc}


def save_weights(path, spec: nets.NetSpec, params: dict[str, Tensor], extra_meta: dict | None = None) -> None:
    tensors = {k: v.data for k, v in params.items()}
    meta = {
        "net": spec.net_id, "role": spec.role, "scale": spec.scale,
        "resolution": spec.resolution, "depth": spec.depth,
        "spec_hash": nets.spec_hash(spec),
    }
    if extra_meta:
        meta.update(extra_meta)
    formats.write_weights(path, tensors, meta)


def load_weights(path, spec: nets.NetSpec | None = None):
    """Read a weight file; verifies shapes (and hash when a spec is given)."""
    tensors, meta = formats.read_weights(path)
    if spec is not None:
        if meta and meta.get("spec_hash") not in (None, nets.spec_hash(spec)):
            raise ValueError("weight file was trained for a different network spec")
        want = nets.param_shapes(spec)
        missing = set(want) - set(tensors)
        if missing:
            raise ValueError(f"weight file missing tensors: {sorted(missing)[:4]}...")
        for k, shape in want.items():
            if tuple(tensors[k].shape) != tuple(shape):
                raise ValueError(f"tensor {k} has shape {tensors[k].shape}, expected {shape}")
    params = {k: tensor(v, requires_grad=True) for k, v in tensors.items()}
    return params, meta
