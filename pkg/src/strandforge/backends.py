"""Inference backends: trained networks or deterministic diffusion.

A backend answers three questions of the interactive loop: sketch+mask ->
dense orientation map, dense+depth -> 3D field, and rotated field + new-view
guidance -> updated field. The diffusion backend needs no weights and is
fully deterministic; the neural backend loads WTS1 weight files for any of
the three networks and falls back to diffusion for stages without weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
from pathlib import Path

import numpy as np

from .fields import DepthMap, MaskMap, OrientationMap2D, VectorField3D
from .solvers import ShellParams, diffuse_field_3d, diffuse_orientation_2d

__all__ = ["DiffusionBackend", "NeuralBackend", "make_backend"]


def _fallback_sketch(mask: MaskMap) -> OrientationMap2D:
    """Downward strokes along the mask's top boundary for strokeless input."""
    m = mask.as_bool()
    h, w = m.shape
    out = np.zeros((h, w, 2))
    for c in range(w):
        rows = np.nonzero(m[:, c])[0]
        if rows.size:
            out[rows[0], c] = (0.0, -1.0)
    return OrientationMap2D(out)


@dataclass
class DiffusionBackend:
    """Laplace-diffusion backend; runs without any trained weights."""

    shell: ShellParams = dfield(default_factory=ShellParams)
    name: str = "diffusion"

    def infer_dense(self, sketch: OrientationMap2D, mask: MaskMap) -> OrientationMap2D:
        if not (sketch.valid_mask() & mask.as_bool()).any():
            sketch = _fallback_sketch(mask)
        return diffuse_orientation_2d(sketch, mask)

    def lift_field(self, dense: OrientationMap2D, mask: MaskMap, depth: DepthMap) -> VectorField3D:
        return diffuse_field_3d(dense, mask, depth, self.shell)

    def update_field(self, rotated: VectorField3D, dense: OrientationMap2D,
                     mask: MaskMap, depth: DepthMap) -> VectorField3D:
        params = ShellParams(
            nz=self.shell.nz, box_min=self.shell.box_min, box_max=self.shell.box_max,
            thickness_cells=self.shell.thickness_cells, margin_behind=self.shell.margin_behind,
            prior=rotated, prior_weight=self.shell.prior_weight,
        )
        return diffuse_field_3d(dense, mask, depth, params)


@dataclass
class NeuralBackend:
    """Runs the trained networks; stages without weights fall back to diffusion."""

    weight_dir: Path
    scale: float = 0.25
    shell: ShellParams = dfield(default_factory=ShellParams)
    name: str = "neural"

    def __post_init__(self):
        self.weight_dir = Path(self.weight_dir)
        self._params: dict[str, tuple] = {}
        self._fallback = DiffusionBackend(self.shell)

    def _load(self, net_id: str, resolution: int, depth: int):
        from .neural import nets
        from .neural.train import load_weights

        key = f"{net_id}_{resolution}_{depth}"
        if key in self._params:
            return self._params[key]
        path = self.weight_dir / f"{net_id}.wts"
        if not path.exists():
            self._params[key] = None
        else:
            gen, _ = nets.build_pair(net_id, resolution, depth, self.scale)
            params, _ = load_weights(path, gen)
            self._params[key] = (gen, params)
        return self._params[key]

    def infer_dense(self, sketch: OrientationMap2D, mask: MaskMap) -> OrientationMap2D:
        from .neural import nets
        from .neural.losses import make_condition

        loaded = self._load("s2o", sketch.height, 0)
        if loaded is None:
            return self._fallback.infer_dense(sketch, mask)
        gen, params = loaded
        x = make_condition(sketch, mask.data.astype(np.float64))[None].astype(np.float32)
        out = nets.forward(gen, params, {"x": x})[gen.output].data[0]
        dense = np.clip(np.transpose(out, (1, 2, 0)), -1.0, 1.0)
        dense[~mask.as_bool()] = 0.0
        return OrientationMap2D(dense).normalized()

    def lift_field(self, dense: OrientationMap2D, mask: MaskMap, depth: DepthMap) -> VectorField3D:
        from .neural import nets
        from .neural.losses import make_condition, vol_to_field

        loaded = self._load("o2v", dense.height, self.shell.nz)
        if loaded is None:
            return self._fallback.lift_field(dense, mask, depth)
        gen, params = loaded
        x = make_condition(dense, depth.data)[None].astype(np.float32)
        out = nets.forward(gen, params, {"x2d": x})[gen.output].data[0]
        return vol_to_field(np.clip(out, -1.0, 1.0), self.shell.box_min, self.shell.box_max)

    def update_field(self, rotated: VectorField3D, dense: OrientationMap2D,
                     mask: MaskMap, depth: DepthMap) -> VectorField3D:
        from .neural import nets
        from .neural.losses import field_to_vol, make_condition, vol_to_field

        loaded = self._load("v2v", dense.height, rotated.nz)
        if loaded is None:
            return self._fallback.update_field(rotated, dense, mask, depth)
        gen, params = loaded
        x = make_condition(dense, depth.data)[None].astype(np.float32)
        vol = field_to_vol(rotated)[None].astype(np.float32)
        out = nets.forward(gen, params, {"vol": vol, "x2d": x})[gen.output].data[0]
        return vol_to_field(np.clip(out, -1.0, 1.0), rotated.box_min, rotated.box_max)


def make_backend(name: str, weight_dir=None, shell: ShellParams | None = None, scale: float = 0.25):
    shell = shell or ShellParams()
    if name == "diffusion":
        return DiffusionBackend(shell)
    if name == "neural":
        if weight_dir is None:
            raise ValueError("neural backend needs a weight directory")
        return NeuralBackend(Path(weight_dir), scale=scale, shell=shell)
    raise ValueError(f"unknown backend {name!r} (expected neural or diffusion)")
