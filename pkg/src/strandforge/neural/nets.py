"""Declarative network graphs for the three generator/discriminator pairs.

Networks are described as a flat, topologically ordered list of layer specs
(a DAG by name references) and executed by a generic interpreter, so shape
propagation, parameter initialization, and serialization all read the same
structure. Channel widths scale with a resolution factor (minimum 4) so the
reference topology can train at desk scale.

Net ids: ``s2o`` maps a sketch+mask image to a dense orientation map,
``o2v`` lifts an orientation+depth image to a 3D vector field, and ``v2v``
updates a rotated vector field under new-view guidance. Discriminators score
image/volume pairs against their conditioning input.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dfield

import numpy as np

from . import layers as L
from .tensor import Tensor, relu, tensor

__all__ = [
    "LayerSpec", "NetSpec", "scaled_channels", "spec_hash",
    "build_s2o_generator", "build_s2o_discriminator",
    "build_o2v_generator", "build_v2v_generator", "build_vol_discriminator",
    "build_pair", "infer_shapes", "init_params", "forward",
]


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    inputs: tuple[str, ...] = ()
    in_ch: int = 0
    out_ch: int = 0
    kernel: int = 0
    stride: int = 1
    pad: int = 1
    in_features: int = 0  # linear only


@dataclass(frozen=True)
class NetSpec:
    net_id: str
    role: str  # "generator" | "discriminator"
    scale: float
    resolution: int
    depth: int
    layers: tuple[LayerSpec, ...]
    output: str
    inputs: dict = dfield(default_factory=dict)  # name -> shape without batch
    feature_taps: tuple[str, ...] = ()


def scaled_channels(base: int, scale: float) -> int:
    return max(4, int(round(base * scale)))


def spec_hash(spec: NetSpec) -> str:
    doc = {
        "net_id": spec.net_id, "role": spec.role, "scale": spec.scale,
        "resolution": spec.resolution, "depth": spec.depth,
        "layers": [{k: getattr(l, k) for k in l.__dataclass_fields__} for l in spec.layers],
        "output": spec.output, "inputs": {k: list(v) for k, v in spec.inputs.items()},
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


class _Builder:
    def __init__(self):
        self.layers: list[LayerSpec] = []
        self.ch: dict[str, int] = {}

    def inp(self, name, channels):
        self.layers.append(LayerSpec(name, "input"))
        self.ch[name] = channels
        return name

    def _add(self, spec: LayerSpec, out_ch: int):
        self.layers.append(spec)
        self.ch[spec.name] = out_ch
        return spec.name

    def conv(self, name, src, out_ch, k, s, p, nd=2):
        kind = "conv2d" if nd == 2 else "conv3d"
        return self._add(LayerSpec(name, kind, (src,), self.ch[src], out_ch, k, s, p), out_ch)

    def deconv(self, name, src, out_ch, k, s, p, nd=2):
        kind = "deconv2d" if nd == 2 else "deconv3d"
        return self._add(LayerSpec(name, kind, (src,), self.ch[src], out_ch, k, s, p), out_ch)

    def relu(self, name, src):
        return self._add(LayerSpec(name, "relu", (src,)), self.ch[src])

    def pool(self, name, src):
        return self._add(LayerSpec(name, "maxpool2d", (src,), kernel=2, stride=2), self.ch[src])

    def add(self, name, a, b):
        return self._add(LayerSpec(name, "add", (a, b)), self.ch[a])

    def tile_add(self, name, vol, feat2d):
        return self._add(LayerSpec(name, "tile_add", (vol, feat2d)), self.ch[vol])

    def stack1(self, name, srcs):
        return self._add(LayerSpec(name, "stack1", tuple(srcs)), len(srcs))

    def linear(self, name, src, out_features):
        return self._add(LayerSpec(name, "linear", (src,), out_ch=out_features), out_features)

    def conv_relu(self, name, src, out_ch, k, s, p, nd=2):
        c = self.conv(name, src, out_ch, k, s, p, nd)
        return self.relu(name + ".r", c)

    def deconv_relu(self, name, src, out_ch, k, s, p, nd=2):
        c = self.deconv(name, src, out_ch, k, s, p, nd)
        return self.relu(name + ".r", c)

    def resblock(self, name, src, out_ch, nd=2):
        in_ch = self.ch[src]
        a = self.conv(f"{name}.a", src, out_ch, 3, 1, 1, nd)
        ar = self.relu(f"{name}.a.r", a)
        b = self.conv(f"{name}.b", ar, out_ch, 3, 1, 1, nd)
        shortcut = src
        if in_ch != out_ch:
            shortcut = self.conv(f"{name}.proj", src, out_ch, 1, 1, 0, nd)
        s = self.add(f"{name}.add", b, shortcut)
        return self.relu(f"{name}.r", s)


def build_s2o_generator(resolution: int, scale: float = 1.0) -> NetSpec:
    """Image-to-image generator: 3 downs, 8 residual blocks, 3 ups."""
    c32, c64, c128 = (scaled_channels(c, scale) for c in (32, 64, 128))
    c16 = scaled_channels(16, scale)
    g = _Builder()
    x = g.inp("x", 3)
    h = g.conv_relu("enc1", x, c32, 4, 2, 1)
    h = g.conv_relu("enc2", h, c64, 4, 2, 1)
    h = g.conv_relu("enc3", h, c128, 4, 2, 1)
    for i in range(8):
        h = g.resblock(f"res{i}", h, c128)
    h = g.deconv_relu("dec1", h, c64, 4, 2, 1)
    h = g.deconv_relu("dec2", h, c32, 4, 2, 1)
    h = g.deconv_relu("dec3", h, c16, 4, 2, 1)
    out = g.conv("out", h, 2, 3, 1, 1)
    return NetSpec("s2o", "generator", scale, resolution, 0, tuple(g.layers), out,
                   {"x": (3, resolution, resolution)})


def build_s2o_discriminator(resolution: int, scale: float = 1.0) -> NetSpec:
    """Conditional critic over (map, sketch, mask) stacks: 4 convs + linear."""
    cs = [scaled_channels(c, scale) for c in (32, 64, 128, 256)]
    g = _Builder()
    x = g.inp("x", 5)
    h = x
    taps = []
    for i, c in enumerate(cs, start=1):
        h = g.conv_relu(f"d{i}", h, c, 4, 2, 1)
        taps.append(h)
    out = g.linear("score", h, 1)
    spec = NetSpec("s2o", "discriminator", scale, resolution, 0, tuple(g.layers), out,
                   {"x": (5, resolution, resolution)}, feature_taps=tuple(taps))
    return _fix_linear_features(spec)


def build_o2v_generator(resolution: int, depth: int, scale: float = 1.0) -> NetSpec:
    """2D encoder + three per-axis decoders reshaped to a volume, refined by
    a tiny 3D U-Net with tiled 2D feature injection."""
    c16, c32, c64, c128 = (scaled_channels(c, scale) for c in (16, 32, 64, 128))
    g = _Builder()
    x = g.inp("x2d", 3)
    rb1 = g.resblock("rb1", x, c16)          # full res, c16
    p1 = g.pool("pool1", rb1)
    rb2 = g.resblock("rb2", p1, c32)         # half res, c32
    p2 = g.pool("pool2", rb2)
    rb3 = g.resblock("rb3", p2, c64)         # quarter res, c64
    axes_out = []
    for ax in ("ax", "ay", "az"):
        h = g.resblock(f"{ax}.rb", rb3, c64)
        h = g.deconv_relu(f"{ax}.up1", h, c128, 4, 2, 1)
        h = g.deconv_relu(f"{ax}.up2", h, c128, 4, 2, 1)
        h = g.conv(f"{ax}.slices", h, depth, 3, 1, 1)
        h = g.relu(f"{ax}.slices.r", h)
        axes_out.append(h)                   # (N, depth, H, W)
    vol = g.stack1("vol", axes_out)          # (N, 3, depth, H, W)
    e1 = g.conv_relu("v.enc1", vol, c32, 4, 2, 1, nd=3)
    e1 = g.tile_add("v.tile1", e1, rb2)      # rb2 tiles to (c32, D/2, H/2, W/2)
    e2 = g.conv_relu("v.enc2", e1, c64, 4, 2, 1, nd=3)
    d1 = g.deconv_relu("v.dec1", e2, c32, 4, 2, 1, nd=3)
    d1 = g.add("v.skip1", d1, e1)
    d2 = g.deconv_relu("v.dec2", d1, c16, 4, 2, 1, nd=3)
    d2 = g.tile_add("v.tile2", d2, rb1)      # rb1 tiles to (c16, D, H, W)
    out = g.conv("out", d2, 3, 3, 1, 1, nd=3)
    return NetSpec("o2v", "generator", scale, resolution, depth, tuple(g.layers), out,
                   {"x2d": (3, resolution, resolution)})


def build_v2v_generator(resolution: int, depth: int, scale: float = 1.0) -> NetSpec:
    """Volume-to-volume updater guided by tiled 2D features; extra residual
    blocks around each stage since the task is to edit the input field."""
    c16, c32, c64 = (scaled_channels(c, scale) for c in (16, 32, 64))
    g = _Builder()
    vol = g.inp("vol", 3)
    x2d = g.inp("x2d", 3)
    rb1 = g.resblock("rb1", x2d, c16)
    p1 = g.pool("pool1", rb1)
    rb2 = g.resblock("rb2", p1, c32)
    p2 = g.pool("pool2", rb2)
    g.resblock("rb3", p2, c64)  # deepest 2D features (kept for capacity)
    e0 = g.resblock("v.rb0", vol, c16, nd=3)
    e0 = g.tile_add("v.tile0", e0, rb1)
    e1 = g.conv_relu("v.enc1", e0, c32, 4, 2, 1, nd=3)
    e1 = g.resblock("v.rb1", e1, c32, nd=3)
    e1 = g.tile_add("v.tile1", e1, rb2)
    e2 = g.conv_relu("v.enc2", e1, c64, 4, 2, 1, nd=3)
    e2 = g.resblock("v.rb2", e2, c64, nd=3)
    d1 = g.deconv_relu("v.dec1", e2, c32, 4, 2, 1, nd=3)
    d1 = g.add("v.skip1", d1, e1)
    d1 = g.resblock("v.rb3", d1, c32, nd=3)
    d2 = g.deconv_relu("v.dec2", d1, c16, 4, 2, 1, nd=3)
    d2 = g.add("v.skip2", d2, e0)
    d2 = g.resblock("v.rb4", d2, c16, nd=3)
    out = g.conv("out", d2, 3, 3, 1, 1, nd=3)
    return NetSpec("v2v", "generator", scale, resolution, depth, tuple(g.layers), out,
                   {"vol": (3, depth, resolution, resolution), "x2d": (3, resolution, resolution)})


def build_vol_discriminator(net_id: str, resolution: int, depth: int, scale: float = 1.0) -> NetSpec:
    """3D mirror of the image critic: 4 3D convs + linear, conditioned by a
    tiled (orientation, depth) image concatenated to the volume."""
    cs = [scaled_channels(c, scale) for c in (32, 64, 128, 256)]
    g = _Builder()
    x = g.inp("x", 6)
    h = x
    taps = []
    for i, c in enumerate(cs, start=1):
        k = 4 if i <= 2 else 3  # k3 keeps small depths alive at desk scale
        h = g.conv_relu(f"d{i}", h, c, k, 2, 1, nd=3)
        taps.append(h)
    out = g.linear("score", h, 1)
    spec = NetSpec(net_id, "discriminator", scale, resolution, depth, tuple(g.layers), out,
                   {"x": (6, depth, resolution, resolution)}, feature_taps=tuple(taps))
    return _fix_linear_features(spec)


def build_pair(net_id: str, resolution: int, depth: int = 0, scale: float = 1.0):
    if net_id == "s2o":
        return build_s2o_generator(resolution, scale), build_s2o_discriminator(resolution, scale)
    if net_id == "o2v":
        return build_o2v_generator(resolution, depth, scale), build_vol_discriminator("o2v", resolution, depth, scale)
    if net_id == "v2v":
        return build_v2v_generator(resolution, depth, scale), build_vol_discriminator("v2v", resolution, depth, scale)
    raise ValueError(f"unknown net id {net_id!r}")


# ---------------------------------------------------------------------------
# Interpretation

def infer_shapes(spec: NetSpec, batch: int = 1) -> dict[str, tuple]:
    shapes: dict[str, tuple] = {}
    for layer in spec.layers:
        if layer.kind == "input":
            shapes[layer.name] = (batch,) + tuple(spec.inputs[layer.name])
            continue
        src = shapes[layer.inputs[0]]
        if layer.kind in ("conv2d", "conv3d"):
            sp = tuple((d + 2 * layer.pad - layer.kernel) // layer.stride + 1 for d in src[2:])
            shapes[layer.name] = (src[0], layer.out_ch) + sp
        elif layer.kind in ("deconv2d", "deconv3d"):
            sp = tuple((d - 1) * layer.stride - 2 * layer.pad + layer.kernel for d in src[2:])
            shapes[layer.name] = (src[0], layer.out_ch) + sp
        elif layer.kind == "maxpool2d":
            sp = tuple(d // 2 for d in src[2:])
            shapes[layer.name] = src[:2] + sp
        elif layer.kind in ("relu",):
            shapes[layer.name] = src
        elif layer.kind == "add":
            other = shapes[layer.inputs[1]]
            if other != src:
                raise ValueError(f"{layer.name}: add shapes differ {src} vs {other}")
            shapes[layer.name] = src
        elif layer.kind == "tile_add":
            feat = shapes[layer.inputs[1]]
            expect = (src[0], src[1], src[3], src[4])
            if feat != expect:
                raise ValueError(f"{layer.name}: tiled feature {feat} does not match volume {src}")
            shapes[layer.name] = src
        elif layer.kind == "stack1":
            parts = [shapes[k] for k in layer.inputs]
            shapes[layer.name] = (src[0], len(parts)) + src[1:]
        elif layer.kind == "linear":
            shapes[layer.name] = (src[0], layer.out_ch)
        else:
            raise ValueError(f"unknown layer kind {layer.kind}")
    return shapes


def _fix_linear_features(spec: NetSpec) -> NetSpec:
    shapes = infer_shapes(spec)
    new_layers = []
    for layer in spec.layers:
        if layer.kind == "linear":
            src_shape = shapes[layer.inputs[0]]
            feats = int(np.prod(src_shape[1:]))
            layer = LayerSpec(layer.name, layer.kind, layer.inputs, layer.in_ch,
                              layer.out_ch, layer.kernel, layer.stride, layer.pad,
                              in_features=feats)
        new_layers.append(layer)
    return NetSpec(spec.net_id, spec.role, spec.scale, spec.resolution, spec.depth,
                   tuple(new_layers), spec.output, spec.inputs, spec.feature_taps)


def param_shapes(spec: NetSpec) -> dict[str, tuple]:
    out: dict[str, tuple] = {}
    for layer in spec.layers:
        if layer.kind in ("conv2d", "conv3d"):
            nd = 2 if layer.kind == "conv2d" else 3
            out[f"{layer.name}.w"] = (layer.out_ch, layer.in_ch) + (layer.kernel,) * nd
            out[f"{layer.name}.b"] = (layer.out_ch,)
        elif layer.kind in ("deconv2d", "deconv3d"):
            nd = 2 if layer.kind == "deconv2d" else 3
            out[f"{layer.name}.w"] = (layer.in_ch, layer.out_ch) + (layer.kernel,) * nd
            out[f"{layer.name}.b"] = (layer.out_ch,)
        elif layer.kind == "linear":
            out[f"{layer.name}.w"] = (layer.out_ch, layer.in_features)
            out[f"{layer.name}.b"] = (layer.out_ch,)
    return out


def init_params(spec: NetSpec, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """Uniform fan-in initialization, seed-controlled per parameter."""
    out = {}
    for i, (name, shape) in enumerate(sorted(param_shapes(spec).items())):
        rng = np.random.default_rng((seed, i))
        if name.endswith(".b"):
            out[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            out[name] = L.init_uniform_fan_in(shape, rng, fan_in, dtype)
    return out


def forward(spec: NetSpec, params: dict, inputs: dict) -> dict[str, Tensor]:
    """Run the graph; returns every node's output keyed by layer name."""
    vals: dict[str, Tensor] = {}

    def p(name):
        v = params[name]
        return v if isinstance(v, Tensor) else tensor(v)

    for layer in spec.layers:
        if layer.kind == "input":
            x = inputs[layer.name]
            vals[layer.name] = x if isinstance(x, Tensor) else tensor(x)
        elif layer.kind == "conv2d":
            vals[layer.name] = L.conv2d(vals[layer.inputs[0]], p(f"{layer.name}.w"),
                                        p(f"{layer.name}.b"), layer.stride, layer.pad)
        elif layer.kind == "conv3d":
            vals[layer.name] = L.conv3d(vals[layer.inputs[0]], p(f"{layer.name}.w"),
                                        p(f"{layer.name}.b"), layer.stride, layer.pad)
        elif layer.kind == "deconv2d":
            vals[layer.name] = L.deconv2d(vals[layer.inputs[0]], p(f"{layer.name}.w"),
                                          p(f"{layer.name}.b"), layer.stride, layer.pad)
        elif layer.kind == "deconv3d":
            vals[layer.name] = L.deconv3d(vals[layer.inputs[0]], p(f"{layer.name}.w"),
                                          p(f"{layer.name}.b"), layer.stride, layer.pad)
        elif layer.kind == "maxpool2d":
            vals[layer.name] = L.maxpool2d(vals[layer.inputs[0]], layer.kernel, layer.stride)
        elif layer.kind == "relu":
            vals[layer.name] = relu(vals[layer.inputs[0]])
        elif layer.kind == "add":
            from .tensor import add as tadd

            vals[layer.name] = tadd(vals[layer.inputs[0]], vals[layer.inputs[1]])
        elif layer.kind == "tile_add":
            from .tensor import add as tadd

            vol = vals[layer.inputs[0]]
            feat = vals[layer.inputs[1]]
            vals[layer.name] = tadd(vol, L.tile_depth(feat, vol.shape[2]))
        elif layer.kind == "stack1":
            vals[layer.name] = L.stack_new_axis1([vals[k] for k in layer.inputs])
        elif layer.kind == "linear":
            vals[layer.name] = L.linear(vals[layer.inputs[0]], p(f"{layer.name}.w"),
                                        p(f"{layer.name}.b"))
        else:
            raise ValueError(f"unknown layer kind {layer.kind}")
    return vals
