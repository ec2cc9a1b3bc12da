"""Finite-difference verification of analytic gradients.

Central differences with h = 1e-5 on randomly subsampled coordinates, run in
double precision. Two classes of coordinate are excluded as FD-invalid:

* kink crossings: the two perturbed evaluations drive some ReLU
  pre-activation across zero (sign change, or magnitude within 1e-6 while
  moving), so the loss is not differentiable on the probed interval;
* unresolvable coordinates: both the analytic and FD values are smaller
  than ~1e-6 of the loss magnitude, where the f(x+h) - f(x-h) cancellation
  noise (about 1e-11 Â· |f|) exceeds any achievable relative accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, grad_of, kink_between, relu_monitor

__all__ = ["GradCheckReport", "grad_check"]

FD_STEP = 1e-5
KINK_MARGIN = 1e-6


@dataclass
class GradCheckReport:
    name: str
    max_rel_err: float = 0.0
    checked: int = 0
    skipped_kinks: int = 0
    skipped_unresolvable: int = 0
    per_tensor: dict = field(default_factory=dict)

    def ok(self, tol: float) -> bool:
        return self.checked > 0 and self.max_rel_err < tol


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a) + abs(b), 1e-6)


def run_gradient_suite(tol: float = 1e-4, samples_per_tensor: int = 4,
                       seed: int = 0) -> list[GradCheckReport]:
    """FD-verify all seven loss terms on tiny double-precision networks.

    Returns one report per term: content, style, gradient penalty (second
    order, checked at 10x the base tolerance), the two projection variants,
    Laplacian, and orientation preservation.
    """
    from ..fields import VectorField3D, build_visibility_index
    from . import losses, nets
    from .tensor import constant, tensor

    rng = np.random.default_rng(seed)

    def dparams(spec, s):
        return {k: tensor(v.astype(np.float64), requires_grad=True)
                for k, v in nets.init_params(spec, seed=s).items()}

    def spread(spec, params, k=6):
        """Subset in layer order: input side, middle, and the output side,
        where FD probes are least likely to straddle activation kinks."""
        names = []
        for layer in spec.layers:
            for suffix in (".w", ".b"):
                if f"{layer.name}{suffix}" in params:
                    names.append(f"{layer.name}{suffix}")
        picks = [names[0], names[len(names) // 2]] + names[-(k - 2):]
        return {n: params[n] for n in dict.fromkeys(picks)}

    gen2d = nets.build_s2o_generator(16, 0.125)
    disc2d = nets.build_s2o_discriminator(16, 0.125)
    g2 = dparams(gen2d, 1)
    d2 = dparams(disc2d, 2)
    x2 = rng.normal(size=(1, 3, 16, 16))
    real2 = rng.normal(size=(1, 2, 16, 16))
    fake2 = rng.normal(size=(1, 2, 16, 16))
    cond2 = constant(x2)

    gen3d = nets.build_o2v_generator(8, 8, 0.125)
    g3 = dparams(gen3d, 3)
    x3 = rng.normal(size=(1, 3, 8, 8))
    f = VectorField3D(rng.normal(size=(8, 8, 8, 3)), (0, 0, 0), (1, 1, 1))
    vis = build_visibility_index(f)
    dense_t = rng.normal(size=(8, 8, 2))
    sketch_t = dense_t * (rng.random((8, 8, 1)) < 0.3)
    vol_t = losses.field_to_vol(f)[None]
    gamma = losses.invisible_tensor_indices(f, 0)

    def g2_out():
        return nets.forward(gen2d, g2, {"x": x2})[gen2d.output]

    def g3_out():
        return nets.forward(gen3d, g3, {"x2d": x3})[gen3d.output]

    few2 = spread(gen2d, g2)
    few3 = spread(gen3d, g3)
    fewd = spread(disc2d, d2)
    reports = [
        grad_check(lambda: losses.loss_content(g2_out(), constant(real2), cond2, disc2d, d2),
                   few2, "content", samples_per_tensor, seed=seed),
        grad_check(lambda: losses.loss_style(g2_out(), constant(real2), cond2, disc2d, d2),
                   few2, "style", samples_per_tensor, seed=seed),
        grad_check(lambda: losses.loss_gp(disc2d, d2, real2, fake2, cond2, eps=0.4),
                   fewd, "gradient_penalty", samples_per_tensor, seed=seed),
        grad_check(lambda: losses.loss_proj(g3_out(), [dense_t], [vis], f.shape),
                   few3, "projection_dense", samples_per_tensor, seed=seed),
        grad_check(lambda: losses.loss_proj(g3_out(), [sketch_t], [vis], f.shape),
                   few3, "projection_sketch", samples_per_tensor, seed=seed),
        grad_check(lambda: losses.loss_lap(g3_out(), constant(vol_t)),
                   few3, "laplacian", samples_per_tensor, seed=seed),
        grad_check(lambda: losses.loss_ori(g3_out(), constant(vol_t), gamma),
                   few3, "orientation_keep", samples_per_tensor, seed=seed),
    ]
    return reports


def grad_check(loss_fn, params: dict[str, Tensor], name: str = "loss",
               samples_per_tensor: int = 10, h: float = FD_STEP,
               seed: int = 0) -> GradCheckReport:
    """Compare grad_of against central differences on sampled coordinates.

    ``loss_fn`` must build and return the scalar loss Tensor from the current
    parameter values (it is re-invoked for every perturbed evaluation).
    """
    report = GradCheckReport(name)
    rng = np.random.default_rng(seed)
    plist = list(params.items())
    loss0 = loss_fn()
    analytic = grad_of(loss0, [t for _, t in plist])
    resolve_floor = 1e-6 * abs(loss0.item()) + 1e-12

    for (pname, t), g in zip(plist, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        coords = rng.choice(n, size=min(samples_per_tensor, n), replace=False)
        worst = 0.0
        for ci in coords:
            old = flat[ci]
            relu_monitor.armed = True
            relu_monitor.reset()
            flat[ci] = old + h
            fp = loss_fn().item()
            snaps_plus = relu_monitor.snapshots
            relu_monitor.reset()
            flat[ci] = old - h
            fm = loss_fn().item()
            snaps_minus = relu_monitor.snapshots
            flat[ci] = old
            relu_monitor.armed = False
            relu_monitor.reset()
            if kink_between(snaps_plus, snaps_minus, KINK_MARGIN):
                report.skipped_kinks += 1
                continue
            fd = (fp - fm) / (2 * h)
            a = float(g.data.reshape(-1)[ci])
            if abs(a) + abs(fd) < resolve_floor:
                report.skipped_unresolvable += 1
                continue
            err = _rel(a, fd)
            worst = max(worst, err)
            report.checked += 1
        report.per_tensor[pname] = worst
        report.max_rel_err = max(report.max_rel_err, worst)
    return report
