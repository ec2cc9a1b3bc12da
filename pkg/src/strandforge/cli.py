"""Batch command-line entry points wrapping every pipeline stage.

Every subcommand is a thin adapter over the library; `--json` switches the
report to machine-readable output. A config file of `key = value` lines can
pre-set any long flag; explicit flags win. Exit codes: 0 success, 1 pipeline
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

__all__ = ["main"]


def _load_config(path: str) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {line!r}")
        k, v = (p.strip() for p in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _emit(args, report: dict, human: str | None = None) -> None:
    if getattr(args, "json", False):
        print(json.dumps(report, sort_keys=True))
    elif human is not None:
        print(human)


def _limit_threads(n: int | None) -> None:
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass  # env vars cover fresh pools; single-run determinism holds anyway


def _grid(args):
    return (args.res, args.res, args.nz)


# --- subcommands ---------------------------------------------------------------

def cmd_datagen(args) -> int:
    from .datagen import DatagenConfig, build_sv_dataset

    styles = tuple(args.style.split(",")) if args.style else ("straight", "wavy", "curly")
    cfg = DatagenConfig(resolution=args.res, grid=_grid(args), seed=args.seed,
                        style_pool=styles)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    build_sv_dataset(cfg, args.count, out_dir=out)
    _emit(args, {"samples": args.count, "out": str(out)},
          f"wrote {args.count} samples to {out}")
    return 0


def cmd_train(args) -> int:
    from .datagen import read_sv_sample
    from .neural import TrainHyper, train
    from .neural.train import save_weights

    root = Path(args.data)
    ids = sorted(p.name for p in (root / "samples").iterdir()) if (root / "samples").exists() else []
    if not ids:
        print(f"no samples under {root}", file=sys.stderr)
        return 1
    samples = [read_sv_sample(root, int(i)) for i in ids]
    if args.net == "v2v":
        from .backends import DiffusionBackend
        from .datagen import build_mv_dataset
        from .solvers import ShellParams

        nz = samples[0].fld.nz
        backend = DiffusionBackend(ShellParams(nz=nz))
        samples = build_mv_dataset(samples, backend.lift_field,
                                   count=args.mv_count or len(samples), seed=args.seed)
    hyper = TrainHyper(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                       scale=args.scale, seed=args.seed)
    g_params, d_params, info = train.train(args.net, samples, hyper)
    save_weights(args.out, info["gen"], g_params,
                 {"epochs": args.epochs, "seed": args.seed, "samples": len(samples)})
    hist = info["history"]
    report = {"net": args.net, "iterations": len(hist), "out": str(args.out),
              "final": {k: hist[-1][k] for k in ("g_loss", "d_loss", "content_per_element")} if hist else {}}
    _emit(args, report, f"trained {args.net}: {len(hist)} iterations -> {args.out}")
    return 0


def _read_maps(args, *names):
    from . import formats

    out = []
    for n in names:
        path = getattr(args, n)
        if n in ("sketch", "dense"):
            out.append(formats.orientation_from_fmap(Path(path)))
        elif n == "mask":
            out.append(formats.mask_from_fmap(Path(path)))
        elif n == "depth":
            out.append(formats.depth_from_fmap(Path(path)))
    return out


def _backend_for(args, nz):
    from .backends import make_backend
    from .solvers import ShellParams

    return make_backend(args.backend, args.weights, ShellParams(nz=nz), args.scale)


def cmd_infer_2d(args) -> int:
    from . import formats

    sketch, mask = _read_maps(args, "sketch", "mask")
    backend = _backend_for(args, args.nz)
    dense = backend.infer_dense(sketch, mask)
    formats.write_fmap(args.out, dense.data)
    _emit(args, {"valid_pixels": int(dense.valid_mask().sum()), "out": args.out},
          f"dense map -> {args.out}")
    return 0


def cmd_infer_3d(args) -> int:
    from . import formats

    dense, mask, depth = _read_maps(args, "dense", "mask", "depth")
    backend = _backend_for(args, args.nz)
    field = backend.lift_field(dense, mask, depth)
    formats.write_vfld(args.out, field)
    _emit(args, {"valid_cells": int(field.valid_mask().sum()), "out": args.out},
          f"3D field -> {args.out}")
    return 0


def cmd_update_3d(args) -> int:
    from . import formats

    rotated = formats.read_vfld(args.field)
    dense, mask, depth = _read_maps(args, "dense", "mask", "depth")
    backend = _backend_for(args, rotated.nz)
    field = backend.update_field(rotated, dense, mask, depth)
    formats.write_vfld(args.out, field)
    _emit(args, {"valid_cells": int(field.valid_mask().sum()), "out": args.out},
          f"updated field -> {args.out}")
    return 0


def cmd_grow(args) -> int:
    from . import formats
    from .bust import default_bust, sample_roots
    from .strands import GrowthParams, grow_hair

    if args.bust != "default":
        print(f"unknown bust {args.bust!r}", file=sys.stderr)
        return 1
    field = formats.read_vfld(args.field)
    roots = sample_roots(default_bust(), count=args.roots, seed=args.seed)
    strands = grow_hair(field, roots, GrowthParams(seed=args.seed))
    formats.write_hair(args.out, strands)
    _emit(args, {"strands": len(strands), "vertices": strands.vertex_count(), "out": args.out},
          f"grew {len(strands)} strands -> {args.out}")
    return 0


def cmd_edit(args) -> int:
    import numpy as np

    from . import formats
    from .edit import EditSelection, cut_by_stroke, recolor, scale_length, trim_by_mask
    from .fields import ViewPose
    from .service import fill_contour

    strands = formats.read_hair(args.infile)
    spec = json.loads(args.op_args)
    op = args.op
    if op == "cut":
        strands = cut_by_stroke(strands, np.asarray(spec["stroke_px"]), ViewPose(), args.res)
    elif op == "trim":
        mask = fill_contour(spec["mask_contour"], args.res)
        strands, _ = trim_by_mask(strands, mask, ViewPose())
    elif op == "scale":
        sel = EditSelection.whole_strands(range(len(strands)), strands)
        strands = scale_length(strands, sel, float(spec["factor"]))
    elif op == "recolor":
        sel = EditSelection.whole_strands(range(len(strands)), strands)
        strands = recolor(strands, sel, spec["color"])
    else:
        print(f"unknown edit op {op!r}", file=sys.stderr)
        return 2
    formats.write_hair(args.out, strands)
    _emit(args, {"strands": len(strands), "out": args.out}, f"edited -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    cfg = ServiceConfig(data_dir=args.data_dir, resolution=args.res, grid_nz=args.nz,
                        backend=args.backend, weight_dir=args.weights, seed=args.seed,
                        scale=args.scale)
    uvicorn.run(create_app(cfg), host=args.host, port=args.port, log_level="info")
    return 0


def cmd_gradcheck(args) -> int:
    from .neural.gradcheck import run_gradient_suite

    reports = run_gradient_suite(tol=args.tol, samples_per_tensor=args.samples, seed=args.seed)
    rows = []
    ok = True
    for r in reports:
        passed = r.ok(args.tol * (10 if r.name == "gradient_penalty" else 1))
        ok &= passed
        rows.append({"loss": r.name, "max_rel_err": r.max_rel_err,
                     "checked": r.checked, "skipped_kinks": r.skipped_kinks, "pass": passed})
        if not args.json:
            print(f"{'PASS' if passed else 'FAIL'}  {r.name:<20} max_rel_err={r.max_rel_err:.3e} "
                  f"checked={r.checked} skipped={r.skipped_kinks}")
    if args.json:
        print(json.dumps({"reports": rows, "pass": ok}, sort_keys=True))
    return 0 if ok else 1


def cmd_eval_mse(args) -> int:
    import numpy as np

    from . import formats

    pred = formats.read_fmap(args.pred)
    gt = formats.read_fmap(args.gt)
    if pred.shape != gt.shape:
        print(f"shape mismatch {pred.shape} vs {gt.shape}", file=sys.stderr)
        return 1
    if args.all_pixels:
        sel = np.ones(gt.shape[:2], dtype=bool)
    else:
        sel = np.abs(gt).sum(axis=2) > 0
        if not sel.any():
            sel = np.ones(gt.shape[:2], dtype=bool)
    mse = float(((pred[sel] - gt[sel]) ** 2).sum(axis=1).mean())
    _emit(args, {"mse": mse, "pixels": int(sel.sum())}, f"mse = {mse:.6g}")
    return 0


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="strandforge",
                                description="sketch-driven strand-level hair modeling")
    p.add_argument("--config", help="key=value config file; flags override")
    p.add_argument("--json", action="store_true", help="machine-readable reports")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--res", type=int, default=32, help="image resolution")
    p.add_argument("--nz", type=int, default=24, help="volume depth cells")
    p.add_argument("--scale", type=float, default=0.25, help="network channel scale")
    p.add_argument("--threads", type=int, default=0, help="limit math threads (1 = deterministic)")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("datagen", help="generate synthetic training samples")
    d.add_argument("--style", help="comma list: straight,wavy,curly")
    d.add_argument("--count", type=int, required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_datagen)

    t = sub.add_parser("train", help="train one network")
    t.add_argument("--net", choices=("s2o", "o2v", "v2v"), required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--batch", type=int, default=8)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--mv-count", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    i2 = sub.add_parser("infer-2d", help="sketch+mask -> dense orientation map")
    i2.add_argument("--sketch", required=True)
    i2.add_argument("--mask", required=True)
    i2.add_argument("--backend", choices=("neural", "diffusion"), default="diffusion")
    i2.add_argument("--weights")
    i2.add_argument("--out", required=True)
    i2.set_defaults(fn=cmd_infer_2d)

    i3 = sub.add_parser("infer-3d", help="dense+depth -> 3D vector field")
    i3.add_argument("--dense", required=True)
    i3.add_argument("--mask", required=True)
    i3.add_argument("--depth", required=True)
    i3.add_argument("--backend", choices=("neural", "diffusion"), default="diffusion")
    i3.add_argument("--weights")
    i3.add_argument("--out", required=True)
    i3.set_defaults(fn=cmd_infer_3d)

    u3 = sub.add_parser("update-3d", help="rotated field + new view -> updated field")
    u3.add_argument("--field", required=True)
    u3.add_argument("--dense", required=True)
    u3.add_argument("--mask", required=True)
    u3.add_argument("--depth", required=True)
    u3.add_argument("--backend", choices=("neural", "diffusion"), default="diffusion")
    u3.add_argument("--weights")
    u3.add_argument("--out", required=True)
    u3.set_defaults(fn=cmd_update_3d)

    g = sub.add_parser("grow", help="grow strands through a field")
    g.add_argument("--field", required=True)
    g.add_argument("--bust", default="default")
    g.add_argument("--roots", type=int, default=10_000)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_grow)

    e = sub.add_parser("edit", help="edit a strand file")
    e.add_argument("--in", dest="infile", required=True)
    e.add_argument("--op", required=True, choices=("cut", "trim", "scale", "recolor"))
    e.add_argument("--args", dest="op_args", required=True, help="JSON op payload")
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_edit)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8072)
    s.add_argument("--data-dir", default="strandforge-data")
    s.add_argument("--backend", choices=("neural", "diffusion"), default="diffusion")
    s.add_argument("--weights")
    s.set_defaults(fn=cmd_serve)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    gc.add_argument("--all", action="store_true", help="check every loss term (default)")
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--samples", type=int, default=4)
    gc.set_defaults(fn=cmd_gradcheck)

    m = sub.add_parser("eval-mse", help="mean squared error between two FMAP rasters")
    m.add_argument("--pred", required=True)
    m.add_argument("--gt", required=True)
    m.add_argument("--all-pixels", action="store_true")
    m.set_defaults(fn=cmd_eval_mse)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # first pass: pick up --config and seed parser defaults from it
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        try:
            cfg = _load_config(known.config)
        except (OSError, ValueError) as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        def coerce(v):
            for t in (int, float):
                try:
                    return t(v)
                except ValueError:
                    continue
            return v
        parser.set_defaults(**{k: coerce(v) for k, v in cfg.items()})
    args = parser.parse_args(argv)
    _limit_threads(args.threads)
    try:
        return args.fn(args)
    except Exception as e:  # pipeline failures exit 1 with a diagnostic
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
