import json
import subprocess
import sys

import numpy as np
import pytest

from strandforge import formats
from strandforge.cli import main


def run_cli(*argv):
    return main(list(argv))


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as e:
        run_cli("definitely-not-a-command")
    assert e.value.code == 2


def test_datagen_writes_layout(tmp_path):
    out = tmp_path / "ds"
    rc = run_cli("--res", "16", "--nz", "12", "--seed", "5",
                 "datagen", "--count", "2", "--out", str(out), "--style", "straight")
    assert rc == 0
    sample = out / "samples" / "00000"
    for name in ("sketch.fmap", "mask.fmap", "depth.fmap", "dense.fmap", "field.vfld", "meta.json"):
        assert (sample / name).exists()
    meta = json.loads((sample / "meta.json").read_text())
    assert meta["style"] == "straight"


def test_grow_matches_library_call(tmp_path, capsys):
    from strandforge.bust import default_bust, sample_roots
    from strandforge.fields import VectorField3D
    from strandforge.strands import GrowthParams, grow_hair

    rng = np.random.default_rng(0)
    data = np.zeros((16, 16, 12, 3))
    data[:, :, :, 1] = -1.0
    field = VectorField3D(data, (0, 0, 0), (1, 1, 0.75))
    fpath = tmp_path / "f.vfld"
    formats.write_vfld(fpath, field)
    out = tmp_path / "h.hair"
    rc = run_cli("--json", "--seed", "2", "grow", "--field", str(fpath),
                 "--bust", "default", "--roots", "300", "--out", str(out))
    assert rc == 0
    report = json.loads(capsys.readouterr().out.strip())
    roots = sample_roots(default_bust(), count=300, seed=2)
    want = grow_hair(formats.read_vfld(fpath), roots, GrowthParams(seed=2))
    assert report["strands"] == len(want)
    got = formats.read_hair(out)
    assert formats.hair_bytes(got) == formats.hair_bytes(want)


def test_cli_byte_identical_reruns(tmp_path):
    args = ["--res", "16", "--nz", "12", "--seed", "9",
            "datagen", "--count", "1", "--out", None, "--style", "wavy"]
    blobs = []
    for d in ("a", "b"):
        out = tmp_path / d
        args[-3] = str(out)
        assert run_cli(*args) == 0
        sample = out / "samples" / "00000"
        blobs.append(b"".join((sample / n).read_bytes()
                              for n in ("sketch.fmap", "dense.fmap", "field.vfld")))
    assert blobs[0] == blobs[1]


def test_infer_and_eval_mse_roundtrip(tmp_path, capsys):
    # build a small scene, run infer-2d and eval-mse against itself
    from strandforge.datagen import DatagenConfig, make_sv_sample

    s = make_sv_sample(DatagenConfig(resolution=16, grid=(16, 16, 12), seed=3), 0)
    sk, mk, dp, dn = (tmp_path / n for n in ("s.fmap", "m.fmap", "d.fmap", "gt.fmap"))
    formats.write_fmap(sk, s.sketch.data)
    formats.write_fmap(mk, s.mask.data.astype(np.float32))
    formats.write_fmap(dp, s.depth.data)
    formats.write_fmap(dn, s.dense.data)
    out = tmp_path / "dense.fmap"
    rc = run_cli("infer-2d", "--sketch", str(sk), "--mask", str(mk),
                 "--backend", "diffusion", "--out", str(out))
    assert rc == 0
    capsys.readouterr()  # drop the human-readable infer report
    rc = run_cli("--json", "eval-mse", "--pred", str(dn), "--gt", str(dn))
    assert rc == 0
    assert json.loads(capsys.readouterr().out.strip())["mse"] == 0.0
    rc = run_cli("--json", "eval-mse", "--pred", str(out), "--gt", str(dn))
    assert rc == 0
    report = json.loads(capsys.readouterr().out.strip())
    assert report["mse"] >= 0.0


def test_infer_3d_and_update_3d(tmp_path, capsys):
    from strandforge.datagen import DatagenConfig, make_sv_sample

    s = make_sv_sample(DatagenConfig(resolution=16, grid=(16, 16, 12), seed=4), 1)
    mk, dp, dn = (tmp_path / n for n in ("m.fmap", "d.fmap", "dense.fmap"))
    formats.write_fmap(mk, s.mask.data.astype(np.float32))
    formats.write_fmap(dp, s.depth.data)
    formats.write_fmap(dn, s.dense.data)
    f1 = tmp_path / "f.vfld"
    rc = run_cli("--nz", "12", "infer-3d", "--dense", str(dn), "--mask", str(mk),
                 "--depth", str(dp), "--out", str(f1))
    assert rc == 0
    assert formats.read_vfld(f1).valid_mask().any()
    f2 = tmp_path / "f2.vfld"
    rc = run_cli("update-3d", "--field", str(f1), "--dense", str(dn), "--mask", str(mk),
                 "--depth", str(dp), "--out", str(f2))
    assert rc == 0
    assert formats.read_vfld(f2).shape == formats.read_vfld(f1).shape


def test_edit_subcommand_scale(tmp_path):
    from strandforge.strands import Strand, StrandSet

    v = np.array([[0.5, 0.8, 0.3], [0.5, 0.6, 0.3], [0.5, 0.4, 0.3]])
    src = tmp_path / "in.hair"
    formats.write_hair(src, StrandSet([Strand(v, rooted=True)]))
    out = tmp_path / "out.hair"
    rc = run_cli("edit", "--in", str(src), "--op", "scale",
                 "--args", json.dumps({"factor": 2.0}), "--out", str(out))
    assert rc == 0
    got = formats.read_hair(out).strands[0].vertices
    assert np.allclose(np.diff(got, axis=0), 2 * np.diff(v, axis=0), atol=1e-6)


def test_train_subcommand_smoke(tmp_path, capsys):
    out_ds = tmp_path / "ds"
    assert run_cli("--res", "16", "--nz", "12", "--seed", "1",
                   "datagen", "--count", "3", "--out", str(out_ds)) == 0
    weights = tmp_path / "s2o.wts"
    rc = run_cli("--json", "--scale", "0.125", "train", "--net", "s2o",
                 "--data", str(out_ds), "--epochs", "2", "--batch", "3",
                 "--out", str(weights))
    assert rc == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["iterations"] == 2
    assert weights.exists() and (tmp_path / "s2o.wts.json").exists()
    meta = json.loads((tmp_path / "s2o.wts.json").read_text())
    assert meta["net"] == "s2o" and "spec_hash" in meta


def test_train_v2v_builds_mv_pairs(tmp_path, capsys):
    out_ds = tmp_path / "ds"
    assert run_cli("--res", "16", "--nz", "12", "--seed", "2",
                   "datagen", "--count", "2", "--out", str(out_ds)) == 0
    weights = tmp_path / "v2v.wts"
    rc = run_cli("--json", "--scale", "0.125", "train", "--net", "v2v",
                 "--data", str(out_ds), "--epochs", "1", "--batch", "2",
                 "--mv-count", "2", "--out", str(weights))
    assert rc == 0
    assert weights.exists()


def test_gradcheck_command(capsys):
    rc = run_cli("--json", "gradcheck", "--all", "--tol", "1e-4", "--samples", "2")
    out = json.loads(capsys.readouterr().out.strip())
    assert rc == 0
    assert out["pass"]
    assert len(out["reports"]) == 7


def test_config_file_sets_defaults(tmp_path, capsys):
    cfg = tmp_path / "conf"
    cfg.write_text("res = 16\nnz = 12\nseed = 11\n")
    out = tmp_path / "ds"
    rc = run_cli("--config", str(cfg), "--json", "datagen", "--count", "1", "--out", str(out))
    assert rc == 0
    sample = formats.read_fmap(out / "samples" / "00000" / "dense.fmap")
    assert sample.shape[0] == 16


def test_pipeline_failure_exits_one(tmp_path, capsys):
    rc = run_cli("eval-mse", "--pred", str(tmp_path / "missing.fmap"),
                 "--gt", str(tmp_path / "missing.fmap"))
    assert rc == 1
