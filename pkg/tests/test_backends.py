import numpy as np
import pytest

from strandforge.backends import DiffusionBackend, NeuralBackend, make_backend
from strandforge.datagen import DatagenConfig, make_sv_sample
from strandforge.neural.train import TrainHyper, save_weights, train
from strandforge.solvers import ShellParams


@pytest.fixture(scope="module")
def tiny_weights(tmp_path_factory):
    """Train the sketch densifier briefly and persist it as a weight dir."""
    wdir = tmp_path_factory.mktemp("weights")
    cfg = DatagenConfig(resolution=16, grid=(16, 16, 12), seed=42)
    samples = [make_sv_sample(cfg, i) for i in range(3)]
    g_params, _, info = train("s2o", samples, TrainHyper(epochs=2, batch_size=3, scale=0.125, seed=0))
    save_weights(wdir / "s2o.wts", info["gen"], g_params, {"epochs": 2, "seed": 0})
    return wdir, samples


def test_neural_backend_dense_inference(tiny_weights):
    wdir, samples = tiny_weights
    backend = NeuralBackend(wdir, scale=0.125, shell=ShellParams(nz=12))
    s = samples[0]
    dense = backend.infer_dense(s.sketch, s.mask)
    assert dense.width == 16
    valid = dense.valid_mask()
    assert np.all(~valid | s.mask.as_bool())  # background forced outside the mask
    if valid.any():
        norms = np.linalg.norm(dense.data[valid], axis=1)
        assert np.allclose(norms, 1.0, atol=1e-6)  # normalized output


def test_neural_backend_falls_back_without_volume_weights(tiny_weights):
    wdir, samples = tiny_weights
    backend = NeuralBackend(wdir, scale=0.125, shell=ShellParams(nz=12))
    s = samples[0]
    field = backend.lift_field(s.dense, s.mask, s.depth)  # no o2v.wts -> diffusion
    assert field.shape == (16, 16, 12)
    assert field.valid_mask().any()
    updated = backend.update_field(field, s.dense, s.mask, s.depth)
    assert updated.shape == field.shape


def test_make_backend_validation(tmp_path):
    assert isinstance(make_backend("diffusion"), DiffusionBackend)
    with pytest.raises(ValueError):
        make_backend("neural")  # weight dir required
    with pytest.raises(ValueError):
        make_backend("nonsense")
    nb = make_backend("neural", tmp_path)
    assert isinstance(nb, NeuralBackend)


def test_neural_service_session(tiny_weights, tmp_path):
    from fastapi.testclient import TestClient

    from strandforge.service import ServiceConfig, create_app

    wdir, _ = tiny_weights
    cfg = ServiceConfig(data_dir=tmp_path / "data", resolution=16, grid_nz=12,
                        backend="neural", weight_dir=str(wdir), scale=0.125,
                        root_count=400, seed=1)
    client = TestClient(create_app(cfg))
    sid = client.post("/v1/sessions", json={}).json()["id"]
    contour = [[2, 2], [14, 2], [14, 14], [2, 14]]
    strokes = [[[8.0, 3.0], [8.0, 13.0]]]
    r = client.post(f"/v1/sessions/{sid}/sketch", json={"strokes": strokes, "mask_contour": contour})
    assert r.status_code == 200
    out = client.post(f"/v1/sessions/{sid}/synthesize", json={})
    assert out.status_code == 200
    assert out.json()["strands"] > 0
