"""Regenerate the frozen golden artifacts under tests/golden/.

Goldens freeze the byte-exact output of deterministic fixtures after a
manual sanity review; tests then guard against accidental behavior drift.
Re-run this script (python3 tests/make_goldens.py) only when an intentional
change invalidates them, and eyeball the printed stats before committing.
"""

import hashlib
import json
from pathlib import Path

import numpy as np

GOLDEN_DIR = Path(__file__).parent / "golden"


def fixture_strands():
    from strandforge.datagen import StyleParams, synth_procedural_hair

    return synth_procedural_hair(StyleParams(wave_amp=0.012, wave_freq=1.2, root_count=120), seed=5)


def fixture_service(tmp_dir):
    from strandforge.service import Service, ServiceConfig

    cfg = ServiceConfig(data_dir=tmp_dir, resolution=24, grid_nz=18,
                        backend="diffusion", root_count=500, seed=3)
    svc = Service(cfg)
    sid = svc.create_session()
    contour = [[4, 3], [20, 3], [22, 14], [18, 22], [6, 22], [2, 14]]
    strokes = [[[8, 5], [7, 20]], [[12, 4], [12, 21]], [[16, 5], [17, 20]]]
    return svc, sid, contour, strokes


def main():
    from strandforge import formats
    from strandforge.datagen import render_mask, render_orientation_map
    from strandforge.fields import ViewPose

    GOLDEN_DIR.mkdir(exist_ok=True)
    hairstyle = fixture_strands()

    dense = render_orientation_map(hairstyle, ViewPose(y_deg=12, x_deg=-5), 32)
    mask = render_mask(hairstyle, ViewPose(y_deg=12, x_deg=-5), 32)
    formats.write_fmap(GOLDEN_DIR / "render_dense.fmap", dense.data)
    formats.write_fmap(GOLDEN_DIR / "render_mask.fmap", mask.data.astype(np.float32))
    print(f"render: {int(dense.valid_mask().sum())} oriented px, {int(mask.data.sum())} mask px")

    import tempfile

    with tempfile.TemporaryDirectory() as td:
        svc, sid, contour, strokes = fixture_service(td)
        dense_map = svc.submit_sketch(sid, strokes, contour)
        synth = svc.synthesize(sid)
        rot = svc.rotate_view(sid, ViewPose(y_deg=45))
        cut = svc.apply_edit(sid, {"op": "cut", "stroke_px": [[0, 20], [24, 20]]})
        hashes = {
            "sketch_dense_sha": hashlib.sha256(formats.map_to_fmap(dense_map)).hexdigest(),
            "synthesize_hash": synth["hash"],
            "rotated_field_hash": rot["field_hash"],
            "cut_hash": cut["hash"],
            "cut_strands": cut["strands"],
        }
    (GOLDEN_DIR / "goldens.json").write_text(json.dumps(hashes, indent=2, sort_keys=True))
    print(json.dumps(hashes, indent=2))


if __name__ == "__main__":
    main()
