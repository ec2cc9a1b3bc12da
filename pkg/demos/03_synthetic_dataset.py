"""Synthetic training data: procedural hair, rendering, sketch tracing.

Shows how training tuples come to be: a parametric hairstyle is grown on the
bust, rendered into dense orientation / mask / depth maps under a random
view, voxelized into the target field, and a sparse sketch is traced over
the dense map the way a user would draw strokes. Writes one dataset sample
to disk in the samples/<id>/ layout.
"""

from pathlib import Path

import numpy as np

from strandforge.datagen import (
    DatagenConfig,
    StyleParams,
    TraceParams,
    make_sv_sample,
    render_orientation_map,
    synth_procedural_hair,
    trace_sketch_map,
    write_sv_sample,
)
from strandforge.fields import ViewPose
from strandforge.strands import strand_curvature

out_dir = Path(__file__).parent / "demo_out"

# three style families, one knob each
for name, style in (
    ("straight", StyleParams(root_count=80)),
    ("wavy", StyleParams(wave_amp=0.015, wave_freq=1.2, root_count=80)),
    ("curly", StyleParams(curl_amp=0.008, curl_freq=1.0, root_count=80)),
):
    hair = synth_procedural_hair(style, seed=4)
    mean_k = np.mean([strand_curvature(s).mean() for s in hair.strands if len(s) >= 3])
    print(f"{name:<9} {len(hair):3d} strands, mean turning angle {np.degrees(mean_k):.2f} deg/vertex")

# the traced sketch follows the visible flow instead of sampling hidden strands
hair = synth_procedural_hair(StyleParams(wave_amp=0.015, wave_freq=1.2, root_count=150), seed=7)
dense = render_orientation_map(hair, ViewPose(), 48)
sketch = trace_sketch_map(dense, TraceParams(curve_count=8, seed=1))
print(f"dense map {int(dense.valid_mask().sum())} px -> traced sketch {int(sketch.valid_mask().sum())} px "
      f"({(sketch.valid_mask().sum() / dense.valid_mask().sum()):.1%} of the flow)")

# a full training sample, written in the dataset directory layout
cfg = DatagenConfig(resolution=32, grid=(32, 32, 24), seed=11)
sample = make_sv_sample(cfg, 0)
write_sv_sample(out_dir / "dataset", 0, sample)
print(f"sample 0: style={sample.meta['style']}, pose={np.round(sample.meta['pose'], 1)}, "
      f"field valid cells={int(sample.fld.valid_mask().sum())}")
print(f"layout under {out_dir / 'dataset' / 'samples' / '00000'}")
