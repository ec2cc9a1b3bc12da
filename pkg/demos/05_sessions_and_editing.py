"""Interactive sessions: multi-view re-synthesis, edits, deterministic replay.

Drives the service layer directly (no HTTP in between): sketch and
synthesize in the front view, rotate to a three-quarter view and let the
solver update the field with the previous result as a soft prior, then cut,
scale, and recolor wisps. Finally the session's history log re-runs from
scratch and reproduces the same strand file hash.
"""

import hashlib
import tempfile
from pathlib import Path

from strandforge.fields import ViewPose
from strandforge.service import Service, ServiceConfig, load_history, replay_history

data_dir = Path(tempfile.mkdtemp(prefix="strandforge-demo-"))
cfg = ServiceConfig(data_dir=data_dir, resolution=32, grid_nz=24,
                    backend="diffusion", root_count=1500, seed=0)
svc = Service(cfg)

sid = svc.create_session()
contour = [[5, 4], [27, 4], [29, 18], [24, 28], [8, 28], [3, 18]]
strokes = [[[10, 6], [8, 26]], [[16, 5], [16, 27]], [[22, 6], [24, 26]]]
svc.submit_sketch(sid, strokes, contour)
front = svc.synthesize(sid)
print(f"front view: {front['strands']} strands, hash {front['hash'][:12]}")

# rotate 30 degrees and re-synthesize: the previous field, re-voxelized from
# the rotated strands, becomes a soft prior for the new-view solve
svc.rotate_view(sid, ViewPose(y_deg=30))
svc.submit_sketch(sid, [[[14, 6], [10, 26]]], contour)
side = svc.synthesize(sid)
print(f"after 30 deg yaw + new stroke: {side['strands']} strands")

# edits: cut below the chin line, shorten a wisp, tint it
cut = svc.apply_edit(sid, {"op": "cut", "stroke_px": [[0, 27], [32, 27]]})
print(f"cut: {cut['strands']} strands remain")
svc.apply_edit(sid, {
    "op": "scale",
    "selection": {"mode": "scalp-region", "center": [0.5, 0.75, 0.3], "radius": 0.1},
    "factor": 0.8,
})
tinted = svc.apply_edit(sid, {
    "op": "recolor",
    "selection": {"mode": "scalp-region", "center": [0.5, 0.75, 0.3], "radius": 0.1},
    "color": [0.8, 0.3, 0.2],
})
print(f"scaled and recolored a wisp; session now at hash {tinted['hash'][:12]}")

blob, _ = svc.export(sid, "hair")
final_hash = hashlib.sha256(blob).hexdigest()
replayed = replay_history(load_history(data_dir, sid), cfg)
print(f"history replay: {'identical' if replayed == final_hash else 'DIVERGED'} "
      f"({replayed[:12]} vs {final_hash[:12]})")
