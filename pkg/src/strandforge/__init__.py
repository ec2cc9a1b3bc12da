"""strandforge: sketch-driven strand-level 3D hair modeling.

The package turns user sketches (a hair contour plus a few directed strokes)
into strand-level 3D hair: a dense 2D orientation map is inferred first,
lifted into a volumetric vector field, and grown into polyline strands over a
bust model. Both a trained-network backend and a deterministic diffusion
backend are provided, along with multi-view updates, strand editing tools, a
batch CLI, and an HTTP service driving the interactive loop.
"""

from .bust import BustModel, RootSampling, default_bust, sample_roots
from .fields import (
    DepthMap,
    MaskMap,
    OrientationMap2D,
    VectorField3D,
    ViewPose,
    VisibilityIndex,
    build_visibility_index,
    decode_orientation_rgb,
    encode_orientation_rgb,
    field_laplacian,
    project_field,
)
from .strands import (
    GrowthParams,
    Strand,
    StrandSet,
    grow_hair,
    rotate_strands,
    strand_curvature,
    voxelize_strands,
)

__version__ = "0.1.0"

__all__ = [
    "BustModel", "RootSampling", "default_bust", "sample_roots",
    "DepthMap", "MaskMap", "OrientationMap2D", "VectorField3D", "ViewPose",
    "VisibilityIndex", "build_visibility_index", "decode_orientation_rgb",
    "encode_orientation_rgb", "field_laplacian", "project_field",
    "GrowthParams", "Strand", "StrandSet", "grow_hair", "rotate_strands",
    "strand_curvature", "voxelize_strands",
]
