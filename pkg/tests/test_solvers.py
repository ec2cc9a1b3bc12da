import numpy as np
import pytest

from strandforge.fields import DepthMap, MaskMap, OrientationMap2D
from strandforge.solvers import ShellParams, build_shell, diffuse_field_3d, diffuse_orientation_2d


def dense_direct_oracle(sketch: OrientationMap2D, mask: MaskMap) -> np.ndarray:
    """Assemble the full Laplace system densely and solve directly."""
    m = mask.as_bool()
    h, w = m.shape
    idx = -np.ones((h, w), dtype=int)
    pix = np.argwhere(m)
    idx[pix[:, 0], pix[:, 1]] = np.arange(len(pix))
    cons = sketch.valid_mask() & m
    n = len(pix)
    out = np.zeros((h, w, 2))
    for comp in range(2):
        a = np.zeros((n, n))
        b = np.zeros(n)
        for k, (r, c) in enumerate(pix):
            if cons[r, c]:
                a[k, k] = 1.0
                b[k] = sketch.data[r, c, comp]
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and m[rr, cc]:
                    a[k, k] -= 1.0
                    a[k, idx[rr, cc]] += 1.0
        # components without constraints are singular; pin them to zero
        for k in range(n):
            if not a[k].any():
                a[k, k] = 1.0
        sol, *_ = np.linalg.lstsq(a, b, rcond=None)
        out[pix[:, 0], pix[:, 1], comp] = sol
    return out


def disc_mask(h=16, w=16, r=6.5):
    yy, xx = np.mgrid[0:h, 0:w]
    return MaskMap(((yy - h / 2 + 0.5) ** 2 + (xx - w / 2 + 0.5) ** 2) < r**2)


def sparse_sketch(mask, pts_vals):
    m = np.zeros(mask.data.shape + (2,))
    for (r, c), v in pts_vals:
        m[r, c] = v
    return OrientationMap2D(m)


def test_single_constraint_fills_mask_constant():
    mask = disc_mask()
    sk = sparse_sketch(mask, [((8, 8), (0.0, 1.0))])
    out = diffuse_orientation_2d(sk, mask)
    inside = mask.as_bool()
    assert np.allclose(out.data[inside], (0.0, 1.0), atol=1e-6)
    assert np.all(out.data[~inside] == 0.0)


def test_strip_sign_flip_linear_interpolation():
    # 1-px strip, constraints (1,0) and (-1,0) at the ends: the x component
    # interpolates linearly, so it flips sign at the midpoint and the norm
    # dips before renormalization
    w = 11
    mask = MaskMap(np.ones((1, w)))
    sk = sparse_sketch(mask, [((0, 0), (1.0, 0.0)), ((0, w - 1), (-1.0, 0.0))])
    raw = diffuse_orientation_2d(sk, mask, renormalize=False)
    expected = np.linspace(1.0, -1.0, w)
    assert np.allclose(raw.data[0, :, 0], expected, atol=1e-8)
    assert abs(raw.data[0, w // 2, 0]) < 1e-8  # midpoint crosses zero
    assert np.abs(raw.data[0, 1:-1, 0]).max() < 1.0  # norm dips in the interior


def test_matches_dense_direct_oracle():
    rng = np.random.default_rng(0)
    mask = disc_mask()
    pts = np.argwhere(mask.as_bool())
    picks = pts[rng.choice(len(pts), size=6, replace=False)]
    ang = rng.uniform(-np.pi, np.pi, size=6)
    sk = sparse_sketch(mask, [((r, c), (np.cos(a), np.sin(a))) for (r, c), a in zip(picks, ang)])
    got = diffuse_orientation_2d(sk, mask, renormalize=False)
    want = dense_direct_oracle(sk, mask)
    assert np.abs(got.data - want).max() < 1e-6


def test_solver_linearity_in_constraints():
    mask = disc_mask()
    sk = sparse_sketch(mask, [((5, 6), (0.4, 0.2)), ((10, 9), (-0.3, 0.6))])
    scaled = OrientationMap2D(sk.data * 2.5)
    a = diffuse_orientation_2d(sk, mask, renormalize=False)
    b = diffuse_orientation_2d(scaled, mask, renormalize=False)
    assert np.abs(b.data - 2.5 * a.data).max() < 1e-10


def test_maximum_principle():
    rng = np.random.default_rng(4)
    mask = disc_mask()
    pts = np.argwhere(mask.as_bool())
    picks = pts[rng.choice(len(pts), size=5, replace=False)]
    vals = rng.uniform(-1, 1, size=(5, 2))
    sk = sparse_sketch(mask, [((r, c), v) for (r, c), v in zip(picks, vals)])
    raw = diffuse_orientation_2d(sk, mask, renormalize=False)
    inside = mask.as_bool()
    for comp in range(2):
        v = raw.data[inside][:, comp]
        assert v.min() >= vals[:, comp].min() - 1e-8
        assert v.max() <= vals[:, comp].max() + 1e-8


def test_laplace_residual_small_on_free_pixels():
    rng = np.random.default_rng(5)
    mask = disc_mask()
    pts = np.argwhere(mask.as_bool())
    picks = pts[rng.choice(len(pts), size=4, replace=False)]
    sk = sparse_sketch(mask, [((r, c), (1.0, 0.0)) for r, c in picks])
    raw = diffuse_orientation_2d(sk, mask, renormalize=False)
    m = mask.as_bool()
    cons = sk.valid_mask() & m
    h, w = m.shape
    worst = 0.0
    for r in range(h):
        for c in range(w):
            if not m[r, c] or cons[r, c]:
                continue
            acc = np.zeros(2)
            n = 0
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and m[rr, cc]:
                    acc += raw.data[rr, cc] - raw.data[r, c]
                    n += 1
            worst = max(worst, np.abs(acc / n).max())
    assert worst < 1e-6


def test_errors_on_empty_inputs():
    mask = disc_mask()
    with pytest.raises(ValueError):
        diffuse_orientation_2d(OrientationMap2D(np.zeros(mask.data.shape + (2,))), mask)
    with pytest.raises(ValueError):
        diffuse_orientation_2d(
            sparse_sketch(mask, [((8, 8), (0, 1.0))]), MaskMap(np.zeros((16, 16)))
        )


# --- 3D shell diffusion -------------------------------------------------------

def flat_scene(h=12, w=12, nz=10):
    mask = MaskMap(np.ones((h, w)))
    depth = DepthMap(np.full((h, w), 0.8))  # bust surface deep in the box
    return mask, depth, ShellParams(nz=nz, box_max=(1.0, 1.0, 1.0), thickness_cells=4, margin_behind=0)


def test_shell_constant_constraints():
    mask, depth, params = flat_scene()
    dense = OrientationMap2D(np.tile(np.array([0.0, 1.0]), (12, 12, 1)))
    f = diffuse_field_3d(dense, mask, depth, params)
    valid = f.valid_mask()
    assert valid.any()
    assert np.allclose(f.data[valid], (0.0, 1.0, 0.0), atol=1e-4)


def test_shell_projection_consistency():
    rng = np.random.default_rng(6)
    h = w = 12
    ang = rng.uniform(-np.pi, np.pi, size=(h, w))
    # smooth the angles a bit so neighbors agree
    for _ in range(20):
        ang = 0.25 * (np.roll(ang, 1, 0) + np.roll(ang, -1, 0) + np.roll(ang, 1, 1) + np.roll(ang, -1, 1))
    dense = OrientationMap2D(np.stack([np.cos(ang), np.sin(ang)], axis=2))
    mask, depth, params = flat_scene()
    f = diffuse_field_3d(dense, mask, depth, params)
    from strandforge.fields import build_visibility_index, project_field

    proj = project_field(f, build_visibility_index(f))
    both = proj.valid_mask() & dense.valid_mask()
    a = proj.data[both]
    b = dense.data[both]
    cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    ang_err = np.degrees(np.arccos(np.clip(cos, -1, 1)))
    assert (ang_err < 15.0).mean() >= 0.9


def test_shell_empty_errors():
    mask = MaskMap(np.zeros((8, 8)))
    depth = DepthMap(np.zeros((8, 8)))
    dense = OrientationMap2D(np.zeros((8, 8, 2)))
    with pytest.raises(ValueError):
        diffuse_field_3d(dense, mask, depth, ShellParams(nz=6))


def test_shell_occupancy_in_front_of_surface():
    mask, depth, params = flat_scene()
    shell = build_shell(mask, depth, params)
    nz = params.nz
    iz_hit = int(np.floor(0.8 * nz))
    occupied = np.nonzero(shell[6, 6])[0]
    assert occupied.max() == iz_hit
    assert occupied.min() == iz_hit - params.thickness_cells
