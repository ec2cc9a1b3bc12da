"""Deterministic diffusion backends built on sparse Laplace systems.

These solvers let the interactive loop run without trained weights: stroke
directions are diffused across the hair mask (2D), and a dense map is lifted
into a hair-shell volume in front of the bust and diffused in 3D. Both solve
a graph Laplace equation with Dirichlet constraints at the known pixels or
cells and natural (zero normal derivative) behavior at the domain boundary,
then renormalize to unit directions. The 3D shell construction is a modeling
convenience of this backend, not part of any trained pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.ndimage import label
from scipy.sparse.linalg import cg

from .fields import DepthMap, MaskMap, OrientationMap2D, VectorField3D

__all__ = ["ShellParams", "diffuse_orientation_2d", "diffuse_field_3d", "solve_laplace_graph"]

SOLVER_TOL = 1e-10
SOLVER_MAXITER = 10_000


@dataclass(frozen=True)
class ShellParams:
    """Geometry of the hair shell extruded in front of the bust surface."""

    nz: int = 24
    box_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    box_max: tuple[float, float, float] = (1.0, 1.0, 0.75)
    thickness_cells: int = 12
    margin_behind: int = 1
    prior: VectorField3D | None = None  # soft tie for view updates
    prior_weight: float = 0.05


def solve_laplace_graph(adj_rows, adj_cols, n_nodes, cons_idx, cons_val,
                        soft_idx=None, soft_val=None, soft_weight=0.0,
                        tol: float = SOLVER_TOL, maxiter: int = SOLVER_MAXITER) -> np.ndarray:
    """Solve the graph Laplace equation with Dirichlet constraints.

    ``adj_rows/adj_cols`` list each undirected edge once. Unknowns are solved
    per column of ``cons_val`` with conjugate gradients on the (positive
    definite) constrained system. Nodes in components without any constraint
    come back as zero.
    """
    cons_val = np.atleast_2d(np.asarray(cons_val, dtype=np.float64))
    if cons_val.shape[0] != len(cons_idx):
        cons_val = cons_val.T
    ncomp = cons_val.shape[1]

    deg = np.zeros(n_nodes)
    np.add.at(deg, adj_rows, 1.0)
    np.add.at(deg, adj_cols, 1.0)

    is_cons = np.zeros(n_nodes, dtype=bool)
    is_cons[cons_idx] = True
    full = np.zeros((n_nodes, ncomp))
    full[cons_idx] = cons_val

    free = np.nonzero(~is_cons)[0]
    if len(free) == 0:
        return full
    pos = -np.ones(n_nodes, dtype=np.int64)
    pos[free] = np.arange(len(free))

    # assemble A = degree - adjacency restricted to free nodes (positive
    # definite wherever a component touches a constraint)
    both_free = (~is_cons[adj_rows]) & (~is_cons[adj_cols])
    r = pos[adj_rows[both_free]]
    c = pos[adj_cols[both_free]]
    rows = np.concatenate([r, c, np.arange(len(free))])
    cols = np.concatenate([c, r, np.arange(len(free))])
    vals = np.concatenate([-np.ones(2 * r.size), deg[free]])
    if soft_weight > 0.0 and soft_idx is not None and len(soft_idx):
        soft_pos = pos[soft_idx]
        keep = soft_pos >= 0
        soft_pos = soft_pos[keep]
        rows = np.concatenate([rows, soft_pos])
        cols = np.concatenate([cols, soft_pos])
        vals = np.concatenate([vals, np.full(soft_pos.size, soft_weight)])
    a = sparse.csr_matrix((vals, (rows, cols)), shape=(len(free), len(free)))

    # rhs picks up constrained neighbors
    free_to_cons_r = (~is_cons[adj_rows]) & is_cons[adj_cols]
    free_to_cons_c = is_cons[adj_rows] & (~is_cons[adj_cols])
    b = np.zeros((len(free), ncomp))
    np.add.at(b, pos[adj_rows[free_to_cons_r]], full[adj_cols[free_to_cons_r]])
    np.add.at(b, pos[adj_cols[free_to_cons_c]], full[adj_rows[free_to_cons_c]])
    if soft_weight > 0.0 and soft_idx is not None and len(soft_idx):
        sv = np.atleast_2d(np.asarray(soft_val, dtype=np.float64))
        if sv.shape[0] != len(soft_idx):
            sv = sv.T
        sel = pos[soft_idx] >= 0
        np.add.at(b, pos[soft_idx][sel], soft_weight * sv[sel])

    # zero out rows of singular (unconstrained, prior-free) components: they
    # have deg rows summing to 0 against b = 0, so CG returns 0 for them
    precond = sparse.diags(1.0 / np.maximum(a.diagonal(), 1e-12))
    for k in range(ncomp):
        if not np.any(b[:, k]) and soft_weight == 0.0:
            continue
        x, info = cg(a, b[:, k], rtol=0.0, atol=tol, maxiter=maxiter, M=precond)
        if info > 0:
            raise RuntimeError(f"laplace solve did not converge within {maxiter} iterations")
        full[free, k] = x
    return full


def _renormalize(vecs: np.ndarray, eps: float = 1e-9) -> np.ndarray:
    n = np.linalg.norm(vecs, axis=-1)
    out = np.zeros_like(vecs)
    ok = n > eps
    out[ok] = vecs[ok] / n[ok][..., None]
    return out


def diffuse_orientation_2d(sketch: OrientationMap2D, mask: MaskMap,
                           renormalize: bool = True,
                           tol: float = SOLVER_TOL, maxiter: int = SOLVER_MAXITER) -> OrientationMap2D:
    """Diffuse sparse stroke directions across the whole mask region.

    Stroke pixels act as Dirichlet constraints; the mask boundary is natural.
    Mask components that contain no stroke pixel stay background.
    """
    if sketch.data.shape[:2] != mask.data.shape:
        raise ValueError("sketch and mask resolutions differ")
    m = mask.as_bool()
    if not m.any():
        raise ValueError("empty mask")
    cons_mask = sketch.valid_mask() & m
    if not cons_mask.any():
        raise ValueError("no sketch pixels inside the mask")

    h, w = m.shape
    node = -np.ones((h, w), dtype=np.int64)
    ys, xs = np.nonzero(m)
    node[ys, xs] = np.arange(len(ys))
    n_nodes = len(ys)

    rows, cols = [], []
    right = m[:, :-1] & m[:, 1:]
    rr, cc = np.nonzero(right)
    rows.append(node[rr, cc]); cols.append(node[rr, cc + 1])
    down = m[:-1, :] & m[1:, :]
    rr, cc = np.nonzero(down)
    rows.append(node[rr, cc]); cols.append(node[rr + 1, cc])
    adj_r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    adj_c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)

    ci = node[cons_mask]
    cv = sketch.data[cons_mask]
    sol = solve_laplace_graph(adj_r, adj_c, n_nodes, ci, cv, tol=tol, maxiter=maxiter)

    out = np.zeros((h, w, 2))
    out[ys, xs] = sol
    if renormalize:
        out = _renormalize(out)
    return OrientationMap2D(out)


def build_shell(mask: MaskMap, depth: DepthMap, params: ShellParams) -> np.ndarray:
    """Boolean (nx, ny, nz) occupancy of the hair shell volume."""
    if mask.data.shape != depth.data.shape:
        raise ValueError("mask and depth resolutions differ")
    h, w = mask.data.shape
    nx, ny, nz = w, h, params.nz
    bmin = np.asarray(params.box_min, dtype=np.float64)
    bmax = np.asarray(params.box_max, dtype=np.float64)
    cell_z = (bmax[2] - bmin[2]) / nz

    d = depth.data
    hits = d > 0
    fallback = float(np.median(d[hits])) if hits.any() else 0.5
    dd = np.where(hits, d, fallback)
    z_hit = bmin[2] + dd * (bmax[2] - bmin[2])
    iz_hit = np.clip(np.floor((z_hit - bmin[2]) / cell_z).astype(np.int64), 0, nz - 1)

    shell = np.zeros((nx, ny, nz), dtype=bool)
    ys, xs = np.nonzero(mask.as_bool())
    for r, c in zip(ys, xs):
        ix, iy = c, ny - 1 - r
        hi = min(nz - 1, iz_hit[r, c] + params.margin_behind)
        lo = max(0, iz_hit[r, c] - params.thickness_cells)
        shell[ix, iy, lo:hi + 1] = True
    return shell


def diffuse_field_3d(dense: OrientationMap2D, mask: MaskMap, depth: DepthMap,
                     params: ShellParams | None = None,
                     renormalize: bool = True,
                     tol: float = SOLVER_TOL, maxiter: int = SOLVER_MAXITER) -> VectorField3D:
    """Lift a dense 2D orientation map into a diffused hair-shell volume.

    The mask is extruded in front of the bust surface; the front-most shell
    cell under each valid dense pixel is constrained to the lifted direction
    ``(x, y, 0)``; the Laplace system diffuses those constraints through the
    shell. An optional prior field softly ties cells to a previous view's
    (rotated) values.
    """
    params = params or ShellParams()
    if dense.data.shape[:2] != mask.data.shape:
        raise ValueError("dense and mask resolutions differ")
    shell = build_shell(mask, depth, params)
    if not shell.any():
        raise ValueError("empty shell volume")
    nx, ny, nz = shell.shape

    node = -np.ones((nx, ny, nz), dtype=np.int64)
    coords = np.argwhere(shell)
    node[coords[:, 0], coords[:, 1], coords[:, 2]] = np.arange(len(coords))

    rows, cols = [], []
    for axis in range(3):
        sl_a = [slice(None)] * 3
        sl_b = [slice(None)] * 3
        sl_a[axis] = slice(0, shell.shape[axis] - 1)
        sl_b[axis] = slice(1, shell.shape[axis])
        pair = shell[tuple(sl_a)] & shell[tuple(sl_b)]
        ii = np.argwhere(pair)
        jj = ii.copy()
        jj[:, axis] += 1
        rows.append(node[ii[:, 0], ii[:, 1], ii[:, 2]])
        cols.append(node[jj[:, 0], jj[:, 1], jj[:, 2]])
    adj_r = np.concatenate(rows)
    adj_c = np.concatenate(cols)

    # constraints: front-most shell cell under each valid dense pixel
    valid = dense.valid_mask()
    cons_nodes = []
    cons_vals = []
    ys, xs = np.nonzero(valid & mask.as_bool())
    first_iz = np.argmax(shell, axis=2)  # first occupied z per column (valid where shell any)
    has_cell = shell.any(axis=2)
    for r, c in zip(ys, xs):
        ix, iy = c, ny - 1 - r
        if not has_cell[ix, iy]:
            continue
        iz = first_iz[ix, iy]
        cons_nodes.append(node[ix, iy, iz])
        v = dense.data[r, c]
        cons_vals.append((v[0], v[1], 0.0))
    if not cons_nodes:
        raise ValueError("no dense pixels over the shell to constrain")
    soft_idx = soft_val = None
    soft_w = 0.0
    if params.prior is not None:
        if params.prior.shape != (nx, ny, nz):
            raise ValueError("prior grid does not match the shell grid")
        pv = params.prior.valid_mask()
        pcoords = np.argwhere(pv & shell)
        pn = node[pcoords[:, 0], pcoords[:, 1], pcoords[:, 2]]
        soft_idx = pn
        soft_val = params.prior.data[pcoords[:, 0], pcoords[:, 1], pcoords[:, 2]]
        soft_w = params.prior_weight

    sol = solve_laplace_graph(adj_r, adj_c, len(coords), np.array(cons_nodes), np.array(cons_vals),
                              soft_idx=soft_idx, soft_val=soft_val, soft_weight=soft_w,
                              tol=tol, maxiter=maxiter)
    data = np.zeros((nx, ny, nz, 3))
    data[coords[:, 0], coords[:, 1], coords[:, 2]] = sol
    if renormalize:
        data = _renormalize(data)
    return VectorField3D(data, params.box_min, params.box_max)
