"""Signed-distance-field fitting over a regular grid.

Quadratic energy: zero-crossing at the samples, blend gradient matching the
sample normals, and a finite-difference Hessian smoothness integral over
the active domain. Solved as one sparse normal-equation system.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import cg

from .grid import SdfGrid

DEFAULT_H_FRACTION = 0.015
MU_ZERO = 1.0          # x 1/n_points
MU_GRAD = 0.1          # x 1/n_points
MU_HESS = 1e-4         # x 1/|active cells|
ACTIVE_RADIUS_CELLS = 4.9   # covers every cell center within 4h of a sample
NORMAL_EQ_RTOL = 1e-8
RIDGE = 1e-10

_CORNERS = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=np.int64)


class SdfFitError(RuntimeError):
    pass


def _ball_structure(radius):
    r = int(np.ceil(radius))
    ax = np.arange(-r, r + 1)
    dx, dy, dz = np.meshgrid(ax, ax, ax, indexing="ij")
    return dx * dx + dy * dy + dz * dz <= radius * radius


def _fd_gradient_ops(node_mask, h):
    """Sparse FD gradient operators (one per axis) over active node columns.

    Central differences where both axis neighbors are active, one-sided
    where a single one is, zero rows otherwise. Mirrors the rule the grid
    applies after the fit so assembly and evaluation agree.
    """
    dims = node_mask.shape
    flat_active = np.where(node_mask.ravel())[0]
    n = len(flat_active)
    col_of = -np.ones(node_mask.size, dtype=np.int64)
    col_of[flat_active] = np.arange(n)
    coords = np.array(np.unravel_index(flat_active, dims)).T
    strides = np.array([dims[1] * dims[2], dims[2], 1])
    ops = []
    for axis in range(3):
        step = strides[axis]
        has_fwd = coords[:, axis] + 1 < dims[axis]
        has_bwd = coords[:, axis] - 1 >= 0
        fwd_col = np.where(has_fwd, col_of[np.minimum(flat_active + step, node_mask.size - 1)], -1)
        bwd_col = np.where(has_bwd, col_of[np.maximum(flat_active - step, 0)], -1)
        fwd_ok = fwd_col >= 0
        bwd_ok = bwd_col >= 0
        rows, cols, vals = [], [], []
        central = fwd_ok & bwd_ok
        idx = np.where(central)[0]
        rows += [idx, idx]
        cols += [fwd_col[idx], bwd_col[idx]]
        vals += [np.full(len(idx), 0.5 / h), np.full(len(idx), -0.5 / h)]
        fonly = fwd_ok & ~bwd_ok
        idx = np.where(fonly)[0]
        rows += [idx, idx]
        cols += [fwd_col[idx], idx]
        vals += [np.full(len(idx), 1.0 / h), np.full(len(idx), -1.0 / h)]
        bonly = bwd_ok & ~fwd_ok
        idx = np.where(bonly)[0]
        rows += [idx, idx]
        cols += [idx, bwd_col[idx]]
        vals += [np.full(len(idx), 1.0 / h), np.full(len(idx), -1.0 / h)]
        ops.append(
            sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n, n),
            )
        )
    return ops, flat_active, col_of


def _blend_scatter(points, origin, h, col_of, dims):
    """Per-point corner data for functional assembly.

    Returns (cols (N,8), wtilde (N,8), diffs (N,8,3), dw_over_W (N,8,3)).
    """
    strides = np.array([dims[1] * dims[2], dims[2], 1])
    g = (points - origin) / h
    i0 = np.clip(np.floor(g).astype(np.int64), 0, np.array(dims) - 2)
    idx = i0[:, None, :] + _CORNERS[None, :, :]
    node_pos = origin + h * idx
    diff = points[:, None, :] - node_pos
    r2 = np.einsum("nck,nck->nc", diff, diff)
    u = np.maximum(0.0, 1.0 - r2 / (h * h))
    w = u**3
    dw = (3.0 * u**2 * (-2.0 / (h * h)))[:, :, None] * diff
    W = w.sum(axis=1)
    if np.any(W <= 0):
        raise SdfFitError("sample point outside grid support")
    flat = (idx * strides).sum(axis=2)
    cols = col_of[flat]
    if np.any(cols < 0):
        raise SdfFitError("sample point touches an inactive grid node")
    return cols, w / W[:, None], diff, dw / W[:, None, None]


def _functional_matrices(points, origin, h, col_of, dims, grad_ops, n_cols):
    """Value functional A_val and gradient functionals A_grad[a] as sparse
    matrices over active node values, via the Taylor blend."""
    n_pts = len(points)
    cols, wt, diff, dwW = _blend_scatter(points, origin, h, col_of, dims)
    rows = np.repeat(np.arange(n_pts), 8)
    flat_cols = cols.ravel()

    def scatter(data):
        return sp.csr_matrix((data.ravel(), (rows, flat_cols)), shape=(n_pts, n_cols))

    Wt = scatter(wt)
    A_val = Wt.copy()
    for k in range(3):
        A_val = A_val + scatter(wt * diff[:, :, k]) @ grad_ops[k]
    s = dwW.sum(axis=1)  # (N, 3): sum of dw/W per axis
    A_grad = []
    for a in range(3):
        Aa = scatter(dwW[:, :, a])
        for k in range(3):
            Aa = Aa + scatter(dwW[:, :, a] * diff[:, :, k]) @ grad_ops[k]
        Aa = Aa + Wt @ grad_ops[a]
        Aa = Aa - sp.diags(s[:, a]) @ A_val
        A_grad.append(Aa.tocsr())
    return A_val.tocsr(), A_grad


def _hessian_rows(node_mask, col_of, h, dims):
    """Second-difference rows (straight and mixed) where stencils fit."""
    strides = np.array([dims[1] * dims[2], dims[2], 1])
    flat_active = np.where(node_mask.ravel())[0]
    coords = np.array(np.unravel_index(flat_active, dims)).T
    blocks = []
    inv_h2 = 1.0 / (h * h)
    for a in range(3):
        ok = (coords[:, a] + 1 < dims[a]) & (coords[:, a] - 1 >= 0)
        base = flat_active[ok]
        cp = col_of[base + strides[a]]
        cm = col_of[base - strides[a]]
        c0 = col_of[base]
        valid = (cp >= 0) & (cm >= 0)
        cp, cm, c0 = cp[valid], cm[valid], c0[valid]
        m = len(c0)
        rows = np.repeat(np.arange(m), 3)
        cols = np.stack([cp, c0, cm], axis=1).ravel()
        vals = np.tile([inv_h2, -2.0 * inv_h2, inv_h2], m)
        blocks.append(("straight", rows, cols, vals, m))
    for a in range(3):
        for b in range(a + 1, 3):
            ok = (
                (coords[:, a] + 1 < dims[a]) & (coords[:, a] - 1 >= 0)
                & (coords[:, b] + 1 < dims[b]) & (coords[:, b] - 1 >= 0)
            )
            base = flat_active[ok]
            cpp = col_of[base + strides[a] + strides[b]]
            cpm = col_of[base + strides[a] - strides[b]]
            cmp_ = col_of[base - strides[a] + strides[b]]
            cmm = col_of[base - strides[a] - strides[b]]
            valid = (cpp >= 0) & (cpm >= 0) & (cmp_ >= 0) & (cmm >= 0)
            cpp, cpm, cmp_, cmm = cpp[valid], cpm[valid], cmp_[valid], cmm[valid]
            m = len(cpp)
            rows = np.repeat(np.arange(m), 4)
            cols = np.stack([cpp, cpm, cmp_, cmm], axis=1).ravel()
            q = 0.25 * inv_h2
            vals = np.tile([q, -q, -q, q], m)
            blocks.append(("mixed", rows, cols, vals, m))
    return blocks


def fit_sdf(cloud, bbox=None, h_fraction=DEFAULT_H_FRACTION, mu_hess=MU_HESS,
            max_iterations=20000):
    """Fit a signed distance field to an oriented point cloud.

    Parameters
    ----------
    cloud : OrientedPointCloud
    bbox : (lo, hi) pair, defaults to the cloud's bounding box
    h_fraction : grid spacing as a fraction of the bbox diagonal (<= 0.1)
    mu_hess : Hessian smoothness weight (per active cell)

    Returns
    -------
    SdfGrid
    """
    if len(cloud) == 0:
        raise ValueError("cannot fit an SDF to an empty cloud")
    if not (0.0 < h_fraction <= 0.1):
        raise ValueError("h_fraction must be in (0, 0.1]")
    pts = cloud.points
    nrm = cloud.normals
    if bbox is None:
        bbox = (pts.min(axis=0), pts.max(axis=0))
    lo = np.asarray(bbox[0], dtype=np.float64)
    hi = np.asarray(bbox[1], dtype=np.float64)
    diag = float(np.linalg.norm(hi - lo))
    if diag <= 0:
        raise ValueError("degenerate bounding box")
    h = h_fraction * diag

    pad = (np.ceil(ACTIVE_RADIUS_CELLS) + 2) * h
    origin = lo - pad
    dims = tuple(int(np.ceil((hi[k] + pad - origin[k]) / h)) + 2 for k in range(3))

    # active cells: the cells containing samples, dilated to cover 4h
    cell_dims = tuple(d - 1 for d in dims)
    cell_mask = np.zeros(cell_dims, dtype=bool)
    ci = np.clip(
        np.floor((pts - origin) / h).astype(np.int64), 0, np.array(cell_dims) - 1
    )
    cell_mask[ci[:, 0], ci[:, 1], ci[:, 2]] = True
    cell_mask = ndimage.binary_dilation(cell_mask, _ball_structure(ACTIVE_RADIUS_CELLS))
    n_cells = int(cell_mask.sum())

    # active nodes = corners of active cells
    node_mask = np.zeros(dims, dtype=bool)
    for di, dj, dk in _CORNERS:
        node_mask[
            di : cell_dims[0] + di, dj : cell_dims[1] + dj, dk : cell_dims[2] + dk
        ] |= cell_mask

    grad_ops, flat_active, col_of = _fd_gradient_ops(node_mask, h)
    n_cols = len(flat_active)

    A_val, A_grad = _functional_matrices(pts, origin, h, col_of, dims, grad_ops, n_cols)

    n_pts = len(pts)
    mu_z = MU_ZERO / n_pts
    mu_g = MU_GRAD / n_pts
    mu_h_node = mu_hess / max(n_cells, 1)

    mats = [np.sqrt(mu_z) * A_val]
    rhs = [np.zeros(n_pts)]
    for a in range(3):
        mats.append(np.sqrt(mu_g) * A_grad[a])
        rhs.append(np.sqrt(mu_g) * nrm[:, a])
    for kind, rows, cols, vals, m in _hessian_rows(node_mask, col_of, h, dims):
        if m == 0:
            continue
        weight = np.sqrt(mu_h_node * (2.0 if kind == "mixed" else 1.0))
        mats.append(weight * sp.csr_matrix((vals, (rows, cols)), shape=(m, n_cols)))
        rhs.append(np.zeros(m))

    A = sp.vstack(mats, format="csr")
    b = np.concatenate(rhs)
    AtA = (A.T @ A).tocsr()
    Atb = A.T @ b
    diag_vals = AtA.diagonal()
    ridge = RIDGE * float(diag_vals.mean())
    AtA = AtA + ridge * sp.eye(n_cols, format="csr")
    precond = sp.diags(1.0 / np.maximum(AtA.diagonal(), 1e-300))
    x, info = cg(AtA, Atb, rtol=NORMAL_EQ_RTOL * 1e-2, atol=0.0,
                 maxiter=max_iterations, M=precond)
    residual = float(np.linalg.norm(AtA @ x - Atb))
    ref = max(float(np.linalg.norm(Atb)), 1e-300)
    if info != 0 or residual > NORMAL_EQ_RTOL * ref:
        raise SdfFitError(
            "normal equations did not converge: relative residual %.3e" % (residual / ref)
        )

    values = np.full(dims, np.nan)
    values.ravel()[flat_active] = x
    return SdfGrid(origin, h, values, cell_mask, diag)
