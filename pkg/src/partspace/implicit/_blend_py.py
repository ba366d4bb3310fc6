"""Pure-numpy blend kernel: partition-of-unity of per-node linear models.

This is the fallback for the compiled extension; both implement

    d(x) = sum_c w_c(x) * (v_c + g_c . (x - z_c)) / sum_c w_c(x)

over the 8 corner nodes of the cell containing x, with Wendland weights
w = max(0, 1 - r^2/h^2)^3 and node gradients g_c precomputed by grid
finite differences. The returned gradient is the analytic derivative of
the blend. Corners with non-finite values are skipped.
"""
from __future__ import annotations

import numpy as np

COMPILED = False

_CORNERS = np.array(
    [[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=np.int64
)


def eval_batch(points, origin, h, values, node_gradients):
    """Evaluate the blend at many points.

    Parameters
    ----------
    points : (N, 3) float64
    origin : (3,) float64 grid origin (node [0,0,0] position)
    h : float grid spacing
    values : (nx, ny, nz) float64, NaN at unsolved nodes
    node_gradients : (nx, ny, nz, 3) float64

    Returns
    -------
    vals : (N,) float64
    grads : (N, 3) float64
    support : (N,) bool, False where no finite node carries weight
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dims = np.array(values.shape)
    g = (pts - origin) / h
    i0 = np.clip(np.floor(g).astype(np.int64), 0, dims - 2)

    idx = i0[:, None, :] + _CORNERS[None, :, :]          # (N, 8, 3)
    node_pos = origin + h * idx                          # (N, 8, 3)
    diff = pts[:, None, :] - node_pos                    # (N, 8, 3)
    r2 = np.einsum("nck,nck->nc", diff, diff)
    u = 1.0 - r2 / (h * h)
    w = np.where(u > 0.0, u, 0.0) ** 3                   # (N, 8)
    dw = (3.0 * np.where(u > 0.0, u, 0.0) ** 2 * (-2.0 / (h * h)))[:, :, None] * diff

    v_c = values[idx[:, :, 0], idx[:, :, 1], idx[:, :, 2]]          # (N, 8)
    g_c = node_gradients[idx[:, :, 0], idx[:, :, 1], idx[:, :, 2]]  # (N, 8, 3)
    finite = np.isfinite(v_c)
    w = np.where(finite, w, 0.0)
    dw = np.where(finite[:, :, None], dw, 0.0)
    v_c = np.where(finite, v_c, 0.0)
    g_c = np.where(finite[:, :, None], g_c, 0.0)

    taylor = v_c + np.einsum("nck,nck->nc", g_c, diff)   # local models at x
    W = w.sum(axis=1)
    support = W > 1e-300
    Wsafe = np.where(support, W, 1.0)
    vals = np.einsum("nc,nc->n", w, taylor) / Wsafe
    # d/dx [sum w T / W] = (sum dw T + sum w g - val * sum dw) / W
    num = (
        np.einsum("nck,nc->nk", dw, taylor)
        + np.einsum("nc,nck->nk", w, g_c)
        - vals[:, None] * dw.sum(axis=1)
    )
    grads = num / Wsafe[:, None]
    vals = np.where(support, vals, np.nan)
    grads = np.where(support[:, None], grads, np.nan)
    return vals, grads, support
