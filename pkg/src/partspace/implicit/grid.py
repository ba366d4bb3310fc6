"""Regular-grid signed distance field: evaluation, projection, tangent steps.

The grid stores node values solved by the fit, per-node finite-difference
gradients, and the active-cell mask (the domain the field is trusted on).
Evaluation blends per-node linear models with Wendland weights of radius h,
so the field is C1 inside the domain and reproduces linear node fields
exactly.
"""
from __future__ import annotations

import struct

import numpy as np
from scipy import ndimage

from . import kernels

SURFACE_TOL_FRACTION = 1e-6  # of bbox diagonal
PROJECT_MAX_STEPS = 100
PROJECT_MAX_HALVINGS = 30
GRAD_MIN_SQ = 1e-20

_MAGIC = b"PSSDFG01"


class OutsideDomainError(ValueError):
    """Raised when a query point left the constraint domain."""


class ProjectionError(RuntimeError):
    """Raised when gradient descent onto the zero set fails to converge."""


def _node_gradients(values, h):
    """Per-node finite-difference gradients; central where both neighbors
    are solved, one-sided where one is, zero otherwise."""
    grads = np.zeros(values.shape + (3,), dtype=np.float64)
    finite = np.isfinite(values)
    safe = np.where(finite, values, 0.0)
    for axis in range(3):
        fwd_ok = np.zeros_like(finite)
        bwd_ok = np.zeros_like(finite)
        fwd = np.zeros_like(safe)
        bwd = np.zeros_like(safe)
        src = [slice(None)] * 3
        dst = [slice(None)] * 3
        src[axis] = slice(1, None)
        dst[axis] = slice(None, -1)
        fwd_ok[tuple(dst)] = finite[tuple(src)]
        fwd[tuple(dst)] = safe[tuple(src)]
        bwd_ok[tuple(src)] = finite[tuple(dst)]
        bwd[tuple(src)] = safe[tuple(dst)]
        central = fwd_ok & bwd_ok & finite
        fwd_only = fwd_ok & ~bwd_ok & finite
        bwd_only = bwd_ok & ~fwd_ok & finite
        g = np.zeros_like(safe)
        g[central] = (fwd[central] - bwd[central]) / (2.0 * h)
        g[fwd_only] = (fwd[fwd_only] - safe[fwd_only]) / h
        g[bwd_only] = (safe[bwd_only] - bwd[bwd_only]) / h
        grads[..., axis] = g
    return grads


class SdfGrid:
    """Fitted signed distance field on a regular node grid.

    Parameters
    ----------
    origin : (3,) position of node (0, 0, 0)
    spacing : node spacing h (also the blend kernel radius)
    values : (nx, ny, nz) node values, NaN at unsolved nodes
    cell_mask : (nx-1, ny-1, nz-1) bool, the fitted domain
    bbox_diagonal : diagonal of the fitted data's bounding box (sets the
        on-surface tolerance)
    """

    def __init__(self, origin, spacing, values, cell_mask, bbox_diagonal):
        self.origin = np.asarray(origin, dtype=np.float64).reshape(3)
        self.spacing = float(spacing)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.cell_mask = np.ascontiguousarray(cell_mask, dtype=bool)
        expected = tuple(d - 1 for d in self.values.shape)
        if self.cell_mask.shape != expected:
            raise ValueError("cell mask shape %s does not match node dims %s"
                             % (self.cell_mask.shape, self.values.shape))
        self.bbox_diagonal = float(bbox_diagonal)
        self.surface_tol = SURFACE_TOL_FRACTION * self.bbox_diagonal
        self.node_gradients = _node_gradients(self.values, self.spacing)
        # evaluation is allowed on the mask dilated by one cell (h)
        self.eval_mask = ndimage.binary_dilation(self.cell_mask, np.ones((3, 3, 3), bool))

    @property
    def dims(self):
        return self.values.shape

    @property
    def kernel_radius(self):
        return self.spacing

    # -- queries -----------------------------------------------------------

    def cell_index(self, points):
        pts = np.atleast_2d(points)
        return np.floor((pts - self.origin) / self.spacing).astype(np.int64)

    def contains(self, points):
        """True where the point lies in the dilated active domain."""
        ci = self.cell_index(points)
        dims = np.array(self.eval_mask.shape)
        inside = np.all((ci >= 0) & (ci < dims), axis=1)
        out = np.zeros(len(ci), dtype=bool)
        ok = np.where(inside)[0]
        if ok.size:
            c = ci[ok]
            out[ok] = self.eval_mask[c[:, 0], c[:, 1], c[:, 2]]
        return out

    def evaluate(self, points):
        """Blend value and analytic gradient at points (N, 3) or (3,).

        Raises OutsideDomainError if any point left the constraint domain.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        single = np.asarray(points).ndim == 1
        inside = self.contains(pts)
        vals, grads, support = kernels.eval_batch(
            pts, self.origin, self.spacing, self.values, self.node_gradients
        )
        ok = inside & support
        if not np.all(ok):
            bad = int(np.where(~ok)[0][0])
            raise OutsideDomainError(
                "point %d at %s left constraint domain" % (bad, pts[bad].tolist())
            )
        if single:
            return float(vals[0]), grads[0]
        return vals, grads

    def evaluate_masked(self, points):
        """(vals, grads, ok) without raising; NaN where not evaluable."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        inside = self.contains(pts)
        vals, grads, support = kernels.eval_batch(
            pts, self.origin, self.spacing, self.values, self.node_gradients
        )
        ok = inside & support
        vals = np.where(ok, vals, np.nan)
        return vals, grads, ok

    # -- projection / tangent stepping --------------------------------------

    def project_batch(self, points, tol=None):
        """Newton descent of |d| along the gradient; returns (points, ok).

        Step size d/|grad d|^2 with halving on overshoot. Points that fail
        (vanishing gradient, no progress, domain exit) get ok=False.
        """
        tol = self.surface_tol if tol is None else tol
        x = np.atleast_2d(np.asarray(points, dtype=np.float64)).copy()
        n = len(x)
        vals, grads, ok = self.evaluate_masked(x)
        failed = ~ok
        for _ in range(PROJECT_MAX_STEPS):
            active = ~failed & (np.abs(vals) > tol)
            if not active.any():
                break
            idx = np.where(active)[0]
            g = grads[idx]
            n2 = np.einsum("ij,ij->i", g, g)
            tiny = n2 < GRAD_MIN_SQ
            if tiny.any():
                failed[idx[tiny]] = True
                idx = idx[~tiny]
                if idx.size == 0:
                    continue
                g = grads[idx]
                n2 = np.einsum("ij,ij->i", g, g)
            step = -(vals[idx] / n2)[:, None] * g
            alpha = np.ones(len(idx))
            remaining = np.arange(len(idx))
            improved = np.zeros(len(idx), dtype=bool)
            trial_x = np.empty_like(step)
            trial_v = np.empty(len(idx))
            trial_g = np.empty_like(step)
            for _ in range(PROJECT_MAX_HALVINGS):
                cand = x[idx[remaining]] + alpha[remaining, None] * step[remaining]
                cv, cg, cok = self.evaluate_masked(cand)
                better = cok & (np.abs(cv) < np.abs(vals[idx[remaining]]))
                sel = remaining[better]
                trial_x[sel] = cand[better]
                trial_v[sel] = cv[better]
                trial_g[sel] = cg[better]
                improved[sel] = True
                remaining = remaining[~better]
                if remaining.size == 0:
                    break
                alpha[remaining] *= 0.5
            failed[idx[~improved]] = True
            moved = idx[improved]
            x[moved] = trial_x[improved]
            vals[moved] = trial_v[improved]
            grads[moved] = trial_g[improved]
        ok = ~failed & (np.abs(vals) <= tol)
        return x, ok

    def project_to_surface(self, point):
        """Project one point (or a batch) onto the zero set; raises on failure."""
        pts = np.atleast_2d(np.asarray(point, dtype=np.float64))
        single = np.asarray(point).ndim == 1
        out, ok = self.project_batch(pts)
        if not ok.all():
            bad = int(np.where(~ok)[0][0])
            raise ProjectionError(
                "projection failed for point %d at %s (gradient too small or no progress)"
                % (bad, pts[bad].tolist())
            )
        return out[0] if single else out

    def tangent_step_batch(self, points, steps):
        """Exponential-map approximation: tangent-project step, advance, reproject."""
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        s = np.atleast_2d(np.asarray(steps, dtype=np.float64))
        _, grads, ok = self.evaluate_masked(x)
        if not ok.all():
            bad = int(np.where(~ok)[0][0])
            raise OutsideDomainError("tangent step from point %d outside domain" % bad)
        nrm2 = np.einsum("ij,ij->i", grads, grads)
        nrm2 = np.where(nrm2 > 0, nrm2, 1.0)
        tangential = s - (np.einsum("ij,ij->i", s, grads) / nrm2)[:, None] * grads
        return self.project_batch(x + tangential)

    def tangent_step(self, point, step):
        pts = np.atleast_2d(np.asarray(point, dtype=np.float64))
        single = np.asarray(point).ndim == 1
        out, ok = self.tangent_step_batch(pts, np.atleast_2d(step))
        if not ok.all():
            bad = int(np.where(~ok)[0][0])
            raise ProjectionError("tangent step failed for point %d" % bad)
        return out[0] if single else out

    # -- serialization -------------------------------------------------------

    def to_bytes(self):
        header = struct.pack(
            "<8s3dd3qd",
            _MAGIC,
            *self.origin,
            self.spacing,
            *[int(d) for d in self.dims],
            self.bbox_diagonal,
        )
        return (
            header
            + np.ascontiguousarray(self.values, dtype="<f8").tobytes()
            + np.ascontiguousarray(self.cell_mask, dtype=np.uint8).tobytes()
        )

    @classmethod
    def from_bytes(cls, blob):
        head_size = struct.calcsize("<8s3dd3qd")
        magic, ox, oy, oz, h, nx, ny, nz, diag = struct.unpack("<8s3dd3qd", blob[:head_size])
        if magic != _MAGIC:
            raise ValueError("bad SDF grid magic %r" % magic)
        n_nodes = nx * ny * nz
        n_cells = (nx - 1) * (ny - 1) * (nz - 1)
        off = head_size
        values = np.frombuffer(blob, dtype="<f8", count=n_nodes, offset=off).reshape(nx, ny, nz)
        off += n_nodes * 8
        mask = np.frombuffer(blob, dtype=np.uint8, count=n_cells, offset=off)
        mask = mask.reshape(nx - 1, ny - 1, nz - 1).astype(bool)
        return cls((ox, oy, oz), h, values.copy(), mask, diag)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
