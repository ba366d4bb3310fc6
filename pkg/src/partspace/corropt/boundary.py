"""Boundary energies and the two-stage boundary-consistency optimization.

Stage one matches boundary points across docked part instances (closest
points on the partner's current boundary polyline, averaged in arc-length
over all occurrences). Stage two reruns the ensemble optimizer per part
with soft quadratic constraints toward the matched targets. Alternation
stops when the targets stop moving; this is an ICP-style scheme performed
simultaneously along all matching boundary curves.
"""
from __future__ import annotations

import numpy as np

from .energy import SoftConstraintTerm
from .lbfgs import optimize_ensemble

MAX_ALTERNATIONS = 20
TARGET_MOVE_TOL = 1e-4  # x bbox diagonal


class Polyline:
    """Closed 3D polyline with squared-distance and arc-length queries."""

    def __init__(self, points, closed=True):
        self.points = np.asarray(points, dtype=np.float64)
        if len(self.points) < 2:
            raise ValueError("polyline needs at least two points")
        self.closed = closed
        if closed:
            self.a = self.points
            self.b = np.roll(self.points, -1, axis=0)
        else:
            self.a = self.points[:-1]
            self.b = self.points[1:]
        self.seg = self.b - self.a
        self.seg_len2 = np.einsum("ij,ij->i", self.seg, self.seg)
        self.seg_len = np.sqrt(self.seg_len2)
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.total = self.cum[-1]
        if self.total <= 0:
            raise ValueError("degenerate polyline")

    def closest(self, pts):
        """(squared distance, closest point, arc parameter in [0, 1)) per point."""
        pts = np.atleast_2d(pts)
        rel = pts[:, None, :] - self.a[None, :, :]
        t = np.einsum("nsj,sj->ns", rel, self.seg) / np.maximum(self.seg_len2, 1e-300)
        t = np.clip(t, 0.0, 1.0)
        proj = self.a[None] + t[:, :, None] * self.seg[None]
        d2 = np.sum((pts[:, None, :] - proj) ** 2, axis=2)
        best = np.argmin(d2, axis=1)
        rows = np.arange(len(pts))
        tb = t[rows, best]
        q = proj[rows, best]
        s = (self.cum[best] + tb * self.seg_len[best]) / self.total
        if self.closed:
            s = s % 1.0
        return d2[rows, best], q, s

    def point_at(self, s):
        """Position at arc parameters in [0, 1) (cyclic when closed)."""
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        s = s % 1.0 if self.closed else np.clip(s, 0.0, 1.0)
        arc = s * self.total
        seg = np.clip(np.searchsorted(self.cum, arc, side="right") - 1, 0, len(self.seg) - 1)
        local = (arc - self.cum[seg]) / np.maximum(self.seg_len[seg], 1e-300)
        return self.a[seg] + local[:, None] * self.seg[seg]


class BoundaryTerm:
    """Point-to-polyline snapping of urshape boundary vertices (Eq.-style sum
    of squared distances to each instance's input part boundary)."""

    def __init__(self, vertex_indices, polylines_per_shape, weight=1.0):
        self.vertex_indices = np.asarray(vertex_indices, dtype=np.int64)
        self.polylines = polylines_per_shape
        self.weight = float(weight)
        for pl in self.polylines:
            if pl is not None and len(pl.points) < 2:
                raise ValueError("empty boundary curve")

    def evaluate(self, positions):
        energy = 0.0
        grad = np.zeros_like(positions)
        for i, pl in enumerate(self.polylines):
            if pl is None:
                continue
            x = positions[i, self.vertex_indices]
            d2, q, _ = pl.closest(x)
            energy += float(d2.sum())
            g = 2.0 * (x - q)
            np.add.at(grad, (np.full(len(x), i), self.vertex_indices), g)
        return self.weight * energy, self.weight * grad


def boundary_energy(positions, vertex_indices, polylines_per_shape, weight=1.0):
    """(E_B, gradient) for an (n, m, 3) ensemble; see BoundaryTerm."""
    term = BoundaryTerm(vertex_indices, polylines_per_shape, weight)
    return term.evaluate(positions)


class DockedSiteBinding:
    """One docking site's data needed by the boundary optimization.

    part_a / part_b : part type keys into the sets dict
    loop_a / loop_b : urshape boundary vertex indices per side (a closed
        loop or an open boundary run)
    occurrences : list of (instance index in part_a's set, instance index in
        part_b's set), one per training shape exhibiting the docking
    """

    def __init__(self, site_id, part_a, loop_a, part_b, loop_b, occurrences,
                 closed=True):
        self.site_id = site_id
        self.part_a = part_a
        self.loop_a = np.asarray(loop_a, dtype=np.int64)
        self.part_b = part_b
        self.loop_b = np.asarray(loop_b, dtype=np.int64)
        self.occurrences = list(occurrences)
        self.closed = bool(closed)


def _circular_mean(params):
    ang = 2.0 * np.pi * np.asarray(params)
    mean = np.arctan2(np.sin(ang).mean(), np.cos(ang).mean())
    return (mean / (2.0 * np.pi)) % 1.0


def _match_side(sets, part_src, loop_src, part_dst, loop_dst, occurrences,
                closed=True):
    """Canonical arc parameters on the partner loop, and per-occurrence
    constraint targets, for every boundary vertex of the source side."""
    src = sets[part_src]
    dst = sets[part_dst]
    params = np.empty((len(loop_src), len(occurrences)))
    polylines = []
    for k, (ia, ib) in enumerate(occurrences):
        poly = Polyline(dst.positions[ib][loop_dst], closed=closed)
        polylines.append(poly)
        _, _, s = poly.closest(src.positions[ia][loop_src])
        params[:, k] = s
    if closed:
        canonical = np.array([_circular_mean(row) for row in params])
    else:
        canonical = params.mean(axis=1)
    shape_idx, vert_idx, targets = [], [], []
    for k, (ia, ib) in enumerate(occurrences):
        partner = polylines[k].point_at(canonical)
        # midpoint targets: both sides are pulled together symmetrically
        # (full partner targets make the curves swap places each sweep)
        pts = 0.5 * (src.positions[ia][loop_src] + partner)
        shape_idx.extend([ia] * len(loop_src))
        vert_idx.extend(loop_src.tolist())
        targets.append(pts)
    return canonical, (
        np.array(shape_idx),
        np.array(vert_idx),
        np.concatenate(targets) if targets else np.zeros((0, 3)),
    )


def optimize_boundaries(sets, bindings, config, max_alternations=MAX_ALTERNATIONS,
                        target_tol=TARGET_MOVE_TOL, verify_on_surface=True,
                        extra_terms_per_part=None, log_lines=None):
    """Alternating boundary-consistency optimization across docked parts.

    Parameters
    ----------
    sets : dict part type -> CorrespondenceSet
    bindings : list of DockedSiteBinding
    config : OptimizerConfig (boundary_weight scales the soft constraints)

    Returns
    -------
    (sets, site_params, alternations): updated sets, canonical arc
    parameters per site and side, and the number of alternations run.
    """
    sets = {p: s.copy() for p, s in sets.items()}
    scale = max(
        float(np.ptp(s.positions.reshape(-1, 3), axis=0).max()) for s in sets.values()
    )
    prev_targets = None
    site_params = {}
    alternations = 0
    for alternations in range(1, max_alternations + 1):
        constraints = {p: [] for p in sets}
        all_targets = []
        for b in bindings:
            ca, match_a = _match_side(
                sets, b.part_a, b.loop_a, b.part_b, b.loop_b, b.occurrences,
                closed=b.closed,
            )
            cb, match_b = _match_side(
                sets, b.part_b, b.loop_b, b.part_a, b.loop_a,
                [(ib, ia) for (ia, ib) in b.occurrences],
                closed=b.closed,
            )
            site_params[b.site_id] = {"a_on_b": ca, "b_on_a": cb}
            constraints[b.part_a].append(match_a)
            constraints[b.part_b].append(match_b)
            all_targets.extend([match_a[2], match_b[2]])
        flat_targets = np.concatenate(all_targets) if all_targets else np.zeros((0, 3))
        if prev_targets is not None and len(prev_targets) == len(flat_targets):
            move = np.linalg.norm(flat_targets - prev_targets, axis=1).max()
            if move < target_tol * scale:
                break
        prev_targets = flat_targets

        for p, cset in sets.items():
            terms = []
            if extra_terms_per_part and p in extra_terms_per_part:
                terms.extend(extra_terms_per_part[p])
            for (si, vi, tg) in constraints[p]:
                if len(si):
                    terms.append(SoftConstraintTerm(si, vi, tg, config.boundary_weight))
            if not terms and not constraints[p]:
                continue
            result = optimize_ensemble(
                cset, config, extra_terms=terms,
                verify_on_surface=verify_on_surface, log_lines=log_lines,
            )
            sets[p] = result.correspondences
    return sets, site_params, alternations
