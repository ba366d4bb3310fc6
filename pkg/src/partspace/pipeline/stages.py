"""End-to-end analysis pipeline with per-stage checkpointing.

Stages: load -> remesh -> sdf -> param -> optimize -> boundaries ->
polish -> model. Each stage writes its artifacts under the output
directory; with resume=True a stage whose artifacts exist is loaded
instead of recomputed. Any stage error aborts with the stage name and the
artifact paths of the completed stages.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..corropt import (
    BoundaryTerm,
    CorrespondenceSet,
    DockedSiteBinding,
    Polyline,
    optimize_boundaries,
    optimize_ensemble,
)
from ..implicit import SdfGrid, fit_sdf
from ..mesh import load_mesh, sample_surface, save_ply, uniform_remesh
from ..mesh.trimesh import TriMesh
from ..partmodel import (
    SiteCorrespondence,
    align_loops,
    default_band_radius,
    extract_pair_geometry,
    learn_docking_rules,
)
from ..shapespace import build_pca_model
from .config import load_annotation
from .container import ModelContainer, file_sha256

STAGES = ["remesh", "sdf", "param", "optimize", "boundaries", "polish", "model"]


class StageError(RuntimeError):
    def __init__(self, stage, message, completed):
        super().__init__(
            "stage %r failed: %s (completed artifacts: %s)"
            % (stage, message, ", ".join(str(p) for p in completed) or "none")
        )
        self.stage = stage
        self.completed = completed


class PipelineState:
    def __init__(self, config):
        self.config = config
        self.out_dir = Path(config.base_dir) / config.out_dir
        self.annotation = None
        self.input_meshes = []
        self.part_types = []
        self.instances = {}        # part -> list of TriMesh (remeshed)
        self.docked_curves = {}    # (part, shape) -> list of (site_id, positions)
        self.outer_curves = {}     # (part, shape) -> list of positions arrays
        self.grids = {}            # part -> list of SdfGrid
        self.csets = {}            # part -> CorrespondenceSet
        self.rules = None
        self.occurrences = []
        self.site_corrs = {}
        self.container = None
        self.completed = []
        self.logs = {}

    def artifact(self, *parts):
        p = self.out_dir.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p


def _load_inputs(state):
    cfg = state.config
    if cfg.annotation:
        state.annotation = load_annotation(cfg.annotation_path())
    meshes = []
    for k, path in enumerate(cfg.mesh_paths()):
        mesh = load_mesh(path)
        if state.annotation and k < len(state.annotation.shapes):
            ann = state.annotation.shapes[k]
            if ann.labels is not None:
                mesh = TriMesh(mesh.vertices, mesh.triangles,
                               np.asarray(ann.labels, dtype=np.int64))
        if mesh.part_labels is None:
            mesh = TriMesh(mesh.vertices, mesh.triangles,
                           np.ones(mesh.n_triangles, dtype=np.int64))
        meshes.append(mesh)
    state.input_meshes = meshes
    types = sorted({int(p) for m in meshes for p in np.unique(m.part_labels)})
    state.part_types = types


def _part_boundary_curves(state):
    """Docked curves (label boundaries) and outer curves (composite
    boundary) per part instance, from the input meshes."""
    state.rules, state.occurrences = (None, [])
    try:
        state.rules, state.occurrences = learn_docking_rules(state.input_meshes)
    except Exception as exc:
        raise StageError("remesh", "docking rules: %s" % exc, state.completed)
    for si, mesh in enumerate(state.input_meshes):
        for occ in state.occurrences:
            if occ.shape_index != si:
                continue
            pts = mesh.vertices[occ.curve_vertices]
            for p in (occ.part_a, occ.part_b):
                state.docked_curves.setdefault((p, si), []).append(
                    (occ.site_id, pts)
                )
        # outer curves: boundary loops of each part's submesh that are also
        # boundaries of the composite
        comp_boundary = {tuple(e) for e in mesh.boundary_edges()}
        for p in np.unique(mesh.part_labels):
            sub, vmap = mesh.submesh(mesh.part_labels == p)
            for loop in sub.boundary_loops():
                orig = vmap[loop]
                edges = {tuple(sorted((int(orig[i]), int(orig[(i + 1) % len(orig)]))))
                         for i in range(len(orig))}
                if edges & comp_boundary:
                    state.outer_curves.setdefault((int(p), si), []).append(
                        mesh.vertices[orig]
                    )


def stage_remesh(state, resume):
    cfg = state.config
    _load_inputs(state)
    _part_boundary_curves(state)
    for p in state.part_types:
        subs = []
        for mesh in state.input_meshes:
            sub, _ = mesh.submesh(mesh.part_labels == p)
            subs.append(sub)
        target = cfg.remesh_target_fraction * float(
            np.mean([np.mean(s.edge_lengths()) for s in subs])
        )
        instances = []
        for k, sub in enumerate(subs):
            path = state.artifact("remesh", "part%d_shape%d.ply" % (p, k))
            if resume and path.exists():
                instances.append(load_mesh(path))
                continue
            out = uniform_remesh(sub, target, passes=cfg.remesh_passes) \
                if cfg.remesh_enabled else sub
            save_ply(path, out)
            instances.append(out)
        state.instances[p] = instances
    state.completed.append(state.out_dir / "remesh")


def stage_sdf(state, resume):
    cfg = state.config
    for p in state.part_types:
        grids = []
        for k, inst in enumerate(state.instances[p]):
            path = state.artifact("sdf", "part%d_shape%d.sdf" % (p, k))
            if resume and path.exists():
                grids.append(SdfGrid.load(path))
                continue
            lo, hi = inst.bbox()
            h = cfg.h_fraction * float(np.linalg.norm(hi - lo))
            cloud = sample_surface(inst, cfg.sample_spacing_factor * h,
                                   seed=cfg.seed * 1009 + 31 * p + k)
            grid = fit_sdf(cloud, bbox=(lo, hi), h_fraction=cfg.h_fraction,
                           mu_hess=cfg.mu_hess)
            grid.save(path)
            grids.append(grid)
        state.grids[p] = grids
    state.completed.append(state.out_dir / "sdf")


def _resolve_seed(state, p, k, mesh):
    """Slit seed vertex for a closed part instance, from the annotation."""
    if state.annotation is None:
        raise StageError(
            "param",
            "shape %d part %d is closed and needs a 'seed' landmark" % (k, p),
            state.completed,
        )
    v = state.annotation.landmark_vertex(k, "seed", state.input_meshes[k])
    if v is None:
        raise StageError(
            "param",
            "shape %d part %d: missing 'seed' landmark for the slit cut" % (k, p),
            state.completed,
        )
    target = state.input_meshes[k].vertices[v]
    return int(np.argmin(np.linalg.norm(mesh.vertices - target, axis=1)))


def _resolve_start(state, p, k, cut_instance):
    """Boundary start vertex on the cut boundary loop (user landmark)."""
    ann = state.annotation
    loop = cut_instance.patch.boundary_loop if hasattr(cut_instance, "patch") else None
    name = None
    if ann is not None:
        name = ann.shapes[k].boundary_start.get(str(p))
    if name is None:
        return None
    v = ann.landmark_vertex(k, name, state.input_meshes[k])
    if v is None:
        raise StageError(
            "param",
            "shape %d part %d: boundary start landmark %r not found" % (k, p, name),
            state.completed,
        )
    return state.input_meshes[k].vertices[v]


def stage_param(state, resume):
    from ..param import CutPartInstance, cross_parametrize

    cfg = state.config
    for p in state.part_types:
        path = state.artifact("param", "part%d.npz" % p)
        if resume and path.exists():
            data = np.load(path, allow_pickle=False)
            labels = data["ur_l"] if "ur_l" in data.files else None
            urshape = TriMesh(data["ur_v"], data["ur_t"].astype(np.int64),
                              labels, validate=False)
            state.csets[p] = CorrespondenceSet.from_arrays(
                urshape, state.grids[p],
                {k: data[k] for k in ("positions", "rotations", "translations")},
            )
            continue
        instances = []
        for k, mesh in enumerate(state.instances[p]):
            closed = len(mesh.boundary_edges()) == 0
            seed = _resolve_seed(state, p, k, mesh) if closed else None
            if not closed:
                start_point = _resolve_start(state, p, k, None)
                if start_point is None:
                    raise StageError(
                        "param",
                        "shape %d part %d: missing boundary start point for the "
                        "outer boundary (annotation boundaryStart)" % (k, p),
                        state.completed,
                    )
            try:
                inst = CutPartInstance(mesh, seed_vertex=seed)
            except Exception as exc:
                raise StageError("param", "shape %d part %d: %s" % (k, p, exc),
                                 state.completed)
            if not closed:
                # re-parametrize with the user start point snapped to the loop
                loop = inst.patch.boundary_loop
                d = np.linalg.norm(inst.cut_mesh.vertices[loop] - start_point, axis=1)
                start = int(loop[int(np.argmin(d))])
                inst = CutPartInstance(mesh, seed_vertex=seed, start_vertex=start)
            instances.append(inst)
        try:
            urshape, positions = cross_parametrize(
                instances, grids=state.grids[p], refine_passes=cfg.refine_passes
            )
        except Exception as exc:
            raise StageError("param", "part %d: %s" % (p, exc), state.completed)
        cset = CorrespondenceSet(urshape, positions, state.grids[p]).fit_poses()
        state.csets[p] = cset
        arrays = cset.to_arrays()
        if urshape.part_labels is not None:
            arrays["ur_l"] = urshape.part_labels
        np.savez(path, ur_v=urshape.vertices, ur_t=urshape.triangles, **arrays)
    state.completed.append(state.out_dir / "param")


def _match_loop_to_curve(urshape, positions0, curve_pts):
    """The urshape boundary loop whose instance-0 positions hug a curve."""
    best = None
    poly = Polyline(curve_pts, closed=False)
    for li, loop in enumerate(urshape.boundary_loops()):
        d2, _, _ = poly.closest(positions0[loop])
        score = float(np.sqrt(d2).mean())
        if best is None or score < best[0]:
            best = (score, li, loop)
    return best[2] if best else None


def _boundary_terms(state, p, include_docked=True):
    """E_B terms snapping urshape boundary loops to the input part curves."""
    cset = state.csets[p]
    urshape = cset.urshape
    loops = urshape.boundary_loops()
    if not loops:
        return []
    terms = []
    n = cset.n_shapes
    curves_per_shape = []
    for k in range(n):
        curves = [pts for pts in state.outer_curves.get((p, k), [])]
        if include_docked:
            curves += [pts for _, pts in state.docked_curves.get((p, k), [])]
        curves_per_shape.append(curves)
    for loop in loops:
        polylines = []
        for k in range(n):
            curves = curves_per_shape[k]
            if not curves:
                polylines.append(None)
                continue
            pos0 = cset.positions[k][loop]
            best = None
            for pts in curves:
                poly = Polyline(pts, closed=False)
                d2, _, _ = poly.closest(pos0)
                score = float(np.sqrt(d2).mean())
                if best is None or score < best[0]:
                    best = (score, poly)
            polylines.append(best[1])
        if any(pl is not None for pl in polylines):
            terms.append(BoundaryTerm(loop, polylines,
                                      weight=state.config.outer_boundary_weight))
    return terms


def stage_optimize(state, resume):
    cfg = state.config
    for p in state.part_types:
        path = state.artifact("optimize", "part%d.npz" % p)
        if resume and path.exists():
            data = np.load(path)
            state.csets[p] = CorrespondenceSet.from_arrays(
                state.csets[p].urshape, state.grids[p],
                {k: data[k] for k in ("positions", "rotations", "translations")},
            )
            continue
        terms = _boundary_terms(state, p, include_docked=True)
        log = []
        try:
            result = optimize_ensemble(state.csets[p], cfg.optimizer,
                                       extra_terms=terms, log_lines=log)
        except Exception as exc:
            raise StageError("optimize", "part %d: %s" % (p, exc), state.completed)
        state.csets[p] = result.correspondences
        state.logs.setdefault("optimize", {})[p] = log
        log_path = state.artifact("logs", "optimize_part%d.log" % p)
        log_path.write_text("\n".join(log) + "\n")
        np.savez(path, **result.correspondences.to_arrays())
    state.completed.append(state.out_dir / "optimize")


def _build_bindings(state):
    """Docked-site bindings over the per-part urshapes."""
    bindings = []
    for sid in sorted({occ.site_id for occ in state.occurrences}):
        occs = [o for o in state.occurrences if o.site_id == sid]
        part_a, part_b = occs[0].part_a, occs[0].part_b
        ca = state.csets[part_a]
        cb = state.csets[part_b]
        curve0 = state.input_meshes[occs[0].shape_index].vertices[occs[0].curve_vertices]
        loop_a = _match_loop_to_curve(ca.urshape, ca.positions[occs[0].shape_index],
                                      curve0)
        loop_b = _match_loop_to_curve(cb.urshape, cb.positions[occs[0].shape_index],
                                      curve0)
        if loop_a is None or loop_b is None:
            raise StageError("boundaries",
                             "site %s: could not match urshape loops" % sid,
                             state.completed)
        closed = bool(occs[0].curve_vertices[0] == occs[0].curve_vertices[-1])
        bindings.append(DockedSiteBinding(
            sid, part_a, loop_a, part_b, loop_b,
            occurrences=[(o.shape_index, o.shape_index) for o in occs],
            closed=closed,
        ))
    return bindings


def stage_boundaries(state, resume):
    cfg = state.config
    if not state.occurrences:
        state.completed.append(state.out_dir / "boundaries")
        return
    bindings = _build_bindings(state)
    extra = {p: _boundary_terms(state, p, include_docked=False)
             for p in state.part_types}
    log = []
    try:
        sets, params, alternations = optimize_boundaries(
            {p: state.csets[p] for p in state.part_types},
            bindings, cfg.optimizer, max_alternations=cfg.max_alternations,
            target_tol=cfg.target_tol, extra_terms_per_part=extra,
            log_lines=log,
        )
    except Exception as exc:
        raise StageError("boundaries", str(exc), state.completed)
    state.csets.update(sets)
    state.logs["boundaries"] = log
    for p in state.part_types:
        np.savez(state.artifact("boundaries", "part%d.npz" % p),
                 **state.csets[p].to_arrays())
    # canonical site correspondences for the container
    for b in bindings:
        mean_a = state.csets[b.part_a].positions.mean(axis=0)
        mean_b = state.csets[b.part_b].positions.mean(axis=0)
        try:
            loop_b = align_loops(b.loop_a, mean_a, b.loop_b, mean_b)
        except Exception as exc:
            raise StageError("boundaries", "site %s: %s" % (b.site_id, exc),
                             state.completed)
        state.site_corrs[b.site_id] = SiteCorrespondence(
            b.site_id, b.part_a, b.loop_a, b.part_b, loop_b, b.occurrences
        )
    state.completed.append(state.out_dir / "boundaries")


class CompositeLaplacianTerm:
    """Laplacian energy over the composite graph, other parts frozen.

    The merged graph identifies docked boundary vertex pairs; for the part
    being optimized, partner vertices contribute their frozen positions, so
    boundaries are regularized by the composite meshing rather than each
    part's own.
    """

    def __init__(self, own_indices, own_degrees, neighbor_lists, frozen_sums,
                 mu_l, shape_count):
        self.own_indices = own_indices
        self.degrees = own_degrees
        self.neighbors = neighbor_lists     # list of arrays of own indices (or empty)
        self.frozen = frozen_sums           # (n_shapes, len(own), 3) constant part
        self.mu_l = mu_l
        self.n = shape_count

    def evaluate(self, positions):
        energy = 0.0
        grad = np.zeros_like(positions)
        for i in range(self.n):
            x = positions[i]
            for j, v in enumerate(self.own_indices):
                acc = self.degrees[j] * x[v] - self.frozen[i, j]
                if len(self.neighbors[j]):
                    acc = acc - x[self.neighbors[j]].sum(axis=0)
                w = self.mu_l / self.degrees[j]
                energy += w * float(acc @ acc)
                grad[i, v] += 2.0 * w * self.degrees[j] * acc
                if len(self.neighbors[j]):
                    grad[i, self.neighbors[j]] -= 2.0 * w * acc
        return energy, grad


def stage_polish(state, resume):
    cfg = state.config
    if not cfg.polish:
        state.completed.append(state.out_dir / "polish")
        return
    # evaluate the Laplacian per composite shape: partner positions of each
    # docked vertex enter the 1-ring through the merged graph
    for p in state.part_types:
        terms = _boundary_terms(state, p, include_docked=False)
        extra = _composite_terms(state, p)
        try:
            result = optimize_ensemble(state.csets[p], cfg.optimizer,
                                       extra_terms=terms + extra)
        except Exception as exc:
            raise StageError("polish", "part %d: %s" % (p, exc), state.completed)
        state.csets[p] = result.correspondences
        np.savez(state.artifact("polish", "part%d.npz" % p),
                 **state.csets[p].to_arrays())
    state.completed.append(state.out_dir / "polish")


def _composite_terms(state, p):
    """Cross-boundary Laplacian contributions for part p (partners frozen)."""
    from ..corropt.energy import compute_mu_l

    terms = []
    cset = state.csets[p]
    for sid, corr in state.site_corrs.items():
        if corr.part_a == p:
            own_loop, other_loop, other = corr.loop_a, corr.loop_b, corr.part_b
        elif corr.part_b == p:
            own_loop, other_loop, other = corr.loop_b, corr.loop_a, corr.part_a
        else:
            continue
        oset = state.csets[other]
        onbrs = oset.urshape.vertex_neighbors()
        # frozen 1-ring sums of the partner's matched vertices
        frozen = np.zeros((cset.n_shapes, len(own_loop), 3))
        degrees = np.zeros(len(own_loop))
        for j, (ov, pv) in enumerate(zip(own_loop, other_loop)):
            nb = onbrs[int(pv)]
            degrees[j] = len(nb)
            for i in range(cset.n_shapes):
                frozen[i, j] = oset.positions[i][nb].sum(axis=0)
        own_nbrs = cset.urshape.vertex_neighbors()
        mu_l = compute_mu_l(cset.urshape, cset.positions,
                            state.config.optimizer.mu_l_relative)
        terms.append(CompositeLaplacianTerm(
            own_indices=np.asarray(own_loop, dtype=np.int64),
            own_degrees=degrees + np.array([len(own_nbrs[int(v)]) for v in own_loop]),
            neighbor_lists=[own_nbrs[int(v)] for v in own_loop],
            frozen_sums=frozen,
            mu_l=mu_l,
            shape_count=cset.n_shapes,
        ))
    return terms


def stage_model(state, resume):
    cfg = state.config
    part_models = {}
    correspondences = {}
    for p in state.part_types:
        cset = state.csets[p]
        ensemble = cset.model_frame()
        part_models[p] = build_pca_model(
            ensemble, cset.urshape, delta=cfg.optimizer.delta,
            variance_cut=cfg.variance_cut,
        )
        correspondences[p] = cset.positions
    pair_models = {}
    for sid, corr in state.site_corrs.items():
        sets = {corr.part_a: state.csets[corr.part_a],
                corr.part_b: state.csets[corr.part_b]}
        band = default_band_radius(sets, corr, cfg.band_fraction)
        try:
            pair_models[sid] = extract_pair_geometry(sets, corr, band)
        except Exception as exc:
            raise StageError("model", "site %s: %s" % (sid, exc), state.completed)
    meta = {
        "muLRelative": cfg.optimizer.mu_l_relative,
        "sigmaBdrFraction": cfg.sigma_bdr_fraction,
        "bandFraction": cfg.band_fraction,
        "varianceCut": cfg.variance_cut,
        "seed": cfg.seed,
        "partTypes": [int(p) for p in state.part_types],
    }
    provenance = {
        "config": cfg.raw_text,
        "inputs": {str(p): file_sha256(p) for p in cfg.mesh_paths()},
    }
    state.container = ModelContainer(
        part_models, pair_models, state.site_corrs,
        state.rules, meta=meta, provenance=provenance,
        correspondences=correspondences,
    )
    path = state.artifact("model.container")
    state.container.save(path)
    state.completed.append(path)


_STAGE_FUNCS = {
    "remesh": stage_remesh,
    "sdf": stage_sdf,
    "param": stage_param,
    "optimize": stage_optimize,
    "boundaries": stage_boundaries,
    "polish": stage_polish,
    "model": stage_model,
}


def run_pipeline(config, resume=False, upto="model"):
    """Run the analysis pipeline up to (and including) a stage.

    Returns the PipelineState; after the final stage its `container` holds
    the serialized ModelContainer.
    """
    if upto not in STAGES:
        raise ValueError("unknown stage %r (choose from %s)" % (upto, STAGES))
    state = PipelineState(config)
    state.out_dir.mkdir(parents=True, exist_ok=True)
    for stage in STAGES[: STAGES.index(upto) + 1]:
        func = _STAGE_FUNCS[stage]
        try:
            func(state, resume)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, str(exc), state.completed)
    return state
