"""Assembly of the variational part-graph reconstruction problem.

Unknowns: one global vertex array (docked boundary vertices shared between
parts), per-part shape parameters and rotations, and per-docked-edge pair
parameters and rotations. Energies compare mesh edge differences against
the models' edge differences with cotangent weights, faded near docked
boundaries: part terms by 1 - exp(-d^2/sigma_bdr^2), pair terms by
exp(-d^2/sigma_bdr^2).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mesh.laplacian import cotangent_weights
from ..mesh.trimesh import TriMesh
from ..partmodel.graph import validate_part_graph
from ..partmodel.pairgeom import _graph_distances

SIGMA_BDR_FRACTION = 1.0 / 3.0
HANDLE_WEIGHT_FACTOR = 1e4   # x mean cotangent weight
COUPLE_WEIGHT = 1e6
ZERO_SIGMA_PIN = 1e9


class SynthesisError(ValueError):
    pass


@dataclass
class Constraint:
    """User constraint on the synthesis solve.

    kind: 'pointHandle' (node, vertex, target), 'parameterPin'
    (node, mode index, value), or 'parameterCouple' (nodeA, indexA, nodeB,
    indexB). Explicit weight overrides the kind's default.
    """

    kind: str
    node: str = ""
    vertex: int = -1
    target: tuple = ()
    index: int = -1
    value: float = 0.0
    node_b: str = ""
    index_b: int = -1
    weight: float | None = None

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "pointHandle":
            d.update(node=self.node, vertex=int(self.vertex),
                     target=[float(x) for x in self.target])
        elif self.kind == "parameterPin":
            d.update(node=self.node, index=int(self.index), value=float(self.value))
        elif self.kind == "parameterCouple":
            d.update(node=self.node, index=int(self.index),
                     nodeB=self.node_b, indexB=int(self.index_b))
        if self.weight is not None:
            d["weight"] = float(self.weight)
        return d

    @classmethod
    def from_dict(cls, d):
        kind = d["kind"]
        if kind == "pointHandle":
            return cls(kind, node=d["node"], vertex=d["vertex"],
                       target=tuple(d["target"]), weight=d.get("weight"))
        if kind == "parameterPin":
            return cls(kind, node=d["node"], index=d["index"], value=d["value"],
                       weight=d.get("weight"))
        if kind == "parameterCouple":
            return cls(kind, node=d["node"], index=d["index"],
                       node_b=d["nodeB"], index_b=d["indexB"], weight=d.get("weight"))
        raise SynthesisError("unknown constraint kind %r" % kind)


@dataclass
class _PartBlock:
    node: str
    part_type: int
    model: object
    global_ids: np.ndarray       # urshape vertex -> global vertex id
    edges: np.ndarray            # urshape edges (e, 2)
    edge_weights: np.ndarray     # cotangent x blend, per edge
    lam_offset: int              # into the lambda unknown vector
    n_modes: int
    sigmas: np.ndarray
    vertex_weights: np.ndarray   # part-term blend per vertex


@dataclass
class _PairBlock:
    site_id: str
    model: object
    mesh: TriMesh
    global_ids: np.ndarray
    edges: np.ndarray
    edge_weights: np.ndarray
    lam_offset: int
    n_modes: int
    sigmas: np.ndarray


@dataclass
class SynthesisProblem:
    graph: object
    n_global: int
    part_blocks: list
    pair_blocks: list
    constraints: list
    node_vertex_to_global: dict   # (node, urshape vertex) -> global id
    triangles: np.ndarray         # composed mesh triangles over global ids
    triangle_labels: np.ndarray
    mean_cot: float
    initial_positions: np.ndarray = None

    def block_of(self, node):
        if node.startswith("pair:"):
            site = node[len("pair:"):]
            for b in self.pair_blocks:
                if b.site_id == site:
                    return b
            raise SynthesisError("no pair block for site %r" % site)
        for b in self.part_blocks:
            if b.node == node:
                return b
        raise SynthesisError("unknown node %r" % node)


def blend_weight(distance, sigma_bdr):
    """exp(-d^2 / sigma_bdr^2) with exp(-inf) -> 0."""
    d = np.asarray(distance, dtype=np.float64)
    with np.errstate(over="ignore"):
        return np.where(np.isfinite(d), np.exp(-(d * d) / (sigma_bdr * sigma_bdr)), 0.0)


def assemble_problem(graph, part_models, pair_models, site_corrs, constraints=(),
                     sigma_bdr_fraction=SIGMA_BDR_FRACTION, rules=None):
    """Build a SynthesisProblem from a part graph and learned models.

    part_models : dict part type -> ShapeSpaceModel
    pair_models : dict site id -> PairGeometryModel
    site_corrs : dict site id -> SiteCorrespondence (canonical loops)
    rules : DockingRule for validation (optional but recommended)
    """
    if rules is not None:
        violations = validate_part_graph(graph, rules)
        if violations:
            raise SynthesisError("invalid part graph: " + "; ".join(violations))

    # global vertex ids via union of (node, vertex) pairs
    mapping = {}
    n_global = 0
    for name in sorted(graph.nodes):
        node = graph.nodes[name]
        if node.part_type not in part_models:
            raise SynthesisError("no shape model for part type %d" % node.part_type)
        m = part_models[node.part_type].n_vertices
        for v in range(m):
            mapping[(name, v)] = n_global
            n_global += 1

    # merge docked boundary vertices (shared unknowns -> exact C0)
    parent = list(range(n_global))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in graph.edges:
        if e.site_id not in site_corrs:
            raise SynthesisError("no boundary correspondence for site %r" % e.site_id)
        corr = site_corrs[e.site_id]
        ta = graph.nodes[e.node_a].part_type
        # orient the correspondence to the edge's node order
        if ta == corr.part_a:
            pairs = zip(corr.loop_a, corr.loop_b)
            na, nb = e.node_a, e.node_b
        elif ta == corr.part_b:
            pairs = zip(corr.loop_b, corr.loop_a)
            na, nb = e.node_a, e.node_b
        else:
            raise SynthesisError("edge %s-%s does not match site %s types"
                                 % (e.node_a, e.node_b, e.site_id))
        for va, vb in pairs:
            ra = find(mapping[(na, int(va))])
            rb = find(mapping[(nb, int(vb))])
            if ra != rb:
                parent[rb] = ra

    # compact ids
    roots = sorted({find(i) for i in range(n_global)})
    compact = {r: k for k, r in enumerate(roots)}
    node_vertex_to_global = {
        key: compact[find(gid)] for key, gid in mapping.items()
    }
    n_global = len(roots)

    # docked loops per node, for the blend distances
    docked_loops = {name: [] for name in graph.nodes}
    for e in graph.edges:
        corr = site_corrs[e.site_id]
        if graph.nodes[e.node_a].part_type == corr.part_a:
            docked_loops[e.node_a].append(corr.loop_a)
            docked_loops[e.node_b].append(corr.loop_b)
        else:
            docked_loops[e.node_a].append(corr.loop_b)
            docked_loops[e.node_b].append(corr.loop_a)

    part_blocks = []
    lam_offset = 0
    all_cots = []
    for name in sorted(graph.nodes):
        node = graph.nodes[name]
        model = part_models[node.part_type]
        urshape = model.urshape
        mean_mesh = TriMesh(model.mean, urshape.triangles, validate=False)
        edges, cots = cotangent_weights(mean_mesh)
        all_cots.append(cots)
        diameter = float(np.linalg.norm(model.mean.max(axis=0) - model.mean.min(axis=0)))
        sigma_bdr = sigma_bdr_fraction * diameter
        if docked_loops[name]:
            sources = np.unique(np.concatenate(docked_loops[name]))
            dist = _graph_distances(urshape, model.mean, sources)
        else:
            dist = np.full(urshape.n_vertices, np.inf)
        w_pair = blend_weight(dist, sigma_bdr)
        w_part = 1.0 - w_pair
        edge_blend = 0.5 * (w_part[edges[:, 0]] + w_part[edges[:, 1]])
        gids = np.array([node_vertex_to_global[(name, v)]
                         for v in range(urshape.n_vertices)], dtype=np.int64)
        part_blocks.append(_PartBlock(
            node=name, part_type=node.part_type, model=model, global_ids=gids,
            edges=edges, edge_weights=2.0 * cots * edge_blend,
            lam_offset=lam_offset, n_modes=model.n_modes, sigmas=model.sigmas,
            vertex_weights=w_part,
        ))
        lam_offset += model.n_modes

    pair_blocks = []
    for e in graph.edges:
        if e.site_id not in pair_models:
            raise SynthesisError("no pair-geometry model for docked site %r" % e.site_id)
        pg = pair_models[e.site_id]
        corr = site_corrs[e.site_id]
        model = pg.model
        if pg.mesh.n_triangles == 0:
            continue  # zero-width band carries no edge terms
        edges, cots = cotangent_weights(
            TriMesh(model.mean, pg.mesh.triangles, validate=False)
        )
        # blend: distance to the glued boundary within the pair mesh
        glued = np.where((pg.map_a >= 0) & (pg.map_b >= 0))[0]
        diameter = float(np.linalg.norm(model.mean.max(axis=0) - model.mean.min(axis=0)))
        sigma_bdr = sigma_bdr_fraction * 2.0 * diameter  # band diameter ~ 2x radius
        dist = _graph_distances(pg.mesh, model.mean, glued) if len(glued) else \
            np.full(pg.mesh.n_vertices, np.inf)
        w = blend_weight(dist, sigma_bdr)
        edge_blend = 0.5 * (w[edges[:, 0]] + w[edges[:, 1]])
        # pair vertex -> global id through either side's map
        if graph.nodes[e.node_a].part_type == corr.part_a:
            na, nb = e.node_a, e.node_b
        else:
            na, nb = e.node_b, e.node_a
        gids = np.full(pg.mesh.n_vertices, -1, dtype=np.int64)
        for c in range(pg.mesh.n_vertices):
            if pg.map_a[c] >= 0:
                gids[c] = node_vertex_to_global[(na, int(pg.map_a[c]))]
            elif pg.map_b[c] >= 0:
                gids[c] = node_vertex_to_global[(nb, int(pg.map_b[c]))]
        if np.any(gids < 0):
            raise SynthesisError("pair mesh vertex without a part mapping")
        pair_blocks.append(_PairBlock(
            site_id=e.site_id, model=model, mesh=pg.mesh, global_ids=gids,
            edges=edges, edge_weights=2.0 * cots * edge_blend,
            lam_offset=lam_offset, n_modes=model.n_modes, sigmas=model.sigmas,
        ))
        lam_offset += model.n_modes

    # composed mesh connectivity
    tris = []
    labels = []
    for b in part_blocks:
        tris.append(b.global_ids[b.model.urshape.triangles])
        labels.append(np.full(b.model.urshape.n_triangles, b.part_type))
    triangles = np.concatenate(tris) if tris else np.zeros((0, 3), dtype=np.int64)
    labels = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)

    mean_cot = float(np.mean(np.concatenate(all_cots))) if all_cots else 1.0

    # initial positions: averaged part means
    init = np.zeros((n_global, 3))
    cnt = np.zeros(n_global)
    for b in part_blocks:
        np.add.at(init, b.global_ids, b.model.mean)
        np.add.at(cnt, b.global_ids, 1.0)
    init /= np.maximum(cnt, 1.0)[:, None]

    return SynthesisProblem(
        graph=graph, n_global=n_global, part_blocks=part_blocks,
        pair_blocks=pair_blocks, constraints=list(constraints),
        node_vertex_to_global=node_vertex_to_global,
        triangles=triangles, triangle_labels=labels, mean_cot=mean_cot,
        initial_positions=init,
    )
