"""Discrete assembly structure: docking sites and rules read off training data.

Adjacency between differently-labeled regions of an annotated mesh defines
docking occurrences; grouping them by the unordered part-type pair (and a
per-pair loop ordinal for multiply-docked pairs) yields the sites, and the
set of observed (type, site, type) triples the rules.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mesh.trimesh import MeshError


class DockingError(ValueError):
    pass


@dataclass(frozen=True)
class DockingSite:
    """A boundary class through which two part types connect."""

    site_id: str
    part_a: int
    part_b: int
    ordinal: int = 0  # distinguishes multiple sites between the same pair

    def key(self):
        return (self.part_a, self.part_b, self.ordinal)


@dataclass
class DockingRule:
    """Allowed (partType, site, partType) triples observed in training."""

    triples: set = field(default_factory=set)
    sites: dict = field(default_factory=dict)  # site_id -> DockingSite

    def allows(self, part_a, site_id, part_b):
        a, b = min(part_a, part_b), max(part_a, part_b)
        return (a, site_id, b) in self.triples

    def add(self, site):
        self.sites[site.site_id] = site
        self.triples.add((site.part_a, site.site_id, site.part_b))

    def to_manifest(self):
        return {
            "sites": [
                {
                    "id": s.site_id,
                    "partA": s.part_a,
                    "partB": s.part_b,
                    "ordinal": s.ordinal,
                }
                for _, s in sorted(self.sites.items())
            ]
        }

    @classmethod
    def from_manifest(cls, manifest):
        rule = cls()
        for entry in manifest["sites"]:
            rule.add(DockingSite(entry["id"], entry["partA"], entry["partB"],
                                 entry["ordinal"]))
        return rule


@dataclass
class DockingOccurrence:
    """One observed docking: shape index plus the shared boundary polyline."""

    shape_index: int
    site_id: str
    part_a: int
    part_b: int
    curve_vertices: np.ndarray  # ordered vertex indices in the shape's mesh


def _label_boundary_curves(mesh):
    """Connected label-boundary curves as ordered vertex index loops/paths,
    grouped by the unordered label pair."""
    if mesh.part_labels is None:
        raise DockingError("mesh has no part labels")
    tris = mesh.triangles
    labels = mesh.part_labels
    edge_info = {}
    for ti, t in enumerate(tris):
        for k in range(3):
            e = tuple(sorted((int(t[k]), int(t[(k + 1) % 3]))))
            edge_info.setdefault(e, []).append(int(labels[ti]))
    curves = {}
    for e, ls in edge_info.items():
        if len(ls) == 2 and ls[0] != ls[1]:
            pair = (min(ls), max(ls))
            curves.setdefault(pair, []).append(e)
    out = {}
    for pair, edges in sorted(curves.items()):
        out[pair] = _chain_edges(edges)
    return out


def _chain_edges(edges):
    """Group undirected edges into connected chains (ordered vertex lists)."""
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    unused = {tuple(sorted(e)) for e in edges}
    chains = []
    while unused:
        # prefer an endpoint vertex (degree 1) for open chains
        degree = {}
        for a, b in unused:
            degree[a] = degree.get(a, 0) + 1
            degree[b] = degree.get(b, 0) + 1
        endpoints = sorted(v for v, d in degree.items() if d == 1)
        start = endpoints[0] if endpoints else min(degree)
        chain = [start]
        cur = start
        while True:
            nxt = None
            for nb in sorted(adj.get(cur, [])):
                e = tuple(sorted((cur, nb)))
                if e in unused:
                    nxt = nb
                    unused.discard(e)
                    break
            if nxt is None:
                break
            chain.append(nxt)
            cur = nxt
        if len(chain) > 2 and chain[0] == chain[-1]:
            chain = chain[:-1] + [chain[0]]  # keep explicit closure marker
        chains.append(np.array(chain, dtype=np.int64))
    chains.sort(key=lambda c: (-len(c), int(c.min())))
    return chains


def part_topology_signature(mesh, part_type):
    """(boundary loop count, genus) of one part's submesh."""
    sub, _ = mesh.submesh(mesh.part_labels == part_type)
    comp = sub.connected_components()
    used = np.unique(sub.triangles)
    if len(np.unique(comp[used])) > 1:
        raise DockingError("part type %d is disconnected within a shape" % part_type)
    return (len(sub.boundary_loops()), sub.genus())


def learn_docking_rules(shapes):
    """Read docking sites and rules off a list of labeled training meshes.

    Returns (DockingRule, occurrences): the rule set plus every observed
    docking with its shared boundary curve. Raises when a part type's
    topology differs across instances.
    """
    signatures = {}
    for si, mesh in enumerate(shapes):
        if mesh.part_labels is None:
            raise DockingError("shape %d has no part labels" % si)
        for p in np.unique(mesh.part_labels):
            sig = part_topology_signature(mesh, int(p))
            prev = signatures.setdefault(int(p), (si, sig))
            if prev[1] != sig:
                raise DockingError(
                    "part type %d topology differs: shape %d has %s, shape %d has %s"
                    % (p, prev[0], prev[1], si, sig)
                )

    rule = DockingRule()
    occurrences = []
    for si, mesh in enumerate(shapes):
        for (a, b), chains in _label_boundary_curves(mesh).items():
            for ordinal, chain in enumerate(chains):
                site_id = "s_%d_%d_%d" % (a, b, ordinal)
                if site_id not in rule.sites:
                    rule.add(DockingSite(site_id, a, b, ordinal))
                occurrences.append(DockingOccurrence(si, site_id, a, b, chain))
    return rule, occurrences
