"""Part graphs: assemblies of part instances joined at docking sites.

Serialized in a line-oriented text format:

    node <name> <partType> [lambda1 lambda2 ...]
    edge <nameA> <nameB> <siteId>

Comment lines start with '#'.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class PartGraphError(ValueError):
    pass


@dataclass
class PartNode:
    name: str
    part_type: int
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class PartEdge:
    node_a: str
    node_b: str
    site_id: str


class PartGraph:
    def __init__(self):
        self.nodes = {}
        self.edges = []

    def add_node(self, name, part_type, lam=()):
        if name in self.nodes:
            raise PartGraphError("duplicate node %r" % name)
        self.nodes[name] = PartNode(name, int(part_type), np.asarray(lam, dtype=np.float64))

    def add_edge(self, node_a, node_b, site_id):
        self.edges.append(PartEdge(node_a, node_b, site_id))

    def to_text(self):
        lines = []
        for name in sorted(self.nodes):
            node = self.nodes[name]
            lam = " ".join("%.17g" % x for x in node.lam)
            lines.append(("node %s %d %s" % (name, node.part_type, lam)).rstrip())
        for e in self.edges:
            lines.append("edge %s %s %s" % (e.node_a, e.node_b, e.site_id))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        graph = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "node":
                if len(parts) < 3:
                    raise PartGraphError("line %d: node needs a name and type" % lineno)
                graph.add_node(parts[1], int(parts[2]),
                               [float(x) for x in parts[3:]])
            elif parts[0] == "edge":
                if len(parts) != 4:
                    raise PartGraphError("line %d: edge needs two nodes and a site" % lineno)
                graph.add_edge(parts[1], parts[2], parts[3])
            else:
                raise PartGraphError("line %d: unknown directive %r" % (lineno, parts[0]))
        return graph


def validate_part_graph(graph, rules):
    """Check a part graph against learned docking rules.

    Returns a list of violation strings (empty when the graph is valid).
    """
    violations = []
    for e in graph.edges:
        for name in (e.node_a, e.node_b):
            if name not in graph.nodes:
                violations.append("edge references unknown node %r" % name)
        if e.site_id not in rules.sites:
            violations.append("unknown docking site %r" % e.site_id)
    if violations:
        return violations

    used = {}
    for e in graph.edges:
        na, nb = graph.nodes[e.node_a], graph.nodes[e.node_b]
        site = rules.sites[e.site_id]
        ta, tb = sorted((na.part_type, nb.part_type))
        if not rules.allows(ta, e.site_id, tb):
            violations.append(
                "docking (%d, %s, %d) between %s and %s is not an observed rule"
                % (ta, e.site_id, tb, e.node_a, e.node_b)
            )
            continue
        # each side of a site is usable at most once per node
        for name, ptype in ((e.node_a, na.part_type), (e.node_b, nb.part_type)):
            key = (name, e.site_id)
            used[key] = used.get(key, 0) + 1
            if used[key] > 1:
                violations.append(
                    "node %s uses site %s more than once" % (name, e.site_id)
                )
    return violations
