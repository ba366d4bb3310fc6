"""OBJ / binary PLY mesh input and output.

OBJ face groups (``g`` statements) become part labels; a sidecar annotation
may override them later in the pipeline.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .trimesh import MeshError, TriMesh


class ParseError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__("%s:%s: %s" % (path, lineno, message))
        self.path = str(path)
        self.lineno = lineno


def load_mesh(path):
    """Load an OBJ or binary little-endian PLY file as a validated TriMesh."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".ply":
        return _load_ply(path)
    raise ParseError(path, 0, "unsupported mesh format %r" % suffix)


def _load_obj(path):
    vertices = []
    triangles = []
    labels = []
    group_ids = {}
    current_group = None
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError(path, lineno, "vertex needs 3 coordinates")
                vertices.append([float(x) for x in parts[1:4]])
            elif tag == "g":
                name = parts[1] if len(parts) > 1 else "default"
                current_group = group_ids.setdefault(name, len(group_ids) + 1)
            elif tag == "f":
                if len(parts) < 4:
                    raise ParseError(path, lineno, "face needs at least 3 vertices")
                idx = []
                for token in parts[1:]:
                    v = token.split("/")[0]
                    i = int(v)
                    if i == 0:
                        raise ParseError(path, lineno, "OBJ indices are 1-based, got 0")
                    if i < 0:
                        i = len(vertices) + 1 + i
                    if not (1 <= i <= len(vertices)):
                        raise ParseError(path, lineno, "face references undefined vertex %d" % i)
                    idx.append(i - 1)
                # fan-triangulate polygons
                for k in range(1, len(idx) - 1):
                    triangles.append([idx[0], idx[k], idx[k + 1]])
                    labels.append(current_group)
    part_labels = None
    if any(l is not None for l in labels):
        part_labels = np.array([0 if l is None else l for l in labels], dtype=np.int64)
    try:
        return TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                       np.array(triangles, dtype=np.int64).reshape(-1, 3),
                       part_labels)
    except MeshError as exc:
        raise MeshError("%s: %s" % (path, exc)) from exc


_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _load_ply(path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ParseError(path, 1, "missing ply magic")
        fmt = fh.readline().split()
        if fmt[:2] != [b"format", b"binary_little_endian"]:
            raise ParseError(path, 2, "only binary little-endian PLY is supported")
        elements = []  # (name, count, [(prop, type) or ('list', count_t, item_t, name)])
        lineno = 2
        while True:
            line = fh.readline()
            lineno += 1
            if not line:
                raise ParseError(path, lineno, "unexpected end of header")
            tokens = line.decode("ascii").split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "element":
                elements.append((tokens[1], int(tokens[2]), []))
            elif tokens[0] == "property":
                if tokens[1] == "list":
                    elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
                else:
                    elements[-1][2].append((tokens[2], tokens[1]))
            elif tokens[0] == "end_header":
                break
        vertices = None
        faces = []
        labels = []
        has_label = False
        for name, count, props in elements:
            if name == "vertex":
                fields = [p[1] for p in props]
                fmt_str = "<" + "".join(_PLY_TYPES[t] for t in fields)
                size = struct.calcsize(fmt_str)
                names = [p[0] for p in props]
                data = np.empty((count, 3))
                ix, iy, iz = names.index("x"), names.index("y"), names.index("z")
                for i in range(count):
                    rec = struct.unpack(fmt_str, fh.read(size))
                    data[i] = rec[ix], rec[iy], rec[iz]
                vertices = data
            elif name == "face":
                for i in range(count):
                    row_faces = None
                    row_label = None
                    for p in props:
                        if p[0] == "list":
                            cnt_t, item_t = _PLY_TYPES[p[1]], _PLY_TYPES[p[2]]
                            (k,) = struct.unpack("<" + cnt_t, fh.read(struct.calcsize(cnt_t)))
                            items = struct.unpack("<" + item_t * k,
                                                  fh.read(struct.calcsize(item_t) * k))
                            if k < 3:
                                raise ParseError(path, 0, "face %d has %d vertices" % (i, k))
                            row_faces = items
                        else:
                            t = _PLY_TYPES[p[1]]
                            (val,) = struct.unpack("<" + t, fh.read(struct.calcsize(t)))
                            if p[0] in ("part", "label", "part_label"):
                                has_label = True
                                row_label = int(val)
                    for k in range(1, len(row_faces) - 1):
                        faces.append([row_faces[0], row_faces[k], row_faces[k + 1]])
                        labels.append(row_label)
            else:
                # skip unknown fixed-size elements
                fmt_str = "<" + "".join(_PLY_TYPES[p[1]] for p in props if p[0] != "list")
                fh.read(struct.calcsize(fmt_str) * count)
        if vertices is None:
            raise ParseError(path, 0, "no vertex element")
    part_labels = np.array([0 if l is None else l for l in labels], dtype=np.int64) if has_label else None
    try:
        return TriMesh(vertices, np.array(faces, dtype=np.int64).reshape(-1, 3), part_labels)
    except MeshError as exc:
        raise MeshError("%s: %s" % (path, exc)) from exc


def save_obj(path, mesh, uv=None):
    """Write OBJ; part labels become groups, optional per-vertex uv becomes vt."""
    path = Path(path)
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v %.17g %.17g %.17g\n" % (v[0], v[1], v[2]))
        if uv is not None:
            for t in uv:
                fh.write("vt %.17g %.17g\n" % (t[0], t[1]))
        labels = mesh.part_labels
        order = np.arange(mesh.n_triangles)
        if labels is not None:
            order = np.argsort(labels, kind="stable")
        current = None
        for ti in order:
            if labels is not None and labels[ti] != current:
                current = labels[ti]
                fh.write("g part%d\n" % current)
            a, b, c = mesh.triangles[ti] + 1
            if uv is not None:
                fh.write("f %d/%d %d/%d %d/%d\n" % (a, a, b, b, c, c))
            else:
                fh.write("f %d %d %d\n" % (a, b, c))


def save_ply(path, mesh):
    """Write binary little-endian PLY with an optional per-face part label."""
    path = Path(path)
    with open(path, "wb") as fh:
        header = ["ply", "format binary_little_endian 1.0",
                  "element vertex %d" % mesh.n_vertices,
                  "property double x", "property double y", "property double z",
                  "element face %d" % mesh.n_triangles,
                  "property list uchar int vertex_indices"]
        if mesh.part_labels is not None:
            header.append("property int part")
        header.append("end_header")
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
        for i, tri in enumerate(mesh.triangles):
            fh.write(struct.pack("<B3i", 3, *[int(x) for x in tri]))
            if mesh.part_labels is not None:
                fh.write(struct.pack("<i", int(mesh.part_labels[i])))
