"""Model container: one binary file holding everything synthesis needs.

Layout: 8-byte magic, uint64 manifest length, canonical JSON manifest,
then raw little-endian array blobs in sorted-name order. The container
round-trips byte-identically (deterministic manifest serialization plus
canonical blob ordering).
"""
from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from ..mesh.trimesh import TriMesh
from ..partmodel.docking import DockingRule
from ..partmodel.pairgeom import PairGeometryModel, SiteCorrespondence
from ..shapespace.model import ShapeSpaceModel

MAGIC = b"PBSSMC01"
VERSION = 1

_DTYPES = {"<f8": "<f8", "<i8": "<i8"}


class ContainerError(ValueError):
    pass


def _blob_from_array(arr):
    a = np.asarray(arr)
    if a.dtype.kind == "f":
        a = np.ascontiguousarray(a, dtype="<f8")
        dtype = "<f8"
    elif a.dtype.kind in "iub":
        a = np.ascontiguousarray(a, dtype="<i8")
        dtype = "<i8"
    else:
        raise ContainerError("unsupported dtype %s" % a.dtype)
    return a, dtype


class ModelContainer:
    """Learned part-based shape family plus provenance.

    Fields
    ------
    part_models : dict part type -> ShapeSpaceModel
    pair_models : dict site id -> PairGeometryModel
    site_corrs : dict site id -> SiteCorrespondence
    rules : DockingRule
    meta : dict of scalar settings (mu_l, sigma_bdr_fraction, ...)
    provenance : dict with config text and input hashes
    correspondences : optional dict part type -> (n, m, 3) final positions
    """

    def __init__(self, part_models, pair_models, site_corrs, rules,
                 meta=None, provenance=None, correspondences=None):
        self.part_models = dict(part_models)
        self.pair_models = dict(pair_models)
        self.site_corrs = dict(site_corrs)
        self.rules = rules
        self.meta = dict(meta or {})
        self.provenance = dict(provenance or {})
        self.correspondences = dict(correspondences or {})

    # -- serialization ------------------------------------------------------

    def to_bytes(self):
        blobs = {}

        def put(name, arr):
            a, dtype = _blob_from_array(arr)
            blobs[name] = (a, dtype)
            return {"blob": name, "dtype": dtype, "shape": list(a.shape)}

        manifest = {
            "version": VERSION,
            "meta": self.meta,
            "provenance": self.provenance,
            "rules": self.rules.to_manifest() if self.rules else {"sites": []},
            "parts": {},
            "sites": {},
            "pairs": {},
            "correspondences": {},
        }
        for p in sorted(self.part_models):
            model = self.part_models[p]
            key = "part%d" % p
            entry = {
                "type": int(p),
                "delta": float(model.delta),
                "mean": put(key + "/mean", model.mean),
                "basis": put(key + "/basis",
                             model.basis.reshape(model.n_modes, -1)),
                "sigmas": put(key + "/sigmas", model.sigmas),
                "urshapeVertices": put(key + "/ur_v", model.urshape.vertices),
                "urshapeTriangles": put(key + "/ur_t", model.urshape.triangles),
            }
            if model.urshape.part_labels is not None:
                entry["urshapeLabels"] = put(key + "/ur_l", model.urshape.part_labels)
            manifest["parts"][str(p)] = entry
        for sid in sorted(self.site_corrs):
            corr = self.site_corrs[sid]
            key = "site_%s" % sid
            manifest["sites"][sid] = {
                "partA": int(corr.part_a),
                "partB": int(corr.part_b),
                "loopA": put(key + "/loopA", corr.loop_a),
                "loopB": put(key + "/loopB", corr.loop_b),
                "occurrences": [[int(a), int(b)] for a, b in corr.occurrences],
            }
        for sid in sorted(self.pair_models):
            pg = self.pair_models[sid]
            key = "pair_%s" % sid
            entry = {
                "bandRadius": float(pg.band_radius),
                "delta": float(pg.model.delta),
                "meshVertices": put(key + "/v", pg.mesh.vertices),
                "meshTriangles": put(key + "/t", pg.mesh.triangles),
                "mean": put(key + "/mean", pg.model.mean),
                "basis": put(key + "/basis",
                             pg.model.basis.reshape(pg.model.n_modes, -1)),
                "sigmas": put(key + "/sigmas", pg.model.sigmas),
                "mapA": put(key + "/mapA", pg.map_a),
                "mapB": put(key + "/mapB", pg.map_b),
            }
            if pg.training_lambdas is not None:
                entry["trainingLambdas"] = put(key + "/tl", pg.training_lambdas)
            manifest["pairs"][sid] = entry
        for p in sorted(self.correspondences):
            manifest["correspondences"][str(p)] = put(
                "corr%d/positions" % p, self.correspondences[p]
            )

        order = sorted(blobs)
        offset = 0
        for name in order:
            a, dtype = blobs[name]
            entry = {"offset": offset, "nbytes": int(a.nbytes)}
            manifest.setdefault("blobs", {})[name] = entry
            offset += a.nbytes
        payload = json.dumps(manifest, sort_keys=True,
                             separators=(",", ":")).encode("utf-8")
        out = [MAGIC, struct.pack("<Q", len(payload)), payload]
        for name in order:
            out.append(blobs[name][0].tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data):
        if data[:8] != MAGIC:
            raise ContainerError("bad container magic %r" % data[:8])
        (mlen,) = struct.unpack("<Q", data[8:16])
        manifest = json.loads(data[16:16 + mlen].decode("utf-8"))
        if manifest.get("version") != VERSION:
            raise ContainerError("unsupported container version %r"
                                 % manifest.get("version"))
        blob_start = 16 + mlen
        blob_table = manifest.get("blobs", {})

        def get(ref):
            entry = blob_table[ref["blob"]]
            start = blob_start + entry["offset"]
            raw = data[start:start + entry["nbytes"]]
            arr = np.frombuffer(raw, dtype=ref["dtype"]).reshape(ref["shape"])
            return arr.copy()

        part_models = {}
        for key, e in manifest["parts"].items():
            p = int(e["type"])
            labels = get(e["urshapeLabels"]) if "urshapeLabels" in e else None
            urshape = TriMesh(get(e["urshapeVertices"]),
                              get(e["urshapeTriangles"]).astype(np.int64),
                              labels, validate=False)
            mean = get(e["mean"])
            basis = get(e["basis"]).reshape(-1, *mean.shape)
            part_models[p] = ShapeSpaceModel(urshape, mean, basis,
                                             get(e["sigmas"]), e["delta"])
        site_corrs = {}
        for sid, e in manifest["sites"].items():
            site_corrs[sid] = SiteCorrespondence(
                sid, int(e["partA"]), get(e["loopA"]).astype(np.int64),
                int(e["partB"]), get(e["loopB"]).astype(np.int64),
                [(int(a), int(b)) for a, b in e["occurrences"]],
            )
        pair_models = {}
        for sid, e in manifest["pairs"].items():
            mean = get(e["mean"])
            mesh = TriMesh(get(e["meshVertices"]),
                           get(e["meshTriangles"]).astype(np.int64),
                           validate=False)
            basis = get(e["basis"]).reshape(-1, *mean.shape)
            model = ShapeSpaceModel(mesh, mean, basis, get(e["sigmas"]), e["delta"])
            tl = get(e["trainingLambdas"]) if "trainingLambdas" in e else None
            pair_models[sid] = PairGeometryModel(
                sid, mesh, model, e["bandRadius"],
                get(e["mapA"]).astype(np.int64), get(e["mapB"]).astype(np.int64),
                tl,
            )
        correspondences = {
            int(p): get(ref) for p, ref in manifest["correspondences"].items()
        }
        rules = DockingRule.from_manifest(manifest["rules"])
        return cls(part_models, pair_models, site_corrs, rules,
                   meta=manifest["meta"], provenance=manifest["provenance"],
                   correspondences=correspondences)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
