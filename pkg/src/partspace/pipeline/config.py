"""Pipeline configuration (TOML) and shape annotations (JSON)."""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..corropt.correspondence import OptimizerConfig


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    meshes: list
    annotation: str | None
    out_dir: str
    seed: int = 0
    # remeshing
    remesh_enabled: bool = True
    remesh_target_fraction: float = 1.0
    remesh_passes: int = 5
    # sdf fitting
    h_fraction: float = 0.015
    mu_hess: float = 1e-4
    sample_spacing_factor: float = 0.25   # x h
    # parametrization
    refine_passes: int = 1
    urshape_resolution: int | None = None
    # optimization
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    outer_boundary_weight: float = 50.0
    # boundary consistency
    max_alternations: int = 20
    target_tol: float = 1e-4
    # final polish
    polish: bool = True
    # model build
    variance_cut: float = 0.99
    sigma_bdr_fraction: float = 1.0 / 3.0
    band_fraction: float = 1.0 / 3.0
    base_dir: Path = Path(".")
    raw_text: str = ""

    def mesh_paths(self):
        return [self.base_dir / m for m in self.meshes]

    def annotation_path(self):
        return self.base_dir / self.annotation if self.annotation else None


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
        data = tomllib.loads(text)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc))
    try:
        inp = data["input"]
        meshes = list(inp["meshes"])
    except KeyError as exc:
        raise ConfigError("config missing required key: %s" % exc)
    opt = data.get("optimize", {})
    optimizer = OptimizerConfig(
        mu_l_relative=opt.get("mu_l_relative", 0.25e-5),
        delta=opt.get("delta"),
        delta_scale=opt.get("delta_scale", 1e-4),
        max_iterations=opt.get("max_iterations", 500),
        gradient_tolerance=opt.get("gradient_tolerance", 1e-6),
        memory_depth=opt.get("memory_depth", 12),
        boundary_weight=opt.get("boundary_weight", 1.0),
        optimize_poses=opt.get("optimize_poses", True),
    )
    remesh = data.get("remesh", {})
    sdf = data.get("sdf", {})
    param = data.get("param", {})
    boundaries = data.get("boundaries", {})
    model = data.get("model", {})
    pipe = data.get("pipeline", {})
    return PipelineConfig(
        meshes=meshes,
        annotation=inp.get("annotation"),
        out_dir=pipe.get("out_dir", "out"),
        seed=pipe.get("seed", 0),
        remesh_enabled=remesh.get("enabled", True),
        remesh_target_fraction=remesh.get("target_fraction", 1.0),
        remesh_passes=remesh.get("passes", 5),
        h_fraction=sdf.get("h_fraction", 0.015),
        mu_hess=sdf.get("mu_hess", 1e-4),
        sample_spacing_factor=sdf.get("sample_spacing_factor", 0.25),
        refine_passes=param.get("refine_passes", 1),
        urshape_resolution=param.get("urshape_resolution"),
        optimizer=optimizer,
        outer_boundary_weight=opt.get("outer_boundary_weight", 50.0),
        max_alternations=boundaries.get("max_alternations", 20),
        target_tol=boundaries.get("target_tol", 1e-4),
        polish=pipe.get("polish", True),
        variance_cut=model.get("variance_cut", 0.99),
        sigma_bdr_fraction=model.get("sigma_bdr_fraction", 1.0 / 3.0),
        band_fraction=model.get("band_fraction", 1.0 / 3.0),
        base_dir=path.parent,
        raw_text=text,
    )


@dataclass
class ShapeAnnotation:
    mesh: str
    landmarks: dict = field(default_factory=dict)   # name -> {"vertex": i} | {"point": [x,y,z]}
    labels: list | None = None                      # optional per-face labels
    boundary_start: dict = field(default_factory=dict)  # part type (str) -> landmark name


@dataclass
class AnnotationFile:
    shapes: list

    def landmark_vertex(self, shape_index, name, mesh):
        """Resolve a landmark to a vertex index (snapping points)."""
        import numpy as np

        lm = self.shapes[shape_index].landmarks.get(name)
        if lm is None:
            return None
        if "vertex" in lm:
            return int(lm["vertex"])
        p = np.asarray(lm["point"], dtype=float)
        return int(np.argmin(np.linalg.norm(mesh.vertices - p, axis=1)))


def load_annotation(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("cannot read annotation %s: %s" % (path, exc))
    shapes = []
    for entry in data.get("shapes", []):
        shapes.append(ShapeAnnotation(
            mesh=entry["mesh"],
            landmarks=entry.get("landmarks", {}),
            labels=entry.get("labels"),
            boundary_start=entry.get("boundaryStart", {}),
        ))
    return AnnotationFile(shapes)
