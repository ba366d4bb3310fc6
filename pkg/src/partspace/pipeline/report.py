"""Human-readable diagnostics: checker-textured meshes, spectrum tables,
energy traces."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..mesh import save_obj
from ..mesh.trimesh import TriMesh
from ..shapespace import gram_matrix


def checker_uv(urshape_mean):
    """Per-vertex uv from the two dominant principal axes of the urshape;
    a checker texture over these coordinates visualizes correspondence."""
    X = urshape_mean - urshape_mean.mean(axis=0)
    _, _, Vt = np.linalg.svd(X, full_matrices=False)
    uv = X @ Vt[:2].T
    lo = uv.min(axis=0)
    span = np.maximum(uv.max(axis=0) - lo, 1e-12)
    return 8.0 * (uv - lo) / span  # 8 checker periods


def export_report(container, out_dir, logs=None):
    """Write per-shape checker meshes, the Gram spectrum table, and energy
    traces. Returns the report summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"parts": {}}
    for p, model in sorted(container.part_models.items()):
        entry = {
            "vertices": int(model.n_vertices),
            "modes": int(model.n_modes),
            "sigmas": [float(s) for s in model.sigmas],
            "delta": float(model.delta),
        }
        positions = container.correspondences.get(p)
        if positions is not None:
            spectrum = gram_matrix(positions)
            entry["gramEigenvalues"] = [float(x) for x in spectrum.eigenvalues]
            total = spectrum.eigenvalues.sum()
            if total > 0:
                entry["leadingFraction"] = float(spectrum.eigenvalues[0] / total)
            uv = checker_uv(model.mean)
            for k in range(positions.shape[0]):
                mesh = TriMesh(positions[k], model.urshape.triangles,
                               validate=False)
                save_obj(out / ("part%d_shape%d_checker.obj" % (p, k)), mesh,
                         uv=uv)
        summary["parts"][str(p)] = entry
    if logs:
        for name, content in logs.items():
            if isinstance(content, dict):
                for p, lines in content.items():
                    (out / ("trace_%s_part%s.log" % (name, p))).write_text(
                        "\n".join(lines) + "\n")
            else:
                (out / ("trace_%s.log" % name)).write_text(
                    "\n".join(content) + "\n")
    (out / "spectrum.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    lines = ["part  modes  leading-fraction  eigenvalues"]
    for p, e in sorted(summary["parts"].items()):
        lines.append("%4s  %5d  %16s  %s" % (
            p, e["modes"],
            "%.6f" % e["leadingFraction"] if "leadingFraction" in e else "n/a",
            " ".join("%.6g" % x for x in e.get("gramEigenvalues", [])[:8]),
        ))
    (out / "spectrum.txt").write_text("\n".join(lines) + "\n")
    return summary
