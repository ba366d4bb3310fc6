import json

import numpy as np
import pytest

from partspace.pipeline import (
    ModelContainer,
    StageError,
    load_config,
    run_pipeline,
)
from partspace.pipeline.cli import main as cli_main

from fixtures import box_family_container, write_sphere_toy_set


@pytest.fixture(scope="module")
def sphere_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("spheres")
    cfg_path = write_sphere_toy_set(root)
    config = load_config(cfg_path)
    state = run_pipeline(config)
    return root, cfg_path, state


class TestContainer:
    def test_roundtrip_bytes(self, tmp_path):
        container = box_family_container()
        raw = container.to_bytes()
        loaded = ModelContainer.from_bytes(raw)
        assert loaded.to_bytes() == raw
        path = tmp_path / "m.container"
        loaded.save(path)
        again = ModelContainer.load(path)
        assert again.to_bytes() == raw

    def test_contents_survive(self):
        container = box_family_container()
        loaded = ModelContainer.from_bytes(container.to_bytes())
        for p in (1, 2):
            a, b = container.part_models[p], loaded.part_models[p]
            assert np.array_equal(a.mean, b.mean)
            assert np.array_equal(a.basis, b.basis)
            assert np.array_equal(a.sigmas, b.sigmas)
            assert np.array_equal(a.urshape.triangles, b.urshape.triangles)
        assert container.rules.to_manifest() == loaded.rules.to_manifest()
        sid = sorted(container.pair_models)[0]
        assert np.array_equal(container.pair_models[sid].map_a,
                              loaded.pair_models[sid].map_a)


class TestSphereToyPipeline:
    def test_container_structure(self, sphere_run):
        _, _, state = sphere_run
        container = state.container
        assert container.meta["partTypes"] == [1]
        model = container.part_models[1]
        assert model.n_modes >= 1
        assert model.sigmas[0] > 0
        # correspondences stored for the report
        assert 1 in container.correspondences
        assert container.correspondences[1].shape[0] == 2

    def test_on_surface_result(self, sphere_run):
        _, _, state = sphere_run
        state.csets[1].assert_on_surface(scale=1.0)

    def test_resume_skips_and_matches(self, sphere_run, tmp_path):
        root, cfg_path, state = sphere_run
        config = load_config(cfg_path)
        resumed = run_pipeline(config, resume=True)
        assert resumed.container.to_bytes() == state.container.to_bytes()

    def test_missing_seed_landmark_names_shape(self, tmp_path):
        cfg_path = write_sphere_toy_set(tmp_path)
        ann = json.loads((tmp_path / "annotation.json").read_text())
        del ann["shapes"][1]["landmarks"]["seed"]
        (tmp_path / "annotation.json").write_text(json.dumps(ann))
        config = load_config(cfg_path)
        with pytest.raises(StageError, match="shape 1.*seed"):
            run_pipeline(config)

    def test_report(self, sphere_run, tmp_path):
        from partspace.pipeline import export_report

        _, _, state = sphere_run
        summary = export_report(state.container, tmp_path / "report",
                                logs=state.logs)
        entry = summary["parts"]["1"]
        assert entry["modes"] >= 1
        assert (tmp_path / "report" / "spectrum.txt").exists()
        assert (tmp_path / "report" / "part1_shape0_checker.obj").exists()
        # spectra in the report equal the shapespace output exactly
        from partspace.shapespace import gram_matrix

        direct = gram_matrix(state.container.correspondences[1])
        assert np.allclose(entry["gramEigenvalues"], direct.eigenvalues,
                           rtol=0, atol=0)


class TestCli:
    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("not toml ][")
        assert cli_main(["build-model", "--config", str(bad)]) == 2

    def test_stage_error_exit_code(self, tmp_path):
        cfg_path = write_sphere_toy_set(tmp_path)
        ann = json.loads((tmp_path / "annotation.json").read_text())
        ann["shapes"][0]["landmarks"] = {}
        (tmp_path / "annotation.json").write_text(json.dumps(ann))
        assert cli_main(["build-model", "--config", str(cfg_path)]) == 3

    def test_stage_flag(self, tmp_path):
        cfg_path = write_sphere_toy_set(tmp_path)
        assert cli_main(["fit-sdf", "--config", str(cfg_path)]) == 0
        assert (tmp_path / "out" / "sdf" / "part1_shape0.sdf").exists()
        assert not (tmp_path / "out" / "model.container").exists()

    def test_synthesize_and_report(self, tmp_path):
        container = box_family_container()
        cpath = tmp_path / "family.container"
        container.save(cpath)
        graph = tmp_path / "graph.txt"
        graph.write_text("node a 1\nnode b 2\nedge a b s_1_2_0\n")
        out = tmp_path / "composed.obj"
        assert cli_main(["synthesize", "--container", str(cpath),
                         "--graph", str(graph), "--out", str(out)]) == 0
        from partspace.mesh import load_mesh

        mesh = load_mesh(out)
        assert mesh.n_vertices > 0
        assert cli_main(["report", "--container", str(cpath),
                         "--out", str(tmp_path / "rep")]) == 0
