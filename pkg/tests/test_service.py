import numpy as np
import pytest
from fastapi.testclient import TestClient

from partspace.pipeline.service import build_app
from partspace.corropt import fit_rigid

from fixtures import box_family_container

GRAPH = "node a 1\nnode b 2\nedge a b s_1_2_0\n"


@pytest.fixture(scope="module")
def client():
    container = box_family_container()
    app = build_app(container)
    with TestClient(app) as c:
        c.container = container
        yield c


def as_array(payload):
    if isinstance(payload, dict):
        import base64

        raw = base64.b64decode(payload["data"])
        return np.frombuffer(raw, dtype=payload["dtype"]).reshape(payload["shape"])
    return np.asarray(payload)


class TestRest:
    def test_model_manifest(self, client):
        r = client.get("/model")
        assert r.status_code == 200
        data = r.json()
        assert set(data["parts"]) == {"1", "2"}
        assert data["parts"]["1"]["modes"] >= 1
        verts = as_array(data["parts"]["1"]["vertices"])
        assert verts.shape[1] == 3

    def test_rules(self, client):
        r = client.get("/rules")
        assert r.status_code == 200
        sites = r.json()["sites"]
        assert sites["s_1_2_0"] == {"partA": 1, "partB": 2}

    def test_validate_ok(self, client):
        r = client.post("/graph/validate", json={"graph": GRAPH})
        assert r.status_code == 200
        assert r.json() == {"ok": True, "violations": []}

    def test_validate_bad(self, client):
        bad = "node a 1\nnode b 1\nedge a b s_1_2_0\n"
        r = client.post("/graph/validate", json={"graph": bad})
        assert r.status_code == 422
        assert not r.json()["ok"]
        assert r.json()["violations"]

    def test_solve_training_graph_matches_mean_composite(self, client):
        from partspace.partmodel import PartGraph
        from partspace.synth import assemble_problem

        r = client.post("/solve", json={"graph": GRAPH, "constraints": []})
        assert r.status_code == 200
        payload = r.json()
        positions = as_array(payload["positions"])
        triangles = as_array(payload["triangles"])
        assert triangles.shape[1] == 3
        # mean composite assembled in the same global indexing
        container = client.container
        problem = assemble_problem(
            PartGraph.from_text(GRAPH), container.part_models,
            container.pair_models, container.site_corrs, rules=container.rules,
        )
        want = np.zeros_like(positions)
        cnt = np.zeros(len(want))
        for block in problem.part_blocks:
            np.add.at(want, block.global_ids, block.model.mean)
            np.add.at(cnt, block.global_ids, 1.0)
        want /= cnt[:, None]
        R, t = fit_rigid(positions, want)
        rms = np.sqrt(np.mean(np.sum((positions @ R.T + t - want) ** 2, axis=1)))
        assert rms < 1e-3

    def test_solve_invalid_graph(self, client):
        bad = "node a 1\nnode b 1\nedge a b s_1_2_0\n"
        r = client.post("/solve", json={"graph": bad})
        assert r.status_code == 422
        assert r.json()["error"] == "invalid_request"

    def test_solve_idempotent(self, client):
        r1 = client.post("/solve", json={"graph": GRAPH, "constraints": []})
        r2 = client.post("/solve", json={"graph": GRAPH, "constraints": []})
        p1 = as_array(r1.json()["positions"])
        p2 = as_array(r2.json()["positions"])
        assert np.abs(p1 - p2).max() < 1e-9


class TestSession:
    def test_edit_roundtrip_over_the_wire(self, client):
        with client.websocket_connect("/session") as ws:
            ws.send_json({"type": "solve", "seq": 1, "graph": GRAPH,
                          "constraints": []})
            base = ws.receive_json()
            assert base["type"] == "result" and base["seq"] == 1
            base_pos = as_array(base["positions"])

            handle = {"kind": "pointHandle", "node": "a", "vertex": 0,
                      "target": [-1.4, 0.2, 0.1]}
            ws.send_json({"type": "solve", "seq": 2, "graph": GRAPH,
                          "constraints": [handle]})
            edited = ws.receive_json()
            assert edited["seq"] == 2
            edited_pos = as_array(edited["positions"])
            assert np.abs(edited_pos - base_pos).max() > 1e-4

            ws.send_json({"type": "solve", "seq": 3, "graph": GRAPH,
                          "constraints": []})
            restored = ws.receive_json()
            restored_pos = as_array(restored["positions"])
            assert np.abs(restored_pos - base_pos).max() < 1e-6

    def test_invalid_graph_over_session(self, client):
        with client.websocket_connect("/session") as ws:
            ws.send_json({"type": "solve", "seq": 9,
                          "graph": "node a 1\nnode b 1\nedge a b s_1_2_0\n"})
            msg = ws.receive_json()
            assert msg["type"] == "error"
            assert msg["seq"] == 9
