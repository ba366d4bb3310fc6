"""Synthesis solve service: REST endpoints plus a stateful edit session.

JSON protocol; mesh arrays inline as nested lists below 1 MB and base64
little-endian blobs above. The websocket session keeps one solver state,
coalesces rapid edits (latest wins), and answers every processed request
with a sequence-tagged result.
"""
from __future__ import annotations

import asyncio
import base64

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from ..partmodel.graph import PartGraph, PartGraphError, validate_part_graph
from ..synth import Constraint, SynthesisError, assemble_problem, solve_synthesis
from ..synth.solve import apply_edit
from .container import ModelContainer

INLINE_LIMIT = 1 << 20  # bytes
PROTOCOL_VERSION = 1


def array_payload(arr):
    a = np.ascontiguousarray(arr)
    if a.dtype.kind == "f":
        a = a.astype("<f8")
    else:
        a = a.astype("<i8")
    if a.nbytes > INLINE_LIMIT:
        return {
            "encoding": "base64",
            "dtype": str(a.dtype),
            "shape": list(a.shape),
            "data": base64.b64encode(a.tobytes()).decode("ascii"),
        }
    return a.tolist()


def _mesh_payload(result, problem):
    return {
        "positions": array_payload(result.positions),
        "triangles": array_payload(problem.triangles),
        "labels": array_payload(problem.triangle_labels),
        "energy": float(result.energy),
        "lambdas": {k: [float(x) for x in v] for k, v in result.lambdas.items()},
    }


class SolverSessions:
    """Problem/solution cache keyed by graph text (warm starts for edits)."""

    def __init__(self, container):
        self.container = container
        self.cache = {}

    def problem_for(self, graph_text, constraints):
        graph = PartGraph.from_text(graph_text)
        violations = validate_part_graph(graph, self.container.rules)
        if violations:
            raise SynthesisError("; ".join(violations))
        key = graph_text
        if key not in self.cache:
            problem = assemble_problem(
                graph, self.container.part_models, self.container.pair_models,
                self.container.site_corrs, constraints=constraints,
                sigma_bdr_fraction=self.container.meta.get("sigmaBdrFraction", 1 / 3),
                rules=self.container.rules,
            )
            self.cache[key] = {"problem": problem, "last": None}
        return self.cache[key]

    def solve(self, graph_text, constraints):
        entry = self.problem_for(graph_text, constraints)
        result = apply_edit(entry["problem"], constraints, previous=entry["last"])
        entry["last"] = result
        return _mesh_payload(result, entry["problem"])


def _parse_constraints(raw):
    return [Constraint.from_dict(d) for d in (raw or [])]


def build_app(container):
    if isinstance(container, (str, bytes)):
        container = ModelContainer.load(container)
    app = FastAPI(title="partspace solve service")
    sessions = SolverSessions(container)

    @app.get("/model")
    def get_model():
        parts = {}
        for p, model in sorted(container.part_models.items()):
            parts[str(p)] = {
                "vertices": array_payload(model.mean),
                "triangles": array_payload(model.urshape.triangles),
                "sigmas": [float(s) for s in model.sigmas],
                "modes": int(model.n_modes),
            }
        return {
            "protocol": PROTOCOL_VERSION,
            "meta": container.meta,
            "parts": parts,
        }

    @app.get("/rules")
    def get_rules():
        return {
            "rules": container.rules.to_manifest(),
            "sites": {
                sid: {"partA": int(c.part_a), "partB": int(c.part_b)}
                for sid, c in sorted(container.site_corrs.items())
            },
        }

    @app.post("/graph/validate")
    def post_validate(payload: dict):
        try:
            graph = PartGraph.from_text(payload.get("graph", ""))
        except PartGraphError as exc:
            return JSONResponse(status_code=422,
                                content={"ok": False, "violations": [str(exc)]})
        violations = validate_part_graph(graph, container.rules)
        if violations:
            return JSONResponse(status_code=422,
                                content={"ok": False, "violations": violations})
        return {"ok": True, "violations": []}

    @app.post("/solve")
    def post_solve(payload: dict):
        try:
            constraints = _parse_constraints(payload.get("constraints"))
            return sessions.solve(payload.get("graph", ""), constraints)
        except (SynthesisError, PartGraphError) as exc:
            return JSONResponse(status_code=422,
                                content={"error": "invalid_request",
                                         "detail": str(exc)})

    @app.websocket("/session")
    async def session(ws: WebSocket):
        await ws.accept()
        latest = {"msg": None}
        new_edit = asyncio.Event()
        closed = asyncio.Event()

        async def receiver():
            try:
                while True:
                    msg = await ws.receive_json()
                    latest["msg"] = msg  # latest-wins coalescing
                    new_edit.set()
            except WebSocketDisconnect:
                closed.set()
                new_edit.set()

        recv_task = asyncio.create_task(receiver())
        try:
            while not closed.is_set():
                await new_edit.wait()
                new_edit.clear()
                if closed.is_set():
                    break
                msg = latest["msg"]
                if msg is None:
                    continue
                seq = msg.get("seq")
                try:
                    constraints = _parse_constraints(msg.get("constraints"))
                    payload = sessions.solve(msg.get("graph", ""), constraints)
                    payload.update({"type": "result", "seq": seq})
                    await ws.send_json(payload)
                except (SynthesisError, PartGraphError) as exc:
                    await ws.send_json({
                        "type": "error", "seq": seq,
                        "error": "invalid_request", "detail": str(exc),
                    })
        finally:
            recv_task.cancel()
        return

    return app


def serve(container, host="127.0.0.1", port=8760):
    """Run the solve service (blocking)."""
    import uvicorn

    app = build_app(container)
    uvicorn.run(app, host=host, port=port, log_level="warning")
