"""Live session host for the interactive editor.

Each connection owns one LiveSession (single writer). Incoming messages are
applied at iteration boundaries: the tick drains queued handle drags, runs
itersPerFrame warm-started ADMM iterations, and emits a Frame with full
positions. Parameter changes that alter the system matrix trigger exactly
one refactorization before the next tick.
"""

import asyncio
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import errors
from .energies import material_to_dict
from .geometry import displacement_stats
from .io_formats import SessionDocument, TrajectoryDocument, constraints_to_doc
from .solver import (ConstraintSet, init_state, reset_duals, solve,
                     validate_params)
from .geometry import build_rest_mesh

log = logging.getLogger("localdeform.service")

PROTOCOL_VERSION = 1


class LiveSession:
    """Solver loop state for one editing session; synchronous and single-writer."""

    def __init__(self):
        self.session_doc = None
        self.mesh = None
        self.params = None
        self.constraints = None
        self.state = None
        self.paused = False
        self.iteration = 0
        self.pending_targets = {}
        self.tick_log = []            # (tick index, {vertex: target}) at every tick
        self.ticks = 0
        self.last_frame = None
        self._explicit_rho = False

    # -- session management -------------------------------------------------

    def load_session(self, doc, base_dir="."):
        session = SessionDocument.from_dict(doc, base_dir=base_dir)
        mesh = session.load_mesh()
        params = session.solver_params()
        constraints = session.constraint_set(mesh)
        validate_params(params, mesh)  # fail before mutating state
        self.session_doc = session
        self.mesh = mesh
        self.params = params
        self.constraints = constraints
        self.state = init_state(mesh, params)
        self.iteration = 0
        self.ticks = 0
        self.tick_log = []
        self.pending_targets = {}
        self.last_frame = None
        self._explicit_rho = session.solver.get("rho") is not None
        return self.topology_message()

    def topology_message(self):
        mesh = self.mesh
        return {
            "type": "MeshTopology",
            "protocol": PROTOCOL_VERSION,
            "kind": mesh.kind,
            "embed": mesh.embed,
            "elements": mesh.elements.tolist(),
            "restPositions": [float(x) for x in mesh.vertices.ravel()],
            "handles": sorted(int(i) for i in self.constraints.handles),
            "roiThreshold": self.params.roi_threshold,
        }

    def _require_loaded(self):
        if self.mesh is None:
            raise errors.LocalDeformError("no session loaded")

    def set_params(self, changes):
        """Apply parameter changes; returns True when the matrix changes."""
        self._require_loaded()
        kw = {}
        if "w" in changes:
            kw["w"] = float(changes["w"])
            if not self._explicit_rho:
                kw["rho"] = None  # recomputed from the new w by validation
        if "s" in changes:
            kw["s"] = float(changes["s"])
            if not self._explicit_rho:
                kw["rho"] = None
        if "rho" in changes:
            kw["rho"] = float(changes["rho"])
            self._explicit_rho = True
        if "gamma" in changes:
            kw["gamma"] = float(changes["gamma"])
        if "regularizer" in changes:
            kw["regularizer"] = str(changes["regularizer"])
        if "itersPerFrame" in changes:
            kw["iters_per_frame"] = int(changes["itersPerFrame"])
        if "energy" in changes or "material" in changes:
            from .energies import material_from_dict
            mat = changes.get("material", {"type": changes.get("energy")})
            kw["material"] = material_from_dict(mat)
        old_key = self._system_key()
        new_params = replace(self.params, **kw)
        validate_params(new_params, self.mesh)  # validate before committing
        self.params = new_params
        if "material" in kw:
            # material change invalidates per-element local state
            self.state = init_state(self.mesh, self.params)
        return self._system_key() != old_key

    def _system_key(self):
        from .solver import system_key
        return system_key(self.mesh, validate_params(self.params, self.mesh),
                          self.constraints)

    def set_handles(self, indices):
        """Replace the handle set; new handles target their rest positions."""
        self._require_loaded()
        old = self.constraints.handles
        handles = {}
        for i in indices:
            i = int(i)
            handles[i] = old.get(i, self.mesh.vertices[i].copy())
        self.constraints = ConstraintSet(handles=handles,
                                         affine_groups=self.constraints.affine_groups)
        self.constraints.validate(self.mesh)
        self.pending_targets = {i: t for i, t in self.pending_targets.items()
                                if i in handles}

    def drag_handles(self, targets):
        """Queue handle target updates; applied at the next iteration boundary."""
        self._require_loaded()
        for i, t in targets.items():
            i = int(i)
            if i not in self.constraints.handles:
                raise errors.IndexOutOfRangeError(f"vertex {i} is not a handle")
            t = np.asarray(t, dtype=np.float64)
            if t.shape != (self.mesh.embed,) or not np.isfinite(t).all():
                raise errors.NonFiniteInputError(f"bad drag target for vertex {i}")
            self.pending_targets[i] = t

    def reset_rest(self):
        """Sculpting mode: adopt the current shape as the new rest shape."""
        self._require_loaded()
        v = self.state.v.copy()
        self.mesh = build_rest_mesh(v, self.mesh.elements, self.mesh.kind)
        handles = {i: v[int(i)].copy() for i in self.constraints.handles}
        handles.update({int(i): t for i, t in self.pending_targets.items()})
        self.pending_targets = {}
        self.constraints = ConstraintSet(handles=handles,
                                         affine_groups=self.constraints.affine_groups)
        self.state = init_state(self.mesh, self.params)
        self.tick_log = []
        self.ticks = 0

    def reset_duals(self):
        self._require_loaded()
        reset_duals(self.state)

    def tick(self):
        """Apply queued updates, run itersPerFrame iterations, emit a Frame."""
        self._require_loaded()
        if self.paused and self.last_frame is not None:
            return self.last_frame
        if self.pending_targets:
            handles = dict(self.constraints.handles)
            handles.update(self.pending_targets)
            self.constraints = ConstraintSet(handles=handles,
                                             affine_groups=self.constraints.affine_groups)
            self.pending_targets = {}
        vparams = validate_params(self.params, self.mesh)
        self.tick_log.append((self.ticks,
                              {int(i): np.array(t) for i, t in
                               self.constraints.handles.items()}))
        result = solve(self.mesh, self.constraints, vparams,
                       warm_start=self.state, iters=vparams.iters_per_frame)
        self.state = result.state
        self.iteration = self.state.iterations
        self.ticks += 1
        frame = self._frame(result)
        self.last_frame = frame
        return frame

    def _frame(self, result):
        scale = max(self.mesh.bbox_diag, 1e-300)
        residuals = result.residuals
        return {
            "type": "Frame",
            "protocol": PROTOCOL_VERSION,
            "iteration": int(self.iteration),
            "positions": [float(x) for x in result.v.ravel()],
            "displacement": [float(x) for x in result.displacement],
            "residuals": {
                "primalZ": float(residuals["primal_z"]) / scale,
                "dualZ": float(residuals["dual_z"]) / scale,
                "primalX": float(residuals["primal_x"]) / scale,
            },
            "roi": {"threshold": self.params.roi_threshold,
                    "count": int(result.roi_count),
                    "measure": float(result.roi_measure)},
        }

    def export(self):
        """Session + trajectory documents and the current result snapshot.

        Replaying the trajectory with cmd_animate at one sample per tick and
        the session's itersPerFrame reproduces the current positions.
        """
        self._require_loaded()
        session = self.session_doc
        doc = session.to_dict()
        doc["constraints"] = constraints_to_doc(self.constraints, self.mesh.embed)
        solver = dict(doc.get("solver", {}))
        vparams = validate_params(self.params, self.mesh)
        solver["itersPerFrame"] = vparams.iters_per_frame
        solver["maxIters"] = max(self.iteration, 1)
        doc["solver"] = solver
        doc["locality"] = {"w": vparams.locality.w, "s": vparams.locality.s}
        doc["material"] = material_to_dict(vparams.material)
        doc["regularizer"] = vparams.regularizer
        trajectory = TrajectoryDocument(
            keyframes=[(float(t), targets) for t, targets in self.tick_log])
        mags, roi_count, roi_measure = displacement_stats(
            self.state.v, self.mesh.vertices, self.mesh.vertex_areas,
            vparams.roi_threshold)
        snapshot = {
            "positions": [float(x) for x in self.state.v.ravel()],
            "displacement": [float(x) for x in mags],
            "iterations": int(self.iteration),
            "ticks": int(self.ticks),
            "roi": {"count": int(roi_count), "measure": float(roi_measure),
                    "threshold": vparams.roi_threshold},
        }
        return doc, trajectory, snapshot


# ---------------------------------------------------------------------------
# message dispatch (transport-independent)


def handle_message(session, msg):
    """Apply one wire message; returns the list of reply messages."""
    if not isinstance(msg, dict) or "type" not in msg:
        return [_error(msg, "BAD_MESSAGE", "message must be an object with a type")]
    if msg.get("protocol") != PROTOCOL_VERSION:
        return [_error(msg, "BAD_PROTOCOL",
                       f"protocol field must equal {PROTOCOL_VERSION}")]
    kind = msg["type"]
    req = msg.get("requestId")
    try:
        if kind == "LoadSession":
            topo = session.load_session(msg["document"], base_dir=msg.get("baseDir", "."))
            return [_ack(req), topo]
        if kind == "SetParams":
            changed = session.set_params(msg.get("params", {}))
            return [_ack(req, {"matrixChanged": changed})]
        if kind == "SetHandles":
            session.set_handles(msg.get("indices", []))
            return [_ack(req)]
        if kind == "DragHandles":
            session.drag_handles(msg.get("targets", {}))
            return [_ack(req)]
        if kind == "ResetRest":
            session.reset_rest()
            return [_ack(req)]
        if kind == "ResetDuals":
            session.reset_duals()
            return [_ack(req)]
        if kind == "Pause":
            session.paused = True
            return [_ack(req)]
        if kind == "Resume":
            session.paused = False
            return [_ack(req)]
        if kind == "ExportSession":
            doc, trajectory, snapshot = session.export()
            return [_ack(req), {"type": "SessionExport", "protocol": PROTOCOL_VERSION,
                                "session": doc, "trajectory": trajectory.to_dict(),
                                "result": snapshot}]
        return [_error(msg, "UNKNOWN_TYPE", f"unknown message type {kind!r}")]
    except errors.LocalDeformError as exc:
        return [_error(msg, type(exc).__name__, str(exc))]
    except (KeyError, TypeError, ValueError) as exc:
        return [_error(msg, "BAD_MESSAGE", f"{type(exc).__name__}: {exc}")]


def _ack(request_id, extra=None):
    msg = {"type": "Ack", "protocol": PROTOCOL_VERSION}
    if request_id is not None:
        msg["requestId"] = request_id
    if extra:
        msg.update(extra)
    return msg


def _error(msg, code, text):
    out = {"type": "Error", "protocol": PROTOCOL_VERSION, "code": code,
           "message": text}
    if isinstance(msg, dict) and msg.get("requestId") is not None:
        out["requestId"] = msg["requestId"]
    return out


# ---------------------------------------------------------------------------
# websocket app


def create_app(frontend_dir=None, tick_interval=1.0 / 30.0):
    """FastAPI app exposing the duplex session channel at /ws."""
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect

    app = FastAPI(title="localdeform service")

    @app.get("/health")
    async def health():
        return {"ok": True, "protocol": PROTOCOL_VERSION}

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        session = LiveSession()
        try:
            while True:
                running = session.mesh is not None and not session.paused
                try:
                    timeout = tick_interval if running else None
                    raw = await asyncio.wait_for(websocket.receive_text(),
                                                 timeout=timeout)
                except asyncio.TimeoutError:
                    raw = None
                if raw is not None:
                    try:
                        msg = json.loads(raw)
                    except json.JSONDecodeError as exc:
                        await websocket.send_text(json.dumps(
                            _error({}, "BAD_JSON", str(exc))))
                        continue
                    for reply in handle_message(session, msg):
                        await websocket.send_text(json.dumps(reply))
                    continue
                # idle boundary: run one tick and stream the frame
                if session.mesh is not None and not session.paused:
                    frame = session.tick()
                    await websocket.send_text(json.dumps(frame))
        except WebSocketDisconnect:
            pass
        except RuntimeError:
            # starlette raises when the client goes away mid-send
            pass

    if frontend_dir and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True),
                  name="editor")
    return app
