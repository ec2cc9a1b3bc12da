"""Session-oriented HTTP service driving the interactive modeling loop.

State model: the camera is fixed; rotating the view rotates the scene
(strands, bust) about the box center, so image-space operations always work
in the current view. Every mutating request is appended to the session's
history log (JSON lines) and all randomness derives from the session seed,
which makes a session replayable bit for bit.

Endpoints (JSON unless noted):
  POST /v1/sessions                     create session
  POST /v1/sessions/{id}/sketch        strokes + mask contour -> dense map (FMAP bytes)
  POST /v1/sessions/{id}/synthesize    dense map -> field + strands
  POST /v1/sessions/{id}/view          rotate the view
  POST /v1/sessions/{id}/edits         strand edits
  GET  /v1/sessions/{id}/strands       ?format=hair|obj|json
  GET  /v1/sessions/{id}/field2d       FMAP bytes
  GET  /v1/sessions/{id}/field3d      VFLD bytes
  GET  /v1/jobs/{id}                   poll an async synthesis job
  GET  /healthz
Binary payloads use the FMAP/VFLD/HAIR formats; the OpenAPI schema is
served under /docs/api.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from dataclasses import dataclass, field as dfield
from pathlib import Path

import numpy as np

from . import formats
from .backends import make_backend
from .bust import WORLD_BOX_MAX, WORLD_BOX_MIN, BustModel, default_bust, sample_roots, world_box_center
from .datagen import render_bust_depth, render_mask
from .edit import EditSelection, cut_by_stroke, laplacian_deform, recolor, scale_length, select_wisp, trim_by_mask
from .fields import MaskMap, OrientationMap2D, VectorField3D, ViewPose
from .solvers import ShellParams
from .strands import GrowthParams, StrandSet, grow_hair, rotate_strands_matrix, voxelize_strands

__all__ = ["ServiceConfig", "Service", "SessionError", "create_app", "replay_history",
           "rasterize_strokes", "fill_contour"]


class SessionError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


@dataclass
class ServiceConfig:
    data_dir: Path | str = "strandforge-data"
    resolution: int = 32
    grid_nz: int = 24
    backend: str = "diffusion"
    weight_dir: str | None = None
    scale: float = 0.25
    root_count: int = 3000
    seed: int = 0
    shell_thickness: int = 12
    force_jobs: bool = False  # run synthesis asynchronously regardless of cost
    sync_budget_cells: int = 600_000  # above this, synthesis returns a job handle


def rasterize_strokes(strokes, resolution: int) -> OrientationMap2D:
    """Directed pixel strokes -> sparse orientation map.

    Stroke points are raster (col, row); the drawn direction maps to world
    axes as (dx, -dy) since rows grow downward.
    """
    out = np.zeros((resolution, resolution, 2))
    for stroke in strokes:
        pts = np.asarray(stroke, dtype=np.float64)
        if pts.ndim != 2 or len(pts) < 2:
            continue
        for a, b in zip(pts[:-1], pts[1:]):
            d = b - a
            n = np.hypot(d[0], d[1])
            if n < 1e-9:
                continue
            tang = np.array([d[0], -d[1]]) / n
            steps = int(np.ceil(n / 0.5)) + 1
            for t in np.linspace(0.0, 1.0, steps):
                p = a + t * d
                c, r = int(round(p[0])), int(round(p[1]))
                if 0 <= r < resolution and 0 <= c < resolution:
                    out[r, c] = tang
    return OrientationMap2D(out)


def fill_contour(contour, resolution: int) -> MaskMap:
    """Even-odd scanline fill of a closed polygon in raster coordinates."""
    pts = np.asarray(contour, dtype=np.float64)
    if pts.ndim != 2 or len(pts) < 3:
        raise SessionError(422, "mask contour needs >= 3 points")
    if np.linalg.norm(pts[0] - pts[-1]) > 1e-9:
        pts = np.vstack([pts, pts[0]])  # auto-close
    mask = np.zeros((resolution, resolution), dtype=bool)
    x, y = pts[:, 0], pts[:, 1]
    for r in range(resolution):
        yr = r + 0.0
        crossings = []
        for i in range(len(pts) - 1):
            y0, y1 = y[i], y[i + 1]
            if (y0 <= yr < y1) or (y1 <= yr < y0):
                t = (yr - y0) / (y1 - y0)
                crossings.append(x[i] + t * (x[i + 1] - x[i]))
        crossings.sort()
        for a, b in zip(crossings[0::2], crossings[1::2]):
            lo = max(0, int(np.ceil(a)))
            hi = min(resolution - 1, int(np.floor(b)))
            if hi >= lo:
                mask[r, lo:hi + 1] = True
    return MaskMap(mask)


@dataclass
class Session:
    id: str
    config: ServiceConfig
    bust: BustModel
    view: np.ndarray  # current 3x3 rotation
    pose_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    strokes: list = dfield(default_factory=list)
    mask: MaskMap | None = None
    dense: OrientationMap2D | None = None
    field: VectorField3D | None = None
    strands: StrandSet | None = None
    rotated_since_synthesis: bool = False
    history: list = dfield(default_factory=list)
    lock: threading.Lock = dfield(default_factory=threading.Lock)

    def bust_in_view(self) -> BustModel:
        c = world_box_center()
        verts = (self.bust.vertices - c) @ self.view.T + c
        return BustModel(verts, self.bust.faces, self.bust.scalp_faces)


class Service:
    """All endpoint logic, usable directly from Python or over HTTP."""

    MAX_WORKERS = 2  # bounded pool for async synthesis jobs

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.sessions: dict[str, Session] = {}
        self.jobs: dict[str, dict] = {}
        self._lock = threading.Lock()
        self._busts = {"default": default_bust()}
        self._roots_cache: dict = {}
        self._workers = threading.Semaphore(self.MAX_WORKERS)

    # -- infrastructure

    def _shell(self) -> ShellParams:
        return ShellParams(nz=self.config.grid_nz, box_min=tuple(WORLD_BOX_MIN),
                           box_max=tuple(WORLD_BOX_MAX), thickness_cells=self.config.shell_thickness)

    def _backend(self):
        return make_backend(self.config.backend, self.config.weight_dir,
                            self._shell(), self.config.scale)

    def _session(self, sid: str) -> Session:
        s = self.sessions.get(sid)
        if s is None:
            raise SessionError(404, f"unknown session {sid}")
        return s

    def _roots(self, session: Session):
        key = (self.config.root_count, self.config.seed)
        if key not in self._roots_cache:
            self._roots_cache[key] = sample_roots(self._busts["default"],
                                                  count=self.config.root_count,
                                                  seed=self.config.seed)
        return self._roots_cache[key]

    def _log(self, session: Session, op: str, payload: dict) -> None:
        row = {"op": op, "payload": payload}
        session.history.append(row)
        d = self.data_dir / "sessions" / session.id
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "history.jsonl", "a") as f:
            f.write(json.dumps(row, sort_keys=True) + "\n")

    def _store_blob(self, blob: bytes) -> str:
        """Content-addressed persistence for binary artifacts."""
        sha = hashlib.sha256(blob).hexdigest()
        d = self.data_dir / "blobs"
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{sha}.bin"
        if not path.exists():
            path.write_bytes(blob)
        return sha

    def _snapshot(self, session: Session) -> dict:
        """Persist the session's current artifacts; returns their hashes."""
        refs = {}
        if session.strands is not None:
            refs["strands"] = self._store_blob(formats.hair_bytes(session.strands))
        if session.field is not None:
            refs["field"] = self._store_blob(formats.vfld_bytes(session.field))
        if session.dense is not None:
            refs["dense"] = self._store_blob(formats.map_to_fmap(session.dense))
        d = self.data_dir / "sessions" / session.id
        d.mkdir(parents=True, exist_ok=True)
        (d / "state.json").write_text(json.dumps(refs, sort_keys=True))
        return refs

    # -- operations

    def create_session(self, bust_id: str = "default", backend: str | None = None) -> str:
        if bust_id not in self._busts:
            raise SessionError(404, f"unknown bust {bust_id!r}")
        if backend is not None and backend != self.config.backend:
            cfg = ServiceConfig(**{**self.config.__dict__, "backend": backend})
        else:
            cfg = self.config
        if cfg.backend == "neural" and cfg.weight_dir is None:
            raise SessionError(422, "neural backend needs weights")
        sid = uuid.uuid4().hex[:12]
        session = Session(sid, cfg, self._busts[bust_id], np.eye(3))
        with self._lock:
            self.sessions[sid] = session
        self._log(session, "create", {"bust": bust_id, "backend": cfg.backend,
                                      "resolution": cfg.resolution, "grid_nz": cfg.grid_nz,
                                      "seed": cfg.seed, "root_count": cfg.root_count})
        return sid

    def submit_sketch(self, sid: str, strokes, mask_contour, _replaying=False) -> OrientationMap2D:
        session = self._session(sid)
        with session.lock:
            res = session.config.resolution
            mask = fill_contour(mask_contour, res)
            if not mask.as_bool().any():
                raise SessionError(422, "mask contour encloses no pixels")
            sketch = rasterize_strokes(strokes, res)
            backend = make_backend(session.config.backend, session.config.weight_dir,
                                   self._shell(), session.config.scale)
            dense = backend.infer_dense(sketch, mask)
            session.strokes = strokes
            session.mask = mask
            session.dense = dense
            if not _replaying:
                self._log(session, "sketch", {"strokes": [np.asarray(s).tolist() for s in strokes],
                                              "mask_contour": np.asarray(mask_contour).tolist()})
            return dense

    def synthesize(self, sid: str, _replaying=False) -> dict:
        session = self._session(sid)
        with session.lock:
            if session.dense is None or session.mask is None:
                raise SessionError(409, "session has no dense map; submit a sketch first")
            result = self._synthesize_locked(session)
            if not _replaying:
                self._log(session, "synthesize", {})
            return result

    def _synthesize_locked(self, session: Session) -> dict:
        backend = make_backend(session.config.backend, session.config.weight_dir,
                               self._shell(), session.config.scale)
        depth = render_bust_depth(session.bust_in_view(), ViewPose(), session.config.resolution)
        if session.field is not None and session.rotated_since_synthesis:
            field = backend.update_field(session.field, session.dense, session.mask, depth)
        else:
            field = backend.lift_field(session.dense, session.mask, depth)
        roots = self._roots(session)
        grown = grow_hair(field, roots, GrowthParams(seed=session.config.seed))
        session.field = field
        session.strands = grown
        session.rotated_since_synthesis = False
        refs = self._snapshot(session)
        pts = grown.all_vertices()
        bbox = [pts.min(axis=0).tolist(), pts.max(axis=0).tolist()] if len(pts) else None
        return {"strands": len(grown), "vertices": grown.vertex_count(),
                "bbox": bbox, "hash": refs["strands"]}

    def synthesize_or_job(self, sid: str) -> dict:
        """Synchronous unless the configured cost budget says otherwise."""
        session = self._session(sid)
        cost = session.config.resolution ** 2 * session.config.grid_nz
        if not session.config.force_jobs and cost <= session.config.sync_budget_cells:
            return self.synthesize(sid)
        job_id = uuid.uuid4().hex[:12]
        self.jobs[job_id] = {"status": "running", "result": None}

        def run():
            with self._workers:
                try:
                    self.jobs[job_id] = {"status": "done", "result": self.synthesize(sid)}
                except Exception as e:  # job errors surface through polling
                    self.jobs[job_id] = {"status": "error", "error": str(e)}

        threading.Thread(target=run, daemon=True).start()
        return {"job": job_id}

    def rotate_view(self, sid: str, pose: ViewPose, _replaying=False) -> dict:
        session = self._session(sid)
        with session.lock:
            target = pose.matrix()
            delta = target @ session.view.T
            if session.strands is not None:
                session.strands = rotate_strands_matrix(session.strands, delta)
                grid = (session.config.resolution, session.config.resolution, session.config.grid_nz)
                if len(session.strands):
                    session.field = voxelize_strands(session.strands, grid, WORLD_BOX_MIN, WORLD_BOX_MAX)
                session.rotated_since_synthesis = True
            session.view = target
            session.pose_deg = (pose.y_deg, pose.x_deg, pose.z_deg)
            if not _replaying:
                self._log(session, "view", {"y_deg": pose.y_deg, "x_deg": pose.x_deg, "z_deg": pose.z_deg})
            out = {"ok": True, "pose": list(session.pose_deg)}
            if session.field is not None:
                out["field_hash"] = hashlib.sha256(formats.vfld_bytes(session.field)).hexdigest()
            return out

    def apply_edit(self, sid: str, request: dict, _replaying=False) -> dict:
        session = self._session(sid)
        with session.lock:
            if session.strands is None:
                raise SessionError(409, "session has no strands to edit")
            res = session.config.resolution
            op = request.get("op")
            resynth = False
            if op == "cut":
                session.strands = cut_by_stroke(session.strands, np.asarray(request["stroke_px"]),
                                                ViewPose(), res)
            elif op == "trim":
                new_mask = fill_contour(request["mask_contour"], res)
                session.strands, resynth = trim_by_mask(session.strands, new_mask, ViewPose(),
                                                        old_mask=session.mask)
                session.mask = new_mask
            elif op == "deform":
                sel = self._selection(session, request)
                handles = [(int(h["strand"]), int(h["vertex"]), np.asarray(h["position"], dtype=float))
                           for h in request["handles"]]
                session.strands = laplacian_deform(session.strands, sel, handles)
            elif op == "scale":
                sel = self._selection(session, request)
                session.strands = scale_length(session.strands, sel, float(request["factor"]))
            elif op == "recolor":
                sel = self._selection(session, request)
                session.strands = recolor(session.strands, sel, request["color"])
            else:
                raise SessionError(422, f"unknown edit op {op!r}")
            if not _replaying:
                self._log(session, "edit", _jsonable(request))
            if resynth and session.dense is not None:
                self._synthesize_locked(session)
            refs = self._snapshot(session)
            return {"strands": len(session.strands), "resynthesized": bool(resynth),
                    "hash": refs["strands"]}

    def _selection(self, session: Session, request: dict) -> EditSelection:
        spec = request.get("selection", {"mode": "all"})
        mode = spec.get("mode", "all")
        if mode == "all":
            return EditSelection.whole_strands(range(len(session.strands)), session.strands)
        if mode == "indices":
            return EditSelection.whole_strands([int(i) for i in spec["indices"]], session.strands)
        if mode in ("scalp-region", "sketch-match"):
            return select_wisp(session.strands, mode, spec, ViewPose(), session.config.resolution)
        raise SessionError(422, f"unknown selection mode {mode!r}")

    def export(self, sid: str, fmt: str):
        session = self._session(sid)
        with session.lock:
            if session.strands is None:
                raise SessionError(409, "session has no strands")
            if fmt == "hair":
                return formats.hair_bytes(session.strands), "application/octet-stream"
            if fmt == "obj":
                return formats.strands_to_obj(session.strands).encode(), "text/plain"
            if fmt == "json":
                doc = {"strands": [
                    {"vertices": s.vertices.tolist(), "rooted": s.rooted,
                     "color": list(s.color) if s.color else None}
                    for s in session.strands.strands]}
                return json.dumps(doc).encode(), "application/json"
            raise SessionError(422, f"unknown format {fmt!r}")

    def field2d(self, sid: str) -> bytes:
        session = self._session(sid)
        if session.dense is None:
            raise SessionError(409, "session has no dense map")
        return formats.map_to_fmap(session.dense)

    def field3d(self, sid: str) -> bytes:
        session = self._session(sid)
        if session.field is None:
            raise SessionError(409, "session has no 3D field")
        return formats.vfld_bytes(session.field)


def _jsonable(x):
    return json.loads(json.dumps(x, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def replay_history(rows, base_config: ServiceConfig) -> str:
    """Re-run a session's history in a fresh service; returns the HAIR hash."""
    svc = Service(ServiceConfig(**{**base_config.__dict__,
                                   "data_dir": str(Path(base_config.data_dir) / "_replay")}))
    sid = None
    for row in rows:
        op, payload = row["op"], row["payload"]
        if op == "create":
            cfg = svc.config
            cfg.backend = payload.get("backend", cfg.backend)
            cfg.resolution = payload.get("resolution", cfg.resolution)
            cfg.grid_nz = payload.get("grid_nz", cfg.grid_nz)
            cfg.seed = payload.get("seed", cfg.seed)
            cfg.root_count = payload.get("root_count", cfg.root_count)
            sid = svc.create_session(payload.get("bust", "default"))
        elif op == "sketch":
            svc.submit_sketch(sid, payload["strokes"], payload["mask_contour"], _replaying=True)
        elif op == "synthesize":
            svc.synthesize(sid, _replaying=True)
        elif op == "view":
            svc.rotate_view(sid, ViewPose(payload["y_deg"], payload["x_deg"], payload["z_deg"]),
                            _replaying=True)
        elif op == "edit":
            svc.apply_edit(sid, payload, _replaying=True)
    blob, _ = svc.export(sid, "hair")
    return hashlib.sha256(blob).hexdigest()


def load_history(data_dir, sid: str) -> list[dict]:
    path = Path(data_dir) / "sessions" / sid / "history.jsonl"
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# HTTP layer

def create_app(config: ServiceConfig | None = None, service: Service | None = None):
    from fastapi import Body, FastAPI, Request
    from fastapi.responses import JSONResponse, Response

    svc = service or Service(config or ServiceConfig())
    app = FastAPI(title="strandforge", version="0.1.0", docs_url="/docs/api/ui",
                  openapi_url="/docs/api")
    app.state.service = svc

    @app.exception_handler(SessionError)
    async def _session_error(request: Request, exc: SessionError):
        return JSONResponse(status_code=exc.status, content={"error": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "backend": svc.config.backend}

    @app.post("/v1/sessions")
    def create_session(payload: dict = Body(default={})):
        sid = svc.create_session(payload.get("bust", "default"), payload.get("backend"))
        return {"id": sid}

    @app.post("/v1/sessions/{sid}/sketch")
    def sketch(sid: str, payload: dict = Body(...)):
        dense = svc.submit_sketch(sid, payload.get("strokes", []), payload["mask_contour"])
        return Response(content=formats.map_to_fmap(dense), media_type="application/octet-stream")

    @app.post("/v1/sessions/{sid}/synthesize")
    def synthesize(sid: str, payload: dict = Body(default={})):
        return svc.synthesize_or_job(sid)

    @app.post("/v1/sessions/{sid}/view")
    def view(sid: str, payload: dict = Body(...)):
        pose = ViewPose(float(payload.get("y_deg", 0)), float(payload.get("x_deg", 0)),
                        float(payload.get("z_deg", 0)))
        return svc.rotate_view(sid, pose)

    @app.post("/v1/sessions/{sid}/edits")
    def edits(sid: str, payload: dict = Body(...)):
        return svc.apply_edit(sid, payload)

    @app.get("/v1/sessions/{sid}/strands")
    def strands(sid: str, format: str = "hair"):
        blob, media = svc.export(sid, format)
        return Response(content=blob, media_type=media)

    @app.get("/v1/sessions/{sid}/field2d")
    def field2d(sid: str):
        return Response(content=svc.field2d(sid), media_type="application/octet-stream")

    @app.get("/v1/sessions/{sid}/field3d")
    def field3d(sid: str):
        return Response(content=svc.field3d(sid), media_type="application/octet-stream")

    @app.get("/v1/jobs/{job_id}")
    def job(job_id: str):
        j = svc.jobs.get(job_id)
        if j is None:
            raise SessionError(404, f"unknown job {job_id}")
        return j

    app_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if app_dir.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/app", StaticFiles(directory=str(app_dir), html=True), name="app")

    return app
