"""HTTP preview/anchor service backing the anchor-studio UI.

Read endpoints render from the immutable scene; anchor mutations are
serialized behind a lock and persisted atomically to the ``anchors.json``
sidecar next to the scene file, which batch runs read as well.

Preview intrinsics scale with the requested width (fx = fy = 1000 * w/720)
so the studio shows the same horizontal field of view as the default batch
configuration.
"""

from __future__ import annotations

import io
import threading

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field

from .camera import CameraIntrinsics, CameraPose
from .errors import ValidationError
from .gbuffer import build_render_index, render_gbuffer
from .regions import ProposalConfig, compute_boundary_map, propose_regions
from .scene import anchor_to_dict, default_presets, load_scene, parse_anchor, save_anchors, sidecar_path

MAX_PREVIEW_W = 1280
MAX_PREVIEW_H = 960
MIN_PREVIEW = 16


class AnchorIn(BaseModel):
    id: str | None = None
    position: list[float] = Field(min_length=3, max_length=3)
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    label: str = ""


def preview_intrinsics(w: int, h: int) -> CameraIntrinsics:
    f = 1000.0 * (w / 720.0)
    return CameraIntrinsics(fx=f, fy=f, cx=w / 2.0, cy=h / 2.0, width=w, height=h)


def create_app(scene_path: str) -> FastAPI:
    scene = load_scene(scene_path)
    presets = default_presets()
    anchors = list(scene.anchors)
    write_lock = threading.Lock()
    build_render_index(scene)  # warm the BVH before the first request

    app = FastAPI(title="meshtext preview service")

    @app.exception_handler(RequestValidationError)
    async def _on_validation(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors())})

    @app.exception_handler(ValidationError)
    async def _on_domain_validation(_request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    def checked_pose(x: float, y: float, z: float, yaw: float, pitch: float, roll: float) -> CameraPose:
        try:
            return CameraPose(position=np.array([x, y, z]), yaw=yaw, pitch=pitch, roll=roll)
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    def checked_size(w: int, h: int) -> tuple[int, int]:
        if not (MIN_PREVIEW <= w <= MAX_PREVIEW_W and MIN_PREVIEW <= h <= MAX_PREVIEW_H):
            raise HTTPException(
                status_code=400,
                detail=f"preview size limited to {MAX_PREVIEW_W}x{MAX_PREVIEW_H}",
            )
        return w, h

    @app.get("/scene/info")
    def scene_info():
        return {
            "id": scene.id,
            "mesh_count": len(scene.meshes),
            "triangle_count": scene.triangle_count,
            "z_max": scene.z_max,
            "anchor_count": len(anchors),
            "presets": sorted(presets),
        }

    @app.get("/preview")
    def preview(
        x: float = 0.0,
        y: float = 0.0,
        z: float = 1.6,
        yaw: float = 0.0,
        pitch: float = 0.0,
        roll: float = 0.0,
        w: int = 640,
        h: int = 480,
        preset: str = "normal",
    ):
        if preset not in presets:
            raise HTTPException(status_code=400, detail=f"unknown preset: {preset}")
        w, h = checked_size(w, h)
        pose = checked_pose(x, y, z, yaw, pitch, roll)
        gb = render_gbuffer(scene, pose, preview_intrinsics(w, h), presets[preset])
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(gb.rgb, mode="RGB").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/regions")
    def regions(
        x: float = 0.0,
        y: float = 0.0,
        z: float = 1.6,
        yaw: float = 0.0,
        pitch: float = 0.0,
        roll: float = 0.0,
        w: int = 640,
        h: int = 480,
        seed: int = 0,
    ):
        w, h = checked_size(w, h)
        pose = checked_pose(x, y, z, yaw, pitch, roll)
        gb = render_gbuffer(scene, pose, preview_intrinsics(w, h), presets["normal"])
        boundary = compute_boundary_map(gb.normal_8, gb.hit_mask)
        found = propose_regions(boundary, ProposalConfig(), np.random.default_rng(seed))
        return [{"x1": r.x1, "y1": r.y1, "x2": r.x2, "y2": r.y2} for r in found]

    @app.get("/anchors")
    def list_anchors():
        return [anchor_to_dict(a) for a in anchors]

    @app.post("/anchors", status_code=201)
    def add_anchor(body: AnchorIn):
        with write_lock:
            anchor_id = body.id
            existing = {a.id for a in anchors}
            if anchor_id is None or anchor_id == "":
                i = 1
                while f"anchor-{i:03d}" in existing:
                    i += 1
                anchor_id = f"anchor-{i:03d}"
            elif anchor_id in existing:
                raise HTTPException(status_code=400, detail=f"duplicate anchor id: {anchor_id}")
            spec = {
                "id": anchor_id,
                "position": body.position,
                "yaw": body.yaw,
                "pitch": body.pitch,
                "roll": body.roll,
                "label": body.label,
            }
            anchor = parse_anchor(spec)
            anchors.append(anchor)
            save_anchors(sidecar_path(scene_path), anchors)
            return anchor_to_dict(anchor)

    @app.delete("/anchors/{anchor_id}", status_code=204)
    def delete_anchor(anchor_id: str):
        with write_lock:
            for i, a in enumerate(anchors):
                if a.id == anchor_id:
                    anchors.pop(i)
                    save_anchors(sidecar_path(scene_path), anchors)
                    return Response(status_code=204)
            raise HTTPException(status_code=404, detail=f"unknown anchor id: {anchor_id}")

    return app
