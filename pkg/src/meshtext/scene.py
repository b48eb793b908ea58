"""World description: meshes with materials, lights, fog, camera anchors.

Scene files are UTF-8 JSON; meshes are Wavefront OBJ, triangulated on load.
Anchors may live in a sidecar ``anchors.json`` next to the scene file, in
which case the sidecar wins; the preview service persists edits there so
batch runs and the UI share one source of truth.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .camera import CameraPose
from .errors import SceneLoadError, ValidationError
from .geometry import AccelIndex, TriMesh, normalize

DEFAULT_Z_MAX = 50.0


@dataclass
class Material:
    albedo: tuple[float, float, float] = (0.8, 0.8, 0.8)
    ambient: float = 1.0
    diffuse: float = 1.0
    texture_path: str | None = None
    texture: np.ndarray | None = None  # (H, W, 3) float in [0,1], loaded eagerly

    def validate(self):
        if not all(0.0 <= c <= 1.0 for c in self.albedo):
            raise ValidationError("albedo components must be in [0,1]")
        if not (0.0 <= self.ambient <= 1.0 and 0.0 <= self.diffuse <= 1.0):
            raise ValidationError("material coefficients must be in [0,1]")


@dataclass
class Light:
    kind: str  # directional | point | ambient
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    intensity: float = 1.0
    direction: np.ndarray | None = None
    position: np.ndarray | None = None

    def validate(self):
        if self.kind not in ("directional", "point", "ambient"):
            raise ValidationError(f"unknown light kind: {self.kind}")
        if not all(0.0 <= c <= 1.0 for c in self.color):
            raise ValidationError("light color must be in [0,1]")
        if self.intensity < 0:
            raise ValidationError("light intensity must be >= 0")
        if self.kind == "directional":
            if self.direction is None:
                raise ValidationError("directional light requires a direction")
            if abs(np.linalg.norm(self.direction) - 1.0) > 1e-6:
                raise ValidationError("directional light direction must be unit length")
        if self.kind == "point":
            if self.position is None or not np.all(np.isfinite(self.position)):
                raise ValidationError("point light requires a finite position")


@dataclass(frozen=True)
class FogSettings:
    density: float = 0.0  # per scene unit
    color: tuple[float, float, float] = (0.7, 0.75, 0.8)

    def __post_init__(self):
        if not np.isfinite(self.density) or self.density < 0:
            raise ValidationError("fog density must be finite and >= 0")


@dataclass(frozen=True)
class IlluminationPreset:
    name: str
    multiplier: float
    fog: FogSettings | None = None

    def __post_init__(self):
        if self.name not in ("normal", "bright", "dark", "fog"):
            raise ValidationError(f"unknown preset name: {self.name}")
        if self.multiplier <= 0:
            raise ValidationError("light multiplier must be > 0")
        if self.name == "normal" and self.multiplier != 1.0:
            raise ValidationError("normal preset multiplier must be exactly 1.0")


def default_presets() -> dict[str, IlluminationPreset]:
    return {
        "normal": IlluminationPreset("normal", 1.0),
        "bright": IlluminationPreset("bright", 2.0),
        "dark": IlluminationPreset("dark", 0.35),
        "fog": IlluminationPreset("fog", 1.0, FogSettings(0.08, (0.75, 0.78, 0.8))),
    }


@dataclass
class CameraAnchor:
    id: str
    pose: CameraPose
    label: str = ""


class Scene:
    """Immutable world description; safe for concurrent readers."""

    def __init__(self, scene_id, meshes, materials, lights, fog, anchors, z_max, doc=None, path=None):
        if not meshes:
            raise ValidationError("scene requires at least one mesh")
        if z_max <= 0:
            raise ValidationError("z_max must be > 0")
        ids = [a.id for a in anchors]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValidationError(f"duplicate anchor id: {dup}")
        self.id = scene_id
        self.meshes: list[TriMesh] = meshes
        self.materials: list[Material] = materials  # parallel to meshes
        self.lights: list[Light] = lights
        self.fog = fog
        self.anchors: list[CameraAnchor] = anchors
        self.z_max = float(z_max)
        self.doc = doc  # parsed scene JSON, kept for faithful re-serialization
        self.path = path
        self._accel: AccelIndex | None = None

    def accel(self) -> AccelIndex:
        if self._accel is None:
            self._accel = AccelIndex(self.meshes)
        return self._accel

    @property
    def triangle_count(self) -> int:
        return sum(m.triangle_count for m in self.meshes)

    def anchor(self, anchor_id: str) -> CameraAnchor:
        for a in self.anchors:
            if a.id == anchor_id:
                return a
        raise KeyError(anchor_id)


def load_obj(path: str) -> TriMesh:
    """Load a triangulated Wavefront OBJ.

    Corners are deduplicated by their (v, vt, vn) triple, GL-style, so faces
    with different normals at a shared position keep flat shading. Faces
    without vn records get their geometric face normal.
    """
    positions: list[list[float]] = []
    texcoords: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[list[tuple[int, int, int]]] = []

    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                positions.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                texcoords.append([float(x) for x in parts[1:3]])
            elif tag == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                corners = []
                for token in parts[1:]:
                    fields = token.split("/")
                    vi = int(fields[0])
                    ti = int(fields[1]) if len(fields) > 1 and fields[1] else 0
                    ni = int(fields[2]) if len(fields) > 2 and fields[2] else 0
                    corners.append((vi, ti, ni))
                faces.append(corners)

    def resolve(idx: int, count: int) -> int:
        return idx - 1 if idx > 0 else count + idx

    pos = np.asarray(positions, dtype=np.float64)
    out_verts: list[np.ndarray] = []
    out_normals: list[np.ndarray] = []
    out_uvs: list[list[float]] = []
    out_tris: list[list[int]] = []
    corner_cache: dict[tuple, int] = {}
    any_uv = any(t != 0 for face in faces for (_, t, _) in face)

    for fi, face in enumerate(faces):
        if len(face) < 3:
            raise SceneLoadError(f"face with fewer than 3 corners in {path}")
        resolved = []
        face_pts = [pos[resolve(vi, len(pos))] for (vi, _, _) in face]
        fallback_n = None
        if any(ni == 0 for (_, _, ni) in face):
            fn = np.cross(face_pts[1] - face_pts[0], face_pts[2] - face_pts[0])
            fallback_n = normalize(fn)
        for (vi, ti, ni) in face:
            key = (vi, ti, ni if ni != 0 else -(fi + 1))
            slot = corner_cache.get(key)
            if slot is None:
                slot = len(out_verts)
                corner_cache[key] = slot
                out_verts.append(pos[resolve(vi, len(pos))])
                if ni != 0:
                    out_normals.append(normalize(np.asarray(normals[resolve(ni, len(normals))])))
                else:
                    out_normals.append(fallback_n)
                if any_uv:
                    out_uvs.append(texcoords[resolve(ti, len(texcoords))] if ti != 0 else [0.0, 0.0])
            resolved.append(slot)
        for k in range(1, len(resolved) - 1):  # fan triangulation
            out_tris.append([resolved[0], resolved[k], resolved[k + 1]])

    if not out_tris:
        raise SceneLoadError(f"no faces in {path}")
    return TriMesh(
        vertices=np.asarray(out_verts),
        triangles=np.asarray(out_tris, dtype=np.int32),
        vertex_normals=np.asarray(out_normals),
        texcoords=np.asarray(out_uvs) if any_uv else None,
    )


def _parse_material(spec: dict, base_dir: str) -> Material:
    mat = Material(
        albedo=tuple(spec.get("albedo", (0.8, 0.8, 0.8))),
        ambient=float(spec.get("ambient", 1.0)),
        diffuse=float(spec.get("diffuse", 1.0)),
        texture_path=spec.get("texture"),
    )
    mat.validate()
    if mat.texture_path:
        tex_file = os.path.join(base_dir, mat.texture_path)
        if not os.path.exists(tex_file):
            raise SceneLoadError(f"texture not found: {mat.texture_path}")
        img = Image.open(tex_file).convert("RGB")
        mat.texture = np.asarray(img, dtype=np.float64) / 255.0
    return mat


def _parse_light(spec: dict) -> Light:
    light = Light(
        kind=spec["kind"],
        color=tuple(spec.get("color", (1.0, 1.0, 1.0))),
        intensity=float(spec.get("intensity", 1.0)),
        direction=np.asarray(spec["direction"], dtype=np.float64) if "direction" in spec else None,
        position=np.asarray(spec["position"], dtype=np.float64) if "position" in spec else None,
    )
    light.validate()
    return light


def parse_anchor(spec: dict) -> CameraAnchor:
    try:
        pose = CameraPose(
            position=np.asarray(spec["position"], dtype=np.float64),
            yaw=float(spec.get("yaw", 0.0)),
            pitch=float(spec.get("pitch", 0.0)),
            roll=float(spec.get("roll", 0.0)),
        )
        return CameraAnchor(id=str(spec["id"]), pose=pose, label=str(spec.get("label", "")))
    except KeyError as exc:
        raise ValidationError(f"anchor missing field: {exc}") from exc


def anchor_to_dict(anchor: CameraAnchor) -> dict:
    return {
        "id": anchor.id,
        "position": [float(x) for x in anchor.pose.position],
        "yaw": anchor.pose.yaw,
        "pitch": anchor.pose.pitch,
        "roll": anchor.pose.roll,
        "label": anchor.label,
    }


def sidecar_path(scene_path: str) -> str:
    return os.path.join(os.path.dirname(os.path.abspath(scene_path)), "anchors.json")


def save_anchors(path: str, anchors: list[CameraAnchor]) -> None:
    """Atomically persist anchors (write to temp file, then rename)."""
    payload = canonical_json({"anchors": [anchor_to_dict(a) for a in anchors]})
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".anchors-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(doc) -> str:
    """Stable serialization used for scene files, anchors and manifests."""
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def load_scene(path: str) -> Scene:
    """Load and fully resolve a scene file (meshes, materials, anchors)."""
    if not os.path.exists(path):
        raise SceneLoadError(f"scene file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base_dir = os.path.dirname(os.path.abspath(path))

    materials_by_name = {
        name: _parse_material(spec, base_dir) for name, spec in doc.get("materials", {}).items()
    }

    meshes: list[TriMesh] = []
    mesh_materials: list[Material] = []
    for entry in doc.get("meshes", []):
        mesh_file = os.path.join(base_dir, entry["path"])
        if not os.path.exists(mesh_file):
            raise SceneLoadError(f"mesh not found: {entry['path']}")
        meshes.append(load_obj(mesh_file))
        mat_name = entry.get("material")
        if mat_name is None:
            mesh_materials.append(Material())
        elif mat_name in materials_by_name:
            mesh_materials.append(materials_by_name[mat_name])
        else:
            raise ValidationError(f"unknown material: {mat_name}")

    lights = [_parse_light(spec) for spec in doc.get("lights", [])]
    fog_spec = doc.get("fog", {})
    fog = FogSettings(
        density=float(fog_spec.get("density", 0.0)),
        color=tuple(fog_spec.get("color", (0.7, 0.75, 0.8))),
    )

    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side, "r", encoding="utf-8") as fh:
            anchor_specs = json.load(fh).get("anchors", [])
    else:
        anchor_specs = doc.get("anchors", [])
    anchors = [parse_anchor(spec) for spec in anchor_specs]

    return Scene(
        scene_id=str(doc.get("id", os.path.splitext(os.path.basename(path))[0])),
        meshes=meshes,
        materials=mesh_materials,
        lights=lights,
        fog=fog,
        anchors=anchors,
        z_max=float(doc.get("z_max", DEFAULT_Z_MAX)),
        doc=doc,
        path=os.path.abspath(path),
    )
