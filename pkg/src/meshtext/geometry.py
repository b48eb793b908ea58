"""Triangle-mesh geometry kernel: meshes, rays, a BVH index, surface queries.

Conventions: right-handed world coordinates in scene units (meters), float64
throughout. A RayHit's barycentric coordinates (u, v, w) weight the triangle
corners (v0, v1, v2) in order, so point = u*v0 + v*v1 + w*v2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateGeometryError, EmptySceneError, ValidationError
from .kernels import INTERSECT_EPS

UNIT_TOL = 1e-6
MIN_TRIANGLE_AREA = 1e-12


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def normalize(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


@dataclass(frozen=True)
class Ray:
    """Half-line with a unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if not np.all(np.isfinite(o)) or not np.all(np.isfinite(d)):
            raise ValidationError("ray components must be finite")
        if abs(np.linalg.norm(d) - 1.0) > UNIT_TOL:
            raise ValidationError("ray direction must be unit length")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class RayHit:
    """Nearest intersection along a ray."""

    t: float
    point: np.ndarray
    normal: np.ndarray  # geometric (face) normal, as authored
    mesh_id: int
    triangle_id: int
    bary: tuple[float, float, float]


class TriMesh:
    """Indexed triangle mesh with per-vertex normals and optional texcoords.

    Vertices shared between faces with different normals must be duplicated
    (GL-style), which the OBJ loader and procedural generators do.
    """

    def __init__(self, vertices, triangles, vertex_normals, texcoords=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int32)
        self.vertex_normals = np.ascontiguousarray(vertex_normals, dtype=np.float64)
        self.texcoords = (
            None if texcoords is None else np.ascontiguousarray(texcoords, dtype=np.float64)
        )
        self.validate()

    def validate(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValidationError("vertices must be (V, 3)")
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("vertex coordinates must be finite")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValidationError("triangles must be (T, 3)")
        nv = len(self.vertices)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise ValidationError("triangle index out of range")
        if self.vertex_normals.shape != self.vertices.shape:
            raise ValidationError("vertex_normals must match vertices")
        norms = np.linalg.norm(self.vertex_normals, axis=1)
        if nv and np.any(np.abs(norms - 1.0) > 1e-4):
            raise ValidationError("vertex normals must be unit length")
        if self.texcoords is not None and self.texcoords.shape != (nv, 2):
            raise ValidationError("texcoords must be (V, 2)")
        v0 = self.vertices[self.triangles[:, 0]]
        e1 = self.vertices[self.triangles[:, 1]] - v0
        e2 = self.vertices[self.triangles[:, 2]] - v0
        areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
        if np.any(areas <= MIN_TRIANGLE_AREA):
            bad = int(np.argmax(areas <= MIN_TRIANGLE_AREA))
            raise DegenerateGeometryError(f"triangle {bad} has area <= {MIN_TRIANGLE_AREA}")

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)


def _triangle_area(v0, v1, v2) -> float:
    return 0.5 * float(np.linalg.norm(np.cross(v1 - v0, v2 - v0)))


def intersect_ray_triangle(ray: Ray, v0, v1, v2) -> RayHit | None:
    """Möller-Trumbore intersection against a single triangle.

    Hits on edges count; hits with t < INTERSECT_EPS do not.
    """
    v0 = np.asarray(v0, dtype=np.float64)
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if _triangle_area(v0, v1, v2) < MIN_TRIANGLE_AREA:
        raise DegenerateGeometryError("degenerate geometry: triangle area below threshold")

    e1 = v1 - v0
    e2 = v2 - v0
    p = np.cross(ray.direction, e2)
    det = float(np.dot(e1, p))
    if abs(det) < kernels.PARALLEL_EPS:
        return None
    inv_det = 1.0 / det
    tv = ray.origin - v0
    u = float(np.dot(tv, p)) * inv_det
    if u < 0.0 or u > 1.0:
        return None
    q = np.cross(tv, e1)
    v = float(np.dot(ray.direction, q)) * inv_det
    if v < 0.0 or u + v > 1.0:
        return None
    t = float(np.dot(e2, q)) * inv_det
    if t < INTERSECT_EPS:
        return None
    normal = normalize(np.cross(e1, e2))
    return RayHit(
        t=t,
        point=ray.at(t),
        normal=normal,
        mesh_id=-1,
        triangle_id=-1,
        bary=(1.0 - u - v, u, v),
    )


@dataclass
class _FlatScene:
    """All triangles of a mesh list flattened into kernel-ready arrays."""

    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    mesh_id: np.ndarray
    local_id: np.ndarray
    face_normal: np.ndarray
    corner_normals: np.ndarray  # (T, 3, 3)
    corner_uvs: np.ndarray  # (T, 3, 2); zeros when the mesh has no texcoords
    has_uv: np.ndarray  # (T,) bool


def _flatten(meshes: list[TriMesh]) -> _FlatScene:
    v0s, e1s, e2s, mids, lids, fns, cns, uvs, has = [], [], [], [], [], [], [], [], []
    for mi, mesh in enumerate(meshes):
        tris = mesh.triangles
        if len(tris) == 0:
            continue
        a = mesh.vertices[tris[:, 0]]
        b = mesh.vertices[tris[:, 1]]
        c = mesh.vertices[tris[:, 2]]
        v0s.append(a)
        e1s.append(b - a)
        e2s.append(c - a)
        mids.append(np.full(len(tris), mi, dtype=np.int32))
        lids.append(np.arange(len(tris), dtype=np.int32))
        fn = np.cross(b - a, c - a)
        fn /= np.linalg.norm(fn, axis=1, keepdims=True)
        fns.append(fn)
        cns.append(mesh.vertex_normals[tris])
        if mesh.texcoords is not None:
            uvs.append(mesh.texcoords[tris])
            has.append(np.ones(len(tris), dtype=bool))
        else:
            uvs.append(np.zeros((len(tris), 3, 2)))
            has.append(np.zeros(len(tris), dtype=bool))
    if not v0s:
        raise EmptySceneError("empty scene: no triangles to index")
    cat = lambda xs: np.ascontiguousarray(np.concatenate(xs, axis=0))
    return _FlatScene(
        v0=cat(v0s),
        e1=cat(e1s),
        e2=cat(e2s),
        mesh_id=cat(mids),
        local_id=cat(lids),
        face_normal=cat(fns),
        corner_normals=cat(cns),
        corner_uvs=cat(uvs),
        has_uv=cat(has),
    )


class AccelIndex:
    """BVH over every triangle of a list of meshes.

    Immutable after construction; queries are read-only and may run from
    any number of threads. Raycast results are identical to brute force
    over all triangles, with ties on t broken by (mesh id, triangle id).
    """

    def __init__(self, meshes: list[TriMesh]):
        if not meshes:
            raise EmptySceneError("empty scene: no meshes")
        self.meshes = list(meshes)
        self.flat = _flatten(self.meshes)
        (
            self.node_bbox_min,
            self.node_bbox_max,
            self.node_left,
            self.node_right,
            self.node_start,
            self.node_count,
            self.prim_order,
        ) = kernels.build_bvh_arrays(
            self.flat.v0, self.flat.v0 + self.flat.e1, self.flat.v0 + self.flat.e2
        )

    @property
    def triangle_count(self) -> int:
        return len(self.flat.v0)

    def raycast_batch(self, origins, dirs, t_min=INTERSECT_EPS):
        """Cast many rays; returns (t, tri, u, v) arrays.

        tri indexes the flat triangle arrays (-1 on miss); u/v are the
        barycentric weights of corners 1 and 2. t_min may be a scalar or a
        per-ray array.
        """
        origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        n = len(origins)
        t_mins = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,))
        t_mins = np.ascontiguousarray(t_mins)
        out_t = np.empty(n, dtype=np.float64)
        out_tri = np.empty(n, dtype=np.int64)
        out_u = np.empty(n, dtype=np.float64)
        out_v = np.empty(n, dtype=np.float64)
        kernels.raycast_kernel(
            self.node_bbox_min,
            self.node_bbox_max,
            self.node_left,
            self.node_right,
            self.node_start,
            self.node_count,
            self.prim_order,
            self.flat.v0,
            self.flat.e1,
            self.flat.e2,
            self.flat.mesh_id,
            self.flat.local_id,
            origins,
            dirs,
            t_mins,
            out_t,
            out_tri,
            out_u,
            out_v,
        )
        return out_t, out_tri, out_u, out_v

    def raycast(self, ray: Ray) -> RayHit | None:
        """Globally nearest hit with t >= INTERSECT_EPS, or None."""
        t, tri, u, v = self.raycast_batch(ray.origin[None, :], ray.direction[None, :])
        if tri[0] < 0:
            return None
        ti = int(tri[0])
        uu, vv = float(u[0]), float(v[0])
        return RayHit(
            t=float(t[0]),
            point=ray.at(float(t[0])),
            normal=self.flat.face_normal[ti].copy(),
            mesh_id=int(self.flat.mesh_id[ti]),
            triangle_id=int(self.flat.local_id[ti]),
            bary=(1.0 - uu - vv, uu, vv),
        )

    def closest_point_batch(self, queries, max_dist: float):
        """Closest surface points; returns (point, dist, tri) with tri=-1
        where no surface lies within max_dist."""
        queries = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(queries)
        out_point = np.empty((n, 3), dtype=np.float64)
        out_dist = np.empty(n, dtype=np.float64)
        out_tri = np.empty(n, dtype=np.int64)
        kernels.closest_point_kernel(
            self.node_bbox_min,
            self.node_bbox_max,
            self.node_left,
            self.node_right,
            self.node_start,
            self.node_count,
            self.prim_order,
            self.flat.v0,
            self.flat.e1,
            self.flat.e2,
            queries,
            float(max_dist),
            out_point,
            out_dist,
            out_tri,
        )
        return out_point, out_dist, out_tri

    def closest_point(self, query, max_dist: float):
        """(point, distance) minimizing distance to query, or None."""
        if max_dist <= 0:
            raise ValueError("max_dist must be > 0")
        point, dist, tri = self.closest_point_batch(np.asarray(query)[None, :], max_dist)
        if tri[0] < 0:
            return None
        return point[0].copy(), float(dist[0])


def build_accel(meshes: list[TriMesh]) -> AccelIndex:
    return AccelIndex(meshes)


def raycast(index: AccelIndex, ray: Ray) -> RayHit | None:
    return index.raycast(ray)


def closest_surface_point(index: AccelIndex, query, max_dist: float):
    return index.closest_point(query, max_dist)
