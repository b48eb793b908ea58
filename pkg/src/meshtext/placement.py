"""Lifting 2D regions into the world and conforming text planes to surfaces.

A lifted quad gets an orthogonal in-plane frame: u is the horizontal
reading direction (projection of world-up crossed with the surface normal)
and v is the in-plane projection of world up, so u x v points along the
outward (camera-facing) normal. Texture v therefore runs bottom-up, matching
OBJ texture convention; the renderer samples texture row (1 - v) * H.

Decal meshes keep their pre-offset vertex positions so surface-distance
checks can run against the geometry the vertices were snapped to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, CameraPose, unproject
from .errors import DegenerateGeometryError
from .gbuffer import GBuffer, dequantize_depth
from .geometry import AccelIndex, Ray, TriMesh, normalize
from .regions import TextRegion2D
from .textgen import TextTexture

EPS_O = 1e-3  # decal offset above the surface, scene units
EPS_S = 1e-3  # surface-distance tolerance, scene units
DECAL_OFFSET = 2 * EPS_O
DEFAULT_GRID = (16, 8)
SNAP_DIST_FRAC = 0.1  # closest-point search radius as a fraction of the diagonal
CLIP_STEP = 0.02  # rectification side-clip step, fraction of the extent
CLIP_MAX_ITERS = 50


@dataclass(frozen=True)
class Quad3D:
    """Lifted region corners in top-left, top-right, bottom-right,
    bottom-left order, plus the mean surface normal (camera-facing)."""

    corners: np.ndarray  # (4, 3)
    normal: np.ndarray  # unit

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=np.float64)
        n = np.asarray(self.normal, dtype=np.float64)
        if c.shape != (4, 3):
            raise ValueError("quad needs exactly 4 corners")
        if abs(np.linalg.norm(n) - 1.0) > 1e-6:
            raise ValueError("quad normal must be unit length")
        e1 = c[1] - c[0]
        e2 = c[3] - c[0]
        if np.linalg.norm(np.cross(e1, e2)) < 1e-12:
            raise DegenerateGeometryError("quad corners are collinear")
        object.__setattr__(self, "corners", c)
        object.__setattr__(self, "normal", n)

    @property
    def centroid(self) -> np.ndarray:
        return self.corners.mean(axis=0)


@dataclass(frozen=True)
class Rect3D:
    """Oriented rectangle: origin corner plus full-length edge vectors.

    u is the text reading direction; v spans the in-plane vertical with
    u x v pointing along the outward surface normal.
    """

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        lu, lv = np.linalg.norm(u), np.linalg.norm(v)
        if lu <= 0 or lv <= 0:
            raise ValueError("rect edges must have positive length")
        if abs(float(np.dot(u, v))) / (lu * lv) > 1e-4:
            raise ValueError("rect edges must be orthogonal")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def normal(self) -> np.ndarray:
        return normalize(np.cross(self.u, self.v))

    @property
    def width(self) -> float:
        return float(np.linalg.norm(self.u))

    @property
    def height(self) -> float:
        return float(np.linalg.norm(self.v))

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    def corners(self) -> np.ndarray:
        return np.stack(
            [self.origin, self.origin + self.u, self.origin + self.u + self.v, self.origin + self.v]
        )


def refine_point(coarse: np.ndarray, camera_position: np.ndarray, accel: AccelIndex):
    """Snap a coarse (quantized-depth) point onto true geometry by casting
    the camera ray through it; None when nothing is hit within twice the
    coarse distance."""
    coarse = np.asarray(coarse, dtype=np.float64)
    camera_position = np.asarray(camera_position, dtype=np.float64)
    delta = coarse - camera_position
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        raise ValueError("coarse point coincides with the camera position")
    hit = accel.raycast(Ray(camera_position, delta / dist))
    if hit is None or hit.t > 2.0 * dist:
        return None
    return hit.point


def lift_region(
    region: TextRegion2D,
    gbuffer: GBuffer,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    accel: AccelIndex,
    z_max: float,
) -> Quad3D | None:
    """Unproject the region corners at their quantized depth, refine each by
    ray casting, and average the region's surface normals."""
    h, w = gbuffer.depth_q.shape
    if region.x2 > w or region.y2 > h:
        return None
    corner_px = (
        (region.x1, region.y1),
        (region.x2 - 1, region.y1),
        (region.x2 - 1, region.y2 - 1),
        (region.x1, region.y2 - 1),
    )
    corners = []
    for px, py in corner_px:
        if not gbuffer.hit_mask[py, px]:
            return None
        coarse_depth = float(dequantize_depth(gbuffer.depth_q[py, px], z_max))
        coarse_depth = max(coarse_depth, 1e-6)
        coarse = unproject((px + 0.5, py + 0.5), coarse_depth, intrinsics, pose)
        refined = refine_point(coarse, pose.position, accel)
        if refined is None:
            return None
        corners.append(refined)

    mask = gbuffer.hit_mask[region.y1 : region.y2, region.x1 : region.x2]
    normals = gbuffer.normal_f[region.y1 : region.y2, region.x1 : region.x2][mask]
    mean = normals.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-9:
        return None
    mean /= norm
    corners = np.asarray(corners)
    if float(np.dot(mean, pose.position - corners.mean(axis=0))) < 0:
        mean = -mean
    try:
        return Quad3D(corners=corners, normal=mean)
    except DegenerateGeometryError:
        return None


def _point_in_polygon(pt: np.ndarray, poly: np.ndarray, tol: float) -> bool:
    """Inside-or-on test for a convex polygon with consistent winding."""
    n = len(poly)
    sign = 0.0
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        cross = (b[0] - a[0]) * (pt[1] - a[1]) - (b[1] - a[1]) * (pt[0] - a[0])
        if abs(cross) <= tol:
            continue
        if sign == 0.0:
            sign = cross
        elif cross * sign < 0:
            return False
    return True


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns CCW hull without repeated endpoint."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                a = out[-1] - out[-2]
                b = p - out[-2]
                if a[0] * b[1] - a[1] * b[0] > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


def rectify(quad: Quad3D, world_up: np.ndarray, camera_right: np.ndarray | None = None) -> Rect3D | None:
    """Largest u/v-aligned rectangle inscribed in the quad's plane projection.

    The frame uses world-up to fix a horizontal reading direction; on
    horizontal surfaces (normal parallel to up) the camera-right hint is
    projected onto the plane instead. Sides clip inward in 2% steps until
    all rectangle corners lie inside the projected quad.
    """
    n = quad.normal
    up = np.asarray(world_up, dtype=np.float64)
    u0 = np.cross(up, n)
    if np.linalg.norm(u0) < 1e-6:
        if camera_right is None:
            return None
        u0 = camera_right - n * float(np.dot(camera_right, n))
        if np.linalg.norm(u0) < 1e-6:
            return None
    u_hat = normalize(u0)
    v_hat = np.cross(n, u_hat)

    c = quad.centroid
    rel = quad.corners - c
    rel = rel - np.outer(rel @ n, n)  # project onto the plane
    pts2d = np.stack([rel @ u_hat, rel @ v_hat], axis=1)
    area2 = 0.0
    for i in range(4):
        a, b = pts2d[i], pts2d[(i + 1) % 4]
        area2 += a[0] * b[1] - a[1] * b[0]
    if abs(area2) / 2.0 < 1e-6:
        return None
    poly = _convex_hull(pts2d)
    if len(poly) < 3:
        return None

    xmin, ymin = pts2d.min(axis=0)
    xmax, ymax = pts2d.max(axis=0)
    step_x = CLIP_STEP * (xmax - xmin)
    step_y = CLIP_STEP * (ymax - ymin)
    tol = 1e-9 * max(xmax - xmin, ymax - ymin)

    for _ in range(CLIP_MAX_ITERS + 1):
        corners2d = np.array(
            [[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]]
        )
        outside = [not _point_in_polygon(p, poly, tol) for p in corners2d]
        if not any(outside):
            break
        if outside[0] or outside[3]:
            xmin += step_x
        if outside[1] or outside[2]:
            xmax -= step_x
        if outside[0] or outside[1]:
            ymin += step_y
        if outside[2] or outside[3]:
            ymax -= step_y
        if xmax - xmin <= 0 or ymax - ymin <= 0:
            return None
    else:
        return None

    origin = c + xmin * u_hat + ymin * v_hat
    return Rect3D(origin=origin, u=(xmax - xmin) * u_hat, v=(ymax - ymin) * v_hat)


class PlacedText:
    """Deformed, textured text decal plus the provenance of its placement."""

    def __init__(self, mesh, base_vertices, offset, texture, rect, grid, positions, s_frac, t_frac, region=None, anchor_id=""):
        self.mesh: TriMesh = mesh
        self.base_vertices: np.ndarray = base_vertices  # pre-offset positions
        self.offset: float = offset
        self.texture: TextTexture = texture
        self.rect: Rect3D = rect
        self.grid: tuple[int, int] = grid
        self.region: TextRegion2D | None = region
        self.anchor_id: str = anchor_id
        # (nv+1, nu+1, ...) grids backing the uv -> point inverse map
        self._P = positions
        self._S = s_frac
        self._T = t_frac

    @property
    def word_count(self) -> int:
        return len(self.texture.words)

    def points_at_uv(self, s: np.ndarray, t: np.ndarray):
        """Map texture-space (s, t) (v-up) to decal points and normals.

        Inverts the per-row/per-column arc-length parameterization; exact on
        uniform grids, linearly interpolated on deformed ones.
        """
        s = np.clip(np.atleast_1d(np.asarray(s, dtype=np.float64)), 0.0, 1.0)
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=np.float64)), 0.0, 1.0)
        nq = len(s)
        n_rows = self._P.shape[0]

        row_pts = np.empty((n_rows, nq, 3))
        row_t = np.empty((n_rows, nq))
        row_du = np.empty((n_rows, nq, 3))
        for j in range(n_rows):
            sj = self._S[j]
            idx = np.clip(np.searchsorted(sj, s, side="left"), 1, len(sj) - 1)
            denom = np.maximum(sj[idx] - sj[idx - 1], 1e-12)
            w = (s - sj[idx - 1]) / denom
            p_lo = self._P[j, idx - 1]
            p_hi = self._P[j, idx]
            row_pts[j] = p_lo + w[:, None] * (p_hi - p_lo)
            row_t[j] = self._T[j, idx - 1] + w * (self._T[j, idx] - self._T[j, idx - 1])
            row_du[j] = p_hi - p_lo

        cols = np.arange(nq)
        jj = np.clip((row_t <= t[None, :]).sum(axis=0) - 1, 0, n_rows - 2)
        t_lo = row_t[jj, cols]
        t_hi = row_t[jj + 1, cols]
        w2 = np.clip((t - t_lo) / np.maximum(t_hi - t_lo, 1e-12), 0.0, 1.0)
        p_lo = row_pts[jj, cols]
        p_hi = row_pts[jj + 1, cols]
        points = p_lo + w2[:, None] * (p_hi - p_lo)

        d_u = row_du[jj, cols]
        d_v = p_hi - p_lo
        normals = np.cross(d_u, d_v)
        lens = np.linalg.norm(normals, axis=1, keepdims=True)
        fallback = self.rect.normal
        small = lens[:, 0] < 1e-12
        normals = np.where(small[:, None], fallback[None, :], normals / np.maximum(lens, 1e-12))
        return points, normals

    def word_uv_box(self, word_index: int):
        return self.texture.word_uv_box(word_index)

    def word_boundary_points(self, word_index: int, per_edge: int = 8) -> np.ndarray:
        """3D polyline tracing the word's texture box on the decal surface."""
        u0, v0, u1, v1 = self.word_uv_box(word_index)
        f = np.linspace(0.0, 1.0, per_edge, endpoint=False)
        ss = np.concatenate([u0 + f * (u1 - u0), np.full_like(f, u1), u1 - f * (u1 - u0), np.full_like(f, u0)])
        tt = np.concatenate([np.full_like(f, v0), v0 + f * (v1 - v0), np.full_like(f, v1), v1 - f * (v1 - v0)])
        points, _ = self.points_at_uv(ss, tt)
        return points

    def sample_word_points(self, word_index: int, k: int = 64):
        """Stratified (s, t) samples over the word box, as points + normals."""
        side = max(1, int(round(np.sqrt(k))))
        u0, v0, u1, v1 = self.word_uv_box(word_index)
        f = (np.arange(side) + 0.5) / side
        gs, gt = np.meshgrid(u0 + f * (u1 - u0), v0 + f * (v1 - v0))
        return self.points_at_uv(gs.ravel(), gt.ravel())


def deform_text_mesh(
    rect: Rect3D,
    accel: AccelIndex,
    grid: tuple[int, int],
    texture: TextTexture,
    region: TextRegion2D | None = None,
    anchor_id: str = "",
) -> PlacedText:
    """Conform a (nu x nv)-cell text plane to the underlying geometry.

    Corner vertices stay exactly at the rect corners; every other vertex
    moves to the closest surface point within 10% of the rect diagonal
    (staying on the flat plane when nothing is that close). All vertices are
    then lifted 2 * EPS_O along their local surface normal so the decal
    never z-fights the geometry it decorates. Texture coordinates are
    per-row / per-column cumulative arc-length fractions.
    """
    nu, nv = grid
    if nu < 2 or nv < 2:
        raise ValueError("grid resolution must be at least 2x2")

    fu = np.arange(nu + 1) / nu
    fv = np.arange(nv + 1) / nv
    base = (
        rect.origin[None, None, :]
        + fu[None, :, None] * rect.u[None, None, :]
        + fv[:, None, None] * rect.v[None, None, :]
    )  # (nv+1, nu+1, 3)

    rect_n = rect.normal
    flat_pts = base.reshape(-1, 3)
    max_dist = SNAP_DIST_FRAC * rect.diagonal
    snapped, dists, tris = accel.closest_point_batch(flat_pts, max_dist)

    positions = flat_pts.copy()
    normals = np.tile(rect_n, (len(flat_pts), 1))
    found = tris >= 0
    if np.any(found):
        positions[found] = snapped[found]
        flat = accel.flat
        face_n = flat.face_normal[tris[found]]
        flip = (face_n @ rect_n) < 0
        face_n = np.where(flip[:, None], -face_n, face_n)
        normals[found] = face_n

    # Pin the four corners to the rect corners bitwise.
    shape = (nv + 1, nu + 1)
    corner_flat = [
        np.ravel_multi_index((0, 0), shape),
        np.ravel_multi_index((0, nu), shape),
        np.ravel_multi_index((nv, nu), shape),
        np.ravel_multi_index((nv, 0), shape),
    ]
    rect_corners = [rect.origin, rect.origin + rect.u, rect.origin + rect.u + rect.v, rect.origin + rect.v]
    for ci, corner in zip(corner_flat, rect_corners):
        positions[ci] = corner
        normals[ci] = rect_n

    base_vertices = positions.copy()
    positions = positions + DECAL_OFFSET * normals

    P = positions.reshape(nv + 1, nu + 1, 3)
    seg_u = np.linalg.norm(np.diff(P, axis=1), axis=2)  # (nv+1, nu)
    s_frac = np.zeros((nv + 1, nu + 1))
    np.cumsum(seg_u, axis=1, out=s_frac[:, 1:])
    s_frac /= np.maximum(s_frac[:, -1:], 1e-12)
    seg_v = np.linalg.norm(np.diff(P, axis=0), axis=2)  # (nv, nu+1)
    t_frac = np.zeros((nv + 1, nu + 1))
    np.cumsum(seg_v, axis=0, out=t_frac[1:, :])
    t_frac /= np.maximum(t_frac[-1:, :], 1e-12)

    texcoords = np.stack([s_frac.ravel(), t_frac.ravel()], axis=1)

    tris_out = []
    for j in range(nv):
        for i in range(nu):
            v00 = j * (nu + 1) + i
            v10 = j * (nu + 1) + i + 1
            v01 = (j + 1) * (nu + 1) + i
            v11 = (j + 1) * (nu + 1) + i + 1
            tris_out.append([v00, v10, v11])
            tris_out.append([v00, v11, v01])

    unit_normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    mesh = TriMesh(
        vertices=positions,
        triangles=np.asarray(tris_out, dtype=np.int32),
        vertex_normals=unit_normals,
        texcoords=texcoords,
    )
    return PlacedText(
        mesh=mesh,
        base_vertices=base_vertices,
        offset=DECAL_OFFSET,
        texture=texture,
        rect=rect,
        grid=(nu, nv),
        positions=P,
        s_frac=s_frac,
        t_frac=t_frac,
        region=region,
        anchor_id=anchor_id,
    )
