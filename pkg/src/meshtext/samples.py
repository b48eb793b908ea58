"""Rendering scene + text from perturbed viewpoints with word annotations.

Words are annotated with the minimum-area rotated rectangle of their
projected 3D boundary (rotating calipers over the convex hull, clipped to
the image first), a transcription, and a visibility fraction measured by
stratified sampling of the deformed word surface. Fully occluded words are
dropped; words below the keep threshold export with the ignore flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, CameraPose
from .gbuffer import RenderIndex, build_render_index, render_pass
from .kernels import INTERSECT_EPS
from .placement import EPS_S, PlacedText, _convex_hull
from .scene import CameraAnchor, IlluminationPreset, Scene


@dataclass(frozen=True)
class ViewpointRanges:
    radius: float = 0.5  # scene units around the anchor position
    max_angle_deg: float = 15.0  # yaw/pitch perturbation bound

    def __post_init__(self):
        if self.radius < 0 or self.max_angle_deg < 0:
            raise ValueError("viewpoint ranges must be non-negative")


@dataclass(frozen=True)
class AnnotationPolicy:
    keep_threshold: float = 0.3  # below this, words export as ignored
    visibility_samples: int = 64
    char_quads: bool = False
    boundary_samples_per_edge: int = 8


@dataclass
class WordAnnotation:
    quad: tuple[int, ...]  # x1,y1,...,y4 clockwise from top-left, image px
    transcription: str
    visibility: float
    ignore: bool
    char_quads: list[tuple[int, ...]] | None = None


@dataclass
class Sample:
    image: np.ndarray  # (H, W, 3) uint8
    annotations: list[WordAnnotation]
    anchor_id: str
    pose: CameraPose
    preset_name: str
    seed: int
    scene_id: str


def _uniform_ball(rng: np.random.Generator) -> np.ndarray:
    """Uniform direction * cube-root radius: uniform density in the unit ball."""
    v = rng.standard_normal(3)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        return np.zeros(3)
    return (v / norm) * rng.random() ** (1.0 / 3.0)


def sample_viewpoints(
    anchor: CameraAnchor,
    n: int,
    ranges: ViewpointRanges,
    rng: np.random.Generator,
    has_visible_words=None,
) -> list[CameraPose]:
    """n poses perturbed uniformly around the anchor.

    Positions move inside a sphere of `radius`; yaw/pitch shift within the
    angle bound. When a visibility predicate is given, poses that show no
    text are redrawn up to 10 times before falling back to the anchor pose.
    """
    if n < 1:
        raise ValueError("need at least one viewpoint")
    base = anchor.pose
    poses: list[CameraPose] = []
    for _ in range(n):
        chosen = None
        for _attempt in range(10):
            offset = _uniform_ball(rng) * ranges.radius
            dyaw = rng.uniform(-ranges.max_angle_deg, ranges.max_angle_deg)
            dpitch = rng.uniform(-ranges.max_angle_deg, ranges.max_angle_deg)
            pose = CameraPose(
                position=base.position + offset,
                yaw=base.yaw + dyaw,
                pitch=base.pitch + dpitch,
                roll=base.roll,
            )
            if has_visible_words is None or has_visible_words(pose):
                chosen = pose
                break
        poses.append(chosen if chosen is not None else base)
    return poses


def render_sample(
    scene: Scene,
    placed_texts,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    preset: IlluminationPreset,
    index: RenderIndex | None = None,
) -> np.ndarray:
    """Scene plus decals through the G-buffer shading pipeline; with no
    decals the output is bit-identical to the G-buffer RGB channel."""
    if index is None:
        index = build_render_index(scene, tuple(placed_texts))
    rgb, _ = render_pass(index, pose, intrinsics, preset)
    return rgb


def compute_visibility(
    placed: PlacedText,
    word_index: int,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    index: RenderIndex,
    k: int = 64,
) -> float:
    """Fraction of stratified word-surface samples that are in-image,
    camera-facing, and unoccluded (decal triangles included as occluders)."""
    points, normals = placed.sample_word_points(word_index, k)
    cam = pose.position
    n = len(points)
    if n == 0:
        return 0.0

    to_cam = cam[None, :] - points
    facing = np.einsum("nd,nd->n", normals, to_cam) > 0.0

    cam_pts = pose.world_to_camera(points)
    z = cam_pts[:, 2]
    in_front = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        px = intrinsics.fx * cam_pts[:, 0] / z + intrinsics.cx
        py = intrinsics.fy * cam_pts[:, 1] / z + intrinsics.cy
    in_image = in_front & (px >= 0) & (px < intrinsics.width) & (py >= 0) & (py < intrinsics.height)

    candidates = facing & in_image
    visible = np.zeros(n, dtype=bool)
    if np.any(candidates):
        idx = np.nonzero(candidates)[0]
        delta = points[idx] - cam[None, :]
        dist = np.linalg.norm(delta, axis=1)
        dirs = delta / dist[:, None]
        origins = np.broadcast_to(cam, (len(idx), 3))
        t, tri, _, _ = index.accel.raycast_batch(origins, dirs, INTERSECT_EPS)
        visible[idx] = (tri < 0) | (t >= dist - EPS_S)
    return float(np.count_nonzero(visible)) / float(n)


def _clip_polygon(poly: np.ndarray, width: float, height: float) -> np.ndarray:
    """Sutherland-Hodgman clip against the image rectangle [0,w]x[0,h]."""

    def clip_edge(points, inside, intersect):
        out: list[np.ndarray] = []
        m = len(points)
        for i in range(m):
            cur, nxt = points[i], points[(i + 1) % m]
            cur_in, nxt_in = inside(cur), inside(nxt)
            if cur_in:
                out.append(cur)
                if not nxt_in:
                    out.append(intersect(cur, nxt))
            elif nxt_in:
                out.append(intersect(cur, nxt))
        return out

    def lerp_at(a, b, t):
        return a + t * (b - a)

    pts = [p for p in np.asarray(poly, dtype=np.float64)]
    edges = [
        (lambda p: p[0] >= 0.0, lambda a, b: lerp_at(a, b, (0.0 - a[0]) / (b[0] - a[0]))),
        (lambda p: p[0] <= width, lambda a, b: lerp_at(a, b, (width - a[0]) / (b[0] - a[0]))),
        (lambda p: p[1] >= 0.0, lambda a, b: lerp_at(a, b, (0.0 - a[1]) / (b[1] - a[1]))),
        (lambda p: p[1] <= height, lambda a, b: lerp_at(a, b, (height - a[1]) / (b[1] - a[1]))),
    ]
    for inside, intersect in edges:
        if not pts:
            return np.zeros((0, 2))
        pts = clip_edge(pts, inside, intersect)
    return np.asarray(pts) if pts else np.zeros((0, 2))


def min_area_rect(hull: np.ndarray) -> np.ndarray:
    """Minimum-area enclosing rotated rectangle of a convex hull (rotating
    calipers); returns its 4 corners."""
    hull = np.asarray(hull, dtype=np.float64)
    m = len(hull)
    if m == 1:
        return np.tile(hull[0], (4, 1))
    if m == 2:
        return np.array([hull[0], hull[1], hull[1], hull[0]])
    best_area = np.inf
    best = None
    for i in range(m):
        edge = hull[(i + 1) % m] - hull[i]
        norm = np.linalg.norm(edge)
        if norm < 1e-12:
            continue
        ex, ey = edge / norm
        rot = np.array([[ex, ey], [-ey, ex]])
        local = (hull - hull[i]) @ rot.T
        lo = local.min(axis=0)
        hi = local.max(axis=0)
        area = (hi[0] - lo[0]) * (hi[1] - lo[1])
        if area < best_area:
            corners_local = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
            best = corners_local @ rot + hull[i]
            best_area = area
    return best if best is not None else np.tile(hull[0], (4, 1))


def order_quad_clockwise(corners: np.ndarray) -> np.ndarray:
    """Clockwise in image coordinates (y down), starting at the corner
    nearest the top-left."""
    c = np.asarray(corners, dtype=np.float64)
    centroid = c.mean(axis=0)
    angles = np.arctan2(c[:, 1] - centroid[1], c[:, 0] - centroid[0])
    order = np.argsort(angles, kind="stable")  # CCW in math coords = CW on screen... see below
    c = c[order]
    # Screen y grows downward, so ascending atan2 order is clockwise already.
    start = int(np.argmin(c[:, 0] + c[:, 1]))
    return np.roll(c, -start, axis=0)


def _project_points(points: np.ndarray, intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    cam = pose.world_to_camera(points)
    z = cam[:, 2]
    good = z > 1e-9
    out = np.empty((int(np.count_nonzero(good)), 2))
    out[:, 0] = intrinsics.fx * cam[good, 0] / z[good] + intrinsics.cx
    out[:, 1] = intrinsics.fy * cam[good, 1] / z[good] + intrinsics.cy
    return out


def _quad_to_ints(quad: np.ndarray, intrinsics: CameraIntrinsics) -> tuple[int, ...]:
    xs = np.clip(np.rint(quad[:, 0]), 0, intrinsics.width - 1).astype(int)
    ys = np.clip(np.rint(quad[:, 1]), 0, intrinsics.height - 1).astype(int)
    out: list[int] = []
    for x, y in zip(xs, ys):
        out.extend((int(x), int(y)))
    return tuple(out)


def annotate(
    placed_texts,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    index: RenderIndex,
    policy: AnnotationPolicy = AnnotationPolicy(),
) -> list[WordAnnotation]:
    """Per-word quads + transcriptions + visibility for one viewpoint.

    Words with zero visibility produce no annotation; visible words below
    the keep threshold (or containing replaced characters) are flagged
    ignore and export as '###'.
    """
    annotations: list[WordAnnotation] = []
    for placed in placed_texts:
        for wi, word in enumerate(placed.texture.words):
            if not word.text:
                continue
            visibility = compute_visibility(
                placed, wi, pose, intrinsics, index, k=policy.visibility_samples
            )
            if visibility <= 0.0:
                continue
            boundary = placed.word_boundary_points(wi, per_edge=policy.boundary_samples_per_edge)
            pts2d = _project_points(boundary, intrinsics, pose)
            if len(pts2d) < 3:
                continue
            hull = _convex_hull(pts2d)
            if len(hull) < 3:
                continue
            clipped = _clip_polygon(hull, intrinsics.width, intrinsics.height)
            if len(clipped) < 3:
                continue
            quad = order_quad_clockwise(min_area_rect(_convex_hull(clipped)))
            char_quads = None
            if policy.char_quads:
                char_quads = []
                u0, v0, u1, v1 = placed.word_uv_box(wi)
                x0w, y0w, x1w, y1w = word.box
                tex_w, tex_h = placed.texture.width, placed.texture.height
                for cb in word.char_boxes:
                    cs = np.array([cb[0], cb[2], cb[2], cb[0]]) / tex_w
                    ct = 1.0 - np.array([cb[3], cb[3], cb[1], cb[1]]) / tex_h
                    cpts, _ = placed.points_at_uv(cs, ct)
                    c2d = _project_points(cpts, intrinsics, pose)
                    if len(c2d) == 4:
                        char_quads.append(_quad_to_ints(order_quad_clockwise(c2d), intrinsics))
            ignore = visibility < policy.keep_threshold or not word.clean
            annotations.append(
                WordAnnotation(
                    quad=_quad_to_ints(quad, intrinsics),
                    transcription=word.text,
                    visibility=visibility,
                    ignore=ignore,
                    char_quads=char_quads,
                )
            )
    return annotations
