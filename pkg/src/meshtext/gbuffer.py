"""Per-view render pass: RGB, float + quantized depth, surface normals.

One primary ray per pixel through the pixel center (pixel (i, j) maps to
continuous coordinate (i + 0.5, j + 0.5)). Shading is ambient plus
Lambertian diffuse, scaled by the illumination preset multiplier, then fog
blended with exp(-density * depth). Depth is camera-space z. Rendering is
deterministic: identical inputs produce bit-identical buffers.

The same pass composites text decals (alpha-blended textured meshes) for
the sample renderer; a scene-only pass is what fills a GBuffer.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .camera import CameraIntrinsics, CameraPose
from .geometry import AccelIndex
from .kernels import INTERSECT_EPS
from .scene import FogSettings, IlluminationPreset, Scene

DEPTH_LEVELS = 1024
MAX_BLEND_LAYERS = 8
INK_ALPHA = 0.5  # alpha at or above which a decal texel counts as text ink


@dataclass
class GBuffer:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth_f: np.ndarray  # (H, W) float64, +inf where no hit
    depth_q: np.ndarray  # (H, W) int32 in [0, 1024)
    normal_f: np.ndarray  # (H, W, 3) float64, zeros where no hit
    normal_8: np.ndarray  # (H, W, 3) uint8
    hit_mask: np.ndarray  # (H, W) bool

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


def quantize_depth(depth_f, z_max: float):
    """Map depth to an integer in [0, 1024); infinity hits the 1023 sentinel."""
    if z_max <= 0:
        raise ValueError("z_max must be > 0")
    d = np.asarray(depth_f, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("depth must be >= 0")
    q = np.floor(np.clip(d / z_max, 0.0, 1.0 - 1e-9) * DEPTH_LEVELS).astype(np.int32)
    if q.ndim == 0:
        return int(q)
    return q


def dequantize_depth(depth_q, z_max: float):
    """Lower edge of the quantization bin; error relative to the true depth
    spans [0, z_max/1024), which is what ray-cast refinement corrects."""
    return np.asarray(depth_q, dtype=np.float64) * (z_max / DEPTH_LEVELS)


def encode_normals(normal_f: np.ndarray) -> np.ndarray:
    """8-bit encoding round((n+1)/2 * 255), rounding half up."""
    return np.floor((np.asarray(normal_f) + 1.0) / 2.0 * 255.0 + 0.5).astype(np.uint8)


class RenderIndex:
    """Scene meshes plus text decals flattened for the render pass.

    Mesh order is scene meshes first, then one mesh per placed text; the
    decal triangles participate in occlusion exactly like scene geometry.
    """

    def __init__(self, scene: Scene, placed_texts=()):
        self.scene = scene
        self.placed = tuple(placed_texts)
        meshes = list(scene.meshes) + [p.mesh for p in self.placed]
        self.accel = AccelIndex(meshes)
        self.n_scene = len(scene.meshes)

        m = len(meshes)
        self.albedo = np.ones((m, 3), dtype=np.float64)
        self.ambient = np.ones(m, dtype=np.float64)
        self.diffuse = np.ones(m, dtype=np.float64)
        self.tex_id = np.full(m, -1, dtype=np.int32)
        self.is_decal = np.zeros(m, dtype=bool)
        self.textures: list[np.ndarray] = []  # (H, W, 4) float, premultiplied
        self.word_id_maps: list[np.ndarray | None] = []

        for i, mat in enumerate(scene.materials):
            self.albedo[i] = mat.albedo
            self.ambient[i] = mat.ambient
            self.diffuse[i] = mat.diffuse
            if mat.texture is not None:
                self.tex_id[i] = len(self.textures)
                rgba = np.ones(mat.texture.shape[:2] + (4,), dtype=np.float64)
                rgba[..., :3] = mat.texture
                self.textures.append(rgba)
                self.word_id_maps.append(None)
        for j, placed in enumerate(self.placed):
            mi = self.n_scene + j
            self.is_decal[mi] = True
            self.tex_id[mi] = len(self.textures)
            self.textures.append(placed.texture.premultiplied_f())
            self.word_id_maps.append(placed.texture.word_id_map())


def build_render_index(scene: Scene, placed_texts=()) -> RenderIndex:
    if not placed_texts:
        cached = getattr(scene, "_render_index", None)
        if cached is None:
            cached = RenderIndex(scene, ())
            scene._render_index = cached
        return cached
    return RenderIndex(scene, placed_texts)


def _pixel_rays(intrinsics: CameraIntrinsics, pose: CameraPose):
    """World-space unit directions through every pixel center, row major.

    Returns (dirs (H*W, 3), z_factor (H*W,)) where depth = t * z_factor.
    """
    w, h = intrinsics.width, intrinsics.height
    xs = (np.arange(w, dtype=np.float64) + 0.5 - intrinsics.cx) / intrinsics.fx
    ys = (np.arange(h, dtype=np.float64) + 0.5 - intrinsics.cy) / intrinsics.fy
    gx, gy = np.meshgrid(xs, ys)
    cam = np.stack([gx.ravel(), gy.ravel(), np.ones(w * h)], axis=1)
    world = cam @ pose.rotation().T
    norms = np.linalg.norm(world, axis=1, keepdims=True)
    dirs = world / norms
    return dirs, 1.0 / norms.ravel()


def _sample_textures(index: RenderIndex, tex_ids, uvs):
    """Nearest-texel RGBA lookup; v runs bottom-up (v=0 is the last row)."""
    n = len(tex_ids)
    rgba = np.zeros((n, 4), dtype=np.float64)
    for tid in np.unique(tex_ids):
        if tid < 0:
            continue
        tex = index.textures[tid]
        sel = tex_ids == tid
        th, tw = tex.shape[:2]
        cols = np.clip(np.floor(uvs[sel, 0] * tw).astype(np.int64), 0, tw - 1)
        rows = np.clip(np.floor((1.0 - uvs[sel, 1]) * th).astype(np.int64), 0, th - 1)
        rgba[sel] = tex[rows, cols]
    return rgba


def _shade(index: RenderIndex, preset: IlluminationPreset, points, normals, dirs, tris):
    """Linear (pre-clamp) radiance and alpha for a batch of hits."""
    flat = index.accel.flat
    mesh_ids = flat.mesh_id[tris]

    # Two-sided shading: orient the normal against the viewing direction.
    facing = np.einsum("nd,nd->n", normals, dirs)
    n_shade = np.where(facing[:, None] > 0, -normals, normals)

    albedo = index.albedo[mesh_ids].copy()
    alpha = np.ones(len(tris), dtype=np.float64)
    tex_ids = index.tex_id[mesh_ids]
    textured = tex_ids >= 0
    if np.any(textured):
        bary_u, bary_v = points["u"], points["v"]
        w0 = 1.0 - bary_u - bary_v
        uvs = np.einsum(
            "nk,nkd->nd",
            np.stack([w0, bary_u, bary_v], axis=1)[textured],
            flat.corner_uvs[tris[textured]],
        )
        rgba = _sample_textures(index, tex_ids[textured], uvs)
        albedo[textured] = rgba[:, :3]
        alpha[textured] = rgba[:, 3]

    ambient_sum = np.zeros(3)
    for light in index.scene.lights:
        if light.kind == "ambient":
            ambient_sum += np.asarray(light.color) * light.intensity
    diffuse = np.zeros((len(tris), 3), dtype=np.float64)
    p = points["p"]
    for light in index.scene.lights:
        if light.kind == "directional":
            lam = np.maximum(0.0, -(n_shade @ light.direction))
            diffuse += lam[:, None] * (np.asarray(light.color) * light.intensity)
        elif light.kind == "point":
            to_light = light.position[None, :] - p
            dist = np.linalg.norm(to_light, axis=1, keepdims=True)
            wi = to_light / np.maximum(dist, 1e-12)
            lam = np.maximum(0.0, np.einsum("nd,nd->n", n_shade, wi))
            diffuse += lam[:, None] * (np.asarray(light.color) * light.intensity)

    mesh_ambient = index.ambient[mesh_ids][:, None]
    mesh_diffuse = index.diffuse[mesh_ids][:, None]
    light_term = mesh_ambient * ambient_sum[None, :] + mesh_diffuse * diffuse
    return albedo * light_term * preset.multiplier, alpha


def render_pass(index: RenderIndex, pose: CameraPose, intrinsics: CameraIntrinsics, preset: IlluminationPreset):
    """Full alpha-composited render. Returns (rgb uint8 (H,W,3), first-hit
    dict with keys t/tri/u/v as flat arrays)."""
    if intrinsics.width <= 0 or intrinsics.height <= 0:
        raise ValueError("image must have positive area")
    fog: FogSettings = preset.fog if preset.fog is not None else index.scene.fog
    h, w = intrinsics.height, intrinsics.width
    n = h * w
    dirs, z_factor = _pixel_rays(intrinsics, pose)
    origins = np.broadcast_to(pose.position, (n, 3))
    fog_color = np.asarray(fog.color, dtype=np.float64)
    background = fog_color if fog.density > 0 else np.zeros(3)

    accum = np.zeros((n, 3), dtype=np.float64)
    transmit = np.ones(n, dtype=np.float64)
    t_min = np.full(n, INTERSECT_EPS, dtype=np.float64)
    active = np.arange(n)
    first_hit = None

    for layer in range(MAX_BLEND_LAYERS + 1):
        t, tri, bu, bv = index.accel.raycast_batch(origins[active], dirs[active], t_min[active])
        if layer == 0:
            first_hit = {
                "t": t.copy(),
                "tri": tri.copy(),
                "u": bu.copy(),
                "v": bv.copy(),
                "z_factor": z_factor,
            }
        miss = tri < 0
        if np.any(miss):
            rows = active[miss]
            accum[rows] += transmit[rows, None] * background[None, :]
            transmit[rows] = 0.0
        hit = ~miss
        if not np.any(hit):
            break
        rows = active[hit]
        ht, htri = t[hit], tri[hit]
        hu, hv = bu[hit], bv[hit]
        pts = origins[rows] + ht[:, None] * dirs[rows]
        flat = index.accel.flat
        w0 = 1.0 - hu - hv
        normals = np.einsum(
            "nk,nkd->nd", np.stack([w0, hu, hv], axis=1), flat.corner_normals[htri]
        )
        normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-12)
        shaded, alpha = _shade(
            index, preset, {"p": pts, "u": hu, "v": hv}, normals, dirs[rows], htri
        )
        if layer == MAX_BLEND_LAYERS:
            alpha = np.ones_like(alpha)  # depth-complexity cap: treat as opaque
        depth = ht * z_factor[rows]
        fog_f = np.exp(-fog.density * depth) if fog.density > 0 else np.ones_like(depth)
        accum[rows] += transmit[rows, None] * (
            fog_f[:, None] * shaded + ((1.0 - fog_f) * alpha)[:, None] * fog_color[None, :]
        )
        transmit[rows] *= 1.0 - alpha

        keep = transmit[rows] > 1e-4
        if not np.any(keep):
            break
        active = rows[keep]
        t_min[active] = ht[keep] + INTERSECT_EPS

    rgb = np.clip(accum, 0.0, 1.0).reshape(h, w, 3)
    rgb8 = np.floor(rgb * 255.0 + 0.5).astype(np.uint8)
    return rgb8, first_hit


def render_gbuffer(
    scene: Scene,
    pose: CameraPose,
    intrinsics: CameraIntrinsics,
    preset: IlluminationPreset,
    index: RenderIndex | None = None,
) -> GBuffer:
    """Render the scene (no decals) from a pose into a full G-buffer."""
    if index is None:
        index = build_render_index(scene)
    rgb, first = render_pass(index, pose, intrinsics, preset)
    h, w = intrinsics.height, intrinsics.width

    tri = first["tri"]
    hit = tri >= 0
    depth_f = np.full(h * w, np.inf, dtype=np.float64)
    depth_f[hit] = first["t"][hit] * first["z_factor"][hit]
    normal_f = np.zeros((h * w, 3), dtype=np.float64)
    if np.any(hit):
        flat = index.accel.flat
        u, v = first["u"][hit], first["v"][hit]
        w0 = 1.0 - u - v
        nrm = np.einsum(
            "nk,nkd->nd", np.stack([w0, u, v], axis=1), flat.corner_normals[tri[hit]]
        )
        nrm /= np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-12)
        normal_f[hit] = nrm

    return GBuffer(
        rgb=rgb,
        depth_f=depth_f.reshape(h, w),
        depth_q=quantize_depth(depth_f, scene.z_max).reshape(h, w),
        normal_f=normal_f.reshape(h, w, 3),
        normal_8=encode_normals(normal_f.reshape(h, w, 3)),
        hit_mask=hit.reshape(h, w),
    )


def render_word_ids(index: RenderIndex, pose: CameraPose, intrinsics: CameraIntrinsics):
    """Per-pixel (placed-text index, word index), -1 where no text ink shows.

    A decal texel counts as ink when its alpha is at least INK_ALPHA; rays
    continue through transparent decal texels just like the color pass.
    """
    h, w = intrinsics.height, intrinsics.width
    n = h * w
    dirs, _ = _pixel_rays(intrinsics, pose)
    origins = np.broadcast_to(pose.position, (n, 3))
    out_text = np.full(n, -1, dtype=np.int32)
    out_word = np.full(n, -1, dtype=np.int32)
    t_min = np.full(n, INTERSECT_EPS, dtype=np.float64)
    active = np.arange(n)
    flat = index.accel.flat

    for _ in range(MAX_BLEND_LAYERS + 1):
        t, tri, bu, bv = index.accel.raycast_batch(origins[active], dirs[active], t_min[active])
        hit = tri >= 0
        rows = active[hit]
        if len(rows) == 0:
            break
        htri = tri[hit]
        mesh_ids = flat.mesh_id[htri]
        decal = index.is_decal[mesh_ids]
        # Opaque scene hits terminate their rays; decal hits look up ink.
        continue_rows = []
        if np.any(decal):
            drows = rows[decal]
            dtri = htri[decal]
            du, dv = bu[hit][decal], bv[hit][decal]
            w0 = 1.0 - du - dv
            uvs = np.einsum(
                "nk,nkd->nd", np.stack([w0, du, dv], axis=1), flat.corner_uvs[dtri]
            )
            tex_ids = index.tex_id[mesh_ids[decal]]
            rgba = _sample_textures(index, tex_ids, uvs)
            ink = rgba[:, 3] >= INK_ALPHA
            for k in np.nonzero(ink)[0]:
                tid = int(tex_ids[k])
                wmap = index.word_id_maps[tid]
                if wmap is None:
                    continue
                th, tw = wmap.shape
                col = min(max(int(uvs[k, 0] * tw), 0), tw - 1)
                row = min(max(int((1.0 - uvs[k, 1]) * th), 0), th - 1)
                wid = int(wmap[row, col])
                if wid >= 0:
                    out_text[drows[k]] = int(mesh_ids[decal][k]) - index.n_scene
                    out_word[drows[k]] = wid
            passthrough = ~ink
            if np.any(passthrough):
                cont = drows[passthrough]
                t_min[cont] = t[hit][decal][passthrough] + INTERSECT_EPS
                continue_rows.append(cont)
        if not continue_rows:
            break
        active = np.concatenate(continue_rows)

    return out_text.reshape(h, w), out_word.reshape(h, w)


def dump_gbuffer(gb: GBuffer, out_dir: str, prefix: str = "gbuffer") -> None:
    os.makedirs(out_dir, exist_ok=True)
    Image.fromarray(gb.rgb, mode="RGB").save(os.path.join(out_dir, f"{prefix}_rgb.png"))
    Image.fromarray(gb.normal_8, mode="RGB").save(os.path.join(out_dir, f"{prefix}_normal.png"))
    depth16 = (gb.depth_q.astype(np.uint32) * 64).astype(np.uint16)  # spread 0..1023 over 16 bits
    Image.fromarray(depth16, mode="I;16").save(os.path.join(out_dir, f"{prefix}_depth.png"))
