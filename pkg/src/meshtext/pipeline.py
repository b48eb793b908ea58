"""End-to-end dataset generation: config, orchestration, exports, manifest.

Randomness is content-addressed: every stage derives its generator from
(master seed, scene id, anchor id, ...) through a stable hash, so adding a
scene or anchor never perturbs the output of the others. Two runs with the
same config and seed produce byte-identical images, annotations, and
manifest.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import __version__
from .camera import CameraIntrinsics
from .errors import ConfigError
from .gbuffer import build_render_index, dump_gbuffer, render_gbuffer
from .placement import DEFAULT_GRID, deform_text_mesh, lift_region, rectify
from .regions import NormalBoundaryMap, ProposalConfig, compute_boundary_map, propose_regions
from .samples import (
    AnnotationPolicy,
    Sample,
    ViewpointRanges,
    annotate,
    compute_visibility,
    render_sample,
    sample_viewpoints,
)
from .scene import (
    FogSettings,
    IlluminationPreset,
    Scene,
    canonical_json,
    default_presets,
    load_scene,
)
from .textgen import (
    STRUCTURES,
    Corpus,
    RegionTooSmallError,
    TextStyle,
    load_fonts,
    pick_text_color,
    rasterize_text,
    sample_text,
)

logger = logging.getLogger("meshtext")

WORLD_UP = np.array([0.0, 0.0, 1.0])


def stable_key(*parts) -> int:
    """64-bit content hash; stable across runs, platforms, and processes."""
    text = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def derive_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(stable_key(*parts))


@dataclass
class PipelineConfig:
    scene_paths: list[str]
    corpus_path: str
    fonts_dir: str
    output_dir: str
    master_seed: int = 7
    samples_per_anchor: int = 20
    regions_per_view: tuple[int, int] = (2, 6)
    preset_names: tuple[str, ...] = ("normal", "bright", "dark", "fog")
    intrinsics: CameraIntrinsics = field(
        default_factory=lambda: CameraIntrinsics(1000.0, 1000.0, 360.0, 540.0, 720, 1080)
    )
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    viewpoint: ViewpointRanges = field(default_factory=ViewpointRanges)
    annotation: AnnotationPolicy = field(default_factory=AnnotationPolicy)
    grid: tuple[int, int] = DEFAULT_GRID
    preset_params: dict = field(default_factory=dict)
    doc: dict | None = None  # raw config JSON, basis of the manifest digest

    def validate(self):
        if self.samples_per_anchor < 1:
            raise ConfigError("samples_per_anchor must be >= 1")
        if not (0 <= self.master_seed < 2**64):
            raise ConfigError("master_seed must fit in 64 bits")
        lo, hi = self.regions_per_view
        if not (1 <= lo <= hi):
            raise ConfigError("regions_per_view must be an increasing range from >= 1")
        if not self.scene_paths:
            raise ConfigError("no scenes configured")
        for path in self.scene_paths:
            if not os.path.exists(path):
                raise ConfigError(f"scene file not found: {path}")
        if not os.path.exists(self.corpus_path):
            raise ConfigError(f"corpus file not found: {self.corpus_path}")
        if not os.path.isdir(self.fonts_dir):
            raise ConfigError(f"fonts directory not found: {self.fonts_dir}")
        known = set(default_presets())
        unknown = set(self.preset_names) - known
        if unknown:
            raise ConfigError(f"unknown presets: {sorted(unknown)}")
        if not self.preset_names:
            raise ConfigError("at least one preset must be enabled")

    def presets(self) -> dict[str, IlluminationPreset]:
        params = self.preset_params
        presets = {
            "normal": IlluminationPreset("normal", 1.0),
            "bright": IlluminationPreset("bright", float(params.get("bright_multiplier", 2.0))),
            "dark": IlluminationPreset("dark", float(params.get("dark_multiplier", 0.35))),
            "fog": IlluminationPreset(
                "fog",
                1.0,
                FogSettings(
                    density=float(params.get("fog_density", 0.08)),
                    color=tuple(params.get("fog_color", (0.75, 0.78, 0.8))),
                ),
            ),
        }
        return presets


def load_config(path: str, seed_override: int | None = None) -> PipelineConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if seed_override is not None:
        doc["master_seed"] = int(seed_override)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    intr = doc.get("intrinsics", {})
    prop = doc.get("proposal", {})
    view = doc.get("viewpoint", {})
    ann = doc.get("annotation", {})
    config = PipelineConfig(
        scene_paths=[resolve(p) for p in doc.get("scenes", [])],
        corpus_path=resolve(doc.get("corpus", "corpus.txt")),
        fonts_dir=resolve(doc.get("fonts_dir", "fonts")),
        output_dir=resolve(doc.get("output_dir", "dataset")),
        master_seed=int(doc.get("master_seed", 7)),
        samples_per_anchor=int(doc.get("samples_per_anchor", 20)),
        regions_per_view=tuple(doc.get("regions_per_view", (2, 6))),
        preset_names=tuple(doc.get("presets", ("normal", "bright", "dark", "fog"))),
        intrinsics=CameraIntrinsics(
            fx=float(intr.get("fx", 1000.0)),
            fy=float(intr.get("fy", 1000.0)),
            cx=float(intr.get("cx", intr.get("width", 720) / 2)),
            cy=float(intr.get("cy", intr.get("height", 1080) / 2)),
            width=int(intr.get("width", 720)),
            height=int(intr.get("height", 1080)),
        ),
        proposal=ProposalConfig(
            threshold=int(prop.get("threshold", 100)),
            min_width=int(prop.get("min_width", 96)),
            min_height=int(prop.get("min_height", 64)),
            strides=tuple(prop.get("strides", (12, 24, 36))),
        ),
        viewpoint=ViewpointRanges(
            radius=float(view.get("radius", 0.5)),
            max_angle_deg=float(view.get("max_angle_deg", 15.0)),
        ),
        annotation=AnnotationPolicy(
            keep_threshold=float(ann.get("keep_threshold", 0.3)),
            char_quads=bool(ann.get("char_quads", False)),
            visibility_samples=int(ann.get("visibility_samples", 64)),
        ),
        grid=tuple(doc.get("grid", DEFAULT_GRID)),
        preset_params=doc.get("preset_params", {}),
        doc=doc,
    )
    config.validate()
    return config


@dataclass
class DatasetManifest:
    tool_version: str
    master_seed: int
    config_digest: str
    records: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "master_seed": self.master_seed,
            "config_digest": self.config_digest,
            "records": self.records,
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(canonical_json(self.to_dict()))


def config_digest(config: PipelineConfig) -> str:
    doc = config.doc if config.doc is not None else {"master_seed": config.master_seed}
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def export_icdar(sample: Sample, path: str) -> None:
    """One line per word: 8 quad integers then the transcription; ignored
    words use the ICDAR '###' marker."""
    lines = []
    for ann in sample.annotations:
        coords = ",".join(str(v) for v in ann.quad)
        text = "###" if ann.ignore else ann.transcription
        lines.append(f"{coords},{text}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def parse_icdar(path: str) -> list[tuple[tuple[int, ...], str, bool]]:
    """Inverse of export_icdar: (quad, transcription, ignore) per line."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",", 8)
            quad = tuple(int(v) for v in parts[:8])
            text = parts[8]
            out.append((quad, text, text == "###"))
    return out


def _place_text_for_region(scene, gb, region, corpus, fonts, rng, config, anchor):
    structure = STRUCTURES[int(rng.integers(0, len(STRUCTURES)))]
    content = sample_text(corpus, structure, rng)
    crop = gb.rgb[region.y1 : region.y2, region.x1 : region.x2]
    color = pick_text_color(crop, rng)
    font_path = fonts[int(rng.integers(0, len(fonts)))]
    n_lines = len(content.lines)
    nominal = max(16, int(region.height / (1.2 * (n_lines - 1) + 1.6)))
    style = TextStyle(font_path=font_path, glyph_height=nominal, color=color)
    try:
        texture = rasterize_text(content, style, (region.width, region.height))
    except RegionTooSmallError:
        return None
    quad = lift_region(region, gb, config.intrinsics, anchor.pose, scene.accel(), scene.z_max)
    if quad is None:
        return None
    rect = rectify(quad, WORLD_UP, camera_right=anchor.pose.rotation()[:, 0])
    if rect is None:
        return None
    return deform_text_mesh(rect, scene.accel(), config.grid, texture, region=region, anchor_id=anchor.id)


def run_pipeline(
    config: PipelineConfig,
    dump_gbuffer_maps: bool = False,
    dump_region_maps: bool = False,
    dump_decal_meshes: bool = False,
) -> DatasetManifest:
    """Generate the full dataset described by the config.

    Per anchor: render the G-buffer, propose regions on the normal boundary
    map, place text in a random sample of them, then render the configured
    number of viewpoint/preset variations with annotations. Anchors with no
    usable region are logged and skipped.
    """
    config.validate()
    corpus = Corpus.from_file(config.corpus_path)
    fonts = load_fonts(config.fonts_dir)
    presets = config.presets()
    enabled = [presets[name] for name in config.preset_names]

    out_dir = config.output_dir
    images_dir = os.path.join(out_dir, "images")
    ann_dir = os.path.join(out_dir, "annotations")
    debug_dir = os.path.join(out_dir, "debug")
    os.makedirs(images_dir, exist_ok=True)
    os.makedirs(ann_dir, exist_ok=True)

    manifest = DatasetManifest(
        tool_version=__version__,
        master_seed=config.master_seed,
        config_digest=config_digest(config),
    )

    for scene_path in config.scene_paths:
        scene = load_scene(scene_path)
        for anchor in scene.anchors:
            anchor_rng = derive_rng(config.master_seed, scene.id, anchor.id, "anchor")
            gb = render_gbuffer(scene, anchor.pose, config.intrinsics, presets["normal"])
            boundary = compute_boundary_map(gb.normal_8, gb.hit_mask, config.proposal.threshold)
            regions = propose_regions(boundary, config.proposal, anchor_rng)

            tag = f"{scene.id}_{anchor.id}"
            if dump_gbuffer_maps:
                dump_gbuffer(gb, debug_dir, prefix=tag)
            if dump_region_maps:
                _dump_regions(boundary, regions, debug_dir, tag)

            if not regions:
                logger.warning("anchor %s/%s: no suitable regions, skipped", scene.id, anchor.id)
                continue

            lo, hi = config.regions_per_view
            want = int(anchor_rng.integers(lo, hi + 1))
            take = min(want, len(regions))
            order = anchor_rng.permutation(len(regions))[:take]
            placed = []
            for ri in order:
                pt = _place_text_for_region(
                    scene, gb, regions[int(ri)], corpus, fonts, anchor_rng, config, anchor
                )
                if pt is not None:
                    placed.append(pt)
            if not placed:
                logger.warning("anchor %s/%s: no placeable text, skipped", scene.id, anchor.id)
                continue

            if dump_decal_meshes:
                _dump_decals(placed, debug_dir, tag)

            index = build_render_index(scene, tuple(placed))

            def any_word_visible(pose) -> bool:
                for pt in placed:
                    for wi in range(pt.word_count):
                        if compute_visibility(pt, wi, pose, config.intrinsics, index, k=16) > 0:
                            return True
                return False

            poses = sample_viewpoints(
                anchor,
                config.samples_per_anchor,
                config.viewpoint,
                anchor_rng,
                has_visible_words=any_word_visible,
            )

            for si, pose in enumerate(poses):
                sample_seed = stable_key(config.master_seed, scene.id, anchor.id, "sample", si)
                sample_rng = np.random.default_rng(sample_seed)
                preset = enabled[int(sample_rng.integers(0, len(enabled)))]
                image = render_sample(scene, placed, pose, config.intrinsics, preset, index=index)
                annotations = annotate(placed, pose, config.intrinsics, index, config.annotation)
                sample = Sample(
                    image=image,
                    annotations=annotations,
                    anchor_id=anchor.id,
                    pose=pose,
                    preset_name=preset.name,
                    seed=sample_seed,
                    scene_id=scene.id,
                )
                image_name = f"{tag}_{si:03d}.png"
                ann_name = f"gt_{tag}_{si:03d}.txt"
                Image.fromarray(image, mode="RGB").save(os.path.join(images_dir, image_name))
                export_icdar(sample, os.path.join(ann_dir, ann_name))
                manifest.records.append(
                    {
                        "image": f"images/{image_name}",
                        "annotation": f"annotations/{ann_name}",
                        "scene_id": scene.id,
                        "anchor_id": anchor.id,
                        "pose": {
                            "position": [float(x) for x in pose.position],
                            "yaw": pose.yaw,
                            "pitch": pose.pitch,
                            "roll": pose.roll,
                        },
                        "preset": preset.name,
                        "seed": sample_seed,
                    }
                )

    manifest.save(os.path.join(out_dir, "manifest.json"))
    n_images = len(os.listdir(images_dir))
    n_annotations = len(os.listdir(ann_dir))
    if not (len(manifest.records) == n_images == n_annotations):
        raise RuntimeError(
            f"manifest records ({len(manifest.records)}) out of sync with disk "
            f"({n_images} images, {n_annotations} annotations)"
        )
    return manifest


def _dump_regions(boundary: NormalBoundaryMap, regions, debug_dir: str, tag: str) -> None:
    os.makedirs(debug_dir, exist_ok=True)
    Image.fromarray((boundary.bits * 255).astype(np.uint8), mode="L").save(
        os.path.join(debug_dir, f"{tag}_boundary.png")
    )
    payload = [{"x1": r.x1, "y1": r.y1, "x2": r.x2, "y2": r.y2} for r in regions]
    with open(os.path.join(debug_dir, f"{tag}_regions.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(payload))


def _dump_decals(placed, debug_dir: str, tag: str) -> None:
    os.makedirs(debug_dir, exist_ok=True)
    for i, pt in enumerate(placed):
        path = os.path.join(debug_dir, f"{tag}_decal{i}.obj")
        mesh = pt.mesh
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for v in mesh.vertices:
                fh.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
            for vt in mesh.texcoords:
                fh.write(f"vt {vt[0]:.6f} {vt[1]:.6f}\n")
            for tri in mesh.triangles:
                fh.write(
                    f"f {tri[0]+1}/{tri[0]+1} {tri[1]+1}/{tri[1]+1} {tri[2]+1}/{tri[2]+1}\n"
                )
