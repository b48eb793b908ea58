"""meshtext: annotated scene-text image synthesis from 3D triangle-mesh worlds."""

__version__ = "0.1.0"

from .camera import CameraIntrinsics, CameraPose, project, unproject
from .gbuffer import GBuffer, quantize_depth, render_gbuffer
from .geometry import AccelIndex, Ray, RayHit, TriMesh, build_accel, closest_surface_point, raycast
from .placement import PlacedText, Quad3D, Rect3D, deform_text_mesh, lift_region, rectify, refine_point
from .regions import (
    NormalBoundaryMap,
    ProposalConfig,
    TextRegion2D,
    compute_boundary_map,
    propose_regions,
    stochastic_binary_search,
)
from .samples import (
    AnnotationPolicy,
    Sample,
    ViewpointRanges,
    WordAnnotation,
    annotate,
    compute_visibility,
    render_sample,
    sample_viewpoints,
)
from .scene import CameraAnchor, IlluminationPreset, Light, Material, Scene, load_scene
from .textgen import Corpus, TextContent, TextStyle, TextTexture, pick_text_color, rasterize_text, sample_text
