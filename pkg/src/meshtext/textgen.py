"""Text content sampling, glyph rasterization, and text color selection.

Content comes from a plain-text corpus in one of three structures: a single
word, one to three consecutive lines, or a re-wrapped paragraph. Rasterized
textures are RGBA with premultiplied alpha and carry per-word and
per-character ink boxes in texture pixels (top-left origin). Colors come
from a fixed 64-color palette filtered for CIELAB contrast against the
background region.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .errors import ConfigError, MeshTextError

MIN_GLYPH_HEIGHT = 16  # px, legibility floor
LINE_SPACING = 1.2  # multiples of glyph height
TEXTURE_MARGIN = 2  # px kept clear around the layout
MIN_CONTRAST_DE = 25.0
PALETTE_CANDIDATES = 8
REPLACEMENT_CHAR = "?"


class RegionTooSmallError(MeshTextError):
    """Content cannot be laid out even at the minimum glyph height."""


@dataclass
class Corpus:
    tokens: list[str]
    lines: list[str]

    def __post_init__(self):
        if not self.tokens or not self.lines:
            raise ConfigError("corpus is empty")
        if any(any(c.isspace() for c in t) for t in self.tokens):
            raise ConfigError("corpus tokens must not contain whitespace")

    @classmethod
    def from_text(cls, text: str) -> "Corpus":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        return cls(tokens=text.split(), lines=lines)

    @classmethod
    def from_file(cls, path: str) -> "Corpus":
        if not os.path.exists(path):
            raise ConfigError(f"corpus file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())


STRUCTURES = ("word", "lines", "paragraph")


@dataclass
class TextContent:
    structure: str
    lines: list[str]

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure: {self.structure}")
        limit = {"word": 1, "lines": 3, "paragraph": 8}[self.structure]
        if not (1 <= len(self.lines) <= limit):
            raise ValueError(f"{self.structure} content limited to {limit} lines")

    @property
    def words(self) -> list[str]:
        return [w for line in self.lines for w in line.split()]


def sample_text(corpus: Corpus, structure: str, rng: np.random.Generator) -> TextContent:
    """Draw content from the corpus; deterministic under a fixed rng state."""
    if structure == "word":
        token = corpus.tokens[int(rng.integers(0, len(corpus.tokens)))]
        return TextContent(structure="word", lines=[token])
    if structure == "lines":
        k = int(rng.integers(1, 4))
        k = min(k, len(corpus.lines))
        start = int(rng.integers(0, len(corpus.lines) - k + 1))
        return TextContent(structure="lines", lines=corpus.lines[start : start + k])
    if structure == "paragraph":
        count = int(rng.integers(12, 41))
        start = int(rng.integers(0, len(corpus.tokens)))
        tokens = corpus.tokens[start : start + count]
        if not tokens:
            tokens = corpus.tokens[:1]
        width = int(rng.integers(16, 33))  # wrap width in characters
        lines: list[str] = []
        current = ""
        for tok in tokens:
            candidate = tok if not current else current + " " + tok
            if current and len(candidate) > width:
                lines.append(current)
                current = tok
                if len(lines) == 8:
                    current = ""
                    break
            else:
                current = candidate
        if current:
            lines.append(current)
        return TextContent(structure="paragraph", lines=lines[:8])
    raise ValueError(f"unknown structure: {structure}")


@dataclass(frozen=True)
class TextStyle:
    font_path: str
    glyph_height: int
    color: tuple[int, int, int]

    def __post_init__(self):
        if self.glyph_height < MIN_GLYPH_HEIGHT:
            raise ValueError(f"glyph height must be >= {MIN_GLYPH_HEIGHT}")
        if not os.path.exists(self.font_path):
            raise ConfigError(f"font not found: {self.font_path}")


def load_fonts(fonts_dir: str) -> list[str]:
    """All TrueType/OpenType files under a directory, sorted for determinism."""
    if not os.path.isdir(fonts_dir):
        raise ConfigError(f"fonts directory not found: {fonts_dir}")
    paths = sorted(
        os.path.join(fonts_dir, name)
        for name in os.listdir(fonts_dir)
        if name.lower().endswith((".ttf", ".otf"))
    )
    if not paths:
        raise ConfigError(f"no .ttf/.otf fonts in {fonts_dir}")
    return paths


@dataclass
class WordBox:
    text: str
    box: tuple[float, float, float, float]  # ink bounds, texture px, top-left origin
    char_boxes: list[tuple[float, float, float, float]]
    clean: bool  # False when any character was replaced


class TextTexture:
    """Premultiplied RGBA raster plus per-word and per-character ink boxes."""

    def __init__(self, rgba: np.ndarray, words: list[WordBox]):
        self.rgba = rgba
        self.words = words

    @property
    def height(self) -> int:
        return self.rgba.shape[0]

    @property
    def width(self) -> int:
        return self.rgba.shape[1]

    def premultiplied_f(self) -> np.ndarray:
        return self.rgba.astype(np.float64) / 255.0

    def word_id_map(self) -> np.ndarray:
        """Per-texel word index (or -1) for ID-buffer rendering."""
        ids = np.full((self.height, self.width), -1, dtype=np.int32)
        alpha = self.rgba[..., 3] > 0
        for i, word in enumerate(self.words):
            x0, y0, x1, y1 = word.box
            r0, r1 = max(0, int(np.floor(y0))), min(self.height, int(np.ceil(y1)))
            c0, c1 = max(0, int(np.floor(x0))), min(self.width, int(np.ceil(x1)))
            block = ids[r0:r1, c0:c1]
            block[alpha[r0:r1, c0:c1]] = i
        return ids

    def word_uv_box(self, i: int) -> tuple[float, float, float, float]:
        """Word box as (u0, v0, u1, v1) with v running bottom-up."""
        x0, y0, x1, y1 = self.words[i].box
        return (x0 / self.width, 1.0 - y1 / self.height, x1 / self.width, 1.0 - y0 / self.height)


_RENDERABLE_CACHE: dict[tuple[str, str], bool] = {}


def _is_renderable(font: ImageFont.FreeTypeFont, ch: str) -> bool:
    if ch.isspace():
        return True
    key = (font.path, ch)
    cached = _RENDERABLE_CACHE.get(key)
    if cached is not None:
        return cached
    mask = font.getmask(ch)
    if mask.size[0] == 0 or mask.size[1] == 0:
        result = False
    else:
        notdef = font.getmask("\U000ffffe")  # private-use char: certainly unmapped
        result = not (mask.size == notdef.size and bytes(mask) == bytes(notdef))
    _RENDERABLE_CACHE[key] = result
    return result


def _sanitize(font: ImageFont.FreeTypeFont, line: str) -> tuple[str, bool]:
    out = []
    replaced = False
    for ch in line:
        if _is_renderable(font, ch):
            out.append(ch)
        else:
            out.append(REPLACEMENT_CHAR)
            replaced = True
    return "".join(out), replaced


def rasterize_text(content: TextContent, style: TextStyle, region_size: tuple[int, int]) -> TextTexture:
    """Lay out the content in the region, shrinking to fit.

    Raises RegionTooSmallError when the content cannot fit with glyphs at
    least MIN_GLYPH_HEIGHT tall.
    """
    width, height = region_size
    usable_w = width - 2 * TEXTURE_MARGIN
    usable_h = height - 2 * TEXTURE_MARGIN
    if usable_w <= 0 or usable_h <= 0:
        raise RegionTooSmallError(f"region {width}x{height} leaves no usable area")

    n_lines = len(content.lines)
    size = max(style.glyph_height, MIN_GLYPH_HEIGHT)
    while True:
        font = ImageFont.truetype(style.font_path, size)
        ascent, descent = font.getmetrics()
        total_h = (n_lines - 1) * LINE_SPACING * size + ascent + descent
        widest = max(font.getlength(_sanitize(font, line)[0]) for line in content.lines)
        if widest <= usable_w and total_h <= usable_h:
            break
        if size <= MIN_GLYPH_HEIGHT:
            raise RegionTooSmallError("region too small for content at minimum glyph height")
        est = size
        if widest > usable_w:
            est = min(est, size * usable_w / widest)
        if total_h > usable_h:
            est = min(est, size * usable_h / total_h)
        size = max(MIN_GLYPH_HEIGHT, min(size - 1, int(est)))

    img = Image.new("RGBA", (width, height), (0, 0, 0, 0))
    draw = ImageDraw.Draw(img)
    line_step = LINE_SPACING * size
    fill = style.color + (255,)

    words: list[WordBox] = []
    for li, raw_line in enumerate(content.lines):
        line, _ = _sanitize(font, raw_line)
        y = TEXTURE_MARGIN + li * line_step
        prefix = ""
        for raw_word in raw_line.split():
            word, replaced = _sanitize(font, raw_word)
            x = TEXTURE_MARGIN + draw.textlength(prefix, font=font)
            draw.text((x, y), word, font=font, fill=fill)
            box = draw.textbbox((x, y), word, font=font)
            char_boxes = []
            top, bottom = float(box[1]), float(box[3])
            for k in range(len(word)):
                left = x + draw.textlength(word[:k], font=font)
                right = x + draw.textlength(word[: k + 1], font=font)
                char_boxes.append((float(left), top, float(right), bottom))
            words.append(
                WordBox(
                    text=raw_word,
                    box=(float(box[0]), top, float(box[2]), bottom),
                    char_boxes=char_boxes,
                    clean=not replaced,
                )
            )
            prefix = prefix + word + " " if prefix else word + " "

    rgba = np.array(img, dtype=np.uint8)
    alpha = rgba[..., 3].astype(np.float64) / 255.0
    rgba[..., :3] = np.floor(rgba[..., :3].astype(np.float64) * alpha[..., None] + 0.5).astype(np.uint8)
    return TextTexture(rgba=rgba, words=words)


def _build_palette() -> np.ndarray:
    levels = np.array([0, 85, 170, 255], dtype=np.float64)
    r, g, b = np.meshgrid(levels, levels, levels, indexing="ij")
    return np.stack([r.ravel(), g.ravel(), b.ravel()], axis=1)


PALETTE = _build_palette()


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """sRGB bytes (..., 3) to CIELAB under D65."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    m = np.array(
        [
            [0.4124564, 0.3575761, 0.1804375],
            [0.2126729, 0.7151522, 0.0721750],
            [0.0193339, 0.1191920, 0.9503041],
        ]
    )
    xyz = lin @ m.T
    xyz /= np.array([0.95047, 1.0, 1.08883])
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


PALETTE_LAB = srgb_to_lab(PALETTE)


def pick_text_color(background_crop: np.ndarray, rng: np.random.Generator) -> tuple[int, int, int]:
    """A palette color contrasting with the crop's mean color.

    Picks uniformly among the 8 palette entries farthest (CIELAB delta-E)
    from the mean; the shipped palette keeps all 8 at delta-E >= 25 for any
    possible mean color.
    """
    crop = np.asarray(background_crop, dtype=np.float64).reshape(-1, 3)
    if crop.size == 0:
        raise ValueError("background crop is empty")
    mean_lab = srgb_to_lab(crop.mean(axis=0))
    delta = np.linalg.norm(PALETTE_LAB - mean_lab, axis=1)
    top = np.argsort(-delta, kind="stable")[:PALETTE_CANDIDATES]
    choice = int(top[int(rng.integers(0, PALETTE_CANDIDATES))])
    return tuple(int(v) for v in PALETTE[choice])
