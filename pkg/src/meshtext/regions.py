"""Text-region proposal on the surface-normal map.

A boundary map marks pixels whose 8-bit encoded normal differs from a
4-neighbor by more than a threshold in L1 norm; void pixels (no geometry)
are boundary by fiat. Candidate boxes then grow from a grid of minimal
96x64 seeds by randomized per-side bisection until every side is blocked
by a boundary pixel or the image border, and overlapping results are
greedily rejected in a random visiting order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_THRESHOLD = 100
MIN_BOX_W = 96
MIN_BOX_H = 64


@dataclass(frozen=True)
class NormalBoundaryMap:
    bits: np.ndarray  # (H, W) uint8 in {0, 1}
    threshold: int

    def __post_init__(self):
        if self.bits.ndim != 2:
            raise ValueError("boundary map must be 2D")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True)
class TextRegion2D:
    """Half-open pixel rectangle [x1, x2) x [y1, y2)."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError("region corners must be ordered")

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    def overlaps(self, other: "TextRegion2D") -> bool:
        return (
            self.x1 < other.x2
            and other.x1 < self.x2
            and self.y1 < other.y2
            and other.y1 < self.y2
        )


@dataclass(frozen=True)
class ProposalConfig:
    threshold: int = DEFAULT_THRESHOLD
    min_width: int = MIN_BOX_W
    min_height: int = MIN_BOX_H
    strides: tuple[int, ...] = (12, 24, 36)

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")
        if any(s <= 0 for s in self.strides):
            raise ValueError("strides must be positive")


def compute_boundary_map(normal_8: np.ndarray, hit_mask: np.ndarray, threshold: int = DEFAULT_THRESHOLD) -> NormalBoundaryMap:
    """Mark pixels whose encoded normal jumps by more than `threshold` (L1)
    against any of its 4 neighbors; neighbors outside the image are skipped.
    Void pixels are always boundary: no text goes on the sky."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    n = np.asarray(normal_8, dtype=np.int16)
    h, w = n.shape[:2]
    bits = np.zeros((h, w), dtype=np.uint8)

    diff_v = np.abs(n[1:, :] - n[:-1, :]).sum(axis=2)  # between rows i and i+1
    diff_h = np.abs(n[:, 1:] - n[:, :-1]).sum(axis=2)
    bits[1:, :] |= diff_v > threshold  # up-neighbor
    bits[:-1, :] |= diff_v > threshold  # down-neighbor
    bits[:, 1:] |= diff_h > threshold  # left-neighbor
    bits[:, :-1] |= diff_h > threshold  # right-neighbor

    bits[~np.asarray(hit_mask, dtype=bool)] = 1
    return NormalBoundaryMap(bits=bits, threshold=threshold)


class _IntegralMap:
    """O(1) rectangle sums over the boundary bits."""

    def __init__(self, bits: np.ndarray):
        self.sums = np.zeros((bits.shape[0] + 1, bits.shape[1] + 1), dtype=np.int64)
        np.cumsum(np.cumsum(bits, axis=0, dtype=np.int64), axis=1, out=self.sums[1:, 1:])

    def box_sum(self, y1: int, y2: int, x1: int, x2: int) -> int:
        if y2 <= y1 or x2 <= x1:
            return 0
        s = self.sums
        return int(s[y2, x2] - s[y1, x2] - s[y2, x1] + s[y1, x1])


LEFT, RIGHT, TOP, BOTTOM = 0, 1, 2, 3


def stochastic_binary_search(
    boundary: NormalBoundaryMap,
    center: tuple[int, int],
    rng: np.random.Generator,
    min_width: int = MIN_BOX_W,
    min_height: int = MIN_BOX_H,
    integral: _IntegralMap | None = None,
) -> TextRegion2D | None:
    """Grow a minimal box centered at `center` into a boundary-free rectangle.

    Each step picks a random undecided side and bisects between the current
    edge (lower bound) and the image border (upper bound): if the strip from
    the probe position to the opposite box edge contains a boundary pixel
    the border-side bound moves inward, otherwise the edge expands outward.
    The final one-pixel gap is probed too, so an unobstructed side reaches
    the image border exactly. Returns None when the initial box does not fit
    in the image or already contains a boundary pixel.
    """
    h, w = boundary.height, boundary.width
    x0, y0 = center
    x1 = x0 - min_width // 2
    x2 = x0 + min_width // 2
    y1 = y0 - min_height // 2
    y2 = y0 + min_height // 2
    if x1 < 0 or y1 < 0 or x2 > w or y2 > h:
        return None
    if integral is None:
        integral = _IntegralMap(boundary.bits)
    if integral.box_sum(y1, y2, x1, x2) >= 1:
        return None

    lower = [x1, x2, y1, y2]
    upper = [0, w, 0, h]
    blocked = [False, False, False, False]

    def undecided() -> list[int]:
        return [s for s in range(4) if not blocked[s] and lower[s] != upper[s]]

    sides = undecided()
    while sides:
        side = int(rng.integers(0, len(sides)))
        side = sides[side]
        lo, up = lower[side], upper[side]
        if side in (LEFT, TOP):
            mid = (lo + up) // 2  # rounds toward the border (smaller values)
        else:
            mid = (lo + up + 1) // 2  # rounds toward the border (larger values)
        if side == LEFT:
            dirty = integral.box_sum(lower[TOP], lower[BOTTOM], mid, lower[RIGHT]) >= 1
        elif side == RIGHT:
            dirty = integral.box_sum(lower[TOP], lower[BOTTOM], lower[LEFT], mid) >= 1
        elif side == TOP:
            dirty = integral.box_sum(mid, lower[BOTTOM], lower[LEFT], lower[RIGHT]) >= 1
        else:
            dirty = integral.box_sum(lower[TOP], mid, lower[LEFT], lower[RIGHT]) >= 1
        if dirty:
            if mid == up:
                blocked[side] = True  # one-pixel gap probed and refused
            else:
                upper[side] = mid
        else:
            lower[side] = mid
        sides = undecided()

    return TextRegion2D(x1=lower[LEFT], y1=lower[TOP], x2=lower[RIGHT], y2=lower[BOTTOM])


def propose_regions(
    boundary: NormalBoundaryMap,
    config: ProposalConfig,
    rng: np.random.Generator,
) -> list[TextRegion2D]:
    """Run the box search over a stride grid, then keep boxes greedily in a
    random visiting order, rejecting any box that overlaps a kept one."""
    h, w = boundary.height, boundary.width
    if w < config.min_width or h < config.min_height:
        return []
    stride = int(config.strides[int(rng.integers(0, len(config.strides)))])
    integral = _IntegralMap(boundary.bits)

    half_w = config.min_width // 2
    half_h = config.min_height // 2
    boxes: list[TextRegion2D] = []
    for y0 in range(half_h, h - half_h + 1, stride):
        for x0 in range(half_w, w - half_w + 1, stride):
            box = stochastic_binary_search(
                boundary,
                (x0, y0),
                rng,
                min_width=config.min_width,
                min_height=config.min_height,
                integral=integral,
            )
            if box is not None:
                boxes.append(box)

    order = rng.permutation(len(boxes))
    kept: list[TextRegion2D] = []
    for i in order:
        box = boxes[int(i)]
        if not any(box.overlaps(other) for other in kept):
            kept.append(box)
    return kept
