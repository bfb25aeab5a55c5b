"""Mask-based ear alignment.

A mask is a 2-D boolean numpy array (``True`` = ear pixel).  The pipeline is:
resize so the shorter side is 80 px, take the longest chords between boundary
pixels of the largest component, average their endpoints into a top/bottom
axis, rotate about the mask centroid until that axis is vertical, and crop to
the rotated mask's bounding box.

Angles are in degrees, counter-clockwise positive as the image is displayed
(rows grow downward).
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import (
    DegenerateMask,
    EmptyChordList,
    EmptyImage,
    EmptyMask,
    NonMatchingDimensions,
)

DEFAULT_K = 50
TARGET_MIN_SIDE = 80

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


class Chord(NamedTuple):
    p_top: tuple
    p_bot: tuple
    length: float


@dataclass(frozen=True)
class AlignmentResult:
    angle: float
    axis_top: tuple
    axis_bot: tuple
    crop: tuple  # (row, col, height, width) in the rotated frame

    def to_dict(self, image_id=None):
        out = {
            "angle_deg": float(self.angle),
            "axis_top": [float(v) for v in self.axis_top],
            "axis_bot": [float(v) for v in self.axis_bot],
            "crop": [int(v) for v in self.crop],
        }
        if image_id is not None:
            out = {"id": image_id, **out}
        return out


def as_mask(mask):
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.shape[0] < 1 or mask.shape[1] < 1:
        raise EmptyMask(f"mask must be a non-empty 2-D array, got shape {mask.shape}")
    return mask.astype(bool, copy=False)


def mirror(arr):
    """Horizontal mirror (columns reversed)."""
    return np.ascontiguousarray(np.asarray(arr)[:, ::-1])


def largest_component(mask):
    """Largest 4-connected component; on equal sizes the one whose first pixel
    comes first in row-major order wins."""
    mask = as_mask(mask)
    labels, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    if n == 0:
        raise EmptyMask("mask has no set pixels")
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(np.argmax(sizes))


def _boundary_raster(mask):
    comp = largest_component(mask)
    padded = np.pad(comp, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return comp & ~interior


def boundary_coords(mask):
    """Boundary pixels as two int64 arrays ``(rows, cols)`` in row-major order."""
    rows, cols = np.nonzero(_boundary_raster(mask))
    return rows.astype(np.int64), cols.astype(np.int64)


def extract_boundary(mask):
    """Boundary pixels of the largest 4-connected component, row-major.

    A pixel is on the boundary when one of its 4-neighbours is unset or lies
    outside the image.

    >>> extract_boundary(np.ones((1, 1), bool))
    [(0, 0)]
    """
    rows, cols = boundary_coords(mask)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def longest_chords(mask, k=DEFAULT_K):
    """The ``k`` longest chords between boundary pixels, longest first.

    Equal lengths are ordered lexicographically on ``(p_top, p_bot)``.  When
    fewer than ``k`` pairs exist all of them are returned.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rows, cols = boundary_coords(mask)
    if rows.size < 2:
        raise DegenerateMask(f"boundary has {rows.size} pixel(s); need at least 2")
    i, j, d2 = kernels.top_chords(rows, cols, k)
    # row-major order of the boundary makes point i the top endpoint
    return [
        Chord((int(rows[a]), int(cols[a])), (int(rows[b]), int(cols[b])), math.sqrt(int(d)))
        for a, b, d in zip(i, j, d2)
    ]


def estimate_axis(chords):
    """Mean top endpoint and mean bottom endpoint of ``chords``."""
    if len(chords) == 0:
        raise EmptyChordList("no chords to average")
    tops = np.array([c.p_top for c in chords], dtype=np.float64)
    bots = np.array([c.p_bot for c in chords], dtype=np.float64)
    return tuple(float(v) for v in tops.mean(axis=0)), tuple(float(v) for v in bots.mean(axis=0))


def axis_angle(axis_top, axis_bot):
    """Counter-clockwise rotation in degrees that points top->bottom straight down."""
    dr = axis_bot[0] - axis_top[0]
    dc = axis_bot[1] - axis_top[1]
    if dr == 0 and dc == 0:
        raise DegenerateMask("axis endpoints coincide")
    # math-orientation direction of the axis (x = col, y = -row)
    phi = math.degrees(math.atan2(-dr, dc))
    angle = -90.0 - phi
    angle = (angle + 180.0) % 360.0 - 180.0
    return 0.0 if angle == 0 else angle


def estimate_angle(mask, k=DEFAULT_K):
    """``(angle, axis_top, axis_bot)`` for ``mask`` at its native resolution."""
    top, bot = estimate_axis(longest_chords(mask, k))
    return axis_angle(top, bot), top, bot


def rotate_point(point, angle, center):
    """Rotate a (row, col) point counter-clockwise by ``angle`` degrees."""
    t = math.radians(angle)
    dr = point[0] - center[0]
    dc = point[1] - center[1]
    return (
        center[0] + math.cos(t) * dr - math.sin(t) * dc,
        center[1] + math.sin(t) * dr + math.cos(t) * dc,
    )


# -- resampling ---------------------------------------------------------------

def resized_shape(shape, target=TARGET_MIN_SIDE):
    h, w = shape
    if h <= w:
        return target, max(1, int(round(w * target / h)))
    return max(1, int(round(h * target / w))), target


def _source_grid(shape, out_shape):
    h, w = shape
    oh, ow = out_shape
    r = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    c = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    return r, c


def resize_bilinear(image, out_shape):
    """Bilinear resize with pixel-centre alignment and edge clamping."""
    image = np.asarray(image, dtype=np.float64)
    if image.size == 0:
        raise EmptyImage("cannot resize an empty image")
    r, c = _source_grid(image.shape, out_shape)
    rr, cc = np.meshgrid(r, c, indexing="ij")
    return ndimage.map_coordinates(image, [rr, cc], order=1, mode="nearest")


def resize_nearest(mask, out_shape):
    mask = as_mask(mask)
    h, w = mask.shape
    oh, ow = out_shape
    ri = np.minimum((np.arange(oh) + 0.5) * (h / oh), h - 1).astype(np.int64)
    ci = np.minimum((np.arange(ow) + 0.5) * (w / ow), w - 1).astype(np.int64)
    return mask[np.ix_(ri, ci)]


def _rotation_canvas(shape, center):
    h, w = shape
    corners = [(-0.5, -0.5), (-0.5, w - 0.5), (h - 0.5, -0.5), (h - 0.5, w - 0.5)]
    radius = max(math.hypot(r - center[0], c - center[1]) for r, c in corners)
    half = int(math.ceil(radius)) + 2
    # keep the centre's sub-pixel offset so a zero angle is an integer shift
    frac_r = center[0] - math.floor(center[0])
    frac_c = center[1] - math.floor(center[1])
    return (2 * half + 1, 2 * half + 1), (half + frac_r, half + frac_c)


def rotate_raster(arr, angle, center, out_shape, out_center, order):
    """Sample ``arr`` rotated counter-clockwise by ``angle`` degrees about
    ``center``; ``center`` lands on ``out_center``.  Outside pixels are 0."""
    t = math.radians(angle)
    cos_t, sin_t = math.cos(t), math.sin(t)
    rr, cc = np.meshgrid(
        np.arange(out_shape[0], dtype=np.float64) - out_center[0],
        np.arange(out_shape[1], dtype=np.float64) - out_center[1],
        indexing="ij",
    )
    src_r = center[0] + cos_t * rr + sin_t * cc
    src_c = center[1] - sin_t * rr + cos_t * cc
    return ndimage.map_coordinates(
        np.asarray(arr, dtype=np.float64), [src_r, src_c], order=order, mode="constant", cval=0.0
    )


def bounding_box(mask):
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise DegenerateMask("mask vanished after rotation")
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    return r0, c0, r1 - r0 + 1, c1 - c0 + 1


# a rotated raster rarely shows its axis exactly vertical again; these bound
# the local search that picks a self-consistent rotation (see align)
REFINE_TOL = 0.9
REFINE_SPAN = 4.0
REFINE_STEP = 0.25
_PHASES = ((0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5))


def _rotate_mask(mask, angle, center, phase):
    out_shape, out_center = _rotation_canvas(mask.shape, center)
    out_center = (out_center[0] + phase[0], out_center[1] + phase[1])
    rot = rotate_raster(mask, angle, center, out_shape, out_center, order=0) > 0.5
    return rot, out_shape, out_center


def _refine(mask, angle, center, k):
    """Search rotations near ``angle`` (nearest first) and canvas phases for one
    whose rotated raster re-estimates to within REFINE_TOL of vertical."""
    offsets = np.arange(-REFINE_SPAN, REFINE_SPAN + REFINE_STEP / 2, REFINE_STEP)
    offsets = sorted(offsets.tolist(), key=lambda o: (abs(o), o))
    best = None
    for off in offsets:
        for phase in _PHASES:
            rot, _, _ = _rotate_mask(mask, angle + off, center, phase)
            r, c, h, w = bounding_box(rot)
            try:
                resid = abs(estimate_angle(rot[r:r + h, c:c + w], k)[0])
            except DegenerateMask:
                continue
            if best is None or resid < best[0]:
                best = (resid, angle + off, phase)
            if resid < REFINE_TOL:
                return best[1], best[2]
    if best is None:
        return angle, _PHASES[0]
    return best[1], best[2]


def _axis_along(top, bot, angle):
    """Segment with the midpoint and length of ``top``-``bot`` that ``angle``
    turns exactly vertical."""
    mid_r, mid_c = (top[0] + bot[0]) / 2.0, (top[1] + bot[1]) / 2.0
    half = math.dist(top, bot) / 2.0
    t = math.radians(angle)
    # unit vector that rotates onto (1, 0)
    dr, dc = math.cos(t), -math.sin(t)
    return (mid_r - half * dr, mid_c - half * dc), (mid_r + half * dr, mid_c + half * dc)


def align(image, mask, k=DEFAULT_K, target=TARGET_MIN_SIDE, refine=True):
    """Resize, rotate upright and crop ``image`` and ``mask``.

    Returns ``(aligned_image, aligned_mask, AlignmentResult)``.  The image is
    resampled bilinearly, the mask by nearest neighbour.  With ``target=None``
    the resize step is skipped.

    The chord axis is only resolved to about a degree at 80 px, and the
    rotated raster can land a pixel off so that re-estimating on the aligned
    mask no longer reads vertical.  With ``refine`` the rotation is nudged
    (at most REFINE_SPAN degrees) to the nearest angle whose aligned mask is
    self-consistent.  ``axis_top``/``axis_bot`` are then the chord axis turned
    to that angle about its midpoint, in the resized frame; ``crop`` is in the
    rotation canvas, which holds the whole rotated input.
    """
    image = np.asarray(image, dtype=np.float64)
    mask = as_mask(mask)
    if image.shape != mask.shape:
        raise NonMatchingDimensions(f"image {image.shape} vs mask {mask.shape}")
    if not mask.any():
        raise DegenerateMask("mask has no set pixels")
    if target is not None:
        shape = resized_shape(mask.shape, target)
        image = resize_bilinear(image, shape)
        mask = resize_nearest(mask, shape)
        if not mask.any():
            raise DegenerateMask("mask vanished after resizing")

    angle, top, bot = estimate_angle(mask, k)
    rows, cols = np.nonzero(mask)
    center = (float(rows.mean()), float(cols.mean()))
    phase = _PHASES[0]
    if refine:
        raw = angle
        angle, phase = _refine(mask, angle, center, k)
        if angle != raw:
            top, bot = _axis_along(top, bot, angle)

    rot_mask, out_shape, out_center = _rotate_mask(mask, angle, center, phase)
    rot_img = rotate_raster(image, angle, center, out_shape, out_center, order=1)
    r, c, h, w = bounding_box(rot_mask)
    result = AlignmentResult(angle=angle, axis_top=top, axis_bot=bot, crop=(r, c, h, w))
    return rot_img[r:r + h, c:c + w], rot_mask[r:r + h, c:c + w], result
