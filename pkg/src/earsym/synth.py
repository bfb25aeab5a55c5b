"""Seeded synthetic data: asymmetric subject embeddings and ear-shaped masks.

Each subject has an identity direction ``u`` and an orthogonal asymmetry
direction ``m``.  The side prototypes are ``normalize(u + delta*m)`` (right)
and ``normalize(u - delta*m)`` (left), so without noise the left/right cosine
is exactly ``(1 - delta**2) / (1 + delta**2)``.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import metrics
from .errors import InvalidConfig, InvalidRotation
from .io import EmbeddingStore
from .protocols import Entry, Manifest, Protocol, Relation, Split, generate_pairs, score_pairs
from .sides import Side


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 200
    imgs_per_side: int = 10
    dim: int = 64
    delta: float = 0.4
    epsilon: float = 0.3
    seed: int = 42

    def validate(self):
        if self.n_subjects < 2:
            raise InvalidConfig(f"n_subjects must be >= 2, got {self.n_subjects}")
        if self.imgs_per_side < 1:
            raise InvalidConfig(f"imgs_per_side must be >= 1, got {self.imgs_per_side}")
        if self.dim < 2:
            raise InvalidConfig(f"dim must be >= 2, got {self.dim}")
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise InvalidConfig(f"delta must be a finite value >= 0, got {self.delta}")
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise InvalidConfig(f"epsilon must be a finite value >= 0, got {self.epsilon}")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        return self

    def to_dict(self):
        return asdict(self)


def expected_opposite_cosine(delta):
    """Noise-free cosine between a subject's left and right prototypes."""
    return (1.0 - delta * delta) / (1.0 + delta * delta)


def _unit(v):
    return v / np.linalg.norm(v)


def subject_prototypes(cfg, index):
    """``(u, m, left, right)`` for subject ``index``; draws come from a stream
    keyed by ``(seed, index)`` so subjects can be generated in any order."""
    rng = np.random.default_rng([cfg.seed, index])
    u = _unit(rng.standard_normal(cfg.dim))
    m = rng.standard_normal(cfg.dim)
    m = _unit(m - (m @ u) * u)
    right = _unit(u + cfg.delta * m)
    left = _unit(u - cfg.delta * m)
    return u, m, left, right, rng


def subject_name(index, n_subjects):
    return f"s{index:0{max(4, len(str(n_subjects - 1)))}d}"


def gen_subjects(cfg):
    """Manifest plus an :class:`EmbeddingStore` for ``cfg``.

    Image ids are ``<subject>_<side>_<k>``; every entry is in the TEST split
    and carries its ground-truth side.  Per-image noise is Gaussian with
    variance ``1/dim`` per coordinate, so ``epsilon`` is its expected norm.
    """
    cfg.validate()
    width = max(2, len(str(cfg.imgs_per_side - 1)))
    entries, ids, rows = [], [], []
    for s in range(cfg.n_subjects):
        subject = subject_name(s, cfg.n_subjects)
        _, _, left, right, rng = subject_prototypes(cfg, s)
        for side, proto in ((Side.LEFT, left), (Side.RIGHT, right)):
            for k in range(cfg.imgs_per_side):
                noise = rng.standard_normal(cfg.dim) / math.sqrt(cfg.dim)
                image_id = f"{subject}_{side.value}_{k:0{width}d}"
                entries.append(Entry(image_id, subject, side, Split.TEST))
                ids.append(image_id)
                rows.append(_unit(proto + cfg.epsilon * noise))
    return Manifest(entries), EmbeddingStore(tuple(ids), np.vstack(rows))


# -- masks --------------------------------------------------------------------

MASK_ASPECT = 1.8


@dataclass(frozen=True)
class MaskTruth:
    side: Side
    rotation_deg: float
    axis_top: tuple  # (row, col) of the rotated major-axis end nearer the top
    axis_bot: tuple


def gen_mask(side, rotation=0.0, canvas=128, seed=0):
    """Ear-like binary mask: a vertically elongated ellipse with a round notch.

    The notch sits on the image-right half for RIGHT and on the image-left half
    for LEFT.  Cutting mass out right of centre leaves a positive column
    skewness, which is what the geometric classifier calls RIGHT.  The shape is rotated
    counter-clockwise by ``rotation`` degrees about the canvas centre.
    Shape parameters depend only on ``seed``, so
    ``gen_mask(LEFT, t, seed=s)`` is the mirror image of
    ``gen_mask(RIGHT, -t, seed=s)``.
    """
    side = Side.parse(side)
    if side is None:
        raise InvalidConfig("side is required")
    if not abs(rotation) <= 60.0:
        raise InvalidRotation(f"|rotation| must be <= 60 degrees, got {rotation}")
    if canvas < 64:
        raise InvalidConfig(f"canvas must be >= 64 px, got {canvas}")
    rng = np.random.default_rng(seed)
    semi_major = canvas * rng.uniform(0.30, 0.38)
    semi_minor = semi_major / (MASK_ASPECT * rng.uniform(0.95, 1.05))
    notch_x = semi_minor * rng.uniform(0.55, 0.75)
    notch_y = semi_major * rng.uniform(-0.15, 0.15)
    notch_r = semi_minor * rng.uniform(0.45, 0.60)
    if side is Side.LEFT:
        notch_x = -notch_x

    center = (canvas - 1) / 2.0
    t = math.radians(rotation)
    cos_t, sin_t = math.cos(t), math.sin(t)
    dr, dc = np.meshgrid(np.arange(canvas) - center, np.arange(canvas) - center, indexing="ij")
    # un-rotate pixel offsets into the shape frame
    fr = cos_t * dr + sin_t * dc
    fc = -sin_t * dr + cos_t * dc
    inside = (fr / semi_major) ** 2 + (fc / semi_minor) ** 2 <= 1.0
    notch = (fr - notch_y) ** 2 + (fc - notch_x) ** 2 <= notch_r ** 2
    mask = inside & ~notch

    top = (center - cos_t * semi_major, center - sin_t * semi_major)
    bot = (center + cos_t * semi_major, center + sin_t * semi_major)
    return mask, MaskTruth(side, float(rotation), top, bot)


def ellipse_mask(shape, semi_major, semi_minor, rotation=0.0, center=None):
    """Plain filled ellipse, major axis vertical before the CCW ``rotation``."""
    h, w = shape
    if center is None:
        center = ((h - 1) / 2.0, (w - 1) / 2.0)
    t = math.radians(rotation)
    dr, dc = np.meshgrid(np.arange(h) - center[0], np.arange(w) - center[1], indexing="ij")
    fr = math.cos(t) * dr + math.sin(t) * dc
    fc = -math.sin(t) * dr + math.cos(t) * dc
    return (fr / semi_major) ** 2 + (fc / semi_minor) ** 2 <= 1.0


def render_ear_image(mask, seed=0):
    """Grayscale uint8 image with textured ear pixels on a darker background."""
    rng = np.random.default_rng(seed)
    h, w = mask.shape
    rr, cc = np.mgrid[0:h, 0:w]
    shade = 0.5 + 0.25 * np.sin(rr / 5.0) * np.cos(cc / 7.0)
    img = np.where(mask, 120 + 100 * shade, 30) + rng.normal(0.0, 6.0, mask.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# -- experiment ---------------------------------------------------------------

@dataclass
class SymmetryReport:
    same_side: metrics.MetricReport
    opposite_side: metrics.MetricReport
    same_scores: object = None  # ScoreSet
    opposite_scores: object = None

    @property
    def dprime_gap(self):
        return self.same_side.dprime - self.opposite_side.dprime

    @property
    def genuine_mean_gap(self):
        return self.same_side.genuine_mean - self.opposite_side.genuine_mean

    @property
    def impostor_mean_gap(self):
        return self.same_side.impostor_mean - self.opposite_side.impostor_mean

    def to_dict(self):
        return {
            "dprime_gap": self.dprime_gap,
            "genuine_mean_gap": self.genuine_mean_gap,
            "impostor_mean_gap": self.impostor_mean_gap,
            "opposite_side": self.opposite_side.to_dict(),
            "same_side": self.same_side.to_dict(),
        }


def symmetry_report(scores, fmr_target=metrics.DEFAULT_FMR, bootstrap=0, level=0.95, seed=0):
    """Per-protocol reports from a score set holding both side relations."""
    same = scores.restrict(Relation.SAME)
    opposite = scores.restrict(Relation.OPPOSITE)
    reports = [
        metrics.compute_report(s.genuine_scores, s.impostor_scores, fmr_target, bootstrap,
                               level, seed, protocol=s.protocol)
        for s in (same, opposite)
    ]
    return SymmetryReport(reports[0], reports[1], same, opposite)


def run_symmetry_experiment(cfg, fmr_target=metrics.DEFAULT_FMR, bootstrap=0, level=0.95,
                            store_dtype=None):
    """Generate, pair, score and summarise the same- vs opposite-side protocols.

    ``store_dtype=np.float32`` scores the embeddings as they would be read back
    from an EARB file.
    """
    manifest, store = gen_subjects(cfg)
    if store_dtype is not None:
        store = store.astype(store_dtype)
    scores = score_pairs(generate_pairs(manifest, Protocol.ALL), store)
    return symmetry_report(scores, fmr_target, bootstrap, level, cfg.seed)
