"""Embeddings: a deterministic toy embedder, flip fusion and cosine scoring."""

import enum
import functools
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import EmptyImage, InvalidConfig, MissingEmbedding, ZeroVector

DEFAULT_DIM = 512
TOY_SIDE = 16


class EmbedderKind(str, enum.Enum):
    TOY = "toy"
    FILE = "file"


@dataclass(frozen=True)
class EmbedderSpec:
    kind: EmbedderKind = EmbedderKind.TOY
    seed: int = 0
    dim: int = DEFAULT_DIM
    path: str = None  # FILE only

    def __post_init__(self):
        if self.dim < 2:
            raise InvalidConfig(f"embedding dim must be >= 2, got {self.dim}")


@functools.lru_cache(maxsize=8)
def projection_matrix(seed, dim):
    """Seeded Gaussian ``(256, dim)`` matrix, shared read-only between calls."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    mat = rng.standard_normal((TOY_SIDE * TOY_SIDE, dim))
    mat.setflags(write=False)
    return mat


def _unit_interval(image):
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise EmptyImage(f"expected a non-empty 2-D image, got shape {image.shape}")
    if np.issubdtype(image.dtype, np.integer):
        return image.astype(np.float64) / 255.0
    return np.clip(image.astype(np.float64), 0.0, 1.0)


def l2_normalize(v, tol=0.0):
    norm = float(np.linalg.norm(v))
    if not norm > tol:
        raise ZeroVector(f"vector norm {norm:g} is not above {tol:g}")
    return v / norm


def toy_embed(image, spec=EmbedderSpec()):
    """Project a 16x16 thumbnail through a seeded Gaussian matrix.

    The thumbnail is mean-centred before projection so unrelated images give
    near-orthogonal embeddings; a constant image therefore maps to zero and
    raises :class:`ZeroVector`.
    """
    if spec.kind is not EmbedderKind.TOY:
        raise InvalidConfig("toy_embed needs an EmbedderSpec of kind TOY")
    pixels = geometry.resize_bilinear(_unit_interval(image), (TOY_SIDE, TOY_SIDE)).ravel()
    pixels = pixels - pixels.mean()
    # resampling a constant image leaves ulp-level residue, not content
    if not np.abs(pixels).max() > 1e-12:
        raise ZeroVector("constant image has no content after centring")
    return l2_normalize(pixels @ projection_matrix(spec.seed, spec.dim))


def fuse_flip(feat_raw, feat_flipped):
    """``(raw + flipped) / ||raw + flipped||``."""
    feat_raw = np.asarray(feat_raw, dtype=np.float64)
    feat_flipped = np.asarray(feat_flipped, dtype=np.float64)
    if feat_raw.shape != feat_flipped.shape:
        raise ValueError(f"dimension mismatch {feat_raw.shape} vs {feat_flipped.shape}")
    if not (np.all(np.isfinite(feat_raw)) and np.all(np.isfinite(feat_flipped))):
        raise ValueError("non-finite feature values")
    return l2_normalize(feat_raw + feat_flipped, tol=1e-12)


def cosine(u, v):
    """Cosine similarity clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch {u.shape} vs {v.shape}")
    su = float(np.abs(u).max(initial=0.0))
    sv = float(np.abs(v).max(initial=0.0))
    if su == 0.0 or sv == 0.0:
        raise ZeroVector("cosine of a zero vector")
    # pre-scale so tiny or huge vectors do not under/overflow the norms
    u = u / su
    v = v / sv
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    return min(1.0, max(-1.0, float(np.dot(u, v)) / (nu * nv)))


def embed_image(image, mask=None, spec=EmbedderSpec(), use_alignment=False, k=geometry.DEFAULT_K):
    """Flip-fused toy embedding, optionally after mask alignment."""
    image = _unit_interval(image)
    if use_alignment:
        if mask is None:
            raise InvalidConfig("alignment requested but no mask given")
        image, _, _ = geometry.align(image, mask, k=k)
    raw = toy_embed(image, spec)
    flipped = toy_embed(geometry.mirror(image), spec)
    return fuse_flip(raw, flipped)


class FileEmbedder:
    """Looks up precomputed embeddings from an EARB store."""

    def __init__(self, store):
        self.store = store
        self._rows = {image_id: i for i, image_id in enumerate(store.ids)}

    @classmethod
    def open(cls, path):
        from .io import load_embeddings

        return cls(load_embeddings(path))

    @property
    def dim(self):
        return self.store.dim

    def __call__(self, image_id):
        try:
            row = self._rows[image_id]
        except KeyError:
            raise MissingEmbedding(f"no embedding for {image_id!r}") from None
        return np.asarray(self.store.vectors[row], dtype=np.float64)
