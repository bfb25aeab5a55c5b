"""Ear-recognition evaluation toolkit: mask alignment, side labels, flip-fused
embeddings, same-/opposite-side verification protocols and metrics."""

__version__ = "0.1.0"

from .embedding import EmbedderSpec, cosine, embed_image, fuse_flip, toy_embed
from .geometry import (
    AlignmentResult,
    Chord,
    align,
    estimate_axis,
    extract_boundary,
    longest_chords,
)
from .metrics import (
    MetricReport,
    auc,
    bootstrap_ci,
    compute_report,
    dprime,
    eer,
    fnmr_at_fmr,
    rank_k,
)
from .protocols import (
    ClassArrangement,
    Entry,
    Manifest,
    PairSet,
    Protocol,
    ScoreSet,
    arrange_classes,
    generate_pairs,
    score_pairs,
)
from .sides import Side, SideLabel, classify_side_geometric, resolve_sides
from .synth import SynthConfig, SymmetryReport, gen_mask, gen_subjects, run_symmetry_experiment
