"""Left/right labels for ear images.

Labels come from manifest metadata, an external prediction file, or a
geometric fallback (sign of the column skewness of the mask).  Precedence is
METADATA > EXTERNAL > GEOMETRIC.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMask, UnlabelableImage
from .geometry import as_mask


class Side(str, enum.Enum):
    LEFT = "L"
    RIGHT = "R"

    @classmethod
    def parse(cls, value):
        """Accept L/R/left/right in any case; ``None`` or blank gives ``None``."""
        if value is None or isinstance(value, Side):
            return value
        text = str(value).strip().lower()
        if text == "":
            return None
        if text in ("l", "left"):
            return cls.LEFT
        if text in ("r", "right"):
            return cls.RIGHT
        raise ValueError(f"unrecognised side {value!r}")

    def opposite(self):
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


class Source(str, enum.Enum):
    METADATA = "METADATA"
    EXTERNAL = "EXTERNAL"
    GEOMETRIC = "GEOMETRIC"


@dataclass(frozen=True)
class SideLabel:
    value: Side
    source: Source


def column_skewness_parts(mask):
    """Exact integer ``(n, m2_num, m3_num)`` for the set-pixel column coordinates.

    ``m2_num = n*S2 - S1**2`` and ``m3_num = n**2*S3 - 3*n*S1*S2 + 2*S1**3`` are
    ``n**2`` and ``n**3`` times the central moments, so their signs are exact.
    """
    cols = np.nonzero(as_mask(mask))[1].astype(np.int64)
    n = int(cols.size)
    s1 = int(cols.sum())
    s2 = int((cols * cols).sum())
    s3 = int((cols * cols * cols).sum())
    m2 = n * s2 - s1 * s1
    m3 = n * n * s3 - 3 * n * s1 * s2 + 2 * s1 ** 3
    return n, m2, m3


def column_skewness(mask):
    """Standardised third central moment of the set-pixel column coordinates
    (0.0 when all pixels share one column)."""
    n, m2, m3 = column_skewness_parts(mask)
    if n == 0 or m2 == 0:
        return 0.0
    # m3/n^3 over (m2/n^2)^1.5
    return float(m3) / float(m2) ** 1.5


def classify_side_geometric(mask, positive_is_right=True):
    """RIGHT when the column skewness is positive, LEFT when negative or zero.

    ``positive_is_right=False`` swaps the convention (zero still maps to LEFT).
    """
    n, _, m3 = column_skewness_parts(mask)
    if n < 3:
        raise DegenerateMask(f"need at least 3 set pixels, got {n}")
    if m3 == 0:
        side = Side.LEFT
    elif (m3 > 0) == positive_is_right:
        side = Side.RIGHT
    else:
        side = Side.LEFT
    return SideLabel(side, Source.GEOMETRIC)


@dataclass
class SideResolution:
    labels: dict  # id -> SideLabel
    conflicts: list  # [{"id", "metadata", "external", "geometric"}], sorted by id


def resolve_sides(manifest, masks=None, external=None, positive_is_right=True):
    """Assign one :class:`SideLabel` per manifest entry.

    ``masks`` maps id -> mask, ``external`` maps id -> side.  Every available
    source is evaluated so disagreements can be reported; the highest-priority
    source wins.  Raises :class:`UnlabelableImage` if an entry has no source.
    """
    masks = masks or {}
    external = external or {}
    labels = {}
    conflicts = []
    for entry in sorted(manifest.entries, key=lambda e: e.id):
        votes = {}
        if entry.side is not None:
            votes["metadata"] = Side.parse(entry.side)
        if entry.id in external and external[entry.id] is not None:
            votes["external"] = Side.parse(external[entry.id])
        if entry.id in masks:
            votes["geometric"] = classify_side_geometric(
                masks[entry.id], positive_is_right
            ).value
        if not votes:
            raise UnlabelableImage(f"no side source for image {entry.id!r}")
        for key, source in (
            ("metadata", Source.METADATA),
            ("external", Source.EXTERNAL),
            ("geometric", Source.GEOMETRIC),
        ):
            if key in votes:
                labels[entry.id] = SideLabel(votes[key], source)
                break
        if len(set(votes.values())) > 1:
            conflicts.append(
                {
                    "id": entry.id,
                    "metadata": _value_or_none(votes.get("metadata")),
                    "external": _value_or_none(votes.get("external")),
                    "geometric": _value_or_none(votes.get("geometric")),
                }
            )
    return SideResolution(labels, conflicts)


def _value_or_none(side):
    return None if side is None else side.value
