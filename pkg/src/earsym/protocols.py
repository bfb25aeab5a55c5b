"""Class arrangements and verification pair protocols.

Pair sets are stored as index arrays into the sorted TEST ids rather than as
per-pair objects: a 4000-image test split already yields 8M pairs.
"""

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import InputError, MissingEmbedding, MissingSideLabel, TooFewImages, ZeroVector
from .sides import Side, SideLabel


class Split(str, enum.Enum):
    TRAIN = "TRAIN"
    TEST = "TEST"


class Mode(str, enum.Enum):
    SINGLE = "single"
    SPLIT = "split"


class Protocol(str, enum.Enum):
    SAME_SIDE = "same-side"
    OPPOSITE_SIDE = "opposite-side"
    ALL = "all"


class Relation(str, enum.Enum):
    SAME = "SAME"
    OPPOSITE = "OPPOSITE"


# relation codes used in the pair/score arrays
SAME, OPPOSITE, UNKNOWN = 1, 0, -1


@dataclass(frozen=True)
class Entry:
    id: str
    subject: str
    side: Side = None
    split: Split = Split.TEST
    pose_deg: float = None

    def __post_init__(self):
        object.__setattr__(self, "side", Side.parse(self.side))
        if not isinstance(self.split, Split):
            object.__setattr__(self, "split", Split(str(self.split).upper()))


@dataclass
class Manifest:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def by_id(self):
        return {e.id: e for e in self.entries}

    def split(self, split):
        return [e for e in self.entries if e.split is split]

    def with_sides(self, labels):
        """Copy with sides replaced by ``labels`` (id -> Side or SideLabel)."""
        out = []
        for e in self.entries:
            if e.id in labels:
                lab = labels[e.id]
                e = replace(e, side=lab.value if isinstance(lab, SideLabel) else Side.parse(lab))
            out.append(e)
        return Manifest(out)


# -- class arrangement --------------------------------------------------------

@dataclass
class ClassArrangement:
    mode: Mode
    mapping: dict  # id -> class index
    num_classes: int


def arrange_classes(manifest, mode):
    """One class per subject (SINGLE) or per occupied (subject, side) (SPLIT).

    Only TRAIN entries are arranged.  Class indices follow the sorted order of
    the class keys.
    """
    mode = Mode(mode)
    train = manifest.split(Split.TRAIN)
    if not train:
        raise InputError("manifest has no TRAIN entries to arrange")
    if mode is Mode.SINGLE:
        keys = {e.id: (e.subject,) for e in train}
    else:
        missing = [e.id for e in train if e.side is None]
        if missing:
            raise MissingSideLabel(
                f"{len(missing)} TRAIN entries lack a side, e.g. {sorted(missing)[:3]}"
            )
        keys = {e.id: (e.subject, e.side.value) for e in train}
    index = {key: i for i, key in enumerate(sorted(set(keys.values())))}
    mapping = {image_id: index[key] for image_id, key in sorted(keys.items())}
    return ClassArrangement(mode, mapping, len(index))


# -- pairs --------------------------------------------------------------------

@dataclass
class PairSet:
    ids: tuple  # sorted ids the index arrays refer to
    a: np.ndarray
    b: np.ndarray
    genuine: np.ndarray
    relation: np.ndarray  # SAME / OPPOSITE / UNKNOWN codes
    protocol: Protocol

    def __len__(self):
        return int(self.a.size)

    def rows(self):
        """Yield ``(id_a, id_b, genuine, relation)`` with relation a
        :class:`Relation` or ``None``."""
        for ia, ib, g, r in zip(self.a.tolist(), self.b.tolist(),
                                self.genuine.tolist(), self.relation.tolist()):
            yield self.ids[ia], self.ids[ib], bool(g), _relation_name(r)

    def counts(self):
        """``{(genuine, relation): count}`` for summaries."""
        out = {}
        for g in (True, False):
            for code in (SAME, OPPOSITE, UNKNOWN):
                n = int(np.count_nonzero((self.genuine == g) & (self.relation == code)))
                if n:
                    out[(g, _relation_name(code))] = n
        return out


def _relation_name(code):
    if code == SAME:
        return Relation.SAME
    if code == OPPOSITE:
        return Relation.OPPOSITE
    return None


def _side_codes(entries):
    codes = np.full(len(entries), -1, dtype=np.int8)
    for i, e in enumerate(entries):
        if e.side is not None:
            codes[i] = 0 if Side.parse(e.side) is Side.LEFT else 1
    return codes


def generate_pairs(manifest, protocol, side=None, max_impostors=None, seed=0):
    """Exhaustive unordered TEST pairs for ``protocol``.

    SAME_SIDE pools L-L and R-R; ``side`` restricts it to one of them.
    ``max_impostors`` keeps a seeded random subset of the impostor pairs (all
    genuine pairs are kept).  Pairs are in ``(id_a, id_b)`` order.
    """
    protocol = Protocol(protocol)
    test = sorted(manifest.split(Split.TEST), key=lambda e: e.id)
    if len(test) < 2:
        raise TooFewImages(f"need at least 2 TEST entries, got {len(test)}")
    sides = _side_codes(test)
    if protocol is not Protocol.ALL and (sides < 0).any():
        missing = [e.id for e, s in zip(test, sides) if s < 0]
        raise MissingSideLabel(f"{len(missing)} TEST entries lack a side, e.g. {missing[:3]}")
    subjects = {s: i for i, s in enumerate(sorted({e.subject for e in test}))}
    subj = np.array([subjects[e.subject] for e in test], dtype=np.int64)

    n = len(test)
    a, b = np.triu_indices(n, 1)
    known = (sides[a] >= 0) & (sides[b] >= 0)
    same = sides[a] == sides[b]
    relation = np.where(known, np.where(same, SAME, OPPOSITE), UNKNOWN).astype(np.int8)
    keep = None
    if protocol is Protocol.SAME_SIDE:
        keep = relation == SAME
        if side is not None:
            keep &= sides[a] == (0 if Side.parse(side) is Side.LEFT else 1)
    elif protocol is Protocol.OPPOSITE_SIDE:
        keep = relation == OPPOSITE
    if keep is not None:
        a, b, relation = a[keep], b[keep], relation[keep]
    genuine = subj[a] == subj[b]

    if max_impostors is not None and np.count_nonzero(~genuine) > max_impostors:
        imp = np.flatnonzero(~genuine)
        rng = np.random.default_rng(seed)
        keep = genuine.copy()
        keep[rng.choice(imp, size=int(max_impostors), replace=False)] = True
        a, b, relation, genuine = a[keep], b[keep], relation[keep], genuine[keep]

    return PairSet(
        ids=tuple(e.id for e in test),
        a=a.astype(np.int64),
        b=b.astype(np.int64),
        genuine=genuine,
        relation=relation,
        protocol=protocol,
    )


# -- scores -------------------------------------------------------------------

@dataclass
class ScoreSet:
    scores: np.ndarray
    genuine: np.ndarray
    relation: np.ndarray
    protocol: Protocol

    def __len__(self):
        return int(self.scores.size)

    @property
    def genuine_scores(self):
        return self.scores[self.genuine]

    @property
    def impostor_scores(self):
        return self.scores[~self.genuine]

    def restrict(self, relation):
        """Sub-score-set of one side relation, tagged with its protocol."""
        code = SAME if Relation(relation) is Relation.SAME else OPPOSITE
        keep = self.relation == code
        protocol = Protocol.SAME_SIDE if code == SAME else Protocol.OPPOSITE_SIDE
        return ScoreSet(self.scores[keep], self.genuine[keep], self.relation[keep], protocol)


def embedding_matrix(ids, embeddings):
    """Stack vectors for ``ids`` from a mapping or an :class:`EmbeddingStore`."""
    if hasattr(embeddings, "matrix_for"):
        return embeddings.matrix_for(ids)
    rows = []
    for image_id in ids:
        try:
            rows.append(np.asarray(embeddings[image_id], dtype=np.float64))
        except KeyError:
            raise MissingEmbedding(f"no embedding for {image_id!r}") from None
    return np.vstack(rows)


def score_pairs(pairs, embeddings):
    """Cosine score for every pair, keeping pair order."""
    if len(pairs) == 0:
        return ScoreSet(np.empty(0), pairs.genuine.copy(), pairs.relation.copy(), pairs.protocol)
    used = np.zeros(len(pairs.ids), dtype=bool)
    used[pairs.a] = True
    used[pairs.b] = True
    # rows only for ids that appear in a pair; remap indices
    used_idx = np.flatnonzero(used)
    remap = np.full(len(pairs.ids), -1, dtype=np.int64)
    remap[used_idx] = np.arange(used_idx.size)
    matrix = embedding_matrix([pairs.ids[i] for i in used_idx], embeddings)
    zero = ~np.any(matrix != 0, axis=1)
    if zero.any():
        raise ZeroVector(f"zero embedding for {pairs.ids[used_idx[np.argmax(zero)]]!r}")
    scores = kernels.pair_cosines(matrix, remap[pairs.a], remap[pairs.b])
    return ScoreSet(scores, pairs.genuine.copy(), pairs.relation.copy(), pairs.protocol)
