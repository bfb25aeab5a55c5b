"""File formats.

* PGM (binary ``P5``) images and masks.
* EARB embedding store: little-endian ``b"EARB"``, u32 version (1), u32 dim,
  u32 count, then ``count*dim`` float32 values row-major; ``index.csv``
  (``row,id``) in the same directory names the rows.
* CSV manifests, side predictions, pair sets, score sets and class maps.
* Stable JSON (sorted keys, floats with 17 significant digits).
"""

import csv
import io as _io
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimMismatch,
    DuplicateId,
    InputError,
    MagicMismatch,
    MissingEmbedding,
    ParseError,
    TruncatedFile,
)

EARB_MAGIC = b"EARB"
EARB_VERSION = 1
_EARB_HEADER = struct.Struct("<4sIII")
STORE_FILE = "embeddings.earb"
INDEX_FILE = "index.csv"

MANIFEST_HEADER = ["id", "subject", "side", "split", "pose_deg"]
HIST_BINS = 50


# -- PGM ----------------------------------------------------------------------

def _pgm_tokens(data, count):
    """First ``count`` header tokens and the offset of the raster."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def parse_pgm(data, path=None):
    """Decode binary PGM bytes into a 2-D array (uint8, or uint16 if maxval > 255)."""
    if data[:2] != b"P5":
        raise ParseError(f"not a binary PGM (magic {data[:2]!r})", path=path)
    try:
        tokens, offset = _pgm_tokens(data, 4)
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise ParseError(f"bad PGM header: {exc}", path=path) from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ParseError(f"bad PGM geometry {width}x{height} maxval {maxval}", path=path)
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    need = width * height * dtype.itemsize
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise TruncatedFile(f"{path or 'PGM'}: expected {need} raster bytes, got {len(raster)}")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return arr.astype(np.uint16 if maxval >= 256 else np.uint8), maxval


def read_pgm(path):
    data = Path(path).read_bytes()
    arr, _ = parse_pgm(data, path=str(path))
    return arr


def write_pgm(path, image):
    """Write an 8-bit P5 file; values are rounded and clipped to [0, 255]."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr.astype(np.float64)), 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_mask(path):
    """Mask from a PGM: a pixel is set when its value is at least half of maxval
    (>= 128 for 8-bit files)."""
    data = Path(path).read_bytes()
    arr, maxval = parse_pgm(data, path=str(path))
    return arr.astype(np.int64) * 2 >= maxval + 1


def write_mask(path, mask):
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


# -- embedding store ----------------------------------------------------------

@dataclass
class EmbeddingStore:
    ids: tuple
    vectors: np.ndarray  # (count, dim)

    def __post_init__(self):
        self.ids = tuple(self.ids)
        self.vectors = np.asarray(self.vectors)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise DimMismatch(
                f"{len(self.ids)} ids for a vector block of shape {self.vectors.shape}"
            )
        if len(set(self.ids)) != len(self.ids):
            raise InputError("embedding store ids must be unique")
        self._rows = {image_id: i for i, image_id in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def __contains__(self, image_id):
        return image_id in self._rows

    def __getitem__(self, image_id):
        return self.vectors[self._rows[image_id]]

    @property
    def dim(self):
        return int(self.vectors.shape[1])

    def astype(self, dtype):
        return EmbeddingStore(self.ids, self.vectors.astype(dtype))

    def matrix_for(self, ids):
        try:
            rows = [self._rows[i] for i in ids]
        except KeyError as exc:
            raise MissingEmbedding(f"no embedding for {exc.args[0]!r}") from None
        return np.asarray(self.vectors[rows], dtype=np.float64)

    def subset(self, ids):
        return EmbeddingStore(tuple(ids), self.matrix_for(ids))


def _store_paths(path):
    path = Path(path)
    if path.suffix.lower() == ".earb":
        return path, path.parent / INDEX_FILE
    return path / STORE_FILE, path / INDEX_FILE


def store_embeddings(path, store):
    """Write ``store`` as ``embeddings.earb`` + ``index.csv``.

    ``path`` is a directory (created if needed) or an explicit ``.earb`` file,
    whose index goes next to it.
    """
    bin_path, index_path = _store_paths(path)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    vectors = np.ascontiguousarray(store.vectors, dtype="<f4")
    count, dim = vectors.shape
    with open(bin_path, "wb") as fh:
        fh.write(_EARB_HEADER.pack(EARB_MAGIC, EARB_VERSION, dim, count))
        fh.write(vectors.tobytes())
    with open(index_path, "w", newline="") as fh:
        fh.write("row,id\n")
        fh.writelines(f"{i},{image_id}\n" for i, image_id in enumerate(store.ids))
    return bin_path, index_path


def load_embeddings(path):
    """Read a store written by :func:`store_embeddings`; values stay float32."""
    bin_path, index_path = _store_paths(path)
    data = Path(bin_path).read_bytes()
    if len(data) < _EARB_HEADER.size:
        raise TruncatedFile(f"{bin_path}: header needs {_EARB_HEADER.size} bytes")
    magic, version, dim, count = _EARB_HEADER.unpack_from(data)
    if magic != EARB_MAGIC:
        raise MagicMismatch(f"{bin_path}: magic {magic!r}, expected {EARB_MAGIC!r}")
    if version != EARB_VERSION:
        raise MagicMismatch(f"{bin_path}: unsupported version {version}")
    if dim < 1:
        raise DimMismatch(f"{bin_path}: dim {dim}")
    need = count * dim * 4
    body = data[_EARB_HEADER.size:]
    if len(body) != need:
        raise TruncatedFile(f"{bin_path}: expected {need} data bytes, got {len(body)}")
    vectors = np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(np.float32)

    ids = [None] * count
    with open(index_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row", "id"]:
            raise ParseError(f"expected header 'row,id', got {header}", line=1, path=str(index_path))
        seen = 0
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                row = int(rec[0])
                image_id = rec[1]
            except (ValueError, IndexError):
                raise ParseError("bad index row", line=lineno, path=str(index_path)) from None
            if not 0 <= row < count:
                raise TruncatedFile(f"{index_path}:{lineno}: row {row} outside 0..{count - 1}")
            if ids[row] is not None:
                raise ParseError(f"row {row} listed twice", line=lineno, path=str(index_path))
            ids[row] = image_id
            seen += 1
    if seen != count:
        raise TruncatedFile(f"{index_path}: {seen} index rows for {count} stored vectors")
    return EmbeddingStore(tuple(ids), vectors)


# -- CSV helpers --------------------------------------------------------------

def fmt_csv_float(x):
    return format(float(x), ".9g")


def fmt_exact_float(x):
    """Shortest text that parses back to the same double."""
    return repr(float(x))


def _read_csv(path, required):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", line=1, path=str(path))
        header = [h.strip() for h in header]
        missing = [col for col in required if col not in header]
        if missing:
            raise ParseError(f"missing column(s) {missing}", line=1, path=str(path))
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) > len(header):
                raise ParseError(f"{len(rec)} fields, header has {len(header)}", line=lineno,
                                 path=str(path))
            rec = rec + [""] * (len(header) - len(rec))
            rows.append((lineno, dict(zip(header, (c.strip() for c in rec)))))
    return rows


# -- manifest -----------------------------------------------------------------

def load_manifest(path):
    """Parse a manifest CSV (``id,subject,side,split,pose_deg``).

    ``side`` and ``pose_deg`` may be empty; ``split`` defaults to TEST when
    empty.  Sides accept L/R/left/right in any case.
    """
    from .protocols import Entry, Manifest, Split
    from .sides import Side

    entries = []
    first_seen = {}
    for lineno, row in _read_csv(path, ["id", "subject"]):
        image_id = row["id"]
        if not image_id:
            raise ParseError("empty id", line=lineno, path=str(path))
        if any(ch in image_id for ch in ',"\r\n'):
            raise ParseError(f"id {image_id!r} contains a comma, quote or newline",
                             line=lineno, path=str(path))
        if image_id in first_seen:
            raise DuplicateId(image_id, first_seen[image_id], lineno, path=str(path))
        first_seen[image_id] = lineno
        if not row["subject"]:
            raise ParseError("empty subject", line=lineno, path=str(path))
        try:
            side = Side.parse(row.get("side", ""))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=str(path)) from None
        split_text = row.get("split", "").upper() or "TEST"
        if split_text not in ("TRAIN", "TEST"):
            raise ParseError(f"unknown split {row.get('split')!r}", line=lineno, path=str(path))
        pose_text = row.get("pose_deg", "")
        try:
            pose = float(pose_text) if pose_text else None
        except ValueError:
            raise ParseError(f"bad pose_deg {pose_text!r}", line=lineno, path=str(path)) from None
        entries.append(Entry(image_id, row["subject"], side, Split(split_text), pose))
    return Manifest(entries)


def write_manifest(path, manifest):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(MANIFEST_HEADER) + "\n")
        for e in manifest.entries:
            side = "" if e.side is None else e.side.value
            pose = "" if e.pose_deg is None else fmt_csv_float(e.pose_deg)
            fh.write(f"{e.id},{e.subject},{side},{e.split.value},{pose}\n")


def read_side_predictions(path):
    """External predictions ``id,side`` (side in L/R) as ``{id: Side}``."""
    from .sides import Side

    out = {}
    for lineno, row in _read_csv(path, ["id", "side"]):
        try:
            side = Side.parse(row["side"])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=str(path)) from None
        if row["id"] in out:
            raise ParseError(f"duplicate id {row['id']!r}", line=lineno, path=str(path))
        out[row["id"]] = side
    return out


def write_side_labels(path, labels):
    with open(path, "w", newline="") as fh:
        fh.write("id,side,source\n")
        for image_id in sorted(labels):
            lab = labels[image_id]
            fh.write(f"{image_id},{lab.value.value},{lab.source.value}\n")


def read_side_labels(path):
    """``id,side[,source]`` file as ``{id: Side}``."""
    return read_side_predictions(path)


# -- pairs / scores / classes -------------------------------------------------

def _relation_text(relation):
    return "" if relation is None else relation.value


def write_pairs(path, pairs):
    with open(path, "w", newline="") as fh:
        fh.write("id_a,id_b,genuine,side_relation\n")
        fh.writelines(
            f"{a},{b},{int(g)},{_relation_text(r)}\n" for a, b, g, r in pairs.rows()
        )


def _parse_relation(text, lineno, path):
    from .protocols import OPPOSITE, SAME, UNKNOWN

    text = text.upper()
    if text == "SAME":
        return SAME
    if text == "OPPOSITE":
        return OPPOSITE
    if text == "":
        return UNKNOWN
    raise ParseError(f"bad side_relation {text!r}", line=lineno, path=str(path))


def _parse_flag(text, lineno, path):
    if text in ("1", "true", "True"):
        return True
    if text in ("0", "false", "False"):
        return False
    raise ParseError(f"bad genuine flag {text!r}", line=lineno, path=str(path))


def _infer_protocol(relation):
    from .protocols import OPPOSITE, SAME, Protocol

    if relation.size and np.all(relation == SAME):
        return Protocol.SAME_SIDE
    if relation.size and np.all(relation == OPPOSITE):
        return Protocol.OPPOSITE_SIDE
    return Protocol.ALL


def read_pairs(path):
    from .protocols import PairSet

    rows = _read_csv(path, ["id_a", "id_b", "genuine", "side_relation"])
    ids = sorted({r["id_a"] for _, r in rows} | {r["id_b"] for _, r in rows})
    pos = {image_id: i for i, image_id in enumerate(ids)}
    a = np.array([pos[r["id_a"]] for _, r in rows], dtype=np.int64)
    b = np.array([pos[r["id_b"]] for _, r in rows], dtype=np.int64)
    genuine = np.array([_parse_flag(r["genuine"], n, path) for n, r in rows], dtype=bool)
    relation = np.array([_parse_relation(r["side_relation"], n, path) for n, r in rows],
                        dtype=np.int8)
    return PairSet(tuple(ids), a, b, genuine, relation, _infer_protocol(relation))


def write_scores(path, scores):
    """Score CSV; scores use round-trip float text so metrics recomputed from
    the file match the in-memory values exactly."""
    from .protocols import _relation_name

    with open(path, "w", newline="") as fh:
        fh.write("score,genuine,side_relation\n")
        fh.writelines(
            f"{fmt_exact_float(s)},{int(g)},{_relation_text(_relation_name(r))}\n"
            for s, g, r in zip(scores.scores.tolist(), scores.genuine.tolist(),
                               scores.relation.tolist())
        )


def read_scores(path):
    from .protocols import ScoreSet

    rows = _read_csv(path, ["score", "genuine", "side_relation"])
    try:
        values = np.array([float(r["score"]) for _, r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"bad score value: {exc}", path=str(path)) from None
    genuine = np.array([_parse_flag(r["genuine"], n, path) for n, r in rows], dtype=bool)
    relation = np.array([_parse_relation(r["side_relation"], n, path) for n, r in rows],
                        dtype=np.int8)
    return ScoreSet(values, genuine, relation, _infer_protocol(relation))


def write_classes(out_dir, arrangement):
    out_dir = Path(out_dir)
    with open(out_dir / "classes.csv", "w", newline="") as fh:
        fh.write("id,class_index\n")
        fh.writelines(f"{i},{c}\n" for i, c in sorted(arrangement.mapping.items()))
    write_json(out_dir / "classes.json",
               {"mode": arrangement.mode.value, "num_classes": arrangement.num_classes})


def write_ground_truth(path, rows):
    """``rows`` of ``(id, subject, side, rotation_deg)``."""
    with open(path, "w", newline="") as fh:
        fh.write("id,subject,side,rotation_deg\n")
        for image_id, subject, side, rot in rows:
            fh.write(f"{image_id},{subject},{side},{fmt_csv_float(rot)}\n")


# -- JSON ---------------------------------------------------------------------

def _json_value(obj):
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        text = format(x, ".17g")
        if "e" not in text and "." not in text and "inf" not in text:
            text += ".0"
        return text
    if isinstance(obj, str):
        return json.dumps(obj)
    if hasattr(obj, "value") and isinstance(obj.value, str):  # enums
        return json.dumps(obj.value)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {_json_value(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_value(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj):
    """Deterministic JSON: sorted keys, 17 significant digits, infinities as
    the strings ``"inf"``/``"-inf"``."""
    return _json_value(obj)


def write_json(path, obj):
    Path(path).write_text(dumps_json(obj) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


# -- reports ------------------------------------------------------------------

def histogram_csv(genuine, impostor, bins=HIST_BINS):
    from .metrics import histogram

    g_counts, edges = histogram(genuine, bins)
    i_counts, _ = histogram(impostor, bins)
    buf = _io.StringIO()
    buf.write("bin_lo,bin_hi,genuine_count,impostor_count\n")
    for k in range(bins):
        buf.write(f"{fmt_csv_float(edges[k])},{fmt_csv_float(edges[k + 1])},"
                  f"{int(g_counts[k])},{int(i_counts[k])}\n")
    return buf.getvalue()


def emit_report(report, out_dir, svg=False, scores=None):
    """Write ``metrics.json`` and histogram CSV(s) (plus ``histogram.svg`` on request).

    A :class:`~earsym.synth.SymmetryReport` yields ``hist_same.csv`` and
    ``hist_opposite.csv``.  A single :class:`~earsym.metrics.MetricReport`
    needs ``scores`` (its ScoreSet) and yields ``hist.csv``.
    """
    from .synth import SymmetryReport

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "metrics.json"]
    write_json(written[0], report.to_dict())
    if isinstance(report, SymmetryReport):
        for name, ss in (("same", report.same_scores), ("opposite", report.opposite_scores)):
            path = out_dir / f"hist_{name}.csv"
            path.write_text(histogram_csv(ss.genuine_scores, ss.impostor_scores))
            written.append(path)
        if svg:
            path = out_dir / "histogram.svg"
            path.write_text(render_histogram_svg(report))
            written.append(path)
    elif scores is not None:
        path = out_dir / "hist.csv"
        path.write_text(histogram_csv(scores.genuine_scores, scores.impostor_scores))
        written.append(path)
        if svg:
            path = out_dir / "hist.svg"
            path.write_text(render_single_svg(report, scores))
            written.append(path)
    return written


# -- SVG ----------------------------------------------------------------------

_SVG_W, _SVG_H, _PAD = 480, 300, 40
_RED, _BLUE = "#d62728", "#1f77b4"


def _density(scores, bins):
    from .metrics import histogram

    counts, edges = histogram(scores, bins)
    total = max(int(counts.sum()), 1)
    return counts / total, edges


def _polyline(dens, edges, ymax, color, dash):
    pts = []
    for k, d in enumerate(dens):
        x0 = _PAD + (edges[k] + 1.0) / 2.0 * (_SVG_W - 2 * _PAD)
        x1 = _PAD + (edges[k + 1] + 1.0) / 2.0 * (_SVG_W - 2 * _PAD)
        y = _SVG_H - _PAD - (d / ymax) * (_SVG_H - 2 * _PAD)
        pts.append(f"{x0:.2f},{y:.2f}")
        pts.append(f"{x1:.2f},{y:.2f}")
    extra = ' stroke-dasharray="5,3"' if dash else ""
    return (f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{extra} '
            f'points="{" ".join(pts)}"/>')


def _svg_frame(curves, labels):
    ymax = max([float(d.max()) for d, _, _, _ in curves] + [1e-12])
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect x="0" y="0" width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<line x1="{_PAD}" y1="{_SVG_H - _PAD}" x2="{_SVG_W - _PAD}" y2="{_SVG_H - _PAD}" '
        'stroke="black"/>',
    ]
    for tick in (-1.0, -0.5, 0.0, 0.5, 1.0):
        x = _PAD + (tick + 1.0) / 2.0 * (_SVG_W - 2 * _PAD)
        parts.append(f'<text x="{x:.2f}" y="{_SVG_H - _PAD + 16}" font-size="11" '
                     f'text-anchor="middle">{tick:g}</text>')
    for dens, edges, color, dash in curves:
        parts.append(_polyline(dens, edges, ymax, color, dash))
    for k, (text, color) in enumerate(labels):
        parts.append(f'<text x="{_SVG_W - _PAD}" y="{_PAD - 18 + 14 * k}" font-size="12" '
                     f'text-anchor="end" fill="{color}">{text}</text>')
    parts.append(f'<text x="{_SVG_W / 2:.0f}" y="{_SVG_H - 6}" font-size="12" '
                 'text-anchor="middle">cosine similarity</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_histogram_svg(report, bins=HIST_BINS):
    """Genuine (solid) and impostor (dashed) score densities, same-side in red,
    opposite-side in blue, d' values in the top-right corner."""
    curves = []
    for ss, color in ((report.same_scores, _RED), (report.opposite_scores, _BLUE)):
        for scores, dash in ((ss.genuine_scores, False), (ss.impostor_scores, True)):
            dens, edges = _density(scores, bins)
            curves.append((dens, edges, color, dash))
    labels = [
        (f"same-side d'={report.same_side.dprime:.2f}", _RED),
        (f"opposite-side d'={report.opposite_side.dprime:.2f}", _BLUE),
    ]
    return _svg_frame(curves, labels)


def render_single_svg(report, scores, bins=HIST_BINS):
    curves = []
    for values, dash in ((scores.genuine_scores, False), (scores.impostor_scores, True)):
        dens, edges = _density(values, bins)
        curves.append((dens, edges, _RED, dash))
    return _svg_frame(curves, [(f"d'={report.dprime:.2f}", _RED)])


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
