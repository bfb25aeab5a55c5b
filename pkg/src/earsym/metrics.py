"""Verification and identification metrics.

Operating points are read off the empirical step functions; nothing is
interpolated.  The decision rule everywhere is "match iff score >= t", so

    FMR(t)  = fraction of impostor scores >= t
    FNMR(t) = fraction of genuine scores  <  t
"""

import math
from fractions import Fraction
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    EmptyGallery,
    EmptyScoreList,
    SubjectNotInGallery,
    TooFewScores,
)

DEFAULT_FMR = 0.01
_GRID = 2**53


def _scores(values, name):
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyScoreList(f"{name} score list is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} scores must be finite")
    return np.sort(arr)


def auc(genuine, impostor):
    """Mann-Whitney AUC: P(genuine > impostor) with ties counted 1/2."""
    g = _scores(genuine, "genuine")
    imp = _scores(impostor, "impostor")
    below = np.searchsorted(imp, g, side="left")
    not_above = np.searchsorted(imp, g, side="right")
    twice_u = int(below.sum()) + int(not_above.sum())  # wins count 2, ties 1
    total = 2 * g.size * imp.size
    # round the exact ratio onto the 2**-53 grid (half to even): 1 - x is exact
    # there, so auc(impostor, genuine) == 1 - auc(genuine, impostor) bit for bit
    return round(Fraction(twice_u * _GRID, total)) / _GRID


def _fmr(imp_sorted, thresholds):
    return (imp_sorted.size - np.searchsorted(imp_sorted, thresholds, side="left")) / imp_sorted.size


def _fnmr(gen_sorted, thresholds):
    return np.searchsorted(gen_sorted, thresholds, side="left") / gen_sorted.size


def fnmr_at_fmr(genuine, impostor, fmr_target=DEFAULT_FMR):
    """``(fnmr, threshold)`` at the smallest threshold whose FMR is within budget.

    Candidate thresholds are the distinct impostor scores plus ``+inf``.
    """
    if not 0.0 < fmr_target < 1.0:
        raise ValueError(f"fmr_target must lie in (0, 1), got {fmr_target}")
    g = _scores(genuine, "genuine")
    imp = _scores(impostor, "impostor")
    candidates = np.append(np.unique(imp), np.inf)
    ok = np.flatnonzero(_fmr(imp, candidates) <= fmr_target)
    t = float(candidates[ok[0]])
    return float(_fnmr(g, np.array([t]))[0]), t


def eer(genuine, impostor):
    """``(eer, threshold)`` where |FMR - FNMR| is smallest.

    Candidates are all distinct scores plus both infinities; ties go to the
    smaller threshold.  The returned rate is the mean of FMR and FNMR there.
    """
    g = _scores(genuine, "genuine")
    imp = _scores(impostor, "impostor")
    candidates = np.concatenate([[-np.inf], np.unique(np.concatenate([g, imp])), [np.inf]])
    fmr = _fmr(imp, candidates)
    fnmr = _fnmr(g, candidates)
    best = int(np.argmin(np.abs(fmr - fnmr)))
    return float((fmr[best] + fnmr[best]) / 2.0), float(candidates[best])


def dprime(genuine, impostor):
    """Pooled-variance d' with unbiased sample variances.

    Returns ``+/-inf`` when both variances vanish and the means differ.
    """
    g = _scores(genuine, "genuine")
    imp = _scores(impostor, "impostor")
    if g.size < 2 or imp.size < 2:
        raise TooFewScores("d-prime needs at least 2 genuine and 2 impostor scores")
    diff = float(g.mean() - imp.mean())
    pooled = (float(g.var(ddof=1)) + float(imp.var(ddof=1))) / 2.0
    if pooled == 0.0:
        if diff == 0.0:
            return 0.0
        return math.copysign(math.inf, diff)
    return diff / math.sqrt(pooled)


# -- identification -----------------------------------------------------------

def rank_k(gallery, probes, k=1):
    """Closed-set rank-k identification rate.

    ``gallery`` and ``probes`` are sequences of ``(id, subject, vector)``.
    Gallery entries are ranked by descending cosine, ties by ascending id.
    """
    if len(gallery) == 0:
        raise EmptyGallery("gallery is empty")
    if len(probes) == 0:
        raise EmptyGallery("no probes given")
    if k < 1:
        raise ValueError("k must be >= 1")
    gallery = sorted(gallery, key=lambda item: item[0])
    g_subjects = [item[1] for item in gallery]
    known = set(g_subjects)
    for probe_id, subject, _ in probes:
        if subject not in known:
            raise SubjectNotInGallery(f"probe {probe_id!r}: subject {subject!r} not in gallery")
    g = np.vstack([np.asarray(item[2], dtype=np.float64) for item in gallery])
    p = np.vstack([np.asarray(item[2], dtype=np.float64) for item in probes])
    g = g / np.linalg.norm(g, axis=1, keepdims=True)
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    sims = np.clip(p @ g.T, -1.0, 1.0)
    return rank_k_scores(sims, g_subjects, [item[1] for item in probes], k)


def rank_k_scores(sims, gallery_subjects, probe_subjects, k=1):
    """Rank-k rate from a ``(n_probes, n_gallery)`` score matrix whose columns
    are already in tie-breaking order."""
    # stable sort on -score keeps column order among ties
    order = np.argsort(-np.asarray(sims, dtype=np.float64), axis=1, kind="stable")[:, :k]
    g_subjects = np.asarray(gallery_subjects, dtype=object)
    p_subjects = np.asarray(probe_subjects, dtype=object)
    hits = (g_subjects[order] == p_subjects[:, None]).any(axis=1)
    return float(hits.mean())


def rank_curve(gallery, probes, max_k):
    return [rank_k(gallery, probes, k) for k in range(1, max_k + 1)]


# -- bootstrap ----------------------------------------------------------------

def metric_function(name, fmr_target=DEFAULT_FMR):
    name = name.lower().replace("-", "_")
    if name == "auc":
        return auc
    if name in ("fnmr", "fnmr_at_fmr"):
        return lambda g, i: fnmr_at_fmr(g, i, fmr_target)[0]
    if name == "eer":
        return lambda g, i: eer(g, i)[0]
    if name == "dprime":
        return dprime
    raise ValueError(f"unknown metric {name!r}")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    level: float
    B: int
    seed: int


def bootstrap_ci(metric, genuine, impostor, B=1000, level=0.95, seed=0, fmr_target=DEFAULT_FMR):
    """Percentile bootstrap interval for a named metric (or a callable).

    Genuine and impostor scores are resampled independently with replacement.
    Replicate ``b`` draws from ``default_rng(seed + b)`` so any replicate can be
    recomputed on its own.
    """
    if B < 100:
        raise ValueError(f"B must be >= 100, got {B}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    fn = metric_function(metric, fmr_target) if isinstance(metric, str) else metric
    g = np.asarray(genuine, dtype=np.float64)
    imp = np.asarray(impostor, dtype=np.float64)
    if g.size == 0 or imp.size == 0:
        raise EmptyScoreList("bootstrap needs non-empty score lists")
    reps = np.empty(B)
    for b in range(B):
        rng = np.random.default_rng(seed + b)
        reps[b] = fn(g[rng.integers(0, g.size, g.size)], imp[rng.integers(0, imp.size, imp.size)])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(reps, [alpha, 1.0 - alpha])
    return Interval(float(lo), float(hi), float(level), int(B), int(seed))


# -- report -------------------------------------------------------------------

@dataclass
class MetricReport:
    auc: float
    fnmr_at_fmr: float
    fmr_target: float
    eer: float
    eer_threshold: float
    dprime: float
    threshold_used: float
    n_genuine: int
    n_impostor: int
    genuine_mean: float
    impostor_mean: float
    protocol: str = None
    ci: dict = None  # metric name -> Interval

    def to_dict(self):
        out = asdict(self)
        if self.ci is not None:
            out["ci"] = {name: asdict(iv) for name, iv in sorted(self.ci.items())}
        return out


BOOTSTRAP_METRICS = ("auc", "fnmr_at_fmr", "eer", "dprime")


def compute_report(genuine, impostor, fmr_target=DEFAULT_FMR, bootstrap=0, level=0.95,
                   seed=0, protocol=None):
    """All verification metrics for one genuine/impostor split.

    ``bootstrap`` > 0 adds percentile intervals with that many replicates.
    """
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    fnmr, threshold = fnmr_at_fmr(genuine, impostor, fmr_target)
    rate, eer_t = eer(genuine, impostor)
    ci = None
    if bootstrap:
        ci = {
            name: bootstrap_ci(name, genuine, impostor, B=bootstrap, level=level,
                               seed=seed, fmr_target=fmr_target)
            for name in BOOTSTRAP_METRICS
        }
    return MetricReport(
        auc=auc(genuine, impostor),
        fnmr_at_fmr=fnmr,
        fmr_target=float(fmr_target),
        eer=rate,
        eer_threshold=eer_t,
        dprime=dprime(genuine, impostor),
        threshold_used=threshold,
        n_genuine=int(genuine.size),
        n_impostor=int(impostor.size),
        genuine_mean=float(np.sort(genuine).mean()),
        impostor_mean=float(np.sort(impostor).mean()),
        protocol=None if protocol is None else str(getattr(protocol, "value", protocol)),
        ci=ci,
    )


def histogram(scores, bins=50, lo=-1.0, hi=1.0):
    """Counts over ``bins`` uniform bins on [lo, hi]; the last bin is closed."""
    counts, edges = np.histogram(np.asarray(scores, dtype=np.float64), bins=bins, range=(lo, hi))
    return counts, edges
