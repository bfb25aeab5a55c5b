import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from earsym import metrics
from earsym.errors import EmptyGallery, EmptyScoreList, SubjectNotInGallery, TooFewScores
from earsym.synth import SynthConfig, gen_subjects

from oracles import auc_bruteforce, eer_sweep, fnmr_sweep


def test_auc_examples():
    assert metrics.auc([0.9], [0.1]) == 1.0
    assert metrics.auc([0.5], [0.5]) == 0.5
    assert metrics.auc([0.9, 0.4], [0.5, 0.1]) == 0.75
    with pytest.raises(EmptyScoreList):
        metrics.auc([], [0.1])


def test_fnmr_example():
    impostor = [i / 100 for i in range(100)]
    fnmr, t = metrics.fnmr_at_fmr([0.995, 0.5], impostor, 0.01)
    assert t == 0.99 and fnmr == 0.5


def test_fnmr_extremes():
    impostor = np.linspace(0.0, 0.5, 300)
    assert metrics.fnmr_at_fmr([0.8, 0.9], impostor)[0] == 0.0
    assert metrics.fnmr_at_fmr([-0.5, -0.1], impostor)[0] == 1.0
    # two impostors: only +inf keeps FMR within 1%
    fnmr, t = metrics.fnmr_at_fmr([0.8, 0.9], [0.1, 0.2])
    assert fnmr == 1.0 and t == math.inf


def test_eer_examples():
    assert metrics.eer([0.8, 0.9], [0.1, 0.2])[0] == 0.0
    assert metrics.eer([0.6], [0.4])[0] == 0.0
    values = np.linspace(-0.9, 0.9, 10)
    assert metrics.eer(values, values)[0] == pytest.approx(0.5, abs=0.05)


def test_dprime_examples():
    assert metrics.dprime([0.8, 1.0], [0.0, 0.2]) == pytest.approx(0.8 / math.sqrt(0.02), abs=1e-12)
    assert metrics.dprime([0.8, 1.0], [0.0, 0.2]) == pytest.approx(5.6569, abs=1e-4)
    assert metrics.dprime([1.0, 1.0], [0.0, 0.0]) == math.inf
    assert metrics.dprime([0.0, 0.0], [1.0, 1.0]) == -math.inf
    assert metrics.dprime([0.3, 0.3], [0.3, 0.3]) == 0.0
    with pytest.raises(TooFewScores):
        metrics.dprime([1.0], [0.0, 0.1])


def test_dprime_identical_distributions():
    rng = np.random.default_rng(1234)
    g = rng.normal(0.2, 0.1, 1000)
    i = rng.normal(0.2, 0.1, 1000)
    assert abs(metrics.dprime(g, i)) < 0.2


_scores = st.lists(st.integers(-20, 20).map(lambda v: v / 20), min_size=2, max_size=200)


@settings(max_examples=200, deadline=None)
@given(_scores, _scores)
def test_dprime_antisymmetric(g, i):
    assert metrics.dprime(i, g) == -metrics.dprime(g, i)


@settings(max_examples=200, deadline=None)
@given(_scores, _scores)
def test_auc_matches_bruteforce(g, i):
    assert metrics.auc(g, i) == pytest.approx(auc_bruteforce(g, i), abs=1e-12)
    assert metrics.auc(i, g) == 1.0 - metrics.auc(g, i)


@settings(max_examples=200, deadline=None)
@given(_scores, _scores, st.sampled_from([0.001, 0.01, 0.05, 0.1, 0.3]))
def test_fnmr_matches_sweep(g, i, target):
    assert metrics.fnmr_at_fmr(g, i, target) == fnmr_sweep(g, i, target)


@settings(max_examples=200, deadline=None)
@given(_scores, _scores)
def test_eer_matches_sweep(g, i):
    assert metrics.eer(g, i) == eer_sweep(g, i)


@settings(max_examples=100, deadline=None)
@given(_scores, _scores)
def test_monotone_transform_invariance(g, i):
    f = lambda x: np.exp(3 * np.asarray(x)) - 7.0  # strictly increasing
    assert metrics.auc(f(g), f(i)) == metrics.auc(g, i)
    assert metrics.fnmr_at_fmr(f(g), f(i))[0] == metrics.fnmr_at_fmr(g, i)[0]
    assert metrics.eer(f(g), f(i))[0] == metrics.eer(g, i)[0]


@settings(max_examples=100, deadline=None)
@given(_scores, _scores, st.floats(0.0, 1.0))
def test_high_genuine_never_raises_fnmr(g, i, bump):
    extra = max(i) + 0.01 + bump
    assert metrics.fnmr_at_fmr(g + [extra], i)[0] <= metrics.fnmr_at_fmr(g, i)[0]


@settings(max_examples=100, deadline=None)
@given(_scores, _scores, st.integers(0, 2**32 - 1))
def test_permutation_invariance(g, i, seed):
    rng = np.random.default_rng(seed)
    gp, ip = rng.permutation(g), rng.permutation(i)
    a = metrics.compute_report(g, i)
    b = metrics.compute_report(gp, ip)
    assert a.to_dict() == b.to_dict()


def test_report_bounds():
    rng = np.random.default_rng(5)
    rep = metrics.compute_report(rng.normal(0.5, 0.2, 300), rng.normal(0, 0.2, 3000))
    for v in (rep.auc, rep.fnmr_at_fmr, rep.eer):
        assert 0.0 <= v <= 1.0
    assert math.isfinite(rep.dprime)
    assert rep.n_genuine == 300 and rep.n_impostor == 3000


# -- rank-k ---------------------------------------------------------------------

def test_rank_examples():
    eye = np.eye(5)
    gallery = [(f"g{i}", f"s{i}", eye[i]) for i in range(5)]
    assert metrics.rank_k(gallery, [("p", "s3", eye[3])], 1) == 1.0
    assert metrics.rank_k(gallery, [("p", "s3", eye[3] * 2.5)], 1) == 1.0


def test_rank_tie_break_by_gallery_id():
    v = np.array([1.0, 0.0])
    gallery = [("b", "s2", v), ("a", "s1", v)]
    assert metrics.rank_k(gallery, [("p", "s1", v)], 1) == 1.0
    assert metrics.rank_k(gallery, [("p", "s2", v)], 1) == 0.0
    assert metrics.rank_k(gallery, [("p", "s2", v)], 2) == 1.0


def test_rank_errors():
    v = np.ones(3)
    with pytest.raises(EmptyGallery):
        metrics.rank_k([], [("p", "s", v)])
    with pytest.raises(SubjectNotInGallery):
        metrics.rank_k([("g", "s", v)], [("p", "t", v)])


def _gallery_probes(cfg):
    man, store = gen_subjects(cfg)
    gallery, probes = [], []
    for e in man.entries:
        item = (e.id, e.subject, store[e.id])
        (gallery if e.id.endswith("_00") else probes).append(item)
    return gallery, probes


def test_synthetic_rank1_is_perfect():
    cfg = SynthConfig(n_subjects=20, imgs_per_side=5, dim=64, delta=0.0, epsilon=0.1, seed=9)
    gallery, probes = _gallery_probes(cfg)
    assert metrics.rank_k(gallery, probes, 1) == 1.0


def test_rank_curve_monotone_and_complete():
    cfg = SynthConfig(n_subjects=15, imgs_per_side=3, dim=8, delta=0.6, epsilon=2.0, seed=3)
    gallery, probes = _gallery_probes(cfg)
    curve = metrics.rank_curve(gallery, probes, len(gallery))
    assert all(a <= b for a, b in zip(curve, curve[1:]))
    assert curve[-1] == 1.0
    assert curve[0] < 1.0


# -- bootstrap ------------------------------------------------------------------

def test_bootstrap_constant_lists():
    for name in ("auc", "fnmr_at_fmr", "eer"):
        iv = metrics.bootstrap_ci(name, [0.7] * 20, [0.1] * 30, B=200)
        point = metrics.metric_function(name)([0.7] * 20, [0.1] * 30)
        assert iv.lo == iv.hi == point


def test_bootstrap_deterministic():
    rng = np.random.default_rng(2)
    g, i = rng.random(50), rng.random(60)
    a = metrics.bootstrap_ci("eer", g, i, B=200, seed=17)
    b = metrics.bootstrap_ci("eer", g, i, B=200, seed=17)
    assert a == b
    assert metrics.bootstrap_ci("eer", g, i, B=200, seed=18) != a


def test_bootstrap_replicate_seeds():
    g, i = np.arange(10.0), np.arange(12.0) - 3
    reps = []
    for b in range(100):
        rng = np.random.default_rng(5 + b)
        reps.append(metrics.auc(g[rng.integers(0, 10, 10)], i[rng.integers(0, 12, 12)]))
    lo, hi = np.quantile(reps, [0.05, 0.95])
    iv = metrics.bootstrap_ci("auc", g, i, B=100, level=0.9, seed=5)
    assert (iv.lo, iv.hi) == (lo, hi)


def test_bootstrap_rejects_small_B():
    with pytest.raises(ValueError):
        metrics.bootstrap_ci("auc", [1.0], [0.0], B=99)


@pytest.mark.slow
def test_bootstrap_auc_coverage():
    hits = 0
    for trial in range(100):
        rng = np.random.default_rng(10_000 + trial)
        g, i = rng.normal(0, 1, 50), rng.normal(0, 1, 50)
        iv = metrics.bootstrap_ci("auc", g, i, B=200, level=0.95, seed=trial)
        hits += iv.lo <= 0.5 <= iv.hi
    assert hits >= 90


def test_histogram_counts():
    counts, edges = metrics.histogram([-1.0, 0.0, 0.999, 1.0])
    assert counts.sum() == 4 and counts[-1] == 2 and len(edges) == 51
