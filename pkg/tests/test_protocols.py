import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from earsym.errors import InputError, MissingEmbedding, MissingSideLabel, TooFewImages, ZeroVector
from earsym.protocols import (OPPOSITE, SAME, UNKNOWN, Entry, Manifest, Mode, Protocol, Relation,
                              Split, arrange_classes, generate_pairs, score_pairs)
from earsym.sides import Side
from earsym.synth import SynthConfig, gen_subjects


def _two_by_two():
    return Manifest([
        Entry("a_L", "a", "L"), Entry("a_R", "a", "R"),
        Entry("b_L", "b", "L"), Entry("b_R", "b", "R"),
    ])


def _split(ps):
    g = int(ps.genuine.sum())
    return g, len(ps) - g


def test_two_subjects_pair_counts():
    man = _two_by_two()
    assert _split(generate_pairs(man, Protocol.OPPOSITE_SIDE)) == (2, 2)
    assert _split(generate_pairs(man, Protocol.SAME_SIDE)) == (0, 2)
    assert len(generate_pairs(man, Protocol.ALL)) == comb(4, 2)


def test_one_subject_two_left():
    man = Manifest([Entry("x1", "x", "L"), Entry("x2", "x", "L")])
    assert _split(generate_pairs(man, "same-side")) == (1, 0)


def test_too_few_images():
    with pytest.raises(TooFewImages):
        generate_pairs(Manifest([]), Protocol.ALL)
    with pytest.raises(TooFewImages):
        generate_pairs(Manifest([Entry("x", "s", "L"), Entry("y", "s", "L", Split.TRAIN)]),
                       Protocol.ALL)


def test_missing_side_only_matters_for_side_protocols():
    man = Manifest([Entry("x", "s", None), Entry("y", "t", "L")])
    assert len(generate_pairs(man, Protocol.ALL)) == 1
    assert list(generate_pairs(man, Protocol.ALL).rows()) == [("x", "y", False, None)]
    with pytest.raises(MissingSideLabel):
        generate_pairs(man, Protocol.SAME_SIDE)


def test_same_side_restricted_to_one_side():
    man = _two_by_two()
    left = generate_pairs(man, Protocol.SAME_SIDE, side="L")
    assert [r[:2] for r in left.rows()] == [("a_L", "b_L")]


_manifests = st.lists(
    st.tuples(st.integers(0, 5), st.sampled_from("LR")), min_size=2, max_size=30
).map(lambda rows: Manifest([Entry(f"img{i:02d}", f"s{s}", side) for i, (s, side) in enumerate(rows)]))


def _pair_set(ps):
    return {(a, b, g, r) for a, b, g, r in ps.rows()}


@settings(max_examples=100, deadline=None)
@given(_manifests)
def test_partition_and_counts(man):
    same = generate_pairs(man, Protocol.SAME_SIDE)
    opp = generate_pairs(man, Protocol.OPPOSITE_SIDE)
    every = generate_pairs(man, Protocol.ALL)
    assert _pair_set(same) | _pair_set(opp) == _pair_set(every)
    assert not _pair_set(same) & _pair_set(opp)
    n_l = sum(e.side is Side.LEFT for e in man.entries)
    n_r = len(man) - n_l
    assert len(same) == comb(n_l, 2) + comb(n_r, 2)
    assert len(opp) == n_l * n_r
    entries = man.by_id()
    for a, b, genuine, relation in every.rows():
        assert a < b
        assert genuine == (entries[a].subject == entries[b].subject)
        expected = Relation.SAME if entries[a].side is entries[b].side else Relation.OPPOSITE
        assert relation is expected


def test_pairs_match_exhaustive_enumeration():
    man = _two_by_two()
    got = _pair_set(generate_pairs(man, Protocol.ALL))
    want = set()
    for x, y in itertools.combinations(sorted(man.entries, key=lambda e: e.id), 2):
        rel = Relation.SAME if x.side is y.side else Relation.OPPOSITE
        want.add((x.id, y.id, x.subject == y.subject, rel))
    assert got == want


def test_impostor_subsampling_keeps_genuine():
    man, _ = gen_subjects(SynthConfig(n_subjects=6, imgs_per_side=3, dim=8))
    full = generate_pairs(man, Protocol.ALL)
    sub = generate_pairs(man, Protocol.ALL, max_impostors=40, seed=1)
    assert int(sub.genuine.sum()) == int(full.genuine.sum())
    assert int((~sub.genuine).sum()) == 40
    again = generate_pairs(man, Protocol.ALL, max_impostors=40, seed=1)
    assert np.array_equal(sub.a, again.a) and np.array_equal(sub.b, again.b)
    assert _pair_set(sub) <= _pair_set(full)


def _train(rows):
    return Manifest([Entry(f"t{i}", s, side, Split.TRAIN) for i, (s, side) in enumerate(rows)])


def test_arrange_examples():
    rows = [(s, side) for s in "abc" for side in "LRL"]
    man = _train(rows)
    assert arrange_classes(man, Mode.SINGLE).num_classes == 3
    assert arrange_classes(man, Mode.SPLIT).num_classes == 6
    one_sided = _train([("a", "L"), ("a", "L"), ("b", "L"), ("b", "R")])
    assert arrange_classes(one_sided, "split").num_classes == 3


def test_arrange_sorted_indices():
    man = _train([("b", "R"), ("a", "R"), ("a", "L")])
    arr = arrange_classes(man, Mode.SPLIT)
    assert arr.mapping == {"t0": 2, "t1": 1, "t2": 0}
    assert arrange_classes(man, Mode.SINGLE).mapping == {"t0": 1, "t1": 0, "t2": 0}


def test_arrange_errors():
    with pytest.raises(MissingSideLabel):
        arrange_classes(_train([("a", None), ("a", "L")]), Mode.SPLIT)
    assert arrange_classes(_train([("a", None), ("a", "L")]), Mode.SINGLE).num_classes == 1
    with pytest.raises(InputError):
        arrange_classes(Manifest([Entry("x", "a", "L")]), Mode.SINGLE)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.sampled_from("LR")), min_size=1, max_size=40))
def test_split_refines_single(rows):
    man = _train(rows)
    single = arrange_classes(man, Mode.SINGLE)
    split = arrange_classes(man, Mode.SPLIT)
    assert single.num_classes == len({s for s, _ in rows})
    assert split.num_classes == len(set(rows))
    for arr in (single, split):
        assert set(arr.mapping.values()) == set(range(arr.num_classes))
    for x, y in itertools.combinations(split.mapping, 2):
        if split.mapping[x] == split.mapping[y]:
            assert single.mapping[x] == single.mapping[y]


@pytest.mark.usefixtures("backend")
def test_score_examples():
    man = Manifest([Entry("p", "s", "L"), Entry("q", "s", "L"), Entry("r", "t", "L")])
    emb = {"p": np.array([1.0, 0.0]), "q": np.array([2.0, 0.0]), "r": np.array([0.0, 3.0])}
    scores = score_pairs(generate_pairs(man, Protocol.SAME_SIDE), emb)
    assert scores.genuine_scores.tolist() == [1.0]
    assert scores.impostor_scores.tolist() == [0.0, 0.0]
    assert scores.protocol is Protocol.SAME_SIDE


def test_score_errors():
    man = Manifest([Entry("p", "s", "L"), Entry("q", "s", "L")])
    pairs = generate_pairs(man, Protocol.ALL)
    with pytest.raises(MissingEmbedding):
        score_pairs(pairs, {"p": np.ones(2)})
    with pytest.raises(ZeroVector):
        score_pairs(pairs, {"p": np.ones(2), "q": np.zeros(2)})


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_scores_invariant_under_pair_permutation(seed):
    man, store = gen_subjects(SynthConfig(n_subjects=4, imgs_per_side=3, dim=8, seed=seed % 1000))
    pairs = generate_pairs(man, Protocol.ALL)
    base = score_pairs(pairs, store)
    perm = np.random.default_rng(seed).permutation(len(pairs))
    pairs.a, pairs.b = pairs.a[perm], pairs.b[perm]
    pairs.genuine, pairs.relation = pairs.genuine[perm], pairs.relation[perm]
    shuffled = score_pairs(pairs, store)
    assert np.array_equal(np.sort(base.genuine_scores), np.sort(shuffled.genuine_scores))
    assert np.array_equal(np.sort(base.impostor_scores), np.sort(shuffled.impostor_scores))
    assert np.all(np.abs(base.scores) <= 1.0)


def test_same_side_genuine_exceed_opposite():
    man, store = gen_subjects(SynthConfig(n_subjects=40, imgs_per_side=4, delta=0.4))
    scores = score_pairs(generate_pairs(man, Protocol.ALL), store)
    same = scores.restrict(Relation.SAME)
    opp = scores.restrict(Relation.OPPOSITE)
    assert same.genuine_scores.mean() > opp.genuine_scores.mean()
    assert len(same) + len(opp) == len(scores)
    assert set(np.unique(scores.relation).tolist()) <= {SAME, OPPOSITE, UNKNOWN}
