import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdvhash.classify import (CosineNNClassifier, cosine_similarities, nn_cosine,
                              split_subvideos, vote_subvideos)

from oracles import nn_cosine_naive


def test_cosine_similarity_values():
    S = cosine_similarities([[1, 0], [1, 1]], [[2, 0], [0, 3]])
    np.testing.assert_allclose(S, [[1.0, 1 / np.sqrt(2)], [0.0, 1 / np.sqrt(2)]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12), st.integers(1, 6))
def test_nn_matches_naive(seed, n, d):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, d)) + 0.01
    labels = rng.integers(0, 4, size=n)
    probe = rng.normal(size=d) + 0.01
    lab, sim = nn_cosine(G, labels, probe)
    want_lab, want_sim = nn_cosine_naive(G.tolist(), labels.tolist(), probe.tolist())
    assert sim == pytest.approx(want_sim, abs=1e-12)
    # Labels agree unless two gallery vectors are numerically tied.
    sims = cosine_similarities(G, probe)[0]
    if np.sort(sims)[-1] - (np.sort(sims)[-2] if n > 1 else -np.inf) > 1e-12:
        assert lab == want_lab


def test_nn_ties_go_to_lowest_index():
    G = [[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]]
    assert nn_cosine(G, [5, 3, 1], [1.0, 0.0]) == (5, pytest.approx(1.0))


def test_nn_scale_invariance():
    G = np.array([[1.0, 2.0], [3.0, 1.0]])
    assert nn_cosine(G, [0, 1], [10, 1])[0] == nn_cosine(G * 7, [0, 1], [0.1, 0.01])[0]


def test_zero_vector_rejected():
    with pytest.raises(ValueError, match="zero-norm"):
        nn_cosine([[0.0, 0.0]], [0], [1.0, 0.0])
    with pytest.raises(ValueError):
        nn_cosine([[1.0, 0.0]], [0], [0.0, 0.0])


def test_vote_majority_and_ties():
    assert vote_subvideos([(1, 0.5), (2, 0.9), (1, 0.4)]) == 1
    # Two-way tie on count: higher mean similarity wins.
    assert vote_subvideos([(1, 0.5), (2, 0.9), (1, 0.5), (2, 0.8)]) == 2
    # Tie on count and similarity: lowest label wins.
    assert vote_subvideos([(4, 0.7), (3, 0.7)]) == 3
    with pytest.raises(ValueError):
        vote_subvideos([])


def test_split_subvideos():
    vol = np.arange(80, dtype=np.uint8)[:, None, None] * np.ones((1, 3, 3), np.uint8)
    subs = split_subvideos(vol)
    assert len(subs) == 5 and all(s.shape == (15, 3, 3) for s in subs)
    assert [int(s[0, 0, 0]) for s in subs] == [0, 15, 30, 45, 60]
    with pytest.raises(ValueError):
        split_subvideos(vol[:70])


def test_classifier_estimator():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    clf = CosineNNClassifier().fit(X, ["a", "b"])
    assert clf.predict([[3.0, 1.0], [0.1, 2.0]]).tolist() == ["a", "b"]
    labels, sims = clf.predict_with_similarity([[1.0, 1.0]])
    assert labels.tolist() == ["a"] and sims[0] == pytest.approx(1 / np.sqrt(2))
    assert clf.score([[1.0, 0.2]], ["a"]) == 1.0
