"""Nearest-neighbor classification under cosine similarity, plus temporal
sub-video splitting and majority voting."""

from collections import defaultdict

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_volume


def _unit_rows(X, what):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"{what} contains a zero-norm vector")
    if not np.all(np.isfinite(norms)):
        raise ValueError(f"{what} contains non-finite values")
    return X / norms[:, None]


def cosine_similarities(gallery, probes):
    """``(n_probes, n_gallery)`` cosine similarity matrix."""
    G = _unit_rows(gallery, "gallery")
    P = _unit_rows(probes, "probe")
    if G.shape[1] != P.shape[1]:
        raise ValueError(f"dimension mismatch: gallery {G.shape[1]}, probe {P.shape[1]}")
    return P @ G.T


def nn_cosine(gallery, labels, probe):
    """Label and similarity of the most cosine-similar gallery vector.

    Ties go to the lowest gallery index.
    """
    labels = np.asarray(labels)
    gallery = np.atleast_2d(gallery)
    if len(gallery) == 0 or len(gallery) != len(labels):
        raise ValueError("gallery and labels must be non-empty and of equal length")
    sims = cosine_similarities(gallery, probe)[0]
    i = int(np.argmax(sims))
    return labels[i].item(), float(sims[i])


def vote_subvideos(predictions):
    """Combine ``(label, similarity)`` pairs by majority vote.

    Ties on vote count go to the label with the higher mean similarity,
    then to the lowest label.
    """
    predictions = list(predictions)
    if not predictions:
        raise ValueError("cannot vote on an empty prediction list")
    sims = defaultdict(list)
    for label, sim in predictions:
        sims[label].append(float(sim))
    return min(sims, key=lambda lab: (-len(sims[lab]), -np.mean(sims[lab]), lab))


def split_subvideos(volume, n_subs=5, frames_each=15):
    """Consecutive non-overlapping temporal blocks starting at frame 0;
    trailing frames beyond ``n_subs * frames_each`` are dropped."""
    volume = check_volume(volume)
    n_subs, frames_each = int(n_subs), int(frames_each)
    if n_subs < 1 or frames_each < 1:
        raise ValueError("n_subs and frames_each must be >= 1")
    if n_subs * frames_each > volume.shape[0]:
        raise ValueError(
            f"{n_subs} x {frames_each} frames requested from a {volume.shape[0]}-frame video")
    return [volume[i * frames_each:(i + 1) * frames_each] for i in range(n_subs)]


class CosineNNClassifier(ClassifierMixin, BaseEstimator):
    """1-nearest-neighbor classifier with cosine similarity."""

    def fit(self, X, y):
        X = _unit_rows(X, "gallery")
        y = np.asarray(y)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} gallery vectors but {len(y)} labels")
        self.gallery_ = X
        self.labels_ = y
        self.classes_ = np.unique(y)
        return self

    def predict_with_similarity(self, X):
        check_is_fitted(self, "gallery_")
        sims = cosine_similarities(self.gallery_, X)
        idx = np.argmax(sims, axis=1)
        return self.labels_[idx], sims[np.arange(len(idx)), idx]

    def predict(self, X):
        return self.predict_with_similarity(X)[0]
