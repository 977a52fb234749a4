"""Dictionary of binary codewords and histogram encoding.

Binary codes are clustered with k-means (k-means++ seeding, Euclidean
distance) into ``D`` real-valued centroids in ``[0, 1]^K``. A set of codes is
then encoded as the L2-normalized histogram of nearest-centroid assignments.

Both fitting and encoding work on the *distinct* codes weighted by their
multiplicity. With ``K`` bits there are at most ``2**K`` of them, so
distances can be computed directly (no norm expansion) and ties resolve
exactly to the lowest centroid index.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_codes

DEFAULT_CODEWORDS = 1500
DEFAULT_MAX_ITERS = 100

_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class Codebook:
    scale: int
    centroids: np.ndarray
    history: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError(f"centroids must be a non-empty 2-D array, got shape {c.shape}")
        if np.any(c < 0) or np.any(c > 1):
            raise ValueError("centroid entries must lie in [0, 1]")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def size(self):
        return self.centroids.shape[0]

    @property
    def n_bits(self):
        return self.centroids.shape[1]

    def encode(self, codes):
        return encode_histogram(self, codes)


def _sq_dists(points, centroids):
    out = np.empty((len(points), len(centroids)))
    for start in range(0, len(points), _CHUNK):
        diff = points[start:start + _CHUNK, None, :] - centroids[None, :, :]
        out[start:start + _CHUNK] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _nearest(points, centroids):
    """Index of and squared distance to the nearest centroid, ties to the
    lowest index."""
    best = np.zeros(len(points), dtype=np.int64)
    best_d = np.full(len(points), np.inf)
    # Blocks over centroids bound memory at _CHUNK x block x K.
    block = max(1, 2_000_000 // max(1, min(len(points), _CHUNK) * points.shape[1]))
    for start in range(0, len(centroids), block):
        d = _sq_dists(points, centroids[start:start + block])
        j = np.argmin(d, axis=1)
        dj = d[np.arange(len(points)), j]
        better = dj < best_d
        best[better] = j[better] + start
        best_d[better] = dj[better]
    return best, best_d


def _unique_codes(B):
    """Distinct codes (ascending as integers), inverse index and counts."""
    K = B.shape[1]
    if K > 62:
        uniq, inverse, counts = np.unique(B, axis=0, return_inverse=True, return_counts=True)
        return uniq.astype(np.float64), inverse.ravel(), counts.astype(np.float64)
    weights = np.left_shift(np.int64(1), np.arange(K - 1, -1, -1, dtype=np.int64))
    keys = B.astype(np.int64) @ weights
    ukeys, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    uniq = (ukeys[:, None] & weights[None, :]) != 0
    return uniq.astype(np.float64), inverse.ravel(), counts.astype(np.float64)


def _kmeans_pp(points, weights, k, rng):
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    first = rng.choice(n, p=weights / weights.sum())
    centers[0] = points[first]
    closest = _sq_dists(points, centers[:1])[:, 0]
    for i in range(1, k):
        mass = weights * closest
        total = mass.sum()
        if total <= 0:
            # All remaining mass sits on chosen centers; take any unused point.
            idx = int(np.flatnonzero(closest > 0)[0]) if np.any(closest > 0) else i
        else:
            idx = rng.choice(n, p=mass / total)
        centers[i] = points[idx]
        closest = np.minimum(closest, _sq_dists(points, centers[i:i + 1])[:, 0])
    return centers


def fit_codebook(codes, n_codewords=DEFAULT_CODEWORDS, seed=0, max_iters=DEFAULT_MAX_ITERS,
                 scale=None):
    """Cluster binary codes into a codebook.

    Lloyd iterations start from k-means++ seeds. An empty cluster is
    re-seeded at the point farthest from its assigned centroid. Iteration
    stops when assignments no longer change or after ``max_iters`` updates.
    If there are fewer distinct codes than ``n_codewords``, the size is
    reduced to the distinct count with a warning.

    ``history["wcss"]`` records the within-cluster sum of squares after each
    assignment step; it is non-increasing.
    """
    B = check_codes(codes)
    if len(B) == 0:
        raise ValueError("cannot fit a codebook on an empty code set")
    D = int(n_codewords)
    if D < 1:
        raise ValueError("n_codewords must be >= 1")
    if len(B) < D:
        raise ValueError(f"need at least n_codewords={D} codes, got {len(B)}")
    points, _, weights = _unique_codes(B)
    if len(points) < D:
        warnings.warn(f"only {len(points)} distinct codes; reducing codebook size from {D}",
                      RuntimeWarning, stacklevel=2)
        D = len(points)

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centers = _kmeans_pp(points, weights, D, rng)
    labels, dists = _nearest(points, centers)
    wcss = [float(np.dot(weights, dists))]
    n_iter = 0
    for n_iter in range(1, int(max_iters) + 1):
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, points * weights[:, None])
        mass = np.bincount(labels, weights=weights, minlength=D)
        filled = mass > 0
        centers[filled] = sums[filled] / mass[filled, None]
        if not np.all(filled):
            dists = np.sum((points - centers[labels]) ** 2, axis=1)
            taken = np.zeros(len(points), dtype=bool)
            for j in np.flatnonzero(~filled):
                cand = np.where(taken, -1.0, dists)
                far = int(np.argmax(cand))
                centers[j] = points[far]
                taken[far] = True
        new_labels, dists = _nearest(points, centers)
        wcss.append(float(np.dot(weights, dists)))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    np.clip(centers, 0.0, 1.0, out=centers)
    if scale is None:
        scale = 0
    return Codebook(int(scale), centers, {"wcss": np.array(wcss), "n_iter": n_iter})


def assign_codes(book, codes):
    """Nearest-codeword index for every code (ties to the lowest index)."""
    B = check_codes(codes, n_bits=book.n_bits)
    if len(B) == 0:
        return np.zeros(0, dtype=np.int64)
    points, inverse, _ = _unique_codes(B)
    labels, _ = _nearest(points, book.centroids)
    return labels[inverse]


def encode_histogram(book, codes):
    """L2-normalized histogram of nearest-codeword assignments."""
    B = check_codes(codes, n_bits=book.n_bits)
    if len(B) == 0:
        raise ValueError("cannot encode an empty code set")
    points, _, weights = _unique_codes(B)
    labels, _ = _nearest(points, book.centroids)
    hist = np.bincount(labels, weights=weights, minlength=book.size)
    return hist / np.linalg.norm(hist)


class BinaryCodebook(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` on a code matrix, ``predict`` nearest
    codeword, ``transform`` a list of code matrices into histograms."""

    def __init__(self, n_codewords=DEFAULT_CODEWORDS, max_iter=DEFAULT_MAX_ITERS, random_state=0):
        self.n_codewords = n_codewords
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        self.codebook_ = fit_codebook(X, self.n_codewords, self.random_state, self.max_iter)
        self.cluster_centers_ = self.codebook_.centroids
        self.inertia_ = float(self.codebook_.history["wcss"][-1])
        return self

    def predict(self, X):
        check_is_fitted(self, "codebook_")
        return assign_codes(self.codebook_, X)

    def transform(self, X):
        check_is_fitted(self, "codebook_")
        return np.vstack([encode_histogram(self.codebook_, codes) for codes in X])
