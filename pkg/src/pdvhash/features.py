"""Video descriptors: per-scale PDV hashing, codeword histograms, PCA.

A video is encoded at every configured neighborhood size ``P`` as the
L2-normalized histogram of its hashed PDVs over that scale's codebook; the
per-scale histograms are concatenated in ascending ``P`` and compressed with
PCA.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_scale, check_stride, check_volume, check_volumes, sign_fix_columns
from .codebook import DEFAULT_CODEWORDS, DEFAULT_MAX_ITERS, encode_histogram, fit_codebook
from .hashlearn import (DEFAULT_BITS, DEFAULT_ITERS, DEFAULT_LAMBDAS, DEFAULT_UPDATE,
                        DEFAULT_W_STEPS, binarize, train_hash)
from .pdv import DEFAULT_ENCODE_CAP, DEFAULT_TRAIN_CAP, extract_pdvs, pool_pdvs

DEFAULT_SCALES = (3, 5)
DEFAULT_PCA_DIM = 500


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray = None

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        basis = np.asarray(self.basis, dtype=np.float64)
        if mean.ndim != 1 or basis.ndim != 2 or basis.shape[0] != mean.shape[0]:
            raise ValueError(f"inconsistent PCA shapes: mean {mean.shape}, basis {basis.shape}")
        if basis.shape[1] > basis.shape[0]:
            raise ValueError("PCA output dimension exceeds input dimension")
        for a in (mean, basis):
            a.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)

    @property
    def input_dim(self):
        return self.basis.shape[0]

    @property
    def output_dim(self):
        return self.basis.shape[1]


def fit_pca(X, output_dim=DEFAULT_PCA_DIM):
    """PCA by eigendecomposition of the sample covariance.

    ``output_dim`` is clamped, with a warning, to the numerical rank of the
    centered data (which is at most ``n_samples - 1``).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("PCA needs at least 2 training vectors")
    if not np.all(np.isfinite(X)):
        raise ValueError("PCA training data contains non-finite values")
    output_dim = int(output_dim)
    if output_dim < 1:
        raise ValueError("output_dim must be >= 1")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (len(X) - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    top = max(evals[0], 0.0)
    rank = int(np.sum(evals > top * max(X.shape) * np.finfo(np.float64).eps)) if top > 0 else 0
    rank = min(rank, len(X) - 1)
    if output_dim > rank:
        warnings.warn(f"PCA output_dim {output_dim} clamped to data rank {max(rank, 1)}",
                      RuntimeWarning, stacklevel=2)
        output_dim = max(rank, 1)
    basis = sign_fix_columns(evecs[:, :output_dim])
    return PcaModel(mean, basis, evals[:output_dim].copy())


def project(pca, raw):
    """``basis^T (raw - mean)`` for a single vector or a batch of rows."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[-1] != pca.input_dim:
        raise ValueError(f"feature dimension mismatch: expected {pca.input_dim}, got {raw.shape[-1]}")
    return (raw - pca.mean) @ pca.basis


def encode_video(volume, models, stride=1, sample_cap=DEFAULT_ENCODE_CAP, seed=0):
    """Concatenated per-scale codeword histograms of one video.

    ``models`` maps each scale ``P`` to its ``(HashModel, Codebook)`` pair.
    Scales are processed in ascending order; the result has length
    ``sum(codebook.size)``.
    """
    volume = check_volume(volume)
    if not models:
        raise ValueError("no scale models given")
    largest = max(models)
    if min(volume.shape) < largest:
        raise ValueError(f"volume {volume.shape} is too small for scale {largest}")
    blocks = []
    for P in sorted(models):
        hash_model, book = models[P]
        X = extract_pdvs(volume, P, stride, sample_cap, np.random.default_rng([seed, P]))
        blocks.append(encode_histogram(book, binarize(hash_model, X)))
    return np.concatenate(blocks)


class MultiScaleHashEncoder(TransformerMixin, BaseEstimator):
    """Learn per-scale hash functions and codebooks from training videos and
    map videos to concatenated codeword histograms.

    ``X`` is a sequence of ``(T, H, W)`` uint8 volumes.

    Parameters
    ----------
    scales : tuple of int
        Odd neighborhood sizes.
    n_bits : int
        Hash functions per scale.
    lambdas : tuple of 3 floats
    n_iter, w_steps : int
        Outer iterations and line-searched steps per W-step of hash training.
    n_codewords : int
        Codebook size per scale.
    train_stride, train_cap : PDV sampling for hash and codebook training;
        ``train_cap`` bounds the pooled PDV count per scale.
    encode_stride, encode_cap : PDV sampling per video at encoding time.
    random_state : int
    """

    def __init__(self, scales=DEFAULT_SCALES, n_bits=DEFAULT_BITS, lambdas=DEFAULT_LAMBDAS,
                 n_iter=DEFAULT_ITERS, w_steps=DEFAULT_W_STEPS, update=DEFAULT_UPDATE,
                 n_codewords=DEFAULT_CODEWORDS, kmeans_max_iter=DEFAULT_MAX_ITERS,
                 train_stride=1, train_cap=DEFAULT_TRAIN_CAP,
                 encode_stride=1, encode_cap=DEFAULT_ENCODE_CAP, random_state=0):
        self.scales = scales
        self.n_bits = n_bits
        self.lambdas = lambdas
        self.n_iter = n_iter
        self.w_steps = w_steps
        self.update = update
        self.n_codewords = n_codewords
        self.kmeans_max_iter = kmeans_max_iter
        self.train_stride = train_stride
        self.train_cap = train_cap
        self.encode_stride = encode_stride
        self.encode_cap = encode_cap
        self.random_state = random_state

    def _scales(self):
        scales = sorted({check_scale(p) for p in self.scales})
        if not scales:
            raise ValueError("at least one scale is required")
        return scales

    def fit(self, X, y=None):
        volumes = check_volumes(X)
        check_stride(self.train_stride)
        models = {}
        for P in self._scales():
            pdv_seed, hash_seed, km_seed = np.random.SeedSequence(
                [int(self.random_state), P]).generate_state(3)
            pdvs = pool_pdvs(volumes, P, self.train_stride, self.train_cap, int(pdv_seed))
            hash_model = train_hash(pdvs, self.n_bits, self.lambdas, self.n_iter,
                                    seed=int(hash_seed), update=self.update,
                                    w_steps=self.w_steps, scale=P)
            book = fit_codebook(binarize(hash_model, pdvs), self.n_codewords,
                                seed=int(km_seed), max_iters=self.kmeans_max_iter, scale=P)
            models[P] = (hash_model, book)
        self.models_ = models
        return self

    def set_models(self, models):
        """Install pre-trained ``{P: (HashModel, Codebook)}`` models."""
        self.models_ = dict(models)
        self.scales = tuple(sorted(self.models_))
        return self

    def transform(self, X):
        check_is_fitted(self, "models_")
        volumes = check_volumes(X)
        return np.vstack([
            encode_video(v, self.models_, self.encode_stride, self.encode_cap,
                         seed=int(self.random_state))
            for v in volumes])


class PCACompressor(TransformerMixin, BaseEstimator):
    """PCA with a deterministic sign convention, via :func:`fit_pca`."""

    def __init__(self, n_components=DEFAULT_PCA_DIM):
        self.n_components = n_components

    def fit(self, X, y=None):
        self.model_ = fit_pca(X, self.n_components)
        self.components_ = self.model_.basis.T
        self.mean_ = self.model_.mean
        self.n_components_ = self.model_.output_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return project(self.model_, X)

    def set_model(self, model):
        self.model_ = model
        self.components_ = model.basis.T
        self.mean_ = model.mean
        self.n_components_ = model.output_dim
        return self
