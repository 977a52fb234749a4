"""LBP-TOP baseline: circular LBP codes on the XY, XT and YT planes.

Each plane uses ``neighbors`` points on a circle of ``radius`` around the
center, sampled with bilinear interpolation; neighbor ``p`` sits at angle
``2*pi*p/neighbors`` and contributes bit ``p`` when its value is ``>=`` the
center. Centers are the voxels at least ``ceil(radius)`` from every border,
so all three planes are evaluated on the same set of centers.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_volume, check_volumes

# (row axis, column axis) of each plane in (t, y, x) volume coordinates.
PLANES = {"XY": (1, 2), "XT": (0, 2), "YT": (0, 1)}


def circle_offsets(radius=1.0, neighbors=8):
    """``(neighbors, 2)`` (row, column) offsets, rounded to 5 decimals so
    that on-grid points are exact."""
    angles = 2.0 * np.pi * np.arange(neighbors) / neighbors
    rows = np.round(-radius * np.sin(angles), 5)
    cols = np.round(radius * np.cos(angles), 5)
    return np.stack([rows, cols], axis=1) + 0.0  # drop negative zeros


def _shifted(vol, margin, offset):
    sl = tuple(slice(margin + o, n - margin + o) for n, o in zip(vol.shape, offset))
    return vol[sl]


def _sample(vol, margin, offset):
    # Nested a + f * (b - a) interpolation is exact when all corners agree.
    base = [math.floor(o) for o in offset]
    frac = [o - b for o, b in zip(offset, base)]

    def corner(axis, idx):
        if axis == 3:
            return _shifted(vol, margin, idx)
        lo = corner(axis + 1, idx[:axis] + [base[axis]] + idx[axis + 1:])
        if frac[axis] == 0:
            return lo
        hi = corner(axis + 1, idx[:axis] + [base[axis] + 1] + idx[axis + 1:])
        return lo + frac[axis] * (hi - lo)

    return corner(0, list(base))


def lbp_top_codes(volume, radius=1.0, neighbors=8):
    """Per-plane LBP code arrays ``{plane: (T', H', W') int array}``."""
    volume = check_volume(volume)
    margin = int(math.ceil(radius))
    if min(volume.shape) < 2 * margin + 1:
        raise ValueError(f"volume {volume.shape} is too small for radius {radius}")
    if not 1 <= neighbors <= 16:
        raise ValueError("neighbors must be between 1 and 16")
    vol = volume.astype(np.float64)
    center = _shifted(vol, margin, (0, 0, 0))
    codes = {}
    for name, (ra, ca) in PLANES.items():
        code = np.zeros(center.shape, dtype=np.int64)
        for p, (dr, dc) in enumerate(circle_offsets(radius, neighbors)):
            offset = [0.0, 0.0, 0.0]
            offset[ra], offset[ca] = dr, dc
            code |= (_sample(vol, margin, offset) >= center).astype(np.int64) << p
        codes[name] = code
    return codes


def lbp_top_histogram(volume, radius=1.0, neighbors=8):
    """Concatenated XY/XT/YT code histograms (``3 * 2**neighbors`` bins),
    L2-normalized."""
    codes = lbp_top_codes(volume, radius, neighbors)
    hist = np.concatenate([np.bincount(codes[name].ravel(), minlength=2 ** neighbors)
                           for name in PLANES]).astype(np.float64)
    return hist / np.linalg.norm(hist)


class LBPTOPTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping volumes to LBP-TOP histograms."""

    def __init__(self, radius=1.0, neighbors=8):
        self.radius = radius
        self.neighbors = neighbors

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return np.vstack([lbp_top_histogram(v, self.radius, self.neighbors)
                          for v in check_volumes(X)])
