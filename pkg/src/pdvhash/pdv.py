"""Pixel difference vectors (PDVs) over cubic neighborhoods.

For a ``P x P x P`` neighborhood the PDV of a center voxel is the vector of
its ``P**3 - 1`` neighbor intensities minus the center intensity. Neighbors
are listed in raster order (t, then y, then x) with the center skipped.
Only interior centers are used; there is no padding.
"""

import math
import struct

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import check_scale, check_stride, check_volume, scale_from_dim

DEFAULT_TRAIN_CAP = 200_000
DEFAULT_ENCODE_CAP = 50_000

PDV_MAGIC = b"PDV1"


def neighbor_offsets(scale):
    """``(P**3 - 1, 3)`` array of ``(dt, dy, dx)`` offsets in PDV order."""
    P = check_scale(scale)
    r = (P - 1) // 2
    grid = np.stack(np.meshgrid(*(np.arange(-r, r + 1),) * 3, indexing="ij"), -1).reshape(-1, 3)
    return np.delete(grid, (P ** 3 - 1) // 2, axis=0)


def n_centers(shape, scale, stride=1):
    P = check_scale(scale)
    stride = check_stride(stride)
    return math.prod(max(0, (n - P) // s + 1) for n, s in zip(shape, stride))


def extract_pdvs(volume, scale, stride=1, sample_cap=None, seed=0):
    """Extract PDVs from every interior center on the stride grid.

    Parameters
    ----------
    volume : array of shape (T, H, W)
    scale : int
        Odd neighborhood size ``P >= 3``.
    stride : int or tuple of 3 ints
        Center spacing along (t, y, x).
    sample_cap : int, optional
        If the grid has more centers than this, keep a uniform random subset
        of exactly ``sample_cap`` (in raster order), drawn with ``seed``.
    seed : int or numpy Generator

    Returns
    -------
    ndarray of shape (n, P**3 - 1), float64
    """
    volume = check_volume(volume)
    P = check_scale(scale)
    stride = check_stride(stride)
    if min(volume.shape) < P:
        raise ValueError(f"volume {volume.shape} is smaller than the {P}^3 neighborhood")

    windows = sliding_window_view(volume, (P, P, P))[::stride[0], ::stride[1], ::stride[2]]
    grid = windows.shape[:3]
    total = math.prod(grid)
    if sample_cap is not None and total > sample_cap:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        flat = np.sort(rng.choice(total, size=int(sample_cap), replace=False))
        blocks = windows[np.unravel_index(flat, grid)]
    else:
        blocks = windows
    blocks = blocks.reshape(-1, P ** 3).astype(np.float64)
    center = (P ** 3 - 1) // 2
    return np.delete(blocks, center, axis=1) - blocks[:, center:center + 1]


def pool_pdvs(volumes, scale, stride=1, sample_cap=DEFAULT_TRAIN_CAP, seed=0):
    """Pool PDVs from many volumes into one training matrix of at most
    ``sample_cap`` rows.

    Each volume contributes at most ``ceil(sample_cap / n_volumes)`` vectors;
    if the pooled count still exceeds the cap a final uniform subsample is
    taken. Rows stay in input order.
    """
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    children = ss.spawn(len(volumes) + 1)
    per = None if sample_cap is None else -(-int(sample_cap) // len(volumes))
    parts = [extract_pdvs(v, scale, stride, per, np.random.default_rng(c))
             for v, c in zip(volumes, children)]
    X = np.concatenate(parts)
    if sample_cap is not None and len(X) > sample_cap:
        rng = np.random.default_rng(children[-1])
        X = X[np.sort(rng.choice(len(X), size=int(sample_cap), replace=False))]
    return X


def save_pdvs(X, path):
    """Debug dump: ``b"PDV1"``, u32 dim, u64 count, then row-major float64."""
    X = np.ascontiguousarray(X, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQ", PDV_MAGIC, X.shape[1], X.shape[0]))
        fh.write(X.tobytes())


def load_pdvs(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.Struct("<4sIQ")
    if len(raw) < head.size:
        raise ValueError(f"{path}: malformed header")
    magic, dim, count = head.unpack_from(raw)
    if magic != PDV_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    scale_from_dim(dim)
    body = raw[head.size:]
    if len(body) != 8 * dim * count:
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(body, dtype="<f8").reshape(count, dim).astype(np.float64)
