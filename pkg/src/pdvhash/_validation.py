"""Input validation helpers shared by the estimators."""

import numpy as np


def check_volume(volume, name="volume"):
    """Return ``volume`` as a C-contiguous uint8 array of shape (T, H, W)."""
    arr = np.asarray(volume)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3-D (frames, height, width), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has an empty axis: {arr.shape}")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError(f"{name} intensities must lie in [0, 255]")
        if not np.array_equal(arr, np.round(arr)):
            raise ValueError(f"{name} intensities must be integral")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


def check_volumes(volumes):
    if isinstance(volumes, np.ndarray) and volumes.ndim == 3:
        raise ValueError("expected a sequence of volumes, got a single 3-D array")
    out = [check_volume(v, name=f"volumes[{i}]") for i, v in enumerate(volumes)]
    if not out:
        raise ValueError("at least one volume is required")
    return out


def check_scale(scale):
    scale = int(scale)
    if scale < 3 or scale % 2 == 0:
        raise ValueError(f"neighborhood size must be odd and >= 3, got {scale}")
    return scale


def pdv_dim(scale):
    return check_scale(scale) ** 3 - 1


def scale_from_dim(dim):
    """Invert ``dim = P**3 - 1``; raises if ``dim`` is not of that form."""
    p = int(round((dim + 1) ** (1.0 / 3.0)))
    if p ** 3 - 1 != dim:
        raise ValueError(f"{dim} is not a valid PDV dimension (P**3 - 1)")
    return check_scale(p)


def check_pdvs(X, dim=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"PDV matrix must be 2-D (n_vectors, dim), got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"PDV dimension mismatch: expected {dim}, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("PDV matrix contains non-finite values")
    return X


def check_codes(B, n_bits=None):
    B = np.asarray(B)
    if B.ndim != 2:
        raise ValueError(f"code matrix must be 2-D (n_codes, n_bits), got shape {B.shape}")
    if n_bits is not None and B.shape[1] != n_bits:
        raise ValueError(f"code length mismatch: expected {n_bits}, got {B.shape[1]}")
    if B.size and not np.all((B == 0) | (B == 1)):
        raise ValueError("binary codes must contain only 0 and 1")
    return B.astype(np.uint8, copy=False)


def check_stride(stride):
    if np.isscalar(stride):
        stride = (stride,) * 3
    stride = tuple(int(s) for s in stride)
    if len(stride) != 3 or min(stride) < 1:
        raise ValueError(f"stride must be three positive integers, got {stride}")
    return stride


def sign_fix_columns(V):
    """Flip columns so each one's largest-magnitude entry is positive."""
    V = np.array(V, dtype=np.float64, copy=True)
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs
