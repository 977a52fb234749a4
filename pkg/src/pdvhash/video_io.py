"""Grayscale video volumes: file formats, manifests, cropping and synthesis.

A volume is a ``uint8`` array of shape ``(T, H, W)`` (frames, rows, columns).

Two on-disk forms are read:

* ``.dtvol`` files: the magic ``b"DTV1"``, three little-endian ``uint32``
  values ``T, H, W`` and then ``T*H*W`` raw bytes in frame-major, row-major
  order.
* directories of binary PGM (``P5``) frames, sorted lexicographically.
"""

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import check_volume

DTVOL_MAGIC = b"DTV1"
_HEADER = struct.Struct("<4sIII")


class VolumeFormatError(ValueError):
    """A volume file or frame directory could not be decoded."""


def save_volume(volume, path):
    volume = check_volume(volume)
    T, H, W = volume.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DTVOL_MAGIC, T, H, W))
        fh.write(volume.tobytes(order="C"))


def _load_dtvol(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise VolumeFormatError(f"{path}: malformed header (file is {len(raw)} bytes)")
    magic, T, H, W = _HEADER.unpack_from(raw)
    if magic != DTVOL_MAGIC:
        raise VolumeFormatError(f"{path}: malformed header (bad magic {magic!r})")
    if min(T, H, W) < 1:
        raise VolumeFormatError(f"{path}: malformed header (zero-sized axis {T}x{H}x{W})")
    n = T * H * W
    payload = raw[_HEADER.size:]
    if len(payload) < n:
        raise VolumeFormatError(
            f"{path}: truncated payload ({len(payload)} of {n} bytes)")
    if len(payload) > n:
        raise VolumeFormatError(
            f"{path}: trailing data ({len(payload) - n} bytes beyond payload)")
    return np.frombuffer(payload, dtype=np.uint8).reshape(T, H, W).copy()


def _next_token(data, pos):
    # PGM headers allow '#' comments anywhere whitespace is allowed.
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise VolumeFormatError("unexpected end of PGM header")
    return data[start:pos], pos


def read_pgm(path):
    """Read a binary (P5) 8-bit PGM image into a ``(H, W)`` uint8 array."""
    data = Path(path).read_bytes()
    try:
        magic, pos = _next_token(data, 0)
        if magic != b"P5":
            raise VolumeFormatError(f"{path}: not a binary PGM (magic {magic!r})")
        w, pos = _next_token(data, pos)
        h, pos = _next_token(data, pos)
        maxval, pos = _next_token(data, pos)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        if isinstance(exc, VolumeFormatError):
            raise
        raise VolumeFormatError(f"{path}: malformed PGM header") from exc
    if maxval < 1 or maxval > 255:
        raise VolumeFormatError(f"{path}: only 8-bit PGM is supported (maxval={maxval})")
    pos += 1  # single whitespace byte after maxval
    pixels = data[pos:pos + w * h]
    if len(pixels) < w * h:
        raise VolumeFormatError(f"{path}: truncated payload ({len(pixels)} of {w * h} bytes)")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(image, path):
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image).tobytes())


def _load_frame_dir(path):
    names = sorted(n for n in os.listdir(path) if n.lower().endswith((".pgm", ".pnm")))
    if not names:
        raise VolumeFormatError(f"{path}: empty directory (no PGM frames)")
    frames = [read_pgm(os.path.join(path, n)) for n in names]
    shape = frames[0].shape
    for name, frame in zip(names, frames):
        if frame.shape != shape:
            raise VolumeFormatError(
                f"{path}: inconsistent frame sizes ({name} is {frame.shape}, expected {shape})")
    return np.stack(frames)


def load_volume(path):
    """Load a ``.dtvol`` file or a directory of P5 frames.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    VolumeFormatError
        On a malformed header, truncated payload, inconsistent frame sizes
        or an empty frame directory.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such volume: {path}")
    if os.path.isdir(path):
        return _load_frame_dir(path)
    return _load_dtvol(path)


def crop_motion_window(volume, out_shape):
    """Return the ``out_shape`` sub-cube with the largest summed temporal variance.

    The score of a window is the sum, over its pixels, of the variance of
    each pixel's intensity across the window's frames. Ties go to the
    lexicographically smallest ``(t, y, x)`` corner.

    Scores are compared through the exact integer quantity
    ``n * sum(I**2) - sum(I)**2`` (``n`` frames), which is ``n**2`` times
    the variance, so ties are detected exactly.
    """
    volume = check_volume(volume)
    T, H, W = volume.shape
    oT, oH, oW = (int(s) for s in out_shape)
    if min(oT, oH, oW) < 1 or oT > T or oH > H or oW > W:
        raise ValueError(f"crop size {(oT, oH, oW)} exceeds volume {volume.shape}")

    v = volume.astype(np.int64)
    zeros = np.zeros((1, H, W), dtype=np.int64)
    c1 = np.concatenate([zeros, np.cumsum(v, axis=0)])
    c2 = np.concatenate([zeros, np.cumsum(v * v, axis=0)])
    s1 = c1[oT:] - c1[:-oT]
    s2 = c2[oT:] - c2[:-oT]
    var_n2 = oT * s2 - s1 * s1  # (T - oT + 1, H, W)

    integral = np.zeros((var_n2.shape[0], H + 1, W + 1), dtype=np.int64)
    integral[:, 1:, 1:] = var_n2.cumsum(axis=1).cumsum(axis=2)
    scores = (integral[:, oH:, oW:] - integral[:, :-oH, oW:]
              - integral[:, oH:, :-oW] + integral[:, :-oH, :-oW])
    # argmax returns the first maximum in C order, i.e. the smallest corner.
    t0, y0, x0 = np.unravel_index(np.argmax(scores), scores.shape)
    return volume[t0:t0 + oT, y0:y0 + oH, x0:x0 + oW].copy()


# ---------------------------------------------------------------------------
# Manifests


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    split: str = None


def read_manifest(path, check_paths=True):
    """Parse a ``path,label[,split]`` manifest; relative paths resolve
    against the manifest's directory."""
    base = Path(path).resolve().parent
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 'path,label[,split]'")
            try:
                label = int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: label {parts[1]!r} is not an integer") from None
            if label < 0:
                raise ValueError(f"{path}:{lineno}: negative label {label}")
            vpath = parts[0]
            if not os.path.isabs(vpath):
                vpath = str(base / vpath)
            if check_paths and not os.path.exists(vpath):
                raise FileNotFoundError(f"{path}:{lineno}: no such volume {vpath}")
            split = parts[2] if len(parts) == 3 and parts[2] else None
            entries.append(ManifestEntry(vpath, label, split))
    if not entries:
        raise ValueError(f"{path}: manifest has no entries")
    return entries


def write_manifest(entries, path):
    base = Path(path).resolve().parent
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# path,label[,split]\n")
        for e in entries:
            p = Path(e.path)
            try:
                p = p.resolve().relative_to(base)
            except ValueError:
                pass
            fields = [p.as_posix(), str(e.label)]
            if e.split:
                fields.append(e.split)
            fh.write(",".join(fields) + "\n")


def load_dataset(entries):
    """Load every volume of a manifest and remap labels onto ``0..C-1``.

    Returns ``(volumes, labels, classes)`` where ``classes[i]`` is the
    original label for contiguous class ``i``.
    """
    volumes = [load_volume(e.path) for e in entries]
    raw = np.array([e.label for e in entries])
    classes, labels = np.unique(raw, return_inverse=True)
    return volumes, labels.astype(np.int64), classes


# ---------------------------------------------------------------------------
# Synthetic dynamic textures


@dataclass(frozen=True)
class SynthConfig:
    """Moving sinusoidal gratings, one parameter set per class.

    Each class has its own spatial frequency (cycles/pixel), orientation and
    drift velocity (pixels/frame); videos within a class differ only by
    the grating phase and by additive Gaussian noise of std ``noise``.

    The defaults give low-contrast textures (amplitude/noise = 0.25), where
    single-pixel comparisons are mostly decided by noise.
    """
    n_classes: int = 4
    videos_per_class: int = 20
    shape: tuple = (30, 30, 30)
    noise: float = 60.0
    amplitude: float = 15.0
    flicker: bool = False


def _class_params(config, seed):
    C = config.n_classes
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1A55]))
    freqs = np.linspace(0.08, 0.22, C)[rng.permutation(C)]
    thetas = np.pi * np.arange(C) / C + rng.uniform(0, np.pi / (4 * C), C)
    speeds = np.linspace(0.4, 1.6, C)[rng.permutation(C)]
    speeds *= rng.choice([-1.0, 1.0], C)
    flicker_freqs = np.linspace(0.03, 0.12, C)[rng.permutation(C)]
    return freqs, thetas, speeds, flicker_freqs


def synth_dataset(config=None, seed=0):
    """Generate ``n_classes * videos_per_class`` grating videos.

    Returns ``(volumes, labels)``; volumes are listed class by class.
    """
    config = config or SynthConfig()
    if config.n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    if config.videos_per_class < 1:
        raise ValueError("videos_per_class must be >= 1")
    T, H, W = (int(s) for s in config.shape)
    if min(T, H, W) < 1:
        raise ValueError(f"invalid volume shape {config.shape}")

    freqs, thetas, speeds, flicker_freqs = _class_params(config, seed)
    t, y, x = np.meshgrid(np.arange(T), np.arange(H), np.arange(W), indexing="ij")
    volumes, labels = [], []
    for c in range(config.n_classes):
        along = x * np.cos(thetas[c]) + y * np.sin(thetas[c])
        for i in range(config.videos_per_class):
            rng = np.random.default_rng(np.random.SeedSequence([seed, c, i]))
            phase = rng.uniform(0.0, 2.0 * np.pi)
            arg = 2.0 * np.pi * freqs[c] * (along - speeds[c] * t) + phase
            frame = 128.0 + config.amplitude * np.sin(arg)
            if config.flicker:
                frame += 0.25 * config.amplitude * np.sin(
                    2.0 * np.pi * flicker_freqs[c] * t + phase)
            if config.noise > 0:
                frame += rng.normal(0.0, config.noise, size=frame.shape)
            volumes.append(np.clip(np.rint(frame), 0, 255).astype(np.uint8))
            labels.append(c)
    return volumes, np.array(labels, dtype=np.int64)


def write_dataset(volumes, labels, out_dir, prefix="video"):
    """Write volumes as ``.dtvol`` files plus ``manifest.txt``; returns the
    manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (vol, lab) in enumerate(zip(volumes, labels)):
        p = out_dir / f"{prefix}_{i:05d}.dtvol"
        save_volume(vol, p)
        entries.append(ManifestEntry(str(p), int(lab)))
    manifest = out_dir / "manifest.txt"
    write_manifest(entries, manifest)
    return manifest
