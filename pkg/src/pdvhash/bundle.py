"""Binary persistence of trained models.

Layout (all little-endian)::

    b"PHDM"  u32 version  u32 n_sections
    n_sections x { 4-byte tag, u64 payload length, payload }
    u32 CRC-32 of every preceding byte

Section payloads:

    HASH  u32 P, u32 K, 3 x f64 lambdas, (P**3 - 1) * K f64 projections,
          column-major (first projection vector first)
    CDBK  u32 P, u32 D, u32 K, D * K f64 centroids, row-major
    PCA0  u32 input_dim, u32 output_dim, f64 mean, basis column-major
    CONF  UTF-8 ``key = value`` lines

There is one HASH and one CDBK section per scale; PCA0 is optional.
"""

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .codebook import Codebook
from .features import PcaModel
from .hashlearn import HashModel

MAGIC = b"PHDM"
VERSION = 1

_HEAD = struct.Struct("<4sII")
_SEC = struct.Struct("<4sQ")


class BundleError(ValueError):
    pass


@dataclass(eq=False)
class ModelBundle:
    """Per-scale ``(HashModel, Codebook)`` pairs, an optional PCA model and a
    snapshot of the configuration that produced them."""
    models: dict
    pca: PcaModel = None
    config: dict = field(default_factory=dict)
    version: int = VERSION

    @property
    def scales(self):
        return tuple(sorted(self.models))


def _f64(a, order="C"):
    return np.asarray(a, dtype="<f8").tobytes(order=order)


def _pack_hash(m):
    return (struct.pack("<II3d", m.scale, m.n_bits, *m.lambdas) + _f64(m.W, order="F"))


def _pack_codebook(P, book):
    D, K = book.centroids.shape
    return struct.pack("<III", P, D, K) + _f64(book.centroids)


def _pack_pca(pca):
    return (struct.pack("<II", pca.input_dim, pca.output_dim)
            + _f64(pca.mean) + _f64(pca.basis, order="F"))


def _pack_conf(config):
    return "".join(f"{k} = {v}\n" for k, v in config.items()).encode("utf-8")


def dumps_bundle(bundle):
    sections = []
    for P in bundle.scales:
        hash_model, book = bundle.models[P]
        sections.append((b"HASH", _pack_hash(hash_model)))
        sections.append((b"CDBK", _pack_codebook(P, book)))
    if bundle.pca is not None:
        sections.append((b"PCA0", _pack_pca(bundle.pca)))
    sections.append((b"CONF", _pack_conf(bundle.config)))

    out = bytearray(_HEAD.pack(MAGIC, VERSION, len(sections)))
    for tag, payload in sections:
        out += _SEC.pack(tag, len(payload)) + payload
    out += struct.pack("<I", zlib.crc32(out))
    return bytes(out)


def save_bundle(bundle, path):
    with open(path, "wb") as fh:
        fh.write(dumps_bundle(bundle))


class _Reader:
    def __init__(self, buf, what):
        self.buf, self.pos, self.what = buf, 0, what

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise BundleError(f"truncated {self.what}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def f64(self, n):
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)

    def done(self):
        if self.pos != len(self.buf):
            raise BundleError(f"{self.what} has {len(self.buf) - self.pos} unexpected trailing bytes")


def _parse_sections(raw):
    if len(raw) < _HEAD.size:
        raise BundleError("truncated bundle header")
    magic, version, count = _HEAD.unpack_from(raw)
    if magic != MAGIC:
        raise BundleError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BundleError(f"unsupported bundle version {version} (expected {VERSION})")
    if len(raw) < _HEAD.size + 4:
        raise BundleError("truncated bundle")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    reader = _Reader(body, "bundle")
    reader.take(_HEAD.size)
    sections = []
    try:
        for _ in range(count):
            tag, length = reader.unpack(_SEC.format)
            sections.append((tag, reader.take(length)))
        reader.done()
    except BundleError:
        # A short file can shift the CRC into section data; report it as truncation.
        raise BundleError("truncated bundle") from None
    if zlib.crc32(body) != crc:
        raise BundleError("checksum mismatch")
    return version, sections


def loads_bundle(raw):
    version, sections = _parse_sections(raw)
    hashes, books, pca, config = {}, {}, None, {}
    for tag, payload in sections:
        r = _Reader(payload, f"{tag.decode('ascii', 'replace')} section")
        if tag == b"HASH":
            P, K, l1, l2, l3 = r.unpack("<II3d")
            W = r.f64((P ** 3 - 1) * K).reshape((P ** 3 - 1, K), order="F")
            hashes[P] = HashModel(P, W, (l1, l2, l3))
        elif tag == b"CDBK":
            P, D, K = r.unpack("<III")
            books[P] = Codebook(P, r.f64(D * K).reshape(D, K))
        elif tag == b"PCA0":
            n_in, n_out = r.unpack("<II")
            mean = r.f64(n_in)
            basis = r.f64(n_in * n_out).reshape((n_in, n_out), order="F")
            pca = PcaModel(mean, basis)
        elif tag == b"CONF":
            for line in r.take(len(payload)).decode("utf-8").splitlines():
                if "=" in line:
                    k, v = line.split("=", 1)
                    config[k.strip()] = v.strip()
        else:
            raise BundleError(f"unknown section tag {tag!r}")
        r.done()
    if set(hashes) != set(books):
        raise BundleError(f"incomplete bundle: hash scales {sorted(hashes)}, "
                          f"codebook scales {sorted(books)}")
    for P in hashes:
        if hashes[P].n_bits != books[P].n_bits:
            raise BundleError(f"scale {P}: {hashes[P].n_bits} hash bits but "
                              f"{books[P].n_bits}-bit codebook")
    models = {P: (hashes[P], books[P]) for P in sorted(hashes)}
    return ModelBundle(models, pca, config, version)


def load_bundle(path):
    with open(path, "rb") as fh:
        return loads_bundle(fh.read())


def describe_bundle(bundle):
    lines = [f"version {bundle.version}"]
    for P, (h, b) in bundle.models.items():
        lines.append(f"scale {P}: {h.n_bits} bits, lambdas {h.lambdas}, {b.size} codewords")
    if bundle.pca is not None:
        lines.append(f"pca: {bundle.pca.input_dim} -> {bundle.pca.output_dim}")
    for k, v in bundle.config.items():
        lines.append(f"config {k} = {v}")
    return "\n".join(lines)
