import struct

import numpy as np
import pytest

from pdvhash.bundle import (MAGIC, BundleError, ModelBundle, describe_bundle, dumps_bundle,
                            load_bundle, loads_bundle, save_bundle)
from pdvhash.codebook import Codebook
from pdvhash.features import PcaModel, encode_video
from pdvhash.hashlearn import HashModel


def _bundle(with_pca=True):
    rng = np.random.default_rng(0)
    models = {}
    for P in (3, 5):
        W = rng.normal(size=(P ** 3 - 1, 15))
        C = rng.random((7, 15))
        models[P] = (HashModel(P, W, (1000.0, 100.0, 1e6)), Codebook(P, C))
    pca = PcaModel(rng.normal(size=14), np.linalg.qr(rng.normal(size=(14, 4)))[0]) \
        if with_pca else None
    return ModelBundle(models, pca, {"seed": "3", "scales": "3,5"})


def test_round_trip_is_bit_exact(tmp_path):
    b = _bundle()
    save_bundle(b, tmp_path / "m.phd")
    back = load_bundle(tmp_path / "m.phd")
    assert back.scales == (3, 5)
    for P in (3, 5):
        assert back.models[P][0].W.tobytes() == b.models[P][0].W.tobytes()
        assert back.models[P][0].lambdas == b.models[P][0].lambdas
        assert back.models[P][1].centroids.tobytes() == b.models[P][1].centroids.tobytes()
    assert back.pca.mean.tobytes() == b.pca.mean.tobytes()
    assert back.pca.basis.tobytes() == b.pca.basis.tobytes()
    assert back.config == b.config
    assert dumps_bundle(back) == dumps_bundle(b)


def test_reloaded_bundle_encodes_identically():
    b = _bundle(with_pca=False)
    back = loads_bundle(dumps_bundle(b))
    vol = np.random.default_rng(1).integers(0, 256, size=(8, 8, 8), dtype=np.uint8)
    np.testing.assert_array_equal(encode_video(vol, b.models, seed=2),
                                  encode_video(vol, back.models, seed=2))


def test_header_layout():
    raw = dumps_bundle(_bundle())
    magic, version, count = struct.unpack_from("<4sII", raw)
    assert magic == MAGIC == b"PHDM" and version == 1 and count == 6
    tag, length = struct.unpack_from("<4sQ", raw, 12)
    assert tag == b"HASH"
    P, K = struct.unpack_from("<II", raw, 24)
    assert (P, K) == (3, 15)
    # First stored float after the lambdas is W[0, 0]; the next is W[1, 0].
    w00, w10 = struct.unpack_from("<2d", raw, 24 + 8 + 24)
    W = _bundle().models[3][0].W
    assert (w00, w10) == (W[0, 0], W[1, 0])


def test_bad_magic():
    raw = bytearray(dumps_bundle(_bundle()))
    raw[:4] = b"NOPE"
    with pytest.raises(BundleError, match="bad magic"):
        loads_bundle(bytes(raw))


def test_unsupported_version():
    raw = bytearray(dumps_bundle(_bundle()))
    raw[4:8] = struct.pack("<I", 2)
    with pytest.raises(BundleError, match="unsupported bundle version"):
        loads_bundle(bytes(raw))


@pytest.mark.parametrize("cut", [3, 11, 40, 500, -5, -1])
def test_truncated(cut):
    raw = dumps_bundle(_bundle())
    with pytest.raises(BundleError, match="truncated"):
        loads_bundle(raw[:cut])


def test_corrupted_payload_detected():
    raw = bytearray(dumps_bundle(_bundle()))
    raw[100] ^= 0xFF
    with pytest.raises(BundleError, match="checksum mismatch"):
        loads_bundle(bytes(raw))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_bundle(tmp_path / "nope.phd")


def test_describe():
    text = describe_bundle(_bundle())
    assert "scale 3: 15 bits" in text and "7 codewords" in text and "pca: 14 -> 4" in text
