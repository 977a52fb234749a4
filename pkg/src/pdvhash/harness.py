"""Evaluation protocols and reporting.

Protocols
---------
``dyntex-5050``  stratified half/half split, repeated (default 5 times)
``ucla-50``      k-fold cross-validation (default 4), one sequence of each
                 class per fold when classes have ``folds`` members
``ucla-9``       stratified half/half split repeated (default 20 times); each
                 video is cut into 5 sub-videos of 15 frames, sub-videos form
                 the gallery and probe predictions are combined by vote
``synth``        stratified half/half split (default 1 repeat)

Every repeat draws its split and model seeds from ``(seed, repeat)`` so
repeats are independent of execution order.
"""

import csv
import dataclasses
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .baseline import lbp_top_histogram
from .bundle import load_bundle
from .classify import CosineNNClassifier, split_subvideos, vote_subvideos
from .codebook import DEFAULT_CODEWORDS
from .features import DEFAULT_PCA_DIM, DEFAULT_SCALES, MultiScaleHashEncoder, PCACompressor
from .hashlearn import (DEFAULT_BITS, DEFAULT_ITERS, DEFAULT_LAMBDAS, DEFAULT_UPDATE,
                        DEFAULT_W_STEPS)
from .pdv import DEFAULT_ENCODE_CAP, DEFAULT_TRAIN_CAP
from .video_io import crop_motion_window, load_dataset, read_manifest

log = logging.getLogger(__name__)

PROTOCOLS = ("dyntex-5050", "ucla-50", "ucla-9", "synth")
METHODS = ("phd", "lbp-top")
DEFAULT_REPEATS = {"dyntex-5050": 5, "ucla-9": 20, "synth": 1}


@dataclass
class ExperimentConfig:
    protocol: str = "synth"
    method: str = "phd"
    scales: tuple = DEFAULT_SCALES
    n_bits: int = DEFAULT_BITS
    lambdas: tuple = DEFAULT_LAMBDAS
    n_iter: int = DEFAULT_ITERS
    w_steps: int = DEFAULT_W_STEPS
    update: str = DEFAULT_UPDATE
    n_codewords: int = DEFAULT_CODEWORDS
    pca_dim: int = DEFAULT_PCA_DIM
    repeats: int = 0
    folds: int = 4
    seed: int = 0
    train_cap: int = DEFAULT_TRAIN_CAP
    encode_cap: int = DEFAULT_ENCODE_CAP
    train_stride: tuple = (1, 1, 1)
    encode_stride: tuple = (1, 1, 1)
    n_subs: int = 5
    sub_frames: int = 15
    lbp_radius: float = 1.0
    lbp_neighbors: int = 8
    crop: tuple = ()
    transfer: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}; choose from {PROTOCOLS}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        self.scales = tuple(int(p) for p in self.scales)
        if not self.scales or any(p < 3 or p % 2 == 0 for p in self.scales):
            raise ValueError(f"scales must be non-empty odd integers >= 3, got {self.scales}")
        self.lambdas = tuple(float(v) for v in self.lambdas)
        if len(self.lambdas) != 3 or min(self.lambdas) < 0:
            raise ValueError(f"lambdas must be three non-negative reals, got {self.lambdas}")
        if self.pca_dim < 1:
            raise ValueError("pca_dim must be >= 1")
        if self.repeats < 0:
            raise ValueError("repeats must be >= 1 (0 selects the protocol default)")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        self.crop = tuple(int(s) for s in self.crop)
        if self.crop and (len(self.crop) != 3 or min(self.crop) < 1):
            raise ValueError(f"crop must be three positive sizes (T,H,W), got {self.crop}")

    @property
    def n_repeats(self):
        if self.protocol == "ucla-50":
            return self.folds
        return self.repeats or DEFAULT_REPEATS[self.protocol]

    def to_dict(self):
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = ",".join(str(x) for x in v) if isinstance(v, tuple) else str(v)
        return out

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_dict(cls, values):
        kwargs = {}
        types = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(types[key], raw)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text):
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value'")
            k, v = line.split("=", 1)
            values[k.strip()] = v.strip()
        return cls.from_dict(values)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _coerce(f, raw):
    if not isinstance(raw, str):
        return raw
    default = f.default
    if isinstance(default, tuple):
        items = [s for s in raw.replace(" ", "").split(",") if s]
        conv = float if default and isinstance(default[0], float) else int
        return tuple(conv(s) for s in items)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


# ---------------------------------------------------------------------------
# Splits


def stratified_half_split(labels, rng):
    """Boolean training mask taking ``floor(n/2)`` random videos per class."""
    labels = np.asarray(labels)
    train = np.zeros(len(labels), dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        chosen = rng.permutation(idx)[:len(idx) // 2]
        train[chosen] = True
    return train


def stratified_folds(labels, folds, rng):
    """Fold index per video; each class is shuffled and dealt round-robin."""
    labels = np.asarray(labels)
    assignment = np.empty(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < folds:
            raise ValueError(f"class {c} has {len(idx)} samples, fewer than {folds} folds")
        assignment[rng.permutation(idx)] = np.arange(len(idx)) % folds
    return assignment


# ---------------------------------------------------------------------------
# Reports


@dataclass
class RepeatResult:
    repeat: int
    accuracy: float
    n_train: int
    n_test: int


@dataclass
class Report:
    protocol: str
    method: str
    seed: int
    results: list = field(default_factory=list)
    predictions: list = field(default_factory=list)

    @property
    def accuracies(self):
        return np.array([r.accuracy for r in self.results])

    @property
    def mean(self):
        return float(self.accuracies.mean())

    @property
    def std(self):
        return float(self.accuracies.std())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["protocol", "repeat", "accuracy", "n_train", "n_test", "seed"])
        for r in self.results:
            w.writerow([self.protocol, r.repeat, f"{r.accuracy:.6f}", r.n_train, r.n_test,
                        self.seed])
        return buf.getvalue()

    def predictions_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["video_path", "true_label", "predicted_label", "similarity"])
        for row in self.predictions:
            w.writerow([row[0], row[1], row[2], f"{row[3]:.6f}"])
        return buf.getvalue()

    def table(self):
        lines = [f"protocol {self.protocol}  method {self.method}  seed {self.seed}",
                 f"{'repeat':>6}  {'accuracy':>8}  {'train':>6}  {'test':>6}"]
        for r in self.results:
            lines.append(f"{r.repeat:>6}  {100 * r.accuracy:>7.2f}%  {r.n_train:>6}  {r.n_test:>6}")
        lines.append(f"  mean  {100 * self.mean:>7.2f}%  (std {100 * self.std:.2f})")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Running


def _encoder(config, seed):
    return MultiScaleHashEncoder(
        scales=config.scales, n_bits=config.n_bits, lambdas=config.lambdas,
        n_iter=config.n_iter, w_steps=config.w_steps, update=config.update,
        n_codewords=config.n_codewords, train_stride=config.train_stride,
        train_cap=config.train_cap, encode_stride=config.encode_stride,
        encode_cap=config.encode_cap, random_state=seed)


def build_encoder(config, train_volumes, seed, transfer=None):
    """Fitted :class:`MultiScaleHashEncoder`, trained on ``train_volumes`` or
    taken from a transfer bundle."""
    enc = _encoder(config, seed)
    if transfer is not None:
        missing = set(config.scales) - set(transfer.models)
        if missing:
            raise ValueError(f"transfer bundle lacks scales {sorted(missing)}")
        return enc.set_models({P: transfer.models[P] for P in config.scales})
    return enc.fit(train_volumes)


class _Featurizer:
    """Maps volumes to classifier inputs for one repeat."""

    def __init__(self, config, train_volumes, seed, transfer):
        self.config = config
        if config.method == "phd":
            self.encoder = build_encoder(config, train_volumes, seed, transfer)

    def raw(self, volumes):
        if self.config.method == "lbp-top":
            return np.vstack([lbp_top_histogram(v, self.config.lbp_radius,
                                                self.config.lbp_neighbors) for v in volumes])
        return self.encoder.transform(volumes)


def _classify(config, featurizer, gallery_vols, gallery_labels, probe_vols):
    G = featurizer.raw(gallery_vols)
    Q = featurizer.raw(probe_vols)
    if config.method == "phd":
        pca = PCACompressor(config.pca_dim).fit(G)
        G, Q = pca.transform(G), pca.transform(Q)
    clf = CosineNNClassifier().fit(G, gallery_labels)
    return clf.predict_with_similarity(Q)


def run_protocol(config, volumes, labels, names=None):
    """Run ``config.protocol`` on in-memory volumes with labels ``0..C-1``.

    Volumes are first cropped to their most active window when
    ``config.crop`` is set. Returns a :class:`Report`. In transfer mode
    (``config.transfer`` set) the hash functions and codebooks come from the
    bundle and only PCA and the gallery are fitted on each training split.
    """
    config.validate()
    labels = np.asarray(labels, dtype=np.int64)
    if len(volumes) != len(labels):
        raise ValueError(f"{len(volumes)} volumes but {len(labels)} labels")
    names = list(names) if names is not None else [f"video_{i}" for i in range(len(volumes))]
    if config.crop:
        volumes = [crop_motion_window(v, config.crop) for v in volumes]
    transfer = None
    if config.transfer and config.method == "phd":
        transfer = load_bundle(config.transfer)

    report = Report(config.protocol, config.method, config.seed)
    folds = None
    if config.protocol == "ucla-50":
        folds = stratified_folds(
            labels, config.folds,
            np.random.default_rng(np.random.SeedSequence([config.seed, 0xF01D])))

    for rep in range(config.n_repeats):
        split_seed, model_seed = np.random.SeedSequence([config.seed, rep]).generate_state(2)
        if folds is not None:
            train = folds != rep
        else:
            train = stratified_half_split(labels, np.random.default_rng(split_seed))
        tr, te = np.flatnonzero(train), np.flatnonzero(~train)
        train_vols = [volumes[i] for i in tr]
        test_vols = [volumes[i] for i in te]
        featurizer = _Featurizer(config, train_vols, int(model_seed), transfer)

        if config.protocol == "ucla-9":
            pieces = lambda vs: [s for v in vs
                                 for s in split_subvideos(v, config.n_subs, config.sub_frames)]
            gallery_labels = np.repeat(labels[tr], config.n_subs)
            sub_pred, sub_sim = _classify(config, featurizer, pieces(train_vols),
                                          gallery_labels, pieces(test_vols))
            pred, sim = [], []
            for j in range(len(te)):
                block = slice(j * config.n_subs, (j + 1) * config.n_subs)
                votes = list(zip(sub_pred[block].tolist(), sub_sim[block].tolist()))
                winner = vote_subvideos(votes)
                pred.append(winner)
                sim.append(float(np.mean([s for lab, s in votes if lab == winner])))
            pred, sim = np.array(pred), np.array(sim)
        else:
            pred, sim = _classify(config, featurizer, train_vols, labels[tr], test_vols)

        acc = float(np.mean(pred == labels[te]))
        report.results.append(RepeatResult(rep, acc, len(tr), len(te)))
        report.predictions.extend(
            (names[i], int(labels[i]), int(p), float(s)) for i, p, s in zip(te, pred, sim))
        log.info("%s/%s repeat %d: accuracy %.4f", config.protocol, config.method, rep, acc)
    return report


def run_manifest(config, manifest_path):
    entries = read_manifest(manifest_path)
    volumes, labels, _ = load_dataset(entries)
    return run_protocol(config, volumes, labels, [e.path for e in entries])
