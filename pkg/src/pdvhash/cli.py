"""Command-line interface.

::

    pdvhash synth    --out DIR [--classes C --videos-per-class N --shape T,H,W --noise S]
    pdvhash train    --manifest M --out BUNDLE [config flags]
    pdvhash encode   --manifest M --bundle BUNDLE --out FEATURES.csv [--raw]
    pdvhash eval     --manifest M --seed S [--report R.csv --predictions P.csv] [config flags]
    pdvhash baseline --manifest M --seed S [...]
    pdvhash bundle inspect BUNDLE

Config flags mirror :class:`~pdvhash.harness.ExperimentConfig` fields
(``--n-codewords 64``, ``--scales 3,5``...) and override values read from
``--config FILE`` (flat ``key = value`` lines).
"""

import argparse
import csv
import dataclasses
import logging
import sys
import warnings

from .bundle import BundleError, ModelBundle, describe_bundle, load_bundle, save_bundle
from .features import PCACompressor, project
from .harness import ExperimentConfig, build_encoder, run_manifest
from .video_io import (SynthConfig, VolumeFormatError, load_dataset, read_manifest,
                       synth_dataset, write_dataset)


def _add_config_flags(parser):
    group = parser.add_argument_group("experiment configuration")
    group.add_argument("--config", help="flat 'key = value' config file")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "seed":
            continue
        group.add_argument("--" + f.name.replace("_", "-"), dest=f"cfg_{f.name}",
                           metavar=f.name.upper())


def _config_from_args(args, **forced):
    values = ExperimentConfig.from_file(args.config).to_dict() if args.config else {}
    for key, value in vars(args).items():
        if key.startswith("cfg_") and value is not None:
            values[key[4:]] = value
    if getattr(args, "seed", None) is not None:
        values["seed"] = str(args.seed)
    values.update(forced)
    return ExperimentConfig.from_dict(values)


def _train_entries(entries):
    tagged = [e for e in entries if e.split == "train"]
    return tagged or entries


def cmd_synth(args):
    shape = tuple(int(s) for s in args.shape.split(","))
    config = SynthConfig(args.classes, args.videos_per_class, shape, args.noise,
                         args.amplitude, args.flicker)
    volumes, labels = synth_dataset(config, args.seed)
    manifest = write_dataset(volumes, labels, args.out)
    print(f"wrote {len(volumes)} volumes and {manifest}")


def cmd_train(args):
    config = _config_from_args(args, method="phd")
    entries = _train_entries(read_manifest(args.manifest))
    volumes, _, _ = load_dataset(entries)
    encoder = build_encoder(config, volumes, config.seed)
    raw = encoder.transform(volumes)
    pca = PCACompressor(config.pca_dim).fit(raw).model_
    bundle = ModelBundle(encoder.models_, pca, config.to_dict())
    save_bundle(bundle, args.out)
    print(f"trained on {len(volumes)} videos; wrote {args.out}")


def cmd_encode(args):
    bundle = load_bundle(args.bundle)
    entries = read_manifest(args.manifest)
    volumes, _, _ = load_dataset(entries)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    config = ExperimentConfig.from_dict({k: v for k, v in bundle.config.items() if k in known})
    encoder = build_encoder(config, None, config.seed, transfer=bundle)
    feats = encoder.transform(volumes)
    if not args.raw:
        if bundle.pca is None:
            raise SystemExit("bundle has no PCA section; use --raw")
        feats = project(bundle.pca, feats)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_path", "label"] + [f"f{i}" for i in range(feats.shape[1])])
        for e, row in zip(entries, feats):
            w.writerow([e.path, e.label] + [repr(float(v)) for v in row])
    print(f"wrote {len(entries)} feature vectors of length {feats.shape[1]} to {args.out}")


def _run_eval(args, method):
    config = _config_from_args(args, method=method)
    report = run_manifest(config, args.manifest)
    print(report.table())
    if args.report:
        with open(args.report, "w", newline="") as fh:
            fh.write(report.to_csv())
    if args.predictions:
        with open(args.predictions, "w", newline="") as fh:
            fh.write(report.predictions_csv())
    return report


def cmd_eval(args):
    method = args.cfg_method or "phd"
    _run_eval(args, method)


def cmd_baseline(args):
    _run_eval(args, "lbp-top")


def cmd_bundle(args):
    print(describe_bundle(load_bundle(args.path)))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pdvhash", description="Dynamic texture recognition with hashed pixel difference vectors.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic grating dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--videos-per-class", type=int, default=20)
    p.add_argument("--shape", default="30,30,30")
    p.add_argument("--noise", type=float, default=SynthConfig.noise)
    p.add_argument("--amplitude", type=float, default=SynthConfig.amplitude)
    p.add_argument("--flicker", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train hash functions, codebooks and PCA into a bundle")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="export feature vectors using a trained bundle")
    p.add_argument("--manifest", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--raw", action="store_true", help="skip PCA, export raw histograms")
    p.set_defaults(func=cmd_encode)

    for name, func, text in (("eval", cmd_eval, "run an evaluation protocol"),
                             ("baseline", cmd_baseline, "run a protocol with LBP-TOP features")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--manifest", required=True)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--report", help="write the per-repeat report CSV here")
        p.add_argument("--predictions", help="write per-video predictions CSV here")
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("bundle", help="bundle utilities")
    bsub = p.add_subparsers(dest="bundle_command", required=True)
    q = bsub.add_parser("inspect", help="describe a model bundle")
    q.add_argument("path")
    q.set_defaults(func=cmd_bundle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        args.func(args)
    except (BundleError, VolumeFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
