"""Dynamic texture recognition from learned binary codes of volumetric
pixel difference vectors.

Videos are ``(T, H, W)`` uint8 volumes. For each neighborhood size ``P``,
pixel difference vectors are hashed to ``K``-bit codes by learned linear
projections, the codes are quantized against a k-means codebook, and the
per-scale histograms are concatenated, reduced by PCA and classified by
cosine nearest neighbor.
"""

from .baseline import LBPTOPTransformer, lbp_top_histogram
from .bundle import BundleError, ModelBundle, load_bundle, save_bundle
from .classify import CosineNNClassifier, nn_cosine, split_subvideos, vote_subvideos
from .codebook import BinaryCodebook, Codebook, encode_histogram, fit_codebook
from .features import MultiScaleHashEncoder, PCACompressor, PcaModel, encode_video, fit_pca
from .harness import ExperimentConfig, Report, run_manifest, run_protocol
from .hashlearn import HashModel, PDVHasher, binarize, eval_objective, train_hash
from .pdv import extract_pdvs
from .video_io import SynthConfig, crop_motion_window, load_volume, save_volume, synth_dataset

__version__ = "0.1.0"

__all__ = [
    "BinaryCodebook", "BundleError", "Codebook", "CosineNNClassifier", "ExperimentConfig",
    "HashModel", "LBPTOPTransformer", "ModelBundle", "MultiScaleHashEncoder", "PCACompressor",
    "PDVHasher", "PcaModel", "Report", "SynthConfig", "binarize", "crop_motion_window",
    "encode_histogram", "encode_video", "eval_objective", "extract_pdvs", "fit_codebook",
    "fit_pca", "lbp_top_histogram", "load_bundle", "load_volume", "nn_cosine", "run_manifest",
    "run_protocol", "save_bundle", "save_volume", "split_subvideos", "synth_dataset",
    "train_hash", "vote_subvideos",
]
