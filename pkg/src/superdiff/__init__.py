"""Salient object detection by integrated, spectrally refined graph diffusion.

Per image, a close-loop superpixel graph is built in several color spaces and
scales; each resulting diffusion operator is spectrally refined (constant
eigenvector dropped, eigengap truncation, variance filter) and applied to a
pool of seed vectors; a single weight vector over all matrix-seed columns is
learned in closed form and produces the final saliency map.
"""

from .errors import SuperDiffError
from .estimator import SuperDiffusion, prepare_image, prepare_images
from .graph import SaliencyGraph, build_graph, laplacians
from .ingest import (
    FeatureBank,
    ImageSample,
    convert_color,
    index_dataset,
    load_feature_bank,
    load_sample,
    split_train_test,
)
from .refine import (
    NormalizedDiffusion,
    RefinedDiffusion,
    find_eigengap,
    normalize_for_seed,
    refine_matrix,
)
from .seeds import SeedVector, absorbed_time_seed, external_seed, gaussian_seed
from .spectral import SpectralDecomposition, decompose, diffusion_apply, neumann_check
from .superpixel import SuperpixelSegmentation, segment
from .train import (
    ColumnBank,
    GridSettings,
    WeightVector,
    build_column_bank,
    fit_weights,
    infer,
    load_weights,
    node_ground_truth,
    save_weights,
)

__version__ = "0.1.0"

__all__ = [
    "SuperDiffusion",
    "SuperDiffError",
    "ImageSample",
    "FeatureBank",
    "SaliencyGraph",
    "SpectralDecomposition",
    "RefinedDiffusion",
    "NormalizedDiffusion",
    "SeedVector",
    "SuperpixelSegmentation",
    "ColumnBank",
    "WeightVector",
    "GridSettings",
    "load_sample",
    "convert_color",
    "load_feature_bank",
    "index_dataset",
    "split_train_test",
    "segment",
    "build_graph",
    "laplacians",
    "decompose",
    "diffusion_apply",
    "neumann_check",
    "find_eigengap",
    "refine_matrix",
    "normalize_for_seed",
    "gaussian_seed",
    "absorbed_time_seed",
    "external_seed",
    "build_column_bank",
    "node_ground_truth",
    "fit_weights",
    "infer",
    "save_weights",
    "load_weights",
    "prepare_image",
    "prepare_images",
]
