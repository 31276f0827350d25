"""Vector-sensor direction-of-arrival toolkit.

Synthesizes six-component vector-sensor snapshots for 1 to 5 sources,
compresses them into 42-real covariance fingerprints, trains dense
networks to count sources and regress their (elevation, azimuth) pairs,
and evaluates the error geometry on the unit sphere.
"""

from .geometry import DoA, FieldOfView, FULL_FOV, LIMITED_FOV
from .signal_model import Polarization, SourceSpec
from .dataset import GenerationConfig, LabeledDataset, generate, load, save
from .neural_net import Mlp, TrainOptions, train
from .pipeline import DoaSystem, cross_product_doa, predict

__all__ = [
    "DoA",
    "FieldOfView",
    "FULL_FOV",
    "LIMITED_FOV",
    "Polarization",
    "SourceSpec",
    "GenerationConfig",
    "LabeledDataset",
    "generate",
    "load",
    "save",
    "Mlp",
    "TrainOptions",
    "train",
    "DoaSystem",
    "cross_product_doa",
    "predict",
]

__version__ = "0.1.0"
