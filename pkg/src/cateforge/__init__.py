"""cateforge: CATE meta-learners on a synthetic clinical benchmark.

Estimates conditional average treatment effects with four meta-learners
(T, RA, DR, R) over a fully known synthetic primary-care population, and
compares confounder representations (perfect / none / entangled embedding /
external embeddings) by PEHE across training-set sizes.
"""

from .datagen import (
    Dataset,
    GeneratorSpec,
    default_spec,
    enumerate_true_cate,
    sample_dataset,
    split_dataset,
)
from .evaluation import Cell, ExperimentPlan, ExperimentResult, pehe, run_cell, run_plan
from .metalearners import (
    LEARNERS,
    CateModel,
    PseudoOutcomeSet,
    fit_cate,
    predict_cate,
    pseudo_dr,
    pseudo_r,
    pseudo_ra,
)
from .neuralcore import MlpModel, TrainConfig
from .nuisance import NuisanceEstimates, fit_nuisance, predict_nuisance, tune_nuisance
from .representations import (
    CHANNELS,
    RepresentationConfig,
    RepresentedDataset,
    build_representation,
    entangle,
    load_embeddings,
    save_embeddings,
)

__version__ = "0.1.0"

__all__ = [
    "Cell",
    "CHANNELS",
    "CateModel",
    "Dataset",
    "ExperimentPlan",
    "ExperimentResult",
    "GeneratorSpec",
    "LEARNERS",
    "MlpModel",
    "NuisanceEstimates",
    "PseudoOutcomeSet",
    "RepresentationConfig",
    "RepresentedDataset",
    "TrainConfig",
    "build_representation",
    "default_spec",
    "entangle",
    "enumerate_true_cate",
    "fit_cate",
    "fit_nuisance",
    "load_embeddings",
    "pehe",
    "predict_cate",
    "predict_nuisance",
    "pseudo_dr",
    "pseudo_r",
    "pseudo_ra",
    "run_cell",
    "run_plan",
    "sample_dataset",
    "save_embeddings",
    "split_dataset",
    "tune_nuisance",
]
