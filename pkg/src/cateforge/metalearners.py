"""Pseudo-outcome construction and second-stage CATE regression.

The T-learner needs no pseudo-outcome: its estimate is the pointwise
difference of the two outcome models. The RA, DR and R learners turn the
nuisance estimates into per-sample regression targets; the R-learner's
target comes with per-sample weights consumed through a weighted squared
error. Estimated propensities are clipped into [eps, 1-eps] before entering
any denominator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import neuralcore as nc
from .neuralcore import MlpModel, TrainConfig
from .nuisance import NuisanceEstimates, NuisanceModels

LEARNER_T = "T"
LEARNER_RA = "RA"
LEARNER_DR = "DR"
LEARNER_R = "R"
LEARNERS = (LEARNER_T, LEARNER_RA, LEARNER_DR, LEARNER_R)

DEFAULT_CLIP_EPSILON = 0.025


@dataclass
class PseudoOutcomeSet:
    learner: str
    tau_tilde: np.ndarray | None
    weights: np.ndarray | None
    clip_epsilon: float


@dataclass
class CateModel:
    learner: str
    mu0: MlpModel | None = None
    mu1: MlpModel | None = None
    regressor: MlpModel | None = None


def clip_propensity(pi: np.ndarray, clip_epsilon: float) -> np.ndarray:
    if not 0.0 < clip_epsilon < 0.5:
        raise ValueError(f"clip_epsilon must lie in (0, 0.5), got {clip_epsilon}")
    return np.clip(np.asarray(pi, dtype=np.float64), clip_epsilon, 1.0 - clip_epsilon)


def _check_lengths(t: np.ndarray, y: np.ndarray, eta: NuisanceEstimates) -> None:
    n = len(t)
    if len(y) != n or eta.n != n:
        raise ValueError("t, y and nuisance estimates must share their length")


def pseudo_ra(
    t: np.ndarray,
    y: np.ndarray,
    eta: NuisanceEstimates,
    clip_epsilon: float = DEFAULT_CLIP_EPSILON,
) -> PseudoOutcomeSet:
    """Regression-adjusted target: t(y - mu0_hat) + (1-t)(mu1_hat - y)."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(t, y, eta)
    tau = t * (y - eta.mu0_hat) + (1.0 - t) * (eta.mu1_hat - y)
    return PseudoOutcomeSet(LEARNER_RA, tau, np.ones_like(tau), clip_epsilon)


def pseudo_dr(
    t: np.ndarray,
    y: np.ndarray,
    eta: NuisanceEstimates,
    clip_epsilon: float = DEFAULT_CLIP_EPSILON,
) -> PseudoOutcomeSet:
    """Doubly robust target with inverse-propensity terms on clipped pi."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(t, y, eta)
    pi = clip_propensity(eta.pi_hat, clip_epsilon)
    w1 = t / pi
    w0 = (1.0 - t) / (1.0 - pi)
    tau = (w1 - w0) * y + (1.0 - w1) * eta.mu1_hat - (1.0 - w0) * eta.mu0_hat
    return PseudoOutcomeSet(LEARNER_DR, tau, np.ones_like(tau), clip_epsilon)


def pseudo_r(
    t: np.ndarray,
    y: np.ndarray,
    eta: NuisanceEstimates,
    clip_epsilon: float = DEFAULT_CLIP_EPSILON,
) -> PseudoOutcomeSet:
    """Residual-on-residual target with weights (t - pi_hat)^2.

    Clipping guarantees |t - pi_hat| >= eps, so the division is always safe.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(t, y, eta)
    pi = clip_propensity(eta.pi_hat, clip_epsilon)
    residual_t = t - pi
    tau = (y - eta.mu_hat) / residual_t
    return PseudoOutcomeSet(LEARNER_R, tau, residual_t**2, clip_epsilon)


def fit_cate(
    learner: str,
    features: np.ndarray | None,
    pseudo: PseudoOutcomeSet | None,
    nuisance_models: NuisanceModels | None,
    cfg: TrainConfig | None = None,
    lr_grid: tuple[float, ...] = nc.DEFAULT_LR_GRID,
) -> CateModel:
    """Build the CATE estimator for one learner.

    T reuses the two outcome models directly. RA/DR/R fit a second-stage MLP
    on the pseudo-outcomes with the same training recipe as the nuisance
    models (learning rate tuned on its own validation loss); R forwards its
    weights into a weighted squared error.
    """
    if learner == LEARNER_T:
        if nuisance_models is None:
            raise ValueError("the T-learner needs the fitted outcome models")
        return CateModel(LEARNER_T, mu0=nuisance_models.mu0, mu1=nuisance_models.mu1)

    if learner not in LEARNERS:
        raise ValueError(f"unknown learner {learner!r}")
    if pseudo is None or pseudo.tau_tilde is None:
        raise ValueError(f"the {learner}-learner needs a pseudo-outcome set")
    if cfg is None:
        raise ValueError("second-stage training needs a TrainConfig")
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != len(pseudo.tau_tilde):
        raise ValueError("features and pseudo-outcomes must share their length")

    if learner == LEARNER_R:
        if pseudo.weights is None:
            raise ValueError("the R-learner requires per-sample weights")
        loss_kind = nc.LOSS_WEIGHTED_MSE
        weights = pseudo.weights
    else:
        loss_kind = nc.LOSS_MSE
        weights = None
    result, _ = nc.tune_train_mlp(
        features,
        pseudo.tau_tilde,
        cfg,
        loss_kind,
        weights,
        output=nc.IDENTITY,
        lr_grid=lr_grid,
    )
    return CateModel(learner, regressor=result.model)


def predict_cate(model: CateModel, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if model.learner == LEARNER_T:
        return np.asarray(nc.forward(model.mu1, features)) - np.asarray(
            nc.forward(model.mu0, features)
        )
    return np.asarray(nc.forward(model.regressor, features))


def predictions_to_csv(
    tau_hat: np.ndarray, tau_true: np.ndarray, path, config_digest: str | None = None
) -> None:
    """Test-set CATE predictions next to the ground truth."""
    if len(tau_hat) != len(tau_true):
        raise ValueError("tau_hat and tau_true must share their length")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if config_digest:
            fh.write(f"# config_digest={config_digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "tau_hat", "tau_true"])
        for i, (est, true) in enumerate(zip(tau_hat, tau_true)):
            writer.writerow([str(i), format(est, ".17g"), format(true, ".17g")])
