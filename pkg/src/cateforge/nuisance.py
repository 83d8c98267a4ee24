"""Joint estimation of the four nuisance quantities with task alternation.

Four separate single-hidden-layer MLPs estimate mu0 (outcome regression on
control rows), mu1 (treated rows), mu (all rows) and pi (treatment
probability, all rows). Training interleaves the four tasks: at every global
batch index each model takes one Adam step on the next batch of its own
shuffled stream, with its own optimizer and plateau scheduler. One shared
validation split serves all tasks; no cross-fitting anywhere.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import neuralcore as nc
from .neuralcore import AdamState, MlpModel, PlateauScheduler, TrainConfig

TASKS = ("mu0", "mu1", "mu", "pi")

_TAG_VAL = 0xA1
_TAG_INIT = 0xB2
_TAG_STREAM = 0xC3


@dataclass(frozen=True)
class Provenance:
    seed: int
    config_digest: str = ""


@dataclass
class NuisanceModels:
    mu0: MlpModel
    mu1: MlpModel
    mu: MlpModel
    pi: MlpModel
    provenance: Provenance

    def by_task(self) -> dict[str, MlpModel]:
        return {"mu0": self.mu0, "mu1": self.mu1, "mu": self.mu, "pi": self.pi}


@dataclass
class NuisanceEstimates:
    mu0_hat: np.ndarray
    mu1_hat: np.ndarray
    mu_hat: np.ndarray
    pi_hat: np.ndarray
    provenance: Provenance

    @property
    def n(self) -> int:
        return len(self.mu_hat)


@dataclass
class TaskHistory:
    val_losses: list[float]
    lrs: list[float]
    updates_per_epoch: list[int]

    @property
    def final_val_loss(self) -> float:
        return self.val_losses[-1]


@dataclass
class NuisanceFitResult:
    models: NuisanceModels
    histories: dict[str, TaskHistory]
    val_indices: np.ndarray


class _BatchStream:
    """Endless batch stream over fixed rows, reshuffled on every pass."""

    def __init__(self, rows: np.ndarray, batch_size: int, rng: np.random.Generator):
        self.rows = rows
        self.batch_size = batch_size
        self.rng = rng
        self._order = rows[rng.permutation(len(rows))]
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self._pos >= len(self._order):
            self._order = self.rows[self.rng.permutation(len(self.rows))]
            self._pos = 0
        batch = self._order[self._pos : self._pos + self.batch_size]
        self._pos += len(batch)
        return batch


def _shared_cfg(cfgs: Mapping[str, TrainConfig]) -> TrainConfig:
    missing = [t for t in TASKS if t not in cfgs]
    if missing:
        raise ValueError(f"missing TrainConfig for tasks {missing}")
    ref = cfgs["mu"]
    for task in TASKS:
        cfg = cfgs[task].validated()
        shared = dataclasses.replace(cfg, initial_lr=ref.initial_lr)
        if shared != ref:
            raise ValueError(
                "the four nuisance TrainConfigs may differ only in initial_lr"
            )
    return ref


def fit_nuisance(
    features: np.ndarray,
    t: np.ndarray,
    y: np.ndarray,
    cfgs: Mapping[str, TrainConfig],
    config_digest: str = "",
) -> NuisanceFitResult:
    """Train the four nuisance models with per-batch task alternation.

    Epoch accounting is keyed to the full-data mu stream; 75 epochs means
    75 passes of that stream, with every model stepping once per global batch
    index in the fixed order mu0, mu1, mu, pi. Group-restricted tasks only
    ever see rows of their own treatment group, for training and validation
    alike (empty group validation falls back to the group's training rows).
    """
    X = np.asarray(features, dtype=np.float64)
    t = np.asarray(t)
    y = np.asarray(y, dtype=np.float64)
    cfg = _shared_cfg(cfgs)
    seed = cfg.seed & 0xFFFFFFFFFFFFFFFF

    rng_val = np.random.default_rng(np.random.SeedSequence([seed, _TAG_VAL]))
    train_idx, val_idx = nc.split_validation(X.shape[0], cfg.val_fraction, rng_val)
    if len(train_idx) < 2:
        raise ValueError("training data empty: need >= 2 rows after validation split")

    group0 = train_idx[t[train_idx] == 0]
    group1 = train_idx[t[train_idx] == 1]
    if len(group0) == 0 or len(group1) == 0:
        raise ValueError(
            "a treatment group is empty in the training rows; draw a larger "
            "sample or use a different seed"
        )

    task_rows = {"mu0": group0, "mu1": group1, "mu": train_idx, "pi": train_idx}
    task_targets = {"mu0": y, "mu1": y, "mu": y, "pi": t.astype(np.float64)}
    task_loss = {"mu0": nc.LOSS_MSE, "mu1": nc.LOSS_MSE, "mu": nc.LOSS_MSE, "pi": nc.LOSS_BCE}
    task_output = {"mu0": nc.IDENTITY, "mu1": nc.IDENTITY, "mu": nc.IDENTITY, "pi": nc.SIGMOID}
    val0 = val_idx[t[val_idx] == 0]
    val1 = val_idx[t[val_idx] == 1]
    task_val = {
        "mu0": val0 if len(val0) else group0,
        "mu1": val1 if len(val1) else group1,
        "mu": val_idx,
        "pi": val_idx,
    }

    models: dict[str, MlpModel] = {}
    states: dict[str, AdamState] = {}
    scheds: dict[str, PlateauScheduler] = {}
    streams: dict[str, _BatchStream] = {}
    histories = {task: TaskHistory([], [], []) for task in TASKS}
    for i, task in enumerate(TASKS):
        rng_init = np.random.default_rng(np.random.SeedSequence([seed, _TAG_INIT, i]))
        models[task] = nc.init_mlp(X.shape[1], nc.DEFAULT_HIDDEN, task_output[task], rng_init)
        states[task] = AdamState.for_params(models[task].params())
        scheds[task] = PlateauScheduler(
            cfgs[task].initial_lr, cfg.scheduler_factor, cfg.scheduler_patience
        )
        rng_stream = np.random.default_rng(np.random.SeedSequence([seed, _TAG_STREAM, i]))
        streams[task] = _BatchStream(task_rows[task], cfg.batch_size, rng_stream)

    steps_per_epoch = int(np.ceil(len(train_idx) / cfg.batch_size))
    for _ in range(cfg.epochs):
        counts = dict.fromkeys(TASKS, 0)
        for _ in range(steps_per_epoch):
            for task in TASKS:
                model = models[task]
                batch = streams[task].next_batch()
                _, grads = nc.backward(
                    model,
                    X[batch],
                    task_targets[task][batch],
                    task_loss[task],
                    None,
                    cfg.weight_decay,
                )
                nc.adam_step(states[task], model.params(), grads, scheds[task].lr)
                counts[task] += 1
        for task in TASKS:
            rows = task_val[task]
            val_loss = nc.data_loss(
                models[task], X[rows], task_targets[task][rows], task_loss[task]
            )
            hist = histories[task]
            hist.val_losses.append(val_loss)
            hist.lrs.append(scheds[task].lr)
            hist.updates_per_epoch.append(counts[task])
            scheds[task].step(val_loss)

    bundle = NuisanceModels(
        mu0=models["mu0"],
        mu1=models["mu1"],
        mu=models["mu"],
        pi=models["pi"],
        provenance=Provenance(seed=cfg.seed, config_digest=config_digest),
    )
    return NuisanceFitResult(models=bundle, histories=histories, val_indices=val_idx)


def tune_nuisance(
    features: np.ndarray,
    t: np.ndarray,
    y: np.ndarray,
    base_cfg: TrainConfig,
    lr_grid: tuple[float, ...] = nc.DEFAULT_LR_GRID,
    config_digest: str = "",
) -> tuple[NuisanceModels, dict[str, float]]:
    """Per-task learning-rate selection over the grid.

    The four models never interact during training, so each task can keep its
    parameters from whichever grid run minimized its own final validation
    loss; that is exactly a joint run with per-task initial rates. Ties
    resolve to the earlier grid entry.
    """
    best_loss: dict[str, float] = {task: np.inf for task in TASKS}
    best_model: dict[str, MlpModel] = {}
    chosen: dict[str, float] = {}
    for lr in lr_grid:
        cfg = dataclasses.replace(base_cfg, initial_lr=lr)
        result = fit_nuisance(features, t, y, {task: cfg for task in TASKS}, config_digest)
        for task in TASKS:
            final = result.histories[task].final_val_loss
            if final < best_loss[task]:
                best_loss[task] = final
                best_model[task] = result.models.by_task()[task]
                chosen[task] = lr
    models = NuisanceModels(
        mu0=best_model["mu0"],
        mu1=best_model["mu1"],
        mu=best_model["mu"],
        pi=best_model["pi"],
        provenance=Provenance(seed=base_cfg.seed, config_digest=config_digest),
    )
    return models, chosen


def predict_nuisance(models: NuisanceModels, features: np.ndarray) -> NuisanceEstimates:
    """Apply the four models; pi stays the raw sigmoid output.

    The sigmoid can saturate to exactly 0/1 in float arithmetic, so pi is
    nudged inside (0, 1) by one part in 1e12; meta-learner clipping is far
    wider and happens downstream.
    """
    X = np.asarray(features, dtype=np.float64)
    pi = np.clip(nc.forward(models.pi, X), 1e-12, 1.0 - 1e-12)
    return NuisanceEstimates(
        mu0_hat=np.asarray(nc.forward(models.mu0, X)),
        mu1_hat=np.asarray(nc.forward(models.mu1, X)),
        mu_hat=np.asarray(nc.forward(models.mu, X)),
        pi_hat=pi,
        provenance=models.provenance,
    )


def estimates_to_csv(estimates: NuisanceEstimates, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if estimates.provenance.config_digest:
            fh.write(f"# config_digest={estimates.provenance.config_digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "mu0_hat", "mu1_hat", "mu_hat", "pi_hat"])
        for i in range(estimates.n):
            writer.writerow(
                [
                    str(i),
                    format(estimates.mu0_hat[i], ".17g"),
                    format(estimates.mu1_hat[i], ".17g"),
                    format(estimates.mu_hat[i], ".17g"),
                    format(estimates.pi_hat[i], ".17g"),
                ]
            )
