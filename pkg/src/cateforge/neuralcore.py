"""Minimal feed-forward stack: one-hidden-layer MLPs, Adam, plateau scheduler.

Everything is plain numpy with analytic gradients, which keeps training fully
deterministic for a given seed and lets tests verify every gradient against
finite differences.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

IDENTITY = "identity"
SIGMOID = "sigmoid"

LOSS_MSE = "mse"
LOSS_BCE = "bce"
LOSS_WEIGHTED_MSE = "weighted_mse"
LOSS_KINDS = (LOSS_MSE, LOSS_BCE, LOSS_WEIGHTED_MSE)

DEFAULT_HIDDEN = 10
DEFAULT_LR_GRID = (1e-2, 3e-3, 1e-3, 3e-4)

_TAG_FIT = 0xF17


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class MlpModel:
    """x -> act(w2 . relu(w1 x + b1) + b2), scalar output."""

    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: np.ndarray  # () scalar
    output: str = IDENTITY

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.output
        )


def init_mlp(
    input_dim: int,
    hidden_dim: int = DEFAULT_HIDDEN,
    output: str = IDENTITY,
    rng: np.random.Generator | None = None,
) -> MlpModel:
    """Uniform init in [-sqrt(1/fan_in), +sqrt(1/fan_in)] per layer."""
    if output not in (IDENTITY, SIGMOID):
        raise ValueError(f"unknown output activation {output!r}")
    rng = rng or np.random.default_rng(0)
    bound1 = np.sqrt(1.0 / input_dim)
    bound2 = np.sqrt(1.0 / hidden_dim)
    w1 = rng.uniform(-bound1, bound1, size=(hidden_dim, input_dim))
    b1 = rng.uniform(-bound1, bound1, size=hidden_dim)
    w2 = rng.uniform(-bound2, bound2, size=hidden_dim)
    b2 = np.asarray(rng.uniform(-bound2, bound2))
    return MlpModel(w1, b1, w2, b2, output)


def forward(model: MlpModel, x: np.ndarray):
    """Network output for a single vector (returns float) or a matrix (n,)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} features, got {X.shape[1]}")
    z1 = X @ model.w1.T + model.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ model.w2 + model.b2
    out = _sigmoid(z2) if model.output == SIGMOID else z2
    return float(out[0]) if single else out


def _weight_shares(weights: np.ndarray) -> np.ndarray:
    total = weights.sum()
    if total <= 0.0:
        return np.zeros_like(weights)
    return weights / total


def data_loss(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    loss_kind: str,
    sample_weights: np.ndarray | None = None,
) -> float:
    """Mean loss (weighted mean for weighted MSE), without L2 term."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z1 = X @ model.w1.T + model.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ model.w2 + model.b2
    if loss_kind == LOSS_MSE:
        return float(np.mean((z2 - y) ** 2))
    if loss_kind == LOSS_WEIGHTED_MSE:
        w = np.ones_like(y) if sample_weights is None else np.asarray(sample_weights, float)
        return float(_weight_shares(w) @ (z2 - y) ** 2)
    if loss_kind == LOSS_BCE:
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise ValueError("BCE target must lie in [0, 1]")
        # -[y log p + (1-y) log(1-p)] written on the logit scale
        return float(np.mean(np.logaddexp(0.0, z2) - y * z2))
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def backward(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    loss_kind: str,
    sample_weights: np.ndarray | None = None,
    weight_decay: float = 0.0,
) -> tuple[float, list[np.ndarray]]:
    """Analytic gradients of the batch loss plus weight_decay * W on weights.

    Biases carry no decay term. Returns (data loss, [dw1, db1, dw2, db2]).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    z1 = X @ model.w1.T + model.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ model.w2 + model.b2

    if loss_kind == LOSS_MSE:
        loss = float(np.mean((z2 - y) ** 2))
        dz2 = 2.0 * (z2 - y) / n
    elif loss_kind == LOSS_WEIGHTED_MSE:
        w = np.ones_like(y) if sample_weights is None else np.asarray(sample_weights, float)
        if np.any(w < 0.0):
            raise ValueError("sample weights must be non-negative")
        shares = _weight_shares(w)
        loss = float(shares @ (z2 - y) ** 2)
        dz2 = 2.0 * shares * (z2 - y)
    elif loss_kind == LOSS_BCE:
        if np.any(y < 0.0) or np.any(y > 1.0):
            raise ValueError("BCE target must lie in [0, 1]")
        loss = float(np.mean(np.logaddexp(0.0, z2) - y * z2))
        dz2 = (_sigmoid(z2) - y) / n
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")

    dw2 = a1.T @ dz2
    db2 = np.asarray(dz2.sum())
    dz1 = np.outer(dz2, model.w2)
    dz1 *= z1 > 0.0
    dw1 = dz1.T @ X
    db1 = dz1.sum(axis=0)
    if weight_decay:
        dw1 += weight_decay * model.w1
        dw2 += weight_decay * model.w2
    return loss, [dw1, db1, dw2, db2]


@dataclass
class AdamState:
    """First/second moment accumulators and step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    state: AdamState, params: list[np.ndarray], grads: list[np.ndarray], lr: float
) -> None:
    """One bias-corrected Adam update, in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class PlateauScheduler:
    """Multiply lr by `factor` after `patience` epochs without strict improvement.

    The patience counter resets on improvement and on each reduction, so the
    learning rate after k reductions is initial_lr * factor**k.
    """

    lr: float
    factor: float = 0.1
    patience: int = 5
    best: float = field(default=np.inf)
    bad_epochs: int = 0
    reductions: int = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
                self.reductions += 1
        return self.lr


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 75
    batch_size: int = 32
    weight_decay: float = 1e-4
    initial_lr: float = 1e-2
    scheduler_factor: float = 0.1
    scheduler_patience: int = 5
    val_fraction: float = 0.2
    seed: int = 0

    def validated(self) -> "TrainConfig":
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        for name in ("initial_lr", "scheduler_factor"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.scheduler_patience < 1:
            raise ValueError("epochs, batch_size and scheduler_patience must be >= 1")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")
        return self


def split_validation(
    n: int, val_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Random (train_idx, val_idx) with at least one validation row."""
    n_val = max(1, int(np.floor(val_fraction * n)))
    perm = rng.permutation(n)
    return perm[n_val:], perm[:n_val]


def iter_batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start : start + batch_size]


@dataclass
class FitResult:
    model: MlpModel
    train_losses: list[float]
    val_losses: list[float]
    lrs: list[float]
    n_updates: int
    val_indices: np.ndarray

    @property
    def final_val_loss(self) -> float:
        return self.val_losses[-1]


def fit(
    model: MlpModel,
    features: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
    loss_kind: str = LOSS_MSE,
    sample_weights: np.ndarray | None = None,
) -> FitResult:
    """Train for exactly cfg.epochs epochs and return the final-epoch model.

    A seed-derived 20% split serves as the validation set; after each epoch
    the plateau scheduler sees the validation loss. There is no early
    stopping and no best-epoch restore. If the validation rows carry zero
    total weight (weighted MSE) the training rows stand in for scheduling.
    """
    cfg.validated()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("features must be (n, m) with matching target length")
    w = None if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)

    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed & 0xFFFFFFFFFFFFFFFF, _TAG_FIT])
    )
    train_idx, val_idx = split_validation(X.shape[0], cfg.val_fraction, rng)
    if len(train_idx) < 2:
        raise ValueError("training data empty: need >= 2 rows after validation split")
    if loss_kind == LOSS_BCE and len(np.unique(y[train_idx])) < 2:
        warnings.warn("BCE target has a single class in the training rows")

    use_val_for_sched = True
    if loss_kind == LOSS_WEIGHTED_MSE and w is not None and w[val_idx].sum() <= 0.0:
        use_val_for_sched = False

    state = AdamState.for_params(model.params())
    sched = PlateauScheduler(cfg.initial_lr, cfg.scheduler_factor, cfg.scheduler_patience)
    train_losses: list[float] = []
    val_losses: list[float] = []
    lrs: list[float] = []
    n_updates = 0
    for _ in range(cfg.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        lrs.append(sched.lr)
        batch_losses = []
        for batch in iter_batches(order, cfg.batch_size):
            loss, grads = backward(
                model,
                X[batch],
                y[batch],
                loss_kind,
                None if w is None else w[batch],
                cfg.weight_decay,
            )
            adam_step(state, model.params(), grads, sched.lr)
            batch_losses.append(loss)
            n_updates += 1
        train_losses.append(float(np.mean(batch_losses)))
        sched_rows = val_idx if use_val_for_sched else train_idx
        val_loss = data_loss(
            model, X[sched_rows], y[sched_rows], loss_kind, None if w is None else w[sched_rows]
        )
        val_losses.append(val_loss)
        sched.step(val_loss)
    return FitResult(model, train_losses, val_losses, lrs, n_updates, val_idx)


def train_mlp(
    features: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
    loss_kind: str = LOSS_MSE,
    sample_weights: np.ndarray | None = None,
    hidden_dim: int = DEFAULT_HIDDEN,
    output: str = IDENTITY,
) -> FitResult:
    """Initialize from cfg.seed and fit; the common single-model path."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFFFFFFFFFF]))
    model = init_mlp(np.asarray(features).shape[1], hidden_dim, output, rng)
    return fit(model, features, targets, cfg, loss_kind, sample_weights)


def tune_train_mlp(
    features: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
    loss_kind: str = LOSS_MSE,
    sample_weights: np.ndarray | None = None,
    hidden_dim: int = DEFAULT_HIDDEN,
    output: str = IDENTITY,
    lr_grid: tuple[float, ...] = DEFAULT_LR_GRID,
) -> tuple[FitResult, float]:
    """Train once per grid learning rate, keep the best final validation loss.

    Ties resolve to the earlier grid entry, so tuning is deterministic.
    """
    best: tuple[FitResult, float] | None = None
    for lr in lr_grid:
        result = train_mlp(
            features,
            targets,
            dataclasses.replace(cfg, initial_lr=lr),
            loss_kind,
            sample_weights,
            hidden_dim,
            output,
        )
        if best is None or result.final_val_loss < best[0].final_val_loss:
            best = (result, lr)
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# Trained-model serialization: plain text, 17 significant digits.


def save_model(model: MlpModel, path) -> None:
    def fmt(a: np.ndarray) -> str:
        return " ".join(format(v, ".17g") for v in np.asarray(a, float).ravel())

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("mlpmodel 1\n")
        fh.write(f"input_dim {model.input_dim}\n")
        fh.write(f"hidden_dim {model.hidden_dim}\n")
        fh.write(f"output {model.output}\n")
        fh.write(f"w1 {fmt(model.w1)}\n")
        fh.write(f"b1 {fmt(model.b1)}\n")
        fh.write(f"w2 {fmt(model.w2)}\n")
        fh.write(f"b2 {fmt(model.b2)}\n")


def load_model(path) -> MlpModel:
    with open(path, "r", encoding="utf-8") as fh:
        fields = {}
        magic = fh.readline().strip()
        if magic != "mlpmodel 1":
            raise ValueError(f"unsupported model file header {magic!r}")
        for line in fh:
            key, _, rest = line.strip().partition(" ")
            fields[key] = rest
    m = int(fields["input_dim"])
    h = int(fields["hidden_dim"])
    output = fields["output"]

    def arr(key: str, shape) -> np.ndarray:
        values = np.array([float(v) for v in fields[key].split()])
        return values.reshape(shape)

    return MlpModel(
        arr("w1", (h, m)), arr("b1", (h,)), arr("w2", (h,)),
        np.asarray(float(fields["b2"])), output,
    )
