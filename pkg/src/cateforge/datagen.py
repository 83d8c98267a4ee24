"""Synthetic primary-care population with known propensity and ground-truth CATE.

A small Bayesian network produces tabular background variables, five binary
symptoms that act as the only confounders, a treatment (antibiotics) assigned
by a logistic model over the symptoms, and a count outcome (days at home)
drawn from a separate Poisson regression per treatment arm. Because the true
per-arm means are closed-form, every sampled row carries its exact potential
outcome means and treatment effect.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import ConfigurationError
from .rng import (
    CH_BACKGROUND,
    CH_OUTCOME,
    CH_SYMPTOM,
    CH_TREATMENT,
    derive_seed,
    keyed_uniforms,
    poisson_inverse,
)

SYMPTOMS = ("dyspnea", "cough", "pain", "fever", "nasal")

_TAG_SPLIT = 0x5B17


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class BernoulliCpd:
    """P(var=1 | parents) = logistic(intercept + sum coef * parent value)."""

    name: str
    intercept: float
    parents: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class CategoricalCpd:
    """Root categorical variable with levels coded 0..len(probs)-1."""

    name: str
    probs: Sequence[float]


BackgroundCpd = Union[BernoulliCpd, CategoricalCpd]


@dataclass(frozen=True)
class LogisticModel:
    """Logistic score over the five symptoms: intercept + weights . s."""

    intercept: float
    weights: Mapping[str, float]

    def logits(self, symptoms: np.ndarray) -> np.ndarray:
        return self.intercept + symptoms @ self.weight_vector()

    def weight_vector(self) -> np.ndarray:
        return np.array([self.weights[s] for s in SYMPTOMS], dtype=np.float64)


@dataclass(frozen=True)
class OutcomeParams:
    """Per-arm Poisson regression, log link: mean = exp(intercept + weights . s)."""

    intercept: float
    weights: Mapping[str, float]

    def weight_vector(self) -> np.ndarray:
        return np.array([self.weights[s] for s in SYMPTOMS], dtype=np.float64)

    def means(self, symptoms: np.ndarray) -> np.ndarray:
        return np.exp(self.intercept + symptoms @ self.weight_vector())


@dataclass(frozen=True)
class GeneratorSpec:
    background_cpds: Sequence[BackgroundCpd]
    symptom_cpds: Mapping[str, BernoulliCpd]
    propensity: LogisticModel
    outcome_control: OutcomeParams
    outcome_treated: OutcomeParams
    seed: int = 0

    @property
    def background_names(self) -> tuple[str, ...]:
        return tuple(cpd.name for cpd in self.background_cpds)


@dataclass
class Dataset:
    """Sampled population with observed data and ground-truth columns."""

    background_names: tuple[str, ...]
    x_background: np.ndarray  # (n, p_b) float
    x_symptoms: np.ndarray  # (n, 5) float in {0, 1}
    t: np.ndarray  # (n,) int, antibiotics indicator
    y_obs: np.ndarray  # (n,) int, days at home
    mu0_true: np.ndarray
    mu1_true: np.ndarray
    tau_true: np.ndarray
    pi_true: np.ndarray

    @property
    def n(self) -> int:
        return self.x_symptoms.shape[0]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            background_names=self.background_names,
            x_background=self.x_background[idx],
            x_symptoms=self.x_symptoms[idx],
            t=self.t[idx],
            y_obs=self.y_obs[idx],
            mu0_true=self.mu0_true[idx],
            mu1_true=self.mu1_true[idx],
            tau_true=self.tau_true[idx],
            pi_true=self.pi_true[idx],
        )


def default_spec(seed: int = 20240918) -> GeneratorSpec:
    """Default generating process.

    Coefficients are chosen so that days-at-home means stay within [0.5, 12],
    treatment effects span roughly [-4, 0], and the propensity over all 32
    symptom patterns stays well inside (0, 1). Background variables influence
    symptoms only, and treatment depends on symptoms only, so the symptoms
    are the complete confounder set.
    """
    background = (
        BernoulliCpd("asthma", -2.0),
        BernoulliCpd("smoking", -1.1),
        BernoulliCpd("copd", -3.0, {"smoking": 1.8}),
        BernoulliCpd("hay_fever", -1.9, {"asthma": 0.8}),
        CategoricalCpd("season", (0.25, 0.25, 0.25, 0.25)),
        BernoulliCpd("self_employed", -1.5),
    )
    symptoms = {
        "dyspnea": BernoulliCpd(
            "dyspnea", -0.3, {"asthma": 0.54, "smoking": 0.21, "copd": 0.6}
        ),
        "cough": BernoulliCpd(
            "cough", -0.2, {"smoking": 0.3, "copd": 0.42, "season": 0.084}
        ),
        "pain": BernoulliCpd("pain", -0.15, {"copd": 0.24, "smoking": 0.12}),
        "fever": BernoulliCpd("fever", -0.35, {"season": 0.15}),
        "nasal": BernoulliCpd("nasal", -0.1, {"hay_fever": 0.51, "season": 0.105}),
    }
    propensity = LogisticModel(
        intercept=-1.2,
        weights={"dyspnea": 0.8, "cough": 0.5, "pain": 0.6, "fever": 1.4, "nasal": -0.3},
    )
    outcome_control = OutcomeParams(
        intercept=math.log(1.4),
        weights={"dyspnea": 0.507, "cough": 0.34125, "pain": 0.39, "fever": 0.585, "nasal": 0.12675},
    )
    outcome_treated = OutcomeParams(
        intercept=math.log(1.32),
        weights={"dyspnea": 0.37518, "cough": 0.252525, "pain": 0.2886, "fever": 0.4329, "nasal": 0.093795},
    )
    return GeneratorSpec(
        background_cpds=background,
        symptom_cpds=symptoms,
        propensity=propensity,
        outcome_control=outcome_control,
        outcome_treated=outcome_treated,
        seed=seed,
    )


def all_symptom_patterns() -> np.ndarray:
    """All 32 binary symptom patterns, ordered by their integer encoding."""
    patterns = np.zeros((32, 5), dtype=np.float64)
    for code in range(32):
        for j in range(5):
            patterns[code, j] = (code >> j) & 1
    return patterns


def _check_finite(value, parameter: str) -> None:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(parameter, "must be finite")


def validate_spec(spec: GeneratorSpec, require_effect: bool = True) -> None:
    """Raise ConfigurationError naming the offending parameter.

    ``require_effect=False`` skips the non-degeneracy check; the pattern
    enumeration is well defined (all zeros) even for identical arms.
    """
    names: list[str] = []
    for cpd in spec.background_cpds:
        if cpd.name in names:
            raise ConfigurationError(
                f"background_cpds.{cpd.name}", "duplicate variable name"
            )
        if isinstance(cpd, CategoricalCpd):
            probs = np.asarray(cpd.probs, dtype=np.float64)
            _check_finite(probs, f"background_cpds.{cpd.name}.probs")
            if len(probs) < 2:
                raise ConfigurationError(
                    f"background_cpds.{cpd.name}.probs", "needs at least 2 levels"
                )
            if np.any(probs <= 0.0) or np.any(probs >= 1.0):
                raise ConfigurationError(
                    f"background_cpds.{cpd.name}.probs",
                    "every level probability must lie in (0, 1)",
                )
            if abs(probs.sum() - 1.0) > 1e-9:
                raise ConfigurationError(
                    f"background_cpds.{cpd.name}.probs", "probabilities must sum to 1"
                )
        else:
            _check_finite(cpd.intercept, f"background_cpds.{cpd.name}.intercept")
            for parent, coef in cpd.parents.items():
                if parent not in names:
                    raise ConfigurationError(
                        f"background_cpds.{cpd.name}.parents.{parent}",
                        "parent must be declared earlier in background_cpds",
                    )
                _check_finite(coef, f"background_cpds.{cpd.name}.parents.{parent}")
        names.append(cpd.name)

    if set(spec.symptom_cpds) != set(SYMPTOMS):
        raise ConfigurationError(
            "symptom_cpds", f"must define exactly the symptoms {list(SYMPTOMS)}"
        )
    for name in SYMPTOMS:
        cpd = spec.symptom_cpds[name]
        _check_finite(cpd.intercept, f"symptom_cpds.{name}.intercept")
        for parent, coef in cpd.parents.items():
            if parent not in names:
                raise ConfigurationError(
                    f"symptom_cpds.{name}.parents.{parent}",
                    "parent must be a background variable",
                )
            _check_finite(coef, f"symptom_cpds.{name}.parents.{parent}")

    for model, parameter in (
        (spec.propensity, "propensity_weights"),
        (spec.outcome_control, "outcome_params.control"),
        (spec.outcome_treated, "outcome_params.treated"),
    ):
        if set(model.weights) != set(SYMPTOMS):
            raise ConfigurationError(parameter, "weights must cover the five symptoms")
        _check_finite(model.intercept, f"{parameter}.intercept")
        _check_finite(list(model.weights.values()), f"{parameter}.weights")

    # Positivity audit over all 2^5 symptom patterns, in float arithmetic: the
    # largest admissible clip bound c must be strictly positive.
    pi = sigmoid(spec.propensity.logits(all_symptom_patterns()))
    c = float(min(pi.min(), (1.0 - pi).min()))
    if not c > 0.0:
        raise ConfigurationError(
            "propensity_weights",
            f"positivity violated: some symptom pattern has propensity {pi.min():.3g}"
            f"..{pi.max():.3g} touching {{0, 1}}",
        )

    b0, b1 = spec.outcome_control, spec.outcome_treated
    if require_effect and b0.intercept == b1.intercept and np.array_equal(
        b0.weight_vector(), b1.weight_vector()
    ):
        raise ConfigurationError(
            "outcome_params", "treated and control arms are identical (zero effect)"
        )


def positivity_bound(spec: GeneratorSpec) -> float:
    """Largest c with pi(s) in [c, 1-c] for all 32 patterns."""
    pi = sigmoid(spec.propensity.logits(all_symptom_patterns()))
    return float(min(pi.min(), (1.0 - pi).min()))


def _parent_column(name: str, columns: dict[str, np.ndarray]) -> np.ndarray:
    return columns[name]


def sample_dataset(spec: GeneratorSpec, n: int) -> Dataset:
    """Draw n i.i.d. rows from the generating process.

    Every random draw is keyed on (spec.seed, row, variable), so the same
    (spec, n) always reproduces the dataset bit-identically and row i does
    not depend on n. Both potential outcomes are drawn internally; y_obs
    exposes the realized arm only, while mu0/mu1/tau columns hold the exact
    closed-form means.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    validate_spec(spec)
    seed = spec.seed
    rows = np.arange(n, dtype=np.uint64)

    columns: dict[str, np.ndarray] = {}
    for i, cpd in enumerate(spec.background_cpds):
        u = keyed_uniforms(seed, CH_BACKGROUND + i, rows)
        if isinstance(cpd, CategoricalCpd):
            cum = np.cumsum(np.asarray(cpd.probs, dtype=np.float64))
            value = np.searchsorted(cum, u, side="right").astype(np.float64)
        else:
            logit = np.full(n, cpd.intercept, dtype=np.float64)
            for parent, coef in cpd.parents.items():
                logit += coef * _parent_column(parent, columns)
            value = (u < sigmoid(logit)).astype(np.float64)
        columns[cpd.name] = value
    x_background = np.column_stack([columns[c.name] for c in spec.background_cpds])

    x_symptoms = np.zeros((n, 5), dtype=np.float64)
    for j, name in enumerate(SYMPTOMS):
        cpd = spec.symptom_cpds[name]
        logit = np.full(n, cpd.intercept, dtype=np.float64)
        for parent, coef in cpd.parents.items():
            logit += coef * _parent_column(parent, columns)
        u = keyed_uniforms(seed, CH_SYMPTOM + j, rows)
        x_symptoms[:, j] = (u < sigmoid(logit)).astype(np.float64)

    pi_true = sigmoid(spec.propensity.logits(x_symptoms))
    u_t = keyed_uniforms(seed, CH_TREATMENT, rows)
    t = (u_t < pi_true).astype(np.int64)

    mu0 = spec.outcome_control.means(x_symptoms)
    mu1 = spec.outcome_treated.means(x_symptoms)
    y0 = poisson_inverse(keyed_uniforms(seed, CH_OUTCOME + 0, rows), mu0)
    y1 = poisson_inverse(keyed_uniforms(seed, CH_OUTCOME + 1, rows), mu1)
    y_obs = np.where(t == 1, y1, y0)

    return Dataset(
        background_names=spec.background_names,
        x_background=x_background,
        x_symptoms=x_symptoms,
        t=t,
        y_obs=y_obs,
        mu0_true=mu0,
        mu1_true=mu1,
        tau_true=mu1 - mu0,
        pi_true=pi_true,
    )


def enumerate_true_cate(spec: GeneratorSpec) -> list[tuple[tuple[int, ...], float]]:
    """Exact treatment effect for each of the 32 symptom patterns."""
    validate_spec(spec, require_effect=False)
    patterns = all_symptom_patterns()
    tau = spec.outcome_treated.means(patterns) - spec.outcome_control.means(patterns)
    return [
        (tuple(int(v) for v in patterns[i]), float(tau[i])) for i in range(len(patterns))
    ]


def split_indices(
    n_rows: int, sizes: tuple[int, int], seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train, test) row indices; the test block is drawn first.

    Because the test block is the leading slice of the permutation, the test
    set is identical across different train sizes for the same seed.
    """
    train_n, test_n = sizes
    if train_n < 0 or test_n < 0 or train_n + test_n > n_rows:
        raise ValueError(
            f"cannot split {n_rows} rows into train={train_n} + test={test_n}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, _TAG_SPLIT]))
    perm = rng.permutation(n_rows)
    test_idx = perm[:test_n]
    train_idx = perm[test_n : test_n + train_n]
    return train_idx, test_idx


def split_dataset(
    d: Dataset, sizes: tuple[int, int], seed: int
) -> tuple[Dataset, Dataset]:
    """Split into disjoint (train, test) datasets; see split_indices."""
    train_idx, test_idx = split_indices(d.n, sizes, seed)
    return d.subset(train_idx), d.subset(test_idx)


# ---------------------------------------------------------------------------
# CSV export / import


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dataset_to_csv(d: Dataset, path, config_digest: str | None = None) -> None:
    """Write the dataset with UTF-8, '.' decimals and '\\n' newlines."""
    header = (
        ["id", *d.background_names, *SYMPTOMS]
        + ["antibiotics", "days_at_home", "mu0_true", "mu1_true", "tau_true", "pi_true"]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if config_digest:
            fh.write(f"# config_digest={config_digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(d.n):
            row = [str(i)]
            row += [_fmt(v) for v in d.x_background[i]]
            row += [str(int(v)) for v in d.x_symptoms[i]]
            row += [str(int(d.t[i])), str(int(d.y_obs[i]))]
            row += [_fmt(d.mu0_true[i]), _fmt(d.mu1_true[i]), _fmt(d.tau_true[i]), _fmt(d.pi_true[i])]
            writer.writerow(row)


def dataset_from_csv(path) -> Dataset:
    """Read a dataset written by dataset_to_csv (leading # lines skipped)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    try:
        first_symptom = header.index(SYMPTOMS[0])
    except ValueError as exc:
        raise ValueError(f"not a dataset CSV: missing column {SYMPTOMS[0]}") from exc
    background_names = tuple(header[1:first_symptom])
    expected_tail = ["antibiotics", "days_at_home", "mu0_true", "mu1_true", "tau_true", "pi_true"]
    if header[first_symptom : first_symptom + 5] != list(SYMPTOMS) or header[first_symptom + 5 :] != expected_tail:
        raise ValueError("not a dataset CSV: unexpected column layout")

    rows = [row for row in reader if row]
    n, p_b = len(rows), len(background_names)
    x_background = np.zeros((n, p_b))
    x_symptoms = np.zeros((n, 5))
    t = np.zeros(n, dtype=np.int64)
    y = np.zeros(n, dtype=np.int64)
    mu0 = np.zeros(n)
    mu1 = np.zeros(n)
    tau = np.zeros(n)
    pi = np.zeros(n)
    for i, row in enumerate(rows):
        x_background[i] = [float(v) for v in row[1 : 1 + p_b]]
        x_symptoms[i] = [float(v) for v in row[1 + p_b : 6 + p_b]]
        t[i], y[i] = int(row[6 + p_b]), int(row[7 + p_b])
        mu0[i], mu1[i], tau[i], pi[i] = (float(v) for v in row[8 + p_b : 12 + p_b])
    return Dataset(
        background_names=background_names,
        x_background=x_background,
        x_symptoms=x_symptoms,
        t=t,
        y_obs=y,
        mu0_true=mu0,
        mu1_true=mu1,
        tau_true=tau,
        pi_true=pi,
    )


def spec_with_seed(spec: GeneratorSpec, seed: int) -> GeneratorSpec:
    return dataclasses.replace(spec, seed=seed)


def derive_dataset_seed(spec_seed: int, run_seed: int) -> int:
    """Seed for the per-run population pool."""
    return derive_seed(spec_seed, run_seed, 0xDA7A)
