"""Run configuration: one YAML document governing a whole experiment.

Parsing is strict (unknown keys are rejected, every violation names the
offending key) and the effective configuration, including any CLI flag
overrides, is hashed into a short digest that is stamped on every artifact.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import datagen, metalearners, representations
from .datagen import (
    BernoulliCpd,
    CategoricalCpd,
    GeneratorSpec,
    LogisticModel,
    OutcomeParams,
)
from .errors import ConfigurationError
from .evaluation import ExperimentPlan, RepresentationParams
from .neuralcore import TrainConfig

CONFIG_VERSION = 1
WORKERS_ENV = "CATEFORGE_WORKERS"


@dataclass
class RunConfig:
    generator: GeneratorSpec
    representation: RepresentationParams
    training: TrainConfig
    clip_epsilon: float
    plan: ExperimentPlan
    lr_grid: tuple[float, ...]
    output_dir: str
    workers: int | None

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "generator": generator_to_dict(self.generator),
            "representation": {
                "embed_dim": self.representation.embed_dim,
                "noise_sigma": self.representation.noise_sigma,
                "distractor_count": self.representation.distractor_count,
                "mixing_seed": self.representation.mixing_seed,
                "embedding_path": self.representation.embedding_path,
            },
            "training": {
                "epochs": self.training.epochs,
                "batch_size": self.training.batch_size,
                "weight_decay": self.training.weight_decay,
                "lr_grid": list(self.lr_grid),
                "scheduler_factor": self.training.scheduler_factor,
                "scheduler_patience": self.training.scheduler_patience,
                "val_fraction": self.training.val_fraction,
            },
            "metalearner": {"clip_epsilon": self.clip_epsilon},
            "plan": {
                "train_sizes": list(self.plan.train_sizes),
                "test_size": self.plan.test_size,
                "seeds": list(self.plan.seeds),
                "settings": list(self.plan.settings),
                "learners": list(self.plan.learners),
            },
            "output_dir": self.output_dir,
            "workers": self.workers,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:12]

    def effective_workers(self, flag: int | None = None) -> int:
        if flag is not None:
            return max(1, flag)
        if self.workers is not None:
            return max(1, self.workers)
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError as exc:
                raise ConfigurationError(WORKERS_ENV, "must be an integer") from exc
        return 1


def _require_mapping(node: Any, key: str) -> Mapping:
    if not isinstance(node, Mapping):
        raise ConfigurationError(key, "must be a mapping")
    return node


def _check_keys(node: Mapping, allowed: set[str], key: str) -> None:
    unknown = set(node) - allowed
    if unknown:
        raise ConfigurationError(f"{key}.{sorted(unknown)[0]}", "unknown key")


def _number(node: Mapping, key: str, path: str, default=None, required=False):
    if key not in node:
        if required:
            raise ConfigurationError(f"{path}.{key}", "missing required key")
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}.{key}", "must be a number")
    return value


def _weights_map(node: Mapping, path: str) -> dict[str, float]:
    out = {}
    for name, value in _require_mapping(node, path).items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}.{name}", "must be a number")
        out[str(name)] = float(value)
    return out


def generator_to_dict(spec: GeneratorSpec) -> dict:
    background = []
    for cpd in spec.background_cpds:
        if isinstance(cpd, CategoricalCpd):
            background.append(
                {"name": cpd.name, "kind": "categorical", "probs": list(cpd.probs)}
            )
        else:
            entry = {"name": cpd.name, "kind": "bernoulli", "intercept": cpd.intercept}
            if cpd.parents:
                entry["parents"] = dict(cpd.parents)
            background.append(entry)
    symptoms = {}
    for name in datagen.SYMPTOMS:
        cpd = spec.symptom_cpds[name]
        symptoms[name] = {"intercept": cpd.intercept, "parents": dict(cpd.parents)}
    return {
        "seed": spec.seed,
        "background": background,
        "symptoms": symptoms,
        "propensity": {
            "intercept": spec.propensity.intercept,
            "weights": dict(spec.propensity.weights),
        },
        "outcome": {
            "control": {
                "intercept": spec.outcome_control.intercept,
                "weights": dict(spec.outcome_control.weights),
            },
            "treated": {
                "intercept": spec.outcome_treated.intercept,
                "weights": dict(spec.outcome_treated.weights),
            },
        },
    }


def generator_from_dict(node: Mapping, path: str = "generator") -> GeneratorSpec:
    node = _require_mapping(node, path)
    _check_keys(node, {"seed", "background", "symptoms", "propensity", "outcome"}, path)
    seed = _number(node, "seed", path, default=0)
    if not isinstance(seed, int):
        raise ConfigurationError(f"{path}.seed", "must be an integer")

    background_nodes = node.get("background")
    if not isinstance(background_nodes, list) or not background_nodes:
        raise ConfigurationError(f"{path}.background", "must be a non-empty list")
    background: list = []
    for i, raw in enumerate(background_nodes):
        entry = _require_mapping(raw, f"{path}.background[{i}]")
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise ConfigurationError(f"{path}.background[{i}].name", "must be a string")
        kind = entry.get("kind", "bernoulli")
        kpath = f"{path}.background.{name}"
        if kind == "categorical":
            _check_keys(entry, {"name", "kind", "probs"}, kpath)
            probs = entry.get("probs")
            if not isinstance(probs, list):
                raise ConfigurationError(f"{kpath}.probs", "must be a list of numbers")
            background.append(CategoricalCpd(name, tuple(float(p) for p in probs)))
        elif kind == "bernoulli":
            _check_keys(entry, {"name", "kind", "intercept", "parents"}, kpath)
            intercept = _number(entry, "intercept", kpath, required=True)
            parents = _weights_map(entry.get("parents", {}), f"{kpath}.parents")
            background.append(BernoulliCpd(name, float(intercept), parents))
        else:
            raise ConfigurationError(f"{kpath}.kind", "must be 'bernoulli' or 'categorical'")

    symptoms_node = _require_mapping(node.get("symptoms", {}), f"{path}.symptoms")
    symptoms = {}
    for name, raw in symptoms_node.items():
        spath = f"{path}.symptoms.{name}"
        entry = _require_mapping(raw, spath)
        _check_keys(entry, {"intercept", "parents"}, spath)
        intercept = _number(entry, "intercept", spath, required=True)
        parents = _weights_map(entry.get("parents", {}), f"{spath}.parents")
        symptoms[str(name)] = BernoulliCpd(str(name), float(intercept), parents)

    prop_node = _require_mapping(node.get("propensity", {}), f"{path}.propensity")
    _check_keys(prop_node, {"intercept", "weights"}, f"{path}.propensity")
    propensity = LogisticModel(
        intercept=float(_number(prop_node, "intercept", f"{path}.propensity", required=True)),
        weights=_weights_map(prop_node.get("weights", {}), f"{path}.propensity.weights"),
    )

    outcome_node = _require_mapping(node.get("outcome", {}), f"{path}.outcome")
    _check_keys(outcome_node, {"control", "treated"}, f"{path}.outcome")
    arms = {}
    for arm in ("control", "treated"):
        apath = f"{path}.outcome.{arm}"
        entry = _require_mapping(outcome_node.get(arm, {}), apath)
        _check_keys(entry, {"intercept", "weights"}, apath)
        arms[arm] = OutcomeParams(
            intercept=float(_number(entry, "intercept", apath, required=True)),
            weights=_weights_map(entry.get("weights", {}), f"{apath}.weights"),
        )

    return GeneratorSpec(
        background_cpds=tuple(background),
        symptom_cpds=symptoms,
        propensity=propensity,
        outcome_control=arms["control"],
        outcome_treated=arms["treated"],
        seed=seed,
    )


def _parse_document(doc: Any, base_dir: Path) -> RunConfig:
    root = _require_mapping(doc, "<root>")
    _check_keys(
        root,
        {
            "version",
            "generator",
            "representation",
            "training",
            "metalearner",
            "plan",
            "output_dir",
            "workers",
        },
        "<root>",
    )
    version = root.get("version")
    if version != CONFIG_VERSION:
        raise ConfigurationError("version", f"must be {CONFIG_VERSION}")

    generator = generator_from_dict(root.get("generator", {}))

    rep_node = _require_mapping(root.get("representation", {}), "representation")
    _check_keys(
        rep_node,
        {"embed_dim", "noise_sigma", "distractor_count", "mixing_seed", "embedding_path"},
        "representation",
    )
    embedding_path = rep_node.get("embedding_path")
    if embedding_path is not None:
        if not isinstance(embedding_path, str):
            raise ConfigurationError("representation.embedding_path", "must be a path string")
        resolved = Path(embedding_path)
        if not resolved.is_absolute():
            resolved = base_dir / resolved
        if not resolved.exists():
            raise ConfigurationError(
                "representation.embedding_path", f"file not found: {resolved}"
            )
        embedding_path = str(resolved)
    representation = RepresentationParams(
        embed_dim=int(_number(rep_node, "embed_dim", "representation", default=64)),
        noise_sigma=float(_number(rep_node, "noise_sigma", "representation", default=0.1)),
        distractor_count=int(
            _number(rep_node, "distractor_count", "representation", default=8)
        ),
        mixing_seed=int(_number(rep_node, "mixing_seed", "representation", default=7)),
        embedding_path=embedding_path,
    )

    train_node = _require_mapping(root.get("training", {}), "training")
    _check_keys(
        train_node,
        {
            "epochs",
            "batch_size",
            "weight_decay",
            "lr_grid",
            "scheduler_factor",
            "scheduler_patience",
            "val_fraction",
        },
        "training",
    )
    lr_grid_node = train_node.get("lr_grid", [1e-2, 3e-3, 1e-3, 3e-4])
    if not isinstance(lr_grid_node, list) or not lr_grid_node:
        raise ConfigurationError("training.lr_grid", "must be a non-empty list")
    lr_grid = tuple(float(v) for v in lr_grid_node)
    training = TrainConfig(
        epochs=int(_number(train_node, "epochs", "training", default=75)),
        batch_size=int(_number(train_node, "batch_size", "training", default=32)),
        weight_decay=float(_number(train_node, "weight_decay", "training", default=1e-4)),
        initial_lr=lr_grid[0],
        scheduler_factor=float(
            _number(train_node, "scheduler_factor", "training", default=0.1)
        ),
        scheduler_patience=int(
            _number(train_node, "scheduler_patience", "training", default=5)
        ),
        val_fraction=float(_number(train_node, "val_fraction", "training", default=0.2)),
    )

    meta_node = _require_mapping(root.get("metalearner", {}), "metalearner")
    _check_keys(meta_node, {"clip_epsilon"}, "metalearner")
    clip_epsilon = float(_number(meta_node, "clip_epsilon", "metalearner", default=0.025))

    plan_node = _require_mapping(root.get("plan", {}), "plan")
    _check_keys(
        plan_node, {"train_sizes", "test_size", "seeds", "settings", "learners"}, "plan"
    )

    def _int_list(key: str, default: list[int]) -> tuple[int, ...]:
        value = plan_node.get(key, default)
        if not isinstance(value, list):
            raise ConfigurationError(f"plan.{key}", "must be a list")
        return tuple(int(v) for v in value)

    def _str_list(key: str, default: list[str]) -> tuple[str, ...]:
        value = plan_node.get(key, default)
        if not isinstance(value, list):
            raise ConfigurationError(f"plan.{key}", "must be a list")
        return tuple(str(v) for v in value)

    plan = ExperimentPlan(
        generator=generator,
        train_sizes=_int_list("train_sizes", [300, 1000, 3000, 9000]),
        test_size=int(_number(plan_node, "test_size", "plan", default=1000)),
        seeds=_int_list("seeds", list(range(1, 6))),
        settings=_str_list("settings", ["perfect", "none", "entangled"]),
        learners=_str_list("learners", list(metalearners.LEARNERS)),
        representation=representation,
        training=training,
        lr_grid=lr_grid,
        clip_epsilon=clip_epsilon,
    )

    output_dir = root.get("output_dir", "out")
    if not isinstance(output_dir, str):
        raise ConfigurationError("output_dir", "must be a path string")
    workers = root.get("workers")
    if workers is not None and (isinstance(workers, bool) or not isinstance(workers, int)):
        raise ConfigurationError("workers", "must be an integer")

    return RunConfig(
        generator=generator,
        representation=representation,
        training=training,
        clip_epsilon=clip_epsilon,
        plan=plan,
        lr_grid=lr_grid,
        output_dir=output_dir,
        workers=workers,
    )


def _semantic_violations(cfg: RunConfig) -> list[str]:
    """Statically checkable invariants: generator positivity, representation
    rank condition, training ranges and plan axes (all via plan.validated)."""
    violations = []
    if not 0.0 < cfg.clip_epsilon < 0.5:
        violations.append("metalearner.clip_epsilon: must lie in (0, 0.5)")
    try:
        cfg.plan.validated()
    except ConfigurationError as exc:
        violations.append(str(exc))
    except ValueError as exc:
        violations.append(f"training: {exc}")
    return violations


def validate_config(path) -> list[str]:
    """Return [] when the document is valid, else violation messages."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        return [f"<file>: {exc}"]
    except yaml.YAMLError as exc:
        return [f"<yaml>: {exc}"]
    try:
        cfg = _parse_document(doc, Path(path).resolve().parent)
    except ConfigurationError as exc:
        return [str(exc)]
    return _semantic_violations(cfg)


def load_run_config(path) -> RunConfig:
    """Parse and fully validate a config document; raise on any violation."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    cfg = _parse_document(doc, Path(path).resolve().parent)
    violations = _semantic_violations(cfg)
    if violations:
        key = violations[0].split(":", 1)[0]
        raise ConfigurationError(key, violations[0].split(":", 1)[-1].strip())
    return cfg


def generator_spec_to_yaml(spec: GeneratorSpec) -> str:
    """GeneratorSpec as a standalone key-value document (CLI config schema)."""
    return yaml.safe_dump({"generator": generator_to_dict(spec)}, sort_keys=False)


def generator_spec_from_yaml(text: str) -> GeneratorSpec:
    doc = yaml.safe_load(text)
    node = _require_mapping(doc, "<root>")
    _check_keys(node, {"generator"}, "<root>")
    spec = generator_from_dict(node.get("generator", {}))
    datagen.validate_spec(spec)
    return spec


def default_config_text() -> str:
    return resources.files("cateforge").joinpath("data/default.yaml").read_text("utf-8")


def default_config(path: str | None = None) -> RunConfig:
    """The shipped default configuration (optionally from a given path)."""
    if path is not None:
        return load_run_config(path)
    doc = yaml.safe_load(default_config_text())
    cfg = _parse_document(doc, Path.cwd())
    violations = _semantic_violations(cfg)
    if violations:  # pragma: no cover - shipped default must stay valid
        raise ConfigurationError("default", "; ".join(violations))
    return cfg
