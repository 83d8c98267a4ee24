"""PEHE metric and the learner x setting x size x seed experiment harness.

One grid cell generates a per-seed population pool, splits off the fixed
test block, builds the requested representation, fits the nuisance models,
constructs the learner's pseudo-outcome, fits the CATE estimator and scores
it on the test rows against the known ground truth. Within one seed every
cell shares the identical test rows regardless of learner, setting or
training size.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import datagen, metalearners, nuisance, representations
from .datagen import GeneratorSpec
from .errors import ConfigurationError
from .neuralcore import DEFAULT_LR_GRID, TrainConfig
from .representations import RepresentationConfig

ALLOWED_TRAIN_SIZES = (300, 1000, 3000, 9000)
DEFAULT_SEEDS = (1, 2, 3, 4, 5)

_TAG_NUISANCE = 0x40
_TAG_SECOND = 0x41
_TAG_SPLIT = 0x42
_TAG_MIXING = 0x43

RESULT_COLUMNS = ("learner", "setting", "train_size", "seed", "pehe", "wall_ms", "config_digest")


def pehe(tau_hat: np.ndarray, tau_true: np.ndarray) -> float:
    """Root mean squared error between estimated and true effects."""
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    tau_true = np.asarray(tau_true, dtype=np.float64)
    if tau_hat.shape != tau_true.shape or tau_hat.ndim != 1:
        raise ValueError("tau_hat and tau_true must be equal-length vectors")
    if tau_hat.size == 0:
        raise ValueError("pehe needs at least one sample")
    if not (np.all(np.isfinite(tau_hat)) and np.all(np.isfinite(tau_true))):
        raise ValueError("pehe inputs must be finite")
    return float(np.sqrt(np.mean((tau_hat - tau_true) ** 2)))


@dataclass(frozen=True)
class RepresentationParams:
    """Channel-independent part of a RepresentationConfig."""

    embed_dim: int = 64
    noise_sigma: float = 0.1
    distractor_count: int = 8
    mixing_seed: int = 7
    embedding_path: str | None = None

    def for_channel(self, channel: str) -> RepresentationConfig:
        return RepresentationConfig(
            channel=channel,
            embed_dim=self.embed_dim,
            noise_sigma=self.noise_sigma,
            distractor_count=self.distractor_count,
            mixing_seed=self.mixing_seed,
            embedding_path=self.embedding_path,
        )


@dataclass(frozen=True)
class ExperimentPlan:
    generator: GeneratorSpec
    train_sizes: tuple[int, ...] = (300, 1000, 3000, 9000)
    test_size: int = 1000
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    settings: tuple[str, ...] = ("perfect", "none", "entangled")
    learners: tuple[str, ...] = metalearners.LEARNERS
    representation: RepresentationParams = field(default_factory=RepresentationParams)
    training: TrainConfig = field(default_factory=TrainConfig)
    lr_grid: tuple[float, ...] = DEFAULT_LR_GRID
    clip_epsilon: float = metalearners.DEFAULT_CLIP_EPSILON

    def validated(self) -> "ExperimentPlan":
        for name in ("train_sizes", "seeds", "settings", "learners"):
            if len(getattr(self, name)) == 0:
                raise ConfigurationError(f"plan.{name}", "axis must not be empty")
        for size in self.train_sizes:
            if size not in ALLOWED_TRAIN_SIZES:
                raise ConfigurationError(
                    "plan.train_sizes", f"{size} not in {ALLOWED_TRAIN_SIZES}"
                )
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("plan.seeds", "seeds must be distinct")
        for setting in self.settings:
            if setting not in representations.CHANNELS:
                raise ConfigurationError(
                    "plan.settings", f"{setting!r} not in {representations.CHANNELS}"
                )
        for learner in self.learners:
            if learner not in metalearners.LEARNERS:
                raise ConfigurationError(
                    "plan.learners", f"{learner!r} not in {metalearners.LEARNERS}"
                )
        if self.test_size < 1:
            raise ConfigurationError("plan.test_size", "must be >= 1")
        self.training.validated()
        datagen.validate_spec(self.generator)
        for setting in self.settings:
            self.representation.for_channel(setting).validated()
        return self

    @property
    def pool_size(self) -> int:
        # The pool always spans the largest allowed training size, so the
        # leading test block is identical for every cell of one seed.
        return self.test_size + max(ALLOWED_TRAIN_SIZES)

    def cells(self) -> list["Cell"]:
        return [
            Cell(learner, setting, size, seed)
            for learner in self.learners
            for setting in self.settings
            for size in self.train_sizes
            for seed in self.seeds
        ]


@dataclass(frozen=True, order=True)
class Cell:
    learner: str
    setting: str
    train_size: int
    seed: int


@dataclass
class ExperimentResult:
    learner: str
    setting: str
    train_size: int
    seed: int
    pehe: float
    wall_ms: float
    config_digest: str
    baseline_pehe: float = float("nan")
    test_digest: str = ""

    def key(self) -> Cell:
        return Cell(self.learner, self.setting, self.train_size, self.seed)


@dataclass
class CellFailure:
    cell: Cell
    error: str


def _indices_digest(idx: np.ndarray) -> str:
    return hashlib.sha256(np.sort(idx).astype(np.int64).tobytes()).hexdigest()[:12]


@dataclass
class _SharedCellState:
    """Everything learners share within one (setting, size, seed) group."""

    pool: datagen.Dataset
    train_idx: np.ndarray
    test_idx: np.ndarray
    repd: representations.RepresentedDataset
    models: nuisance.NuisanceModels
    eta_train: nuisance.NuisanceEstimates


def _prepare_shared(
    plan: ExperimentPlan, setting: str, train_size: int, seed: int, config_digest: str
) -> _SharedCellState:
    spec = datagen.spec_with_seed(
        plan.generator, datagen.derive_dataset_seed(plan.generator.seed, seed)
    )
    pool = datagen.sample_dataset(spec, plan.pool_size)
    train_idx, test_idx = datagen.split_indices(
        pool.n, (train_size, plan.test_size), datagen.derive_seed(seed, _TAG_SPLIT)
    )
    rep_cfg = plan.representation.for_channel(setting)
    if setting == representations.CHANNEL_ENTANGLED:
        # Each replicate draws its own simulated encoder, so seed medians
        # average over mixing draws instead of baking one draw in.
        rep_cfg = dataclasses.replace(
            rep_cfg,
            mixing_seed=datagen.derive_seed(rep_cfg.mixing_seed, seed, _TAG_MIXING),
        )
    repd = representations.build_representation(pool, rep_cfg, train_idx)
    nuis_cfg = dataclasses.replace(
        plan.training, seed=datagen.derive_seed(seed, _TAG_NUISANCE)
    )
    phi_train = repd.phi[train_idx]
    models, _ = nuisance.tune_nuisance(
        phi_train,
        pool.t[train_idx],
        pool.y_obs[train_idx],
        nuis_cfg,
        plan.lr_grid,
        config_digest,
    )
    eta_train = nuisance.predict_nuisance(models, phi_train)
    return _SharedCellState(pool, train_idx, test_idx, repd, models, eta_train)


def _fit_predict_learner(
    plan: ExperimentPlan, learner: str, shared: _SharedCellState, seed: int
) -> np.ndarray:
    t_train = shared.pool.t[shared.train_idx]
    y_train = shared.pool.y_obs[shared.train_idx]
    phi_train = shared.repd.phi[shared.train_idx]
    if learner == metalearners.LEARNER_T:
        model = metalearners.fit_cate(learner, None, None, shared.models)
    else:
        builder = {
            metalearners.LEARNER_RA: metalearners.pseudo_ra,
            metalearners.LEARNER_DR: metalearners.pseudo_dr,
            metalearners.LEARNER_R: metalearners.pseudo_r,
        }[learner]
        pseudo = builder(t_train, y_train, shared.eta_train, plan.clip_epsilon)
        second_cfg = dataclasses.replace(
            plan.training, seed=datagen.derive_seed(seed, _TAG_SECOND)
        )
        model = metalearners.fit_cate(
            learner, phi_train, pseudo, None, second_cfg, plan.lr_grid
        )
    return metalearners.predict_cate(model, shared.repd.phi[shared.test_idx])


def run_cell_detailed(
    plan: ExperimentPlan, cell: Cell, config_digest: str = ""
) -> tuple[ExperimentResult, np.ndarray, np.ndarray]:
    """Like run_cell, but also returns (tau_hat, tau_true) on the test rows."""
    plan.validated()
    start = time.perf_counter()
    shared = _prepare_shared(plan, cell.setting, cell.train_size, cell.seed, config_digest)
    tau_hat = _fit_predict_learner(plan, cell.learner, shared, cell.seed)
    tau_true = shared.pool.tau_true[shared.test_idx]
    value = pehe(tau_hat, tau_true)
    wall_ms = (time.perf_counter() - start) * 1e3
    result = ExperimentResult(
        learner=cell.learner,
        setting=cell.setting,
        train_size=cell.train_size,
        seed=cell.seed,
        pehe=value,
        wall_ms=wall_ms,
        config_digest=config_digest,
        baseline_pehe=pehe(np.zeros_like(tau_true), tau_true),
        test_digest=_indices_digest(shared.test_idx),
    )
    return result, tau_hat, tau_true


def run_cell(plan: ExperimentPlan, cell: Cell, config_digest: str = "") -> ExperimentResult:
    """Execute one grid cell end to end; deterministic given (plan, cell)."""
    result, _, _ = run_cell_detailed(plan, cell, config_digest)
    return result


def _run_group(
    args: tuple[ExperimentPlan, str, int, int, tuple[str, ...], str],
) -> tuple[list[ExperimentResult], list[CellFailure]]:
    """All learners for one (setting, size, seed); nuisance fitted once."""
    plan, setting, train_size, seed, learners, config_digest = args
    results: list[ExperimentResult] = []
    failures: list[CellFailure] = []
    start = time.perf_counter()
    try:
        shared = _prepare_shared(plan, setting, train_size, seed, config_digest)
    except Exception as exc:  # pragma: no cover - exercised via failure tests
        for learner in learners:
            failures.append(CellFailure(Cell(learner, setting, train_size, seed), str(exc)))
        return results, failures
    shared_ms = (time.perf_counter() - start) * 1e3
    tau_true = shared.pool.tau_true[shared.test_idx]
    for learner in learners:
        cell = Cell(learner, setting, train_size, seed)
        t0 = time.perf_counter()
        try:
            tau_hat = _fit_predict_learner(plan, learner, shared, seed)
            value = pehe(tau_hat, tau_true)
        except Exception as exc:
            failures.append(CellFailure(cell, str(exc)))
            continue
        results.append(
            ExperimentResult(
                learner=learner,
                setting=setting,
                train_size=train_size,
                seed=seed,
                pehe=value,
                wall_ms=shared_ms + (time.perf_counter() - t0) * 1e3,
                config_digest=config_digest,
                baseline_pehe=pehe(np.zeros_like(tau_true), tau_true),
                test_digest=_indices_digest(shared.test_idx),
            )
        )
    return results, failures


@dataclass
class PlanResult:
    records: list[ExperimentResult]
    failures: list[CellFailure]

    @property
    def ok(self) -> bool:
        return not self.failures


def run_plan(
    plan: ExperimentPlan,
    workers: int = 1,
    config_digest: str = "",
    out_dir=None,
) -> PlanResult:
    """Execute every cell of the plan, optionally across worker processes.

    Cells sharing (setting, size, seed) reuse one nuisance fit; because every
    fit is deterministic this is indistinguishable from running each cell in
    isolation. Results merge in cell-key order regardless of worker count.
    With ``out_dir`` set, writes ``results.csv`` and a plain-text
    ``report.txt`` (boxplot statistics per group plus trend checks) there.
    """
    plan.validated()
    groups = [
        (plan, setting, size, seed, plan.learners, config_digest)
        for setting in plan.settings
        for size in plan.train_sizes
        for seed in plan.seeds
    ]
    records: list[ExperimentResult] = []
    failures: list[CellFailure] = []
    if workers > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_group, groups, chunksize=1))
    else:
        outcomes = [_run_group(g) for g in groups]
    for recs, fails in outcomes:
        records.extend(recs)
        failures.extend(fails)
    records.sort(key=lambda r: r.key())
    failures.sort(key=lambda f: f.cell)
    result = PlanResult(records, failures)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_results_csv(records, out / "results.csv")
        report = render_report(records, failures, config_digest)
        header = f"# config_digest={config_digest}\n" if config_digest else ""
        (out / "report.txt").write_text(header + report, encoding="utf-8")
    return result


# ---------------------------------------------------------------------------
# Summaries, results CSV, plain-text report


@dataclass
class GroupStats:
    learner: str
    setting: str
    train_size: int
    count: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


def summarize(records: Sequence[ExperimentResult]) -> list[GroupStats]:
    """Boxplot statistics of PEHE per (learner, setting, train_size)."""
    grouped: dict[tuple[str, str, int], list[float]] = {}
    for rec in records:
        grouped.setdefault((rec.learner, rec.setting, rec.train_size), []).append(rec.pehe)
    stats = []
    for (learner, setting, size), values in sorted(grouped.items()):
        arr = np.asarray(values)
        q = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
        stats.append(
            GroupStats(learner, setting, size, len(values), q[0], q[1], q[2], q[3], q[4])
        )
    return stats


def median_pehe(
    records: Sequence[ExperimentResult], learner: str, setting: str, train_size: int
) -> float:
    values = [
        r.pehe
        for r in records
        if r.learner == learner and r.setting == setting and r.train_size == train_size
    ]
    if not values:
        raise KeyError(f"no records for ({learner}, {setting}, {train_size})")
    return float(np.median(values))


@dataclass
class TrendCheck:
    description: str
    passed: bool
    detail: str


def trend_checks(records: Sequence[ExperimentResult]) -> list[TrendCheck]:
    """Qualitative orderings expected of the representation channels.

    Evaluated only where the involved settings/sizes exist in the records:
    the perfect-vs-none gap should widen with more data, and the entangled
    channel should land between perfect knowledge and no knowledge.
    """
    checks: list[TrendCheck] = []
    learners = sorted({r.learner for r in records})
    sizes = sorted({r.train_size for r in records})
    settings = {r.setting for r in records}

    for learner in learners:
        have = {
            (s, n)
            for s in settings
            for n in sizes
            if any(r.learner == learner and r.setting == s and r.train_size == n for r in records)
        }
        gap_sizes = [
            n for n in sizes if ("perfect", n) in have and ("none", n) in have
        ]
        if len(gap_sizes) >= 2:
            lo, hi = gap_sizes[0], gap_sizes[-1]
            gap_lo = median_pehe(records, learner, "none", lo) - median_pehe(
                records, learner, "perfect", lo
            )
            gap_hi = median_pehe(records, learner, "none", hi) - median_pehe(
                records, learner, "perfect", hi
            )
            ordered = median_pehe(records, learner, "perfect", hi) < median_pehe(
                records, learner, "none", hi
            )
            checks.append(
                TrendCheck(
                    f"{learner}: perfect beats none at n={hi}",
                    ordered,
                    f"median perfect={median_pehe(records, learner, 'perfect', hi):.4f} "
                    f"none={median_pehe(records, learner, 'none', hi):.4f}",
                )
            )
            checks.append(
                TrendCheck(
                    f"{learner}: perfect-vs-none gap widens from n={lo} to n={hi}",
                    gap_hi > gap_lo,
                    f"gap({lo})={gap_lo:.4f} gap({hi})={gap_hi:.4f}",
                )
            )
        for n in sizes:
            if {("perfect", n), ("entangled", n), ("none", n)} <= have:
                p = median_pehe(records, learner, "perfect", n)
                e = median_pehe(records, learner, "entangled", n)
                z = median_pehe(records, learner, "none", n)
                slack = 1.05 if n <= 300 else 1.02
                if n <= 300:
                    passed = e <= z * slack
                    desc = f"{learner}: entangled within {slack:.0%} of none at n={n}"
                else:
                    passed = p <= e <= z * slack
                    desc = f"{learner}: perfect <= entangled <= none at n={n}"
                checks.append(
                    TrendCheck(desc, passed, f"perfect={p:.4f} entangled={e:.4f} none={z:.4f}")
                )
    return checks


def write_results_csv(records: Sequence[ExperimentResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.learner,
                    r.setting,
                    str(r.train_size),
                    str(r.seed),
                    format(r.pehe, ".17g"),
                    format(r.wall_ms, ".3f"),
                    r.config_digest,
                ]
            )


def read_results_csv(path) -> list[ExperimentResult]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_COLUMNS:
            raise ValueError(f"unexpected results CSV header {header}")
        records = []
        for row in reader:
            if not row:
                continue
            records.append(
                ExperimentResult(
                    learner=row[0],
                    setting=row[1],
                    train_size=int(row[2]),
                    seed=int(row[3]),
                    pehe=float(row[4]),
                    wall_ms=float(row[5]),
                    config_digest=row[6],
                )
            )
    return records


def render_report(
    records: Sequence[ExperimentResult],
    failures: Sequence[CellFailure] = (),
    config_digest: str = "",
) -> str:
    lines = ["cateforge experiment report"]
    if config_digest:
        lines.append(f"config_digest: {config_digest}")
    lines.append(f"records: {len(records)}, failed cells: {len(failures)}")
    lines.append("")
    lines.append("PEHE by (learner, setting, train_size) over seeds")
    lines.append("learner setting train_size count min q1 median q3 max")
    for s in summarize(records):
        lines.append(
            f"{s.learner} {s.setting} {s.train_size} {s.count} "
            f"{s.minimum:.6f} {s.q1:.6f} {s.median:.6f} {s.q3:.6f} {s.maximum:.6f}"
        )
    checks = trend_checks(records)
    if checks:
        lines.append("")
        lines.append("trend checks")
        for c in checks:
            lines.append(f"[{'pass' if c.passed else 'FAIL'}] {c.description} ({c.detail})")
    if failures:
        lines.append("")
        lines.append("failed cells")
        for f in failures:
            lines.append(
                f"{f.cell.learner} {f.cell.setting} {f.cell.train_size} {f.cell.seed}: {f.error}"
            )
    return "\n".join(lines) + "\n"
