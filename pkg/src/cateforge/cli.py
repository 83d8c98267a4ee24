"""Command-line entry point.

Subcommands: generate, represent, run-cell, experiment, report, validate.
Exit status: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import datagen, evaluation, figures, metalearners, representations
from .errors import ConfigurationError


def _load(args) -> cfgmod.RunConfig:
    return cfgmod.default_config(getattr(args, "config", None))


def _apply_plan_overrides(cfg: cfgmod.RunConfig, args) -> cfgmod.RunConfig:
    plan = cfg.plan
    if getattr(args, "seed", None) is not None:
        plan = dataclasses.replace(plan, seeds=(args.seed,))
    if getattr(args, "size", None) is not None:
        plan = dataclasses.replace(plan, train_sizes=(args.size,))
    if getattr(args, "setting", None):
        plan = dataclasses.replace(plan, settings=tuple(args.setting))
    if getattr(args, "learner", None):
        plan = dataclasses.replace(plan, learners=tuple(args.learner))
    return dataclasses.replace(cfg, plan=plan)


def _cmd_validate(args) -> int:
    path = args.config or None
    if path is None:
        print("ok (shipped default configuration)")
        return 0
    violations = cfgmod.validate_config(path)
    if not violations:
        print("ok")
        return 0
    for violation in violations:
        print(violation, file=sys.stderr)
    return 2


def _cmd_generate(args) -> int:
    cfg = _load(args)
    spec = cfg.generator
    if args.seed is not None:
        spec = datagen.spec_with_seed(spec, args.seed)
        cfg = dataclasses.replace(cfg, generator=spec)
    n = args.size if args.size is not None else cfg.plan.pool_size
    dataset = datagen.sample_dataset(spec, n)
    out = Path(args.out or "dataset.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    datagen.dataset_to_csv(dataset, out, config_digest=cfg.digest())
    print(f"wrote {dataset.n} rows to {out}")
    return 0


def _cmd_represent(args) -> int:
    if args.cemb:
        matrix = representations.load_embeddings(args.cemb)
        print(f"valid embedding file: {matrix.shape[0]} rows x {matrix.shape[1]} dims")
        return 0
    cfg = _load(args)
    spec = cfg.generator
    if args.seed is not None:
        spec = datagen.spec_with_seed(spec, args.seed)
        cfg = dataclasses.replace(cfg, generator=spec)
    setting = args.setting[0] if args.setting else "perfect"
    n = args.size if args.size is not None else cfg.plan.pool_size
    dataset = datagen.sample_dataset(spec, n)
    rep_cfg = cfg.representation.for_channel(setting)
    repd = representations.build_representation(dataset, rep_cfg, np.arange(dataset.n))
    out = Path(args.out or f"phi_{setting}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_digest={cfg.digest()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", *repd.feature_names])
        for i in range(dataset.n):
            writer.writerow([str(i), *(format(v, ".17g") for v in repd.phi[i])])
    print(f"wrote {dataset.n} x {repd.n_features} representation to {out}")
    return 0


def _cmd_run_cell(args) -> int:
    cfg = _apply_plan_overrides(_load(args), args)
    plan = cfg.plan
    learner = plan.learners[0]
    setting = plan.settings[0]
    size = plan.train_sizes[0]
    seed = plan.seeds[0]
    cell = evaluation.Cell(learner, setting, size, seed)
    result, tau_hat, tau_true = evaluation.run_cell_detailed(plan, cell, cfg.digest())
    print(
        f"learner={result.learner} setting={result.setting} train_size={result.train_size} "
        f"seed={result.seed} pehe={result.pehe:.6f} baseline={result.baseline_pehe:.6f} "
        f"wall_ms={result.wall_ms:.0f}"
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        evaluation.write_results_csv([result], out_dir / "results.csv")
        metalearners.predictions_to_csv(
            tau_hat, tau_true, out_dir / "predictions.csv", cfg.digest()
        )
        print(f"wrote {out_dir / 'results.csv'} and {out_dir / 'predictions.csv'}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _apply_plan_overrides(_load(args), args)
    digest = cfg.digest()
    workers = cfg.effective_workers(args.workers)
    out_dir = Path(args.out or cfg.output_dir)
    result = evaluation.run_plan(
        cfg.plan, workers=workers, config_digest=digest, out_dir=out_dir
    )
    if not args.no_figures:
        figures.render_all(result.records, out_dir / "figures", digest)
    print(evaluation.render_report(result.records, result.failures, digest))
    print(f"artifacts written to {out_dir}")
    if not result.ok:
        print(f"{len(result.failures)} cells failed", file=sys.stderr)
        return 1
    return 0


def _cmd_report(args) -> int:
    records = evaluation.read_results_csv(args.results)
    if not records:
        print("results CSV contains no records", file=sys.stderr)
        return 1
    digests = {r.config_digest for r in records}
    if len(digests) > 1 and not args.allow_mixed:
        print(
            f"results mix {len(digests)} config digests ({sorted(digests)}); "
            "rerun with --allow-mixed to summarize anyway",
            file=sys.stderr,
        )
        return 1
    digest = sorted(digests)[0] if len(digests) == 1 else "mixed"
    report = evaluation.render_report(records, (), digest)
    print(report)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(
            f"# config_digest={digest}\n" + report, encoding="utf-8"
        )
        if not args.no_figures:
            figures.render_all(records, out_dir / "figures", digest)
        print(f"report written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cateforge",
        description="CATE meta-learner experiments on a synthetic clinical benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, plan_axes=False):
        p.add_argument("--config", help="YAML config path (default: shipped config)")
        p.add_argument("--seed", type=int, help="override the seed axis / generator seed")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--size", type=int, help="override the training-size axis / row count")
        if plan_axes:
            p.add_argument(
                "--setting",
                action="append",
                choices=representations.CHANNELS,
                help="restrict the representation settings (repeatable)",
            )
            p.add_argument(
                "--learner",
                action="append",
                choices=metalearners.LEARNERS,
                help="restrict the learners (repeatable)",
            )

    p = sub.add_parser("generate", help="sample a dataset and write it as CSV")
    add_common(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("represent", help="write a model-input matrix or validate a CEMB file")
    add_common(p, plan_axes=True)
    p.add_argument("--cemb", help="validate this embedding file instead of building one")
    p.set_defaults(func=_cmd_represent)

    p = sub.add_parser("run-cell", help="execute a single experiment grid cell")
    add_common(p, plan_axes=True)
    p.set_defaults(func=_cmd_run_cell)

    p = sub.add_parser("experiment", help="run the full experiment plan")
    add_common(p, plan_axes=True)
    p.add_argument("--workers", type=int, help="worker process count")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="recompute summaries from a results CSV")
    p.add_argument("--results", required=True, help="results CSV path")
    p.add_argument("--out", help="directory for report.txt and figures")
    p.add_argument("--allow-mixed", action="store_true", help="accept mixed config digests")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("validate", help="check a config document")
    p.add_argument("--config", help="YAML config path (default: shipped config)")
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
