"""Command-line entry point: validate configs, run simulations, score ratings.

Exit codes are a stable scripting contract: 0 success, 1 environment or
I/O failure, 2 validation or data error.  Structured logs go to stderr
as ``level key=value`` lines; stdout carries machine-readable results.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from . import evalstats
from .config import config_digest, parse_config, resolve_sampled_parameters
from .corpus import TOOL_VERSION, write_dataset
from .errors import BackendError, KnowogenError, SupportError
from .kg import build_graph
from .scheduler import run_simulation
from .textgen import make_backend

EXIT_OK = 0
EXIT_ENVIRONMENT = 1
EXIT_VALIDATION = 2


def _log(level: str, **fields) -> None:
    rendered = " ".join(f"{key}={value}" for key, value in fields.items())
    click.echo(f"{level} {rendered}", err=True)


def _fail(code: int, message: str) -> None:
    _log("error", message=json.dumps(message))
    sys.exit(code)


@click.group()
@click.version_option(TOOL_VERSION, prog_name="knowogen")
def main():
    """Multi-agent knowledge-work dataset generator."""


def _load_config(config_path: str):
    path = Path(config_path)
    if not path.is_file():
        _fail(EXIT_ENVIRONMENT, f"config file not found: {path}")
    try:
        return parse_config(path)
    except KnowogenError as exc:
        _fail(EXIT_VALIDATION, f"{path}: {exc}")
    except OSError as exc:
        _fail(EXIT_ENVIRONMENT, f"{path}: {exc}")


@main.command()
@click.option("--config", "config_path", required=True, help="Path to the TOML configuration.")
def validate(config_path):
    """Parse and validate a configuration file."""
    config = _load_config(config_path)
    total_actions = sum(len(t.actions) for t in config.tasks)
    click.echo(
        f"ok agents={len(config.agents)} organizations={len(config.organizations)} "
        f"tasks={len(config.tasks)} actions={total_actions}"
    )


@main.command()
@click.option("--config", "config_path", required=True, help="Path to the TOML configuration.")
@click.option("--out", "out_dir", required=True, help="Dataset output directory.")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--backend", "backend_override", type=click.Choice(["http", "mock"]), default=None)
@click.option("--rounds", type=int, default=None, help="Override the configured round count.")
@click.option("--dry-run", is_flag=True, help="Print the planned timetable; no backend calls, no dataset.")
@click.option("--save-prompts", is_flag=True, help="Persist prompt texts under prompts/.")
@click.option("--overwrite", is_flag=True, help="Replace a non-empty output directory.")
@click.option("--audit-log", "audit_path", default=None, help="Mirror HTTP request/response pairs to this JSONL file.")
def generate(config_path, out_dir, seed, backend_override, rounds, dry_run, save_prompts, overwrite, audit_path):
    """Run the simulation and write the dataset directory."""
    config = _load_config(config_path)
    settings = config.settings
    if seed is not None:
        settings = dataclasses.replace(settings, seed=seed)
    if rounds is not None:
        settings = dataclasses.replace(settings, rounds=rounds)
    if backend_override is not None:
        settings = dataclasses.replace(
            settings, generation=dataclasses.replace(settings.generation, backend=backend_override)
        )
    config = dataclasses.replace(config, settings=settings)
    if settings.generation.backend == "http" and not settings.generation.endpoint:
        _fail(EXIT_VALIDATION, "backend 'http' requires settings.generation.endpoint")

    try:
        config = resolve_sampled_parameters(config, settings.seed)
    except KnowogenError as exc:
        _fail(EXIT_VALIDATION, str(exc))

    if dry_run:
        log = run_simulation(config, backend=None, dry_run=True)
        for action in log.completed_actions:
            click.echo(
                f"plan round={action.finished_round} started={action.started_round} "
                f"action={action.uid} agent={action.assignee} type={action.template.action_type}"
            )
        pending = sum(len(t.actions) for t in log.task_instances) - len(log.completed_actions)
        _log("info", rounds=log.rounds_executed, completed=len(log.completed_actions), pending=pending)
        return

    backend = make_backend(settings.generation, audit_path=audit_path)
    _log("info", backend=backend.backend_id, seed=settings.seed, rounds=settings.rounds)
    try:
        log = run_simulation(config, backend)
        graph = build_graph(config, log)
        manifest = write_dataset(
            log,
            graph,
            out_dir,
            seed=settings.seed,
            config_digest=config_digest(config_path),
            backend_id=backend.backend_id,
            save_prompts=save_prompts,
            overwrite=overwrite,
        )
    except BackendError as exc:
        _fail(EXIT_ENVIRONMENT, f"backend failure: {exc}")
    except KnowogenError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except OSError as exc:
        _fail(EXIT_ENVIRONMENT, str(exc))
    click.echo(json.dumps(manifest.to_dict(), sort_keys=True))


def _stats_report(records) -> dict:
    report = {"counts": {}, "distributions": {}, "fraction_5_7": {}, "kl_nats": {}}
    dists = {}
    for origin in evalstats.ORIGINS:
        dist = evalstats.distribution(records, origin)
        dists[origin] = dist
        report["counts"][origin] = sum(1 for r in records if r.origin == origin)
        report["distributions"][origin] = list(dist.probabilities)
        report["fraction_5_7"][origin] = evalstats.fraction_in_range(dist, 5, 7)
    # A sparse histogram can make one direction undefined without smoothing;
    # report null rather than refusing the whole report.
    for key, (p, q) in {
        "generated_vs_real": (dists["generated"], dists["real"]),
        "real_vs_generated": (dists["real"], dists["generated"]),
    }.items():
        try:
            report["kl_nats"][key] = evalstats.kl_divergence(p, q)
        except SupportError:
            report["kl_nats"][key] = None
    return report


def _stats_table(report: dict) -> str:
    lines = [f"{'score':>8} " + " ".join(f"{s:>7}" for s in range(1, 8))]
    for origin in evalstats.ORIGINS:
        probs = report["distributions"][origin]
        lines.append(f"{origin:>8} " + " ".join(f"{100 * p:6.2f}%" for p in probs))
    for origin in evalstats.ORIGINS:
        lines.append(f"rated 5-7 ({origin}): {100 * report['fraction_5_7'][origin]:.2f}%")
    labels = {"generated_vs_real": "KL(generated||real)", "real_vs_generated": "KL(real||generated)"}
    for key, label in labels.items():
        value = report["kl_nats"][key]
        if value is None:
            lines.append(f"{label}: undefined (disjoint support)")
        else:
            lines.append(f"{label}: {value:.4f} nats ({100 * value:.2f}%)")
    return "\n".join(lines)


@main.command()
@click.option("--ratings", "ratings_path", required=True, help="Ratings CSV file.")
def stats(ratings_path):
    """Report score distributions, range fractions, and KL divergence."""
    path = Path(ratings_path)
    if not path.is_file():
        _fail(EXIT_ENVIRONMENT, f"ratings file not found: {path}")
    try:
        records = evalstats.load_ratings(path)
        report = _stats_report(records)
    except KnowogenError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except OSError as exc:
        _fail(EXIT_ENVIRONMENT, str(exc))
    click.echo(_stats_table(report), err=True)
    click.echo(json.dumps(report, sort_keys=True))


if __name__ == "__main__":
    main()
