"""Command-line entry point: ``deepbind <command> --config FILE``.

Every command loads the same config file; flags override its values. A
command runs the pipeline up to its own stage, reusing any stored upstream
outputs, and ``--force`` discards that stage's stored outputs first.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from .config import PipelineConfig, load_config
from .core import Game, Method
from .errors import DeepBindError, PipelineError
from .experiments import ABLATION_GRID
from .pipeline import MANIFEST, STAGES, assignment_file, run_pipeline, trials_file

_STAGE_FILES = {
    "personas": lambda cfg: ["personas.jsonl"],
    "profiles": lambda cfg: ["profiles.jsonl"],
    "assignments": lambda cfg: [assignment_file(f) for f in cfg.study.rosters],
    "trials": lambda cfg: [trials_file(*c) for c in ABLATION_GRID],
    "counterfactual": lambda cfg: ["counterfactual_trials.jsonl", "cells.csv", "factorial.md"],
    "analysis": lambda cfg: ["delta.csv", "delta.md", "regression.csv", "regression.md"],
}


def _load(path: str, out: str | None, seed: int | None) -> PipelineConfig:
    try:
        cfg = load_config(path)
        if seed is not None and seed < 0:
            raise click.BadParameter("seed must be >= 0", param_hint="--seed")
        return cfg.with_overrides(output_dir=out, study__seed=seed)
    except DeepBindError as exc:
        raise click.ClickException(f"config error: {exc}") from None


def _discard(cfg: PipelineConfig, first: str) -> None:
    for stage in STAGES[STAGES.index(first):]:
        for name in _STAGE_FILES[stage](cfg):
            (cfg.output_dir / name).unlink(missing_ok=True)
    if first == STAGES[0]:
        (cfg.output_dir / MANIFEST).unlink(missing_ok=True)


def _execute(cfg: PipelineConfig, until: str, force: bool = False) -> dict:
    if force:
        _discard(cfg, until)
    try:
        manifest = run_pipeline(cfg, until=until)
    except PipelineError as exc:
        done = sorted({e["stage"] for e in exc.manifest["files"]}, key=STAGES.index)
        raise click.ClickException(
            f"{exc} (completed stages: {', '.join(done) or 'none'}; see {cfg.output_dir / MANIFEST})"
        ) from None
    except DeepBindError as exc:
        raise click.ClickException(str(exc)) from None
    for entry in manifest["files"]:
        if entry["stage"] == until:
            click.echo(f"{entry['sha256'][:12]}  {cfg.output_dir / entry['path']}")
    return manifest


def _common(fn):
    fn = click.option("--force", is_flag=True, help="Discard this stage's stored outputs and regenerate them.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the root seed.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None, help="Override the output directory.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", count=True, help="Log progress (-vv for debug).")
def main(verbose: int) -> None:
    """Simulate partisan economic-game studies with persona-bound language models."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


@main.group()
def personas() -> None:
    """Generate persona backstories and survey their traits."""


@personas.command("generate")
@_common
@click.option("--count", type=int, default=None, help="Number of personas.")
def personas_generate(config_path, out, seed, force, count):
    cfg = _load(config_path, out, seed).with_overrides(study__personas=count)
    _execute(cfg, "personas", force)


@personas.command("survey")
@_common
def personas_survey(config_path, out, seed, force):
    _execute(_load(config_path, out, seed), "profiles", force)


@main.command()
@_common
def match(config_path, out, seed, force):
    """Assign one persona to each roster participant."""
    _execute(_load(config_path, out, seed), "assignments", force)


@main.command()
@_common
@click.option("--grounding/--no-grounding", default=None, help="Temporal grounding toggle.")
@click.option("--filtering/--no-filtering", default=None, help="Consistency filtering toggle.")
@click.option("--ablation/--no-ablation", default=None, help="Run all four grounding x filtering settings.")
@click.option("--method", type=click.Choice(["QA", "Bio", "Portray", "DeepBind"], case_sensitive=False), default=None)
def run(config_path, out, seed, force, grounding, filtering, ablation, method):
    """Play the configured studies with the matched personas."""
    cfg = _load(config_path, out, seed).with_overrides(
        study__grounding=grounding,
        study__filtering=filtering,
        study__ablation=ablation,
        study__method=Method(method) if method else None,
    )
    _execute(cfg, "trials", force)


@main.command()
@_common
@click.option("--game", type=click.Choice(["dictator", "trust"], case_sensitive=False), default=None)
@click.option("--plan", type=click.Path(exists=True, dir_okay=False), default=None, help="Factorial plan YAML.")
def counterfactual(config_path, out, seed, force, game, plan):
    """Run the 2x2x2 pool x framing x year design."""
    cfg = _load(config_path, out, seed)
    factors = replace(cfg.factors, counterfactual=True)
    if game is not None:
        factors = replace(factors, game=Game(game))
    if plan is not None:
        factors = replace(factors, plan=Path(plan))
    _execute(replace(cfg, factors=factors), "counterfactual", force)


@main.command()
@_common
def analyze(config_path, out, seed, force):
    """Partisan gap tables and regressions from stored trials."""
    _execute(_load(config_path, out, seed), "analysis", force)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def report(config_path, out):
    """Print the markdown reports already in the output directory."""
    cfg = _load(config_path, out, None)
    found = False
    for name in ("delta.md", "factorial.md", "regression.md"):
        path = cfg.output_dir / name
        if path.exists():
            found = True
            click.echo(f"# {name}\n")
            click.echo(path.read_text(encoding="utf-8"))
    if not found:
        raise click.ClickException(f"no reports in {cfg.output_dir}; run `analyze` first")


@main.command()
@_common
def pipeline(config_path, out, seed, force):
    """Run every stage, resuming from stored outputs."""
    cfg = _load(config_path, out, seed)
    if force:
        _discard(cfg, "personas")
    manifest = _execute(cfg, "analysis")
    click.echo(f"{len(manifest['files'])} files listed in {cfg.output_dir / MANIFEST}")


if __name__ == "__main__":  # pragma: no cover
    main()
