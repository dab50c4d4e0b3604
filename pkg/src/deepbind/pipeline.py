"""Staged, resumable pipeline from personas to reports.

Every stage writes its outputs atomically into the output directory and is
skipped when all of them already exist, so deleting a downstream file and
rerunning regenerates only that part. ``manifest.json`` lists each emitted
file with its sha256 and is rewritten after every completed stage.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .analysis import (
    COUNTERFACTUAL,
    HUMAN,
    Coding,
    DeltaSummary,
    RegressionFit,
    aggregate_participants,
    delta_csv,
    delta_markdown,
    delta_table,
    fit_ols,
    regression_csv,
    regression_markdown,
)
from .config import PipelineConfig, make_backend
from .core import Backstory, Framing, Game, HumanParticipant, TraitProfile, TrialRecord
from .counterfactual import FactorialPlan, cells_csv, load_plan, run_factorial, factorial_markdown
from .errors import ConfigError, EmptyCell, InsufficientData, PipelineError, RankDeficient
from .experiments import ABLATION_GRID, condition_label, condition_slug, run_study
from .gateway import Backend, Gateway
from .games import STUDIES, MatchedParticipant, TrialOptions
from .matching import match_roster, read_roster
from .personas import generate_personas
from .store import atomic_write_text, dumps, file_sha256, read_jsonl, write_jsonl
from .survey import TraitSchema, load_schema, survey_personas

log = logging.getLogger(__name__)

STAGES = ("personas", "profiles", "assignments", "trials", "counterfactual", "analysis")
MANIFEST = "manifest.json"


@dataclass
class _Run:
    cfg: PipelineConfig
    out: Path
    schema: TraitSchema
    backend: Backend | None
    entries: list[dict[str, str]]
    _gateway: Gateway | None = None

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            backend = self.backend or make_backend(self.cfg.backend)
            self._gateway = Gateway(backend, self.cfg.backend.concurrency)
        return self._gateway

    def manifest(self) -> dict:
        return {"seed": self.cfg.study.seed, "files": list(self.entries)}

    def write_manifest(self) -> None:
        atomic_write_text(self.out / MANIFEST, json.dumps(self.manifest(), indent=2) + "\n")

    def stage(self, name: str, outputs: Sequence[str], produce: Callable[[], None]) -> None:
        paths = [self.out / p for p in outputs]
        if paths and all(p.exists() for p in paths):
            log.info("stage %s: reusing %s", name, ", ".join(outputs))
        else:
            log.info("stage %s: running", name)
            try:
                produce()
            except Exception as exc:
                raise PipelineError(name, exc, self.manifest()) from exc
        for rel, p in zip(outputs, paths):
            self.entries.append({"stage": name, "path": rel, "sha256": file_sha256(p)})
        self.write_manifest()

    # -- loaders -----------------------------------------------------------

    def personas(self) -> list[Backstory]:
        return read_jsonl(self.out / "personas.jsonl", Backstory.from_dict)

    def profiles(self) -> list[TraitProfile]:
        return read_jsonl(self.out / "profiles.jsonl", TraitProfile.from_dict)

    def matched(self, framing: Framing) -> list[MatchedParticipant]:
        personas = {b.persona_id: b for b in self.personas()}
        profiles = {p.persona_id: p for p in self.profiles()}
        rows = read_jsonl(self.out / assignment_file(framing))
        return [
            MatchedParticipant(
                HumanParticipant.from_dict(r["human"]), personas[r["persona_id"]], profiles[r["persona_id"]], r["weight"]
            )
            for r in rows
        ]

    def options(self, grounding: bool, filtering: bool) -> TrialOptions:
        s = self.cfg.study
        return TrialOptions(
            grounding=grounding,
            filtering=filtering,
            max_attempts=self.cfg.backend.max_attempts,
            temperature=s.temperature,
            max_tokens=s.max_tokens,
        )


def assignment_file(framing: Framing) -> str:
    return f"assignments_{framing.value}.jsonl"


def trials_file(grounding: bool, filtering: bool) -> str:
    return f"trials_{condition_slug(grounding, filtering)}.jsonl"


def _conditions(cfg: PipelineConfig) -> list[tuple[bool, bool]]:
    primary = (cfg.study.grounding, cfg.study.filtering)
    if not cfg.study.ablation:
        return [primary]
    return list(ABLATION_GRID)


def _roster_studies(cfg: PipelineConfig) -> list[Framing]:
    studies = list(cfg.study.studies)
    if cfg.factors.counterfactual:
        studies += [f for f in Framing if f.game is cfg.factors.game and f not in studies]
    return studies


def factorial_plan(cfg: PipelineConfig) -> FactorialPlan:
    if cfg.factors.plan is not None:
        return load_plan(cfg.factors.plan)
    return FactorialPlan.for_game(cfg.factors.game)


# -- stages ----------------------------------------------------------------


def _personas(run: _Run) -> None:
    s = run.cfg.study
    personas = generate_personas(
        run.gateway, s.personas, s.seed, max_attempts=run.cfg.backend.max_attempts, temperature=s.temperature
    )
    write_jsonl(run.out / "personas.jsonl", personas)


def _profiles(run: _Run) -> None:
    write_jsonl(run.out / "profiles.jsonl", survey_personas(run.gateway, run.personas(), run.schema))


def _assignments(run: _Run) -> None:
    profiles = run.profiles()
    for framing in _roster_studies(run.cfg):
        humans = read_roster(run.cfg.study.rosters[framing], run.schema, pool=STUDIES[framing].pool)
        matrix, assignment = match_roster(humans, profiles, run.schema)
        by_id = {h.id: h for h in humans}
        rows = [
            {"human": by_id[p["human_id"]].to_dict(), "persona_id": p["persona_id"], "weight": p["weight"]}
            for p in assignment.pairs(matrix)
        ]
        write_jsonl(run.out / assignment_file(framing), rows)


def _trials(run: _Run) -> None:
    s = run.cfg.study
    for grounding, filtering in _conditions(run.cfg):
        records: list[TrialRecord] = []
        for framing in s.studies:
            records += run_study(
                run.gateway, run.matched(framing), framing, run.options(grounding, filtering), s.seed, s.method,
                schema=run.schema,
            )
        write_jsonl(run.out / trials_file(grounding, filtering), records)


def _counterfactual(run: _Run) -> None:
    plan = factorial_plan(run.cfg)
    participants = {pool: run.matched(f) for pool, f in zip(plan.pools, plan.framings)}
    s = run.cfg.study
    result = run_factorial(
        plan, participants, run.gateway, run.options(s.grounding, s.filtering), s.seed, s.method, schema=run.schema
    )
    write_jsonl(run.out / "counterfactual_trials.jsonl", result.trials)
    atomic_write_text(run.out / "cells.csv", cells_csv(plan, result.cells))
    atomic_write_text(run.out / "factorial.md", factorial_markdown(plan, result.cells))


def _fit(rows_label: str, trials: Sequence[TrialRecord], coding: Coding) -> tuple[str, RegressionFit | str]:
    try:
        return rows_label, fit_ols(aggregate_participants(trials, coding), coding.formula)
    except (InsufficientData, RankDeficient) as exc:
        return rows_label, f"not estimable: {exc}"


def analyze_outputs(cfg: PipelineConfig, out: Path) -> dict[str, str]:
    """Delta and regression tables from the stored trials; returns file name -> text."""
    delta_rows: list[tuple[str, DeltaSummary]] = []
    fits: list[tuple[str, RegressionFit | str]] = []
    primary = (cfg.study.grounding, cfg.study.filtering)
    for grounding, filtering in _conditions(cfg):
        trials = read_jsonl(out / trials_file(grounding, filtering), TrialRecord.from_dict)
        for framing in cfg.study.studies:
            subset = [t for t in trials if t.game_spec.framing is framing]
            info = STUDIES[framing]
            label = f"{framing.value} {info.year}: {condition_label(grounding, filtering, info.year)}"
            try:
                delta_rows.append((label, delta_table(subset)))
            except EmptyCell as exc:
                log.warning("%s: %s", label, exc)
        if (grounding, filtering) == primary:
            for game in Game:
                pair = [f for f in Framing if f.game is game]
                if all(f in cfg.study.studies for f in pair):
                    subset = [t for t in trials if t.game_spec.game is game]
                    fits.append(_fit(f"{game.value} studies", subset, Coding(HUMAN)))
    if cfg.factors.counterfactual:
        plan = factorial_plan(cfg)
        cf = read_jsonl(out / "counterfactual_trials.jsonl", TrialRecord.from_dict)
        coding = Coding(COUNTERFACTUAL, later_year=plan.years[1], later_pool=plan.pools[1])
        fits.append(_fit(f"{plan.game.value} counterfactual", cf, coding))

    good = [(label, f) for label, f in fits if isinstance(f, RegressionFit)]
    md = []
    for formula, title in ((HUMAN, "Study model"), (COUNTERFACTUAL, "Counterfactual model")):
        group = [(label, f) for label, f in good if f.formula == formula]
        if group:
            md.append(f"## {title}\n\n" + regression_markdown(group))
    md += [f"- {label}: {f}\n" for label, f in fits if isinstance(f, str)]
    return {
        "delta.csv": delta_csv(delta_rows),
        "delta.md": delta_markdown(delta_rows),
        "regression.csv": regression_csv(good),
        "regression.md": "\n".join(md) if md else "No regression models were estimable.\n",
    }


def _analysis(run: _Run) -> None:
    for name, text in analyze_outputs(run.cfg, run.out).items():
        atomic_write_text(run.out / name, text)


def run_pipeline(cfg: PipelineConfig, backend: Backend | None = None, until: str | None = None) -> dict:
    """Run (or resume) every stage; returns the manifest.

    ``backend`` overrides the configured one. ``until`` stops after the named
    stage. Failures raise PipelineError carrying the manifest so far.
    """
    if until is not None and until not in STAGES:
        raise ValueError(f"until must be one of {STAGES}")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    stored = cfg.output_dir / MANIFEST
    if stored.exists():
        previous = json.loads(stored.read_text(encoding="utf-8")).get("seed")
        if previous != cfg.study.seed:
            raise ConfigError("seed", f"{cfg.output_dir} holds a run with seed {previous}; use another output directory")
    run = _Run(cfg, cfg.output_dir, load_schema(cfg.schema_path), backend, [])
    run.write_manifest()
    plan = [
        ("personas", ["personas.jsonl"], _personas),
        ("profiles", ["profiles.jsonl"], _profiles),
        ("assignments", [assignment_file(f) for f in _roster_studies(cfg)], _assignments),
        ("trials", [trials_file(*c) for c in _conditions(cfg)] if cfg.study.studies else [], _trials),
    ]
    if cfg.factors.counterfactual:
        plan.append(("counterfactual", ["counterfactual_trials.jsonl", "cells.csv", "factorial.md"], _counterfactual))
    plan.append(("analysis", ["delta.csv", "delta.md", "regression.csv", "regression.md"], _analysis))
    for name, outputs, produce in plan:
        run.stage(name, outputs, lambda produce=produce: produce(run))
        if name == until:
            break
    return run.manifest()


def manifest_digest(manifest: dict) -> str:
    """One hash over the manifest's file hashes, for quick comparisons."""
    return hashlib.sha256(dumps(manifest).encode("utf-8")).hexdigest()
