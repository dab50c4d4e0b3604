"""Replication runs of one study, and the grounding x filtering ablation grid."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .analysis import DeltaSummary, delta_table
from .core import Framing, GameSpec, Method, Party, TrialRecord, derive_seed, make_id
from .errors import ValidationError
from .gateway import Backend, Gateway
from .games import STUDIES, MatchedParticipant, TrialOptions, TrialTask, run_trials
from .survey import DEFAULT_SCHEMA, TraitSchema

# (grounding, filtering) in the row order of the ablation tables
ABLATION_GRID = ((False, False), (False, True), (True, False), (True, True))


def condition_label(grounding: bool, filtering: bool, year: int | None) -> str:
    if not grounding:
        return "Consistency" if filtering else "No date, No consistency"
    date = f"Date {year}" if year is not None else "Date"
    return f"{date} + Consistency" if filtering else date


def condition_slug(grounding: bool, filtering: bool) -> str:
    return f"{'date' if grounding else 'nodate'}-{'filter' if filtering else 'nofilter'}"


def study_tasks(
    matched: Sequence[MatchedParticipant],
    framing: Framing | str,
    options: TrialOptions,
    root_seed: int,
    method: Method | str = Method.DEEPBIND,
    year: int | None = None,
) -> list[TrialTask]:
    """Two trials per participant, one against each party.

    Seeds ignore the grounding/filtering toggles, so ablation conditions see
    the same draws wherever their prompts coincide.
    """
    framing = Framing(framing)
    info = STUDIES[framing]
    spec = GameSpec.for_framing(framing, info.year if year is None else year)
    slug = condition_slug(options.grounding, options.filtering)
    tasks = []
    for p in matched:
        if p.human.party not in (Party.DEMOCRAT, Party.REPUBLICAN):
            raise ValidationError(f"participant {p.human.id} has no major-party identity")
        for partner in (p.human.party, p.human.party.other):
            path = (framing.value, p.human.id, partner.value)
            tasks.append(
                TrialTask(
                    persona=p.persona,
                    profile=p.profile,
                    method=Method(method),
                    spec=spec,
                    partner_party=partner,
                    options=replace(options, seed=derive_seed(root_seed, "trial", *path)),
                    self_party=p.human.party,
                    pool=p.human.pool,
                    participant_id=p.human.id,
                    trial_id=make_id(root_seed, "trial", slug, *path),
                )
            )
    return tasks


def run_study(
    gateway: Gateway,
    matched: Sequence[MatchedParticipant],
    framing: Framing | str,
    options: TrialOptions,
    root_seed: int,
    method: Method | str = Method.DEEPBIND,
    critic: Backend | None = None,
    schema: TraitSchema = DEFAULT_SCHEMA,
) -> list[TrialRecord]:
    return run_trials(gateway, study_tasks(matched, framing, options, root_seed, method), critic, schema)


@dataclass(frozen=True)
class AblationRow:
    label: str
    grounding: bool
    filtering: bool
    summary: DeltaSummary
    trials: tuple[TrialRecord, ...]


def run_ablation(
    gateway: Gateway,
    matched: Sequence[MatchedParticipant],
    framing: Framing | str,
    options: TrialOptions,
    root_seed: int,
    method: Method | str = Method.DEEPBIND,
    critic: Backend | None = None,
    schema: TraitSchema = DEFAULT_SCHEMA,
    grid: Sequence[tuple[bool, bool]] = ABLATION_GRID,
) -> list[AblationRow]:
    """One row per (grounding, filtering) setting, in grid order."""
    year = STUDIES[Framing(framing)].year
    rows = []
    for grounding, filtering in grid:
        opts = replace(options, grounding=grounding, filtering=filtering)
        trials = run_study(gateway, matched, framing, opts, root_seed, method, critic, schema)
        rows.append(
            AblationRow(condition_label(grounding, filtering, year), grounding, filtering, delta_table(trials), tuple(trials))
        )
    return rows
