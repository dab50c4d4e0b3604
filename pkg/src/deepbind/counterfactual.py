"""2x2x2 counterfactual designs: swap pool, framing, and year between two studies.

Each virtual participant keeps their party and pool (between-participant
factors) and plays every combination of partner party, year, and framing
(within-participant factors), giving 8 trials per participant. Level 1 of
every factor is the later study's setting.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .analysis import DeltaSummary, FactorialCell, delta_table, factorial_main_effect
from .core import Framing, Game, GameSpec, Method, Party, TrialRecord, derive_seed, make_id
from .errors import CellError, DeepBindError, IncompleteDesign, ValidationError
from .gateway import Backend, Gateway
from .games import STUDIES, MatchedParticipant, TrialOptions, TrialTask, execute_task
from .survey import DEFAULT_SCHEMA, TraitSchema

log = logging.getLogger(__name__)

WITHIN_FACTORS = ("SameP", "Year", "Framing")
BETWEEN_FACTORS = ("SelfP", "Pool")

_STUDY_PAIRS = {
    Game.DICTATOR: (Framing.ID, Framing.WD),
    Game.TRUST: (Framing.CT, Framing.WT),
}


@dataclass(frozen=True)
class FactorialPlan:
    """Two levels for each of pool, framing, and year; index 1 is the later study."""

    game: Game
    pools: tuple[str, str]
    framings: tuple[Framing, Framing]
    years: tuple[int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "game", Game(self.game))
        object.__setattr__(self, "pools", tuple(self.pools))
        object.__setattr__(self, "framings", tuple(Framing(f) for f in self.framings))
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        for name in ("pools", "framings", "years"):
            levels = getattr(self, name)
            if len(levels) != 2 or levels[0] == levels[1]:
                raise ValidationError(f"{name} needs exactly two distinct levels, got {levels}")
        for f in self.framings:
            if f.game is not self.game:
                raise ValidationError(f"framing {f.value} does not belong to the {self.game.value} game")

    @property
    def within_factors(self) -> tuple[str, ...]:
        return WITHIN_FACTORS

    @property
    def between_factors(self) -> tuple[str, ...]:
        return BETWEEN_FACTORS

    @classmethod
    def for_game(cls, game: Game | str) -> "FactorialPlan":
        """The plan crossing the two original studies of ``game``."""
        early, late = _STUDY_PAIRS[Game(game)]
        return cls(
            Game(game),
            (STUDIES[early].pool, STUDIES[late].pool),
            (early, late),
            (STUDIES[early].year, STUDIES[late].year),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "game": self.game.value,
            "pools": list(self.pools),
            "framings": [f.value for f in self.framings],
            "years": list(self.years),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FactorialPlan":
        base = cls.for_game(d["game"])
        return cls(
            d["game"],
            tuple(d.get("pools", base.pools)),
            tuple(d.get("framings", base.framings)),
            tuple(d.get("years", base.years)),
        )


def load_plan(path: str | Path) -> FactorialPlan:
    with open(path, encoding="utf-8") as fh:
        return FactorialPlan.from_dict(yaml.safe_load(fh))


@dataclass(frozen=True)
class Condition:
    """One logical trial: a participant facing one partner party."""

    participant_id: str
    same_p: int
    partner_party: Party


@dataclass(frozen=True)
class CellDescriptor:
    pool: int
    framing: int
    year: int
    pool_label: str
    framing_id: Framing
    year_value: int
    original: bool
    conditions: tuple[Condition, ...] = ()

    def key(self) -> tuple[int, int, int]:
        return (self.year, self.framing, self.pool)

    @property
    def coords(self) -> tuple[str, str, int]:
        return (self.pool_label, self.framing_id.value, self.year_value)


def _partner(party: Party, same_p: int) -> Party:
    return party if same_p else party.other


def _check_participant(p: MatchedParticipant, pool_label: str) -> None:
    if p.human.pool != pool_label:
        raise ValidationError(f"participant {p.human.id} belongs to pool {p.human.pool!r}, not {pool_label!r}")


def participant_schedule(plan: FactorialPlan, participant: MatchedParticipant) -> list[tuple[int, int, int]]:
    """The 8 (same_p, year, framing) level triples, SameP outer and Framing inner."""
    return [(s, y, f) for s in (1, 0) for y in (0, 1) for f in (0, 1)]


def enumerate_conditions(
    plan: FactorialPlan, participants: Mapping[str, Sequence[MatchedParticipant]] | None = None
) -> list[CellDescriptor]:
    """The 8 cells, pool outermost and year innermost.

    With ``participants`` (keyed by pool label) each cell lists every
    participant of its pool against both partner parties.
    """
    cells = []
    for pi, pool in enumerate(plan.pools):
        roster = list((participants or {}).get(pool, ()))
        for p in roster:
            _check_participant(p, pool)
        for fi, framing in enumerate(plan.framings):
            for yi, year in enumerate(plan.years):
                conditions = tuple(
                    Condition(p.human.id, s, _partner(p.human.party, s)) for p in roster for s in (1, 0)
                )
                cells.append(
                    CellDescriptor(pi, fi, yi, pool, framing, year, pi == fi == yi, conditions)
                )
    return cells


def build_tasks(
    plan: FactorialPlan,
    participants: Mapping[str, Sequence[MatchedParticipant]],
    options: TrialOptions,
    root_seed: int,
    method: Method | str = Method.DEEPBIND,
) -> list[tuple[CellDescriptor, TrialTask]]:
    """Every trial of the design in per-participant schedule order."""
    missing = [pool for pool in plan.pools if not participants.get(pool)]
    if missing:
        raise IncompleteDesign(f"no matched participants for pool(s) {missing}")
    cells = {(c.pool, c.framing, c.year): c for c in enumerate_conditions(plan)}
    out = []
    for pi, pool in enumerate(plan.pools):
        for p in participants[pool]:
            _check_participant(p, pool)
            for s, yi, fi in participant_schedule(plan, p):
                framing, year = plan.framings[fi], plan.years[yi]
                path = ("counterfactual", p.human.id, s, year, framing.value)
                task = TrialTask(
                    persona=p.persona,
                    profile=p.profile,
                    method=Method(method),
                    spec=GameSpec.for_framing(framing, year),
                    partner_party=_partner(p.human.party, s),
                    options=replace(options, seed=derive_seed(root_seed, *path)),
                    self_party=p.human.party,
                    pool=p.human.pool,
                    participant_id=p.human.id,
                    trial_id=make_id(root_seed, *path),
                )
                out.append((cells[(pi, fi, yi)], task))
    return out


@dataclass(frozen=True)
class FactorialResult:
    plan: FactorialPlan
    trials: tuple[TrialRecord, ...]
    cells: tuple[FactorialCell, ...]

    def main_effects(self) -> dict[str, float]:
        return main_effects(self.cells)


def run_factorial(
    plan: FactorialPlan,
    participants: Mapping[str, Sequence[MatchedParticipant]],
    gateway: Gateway,
    options: TrialOptions = TrialOptions(),
    root_seed: int = 0,
    method: Method | str = Method.DEEPBIND,
    critic: Backend | None = None,
    schema: TraitSchema = DEFAULT_SCHEMA,
) -> FactorialResult:
    """Run all 8 x participants x 1 trials and aggregate them into cells."""
    if not options.grounding:
        log.warning("temporal grounding is off, so the year factor never reaches the prompt")
    scheduled = build_tasks(plan, participants, options, root_seed, method)

    def one(item: tuple[CellDescriptor, TrialTask]) -> TrialRecord:
        cell, task = item
        try:
            return execute_task(gateway, task, critic, schema)
        except DeepBindError as exc:
            raise CellError(cell.coords, exc) from exc

    records = sorted(gateway.map(one, scheduled), key=lambda r: r.trial_id)
    return FactorialResult(plan, tuple(records), tuple(cells_from_trials(plan, records)))


def cells_from_trials(plan: FactorialPlan, trials: Sequence[TrialRecord]) -> list[FactorialCell]:
    """Group trials by (pool, framing, year) and summarize each group's partisan gap."""
    groups: dict[tuple[str, Framing, int], list[TrialRecord]] = defaultdict(list)
    for t in trials:
        groups[(t.pool, t.game_spec.framing, t.game_spec.year)].append(t)
    out = []
    for c in enumerate_conditions(plan):
        members = groups.pop((c.pool_label, c.framing_id, c.year_value), None)
        if not members:
            raise IncompleteDesign(f"no trials for cell {c.coords}")
        summary = delta_table(members)
        out.append(FactorialCell(c.year, c.framing, c.pool, summary.mean_delta, summary, c.original))
    if groups:
        raise ValidationError(f"trials outside the plan: {sorted(map(str, groups))}")
    return out


def main_effects(cells: Sequence[FactorialCell]) -> dict[str, float]:
    return {factor: factorial_main_effect(cells, factor) for factor in ("pool", "framing", "year")}


# -- reports ---------------------------------------------------------------

_CELL_COLUMNS = ("pool", "framing", "year", "original", "dd", "dr", "rr", "rd", "dem_delta", "rep_delta", "avg_delta")


def _levels(plan: FactorialPlan, cell: FactorialCell) -> tuple[str, str, int]:
    return plan.pools[cell.pool], plan.framings[cell.framing].value, plan.years[cell.year]


def cells_csv(plan: FactorialPlan, cells: Sequence[FactorialCell]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_CELL_COLUMNS)
    for c in cells:
        s = c.summary or DeltaSummary.from_means(float("nan"), float("nan"), float("nan"), float("nan"))
        w.writerow([
            *_levels(plan, c), int(c.original),
            *(repr(float(v)) for v in (s.dd, s.dr, s.rr, s.rd, s.dem_delta, s.rep_delta, c.avg_delta)),
        ])
    return buf.getvalue()


def read_cells_csv(text: str, plan: FactorialPlan) -> list[FactorialCell]:
    cells = []
    for row in csv.DictReader(io.StringIO(text)):
        summary = DeltaSummary.from_means(*(float(row[k]) for k in ("dd", "dr", "rr", "rd")))
        cells.append(
            FactorialCell(
                plan.years.index(int(row["year"])),
                plan.framings.index(Framing(row["framing"])),
                plan.pools.index(row["pool"]),
                float(row["avg_delta"]),
                summary,
                bool(int(row["original"])),
            )
        )
    return cells


def factorial_markdown(plan: FactorialPlan, cells: Sequence[FactorialCell]) -> str:
    """Cell table plus main effects; original-design rows are marked with ``*``."""
    header = ("Pool", "Framing", "Year", "Dem Δ", "Rep Δ", "Avg Δ", "Original")
    rows = []
    for c in cells:
        s = c.summary
        dem = f"{s.dem_delta:.2f}" if s else ""
        rep = f"{s.rep_delta:.2f}" if s else ""
        rows.append([*map(str, _levels(plan, c)), dem, rep, f"{c.avg_delta:.2f}", "*" if c.original else ""])
    widths = [max(len(x) for x in col) for col in zip(header, *rows)]
    fmt = lambda r: "| " + " | ".join(x.ljust(w) for x, w in zip(r, widths)) + " |"
    lines = [f"## {plan.game.value} game", "", fmt(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [fmt(r) for r in rows]
    effects = main_effects(cells)
    lines += ["", "Main effects (level 1 minus level 0, averaged over the other factors):", ""]
    for factor in ("pool", "framing", "year"):
        lo, hi = {"pool": plan.pools, "framing": [f.value for f in plan.framings], "year": plan.years}[factor]
        lines.append(f"- {factor} ({lo} -> {hi}): {effects[factor]:+.2f}")
    return "\n".join(lines) + "\n"

