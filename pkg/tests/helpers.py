"""Builders shared by the test modules."""

from __future__ import annotations

import json
from pathlib import Path

import yaml

from deepbind.core import (
    AuditEntry,
    Backstory,
    Framing,
    GameSpec,
    HumanParticipant,
    Method,
    Party,
    QAPair,
    TraitProfile,
    TrialRecord,
    make_id,
)
from deepbind.gateway import Gateway, ScriptedBackend
from deepbind.games import STUDIES, MatchedParticipant
from deepbind.personas import generate_personas
from deepbind.simulated import TAG, Knobs, SimulatedPopulation
from deepbind.survey import DEFAULT_SCHEMA, survey_personas

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

D, R = Party.DEMOCRAT, Party.REPUBLICAN


def load_fixture(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


def simulated(knobs: Knobs | None = None) -> ScriptedBackend:
    return ScriptedBackend(SimulatedPopulation(knobs or Knobs()), tag=TAG)


_counter = iter(range(10**9))


def trial(
    self_party: Party,
    partner: Party,
    amount: int,
    framing: Framing = Framing.ID,
    year: int | None = None,
    pool: str | None = None,
    participant_id: str | None = None,
    persona_id: str = "persona",
) -> TrialRecord:
    info = STUDIES[framing]
    n = next(_counter)
    return TrialRecord(
        trial_id=make_id(0, "test-trial", n),
        persona_id=persona_id,
        method=Method.DEEPBIND,
        game_spec=GameSpec.for_framing(framing, info.year if year is None else year),
        self_party=self_party,
        partner_party=partner,
        pool=info.pool if pool is None else pool,
        raw_text=f" I would send ${amount}.",
        amount=amount,
        filter_audit=(AuditEntry(1, "accept", "ok"),),
        seed=n,
        participant_id=participant_id,
    )


def amounts_with_mean(mean: float, n: int = 100) -> list[int]:
    """``n`` whole-dollar amounts whose mean is exactly ``mean`` (2-dp)."""
    total = round(mean * n)
    base, extra = divmod(total, n)
    return [base + 1] * extra + [base] * (n - extra)


def trials_from_means(dd: float, dr: float, rr: float, rd: float, framing: Framing = Framing.ID) -> list[TrialRecord]:
    out = []
    for (s, p), mean in zip(((D, D), (D, R), (R, R), (R, D)), (dd, dr, rr, rd)):
        out += [trial(s, p, a, framing) for a in amounts_with_mean(mean)]
    return out


def backstory(persona_id: str = "p1", answers: tuple[str, ...] = ("I grew up in Reno.",)) -> Backstory:
    qa = tuple(QAPair(f"Question {i}?", a) for i, a in enumerate(answers, 1))
    return Backstory(persona_id, qa, "scripted | preamble: The following is an interview transcript.", (1,) * len(qa))


def one_hot_profile(persona_id: str, **chosen: str) -> TraitProfile:
    traits = {}
    for spec in DEFAULT_SCHEMA.traits:
        label = chosen.get(spec.name, spec.labels[0])
        traits[spec.name] = tuple((lab, 1.0 if lab == label else 0.0) for lab in spec.labels)
    return TraitProfile(persona_id, traits)


def human(hid: str, party: Party, pool: str = "MTurk", **traits: str) -> HumanParticipant:
    base = {spec.name: spec.labels[0] for spec in DEFAULT_SCHEMA.traits}
    base.update(traits)
    base["party"] = party.value
    return HumanParticipant(hid, base, party, pool)


def simulated_participants(
    backend: ScriptedBackend, count: int, seed: int, pool: str, prefix: str = "h"
) -> list[MatchedParticipant]:
    """Simulated personas paired with humans of the persona's own major party."""
    gateway = Gateway(backend, 4)
    personas = generate_personas(gateway, count, seed)
    profiles = survey_personas(gateway, personas, DEFAULT_SCHEMA)
    out = []
    for i, (b, prof) in enumerate(zip(personas, profiles)):
        top = prof.top("party")
        if top not in (D.value, R.value):
            continue
        out.append(MatchedParticipant(human(f"{prefix}{i:03d}", Party(top), pool), b, prof))
    return out


class Counting:
    """Wraps a backend and records every call."""

    def __init__(self, inner):
        self.inner = inner
        self.tag = inner.tag
        self.calls = []

    def complete(self, prompt, params):
        self.calls.append((prompt, params))
        return self.inner.complete(prompt, params)


def write_config(directory: Path, personas: int = 20, seed: int = 5, **study) -> Path:
    """A small pipeline config using the example schema and rosters."""
    raw = {
        "backend": {"kind": "scripted", "concurrency": 4},
        "schema": {"path": str(CONFIGS / "schema.yaml")},
        "study": {
            "seed": seed,
            "personas": personas,
            "studies": ["ID", "WD"],
            "rosters": {f: str(CONFIGS / "rosters" / f"{f}.csv") for f in ("ID", "WD")},
            **study,
        },
        "factors": {"counterfactual": True, "game": "Dictator"},
        "output": {"dir": "out"},
    }
    path = Path(directory) / "config.yaml"
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return path


# acceptance criterion name -> (passed, detail), printed at the end of the run
ACCEPTANCE: dict[str, tuple[bool, str]] = {}
