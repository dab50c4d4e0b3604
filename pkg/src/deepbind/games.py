"""Persona conditioning, study prompts, and single-trial execution."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

from .core import (
    AuditEntry,
    Backstory,
    Framing,
    GameSpec,
    GenerationParams,
    HumanParticipant,
    Method,
    Party,
    TraitProfile,
    TrialRecord,
    make_id,
    validate_game_spec,
)
from .errors import AllocationParseError, ExhaustedAttempts, MissingTrait, NoNumberFound, OutOfRange, UnknownFraming
from .gateway import (
    DEFAULT_MAX_ATTEMPTS,
    Backend,
    Completion,
    Gateway,
    JudgeVerdict,
    attempt_params,
    judge,
    sample_until_accepted,
)
from .personas import DEFAULT_PREAMBLE, render_transcript
from .survey import DEFAULT_SCHEMA, PARTY_TRAIT, TraitSchema

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StudyInfo:
    framing: Framing
    year: int
    pool: str
    label: str


# Original study configurations; pools as reported for each source study.
STUDIES = {
    Framing.ID: StudyInfo(Framing.ID, 2014, "MTurk", "Iyengar & Westwood"),
    Framing.WD: StudyInfo(Framing.WD, 2019, "Dynata", "Whitt et al. (Dictator)"),
    Framing.CT: StudyInfo(Framing.CT, 2015, "SSI", "Carlin & Love"),
    Framing.WT: StudyInfo(Framing.WT, 2019, "Dynata", "Whitt et al. (Trust)"),
}

# -- grounding -------------------------------------------------------------

GROUNDING = {
    "question": "Interviewer: What Year is it?",
    "answer": "Me: {year}",
}
PLACEMENTS = ("after_context", "before_context")


def grounding_lines(year: int) -> str:
    return GROUNDING["question"] + "\n" + GROUNDING["answer"].format(year=year)


def apply_temporal_grounding(context: str, year: int | None) -> str:
    """Append the forced year question/answer pair to a persona context."""
    if year is None:
        return context
    return context + grounding_lines(year) + "\n\n"


# -- study templates -------------------------------------------------------

_ID_TEMPLATE = """\
Question: This game is played by pairs of individuals. Each pair is made up of a Player 1 and a Player 2. Each player will have some information about the other player, but you will not be told who the other players are during or after the experiment.

The game is conducted as follows: A sum of $10 will be provisionally allocated to Player 1 at the start of each round. Player 1 will then decide how much of the $10 to offer to player 2. Player 1 could give some, all, or none of the $10. Player 1 keeps all money not given to player 2. Player 2 gets to keep all the money Player 1 offers.

The computer has randomly assigned you to play as Player 1. You will play this game once with another person. The more money you obtain, the more successful you will be.

You are Player 1. You have $10. You can split the money between yourself and Player 2 in any way you want.

Information about the Player 2

- Political party: {party}

So put the dollars you wish to go to Player 2."""

_WD_TEMPLATE = """\
Question: In this task you have $10. You must decide how much to keep for yourself and how much to give to another person. In this task, the only information we can give you is that the other person identifies politically as a {party}. Whatever you send to the other person will be given to them if they are selected to receive a payment. Whatever you keep for yourself will be paid to you if you are selected to receive a payment. Please make your decision.

How much money do you want to send to {PARTY}?"""

_CT_TEMPLATE = """\
Question: In this game, there are two players: “Player 1” and “Player 2.” You are Player 1.

Player 2, like you, received 10 raffle tickets to participate in the study. You will not be told who this person is either during or after the survey (nor will that person be told who you are). We have chosen to give you one piece of information about Player 2:

Player 2 identifies politically with the {party_adj} Party.

Today, you will have the opportunity to send some, all, or none of 10 raffle tickets to Player 2. This person will then keep the tickets sent to them, if any, and you keep the remainder.

The game is as follows:
1.) You must decide how many raffle tickets (if any) you will send to Player 2. Any amount you keep for yourself will be given to you.
2.) Whatever amount you send to Player 2 will be tripled before it is passed on to Player 2. Player 2 then has the option of returning any portion of this tripled amount to you. Then the game is over.

For example:
(a) If you send 1 ticket, Player 2 receives 3 tickets.
(b) If you send 5 tickets, Player 2 receives 15 tickets.

These are examples only. To review, any number of tickets you send will be tripled and given to Player 2. This person will keep the tickets you send them, minus the number of tickets they return to you. Your payoff in this game is the number of tickets that you kept for yourself, plus any tickets Player 2 returned to you. Once you understand this game, and are ready to make a decision, select the amount from the options below."""

_WT_TEMPLATE = """\
Question: In this task you have $10. You must decide how much to keep for yourself and how much to give to another person. The only information we can give you is that the other person identifies politically as a {party}.

Whatever you keep for yourself will be paid to you if you are selected to receive a payment. Whatever you send to the other person will be multiplied by 3 and then given to the other person. The other person then has the option to give money back to you.

For example:
- If you keep $10, then the other person receives $0.
- If you send $10, then we multiply that sum by 3 ($10 × 3 = $30) and the other person receives $30.
- The other person then decides how much (if any) of the $30 to give back to you.
  - If the person keeps all $30, then you receive $0.
  - If the person returns half, then you and the other person receive $15 each.

How much money do you want to send to {PARTY}?"""

TEMPLATES = {
    Framing.ID: _ID_TEMPLATE,
    Framing.WD: _WD_TEMPLATE,
    Framing.CT: _CT_TEMPLATE,
    Framing.WT: _WT_TEMPLATE,
}

_PARTY_ADJECTIVE = {Party.DEMOCRAT: "Democratic", Party.REPUBLICAN: "Republican"}


def render_study_prompt(spec: GameSpec, partner_party: Party | str) -> str:
    validate_game_spec(spec)
    try:
        template = TEMPLATES[Framing(spec.framing)]
    except (KeyError, ValueError) as exc:
        raise UnknownFraming(str(spec.framing)) from exc
    partner = Party(partner_party)
    return template.format(
        party=partner.value,
        PARTY=partner.value.upper(),
        party_adj=_PARTY_ADJECTIVE[partner],
    )


# -- conditioning contexts -------------------------------------------------


@dataclass(frozen=True)
class ConditioningContext:
    method: Method
    text: str
    persona_id: str


def _answer_label(trait: str, label: str) -> str:
    if trait == PARTY_TRAIT and label == "Independent/Other":
        return "Independent"
    return label


def _age_phrase(label: str) -> str:
    if label.endswith("+"):
        return f"{label[:-1]} years old or older"
    lo, _, hi = label.partition("-")
    return f"between {lo} and {hi} years old" if hi else f"{label} years old"


def _bio_sentence(trait: str, label: str, person: int) -> str:
    """One rule-based sentence; ``person`` is 1 (I ...) or 2 (You ...)."""
    be, my = ("I am", "My") if person == 1 else ("You are", "Your")
    if trait == "age_bracket":
        return f"{be} {_age_phrase(label)}."
    if trait == "gender" and label in ("Male", "Female"):
        return f"{be} a {'man' if label == 'Male' else 'woman'}."
    if trait == "race":
        return f"{be} {label}." if label != "Other" else f"{my} race is not White, Black, Hispanic, or Asian."
    if trait == "education":
        return f"{my} highest completed level of education is: {label}."
    if trait == "income_bracket":
        return f"{my} annual household income is {label}."
    if trait == PARTY_TRAIT:
        if label == "Independent/Other":
            return f"{be} an Independent."
        return f"{be} a {label}."
    return f"{my} {trait.replace('_', ' ')} is {label}."


def _preamble_of(backstory: Backstory) -> str:
    marker = "preamble: "
    if marker in backstory.generator_tag:
        return backstory.generator_tag.split(marker, 1)[1]
    return DEFAULT_PREAMBLE


def build_persona_context(
    persona: Backstory,
    profile: TraitProfile,
    method: Method | str,
    schema: TraitSchema = DEFAULT_SCHEMA,
) -> ConditioningContext:
    """Render a persona for one conditioning method; text ends with a blank line."""
    method = Method(method)
    for name in schema.names:
        if name not in profile.traits:
            raise MissingTrait(f"persona {profile.persona_id} has no distribution for {name!r}")
    top = {spec.name: profile.top(spec.name) for spec in schema.traits}
    if method is Method.DEEPBIND:
        text = render_transcript(_preamble_of(persona), persona.qa_pairs)
    elif method is Method.QA:
        text = "".join(
            f"Q: {spec.question}\nA: {_answer_label(spec.name, top[spec.name])}\n" for spec in schema.traits
        ) + "\n"
    else:
        person = 1 if method is Method.BIO else 2
        text = " ".join(_bio_sentence(name, label, person) for name, label in top.items()) + "\n\n"
    return ConditioningContext(method, text, persona.persona_id)


# -- allocation parsing ----------------------------------------------------

_AMOUNT_RE = re.compile(r"(?<![\w.])(\$\s?)?(\d+)")
_SKIP_BEFORE = re.compile(r"player\s*$", re.IGNORECASE)


def parse_allocation(raw: str, spec: GameSpec) -> int:
    """First whole number in the reply, optionally with a leading ``$``.

    Numbers that label a player ("Player 2") are not amounts and are skipped.
    """
    for m in _AMOUNT_RE.finditer(raw):
        if not m.group(1) and _SKIP_BEFORE.search(raw[: m.start()]):
            continue
        value = int(m.group(2))
        if not 0 <= value <= spec.endowment:
            raise OutOfRange(value, spec.endowment)
        return value
    raise NoNumberFound(f"no amount in {raw[:80]!r}")


# -- consistency filtering -------------------------------------------------


@dataclass(frozen=True)
class FilterRubric:
    checks: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "checks", tuple(self.checks))
        if not self.checks:
            raise ValueError("a filter rubric needs at least one check")

    def render(self) -> str:
        return "\n".join(f"- {c}" for c in self.checks)


DEFAULT_FILTER_RUBRIC = FilterRubric(
    (
        "REJECT if the reply contradicts who the persona is (age, gender, race, family, life story).",
        "REJECT if the reply claims a political party other than the persona's own party.",
        "REJECT if the reply contradicts the year the persona is speaking in.",
        "REJECT if the reply is not a plausible spoken answer inside the dialog: code blocks, markup, "
        "option lists, or a new interviewer question.",
        "REJECT if the reply does not state an amount to send.",
        "Do not reject a reply only because it hedges, shows mixed feelings, or is mildly inconsistent; "
        "real people answer that way. Otherwise ACCEPT.",
    )
)


def consistency_check(
    context: str,
    completion: str,
    rubric: FilterRubric,
    critic: Backend,
    params: GenerationParams | None = None,
) -> JudgeVerdict:
    return judge(critic, completion, rubric.render(), params, context=context.rstrip())


# -- trials ----------------------------------------------------------------


@dataclass(frozen=True)
class TrialOptions:
    grounding: bool = True
    filtering: bool = True
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    seed: int = 0
    temperature: float = 1.0
    max_tokens: int = 64
    placement: str = "after_context"
    rubric: FilterRubric = DEFAULT_FILTER_RUBRIC

    def __post_init__(self) -> None:
        if self.placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


TRIAL_STOPS = ("Question:", "\nInterviewer:")


def assemble_trial_prompt(
    context: ConditioningContext, spec: GameSpec, partner_party: Party, options: TrialOptions
) -> tuple[str, str]:
    """Return ``(full prompt, persona-side context used by the critic)``."""
    persona_side = context.text
    year = spec.year if options.grounding else None
    if year is not None:
        if options.placement == "after_context":
            persona_side = apply_temporal_grounding(context.text, year)
        else:
            persona_side = grounding_lines(year) + "\n\n" + context.text
    return persona_side + render_study_prompt(spec, partner_party), persona_side


def _audit(verdicts: Sequence[JudgeVerdict]) -> tuple[AuditEntry, ...]:
    return tuple(
        AuditEntry(i, "accept" if v.accept else "reject", v.reason) for i, v in enumerate(verdicts, 1)
    )


def run_trial(
    backend: Backend,
    persona: Backstory,
    profile: TraitProfile,
    method: Method | str,
    spec: GameSpec,
    partner_party: Party | str,
    options: TrialOptions = TrialOptions(),
    *,
    self_party: Party | str | None = None,
    pool: str = "",
    participant_id: str | None = None,
    trial_id: str | None = None,
    critic: Backend | None = None,
    schema: TraitSchema = DEFAULT_SCHEMA,
) -> TrialRecord:
    """Play one game decision for one persona.

    With filtering on, a draw is rejected when its amount cannot be parsed or
    the critic finds it inconsistent with the persona; drawing continues up to
    ``options.max_attempts``. With filtering off the first draw stands and a
    parse failure is raised.
    """
    validate_game_spec(spec)
    partner = Party(partner_party)
    if self_party is None:
        top = profile.top(PARTY_TRAIT)
        if top not in (Party.DEMOCRAT.value, Party.REPUBLICAN.value):
            raise MissingTrait(f"persona {profile.persona_id} has no major-party identity; pass self_party")
        self_party = top
    context = build_persona_context(persona, profile, method, schema)
    prompt, persona_side = assemble_trial_prompt(context, spec, partner, options)
    gen = GenerationParams(options.temperature, options.max_tokens, TRIAL_STOPS, options.seed)
    critic = critic or backend

    if options.filtering:
        parsed: dict[str, int] = {}

        def check(c: Completion) -> JudgeVerdict:
            try:
                amount = parse_allocation(c.text, spec)
            except AllocationParseError as exc:
                return JudgeVerdict(False, f"unparseable amount: {exc}")
            verdict = consistency_check(persona_side, c.text.strip(), options.rubric, critic)
            if verdict.accept:
                parsed[c.text] = amount
            return verdict

        result = sample_until_accepted(backend, prompt, gen, "", options.max_attempts, check=check)
        raw = result.completion.text
        amount = parsed[raw]
        audit = _audit(result.audit)
    else:
        completion = backend.complete(prompt, attempt_params(gen, 1))
        raw = completion.text
        amount = parse_allocation(raw, spec)
        audit = (AuditEntry(1, "accept", "filtering off"),)

    return TrialRecord(
        trial_id=trial_id or make_id(options.seed, "trial"),
        persona_id=persona.persona_id,
        method=Method(method),
        game_spec=spec,
        self_party=Party(self_party),
        partner_party=partner,
        pool=pool,
        raw_text=raw,
        amount=amount,
        filter_audit=audit,
        seed=options.seed,
        participant_id=participant_id,
    )


@dataclass(frozen=True)
class TrialTask:
    """Everything needed to run one trial independently of the others."""

    persona: Backstory
    profile: TraitProfile
    method: Method
    spec: GameSpec
    partner_party: Party
    options: TrialOptions
    self_party: Party
    pool: str
    participant_id: str | None
    trial_id: str


def execute_task(
    backend: Backend, task: TrialTask, critic: Backend | None = None, schema: TraitSchema = DEFAULT_SCHEMA
) -> TrialRecord:
    return run_trial(
        backend,
        task.persona,
        task.profile,
        task.method,
        task.spec,
        task.partner_party,
        task.options,
        self_party=task.self_party,
        pool=task.pool,
        participant_id=task.participant_id,
        trial_id=task.trial_id,
        critic=critic,
        schema=schema,
    )


def run_trials(
    gateway: Gateway,
    tasks: Sequence[TrialTask],
    critic: Backend | None = None,
    schema: TraitSchema = DEFAULT_SCHEMA,
) -> list[TrialRecord]:
    """Run tasks concurrently; records are returned sorted by trial_id."""
    records = gateway.map(lambda task: execute_task(gateway, task, critic, schema), tasks)
    return sorted(records, key=lambda r: r.trial_id)


@dataclass(frozen=True)
class MatchedParticipant:
    """A roster entry together with the persona standing in for it."""

    human: HumanParticipant
    persona: Backstory
    profile: TraitProfile
    weight: float = 1.0
