"""Two-stage trait survey: explicit evidence first, inferred distribution second."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .core import Backstory, GenerationParams, HumanParticipant, TraitProfile, normalize_weights
from .errors import DegenerateDistribution, TraitSurveyError, UnparseableVerdict, ValidationError
from .gateway import Backend, Gateway
from .personas import DEFAULT_PREAMBLE, render_transcript

PARTY_TRAIT = "party"
PARTY_LABELS = ("Democrat", "Republican", "Independent/Other")
NO_EVIDENCE = "NONE"
MAX_WEIGHT = 10


@dataclass(frozen=True)
class TraitSpec:
    name: str
    labels: tuple[str, ...]
    question: str


@dataclass(frozen=True)
class TraitSchema:
    traits: tuple[TraitSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "traits", tuple(self.traits))
        names = [t.name for t in self.traits]
        if len(set(names)) != len(names):
            raise ValidationError("trait names must be unique")
        for t in self.traits:
            if not t.labels:
                raise ValidationError(f"trait {t.name!r} needs at least one category")
            if len(set(t.labels)) != len(t.labels):
                raise ValidationError(f"trait {t.name!r} repeats a category")
            if t.name == PARTY_TRAIT and set(t.labels) != set(PARTY_LABELS):
                raise ValidationError(f"party trait must have exactly {PARTY_LABELS}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.traits)

    def __contains__(self, name: object) -> bool:
        return name in self.names

    def __len__(self) -> int:
        return len(self.traits)

    def get(self, name: str) -> TraitSpec:
        for t in self.traits:
            if t.name == name:
                return t
        raise KeyError(name)

    def restrict(self, names: Sequence[str]) -> "TraitSchema":
        return TraitSchema(tuple(self.get(n) for n in names))

    def validate_human(self, human: HumanParticipant) -> None:
        for trait, label in human.traits.items():
            if trait not in self:
                raise ValidationError(f"participant {human.id}: trait {trait!r} not in schema")
            if label not in self.get(trait).labels:
                raise ValidationError(f"participant {human.id}: {trait}={label!r} not an allowed category")

    def to_dict(self) -> dict[str, Any]:
        return {"traits": [{"name": t.name, "labels": list(t.labels), "question": t.question} for t in self.traits]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TraitSchema":
        traits = []
        for entry in d["traits"]:
            name = entry["name"]
            question = entry.get("question") or DEFAULT_QUESTIONS.get(name) or f"What is your {name.replace('_', ' ')}?"
            traits.append(TraitSpec(name, tuple(entry["labels"]), question))
        return cls(tuple(traits))


AGE_BRACKETS = ("18-29", "30-44", "45-64", "65+")

DEFAULT_QUESTIONS = {
    "age_bracket": "What is your age?",
    "gender": "What is your gender?",
    "race": "What is your race or ethnicity?",
    "education": "What is the highest level of education you have completed?",
    "income_bracket": "What is your annual household income?",
    PARTY_TRAIT: "What is your political affiliation?",
}

DEFAULT_SCHEMA = TraitSchema(
    (
        TraitSpec("age_bracket", AGE_BRACKETS, DEFAULT_QUESTIONS["age_bracket"]),
        TraitSpec("gender", ("Male", "Female"), DEFAULT_QUESTIONS["gender"]),
        TraitSpec("race", ("White", "Black", "Hispanic", "Asian", "Other"), DEFAULT_QUESTIONS["race"]),
        TraitSpec(
            "education",
            ("High school or less", "Some college", "Bachelor's degree", "Graduate degree"),
            DEFAULT_QUESTIONS["education"],
        ),
        TraitSpec(
            "income_bracket",
            ("Under $30,000", "$30,000-$59,999", "$60,000-$99,999", "$100,000 or more"),
            DEFAULT_QUESTIONS["income_bracket"],
        ),
        TraitSpec(PARTY_TRAIT, PARTY_LABELS, DEFAULT_QUESTIONS[PARTY_TRAIT]),
    )
)


def age_bracket(age: int) -> str:
    if age < 18:
        raise ValueError(f"age {age} below the adult sample range")
    if age < 30:
        return "18-29"
    if age < 45:
        return "30-44"
    if age < 65:
        return "45-64"
    return "65+"


def load_schema(path: str | Path | None) -> TraitSchema:
    """Read a YAML/JSON schema file; ``None`` gives the six-trait default."""
    if path is None:
        return DEFAULT_SCHEMA
    with open(path, encoding="utf-8") as fh:
        return TraitSchema.from_dict(yaml.safe_load(fh))


# -- prompts ---------------------------------------------------------------

EXPLICIT_TEMPLATE = """\
Read the interview transcript and answer a question about the person being interviewed.

Transcript:
<<<
{transcript}
>>>

Trait: {trait}
Question: {question}
Options: {options}

Reply with exactly one option, copied as written, only if the person gives clear verbal evidence for it in the transcript. If there is no clear evidence, reply {none}.
Answer:"""

INFER_TEMPLATE = """\
Read the interview transcript and estimate a fact about the person being interviewed.

Transcript:
<<<
{transcript}
>>>

Trait: {trait}
Question: {question}
The transcript does not state this directly. For every option, give a whole-number weight from 0 to {max_weight} for how likely it is, one line per option written as "<option>: <weight>".
Options:
{option_lines}
Weights:"""

_WEIGHT_LINE = re.compile(r"^\s*[-*]?\s*(.+?)\s*:\s*(-?\d+)\s*$")


def _transcript(backstory: Backstory) -> str:
    return render_transcript(DEFAULT_PREAMBLE, backstory.qa_pairs).strip()


def explicit_prompt(backstory: Backstory, spec: TraitSpec) -> str:
    return EXPLICIT_TEMPLATE.format(
        transcript=_transcript(backstory),
        trait=spec.name,
        question=spec.question,
        options="; ".join(spec.labels),
        none=NO_EVIDENCE,
    )


def infer_prompt(backstory: Backstory, spec: TraitSpec) -> str:
    return INFER_TEMPLATE.format(
        transcript=_transcript(backstory),
        trait=spec.name,
        question=spec.question,
        max_weight=MAX_WEIGHT,
        option_lines="\n".join(f"{label}: " for label in spec.labels),
    )


def _clean(s: str) -> str:
    return s.strip().strip("\"'`*").rstrip(".").strip()


def parse_explicit(text: str, labels: Sequence[str]) -> str | None:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise UnparseableVerdict(text, "extractor returned nothing")
    answer = _clean(lines[0]).casefold()
    if answer in (NO_EVIDENCE.casefold(), "no evidence", "unknown"):
        return None
    for label in labels:
        if label.casefold() == answer:
            return label
    raise UnparseableVerdict(text, "extractor answer is not an allowed category")


def parse_weights(text: str, labels: Sequence[str]) -> dict[str, int]:
    by_key = {label.casefold(): label for label in labels}
    weights = {label: 0 for label in labels}
    seen = False
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _WEIGHT_LINE.match(line)
        if not m:
            raise UnparseableVerdict(text, f"bad weight line {line!r}")
        label = by_key.get(_clean(m.group(1)).casefold())
        if label is None:
            raise UnparseableVerdict(text, f"unknown category {m.group(1)!r}")
        value = int(m.group(2))
        if not 0 <= value <= MAX_WEIGHT:
            raise UnparseableVerdict(text, f"weight {value} outside 0..{MAX_WEIGHT}")
        weights[label] = value
        seen = True
    if not seen:
        raise UnparseableVerdict(text, "no weight lines")
    return weights


def _extractor_params(max_tokens: int = 160) -> GenerationParams:
    return GenerationParams(temperature=0.0, max_tokens=max_tokens, stop_sequences=("\n\n",), seed=0)


# -- operations ------------------------------------------------------------


def extract_explicit_trait(backstory: Backstory, trait: str, schema: TraitSchema, backend: Backend) -> str | None:
    """Stage 1: a label when the transcript states the trait outright, else None."""
    spec = schema.get(trait)
    completion = backend.complete(explicit_prompt(backstory, spec), _extractor_params(32))
    return parse_explicit(completion.text, spec.labels)


def infer_trait_distribution(
    backstory: Backstory, trait: str, schema: TraitSchema, backend: Backend
) -> tuple[tuple[str, float], ...]:
    """Stage 2: elicit 0-10 weights per category and normalize them."""
    spec = schema.get(trait)
    if len(spec.labels) == 1:
        return ((spec.labels[0], 1.0),)
    completion = backend.complete(infer_prompt(backstory, spec), _extractor_params())
    weights = parse_weights(completion.text, spec.labels)
    if sum(weights.values()) == 0:
        raise DegenerateDistribution(f"all weights zero for trait {trait!r}")
    return normalize_weights([(label, float(weights[label])) for label in spec.labels])


def one_hot(labels: Sequence[str], chosen: str) -> tuple[tuple[str, float], ...]:
    return tuple((label, 1.0 if label == chosen else 0.0) for label in labels)


def survey_persona(backstory: Backstory, schema: TraitSchema, backend: Backend) -> TraitProfile:
    traits = {}
    for spec in schema.traits:
        try:
            if len(spec.labels) == 1:
                traits[spec.name] = ((spec.labels[0], 1.0),)
                continue
            found = extract_explicit_trait(backstory, spec.name, schema, backend)
            if found is not None:
                traits[spec.name] = one_hot(spec.labels, found)
            else:
                traits[spec.name] = infer_trait_distribution(backstory, spec.name, schema, backend)
        except (UnparseableVerdict, DegenerateDistribution) as exc:
            raise TraitSurveyError(spec.name, exc) from exc
    return TraitProfile(backstory.persona_id, traits)


def survey_personas(gateway: Gateway, backstories: Sequence[Backstory], schema: TraitSchema) -> list[TraitProfile]:
    return gateway.map(lambda b: survey_persona(b, schema, gateway), backstories)
