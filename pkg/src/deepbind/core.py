"""Domain types shared by every stage, plus their JSON encodings.

All records are frozen dataclasses; collections are stored as tuples so a
value can be handed to worker threads without copying.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .errors import SpecViolation, ValidationError

PROB_TOL = 1e-9


class _Lenient(str, Enum):
    """Accepts values case-insensitively."""

    @classmethod
    def _missing_(cls, value: object):
        if isinstance(value, str):
            for member in cls:
                if member.value.casefold() == value.casefold():
                    return member
        return None


class Party(_Lenient):
    DEMOCRAT = "Democrat"
    REPUBLICAN = "Republican"

    @property
    def other(self) -> "Party":
        return Party.REPUBLICAN if self is Party.DEMOCRAT else Party.DEMOCRAT


class Game(_Lenient):
    DICTATOR = "Dictator"
    TRUST = "Trust"


class Framing(_Lenient):
    ID = "ID"
    WD = "WD"
    CT = "CT"
    WT = "WT"

    @property
    def game(self) -> Game:
        return Game.DICTATOR if self in (Framing.ID, Framing.WD) else Game.TRUST


class Method(_Lenient):
    QA = "QA"
    BIO = "Bio"
    PORTRAY = "Portray"
    DEEPBIND = "DeepBind"


class Unit(_Lenient):
    DOLLARS = "dollars"
    RAFFLE_TICKETS = "raffle_tickets"


# -- seeds and identifiers -------------------------------------------------

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def _digest(*names: Any) -> bytes:
    h = hashlib.sha256()
    for name in names:
        h.update(str(name).encode("utf-8"))
        h.update(b"\x1f")
    return h.digest()


def derive_seed(root: int, *names: Any) -> int:
    """Named substream of a root seed; stable across processes and runs."""
    return int.from_bytes(_digest(root, *names)[:8], "big") >> 1


def make_id(root: int, *names: Any) -> str:
    """26-character Crockford base32 identifier, ULID-shaped.

    The id depends only on the seed path, never on record content, so the
    same stage run with the same seed yields the same ids.
    """
    n = int.from_bytes(_digest("id", root, *names)[:16], "big") >> 2
    out = []
    for _ in range(26):
        out.append(_CROCKFORD[n & 31])
        n >>= 5
    return "".join(reversed(out))


# -- records ---------------------------------------------------------------


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str

    def __post_init__(self) -> None:
        if not self.question:
            raise ValidationError("QAPair.question must be non-empty")
        if not self.answer:
            raise ValidationError("QAPair.answer must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"question": self.question, "answer": self.answer}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QAPair":
        return cls(d["question"], d["answer"])


@dataclass(frozen=True)
class Backstory:
    persona_id: str
    qa_pairs: tuple[QAPair, ...]
    generator_tag: str
    attempts_used: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "qa_pairs", tuple(self.qa_pairs))
        object.__setattr__(self, "attempts_used", tuple(self.attempts_used))
        if len(self.attempts_used) != len(self.qa_pairs):
            raise ValidationError("attempts_used needs one count per question")
        if any(a < 1 for a in self.attempts_used):
            raise ValidationError("every answer took at least one attempt")

    def to_dict(self) -> dict[str, Any]:
        return {
            "persona_id": self.persona_id,
            "qa_pairs": [qa.to_dict() for qa in self.qa_pairs],
            "generator_tag": self.generator_tag,
            "attempts_used": list(self.attempts_used),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Backstory":
        return cls(
            persona_id=d["persona_id"],
            qa_pairs=tuple(QAPair.from_dict(q) for q in d["qa_pairs"]),
            generator_tag=d["generator_tag"],
            attempts_used=tuple(d["attempts_used"]),
        )


Distribution = tuple[tuple[str, float], ...]


def normalize_weights(weights: Mapping[str, float] | Sequence[tuple[str, float]]) -> Distribution:
    items = list(weights.items()) if isinstance(weights, Mapping) else list(weights)
    total = math.fsum(w for _, w in items)
    if total <= 0:
        raise ValidationError("weights must have a positive sum")
    if any(w < 0 for _, w in items):
        raise ValidationError("weights must be non-negative")
    return tuple((label, w / total) for label, w in items)


def _check_distribution(trait: str, dist: Distribution) -> None:
    labels = [label for label, _ in dist]
    if not labels:
        raise ValidationError(f"trait {trait!r} has an empty distribution")
    if len(set(labels)) != len(labels):
        raise ValidationError(f"trait {trait!r} repeats a category label")
    for label, p in dist:
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise ValidationError(f"trait {trait!r}: P({label!r})={p} outside [0, 1]")
    total = math.fsum(p for _, p in dist)
    if abs(total - 1.0) > PROB_TOL:
        raise ValidationError(f"trait {trait!r} sums to {total!r}, not 1")


@dataclass(frozen=True)
class TraitProfile:
    """Per-trait categorical distributions for one persona."""

    persona_id: str
    traits: Mapping[str, Distribution]

    def __post_init__(self) -> None:
        frozen = {}
        for trait, dist in self.traits.items():
            dist = tuple((str(label), float(p)) for label, p in dist)
            _check_distribution(trait, dist)
            frozen[trait] = dist
        object.__setattr__(self, "traits", frozen)

    @classmethod
    def from_weights(cls, persona_id: str, weights: Mapping[str, Mapping[str, float]]) -> "TraitProfile":
        return cls(persona_id, {t: normalize_weights(w) for t, w in weights.items()})

    def prob(self, trait: str, label: str) -> float:
        for lab, p in self.traits[trait]:
            if lab == label:
                return p
        return 0.0

    def top(self, trait: str) -> str:
        """Most probable label; ties go to the earlier label."""
        best_label, best_p = self.traits[trait][0]
        for label, p in self.traits[trait][1:]:
            if p > best_p:
                best_label, best_p = label, p
        return best_label

    def is_one_hot(self, trait: str) -> bool:
        return sum(1 for _, p in self.traits[trait] if p > 0) == 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "persona_id": self.persona_id,
            "traits": {t: [[label, p] for label, p in dist] for t, dist in self.traits.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TraitProfile":
        return cls(d["persona_id"], {t: tuple((lab, p) for lab, p in dist) for t, dist in d["traits"].items()})


@dataclass(frozen=True)
class HumanParticipant:
    id: str
    traits: Mapping[str, str]
    party: Party
    pool: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "party", Party(self.party))
        object.__setattr__(self, "traits", dict(self.traits))
        if "party" in self.traits and self.traits["party"] != self.party.value:
            raise ValidationError(
                f"participant {self.id}: party trait {self.traits['party']!r} != party {self.party.value!r}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "traits": dict(self.traits), "party": self.party.value, "pool": self.pool}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "HumanParticipant":
        return cls(d["id"], d["traits"], Party(d["party"]), d["pool"])


@dataclass(frozen=True)
class GameSpec:
    game: Game
    framing: Framing
    year: int | None
    endowment: int = 10
    multiplier: int = 1
    unit: Unit = Unit.DOLLARS

    def __post_init__(self) -> None:
        object.__setattr__(self, "game", Game(self.game))
        object.__setattr__(self, "framing", Framing(self.framing))
        object.__setattr__(self, "unit", Unit(self.unit))

    @classmethod
    def for_framing(cls, framing: Framing | str, year: int | None) -> "GameSpec":
        """The canonical valid spec for a framing."""
        framing = Framing(framing)
        game = framing.game
        return cls(
            game=game,
            framing=framing,
            year=year,
            endowment=10,
            multiplier=3 if game is Game.TRUST else 1,
            unit=Unit.RAFFLE_TICKETS if framing is Framing.CT else Unit.DOLLARS,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "game": self.game.value,
            "framing": self.framing.value,
            "year": self.year,
            "endowment": self.endowment,
            "multiplier": self.multiplier,
            "unit": self.unit.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GameSpec":
        return cls(Game(d["game"]), Framing(d["framing"]), d["year"], d["endowment"], d["multiplier"], Unit(d["unit"]))


def validate_game_spec(spec: GameSpec) -> None:
    """Raise SpecViolation naming the first broken GameSpec invariant."""
    if spec.framing.game is not spec.game:
        raise SpecViolation("framing", f"{spec.framing.value} framing belongs to the {spec.framing.game.value} game")
    want_multiplier = 3 if spec.game is Game.TRUST else 1
    if spec.multiplier != want_multiplier:
        raise SpecViolation("multiplier", f"{spec.game.value} requires multiplier {want_multiplier}, got {spec.multiplier}")
    want_unit = Unit.RAFFLE_TICKETS if spec.framing is Framing.CT else Unit.DOLLARS
    if spec.unit is not want_unit:
        raise SpecViolation("unit", f"{spec.framing.value} framing pays in {want_unit.value}")
    if isinstance(spec.endowment, bool) or not isinstance(spec.endowment, int) or spec.endowment <= 0:
        raise SpecViolation("endowment", f"must be a positive integer, got {spec.endowment!r}")
    if spec.year is not None and (isinstance(spec.year, bool) or not isinstance(spec.year, int) or spec.year < 1):
        raise SpecViolation("year", f"must be a calendar year or absent, got {spec.year!r}")


@dataclass(frozen=True)
class AuditEntry:
    attempt: int
    verdict: str  # "accept" | "reject"
    reason: str

    def to_list(self) -> list[Any]:
        return [self.attempt, self.verdict, self.reason]


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    persona_id: str
    method: Method
    game_spec: GameSpec
    self_party: Party
    partner_party: Party
    pool: str
    raw_text: str
    amount: int
    filter_audit: tuple[AuditEntry, ...]
    seed: int
    participant_id: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "self_party", Party(self.self_party))
        object.__setattr__(self, "partner_party", Party(self.partner_party))
        object.__setattr__(self, "filter_audit", tuple(self.filter_audit))
        if not (0 <= self.amount <= self.game_spec.endowment):
            raise ValidationError(f"amount {self.amount} outside [0, {self.game_spec.endowment}]")
        if not self.filter_audit:
            raise ValidationError("filter_audit must record at least the accepting attempt")

    @property
    def same_party(self) -> bool:
        return self.self_party is self.partner_party

    def to_dict(self) -> dict[str, Any]:
        return {
            "trial_id": self.trial_id,
            "persona_id": self.persona_id,
            "method": self.method.value,
            "game_spec": self.game_spec.to_dict(),
            "self_party": self.self_party.value,
            "partner_party": self.partner_party.value,
            "pool": self.pool,
            "raw_text": self.raw_text,
            "amount": self.amount,
            "filter_audit": [e.to_list() for e in self.filter_audit],
            "seed": self.seed,
            "participant_id": self.participant_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TrialRecord":
        return cls(
            trial_id=d["trial_id"],
            persona_id=d["persona_id"],
            method=Method(d["method"]),
            game_spec=GameSpec.from_dict(d["game_spec"]),
            self_party=Party(d["self_party"]),
            partner_party=Party(d["partner_party"]),
            pool=d["pool"],
            raw_text=d["raw_text"],
            amount=d["amount"],
            filter_audit=tuple(AuditEntry(*e) for e in d["filter_audit"]),
            seed=d["seed"],
            participant_id=d.get("participant_id"),
        )


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 1.0
    max_tokens: int = 512
    stop_sequences: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))
        if self.temperature < 0 or math.isnan(self.temperature):
            raise ValidationError(f"temperature must be non-negative, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValidationError(f"max_tokens must be positive, got {self.max_tokens}")

    @classmethod
    def critic(cls, seed: int = 0, max_tokens: int = 64) -> "GenerationParams":
        """Deterministic decoding used for critics and extractors."""
        return cls(temperature=0.0, max_tokens=max_tokens, stop_sequences=("\n\n",), seed=seed)

    def with_seed(self, seed: int) -> "GenerationParams":
        return GenerationParams(self.temperature, self.max_tokens, self.stop_sequences, seed)

    def to_dict(self) -> dict[str, Any]:
        return {
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "stop_sequences": list(self.stop_sequences),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GenerationParams":
        return cls(d["temperature"], d["max_tokens"], tuple(d["stop_sequences"]), d["seed"])


def unique_ids(ids: Iterable[str]) -> bool:
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            return False
        seen.add(i)
    return True
