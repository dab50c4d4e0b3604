"""A deterministic stand-in for the base model, critic, and trait extractor.

:class:`SimulatedPopulation` is a responder for :class:`~deepbind.gateway.ScriptedBackend`.
It recognises the four prompt kinds the harness sends (interview question,
critic review, trait extraction, game decision) and answers each as a pure
function of ``(prompt, seed)``. Its behaviour is controlled by
:class:`Knobs`, which lets tests plant known effects (for instance a fixed
co-partisan bonus that only appears when the year is grounded) and check
that the analysis recovers them.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .core import GenerationParams
from .personas import INTERVIEW_QUESTIONS
from .survey import MAX_WEIGHT, NO_EVIDENCE, age_bracket

TAG = "scripted:simulated-population/v1"


@dataclass(frozen=True)
class Knobs:
    copartisan_bonus: int = 1  # added to transfers toward co-partisans
    grounding_bonus: int = 1  # extra co-partisan bonus when the year is grounded
    framing_bonus: int = 1  # extra co-partisan bonus under the Whitt wording
    year_bonus: int = 0  # extra co-partisan bonus when the grounded year is >= 2019
    noise_rate: float = 0.15  # chance a decision comes out of character
    markup_rate: float = 0.1  # chance an interview answer is code/markup
    explicit_rate: float = 0.7  # chance a demographic fact is stated outright


def _u(*parts: object) -> float:
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") / 2**64


def _pick(seq, *parts: object):
    return seq[int(_u(*parts) * len(seq))]


_GROUNDING_RE = re.compile(r"Interviewer: What Year is it\?\nMe: (\d{3,4})\n*")
_CANDIDATE_RE = re.compile(r"Candidate:\n<<<\n(.*)\n>>>\n\nVerdict:\s*$", re.DOTALL)
_CONTEXT_RE = re.compile(r"Persona context:\n<<<\n(.*?)\n>>>\n\nCandidate:", re.DOTALL)
_MARKUP_RE = re.compile(r"```|<\s*/?\s*[a-zA-Z][^>]*>|^\s*#{1,6}\s|\\begin\{", re.MULTILINE)
_LIFELONG_RE = re.compile(r"lifelong (Democrat|Republican)")
_SELF_PARTY_RE = re.compile(r"(?:\bA: |\bI am a |\bI'm a proud |\bYou are a )(Democrat|Republican)\b")
_LEAN_RE = re.compile(r"I lean (liberal|conservative)")
_PARTNER_RES = (
    re.compile(r"Political party: (Democrat|Republican)"),
    re.compile(r"identifies politically as a (Democrat|Republican)"),
    re.compile(r"identifies politically with the (Democratic|Republican) Party"),
)
_STUDY_START_RE = re.compile(r"Question: (?:This game|In this)")
_STUDY_MARKERS = (
    "So put the dollars you wish to go to Player 2.",
    "How much money do you want to send to",
    "select the amount from the options below.",
)

_CITIES = ("Dayton", "Tucson", "Fresno", "Albany", "Tulsa", "Raleigh", "Boise", "Omaha", "Reno", "Macon")
_EDU_PHRASES = {
    "High school or less": "I finished high school and went straight to work.",
    "Some college": "I took some college classes but never finished a degree.",
    "Bachelor's degree": "I earned a bachelor's degree.",
    "Graduate degree": "I earned a graduate degree.",
}
_INCOME_PHRASES = {
    "Under $30,000": "under $30,000",
    "$30,000-$59,999": "between $30,000 and $59,999",
    "$60,000-$99,999": "between $60,000 and $99,999",
    "$100,000 or more": "$100,000 or more",
}
_RACES = ("White", "White", "White", "Black", "Hispanic", "Asian")
_FILLER = (
    "Honestly it has been a mix of good days and hard ones, and I try to keep going.",
    "My family keeps me grounded, and I lean on my friends more than I used to.",
    "I spend a lot of time at work, but I make room for the people who matter.",
    "Things change slowly around here, and I have learned to be patient with that.",
    "I try to walk every evening and cook at home when I can.",
    "I think most people are doing their best, even when we disagree.",
)
_MARKUP_ANSWERS = (
    "```python\nprint('my life story')\n```",
    "<div class=\"answer\">I grew up in a small town.</div>",
    "## About Me\n| Year | Event |\n|---|---|\n| 1990 | born |",
)


class SimulatedPopulation:
    """Responder that imitates a population of interviewees and their critics."""

    def __init__(self, knobs: Knobs | None = None) -> None:
        self.knobs = knobs or Knobs()

    def __call__(self, prompt: str, params: GenerationParams) -> str:
        if _CANDIDATE_RE.search(prompt):
            return self.review(prompt)
        if prompt.endswith("Answer:") and "Reply with exactly one option" in prompt:
            return self.extract(prompt)
        if prompt.endswith("Weights:"):
            return self.weigh(prompt)
        if any(m in prompt for m in _STUDY_MARKERS) and prompt.rstrip().endswith(
            ("below.", "Player 2.", "?")
        ) and self._partner(prompt):
            return self.decide(prompt, params.seed)
        if prompt.endswith("Answer:"):
            return self.interview(prompt, params.seed)
        return " I'm not sure what you mean."

    # -- interview ---------------------------------------------------------

    def interview(self, prompt: str, seed: int) -> str:
        question = prompt.rsplit("Question: ", 1)[-1][: -len("\nAnswer:")]
        if _u("markup", prompt, seed) < self.knobs.markup_rate:
            return " " + _pick(_MARKUP_ANSWERS, "markup-kind", prompt, seed) + "\n\n"
        try:
            index = INTERVIEW_QUESTIONS.index(question)
        except ValueError:
            index = -1
        if index == 0:
            return " " + self._life_story(seed) + "\n\n"
        first = re.search(r"Answer: (.*?)\n\n", prompt, re.DOTALL)
        anchor = first.group(1) if first else prompt
        if index == 5:
            return " " + self._politics(anchor) + "\n\n"
        return " " + _pick(_FILLER, "filler", anchor, index) + " " + _pick(_FILLER, "filler2", anchor, index) + "\n\n"

    def _life_story(self, seed: int) -> str:
        k = self.knobs
        age = 18 + int(_u("age", seed) * 70)
        male = _u("gender", seed) < 0.5
        race = _pick(_RACES, "race", seed)
        edu = _pick(list(_EDU_PHRASES), "edu", seed)
        income = _pick(list(_INCOME_PHRASES), "income", seed)
        city = _pick(_CITIES, "city", seed)
        parts = [f"I grew up in {city}."]
        if _u("say-age", seed) < k.explicit_rate:
            parts.append(f"I am {age} years old.")
        if _u("say-gender", seed) < k.explicit_rate:
            parts.append(f"I'm a {'man' if male else 'woman'}.")
        if _u("say-race", seed) < k.explicit_rate:
            parts.append(f"I'm {race}.")
        if _u("say-edu", seed) < k.explicit_rate:
            parts.append(_EDU_PHRASES[edu])
        if _u("say-income", seed) < k.explicit_rate:
            parts.append(f"These days our household makes {_INCOME_PHRASES[income]} a year.")
        parts.append(_pick(_FILLER, "story", seed))
        return " ".join(parts)

    def _politics(self, anchor: str) -> str:
        r = _u("party", anchor)
        if r < 0.1:
            return "I'm an independent. I vote for the person, not the party."
        party = "Democrat" if r < 0.55 else "Republican"
        if _u("say-party", anchor) < 0.8:
            return f"I'm a proud {party}. I care about my community and I vote in every election."
        lean = "liberal" if party == "Democrat" else "conservative"
        return f"I don't like labels, but I lean {lean} on most issues."

    # -- critic ------------------------------------------------------------

    def review(self, prompt: str) -> str:
        candidate = _CANDIDATE_RE.search(prompt).group(1)
        if _MARKUP_RE.search(candidate):
            return "REJECT contains a code block or markup"
        ctx = _CONTEXT_RE.search(prompt)
        claimed = _LIFELONG_RE.search(candidate)
        if ctx and claimed:
            own = self._self_party(ctx.group(1))
            if own is not None and own != claimed.group(1):
                return f"REJECT party inconsistency: persona is a {own} but claims to be a {claimed.group(1)}"
        if "Question:" in candidate:
            return "REJECT not an answer: contains a new interview question"
        return "ACCEPT consistent first-person answer"

    # -- trait extraction --------------------------------------------------

    @staticmethod
    def _field(prompt: str, name: str) -> str:
        m = re.search(rf"^{name}: (.*)$", prompt, re.MULTILINE)
        return m.group(1).strip() if m else ""

    @staticmethod
    def _transcript(prompt: str) -> str:
        m = re.search(r"Transcript:\n<<<\n(.*?)\n>>>", prompt, re.DOTALL)
        return m.group(1) if m else ""

    def extract(self, prompt: str) -> str:
        trait = self._field(prompt, "Trait")
        labels = [s.strip() for s in self._field(prompt, "Options").split(";")]
        found = self._explicit(self._transcript(prompt), trait, labels)
        return found if found is not None else NO_EVIDENCE

    @staticmethod
    def _explicit(text: str, trait: str, labels: list[str]) -> str | None:
        hit: str | None = None
        if trait == "age_bracket":
            m = re.search(r"I am (\d+) years old", text)
            hit = age_bracket(int(m.group(1))) if m else None
        elif trait == "gender":
            m = re.search(r"I'm a (man|woman)\b", text)
            hit = {"man": "Male", "woman": "Female"}[m.group(1)] if m else None
        elif trait == "race":
            m = re.search(r"I'm (White|Black|Hispanic|Asian)\.", text)
            hit = m.group(1) if m else None
        elif trait == "education":
            hit = next((lab for lab, ph in _EDU_PHRASES.items() if ph in text), None)
        elif trait == "income_bracket":
            hit = next((lab for lab, ph in _INCOME_PHRASES.items() if f"makes {ph} a year" in text), None)
        elif trait == "party":
            m = re.search(r"I'm a proud (Democrat|Republican)", text)
            if m:
                hit = m.group(1)
            elif "I'm an independent" in text:
                hit = "Independent/Other"
        else:
            hit = next((lab for lab in labels if f"my {trait.replace('_', ' ')} is {lab}".lower() in text.lower()), None)
        return hit if hit in labels else None

    def weigh(self, prompt: str) -> str:
        trait = self._field(prompt, "Trait")
        text = self._transcript(prompt)
        block = prompt.rsplit("Options:\n", 1)[-1]
        labels = [ln.strip()[:-1] for ln in block.splitlines() if ln.strip().endswith(":") and ln.strip() != "Weights:"]
        lean = _LEAN_RE.search(text)
        lines = []
        for label in labels:
            w = 1 + int(_u("weight", text, trait, label) * 4)
            if trait == "party" and lean:
                favoured = "Democrat" if lean.group(1) == "liberal" else "Republican"
                w = 9 if label == favoured else 1
            lines.append(f"{label}: {min(w, MAX_WEIGHT)}")
        return "\n".join(lines)

    # -- game decisions ----------------------------------------------------

    @staticmethod
    def _self_party(text: str) -> str | None:
        m = _SELF_PARTY_RE.search(text)
        if m:
            return m.group(1)
        lean = _LEAN_RE.search(text)
        if lean:
            return "Democrat" if lean.group(1) == "liberal" else "Republican"
        return None

    @staticmethod
    def _partner(prompt: str) -> str | None:
        for rx in _PARTNER_RES:
            m = rx.search(prompt)
            if m:
                return "Democrat" if m.group(1) in ("Democrat", "Democratic") else "Republican"
        return None

    def decide(self, prompt: str, seed: int) -> str:
        k = self.knobs
        grounded = _GROUNDING_RE.search(prompt)
        # the persona's disposition ignores the grounding lines and the seed
        stripped = _GROUNDING_RE.sub("", prompt)
        study = _STUDY_START_RE.search(prompt)
        own = self._self_party(prompt[: study.start()] if study else prompt)
        partner = self._partner(prompt)
        whitt = "How much money do you want to send to" in prompt
        base = 2 + int(_u("base", stripped) * 4)
        bonus = k.copartisan_bonus
        if grounded:
            bonus += k.grounding_bonus
            if int(grounded.group(1)) >= 2019:
                bonus += k.year_bonus
        if whitt:
            bonus += k.framing_bonus
        tickets = "raffle tickets" in prompt
        unit = (lambda a: f"{a} tickets") if tickets else (lambda a: f"${a}")

        if own is not None and _u("noise", prompt, seed) < k.noise_rate:
            claimed = "Republican" if own == "Democrat" else "Democrat"
            amount = base + (bonus if partner == claimed else 0)
            return f" As a lifelong {claimed}, I'd send {unit(min(amount, 10))}."
        amount = base + (bonus if own is not None and partner == own else 0)
        phrase = _pick(("I would send {a}.", "I'll give {a}.", "I will send {a} and keep the rest."), "phrase", prompt, seed)
        return " " + phrase.format(a=unit(min(amount, 10)))
