"""Interview-style backstory generation with critic filtering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import Backstory, GenerationParams, QAPair, derive_seed, make_id
from .errors import BackstoryFailed, ExhaustedAttempts, ValidationError
from .gateway import (
    DEFAULT_MAX_ATTEMPTS,
    DIALOG_RUBRIC,
    Backend,
    Completion,
    Gateway,
    JudgeVerdict,
    judge,
    sample_until_accepted,
)

DEFAULT_PREAMBLE = "The following is an interview transcript."
ANSWER_STOP = "Question:"
ANSWER_MAX_TOKENS = 512

INTERVIEW_QUESTIONS = (
    "To start, I would like to begin with a big question: tell me the story of your life. "
    "Start from the beginning--from your childhood, to education, to family and relationships, "
    "and to any major life events you may have had.",
    "Some people tell us that they've reached a crossroads at some points in their life where "
    "multiple paths were available, and their choice then made a significant difference in defining "
    "who they are. What about you? Was there a moment like that for you, and if so, could you tell "
    "me the whole story about that from start to finish?",
    "Tell me about anyone else in your life we haven't discussed (like friends or romantic partners). "
    "Are there people outside of your family who are important to you?",
    "Now let's talk about your current neighborhood. Tell me all about the neighborhood and area in "
    "which you are living now.",
    "Tell me about any recent changes to your daily routine.",
    "How would you describe your political views?",
    "How have you been thinking about race in the U.S. recently?",
    "For you, what makes it easy or hard to stay healthy?",
    "Some people are excited about medical vaccination, and others, not so much. How about you?",
    "Some people say they struggle with depression, anxiety, or something else like that. "
    "How about for you?",
)


@dataclass(frozen=True)
class InterviewScript:
    questions: tuple[str, ...]
    preamble: str = DEFAULT_PREAMBLE

    def __post_init__(self) -> None:
        object.__setattr__(self, "questions", tuple(self.questions))
        if not self.questions:
            raise ValidationError("an interview needs at least one question")
        if any(not q.strip() for q in self.questions):
            raise ValidationError("interview questions must be non-empty")


def default_interview_questions() -> InterviewScript:
    return InterviewScript(INTERVIEW_QUESTIONS)


def render_block(question: str, answer: str) -> str:
    return f"Question: {question}\nAnswer: {answer}\n\n"


def render_transcript(preamble: str, qa_pairs: Sequence[QAPair]) -> str:
    """Preamble plus every Q/A block; ends with a blank line."""
    return preamble + "\n\n" + "".join(render_block(qa.question, qa.answer) for qa in qa_pairs)


def question_prompt(preamble: str, answered: Sequence[QAPair], question: str) -> str:
    return render_transcript(preamble, answered) + f"Question: {question}\nAnswer:"


def backstory_params(seed: int, temperature: float = 1.0) -> GenerationParams:
    return GenerationParams(
        temperature=temperature, max_tokens=ANSWER_MAX_TOKENS, stop_sequences=(ANSWER_STOP,), seed=seed
    )


@dataclass(frozen=True)
class InterviewResult:
    backstory: Backstory
    audits: tuple[tuple[JudgeVerdict, ...], ...]
    prompts: tuple[str, ...]


def run_interview(
    backend: Backend,
    script: InterviewScript,
    gen: GenerationParams,
    rubric: str = DIALOG_RUBRIC,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    *,
    persona_id: str,
    critic: Backend | None = None,
) -> InterviewResult:
    """Ask each question in turn, conditioning on every accepted answer so far.

    Returns the backstory together with the per-question critic audit and the
    exact prompts sent for the accepted answers.
    """
    critic = critic or backend
    answered: list[QAPair] = []
    attempts: list[int] = []
    audits: list[tuple[JudgeVerdict, ...]] = []
    prompts: list[str] = []
    for index, question in enumerate(script.questions, 1):
        prompt = question_prompt(script.preamble, answered, question)
        context = render_transcript(script.preamble, answered) + f"Question: {question}"

        def check(c: Completion, context: str = context) -> JudgeVerdict:
            if not c.text.strip():
                return JudgeVerdict(False, "empty answer")
            return judge(critic, c.text.strip(), rubric, context=context)

        try:
            result = sample_until_accepted(
                backend,
                prompt,
                gen.with_seed(derive_seed(gen.seed, "question", index)),
                rubric,
                max_attempts,
                check=check,
            )
        except ExhaustedAttempts as exc:
            raise BackstoryFailed(index, exc) from exc
        answered.append(QAPair(question, result.completion.text.strip()))
        attempts.append(result.attempts)
        audits.append(result.audit)
        prompts.append(prompt)
    tag = f"{backend.tag} | preamble: {script.preamble}"
    return InterviewResult(Backstory(persona_id, tuple(answered), tag, tuple(attempts)), tuple(audits), tuple(prompts))


def generate_backstory(
    backend: Backend,
    script: InterviewScript,
    gen: GenerationParams,
    rubric: str = DIALOG_RUBRIC,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    *,
    persona_id: str,
    critic: Backend | None = None,
) -> Backstory:
    return run_interview(
        backend, script, gen, rubric, max_attempts, persona_id=persona_id, critic=critic
    ).backstory


def generate_personas(
    gateway: Gateway,
    count: int,
    root_seed: int,
    script: InterviewScript | None = None,
    rubric: str = DIALOG_RUBRIC,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    temperature: float = 1.0,
    critic: Backend | None = None,
) -> list[Backstory]:
    """Generate ``count`` personas concurrently; output order follows index."""
    script = script or default_interview_questions()

    def one(index: int) -> Backstory:
        return generate_backstory(
            gateway,
            script,
            backstory_params(derive_seed(root_seed, "persona", index), temperature),
            rubric,
            max_attempts,
            persona_id=make_id(root_seed, "persona", index),
            critic=critic,
        )

    return gateway.map(one, range(count))
