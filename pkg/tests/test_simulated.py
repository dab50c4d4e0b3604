import re

from deepbind.core import Framing, GameSpec, GenerationParams, Method
from deepbind.games import TrialOptions, assemble_trial_prompt, build_persona_context
from deepbind.gateway import Gateway, critic_prompt
from deepbind.personas import generate_personas
from deepbind.simulated import Knobs, SimulatedPopulation, _u
from deepbind.survey import DEFAULT_SCHEMA, explicit_prompt, infer_prompt, survey_personas

from helpers import D, R, backstory, one_hot_profile, simulated

P = GenerationParams(seed=1)
SPEC = GameSpec.for_framing(Framing.WD, 2019)


def _amount(text):
    return int(re.search(r"\d+", text).group())


def _assemble(self_party, partner, grounding=True, framing=Framing.WD):
    prof = one_hot_profile("p", party=self_party.value)
    ctx = build_persona_context(backstory(answers=(f"I'm a proud {self_party.value}.",)), prof, Method.DEEPBIND)
    spec = GameSpec.for_framing(framing, 2019 if framing is Framing.WD else 2014)
    return assemble_trial_prompt(ctx, spec, partner, TrialOptions(grounding=grounding))


def _prompt(*args, **kw):
    return _assemble(*args, **kw)[0]


def test_responses_are_pure_functions_of_prompt_and_seed():
    sim = SimulatedPopulation()
    prompt = _prompt(D, D)
    assert sim(prompt, P) == sim(prompt, P)


def test_planted_bonuses_add_up():
    sim = SimulatedPopulation(Knobs(copartisan_bonus=1, grounding_bonus=2, framing_bonus=0, year_bonus=0, noise_rate=0))
    grounded, plain = _prompt(D, D), _prompt(D, D, grounding=False)
    assert sim(grounded, P) != sim(plain, P)
    co = _amount(sim(grounded, P))
    base = 2 + int(_u("base", plain) * 4)
    assert co == min(base + 3, 10)
    assert _amount(sim(plain, P)) == min(base + 1, 10)


def test_out_partisans_get_no_bonus():
    sim = SimulatedPopulation(Knobs(copartisan_bonus=5, noise_rate=0))
    amounts = [_amount(sim(_prompt(D, R), P.with_seed(s))) for s in range(5)]
    assert all(2 <= a <= 5 for a in amounts)


def test_noise_claims_the_other_party_and_the_critic_rejects_it():
    sim = SimulatedPopulation(Knobs(noise_rate=1.0))
    prompt, context = _assemble(R, D)
    reply = sim(prompt, P)
    assert "lifelong Democrat" in reply
    verdict = sim(critic_prompt(reply.strip(), "- rule", context=context), GenerationParams.critic())
    assert verdict.startswith("REJECT party")
    fine = sim(critic_prompt("I would send $3.", "- rule", context=context), GenerationParams.critic())
    assert fine.startswith("ACCEPT")


def test_critic_rejects_markup_and_new_questions():
    sim = SimulatedPopulation()
    assert sim(critic_prompt("```code```", "- r"), P).startswith("REJECT")
    assert sim(critic_prompt("fine.\nQuestion: next?", "- r"), P).startswith("REJECT")


def test_extractor_reads_stated_facts():
    sim = SimulatedPopulation()
    b = backstory(answers=("I am 70 years old. I'm a woman. I'm Black.", "I'm a proud Republican."))
    answers = {name: sim(explicit_prompt(b, DEFAULT_SCHEMA.get(name)), P) for name in DEFAULT_SCHEMA.names}
    assert answers["age_bracket"] == "65+"
    assert answers["gender"] == "Female"
    assert answers["race"] == "Black"
    assert answers["party"] == "Republican"
    assert answers["education"] == "NONE"


def test_weights_follow_political_lean():
    sim = SimulatedPopulation()
    b = backstory(answers=("I don't like labels, but I lean conservative on most issues.",))
    reply = sim(infer_prompt(b, DEFAULT_SCHEMA.get("party")), P)
    assert reply.splitlines() == ["Democrat: 1", "Republican: 9", "Independent/Other: 1"]


def test_simulated_personas_survive_the_full_survey():
    gw = Gateway(simulated(), 4)
    personas = generate_personas(gw, 10, 8)
    profiles = survey_personas(gw, personas, DEFAULT_SCHEMA)
    assert len(profiles) == 10
    tops = {p.top("party") for p in profiles}
    assert tops <= {"Democrat", "Republican", "Independent/Other"} and len(tops) >= 2


def test_unrecognised_prompts_get_a_shrug():
    assert SimulatedPopulation()("Hello there", P) == " I'm not sure what you mean."
