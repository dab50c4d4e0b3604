import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepbind.core import (
    Backstory,
    Framing,
    Game,
    GameSpec,
    GenerationParams,
    HumanParticipant,
    Method,
    Party,
    QAPair,
    TraitProfile,
    TrialRecord,
    Unit,
    derive_seed,
    make_id,
    normalize_weights,
    validate_game_spec,
)
from deepbind.errors import SpecViolation, ValidationError

from helpers import D, R, backstory, trial


def test_party_other_is_an_involution():
    assert D.other is R and R.other is D
    assert D.other.other is D


def test_enums_accept_any_case():
    assert Game("dictator") is Game.DICTATOR
    assert Framing("wd") is Framing.WD
    assert Party("REPUBLICAN") is R
    with pytest.raises(ValueError):
        Party("Independent")


def test_framing_belongs_to_one_game():
    assert [f.game for f in Framing] == [Game.DICTATOR, Game.DICTATOR, Game.TRUST, Game.TRUST]


def test_derive_seed_is_stable_and_named():
    assert derive_seed(7, "persona", 0) == derive_seed(7, "persona", 0)
    assert derive_seed(7, "persona", 0) != derive_seed(7, "persona", 1)
    assert derive_seed(7, "persona", 0) != derive_seed(8, "persona", 0)
    assert 0 <= derive_seed(123, "x") < 2**63


def test_make_id_shape():
    ident = make_id(1, "trial", 3)
    assert len(ident) == 26
    assert set(ident) <= set("0123456789ABCDEFGHJKMNPQRSTVWXYZ")
    assert make_id(1, "trial", 3) == ident
    assert make_id(1, "trial", 4) != ident


@given(st.integers(0, 2**40), st.lists(st.text(max_size=5), max_size=3))
def test_make_id_always_26_crockford_chars(root, names):
    assert len(make_id(root, *names)) == 26


def test_qa_pair_rejects_empty_fields():
    with pytest.raises(ValidationError):
        QAPair("", "a")
    with pytest.raises(ValidationError):
        QAPair("q", "")


def test_backstory_needs_one_attempt_count_per_answer():
    qa = (QAPair("q1", "a1"), QAPair("q2", "a2"))
    with pytest.raises(ValidationError):
        Backstory("p", qa, "tag", (1,))
    with pytest.raises(ValidationError):
        Backstory("p", qa, "tag", (1, 0))


def test_backstory_round_trip():
    b = backstory(answers=("one", "two"))
    assert Backstory.from_dict(b.to_dict()) == b


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=6).filter(lambda w: sum(w) > 0))
def test_normalized_weights_form_a_distribution(weights):
    dist = normalize_weights([(f"c{i}", w) for i, w in enumerate(weights)])
    assert math.isclose(math.fsum(p for _, p in dist), 1.0, abs_tol=1e-9)
    assert all(0.0 <= p <= 1.0 for _, p in dist)


def test_normalize_rejects_zero_and_negative():
    with pytest.raises(ValidationError):
        normalize_weights({"a": 0, "b": 0})
    with pytest.raises(ValidationError):
        normalize_weights({"a": 2, "b": -1})


def test_trait_profile_validation():
    with pytest.raises(ValidationError, match="sums to"):
        TraitProfile("p", {"gender": (("Male", 0.5), ("Female", 0.4))})
    with pytest.raises(ValidationError, match="repeats"):
        TraitProfile("p", {"gender": (("Male", 0.5), ("Male", 0.5))})
    with pytest.raises(ValidationError, match="outside"):
        TraitProfile("p", {"gender": (("Male", 1.5), ("Female", -0.5))})


def test_trait_profile_queries():
    prof = TraitProfile.from_weights("p", {"party": {"Democrat": 2, "Republican": 2, "Independent/Other": 1}})
    assert prof.prob("party", "Democrat") == pytest.approx(0.4)
    assert prof.prob("party", "Unknown") == 0.0
    assert prof.top("party") == "Democrat"  # tie goes to the earlier label
    assert not prof.is_one_hot("party")
    assert TraitProfile.from_dict(prof.to_dict()) == prof


def test_human_party_must_match_trait():
    with pytest.raises(ValidationError):
        HumanParticipant("h", {"party": "Democrat"}, R, "MTurk")
    h = HumanParticipant("h", {"party": "Democrat"}, "Democrat", "MTurk")
    assert HumanParticipant.from_dict(h.to_dict()) == h


@pytest.mark.parametrize("framing", list(Framing))
def test_canonical_specs_are_valid(framing):
    spec = GameSpec.for_framing(framing, 2019)
    validate_game_spec(spec)
    assert spec.endowment == 10
    assert spec.multiplier == (3 if framing.game is Game.TRUST else 1)
    assert (spec.unit is Unit.RAFFLE_TICKETS) == (framing is Framing.CT)


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(game=Game.TRUST, framing=Framing.ID, year=2014), "framing"),
        (dict(game=Game.TRUST, framing=Framing.CT, year=2015, multiplier=1, unit=Unit.RAFFLE_TICKETS), "multiplier"),
        (dict(game=Game.DICTATOR, framing=Framing.ID, year=2014, multiplier=3), "multiplier"),
        (dict(game=Game.TRUST, framing=Framing.CT, year=2015, multiplier=3), "unit"),
        (dict(game=Game.DICTATOR, framing=Framing.ID, year=2014, endowment=0), "endowment"),
        (dict(game=Game.DICTATOR, framing=Framing.ID, year=-3), "year"),
    ],
)
def test_game_spec_violations_name_the_field(kwargs, field):
    with pytest.raises(SpecViolation) as err:
        validate_game_spec(GameSpec(**kwargs))
    assert err.value.field == field


def test_trial_record_bounds_and_round_trip():
    t = trial(D, D, 7, participant_id="h1")
    assert t.same_party
    assert TrialRecord.from_dict(t.to_dict()) == t
    with pytest.raises(ValidationError):
        trial(D, R, 11)
    with pytest.raises(ValidationError):
        TrialRecord(**{**t.__dict__, "filter_audit": ()})


def test_generation_params():
    critic = GenerationParams.critic(seed=5)
    assert critic.temperature == 0.0 and critic.seed == 5
    assert GenerationParams.from_dict(critic.to_dict()) == critic
    assert critic.with_seed(9).seed == 9
    with pytest.raises(ValidationError):
        GenerationParams(temperature=-1)
    with pytest.raises(ValidationError):
        GenerationParams(max_tokens=0)


names = st.text(st.characters(min_codepoint=32, max_codepoint=0x2FF), min_size=1, max_size=12).filter(str.strip)


@given(st.lists(st.tuples(names, names), min_size=1, max_size=4), st.integers(1, 9))
def test_backstory_round_trip_property(pairs, attempts):
    b = Backstory("p", tuple(QAPair(q, a) for q, a in pairs), "tag", (attempts,) * len(pairs))
    assert Backstory.from_dict(b.to_dict()) == b


@given(st.dictionaries(names, st.lists(st.floats(0.01, 10), min_size=1, max_size=4), min_size=1, max_size=4))
def test_trait_profile_round_trip_and_normalization(raw):
    weights = {trait: {f"c{i}": w for i, w in enumerate(ws)} for trait, ws in raw.items()}
    prof = TraitProfile.from_weights("p", weights)
    for dist in prof.traits.values():
        assert math.isclose(math.fsum(p for _, p in dist), 1.0, abs_tol=1e-9)
    assert TraitProfile.from_dict(prof.to_dict()) == prof


@given(
    st.sampled_from([D, R]),
    st.sampled_from([D, R]),
    st.integers(0, 10),
    st.sampled_from(list(Framing)),
    st.integers(0, 2**40),
    st.sampled_from(list(Method)),
)
def test_trial_record_round_trip_property(self_party, partner, amount, framing, seed, method):
    t = trial(self_party, partner, amount, framing)
    t = TrialRecord(**{**t.__dict__, "seed": seed, "method": method})
    assert TrialRecord.from_dict(t.to_dict()) == t


@given(st.floats(0, 2), st.integers(1, 512), st.lists(names, max_size=3), st.integers(0, 2**40))
def test_generation_params_round_trip(temp, tokens, stops, seed):
    p = GenerationParams(temp, tokens, tuple(stops), seed)
    assert GenerationParams.from_dict(p.to_dict()) == p


@given(st.sampled_from([D, R]), st.text("abc", min_size=1, max_size=5))
def test_human_round_trip_property(party, pool):
    h = HumanParticipant("h", {"party": party.value, "gender": "Male"}, party, pool)
    assert HumanParticipant.from_dict(h.to_dict()) == h
