import re

import pytest

from deepbind.core import Framing, Game, Party
from deepbind.counterfactual import (
    FactorialPlan,
    build_tasks,
    cells_csv,
    cells_from_trials,
    enumerate_conditions,
    factorial_markdown,
    load_plan,
    main_effects,
    read_cells_csv,
    run_factorial,
)
from deepbind.errors import CellError, IncompleteDesign, ValidationError
from deepbind.games import MatchedParticipant, TrialOptions
from deepbind.gateway import Gateway, ScriptedBackend

from helpers import D, R, backstory, human, one_hot_profile, simulated, simulated_participants, trial

PLAN = FactorialPlan.for_game(Game.DICTATOR)


def participant(hid, party, pool):
    prof = one_hot_profile(f"persona-{hid}", party=party.value)
    return MatchedParticipant(human(hid, party, pool), backstory(f"persona-{hid}", (f"I am {hid}.",)), prof)


def roster(plan=PLAN, per_pool=2):
    return {
        pool: [participant(f"{pool}{i}", (D, R)[i % 2], pool) for i in range(per_pool)]
        for pool in plan.pools
    }


def constant_backend(amount):
    return ScriptedBackend(lambda p, g: "ACCEPT" if p.endswith("Verdict:") else f" I would send ${amount}.")


def copartisan_backend(base, bonus):
    """Sends base, plus bonus when the partner shares the persona's party."""

    def respond(prompt, params):
        if prompt.endswith("Verdict:"):
            return "ACCEPT"
        own = re.search(r"party: (Democrat|Republican)", prompt.split("Question:")[0], re.IGNORECASE)
        if own is None:
            own = re.search(r"A: (Democrat|Republican)", prompt)
        partner = re.search(r"(Democrat|Republican)", prompt.split("Question:", 1)[1]).group(1)
        return f" ${base + (bonus if own.group(1) == partner else 0)}"

    return respond


def test_plan_for_each_game():
    assert PLAN.framings == (Framing.ID, Framing.WD)
    assert PLAN.years == (2014, 2019)
    assert PLAN.pools == ("MTurk", "Dynata")
    trust = FactorialPlan.for_game("trust")
    assert trust.framings == (Framing.CT, Framing.WT) and trust.years == (2015, 2019)
    assert PLAN.within_factors == ("SameP", "Year", "Framing")
    assert PLAN.between_factors == ("SelfP", "Pool")


def test_plan_validation():
    with pytest.raises(ValidationError):
        FactorialPlan(Game.DICTATOR, ("a", "a"), (Framing.ID, Framing.WD), (2014, 2019))
    with pytest.raises(ValidationError):
        FactorialPlan(Game.DICTATOR, ("a", "b"), (Framing.ID, Framing.CT), (2014, 2019))
    with pytest.raises(ValidationError):
        FactorialPlan(Game.DICTATOR, ("a", "b", "c"), (Framing.ID, Framing.WD), (2014, 2019))


def test_plan_round_trip_and_file(tmp_path):
    assert FactorialPlan.from_dict(PLAN.to_dict()) == PLAN
    path = tmp_path / "plan.yaml"
    path.write_text("game: Dictator\npools: [A, B]\n")
    plan = load_plan(path)
    assert plan.pools == ("A", "B") and plan.years == PLAN.years


def test_eight_cells_with_two_originals():
    cells = enumerate_conditions(PLAN, roster())
    assert len(cells) == 8
    assert len({c.key() for c in cells}) == 8
    originals = [c.coords for c in cells if c.original]
    assert originals == [("MTurk", "ID", 2014), ("Dynata", "WD", 2019)]
    assert [c.pool for c in cells] == [0] * 4 + [1] * 4
    for c in cells:
        assert len(c.conditions) == 4
        assert {cond.same_p for cond in c.conditions} == {0, 1}


def test_each_participant_plays_eight_trials_in_own_pool():
    tasks = build_tasks(PLAN, roster(), TrialOptions(), 7)
    assert len(tasks) == 8 * 4
    by_participant = {}
    for cell, task in tasks:
        by_participant.setdefault(task.participant_id, []).append((cell, task))
        assert task.pool == cell.pool_label
        assert task.spec.framing is cell.framing_id and task.spec.year == cell.year_value
    for pid, items in by_participant.items():
        assert len(items) == 8
        combos = {(t.partner_party == t.self_party, t.spec.year, t.spec.framing) for _, t in items}
        assert len(combos) == 8
        assert len({t.pool for _, t in items}) == 1
        assert len({t.self_party for _, t in items}) == 1
        # SameP is the outermost loop, framing the innermost
        assert [t.partner_party == t.self_party for _, t in items] == [True] * 4 + [False] * 4
    assert len({t.trial_id for _, t in tasks}) == len(tasks)
    assert len({t.options.seed for _, t in tasks}) == len(tasks)


def test_build_tasks_errors():
    with pytest.raises(IncompleteDesign):
        build_tasks(PLAN, {"MTurk": roster()["MTurk"]}, TrialOptions(), 1)
    wrong = roster()
    wrong["MTurk"] = wrong["Dynata"]
    with pytest.raises(ValidationError):
        build_tasks(PLAN, wrong, TrialOptions(), 1)


def test_constant_responses_give_zero_gaps():
    result = run_factorial(PLAN, roster(), Gateway(constant_backend(5), 4), root_seed=3)
    assert len(result.trials) == 32
    assert all(c.avg_delta == 0.0 for c in result.cells)
    assert result.main_effects() == {"pool": 0.0, "framing": 0.0, "year": 0.0}


def test_planted_copartisan_bonus_appears_in_every_cell():
    backend = ScriptedBackend(copartisan_backend(3, 2))
    result = run_factorial(PLAN, roster(), Gateway(backend, 4), TrialOptions(), root_seed=3, method="QA")
    for c in result.cells:
        assert c.avg_delta == pytest.approx(2.0)
        assert c.summary.dem_delta == pytest.approx(2.0) and c.summary.rep_delta == pytest.approx(2.0)
    assert all(v == pytest.approx(0.0) for v in result.main_effects().values())


def test_replay_is_identical_and_concurrency_free():
    a = run_factorial(PLAN, roster(), Gateway(constant_backend(4), 1), root_seed=11)
    b = run_factorial(PLAN, roster(), Gateway(constant_backend(4), 8), root_seed=11)
    assert a == b
    c = run_factorial(PLAN, roster(), Gateway(constant_backend(4), 1), root_seed=12)
    assert {t.trial_id for t in a.trials}.isdisjoint({t.trial_id for t in c.trials})


def test_pool_and_party_never_change():
    rost = roster()
    result = run_factorial(PLAN, rost, Gateway(constant_backend(4), 4), root_seed=1)
    home = {p.human.id: (p.human.pool, p.human.party) for ps in rost.values() for p in ps}
    for t in result.trials:
        assert (t.pool, t.self_party) == home[t.participant_id]


def test_engine_failures_carry_cell_coordinates():
    def respond(prompt, params):
        if prompt.endswith("Verdict:"):
            return "ACCEPT"
        return " nothing" if "Me: 2019" in prompt and "How much money" in prompt else " $3"

    with pytest.raises(CellError) as err:
        run_factorial(PLAN, roster(), Gateway(ScriptedBackend(respond), 1), TrialOptions(filtering=False), 1)
    assert err.value.cell[1:] == ("WD", 2019)


def test_cells_from_trials_validates_coverage():
    result = run_factorial(PLAN, roster(), Gateway(constant_backend(4), 4), root_seed=1)
    trials = list(result.trials)
    with pytest.raises(IncompleteDesign):
        cells_from_trials(PLAN, [t for t in trials if t.game_spec.year != 2019 or t.pool != "MTurk"])
    with pytest.raises(ValidationError):
        cells_from_trials(PLAN, trials + [trial(D, D, 3, Framing.ID, pool="Elsewhere")])


def test_reports_round_trip():
    backend = ScriptedBackend(copartisan_backend(3, 2))
    result = run_factorial(PLAN, roster(), Gateway(backend, 4), root_seed=3, method="QA")
    text = cells_csv(PLAN, result.cells)
    assert text.splitlines()[0] == "pool,framing,year,original,dd,dr,rr,rd,dem_delta,rep_delta,avg_delta"
    back = read_cells_csv(text, PLAN)
    assert [c.avg_delta for c in back] == [c.avg_delta for c in result.cells]
    assert [c.original for c in back] == [c.original for c in result.cells]
    assert main_effects(back) == result.main_effects()
    md = factorial_markdown(PLAN, result.cells)
    assert md.startswith("## Dictator game\n")
    assert "- year (2014 -> 2019): +0.00" in md
    assert md.count("| *") == 2


def test_replaying_trials_reproduces_the_cells():
    backend = simulated()
    participants = {
        pool: simulated_participants(backend, 10, 3 + i, pool, prefix=f"{pool}-")
        for i, pool in enumerate(PLAN.pools)
    }
    result = run_factorial(PLAN, participants, Gateway(backend, 4), root_seed=5)
    assert tuple(cells_from_trials(PLAN, list(reversed(result.trials)))) == result.cells
    for c in result.cells:
        assert min(c.summary.counts) > 0
