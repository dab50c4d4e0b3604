from pathlib import Path

import pytest

from deepbind.config import load_config, make_backend, parse_config
from deepbind.core import Framing, Game, Method
from deepbind.errors import ConfigError
from deepbind.gateway import HttpBackend, ScriptedBackend, prompt_key
from deepbind.simulated import TAG, Knobs

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def base(tmp_path, **study):
    (tmp_path / "id.csv").write_text("id,party,pool\n")
    return {"study": {"seed": 1, "rosters": {"ID": "id.csv"}, **study}}


def test_defaults(tmp_path):
    cfg = parse_config(base(tmp_path), tmp_path)
    assert cfg.backend.kind == "scripted" and cfg.backend.simulation == Knobs()
    assert cfg.study.personas == 20 and cfg.study.method is Method.DEEPBIND
    assert cfg.study.grounding and cfg.study.filtering and not cfg.study.ablation
    assert cfg.study.studies == (Framing.ID,)
    assert cfg.study.rosters[Framing.ID] == tmp_path / "id.csv"
    assert cfg.study.critic_temperature == 0.0
    assert not cfg.factors.counterfactual and cfg.factors.game is Game.DICTATOR
    assert cfg.output_dir == tmp_path / "out"


@pytest.mark.parametrize(
    "raw, field",
    [
        ({"study": {"rosters": {}}}, "seed"),
        ({"study": {"seed": -1}}, "seed"),
        ({"study": {"seed": "abc"}}, "seed"),
        ({"study": {"seed": 1, "studies": ["ID"]}}, "roster"),
        ({"study": {"seed": 1, "rosters": {"XX": "a.csv"}}}, "roster"),
        ({"study": {"seed": 1, "rosters": {"ID": "missing.csv"}}}, "roster"),
        ({"study": {"seed": 1, "colour": "red"}}, "study.colour"),
        ({"extra": {}, "study": {"seed": 1}}, "<root>.extra"),
        ({"backend": {"kind": "magic"}, "study": {"seed": 1}}, "backend.kind"),
        ({"backend": {"kind": "http"}, "study": {"seed": 1}}, "backend.url"),
        ({"backend": {"simulation": {"bogus": 1}}, "study": {"seed": 1}}, "backend.simulation"),
        ({"study": {"seed": 1, "critic_temperature": 0.7}}, "study.critic_temperature"),
        ({"study": {"seed": 1, "grounding": "yes"}}, "study.grounding"),
        ({"study": {"seed": 1}, "factors": {"game": "Poker"}}, "factors.game"),
        ({"study": {"seed": 1}, "factors": {"counterfactual": True}}, "roster"),
    ],
)
def test_config_errors_name_the_field(tmp_path, raw, field):
    with pytest.raises(ConfigError) as err:
        parse_config(raw, tmp_path)
    assert err.value.field == field


def test_example_config_loads():
    cfg = load_config(CONFIGS / "example.yaml")
    assert cfg.source == CONFIGS / "example.yaml"
    assert cfg.schema_path == CONFIGS / "schema.yaml"
    assert cfg.study.ablation and cfg.factors.counterfactual
    assert set(cfg.study.rosters) == set(Framing)
    assert isinstance(make_backend(cfg.backend), ScriptedBackend)
    assert make_backend(cfg.backend).tag == TAG


def test_http_config_builds_http_backend(monkeypatch):
    monkeypatch.setenv("DEEPBIND_API_TOKEN", "t")
    cfg = load_config(CONFIGS / "http.yaml")
    backend = make_backend(cfg.backend)
    assert isinstance(backend, HttpBackend) and backend.token == "t"


def test_fixture_backend(tmp_path):
    (tmp_path / "rec.json").write_text('{"%s": " hi"}' % prompt_key("x", 0))
    raw = base(tmp_path)
    raw["backend"] = {"fixture": "rec.json"}
    backend = make_backend(parse_config(raw, tmp_path).backend)
    assert backend.tag == "scripted:rec.json"


def test_overrides(tmp_path):
    cfg = parse_config(base(tmp_path), tmp_path)
    new = cfg.with_overrides(study__seed=9, study__grounding=None, output_dir=str(tmp_path / "x"))
    assert new.study.seed == 9 and new.study.grounding and new.output_dir == tmp_path / "x"


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("study: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
