"""Pipeline configuration: one YAML file with backend, schema, study, factors, output."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .core import Framing, Game, Method
from .errors import ConfigError
from .gateway import DEFAULT_MAX_ATTEMPTS, Backend, HttpBackend, ScriptedBackend
from .simulated import TAG as SIMULATED_TAG
from .simulated import Knobs, SimulatedPopulation

SECTIONS = ("backend", "schema", "study", "factors", "output")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"  # scripted | http
    url: str | None = None
    model: str | None = None
    auth_env: str | None = None
    fixture: Path | None = None
    simulation: Knobs = field(default_factory=Knobs)
    concurrency: int = 4
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    timeout: float = 60.0


@dataclass(frozen=True)
class StudyConfig:
    seed: int
    personas: int = 20
    method: Method = Method.DEEPBIND
    grounding: bool = True
    filtering: bool = True
    ablation: bool = False
    studies: tuple[Framing, ...] = ()
    rosters: Mapping[Framing, Path] = field(default_factory=dict)
    temperature: float = 1.0
    critic_temperature: float = 0.0
    max_tokens: int = 64


@dataclass(frozen=True)
class FactorsConfig:
    counterfactual: bool = False
    game: Game = Game.DICTATOR
    plan: Path | None = None


@dataclass(frozen=True)
class PipelineConfig:
    backend: BackendConfig
    study: StudyConfig
    factors: FactorsConfig
    output_dir: Path
    schema_path: Path | None = None
    source: Path | None = None

    def with_overrides(self, **kw: Any) -> "PipelineConfig":
        """Apply flag overrides given as ``section__field=value``; None values are skipped."""
        cfg = self
        for key, value in kw.items():
            if value is None:
                continue
            if key == "output_dir":
                cfg = replace(cfg, output_dir=Path(value))
                continue
            section, _, name = key.partition("__")
            part = getattr(cfg, section)
            cfg = replace(cfg, **{section: replace(part, **{name: value})})
        return cfg


def _section(raw: Mapping[str, Any], name: str) -> dict[str, Any]:
    value = raw.get(name) or {}
    if not isinstance(value, Mapping):
        raise ConfigError(name, "must be a mapping")
    return dict(value)


def _unknown(section: str, data: Mapping[str, Any], allowed: set[str]) -> None:
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"{section}.{extra[0]}", "unknown key")


def _path(base: Path, value: Any, field_name: str) -> Path:
    p = Path(str(value))
    p = p if p.is_absolute() else base / p
    if not p.exists():
        raise ConfigError(field_name, f"file not found: {p}")
    return p


def _int(value: Any, field_name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(field_name, f"must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(field_name, f"must be >= {minimum}, got {value}")
    return value


def _bool(value: Any, field_name: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(field_name, f"must be true or false, got {value!r}")
    return value


def parse_config(raw: Mapping[str, Any], base_dir: Path) -> PipelineConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError("<root>", "config must be a mapping")
    _unknown("<root>", raw, set(SECTIONS))

    b = _section(raw, "backend")
    _unknown("backend", b, {f.name for f in fields(BackendConfig)})
    kind = b.get("kind", "scripted")
    if kind not in ("scripted", "http"):
        raise ConfigError("backend.kind", "must be 'scripted' or 'http'")
    if kind == "http" and not (b.get("url") and b.get("model")):
        raise ConfigError("backend.url", "an http backend needs url and model")
    knobs = b.get("simulation") or {}
    try:
        knobs = Knobs(**knobs)
    except TypeError as exc:
        raise ConfigError("backend.simulation", str(exc)) from None
    backend = BackendConfig(
        kind=kind,
        url=b.get("url"),
        model=b.get("model"),
        auth_env=b.get("auth_env"),
        fixture=_path(base_dir, b["fixture"], "backend.fixture") if b.get("fixture") else None,
        simulation=knobs,
        concurrency=_int(b.get("concurrency", 4), "backend.concurrency", 1),
        max_attempts=_int(b.get("max_attempts", DEFAULT_MAX_ATTEMPTS), "backend.max_attempts", 1),
        timeout=float(b.get("timeout", 60.0)),
    )

    sc = _section(raw, "schema")
    _unknown("schema", sc, {"path"})
    schema_path = _path(base_dir, sc["path"], "schema") if sc.get("path") else None

    s = _section(raw, "study")
    _unknown("study", s, {f.name for f in fields(StudyConfig)})
    if "seed" not in s:
        raise ConfigError("seed", "an explicit root seed is required")
    seed = _int(s["seed"], "seed", 0)
    try:
        method = Method(s.get("method", Method.DEEPBIND.value))
        studies = tuple(Framing(x) for x in s.get("studies") or ())
    except ValueError as exc:
        raise ConfigError("study", str(exc)) from None
    raw_rosters = s.get("rosters") or {}
    if not isinstance(raw_rosters, Mapping):
        raise ConfigError("roster", "rosters must map study ids to CSV paths")
    rosters: dict[Framing, Path] = {}
    for key, value in raw_rosters.items():
        try:
            framing = Framing(key)
        except ValueError:
            raise ConfigError("roster", f"unknown study id {key!r}") from None
        rosters[framing] = _path(base_dir, value, "roster")
    if not studies:
        studies = tuple(rosters)
    for framing in studies:
        if framing not in rosters:
            raise ConfigError("roster", f"no roster for study {framing.value}")
    critic_temperature = float(s.get("critic_temperature", 0.0))
    if critic_temperature != 0.0:
        raise ConfigError("study.critic_temperature", "critic decoding is greedy (0.0)")
    study = StudyConfig(
        seed=seed,
        personas=_int(s.get("personas", 20), "study.personas", 1),
        method=method,
        grounding=_bool(s.get("grounding", True), "study.grounding"),
        filtering=_bool(s.get("filtering", True), "study.filtering"),
        ablation=_bool(s.get("ablation", False), "study.ablation"),
        studies=studies,
        rosters=rosters,
        temperature=float(s.get("temperature", 1.0)),
        critic_temperature=critic_temperature,
        max_tokens=_int(s.get("max_tokens", 64), "study.max_tokens", 1),
    )

    f = _section(raw, "factors")
    _unknown("factors", f, {"counterfactual", "game", "plan"})
    try:
        game = Game(f.get("game", Game.DICTATOR.value))
    except ValueError:
        raise ConfigError("factors.game", f"unknown game {f.get('game')!r}") from None
    plan = _path(base_dir, f["plan"], "factors.plan") if f.get("plan") else None
    factors = FactorsConfig(_bool(f.get("counterfactual", False), "factors.counterfactual"), game, plan)
    if factors.counterfactual:
        needed = [fr for fr in Framing if fr.game is game]
        missing = [fr.value for fr in needed if fr not in rosters]
        if missing:
            raise ConfigError("roster", f"counterfactual {game.value} design needs rosters for {missing}")

    o = _section(raw, "output")
    _unknown("output", o, {"dir"})
    out = Path(str(o.get("dir", "out")))
    out = (out if out.is_absolute() else base_dir / out).resolve()
    return PipelineConfig(backend, study, factors, out, schema_path)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return replace(parse_config(raw, path.parent), source=path)


def make_backend(cfg: BackendConfig) -> Backend:
    if cfg.kind == "http":
        return HttpBackend.from_env(cfg.url, cfg.model, cfg.auth_env, timeout=cfg.timeout)
    responder = SimulatedPopulation(cfg.simulation)
    if cfg.fixture is not None:
        return ScriptedBackend.from_fixture(cfg.fixture, responder)
    return ScriptedBackend(responder, tag=SIMULATED_TAG)
