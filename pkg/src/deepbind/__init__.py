"""Persona-bound language-model simulations of partisan economic games."""

from .analysis import DeltaSummary, FactorialCell, RegressionFit, delta_table, factorial_main_effect, fit_ols
from .core import (
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
)
from .counterfactual import FactorialPlan, enumerate_conditions, run_factorial
from .games import build_persona_context, parse_allocation, render_study_prompt, run_trial
from .gateway import Gateway, HttpBackend, ScriptedBackend, judge, sample_until_accepted
from .matching import build_weight_matrix, optimal_assignment
from .personas import generate_backstory
from .survey import survey_persona

__version__ = "0.1.0"

__all__ = [
    "Backstory",
    "DeltaSummary",
    "FactorialCell",
    "FactorialPlan",
    "Framing",
    "Game",
    "GameSpec",
    "Gateway",
    "GenerationParams",
    "HttpBackend",
    "HumanParticipant",
    "Method",
    "Party",
    "QAPair",
    "RegressionFit",
    "ScriptedBackend",
    "TraitProfile",
    "TrialRecord",
    "build_persona_context",
    "build_weight_matrix",
    "delta_table",
    "enumerate_conditions",
    "factorial_main_effect",
    "fit_ols",
    "generate_backstory",
    "judge",
    "optimal_assignment",
    "parse_allocation",
    "render_study_prompt",
    "run_factorial",
    "run_trial",
    "sample_until_accepted",
    "survey_persona",
]
