"""Partisan gap summaries, factorial main effects, and OLS interaction models."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betainc

from .core import Framing, Party, TrialRecord
from .errors import EmptyCell, IncompleteDesign, InsufficientData, RankDeficient, UnknownTerm, ValidationError

CELLS = (
    (Party.DEMOCRAT, Party.DEMOCRAT),
    (Party.DEMOCRAT, Party.REPUBLICAN),
    (Party.REPUBLICAN, Party.REPUBLICAN),
    (Party.REPUBLICAN, Party.DEMOCRAT),
)
_CELL_NAMES = {CELLS[0]: "Dem->Dem", CELLS[1]: "Dem->Rep", CELLS[2]: "Rep->Rep", CELLS[3]: "Rep->Dem"}

# -- partisan gaps ---------------------------------------------------------


@dataclass(frozen=True)
class DeltaSummary:
    dd: float
    dr: float
    rr: float
    rd: float
    dem_delta: float
    rep_delta: float
    mean_delta: float
    counts: tuple[int, int, int, int] = (0, 0, 0, 0)  # dd, dr, rr, rd

    @classmethod
    def from_means(cls, dd: float, dr: float, rr: float, rd: float, counts=(0, 0, 0, 0)) -> "DeltaSummary":
        dem, rep = dd - dr, rr - rd
        return cls(dd, dr, rr, rd, dem, rep, (dem + rep) / 2, tuple(counts))

    def to_dict(self) -> dict[str, float | int]:
        return {
            "dd": self.dd,
            "dr": self.dr,
            "rr": self.rr,
            "rd": self.rd,
            "dem_delta": self.dem_delta,
            "rep_delta": self.rep_delta,
            "mean_delta": self.mean_delta,
            "n_dd": self.counts[0],
            "n_dr": self.counts[1],
            "n_rr": self.counts[2],
            "n_rd": self.counts[3],
        }


def summarize_cells(cells: Mapping[tuple[Party, Party], Sequence[float]]) -> DeltaSummary:
    means, counts = [], []
    for key in CELLS:
        values = cells.get(key, ())
        if not values:
            raise EmptyCell(_CELL_NAMES[key])
        means.append(math.fsum(values) / len(values))
        counts.append(len(values))
    return DeltaSummary.from_means(*means, counts=tuple(counts))


def delta_table(trials: Iterable[TrialRecord]) -> DeltaSummary:
    """Cell means by (sender party, partner party) and the partisan gaps."""
    cells: dict[tuple[Party, Party], list[float]] = defaultdict(list)
    for t in trials:
        cells[(t.self_party, t.partner_party)].append(float(t.amount))
    return summarize_cells(cells)


# -- factorial main effects ------------------------------------------------

FACTORS = ("year", "framing", "pool")


@dataclass(frozen=True)
class FactorialCell:
    """One (year, framing, pool) combination of the 2x2x2 design.

    Indicators are 1 for the later (Whitt) study's level.
    """

    year: int
    framing: int
    pool: int
    avg_delta: float
    summary: DeltaSummary | None = None
    original: bool = False

    def __post_init__(self) -> None:
        for name in FACTORS:
            if getattr(self, name) not in (0, 1):
                raise ValidationError(f"{name} indicator must be 0 or 1")

    def key(self) -> tuple[int, int, int]:
        return (self.year, self.framing, self.pool)


def factorial_main_effect(cells: Sequence[FactorialCell], factor: str) -> float:
    """Mean avg_delta at factor level 1 minus mean at level 0."""
    if factor not in FACTORS:
        raise ValueError(f"factor must be one of {FACTORS}")
    keys = [c.key() for c in cells]
    full = {(y, f, p) for y in (0, 1) for f in (0, 1) for p in (0, 1)}
    if len(cells) != 8 or set(keys) != full:
        raise IncompleteDesign(f"need each of the 8 combinations exactly once, got {sorted(keys)}")
    hi = [c.avg_delta for c in cells if getattr(c, factor) == 1]
    lo = [c.avg_delta for c in cells if getattr(c, factor) == 0]
    return math.fsum(hi) / 4 - math.fsum(lo) / 4


# -- regression design -----------------------------------------------------

HUMAN = "human"
COUNTERFACTUAL = "counterfactual"

HUMAN_TERMS = ("Intercept", "SameP", "SelfP", "Study", "SameP:SelfP", "SameP:Study")
COUNTERFACTUAL_TERMS = (
    "Intercept",
    "SameP",
    "SelfP",
    "Year",
    "Framing",
    "Pool",
    "SameP:SelfP",
    "SameP:Year",
    "SameP:Framing",
    "SameP:Pool",
)
WITHIN_FACTORS = frozenset({"SameP", "Year", "Framing"})


@dataclass(frozen=True)
class DesignRow:
    response: float
    same_p: int
    self_p: int
    participant_id: str
    year: int | None = None
    framing: int | None = None
    pool: int | None = None
    study: int | None = None

    def __post_init__(self) -> None:
        cf = [self.year, self.framing, self.pool]
        has_cf = all(v is not None for v in cf)
        if any(v is not None for v in cf) and not has_cf:
            raise ValidationError("year, framing and pool come together")
        if has_cf == (self.study is not None):
            raise ValidationError("a row is either human (study) or counterfactual (year/framing/pool)")
        for v in (self.same_p, self.self_p, *cf, self.study):
            if v is not None and v not in (0, 1):
                raise ValidationError("indicators must be 0 or 1")

    @property
    def formula(self) -> str:
        return HUMAN if self.study is not None else COUNTERFACTUAL


def design_matrix(rows: Sequence[DesignRow], formula: str) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    if formula == HUMAN:
        names = HUMAN_TERMS
        cols = [
            (1, r.same_p, r.self_p, r.study, r.same_p * r.self_p, r.same_p * r.study)
            for r in rows
            if r.formula == HUMAN
        ]
    elif formula == COUNTERFACTUAL:
        names = COUNTERFACTUAL_TERMS
        cols = [
            (
                1,
                r.same_p,
                r.self_p,
                r.year,
                r.framing,
                r.pool,
                r.same_p * r.self_p,
                r.same_p * r.year,
                r.same_p * r.framing,
                r.same_p * r.pool,
            )
            for r in rows
            if r.formula == COUNTERFACTUAL
        ]
    else:
        raise ValueError(f"formula must be {HUMAN!r} or {COUNTERFACTUAL!r}")
    if len(cols) != len(rows):
        raise ValidationError(f"rows mix designs; all must be {formula}")
    X = np.array(cols, dtype=float).reshape(len(rows), len(names))
    y = np.array([r.response for r in rows], dtype=float)
    return X, y, names


# -- t distribution --------------------------------------------------------


def t_two_sided(t: float, dof: float) -> float:
    """P(|T| >= |t|) via the regularized incomplete beta function."""
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    t2 = t * t
    inside = float(betainc(0.5, dof / 2.0, t2 / (dof + t2)))  # P(|T| < |t|)
    if inside < 0.5:
        # small |t|: the complement keeps full precision
        return 1.0 - inside
    return float(betainc(dof / 2.0, 0.5, dof / (dof + t2)))


def t_upper(t: float, dof: float) -> float:
    """P(T >= t)."""
    if math.isnan(t):
        return math.nan
    half = t_two_sided(t, dof) / 2.0
    return half if t >= 0 else 1.0 - half


# -- OLS -------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionFit:
    terms: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray  # two-sided
    n: int
    dof: int
    residual_variance: float
    residuals: np.ndarray
    formula: str = ""
    se_kind: str = "classical"

    def index(self, term: str) -> int:
        try:
            return self.terms.index(term)
        except ValueError:
            raise UnknownTerm(f"{term!r} not in {self.terms}") from None

    def coef(self, term: str) -> float:
        return float(self.coefficients[self.index(term)])

    def default_sidedness(self, term: str) -> str:
        """One-sided only for terms built purely from within-participant factors."""
        if self.formula == COUNTERFACTUAL and term != "Intercept" and set(term.split(":")) <= WITHIN_FACTORS:
            return "one_sided"
        return "two_sided"


def fit_ols(rows: Sequence[DesignRow], formula: str) -> RegressionFit:
    """Least squares via reduced QR, with classical homoskedastic errors."""
    X, y, names = design_matrix(rows, formula)
    n, k = X.shape
    if n <= k:
        raise InsufficientData(f"{n} rows for {k} terms")
    return _fit(X, y, names, formula)


def _fit(X: np.ndarray, y: np.ndarray, names: Sequence[str], formula: str = "") -> RegressionFit:
    n, k = X.shape
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    scale = max(float(diag.max()), 1.0) if diag.size else 1.0
    if np.any(diag <= 1e-10 * scale):
        dropped = [names[i] for i in np.flatnonzero(diag <= 1e-10 * scale)]
        raise RankDeficient(f"design is not full rank (check {', '.join(dropped)})")
    beta = solve_triangular(R, Q.T @ y)
    resid = y - X @ beta
    dof = n - k
    sigma2 = float(resid @ resid) / dof
    r_inv = solve_triangular(R, np.eye(k))
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.where(beta == 0, np.nan, np.sign(beta) * np.inf))
    p = np.array([t_two_sided(float(ti), dof) for ti in t])
    return RegressionFit(tuple(names), beta, se, t, p, n, dof, sigma2, resid, formula)


def significance(fit: RegressionFit, term: str, sidedness: str = "two_sided") -> float:
    """p-value for ``term``; one-sided tests the positive direction."""
    t = float(fit.t_stats[fit.index(term)])
    if sidedness == "two_sided":
        return t_two_sided(t, fit.dof)
    if sidedness == "one_sided":
        return t_upper(t, fit.dof)
    raise ValueError("sidedness must be 'one_sided' or 'two_sided'")


def stars(p: float) -> str:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


# -- aggregation -----------------------------------------------------------


@dataclass(frozen=True)
class Coding:
    """How trial conditions map onto 0/1 regression indicators.

    Level 1 is always the later (Whitt) study: framings WD/WT, ``later_year``,
    and the pool labelled ``later_pool``.
    """

    formula: str
    later_year: int | None = None
    later_pool: str | None = None

    def framing(self, t: TrialRecord) -> int:
        return int(t.game_spec.framing in (Framing.WD, Framing.WT))


def aggregate_participants(trials: Iterable[TrialRecord], coding: Coding) -> list[DesignRow]:
    """Average each participant's trials within each within-participant condition."""
    groups: dict[tuple, list[float]] = {}
    meta: dict[tuple, dict] = {}
    for t in trials:
        pid = t.participant_id if t.participant_id is not None else t.persona_id
        same = int(t.same_party)
        selfp = int(t.self_party is Party.DEMOCRAT)
        if coding.formula == HUMAN:
            study = coding.framing(t)
            # a participant id may recur across the two studies
            key = (pid, study, same)
            fields = dict(same_p=same, self_p=selfp, participant_id=pid, study=study)
        elif coding.formula == COUNTERFACTUAL:
            if coding.later_year is None or coding.later_pool is None:
                raise ValueError("counterfactual coding needs later_year and later_pool")
            year = int(t.game_spec.year == coding.later_year)
            framing = coding.framing(t)
            pool = int(t.pool == coding.later_pool)
            key = (pid, same, year, framing)
            fields = dict(same_p=same, self_p=selfp, participant_id=pid, year=year, framing=framing, pool=pool)
        else:
            raise ValueError(f"unknown formula {coding.formula!r}")
        if key in meta and meta[key] != fields:
            raise ValidationError(f"participant {pid} changes a between-participant factor")
        meta[key] = fields
        groups.setdefault(key, []).append(float(t.amount))
    return [DesignRow(response=math.fsum(v) / len(v), **meta[k]) for k, v in groups.items()]


# -- reporting -------------------------------------------------------------

DELTA_HEADER = ("Condition", "Dem→Dem", "Dem→Rep", "Dem Δ", "Rep→Rep", "Rep→Dem", "Rep Δ", "Mean Diff. Δ")


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(header), sep, *(line(r) for r in rows)]) + "\n"


def _delta_cells(s: DeltaSummary) -> list[str]:
    return [f"{v:.2f}" for v in (s.dd, s.dr, s.dem_delta, s.rr, s.rd, s.rep_delta, s.mean_delta)]


def delta_markdown(rows: Sequence[tuple[str, DeltaSummary]]) -> str:
    return _table(DELTA_HEADER, [[label, *_delta_cells(s)] for label, s in rows])


def delta_csv(rows: Sequence[tuple[str, DeltaSummary]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "dd", "dr", "dem_delta", "rr", "rd", "rep_delta", "mean_delta", "n_dd", "n_dr", "n_rr", "n_rd"])
    for label, s in rows:
        d = s.to_dict()
        w.writerow([label, *(repr(float(d[k])) for k in ("dd", "dr", "dem_delta", "rr", "rd", "rep_delta", "mean_delta")),
                    d["n_dd"], d["n_dr"], d["n_rr"], d["n_rd"]])
    return buf.getvalue()


def regression_markdown(rows: Sequence[tuple[str, RegressionFit]]) -> str:
    """Coefficients with significance stars, one model per row (intercept omitted)."""
    if not rows:
        return ""
    terms = [t for t in rows[0][1].terms if t != "Intercept"]
    body = []
    for label, fit in rows:
        cells = []
        for term in terms:
            p = significance(fit, term, fit.default_sidedness(term))
            cells.append(f"{fit.coef(term):.3f}{stars(p) if not math.isnan(p) else ''}")
        body.append([label, *cells])
    note = "\nClassical OLS standard errors; *** p<0.001, ** p<0.01, * p<0.05. "
    note += "Within-participant terms tested one-sided, others two-sided.\n" if rows[0][1].formula == COUNTERFACTUAL else "Two-sided tests.\n"
    return _table(["Model", *[t.replace(":", "×") for t in terms]], body) + note


def regression_csv(rows: Sequence[tuple[str, RegressionFit]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "term", "coef", "std_err", "t", "p_two_sided", "sidedness", "p_test", "stars", "n", "dof"])
    for label, fit in rows:
        for i, term in enumerate(fit.terms):
            side = fit.default_sidedness(term)
            p = significance(fit, term, side)
            w.writerow([
                label, term, repr(float(fit.coefficients[i])), repr(float(fit.std_errors[i])),
                repr(float(fit.t_stats[i])), repr(float(fit.p_values[i])), side, repr(p),
                stars(p) if not math.isnan(p) else "", fit.n, fit.dof,
            ])
    return buf.getvalue()
