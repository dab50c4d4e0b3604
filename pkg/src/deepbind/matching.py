"""Demographic matching of human participants to virtual personas.

Edge weight between a human and a persona is the probability that the persona
matches every one of the human's categorical traits (product over traits of
the persona's mass on the human's category). The assignment maximizing the
total weight is found exactly with the Hungarian method.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import HumanParticipant, Party, TraitProfile
from .errors import DimensionError, DuplicateId, EmptyRoster, SchemaMismatch, ValidationError
from .survey import PARTY_TRAIT, TraitSchema, age_bracket

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightMatrix:
    w: np.ndarray
    row_ids: tuple[str, ...] = ()
    col_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise DimensionError(f"weight matrix must be 2-D and non-empty, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or w.min() < 0.0 or w.max() > 1.0:
            raise ValidationError("weights must lie in [0, 1]")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        n, m = w.shape
        rows = tuple(self.row_ids) or tuple(str(i) for i in range(n))
        cols = tuple(self.col_ids) or tuple(str(j) for j in range(m))
        if len(rows) != n or len(cols) != m:
            raise DimensionError("id tables must match the matrix shape")
        object.__setattr__(self, "row_ids", rows)
        object.__setattr__(self, "col_ids", cols)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def m(self) -> int:
        return self.w.shape[1]


@dataclass(frozen=True)
class Assignment:
    mapping: tuple[int, ...]  # mapping[i] = persona column for human row i
    total_weight: float
    zero_weight_rows: tuple[int, ...] = field(default=())

    def pairs(self, matrix: WeightMatrix) -> list[dict[str, object]]:
        return [
            {"human_id": matrix.row_ids[i], "persona_id": matrix.col_ids[j], "weight": float(matrix.w[i, j])}
            for i, j in enumerate(self.mapping)
        ]


def match_weight(human: HumanParticipant, profile: TraitProfile, schema: TraitSchema) -> float:
    """Probability that the persona matches all of the human's schema traits."""
    weight = 1.0
    for name in schema.names:
        if name not in human.traits:
            raise SchemaMismatch(f"participant {human.id} lacks trait {name!r}")
        if name not in profile.traits:
            raise SchemaMismatch(f"persona {profile.persona_id} lacks trait {name!r}")
        weight *= profile.prob(name, human.traits[name])
    return weight


def build_weight_matrix(
    humans: Sequence[HumanParticipant], profiles: Sequence[TraitProfile], schema: TraitSchema
) -> WeightMatrix:
    if not humans:
        raise EmptyRoster("roster has no participants")
    if len({h.id for h in humans}) != len(humans):
        raise DuplicateId("duplicate participant ids in roster")
    if len({p.persona_id for p in profiles}) != len(profiles):
        raise DuplicateId("duplicate persona ids in profile set")
    if len(profiles) < len(humans):
        raise DimensionError(f"{len(profiles)} personas cannot cover {len(humans)} participants")
    w = np.array([[match_weight(h, p, schema) for p in profiles] for h in humans], dtype=float)
    return WeightMatrix(w, tuple(h.id for h in humans), tuple(p.persona_id for p in profiles))


def _min_cost_assignment(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest-augmenting-path Hungarian method for an n x m cost, n <= m.

    Rows are inserted one at a time; dual potentials ``u``/``v`` keep reduced
    costs non-negative. Returns the column of each row and the final
    potentials (1-based, index 0 unused).
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=np.int64)  # owner[j]: 1-based row holding column j, 0 if free
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            candidates = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, m + 1):
        if owner[j]:
            col_of_row[owner[j] - 1] = j - 1
    return col_of_row, u, v


def _lexicographic_optimum(w: np.ndarray) -> tuple[int, ...]:
    """The lexicographically smallest mapping among the maximum-weight ones.

    Row by row, each smaller column is tried by fixing it and re-solving the
    remaining rows (scipy's solver); it is kept when the optimum survives. Only tight edges
    (zero reduced cost under the optimal potentials) can appear in any
    optimal mapping, so other columns are never tried. Totals within a
    relative 1e-12 count as equal.
    """
    n, m = w.shape
    cols, u, v = _min_cost_assignment(-w)
    current = [int(j) for j in cols]
    best = assignment_weight(w, current)
    tol = 1e-12 * max(1.0, abs(best))
    reduced = -w - u[1:, None] - v[None, 1:]
    taken: list[int] = []
    for i in range(n):
        for j in range(current[i]):
            if j in taken or reduced[i, j] > tol:
                continue
            free = [c for c in range(m) if c != j and c not in taken]
            rest: list[int] = []
            if i + 1 < n:
                _, sub = linear_sum_assignment(w[i + 1 :][:, free], maximize=True)
                rest = [free[int(k)] for k in sub]
            candidate = current[:i] + [j] + rest
            if assignment_weight(w, candidate) >= best - tol:
                current = candidate
                break
        taken.append(current[i])
    return tuple(current)


def assignment_weight(w: np.ndarray, mapping: Sequence[int]) -> float:
    total = 0.0
    for i, j in enumerate(mapping):
        total += float(w[i, j])
    return total


def optimal_assignment(matrix: WeightMatrix | np.ndarray | Sequence[Sequence[float]]) -> Assignment:
    """Injective human -> persona mapping with maximum total weight.

    Among equally good mappings the lexicographically smallest one is returned.
    """
    if not isinstance(matrix, WeightMatrix):
        matrix = WeightMatrix(np.asarray(matrix, dtype=float))
    w = matrix.w
    n, m = w.shape
    if m < n:
        raise DimensionError(f"need at least as many personas ({m}) as participants ({n})")
    mapping = _lexicographic_optimum(w)
    if len(set(mapping)) != n:
        raise AssertionError("assignment is not injective")
    zero_rows = tuple(i for i, j in enumerate(mapping) if w[i, j] == 0.0)
    if zero_rows:
        log.warning(
            "%d participant(s) matched with weight 0: %s",
            len(zero_rows),
            ", ".join(matrix.row_ids[i] for i in zero_rows),
        )
    return Assignment(mapping, assignment_weight(w, mapping), zero_rows)


# -- roster I/O ------------------------------------------------------------


def read_roster(path: str | Path, schema: TraitSchema, pool: str | None = None) -> list[HumanParticipant]:
    """Load a CSV roster with columns id, party, pool and one per schema trait.

    A numeric ``age`` column is bucketed when the schema wants ``age_bracket``.
    ``pool`` overrides a missing pool column.
    """
    humans = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, 2):
            row = {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
            try:
                traits = {}
                for name in schema.names:
                    if name == "age_bracket" and not row.get(name) and row.get("age"):
                        traits[name] = age_bracket(int(row["age"]))
                    elif row.get(name):
                        traits[name] = row[name]
                    else:
                        raise SchemaMismatch(f"missing trait column {name!r}")
                party = Party(row["party"])
                if PARTY_TRAIT in schema.names and traits[PARTY_TRAIT] != party.value:
                    raise ValidationError("party column disagrees with party trait")
                human = HumanParticipant(row["id"], traits, party, row.get("pool") or pool or "")
                schema.validate_human(human)
            except KeyError as exc:
                raise ValidationError(f"{path}:{lineno}: missing column {exc}") from exc
            except (ValueError, SchemaMismatch, ValidationError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            if not human.pool:
                raise ValidationError(f"{path}:{lineno}: no pool label")
            humans.append(human)
    if not humans:
        raise EmptyRoster(f"{path}: no participants")
    if len({h.id for h in humans}) != len(humans):
        raise DuplicateId(f"{path}: duplicate participant ids")
    return humans


def match_roster(
    humans: Sequence[HumanParticipant], profiles: Sequence[TraitProfile], schema: TraitSchema
) -> tuple[WeightMatrix, Assignment]:
    matrix = build_weight_matrix(humans, profiles, schema)
    return matrix, optimal_assignment(matrix)
