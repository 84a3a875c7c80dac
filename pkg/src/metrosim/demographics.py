"""Monthly population dynamics: aging, deaths, births.

Vital rates are bracket tables of monthly probabilities by age in years.
Deaths cascade: the citizen leaves employer and family; a family that
empties escheats its savings and houses to the municipality.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

if TYPE_CHECKING:
    from .state import SimulationState

MONTHS_PER_YEAR = 12
MAX_AGE_YEARS = 101
MAX_AGE_MONTHS = MAX_AGE_YEARS * MONTHS_PER_YEAR


@dataclass(slots=True)
class Citizen:
    id: int
    age_months: int
    qualification: int
    family_id: int
    employer_id: int | None = None
    monthly_wage: float = 0.0


@dataclass(frozen=True)
class VitalBracket:
    """Half-open age bracket [start, end) in years with monthly probabilities."""

    start_age: int
    end_age: int
    monthly_mortality: float
    monthly_fertility: float


# Compact 5-year default table. Mortality is flat and tiny through the prime
# ages, rises steeply late, and is 1.0 in the terminal bracket so nobody
# outlives it. Fertility is concentrated in ages 15-49 and applied to every
# citizen in the bracket (the model does not track sex), so the rates are
# roughly half of per-woman rates.
DEFAULT_VITAL_BRACKETS: tuple[VitalBracket, ...] = (
    VitalBracket(0, 5, 5e-5, 0.0),
    VitalBracket(5, 10, 3e-5, 0.0),
    VitalBracket(10, 15, 3e-5, 0.0),
    VitalBracket(15, 20, 3e-5, 0.0015),
    VitalBracket(20, 25, 3e-5, 0.0045),
    VitalBracket(25, 30, 3e-5, 0.0045),
    VitalBracket(30, 35, 3e-5, 0.0035),
    VitalBracket(35, 40, 3e-5, 0.0020),
    VitalBracket(40, 45, 8e-5, 0.0008),
    VitalBracket(45, 50, 1.2e-4, 0.0002),
    VitalBracket(50, 55, 2e-4, 0.0),
    VitalBracket(55, 60, 3e-4, 0.0),
    VitalBracket(60, 65, 5e-4, 0.0),
    VitalBracket(65, 70, 8e-4, 0.0),
    VitalBracket(70, 75, 1.5e-3, 0.0),
    VitalBracket(75, 80, 2.5e-3, 0.0),
    VitalBracket(80, 85, 5e-3, 0.0),
    VitalBracket(85, 90, 1e-2, 0.0),
    VitalBracket(90, 95, 2.5e-2, 0.0),
    VitalBracket(95, 100, 6e-2, 0.0),
    VitalBracket(100, MAX_AGE_YEARS, 1.0, 0.0),
)


class VitalRates:
    """Validated bracket table, expanded to per-month-of-age lookup arrays."""

    def __init__(self, brackets: Sequence[VitalBracket] = DEFAULT_VITAL_BRACKETS):
        self.brackets = tuple(sorted(brackets, key=lambda b: b.start_age))
        self._validate()
        n = MAX_AGE_MONTHS
        self.mortality_by_month = np.zeros(n)
        self.fertility_by_month = np.zeros(n)
        for b in self.brackets:
            lo = b.start_age * MONTHS_PER_YEAR
            hi = min(b.end_age * MONTHS_PER_YEAR, n)
            self.mortality_by_month[lo:hi] = b.monthly_mortality
            self.fertility_by_month[lo:hi] = b.monthly_fertility

    def _validate(self) -> None:
        if not self.brackets:
            raise ValidationError("vital rate table is empty")
        if self.brackets[0].start_age != 0:
            raise ConfigError("vital rate brackets must start at age 0")
        prev_end = 0
        for b in self.brackets:
            if b.start_age != prev_end:
                raise ConfigError(
                    f"vital rate gap: bracket starts at {b.start_age}, expected {prev_end}"
                )
            if b.end_age <= b.start_age:
                raise ValidationError(f"empty bracket [{b.start_age}, {b.end_age})")
            for name, p in (("mortality", b.monthly_mortality), ("fertility", b.monthly_fertility)):
                if not 0.0 <= p <= 1.0:
                    raise ValidationError(
                        f"{name} {p} outside [0, 1] in bracket [{b.start_age}, {b.end_age})"
                    )
            prev_end = b.end_age
        if prev_end < MAX_AGE_YEARS:
            raise ConfigError(f"vital rate brackets end at {prev_end}, must cover {MAX_AGE_YEARS}")

    def mortality_at(self, age_months: int) -> float:
        return float(self.mortality_by_month[min(age_months, MAX_AGE_MONTHS - 1)])

    def fertility_at(self, age_months: int) -> float:
        return float(self.fertility_by_month[min(age_months, MAX_AGE_MONTHS - 1)])


def load_vital_rates(path) -> VitalRates:
    """Read a bracket CSV (bracket_start_age, bracket_end_age, monthly_mortality, monthly_fertility)."""
    required = {"bracket_start_age", "bracket_end_age", "monthly_mortality", "monthly_fertility"}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            missing = sorted(required - set(reader.fieldnames or ()))
            raise ParseError(f"vital rate table missing columns: {', '.join(missing)}")
        for i, row in enumerate(reader):
            try:
                rows.append(
                    VitalBracket(
                        int(row["bracket_start_age"]),
                        int(row["bracket_end_age"]),
                        float(row["monthly_mortality"]),
                        float(row["monthly_fertility"]),
                    )
                )
            except (TypeError, ValueError):
                raise ParseError(f"vital rate table row {i + 1}: non-numeric value") from None
    return VitalRates(rows)


# ---------------------------------------------------------------------------
# Monthly passes
# ---------------------------------------------------------------------------


def step_ages(state: "SimulationState") -> "SimulationState":
    """Increment every living citizen's age by one month."""
    for citizen in state.citizens.values():
        citizen.age_months += 1
    return state


def mature_qualifications(state: "SimulationState", rng: np.random.Generator) -> int:
    """Draw the adult qualification of citizens reaching labor-entry age.

    Simulation-born citizens carry a provisional qualification of 1 until they
    reach the configured entry age; the adult draw is centered on the family's
    mean qualification so the region-level distribution stays roughly
    stationary across generations.
    """
    entry = state.labor_entry_age_months
    q_max = state.qualification_levels
    matured = 0
    for citizen in state.citizens.values():
        if citizen.age_months == entry and citizen.id in state.simulation_born:
            family = state.families[citizen.family_id]
            others = [
                state.citizens[cid].qualification
                for cid in family.members
                if cid != citizen.id
            ]
            center = sum(others) / len(others) if others else (1 + q_max) / 2.0
            draw = rng.normal(center, max(q_max / 10.0, 1.0))
            citizen.qualification = int(min(q_max, max(1, round(draw))))
            state.simulation_born.discard(citizen.id)
            matured += 1
    return matured


def apply_mortality(
    state: "SimulationState", rates: VitalRates, rng: np.random.Generator
) -> int:
    """Remove each citizen independently with its age-bracket probability.

    Returns the death count. Fallout is handled here: employers drop the
    deceased, and a family with no members left escheats savings and houses
    to its municipality's treasury and vacant pool.
    """
    citizens = state.citizens
    if not citizens:
        return 0
    ids = np.fromiter(citizens.keys(), dtype=np.int64, count=len(citizens))
    ages = np.fromiter((c.age_months for c in citizens.values()), dtype=np.int64, count=len(citizens))
    if int(ages.max()) >= MAX_AGE_MONTHS:
        raise ConfigError("citizen older than the vital rate table covers")
    probs = rates.mortality_by_month[ages]
    dead_mask = rng.random(len(ids)) < probs
    deaths = 0
    for cid in ids[dead_mask]:
        _remove_citizen(state, int(cid))
        deaths += 1
    return deaths


def _remove_citizen(state: "SimulationState", citizen_id: int) -> None:
    citizen = state.citizens.pop(citizen_id)
    state.simulation_born.discard(citizen_id)
    if citizen.employer_id is not None:
        firm = state.firms[citizen.employer_id]
        firm.employees.remove(citizen_id)
    family = state.families[citizen.family_id]
    family.members.remove(citizen_id)
    if not family.members:
        _escheat_family(state, family.id)


def _escheat_family(state: "SimulationState", family_id: int) -> None:
    family = state.families.pop(family_id)
    if family.savings > 0:
        state.treasuries[family.municipality_id].balance += family.savings
        family.savings = 0.0
    family.tax_debt.clear()  # arrears die with the family; nothing was collected
    for house_id in family.owned_houses:
        house = state.houses[house_id]
        house.owner_family_id = None
        if house.resident_family_id == family_id:
            house.resident_family_id = None
    family.owned_houses.clear()


def apply_fertility(
    state: "SimulationState", rates: VitalRates, rng: np.random.Generator
) -> int:
    """Create newborns for citizens drawn by their bracket fertility.

    Newborns start at age 0 with a provisional qualification of 1 (redrawn at
    labor-entry age), in the parent's family and municipality. Returns the
    birth count.
    """
    citizens = state.citizens
    if not citizens:
        return 0
    parents = list(citizens.values())
    ages = np.fromiter((c.age_months for c in parents), dtype=np.int64, count=len(parents))
    probs = rates.fertility_by_month[np.minimum(ages, MAX_AGE_MONTHS - 1)]
    birth_mask = rng.random(len(parents)) < probs
    births = 0
    for idx in np.flatnonzero(birth_mask):
        parent = parents[int(idx)]
        if parent.id not in state.citizens:
            continue  # parent died this month before the birth pass
        family = state.families[parent.family_id]
        baby = Citizen(
            id=state.next_citizen_id(),
            age_months=0,
            qualification=1,
            family_id=family.id,
        )
        state.citizens[baby.id] = baby
        family.members.append(baby.id)
        state.simulation_born.add(baby.id)
        births += 1
    return births
