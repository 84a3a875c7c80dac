"""Monthly event loop, per-run metric series, and the parallel batch layer.

One month executes the fixed order: production, population dynamics,
consumption, firm decisions, labor market, housing market, tax collection,
fiscal distribution, investment. Every month closes with a money audit; a
violation aborts the run naming the month and the broken invariant.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .config import ScenarioConfig
from .demographics import (
    DEFAULT_VITAL_BRACKETS,
    VitalRates,
    apply_fertility,
    apply_mortality,
    mature_qualifications,
    step_ages,
)
from .economy import (
    consume,
    pay_wages,
    produce,
    run_labor_market,
    set_price,
    set_wage_and_vacancy,
    settle_profit_tax,
)
from .errors import InvariantViolation, ValidationError
from .fiscal import (
    TAX_KINDS,
    DistributionPolicy,
    MpfTable,
    distribute,
    invest,
    load_mpf_table,
    policy_for_case,
)
from .housing import Transaction, collect_property_tax, run_housing_market
from .rng import RngStreams
from .state import SimulationState
from .worldgen import RegionSpec, generate_region, instantiate_world, load_region

log = logging.getLogger(__name__)

CURRENCY_UNIT = 0.01  # smallest money unit the conservation audit resolves


@dataclass
class RunResult:
    """Everything one run records: per-month series plus a final snapshot."""

    apc_id: str
    case_id: int
    seed: int
    horizon: int
    municipality_ids: list[str] = field(default_factory=list)
    # per-municipality series
    qli: dict[str, list[float]] = field(default_factory=dict)
    populations: dict[str, list[int]] = field(default_factory=dict)
    inflows: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    # region-wide series
    gdp_value: list[float] = field(default_factory=list)
    gdp_index: list[float] = field(default_factory=list)
    inflation: list[float] = field(default_factory=list)
    unemployment: list[float] = field(default_factory=list)
    avg_workers_per_firm: list[float] = field(default_factory=list)
    avg_firm_profit: list[float] = field(default_factory=list)
    units_consumed: list[float] = field(default_factory=list)
    consumption_spent: list[float] = field(default_factory=list)
    taxes_by_kind: dict[str, list[float]] = field(default_factory=dict)
    housing_sales: list[int] = field(default_factory=list)
    transactions: list[Transaction] = field(default_factory=list)
    final_snapshot: dict = field(default_factory=dict)
    failed: bool = False
    error: str | None = None

    def final_qli(self) -> dict[str, float]:
        return {m: series[-1] for m, series in self.qli.items()}

    def total_tax_collected(self) -> float:
        return sum(sum(series) for series in self.taxes_by_kind.values())


@dataclass
class _Runtime:
    """Per-run constants derived once from the config."""

    config: ScenarioConfig
    policy: DistributionPolicy
    mpf_table: MpfTable
    vital_rates: VitalRates
    frozen_populations: dict[str, int] | None = None
    money_ops: int = 0  # cumulative count of money-moving events, for audit tolerance
    prev_unit_value: float = math.nan  # last month's mean price paid, for inflation
    depopulated: set[str] = field(default_factory=set)  # munis already reported empty


def _build_runtime(config: ScenarioConfig) -> _Runtime:
    policy = policy_for_case(config.fiscal.case_id)
    if config.fiscal.mpf_table_file:
        table = load_mpf_table(config.fiscal.mpf_table_file)
    else:
        table = MpfTable()
    return _Runtime(
        config=config,
        policy=policy,
        mpf_table=table,
        vital_rates=VitalRates(DEFAULT_VITAL_BRACKETS),
    )


def _audit_tolerance(runtime: _Runtime) -> float:
    return CURRENCY_UNIT * (1.0 + runtime.money_ops / 1e6)


def _check_invariants(state: SimulationState, runtime: _Runtime, month: int) -> None:
    drift = abs(state.money_in_circulation() - state.money_base)
    if drift > _audit_tolerance(runtime):
        raise InvariantViolation(month, "money-conservation", f"audit drift {drift!r}")
    employed = sum(1 for c in state.citizens.values() if c.employer_id is not None)
    on_payroll = sum(len(f.employees) for f in state.firms.values())
    if employed != on_payroll:
        raise InvariantViolation(
            month, "employment-consistency", f"{employed} employed vs {on_payroll} on payrolls"
        )
    vacancies: dict[str, int] = {m: 0 for m in state.treasuries}
    occupied_munis: set[str] = set()
    for house in state.houses.values():
        if house.resident_family_id is None:
            vacancies[house.municipality_id] += 1
    for family in state.families.values():
        occupied_munis.add(family.municipality_id)
    for muni in occupied_munis:
        if vacancies.get(muni, 0) < 1:
            raise InvariantViolation(month, "housing-vacancy", f"no vacant house in {muni}")


def step_month(state: SimulationState, runtime: _Runtime, result: RunResult) -> None:
    """Advance the world by one month, recording the metric row."""
    cfg = runtime.config
    market = cfg.market
    month = state.month
    streams = state.rng

    # production: firms turn employee qualification into inventory
    gdp_value = 0.0
    for firm in state.firms.values():
        quals = [state.citizens[cid].qualification for cid in firm.employees]
        units = produce(firm, quals, market)
        gdp_value += units * firm.price
        firm.revenue_this_month = 0.0

    # population dynamics
    step_ages(state)
    mature_qualifications(state, streams.demographics)
    apply_mortality(state, runtime.vital_rates, streams.demographics)
    apply_fertility(state, runtime.vital_rates, streams.demographics)

    # consumption from a uniform sample of firms per family
    firm_ids = sorted(state.firms)
    family_ids = sorted(state.families)
    units_consumed = 0.0
    spent_total = 0.0
    if firm_ids and family_ids:
        k = min(market.consumption_firm_sample, len(firm_ids))
        sample_matrix = streams.consumption.integers(0, len(firm_ids), size=(len(family_ids), k))
        for row, fam_id in enumerate(family_ids):
            sample = [state.firms[firm_ids[int(j)]] for j in sample_matrix[row]]
            units, spent = consume(
                state.families[fam_id], sample, cfg.tax_rates, market, streams.consumption,
                state.ledger,
            )
            units_consumed += units
            spent_total += spent

    # firm decisions: price from inventory signal, wage offer and vacancy
    vacancy_firms = []
    for fid in firm_ids:
        firm = state.firms[fid]
        set_price(firm, market)
        if set_wage_and_vacancy(firm, market):
            vacancy_firms.append(firm)

    # labor market: highest wage offers pick first
    if vacancy_firms:
        candidates = [state.citizens[cid] for cid in state.unemployed_adults()]
        matches = run_labor_market(
            vacancy_firms, candidates, state.residences(), market, streams.labor
        )
        for firm_id, citizen_id in matches:
            firm = state.firms[firm_id]
            citizen = state.citizens[citizen_id]
            citizen.employer_id = firm_id
            citizen.monthly_wage = firm.wage_offer
            firm.employees.append(citizen_id)

    # housing market: hedonic listing prices, midpoint settlement
    transactions = run_housing_market(
        state, cfg.housing, cfg.tax_rates, streams.housing, state.ledger
    )
    result.transactions.extend(transactions)

    # tax collection: wages (income tax), property, company on its cadence
    for fid in firm_ids:
        pay_wages(state.firms[fid], state.citizens, state.families, cfg.tax_rates, state.ledger)
    collect_property_tax(state, cfg.housing, cfg.tax_rates, state.ledger)
    if (month + 1) % cfg.fiscal.profit_tax_cadence_months == 0:
        for fid in firm_ids:
            settle_profit_tax(state.firms[fid], cfg.tax_rates, state.ledger)

    # fiscal distribution and investment
    populations = state.populations()
    collected_by_kind = state.ledger.total_by_kind()
    share_base = runtime.frozen_populations or populations
    if sum(share_base.values()) <= 0:
        raise InvariantViolation(month, "region-population", "no citizens left in region")
    muni_order = sorted(state.treasuries)
    allocations = distribute(
        state.ledger, runtime.policy, share_base, runtime.mpf_table, muni_order
    )
    for kind in TAX_KINDS:
        pool = sum(state.ledger.by_kind(kind).values())
        allocated = sum(allocations[kind].values())
        if abs(pool - allocated) > CURRENCY_UNIT:
            raise InvariantViolation(
                month, "distribution-conservation",
                f"{kind.value}: collected {pool!r} vs allocated {allocated!r}",
            )
    pool_cell = [state.escheat_pool]
    firms_by_muni: dict[str, list] = {m: [] for m in muni_order}
    for fid in firm_ids:
        firms_by_muni[state.firms[fid].municipality_id].append(state.firms[fid])
    for muni in muni_order:
        total_alloc = 0.0
        for kind in TAX_KINDS:
            amount = allocations[kind][muni]
            result.inflows[muni][kind.value].append(amount)
            total_alloc += amount
        if populations[muni] <= 0 and muni not in runtime.depopulated:
            runtime.depopulated.add(muni)
            log.warning(
                "municipality %s depopulated at month %d; its allocations escheat from here on",
                muni, month,
            )
        spent = invest(
            state.treasuries[muni],
            total_alloc,
            populations[muni],
            cfg.fiscal.qli_unit_cost,
            pool_cell,
        )
        # public procurement: the invested money pays the municipality's
        # firms in equal parts, so taxes recirculate instead of vanishing
        if spent > 0.0:
            local_firms = firms_by_muni[muni] or [state.firms[fid] for fid in firm_ids]
            if not local_firms:
                pool_cell[0] += spent  # no firms anywhere to pay; park the money
                continue
            share = spent / len(local_firms)
            paid = 0.0
            for firm in local_firms[1:]:
                firm.cash += share
                firm.cumulative_profit += share
                firm.revenue_this_month += share
                paid += share
            first = local_firms[0]
            first.cash += spent - paid
            first.cumulative_profit += spent - paid
            first.revenue_this_month += spent - paid
    state.escheat_pool = pool_cell[0]
    runtime.money_ops += state.ledger.event_count + len(transactions) + len(state.families)
    state.ledger.clear(month + 1)

    # metric row
    employed = 0
    adults = 0
    for citizen in state.citizens.values():
        if citizen.age_months >= state.labor_entry_age_months:
            adults += 1
            if citizen.employer_id is not None:
                employed += 1
    n_firms = len(state.firms)
    profit_total = 0.0
    for firm in state.firms.values():
        profit_total += firm.revenue_this_month - firm.payroll_this_month
    result.gdp_value.append(gdp_value)
    base = result.gdp_value[0]
    result.gdp_index.append(100.0 * gdp_value / base if base > 0 else 0.0)
    unit_value = spent_total / units_consumed if units_consumed > 0 else math.nan
    prev = runtime.prev_unit_value
    if math.isfinite(unit_value) and math.isfinite(prev) and prev > 0:
        result.inflation.append((unit_value - prev) / prev)
    else:
        result.inflation.append(0.0)
    if math.isfinite(unit_value):
        runtime.prev_unit_value = unit_value
    result.unemployment.append((adults - employed) / adults if adults else 0.0)
    result.avg_workers_per_firm.append(
        sum(len(f.employees) for f in state.firms.values()) / n_firms if n_firms else 0.0
    )
    result.avg_firm_profit.append(profit_total / n_firms if n_firms else 0.0)
    result.units_consumed.append(units_consumed)
    result.consumption_spent.append(spent_total)
    for kind in TAX_KINDS:
        result.taxes_by_kind[kind.value].append(collected_by_kind[kind])
    result.housing_sales.append(len(transactions))
    for muni in muni_order:
        result.qli[muni].append(state.treasuries[muni].qli)
        result.populations[muni].append(populations[muni])

    state.month = month + 1
    _check_invariants(state, runtime, month)


def _resolve_region(config: ScenarioConfig, streams: RngStreams) -> RegionSpec:
    src = config.region
    if src.mode == "file":
        return load_region(src.path)
    if src.mode == "generate":
        return generate_region(
            src.n_municipalities,
            src.total_population,
            src.skew,
            streams.worldgen,
            mean_family_size=config.world.mean_family_size,
            inhabitants_per_firm=config.world.inhabitants_per_firm,
            firm_concentration=config.world.firm_concentration,
            vacancy_margin=config.world.vacancy_margin,
        )
    raise ValidationError(
        "region.mode 'default-batch' cannot run as a single scenario; "
        "pass an explicit region or use the batch commands"
    )


def run_scenario(
    config: ScenarioConfig,
    seed: int,
    region: RegionSpec | None = None,
) -> RunResult:
    """Instantiate a world and run it to the horizon, recording every month.

    With ``engine.reinstantiate_per_run`` off, the initial world is always
    drawn from the base seed, so repeated runs share one world and differ
    only in the monthly dynamics.
    """
    streams = RngStreams(seed)
    world_streams = (
        streams if config.engine.reinstantiate_per_run else RngStreams(config.engine.seed)
    )
    if region is None:
        region = _resolve_region(config, world_streams)
    state = instantiate_world(region, config.world, world_streams.worldgen)
    state.rng = streams
    runtime = _build_runtime(config)
    if config.fiscal.freeze_mpf_shares:
        runtime.frozen_populations = state.populations()

    result = RunResult(
        apc_id=region.id,
        case_id=config.fiscal.case_id,
        seed=seed,
        horizon=config.engine.horizon_months,
        municipality_ids=sorted(state.treasuries),
    )
    for muni in result.municipality_ids:
        result.qli[muni] = []
        result.populations[muni] = []
        result.inflows[muni] = {kind.value: [] for kind in TAX_KINDS}
    for kind in TAX_KINDS:
        result.taxes_by_kind[kind.value] = []

    for _ in range(config.engine.horizon_months):
        step_month(state, runtime, result)

    result.final_snapshot.update(
        {
            "family_savings_total": sum(f.savings for f in state.families.values()),
            "firm_cash_total": sum(f.cash for f in state.firms.values()),
            "treasury_invested_total": state.total_invested(),
            "escheat_pool": state.escheat_pool,
            "citizen_count": len(state.citizens),
            "money_base": state.money_base,
        }
    )
    return result


# ---------------------------------------------------------------------------
# Batch layer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunTask:
    """One picklable unit of batch work."""

    config: ScenarioConfig
    region: RegionSpec | None
    seed: int


@dataclass
class ScenarioResult:
    """All runs of one (region, case) cell plus their median aggregates."""

    apc_id: str
    case_id: int
    runs: list[RunResult]
    flagged: bool = False
    median_final_qli: dict[str, float] = field(default_factory=dict)
    controls: dict[str, float] = field(default_factory=dict)

    @property
    def municipality_count(self) -> int:
        if self.runs and self.runs[0].municipality_ids:
            return len(self.runs[0].municipality_ids)
        return 0


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def _execute_task(task: RunTask) -> RunResult:
    try:
        return run_scenario(task.config, task.seed, task.region)
    except Exception as exc:  # failed runs are batch data, not batch crashes
        apc = task.region.id if task.region is not None else "<generated>"
        failed = RunResult(
            apc_id=apc,
            case_id=task.config.fiscal.case_id,
            seed=task.seed,
            horizon=task.config.engine.horizon_months,
        )
        failed.failed = True
        failed.error = str(exc)
        return failed


def summarize_runs(apc_id: str, case_id: int, runs: list[RunResult]) -> ScenarioResult:
    """Median-aggregate one scenario cell; flag it when most runs failed."""
    scenario = ScenarioResult(apc_id=apc_id, case_id=case_id, runs=runs)
    healthy = [r for r in runs if not r.failed]
    if len(healthy) * 2 < len(runs) or not healthy:
        scenario.flagged = True
        return scenario
    munis = healthy[0].municipality_ids
    scenario.median_final_qli = {
        m: _median([r.qli[m][-1] for r in healthy]) for m in munis
    }

    def run_mean(series: list[float]) -> float:
        return sum(series) / len(series)

    scenario.controls = {
        "avg_workers_per_firm": _median([run_mean(r.avg_workers_per_firm) for r in healthy]),
        "avg_firm_profit": _median([run_mean(r.avg_firm_profit) for r in healthy]),
        "gdp_index": _median([r.gdp_index[-1] for r in healthy]),
        "inflation": _median([run_mean(r.inflation) for r in healthy]),
        "unemployment": _median([run_mean(r.unemployment) for r in healthy]),
        "municipality_count": float(len(munis)),
    }
    return scenario


def run_batch(
    tasks: list[tuple[str, int, RunTask]],
    jobs: int = 1,
) -> dict[tuple[str, int], ScenarioResult]:
    """Execute tasks (grouped by (apc_id, case_id)) and median-aggregate.

    Results are reduced in task order regardless of scheduling, so the
    output is identical for any ``jobs`` value.
    """
    ordered = list(tasks)
    if jobs <= 1:
        raw = [_execute_task(task) for _, _, task in ordered]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_execute_task, [task for _, _, task in ordered], chunksize=1))
    grouped: dict[tuple[str, int], list[RunResult]] = {}
    for (apc_id, case_id, _), result in zip(ordered, raw):
        grouped.setdefault((apc_id, case_id), []).append(result)
    return {
        key: summarize_runs(key[0], key[1], runs) for key, runs in sorted(grouped.items())
    }


def batch_tasks(
    config: ScenarioConfig,
    regions: list[RegionSpec],
    cases: list[int],
    runs_per_scenario: int | None = None,
) -> list[tuple[str, int, RunTask]]:
    """Expand (regions x cases x runs) into matched-seed tasks.

    Run r of every (region, case) cell uses seed ``engine.seed + r``, so
    comparisons across cases see identical worlds and identical demographic
    draws; only the fiscal routing differs.
    """
    runs = runs_per_scenario or config.engine.runs_per_scenario
    tasks = []
    for region in regions:
        for case_id in cases:
            case_cfg = replace(config, fiscal=replace(config.fiscal, case_id=case_id))
            for r in range(runs):
                tasks.append(
                    (region.id, case_id, RunTask(case_cfg, region, config.engine.seed + r))
                )
    return tasks
