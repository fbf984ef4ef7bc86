"""Placement decision engine.

Region filtering prunes candidate regions by a conservative carbon/price
dominance rule; microservice pinning removes structurally immovable and
late-activated services from the gene space; a genetic algorithm searches
the remaining placements for the minimum of the weighted carbon+cost
objective subject to the end-to-end latency SLO. A brute-force enumerator
provides the exact optimum at desk scale, and two triggers decide when the
control loop re-optimizes.

Objective normalization: carbon and cost are divided by the all-in-base
values, so objective(all-in-base) = w_carbon + w_cost and results are
comparable across optimizers and seeds.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .appmodel import ActivationSchedule, AppDag
from .evaluation import PlacementEvaluator
from .infra import InfraBundle, reference_price
from .profiler import ServiceLoad

BRUTE_FORCE_LIMIT = 10_000_000


class InfeasibleScenarioError(RuntimeError):
    """No placement satisfies the SLO, not even all-in-base."""


class SearchSpaceError(ValueError):
    """Exhaustive enumeration was asked for on a space that is too large."""


@dataclass(frozen=True)
class Weights:
    w_carbon: float = 1.0
    w_cost: float = 1.0

    def __post_init__(self):
        for w in (self.w_carbon, self.w_cost):
            if not 0.0 <= w <= 1.0:
                raise ValueError("weights must lie in [0, 1]")


@dataclass(frozen=True)
class GaConfig:
    population: int = 64
    max_generations: int = 300
    mutation_rate: float | None = None  # None -> 1/M per gene
    crossover_rate: float = 0.9
    elitism: int = 2
    patience: int = 30
    time_budget_s: float = 120.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be < population")
        for rate in (self.crossover_rate, self.mutation_rate or 0.0):
            if not 0.0 <= rate <= 1.0:
                raise ValueError("rates must lie in [0, 1]")


@dataclass(frozen=True)
class PinPolicy:
    theta: float = 0.85
    enabled: bool = True

    def __post_init__(self):
        if self.enabled and not 0.8 <= self.theta <= 0.9:
            raise ValueError("theta must lie in [0.8, 0.9]")


@dataclass(frozen=True)
class Placement:
    assign: dict[int, str]  # movable services only
    base_region: str

    def region_of(self, node_id: int) -> str:
        return self.assign.get(node_id, self.base_region)

    def moved_ids(self) -> set[int]:
        return {nid for nid, r in self.assign.items() if r != self.base_region}


@dataclass(frozen=True)
class OptResult:
    placement: Placement
    objective: float
    carbon_g_hr: float
    cost_usd_hr: float
    latency_ms: float
    solve_time_s: float
    evaluations: int
    search_space_log10: float


@dataclass
class OptimizeContext:
    dag: AppDag
    schedule: ActivationSchedule
    loads: dict[str, ServiceLoad]
    infra: InfraBundle
    base_region: str
    allowed_regions: list[str]
    ci_now: dict[str, float]
    traffic_rps: float
    slo_ms: float
    weights: Weights = Weights()
    pin_policy: PinPolicy = PinPolicy()
    ga: GaConfig = GaConfig()
    payload_gb: float = 0.0
    image_gb: float = 0.0
    use_region_filter: bool = True
    use_pinning: bool = True


def region_filter(
    base: str,
    candidates: list[str],
    ci_now: dict[str, float],
    prices: dict[str, float],
) -> list[str]:
    """Pareto-style pruning of candidate regions against the base region.

    The base is always retained. Candidates worse-or-equal than the base in
    both carbon intensity and price (strictly worse in at least one) are
    dropped. If any candidate strictly improves both metrics, candidates
    improving only one of the two are dropped as well: expanding to a region
    must not trade one objective for the other when a clean win exists.
    """
    if base not in candidates:
        raise ValueError("base region must be among the candidates")
    for c in candidates:
        if c not in ci_now or c not in prices:
            raise KeyError(f"missing carbon or price data for region {c!r}")
    base_ci, base_price = ci_now[base], prices[base]
    has_double_improver = any(
        ci_now[c] < base_ci and prices[c] < base_price for c in candidates if c != base
    )
    retained = []
    for c in candidates:
        if c == base:
            retained.append(c)
            continue
        ci_c, price_c = ci_now[c], prices[c]
        worse_eq_both = ci_c >= base_ci and price_c >= base_price
        strictly_worse_one = ci_c > base_ci or price_c > base_price
        if worse_eq_both and strictly_worse_one:
            continue
        improves_exactly_one = (ci_c < base_ci) != (price_c < base_price)
        if has_double_improver and improves_exactly_one:
            continue
        retained.append(c)
    return retained


def pin_services(
    dag: AppDag,
    schedule: ActivationSchedule,
    base_latency_ms: float,
    slo_ms: float,
    policy: PinPolicy = PinPolicy(),
) -> set[int]:
    """Movable service ids after structural and activation-order pinning.

    When the all-in-base latency approaches the SLO (>= theta of it), the
    latest activation stages are pinned to the base region: the closer to
    the SLO, the more stages, capped at the last ceil(S/2) stages.
    """
    if slo_ms <= 0:
        raise ValueError("slo must be positive")
    movable = {n.id for n in dag.nodes if not n.structurally_pinned}
    if not policy.enabled or not movable:
        return movable
    ratio = base_latency_ms / slo_ms
    if ratio < policy.theta:
        return movable
    n_stages = len(schedule.stages)
    cap = math.ceil(n_stages / 2)
    severity = min(1.0, (ratio - policy.theta) / (1.0 - policy.theta)) if policy.theta < 1.0 else 1.0
    k = min(cap, max(1, math.ceil(severity * cap)))
    pinned_stages = set(range(n_stages - k, n_stages))
    return {m for m in movable if schedule.stage_of[m] not in pinned_stages}


def search_space_log10(m_movable: int, r_retained: int) -> float:
    """log10 of the placement search-space size."""
    if m_movable <= 0 or r_retained <= 1:
        return 0.0
    return m_movable * math.log10(r_retained)


def carbon_trigger(recent_trend: float, forecast: float, threshold: float = 0.2) -> bool:
    """Fire when the forecasted carbon intensity deviates from its trend."""
    if recent_trend <= 0:
        return forecast > 0
    return abs(forecast - recent_trend) / recent_trend > threshold


def workload_trigger(current_bucket: int, forecast_bucket: int) -> bool:
    """Fire when the predicted load lands in a different traffic bucket."""
    return current_bucket != forecast_bucket


@dataclass
class _Prepared:
    retained: list[str]
    movable: list[int]
    evaluator: PlacementEvaluator
    ci_vec: np.ndarray
    base_latency: float
    base_carbon: float
    base_cost: float


def _norm(value: float | np.ndarray, ref: float):
    return value / ref if ref > 0 else value


def prepare(ctx: OptimizeContext) -> _Prepared:
    if ctx.use_region_filter:
        prices = {r: reference_price(ctx.infra.pricing, r) for r in ctx.allowed_regions}
        retained = region_filter(ctx.base_region, list(ctx.allowed_regions), ctx.ci_now, prices)
    else:
        retained = list(ctx.allowed_regions)

    # Base latency first (base-only pricing), pinning needs it.
    base_eval = PlacementEvaluator(
        ctx.dag, ctx.loads, ctx.infra, retained, ctx.base_region,
        payload_gb=ctx.payload_gb, image_gb=ctx.image_gb,
        storage_regions=len(retained), movable_ids=[],
    )
    ci_vec = base_eval.ci_vector(ctx.ci_now)
    base_assign = base_eval.full_assign([], np.empty((1, 0), dtype=np.int32))
    base_res = base_eval.evaluate(base_assign, ci_vec, ctx.traffic_rps)
    base_latency = float(base_res.latency_ms[0])

    if ctx.use_pinning:
        movable = pin_services(ctx.dag, ctx.schedule, base_latency, ctx.slo_ms, ctx.pin_policy)
    else:
        movable = {n.id for n in ctx.dag.nodes if not n.structurally_pinned}
    movable_sorted = sorted(movable)

    evaluator = PlacementEvaluator(
        ctx.dag, ctx.loads, ctx.infra, retained, ctx.base_region,
        payload_gb=ctx.payload_gb, image_gb=ctx.image_gb,
        storage_regions=len(retained), movable_ids=movable_sorted,
    )
    return _Prepared(
        retained=retained,
        movable=movable_sorted,
        evaluator=evaluator,
        ci_vec=evaluator.ci_vector(ctx.ci_now),
        base_latency=base_latency,
        base_carbon=float(base_res.carbon_g_hr[0]),
        base_cost=float(base_res.cost_usd_hr[0]),
    )


def weighted_objective(prep: _Prepared, weights: Weights, carbon, cost):
    if weights.w_carbon == 0 and weights.w_cost == 0:
        warnings.warn("both objective weights are zero; every placement scores 0")
    return weights.w_carbon * _norm(carbon, prep.base_carbon) + weights.w_cost * _norm(
        cost, prep.base_cost
    )


def objective(ctx: OptimizeContext, placement: Placement) -> dict[str, float]:
    """Weighted carbon+cost objective of one placement, with its raw terms."""
    prep = prepare(ctx)
    res = prep.evaluator.evaluate(
        prep.evaluator.assign_from_placement(placement.assign), prep.ci_vec, ctx.traffic_rps
    )
    carbon = float(res.carbon_g_hr[0])
    cost = float(res.cost_usd_hr[0])
    return {
        "objective": float(weighted_objective(prep, ctx.weights, carbon, cost)),
        "carbon_term": float(_norm(carbon, prep.base_carbon)),
        "cost_term": float(_norm(cost, prep.base_cost)),
        "carbon_g_hr": carbon,
        "cost_usd_hr": cost,
        "latency_ms": float(res.latency_ms[0]),
    }


def feasible(ctx: OptimizeContext, placement: Placement) -> bool:
    prep = prepare(ctx)
    res = prep.evaluator.evaluate(
        prep.evaluator.assign_from_placement(placement.assign), prep.ci_vec, ctx.traffic_rps
    )
    return float(res.latency_ms[0]) <= ctx.slo_ms


def _placement_from_genes(prep: _Prepared, genes: np.ndarray, base_region: str) -> Placement:
    assign = {m: prep.retained[g] for m, g in zip(prep.movable, genes)}
    return Placement(assign=assign, base_region=base_region)


def _base_result(ctx: OptimizeContext, prep: _Prepared, solve_time: float, evals: int) -> OptResult:
    genes = np.full(len(prep.movable), prep.retained.index(ctx.base_region), dtype=np.int32)
    return OptResult(
        placement=_placement_from_genes(prep, genes, ctx.base_region),
        objective=float(weighted_objective(prep, ctx.weights, prep.base_carbon, prep.base_cost)),
        carbon_g_hr=prep.base_carbon,
        cost_usd_hr=prep.base_cost,
        latency_ms=prep.base_latency,
        solve_time_s=solve_time,
        evaluations=evals,
        search_space_log10=search_space_log10(len(prep.movable), len(prep.retained)),
    )


def optimize(ctx: OptimizeContext, prep: _Prepared | None = None) -> OptResult:
    """Genetic search over (movable service -> retained region) assignments.

    The initial population always contains the all-in-base individual (the
    feasibility anchor) and the all-in-greenest-region individual. Candidates
    violating the SLO get +inf fitness, so they never survive selection.
    Deterministic for a fixed seed.
    """
    t0 = time.monotonic()
    if prep is None:
        prep = prepare(ctx)
    if prep.base_latency > ctx.slo_ms:
        raise InfeasibleScenarioError(
            f"all-in-base latency {prep.base_latency:.1f} ms exceeds slo {ctx.slo_ms:.1f} ms"
        )
    n_movable, n_regions = len(prep.movable), len(prep.retained)
    if n_movable == 0 or n_regions == 1:
        return _base_result(ctx, prep, time.monotonic() - t0, 1)

    cfg = ctx.ga
    pop_size = cfg.population
    mutation = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / n_movable
    base_allele = prep.retained.index(ctx.base_region)
    greenest_allele = int(np.argmin(prep.ci_vec))
    rng = np.random.default_rng(cfg.seed)

    pop = rng.integers(0, n_regions, size=(pop_size, n_movable), dtype=np.int32)
    pop[0, :] = base_allele
    if pop_size > 1:
        pop[1, :] = greenest_allele

    best_fit = np.inf
    best_genes = pop[0].copy()
    best_metrics = (prep.base_carbon, prep.base_cost, prep.base_latency)
    stall = 0
    evaluations = 0

    for _ in range(cfg.max_generations):
        res = prep.evaluator.evaluate(
            prep.evaluator.full_assign(prep.movable, pop), prep.ci_vec, ctx.traffic_rps
        )
        evaluations += pop_size
        fit = np.asarray(
            weighted_objective(prep, ctx.weights, res.carbon_g_hr, res.cost_usd_hr), dtype=float
        )
        fit[res.latency_ms > ctx.slo_ms] = np.inf

        gen_best = int(np.argmin(fit))
        if fit[gen_best] < best_fit - 1e-12:
            best_fit = float(fit[gen_best])
            best_genes = pop[gen_best].copy()
            best_metrics = (
                float(res.carbon_g_hr[gen_best]),
                float(res.cost_usd_hr[gen_best]),
                float(res.latency_ms[gen_best]),
            )
            stall = 0
        else:
            stall += 1
        if stall >= cfg.patience or time.monotonic() - t0 > cfg.time_budget_s:
            break

        order = np.argsort(fit, kind="stable")
        elites = pop[order[: cfg.elitism]]
        n_off = pop_size - cfg.elitism

        # tournament selection, k = 3
        cand = rng.integers(0, pop_size, size=(2, n_off, 3))
        winners_a = cand[0][np.arange(n_off), np.argmin(fit[cand[0]], axis=1)]
        winners_b = cand[1][np.arange(n_off), np.argmin(fit[cand[1]], axis=1)]

        do_cross = rng.random(n_off) < cfg.crossover_rate
        swap = rng.random((n_off, n_movable)) < 0.5
        children = np.where(do_cross[:, None] & swap, pop[winners_b], pop[winners_a])

        mut_mask = rng.random((n_off, n_movable)) < mutation
        mut_alleles = rng.integers(0, n_regions, size=(n_off, n_movable), dtype=np.int32)
        children = np.where(mut_mask, mut_alleles, children).astype(np.int32)

        pop = np.vstack([elites, children])

    if not np.isfinite(best_fit):
        # the all-in-base anchor is feasible, so this cannot happen; belt and braces
        return _base_result(ctx, prep, time.monotonic() - t0, evaluations)
    carbon, cost, latency = best_metrics
    return OptResult(
        placement=_placement_from_genes(prep, best_genes, ctx.base_region),
        objective=best_fit,
        carbon_g_hr=carbon,
        cost_usd_hr=cost,
        latency_ms=latency,
        solve_time_s=time.monotonic() - t0,
        evaluations=evaluations,
        search_space_log10=search_space_log10(n_movable, n_regions),
    )


def brute_force_optimize(ctx: OptimizeContext, prep: _Prepared | None = None) -> OptResult:
    """Exhaustive enumeration of every placement; the desk-scale oracle."""
    t0 = time.monotonic()
    if prep is None:
        prep = prepare(ctx)
    if prep.base_latency > ctx.slo_ms:
        raise InfeasibleScenarioError(
            f"all-in-base latency {prep.base_latency:.1f} ms exceeds slo {ctx.slo_ms:.1f} ms"
        )
    n_movable, n_regions = len(prep.movable), len(prep.retained)
    if n_movable == 0 or n_regions == 1:
        return _base_result(ctx, prep, time.monotonic() - t0, 1)
    total = n_regions**n_movable
    if total > BRUTE_FORCE_LIMIT:
        raise SearchSpaceError(
            f"{n_regions}^{n_movable} placements exceed the enumeration guard"
        )

    radix = n_regions ** np.arange(n_movable, dtype=np.int64)
    best_fit = np.inf
    best_genes = None
    best_metrics = (0.0, 0.0, 0.0)
    evaluations = 0
    for start in range(0, total, 8192):
        idx = np.arange(start, min(start + 8192, total), dtype=np.int64)
        genes = ((idx[:, None] // radix[None, :]) % n_regions).astype(np.int32)
        res = prep.evaluator.evaluate(
            prep.evaluator.full_assign(prep.movable, genes), prep.ci_vec, ctx.traffic_rps
        )
        evaluations += len(idx)
        fit = np.asarray(
            weighted_objective(prep, ctx.weights, res.carbon_g_hr, res.cost_usd_hr), dtype=float
        )
        fit[res.latency_ms > ctx.slo_ms] = np.inf
        i = int(np.argmin(fit))
        if fit[i] < best_fit:
            best_fit = float(fit[i])
            best_genes = genes[i].copy()
            best_metrics = (
                float(res.carbon_g_hr[i]),
                float(res.cost_usd_hr[i]),
                float(res.latency_ms[i]),
            )

    carbon, cost, latency = best_metrics
    return OptResult(
        placement=_placement_from_genes(prep, best_genes, ctx.base_region),
        objective=best_fit,
        carbon_g_hr=carbon,
        cost_usd_hr=cost,
        latency_ms=latency,
        solve_time_s=time.monotonic() - t0,
        evaluations=evaluations,
        search_space_log10=search_space_log10(n_movable, n_regions),
    )
