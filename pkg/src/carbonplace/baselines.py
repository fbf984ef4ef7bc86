"""Placement strategies behind a common interface.

Every strategy answers decide(t, traffic, ci_now) with a placement plus
solve statistics; the simulator's run loop has no strategy-specific
branches. `aceso` is the pruned genetic optimizer; the rest are reference
points: static single-region, an unpruned vanilla GA, biased stochastic
sampling with a hysteresis change policy, and exhaustive brute force.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .appmodel import activation_stages
from .infra import reference_price
from .optimizer import (
    GaConfig,
    OptimizeContext,
    Placement,
    brute_force_optimize,
    optimize,
    prepare,
    region_filter,
    search_space_log10,
)
from .profiler import bucket_index, lookup
from .simulator import Decision, Scenario, derive_seed

STRATEGY_NAMES = ("aceso", "static", "vanilla-ga", "sampling", "brute-force")


def filtered_regions(scenario: Scenario) -> list[str]:
    """Region set surviving the dominance filter at scenario start."""
    from .infra import ci_at

    s = scenario
    t = s.horizon_start
    ci_now = {r: ci_at(s.infra.carbon[r], t) for r in s.allowed_regions}
    prices = {r: reference_price(s.infra.pricing, r) for r in s.allowed_regions}
    return region_filter(s.base_region, list(s.allowed_regions), ci_now, prices)


class _Base:
    name = "base"

    def __init__(self):
        self.scenario: Scenario | None = None
        self._schedule = None

    def configure(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self._schedule = activation_stages(scenario.dag)
        self._initial_retained = self._retained_at_init()

    def _retained_at_init(self) -> list[str]:
        return [self.scenario.base_region]

    def storage_regions(self) -> int:
        return len(self._initial_retained)

    def _context(self, t: int, traffic: float, ci_now: dict, **overrides) -> OptimizeContext:
        s = self.scenario
        ga = GaConfig(
            population=s.ga.population,
            max_generations=s.ga.max_generations,
            mutation_rate=s.ga.mutation_rate,
            crossover_rate=s.ga.crossover_rate,
            elitism=s.ga.elitism,
            patience=s.ga.patience,
            time_budget_s=s.ga.time_budget_s,
            seed=derive_seed(s.seed, f"{self.name}:ga:{t}"),
        )
        kwargs = dict(
            dag=s.dag,
            schedule=self._schedule,
            loads=lookup(s.profiles, traffic),
            infra=s.infra,
            base_region=s.base_region,
            allowed_regions=list(s.allowed_regions),
            ci_now=ci_now,
            traffic_rps=traffic,
            slo_ms=s.slo_ms,
            weights=s.weights,
            pin_policy=s.pin_policy,
            ga=ga,
            payload_gb=s.payload_gb,
            image_gb=s.image_gb,
        )
        kwargs.update(overrides)
        return OptimizeContext(**kwargs)


class AcesoStrategy(_Base):
    """Pruned GA: region filtering plus activation-order pinning."""

    name = "aceso"

    def _retained_at_init(self) -> list[str]:
        return filtered_regions(self.scenario)

    def decide(self, t: int, traffic: float, ci_now: dict) -> Decision:
        ctx = self._context(t, traffic, ci_now)
        prep = prepare(ctx)
        result = optimize(ctx, prep)
        return Decision(
            placement=result.placement,
            solve_time_s=result.solve_time_s,
            evaluations=result.evaluations,
            search_space_log10=result.search_space_log10,
            movable=prep.movable,
            retained=prep.retained,
        )


class StaticStrategy(_Base):
    """All services stay in the base region; zero solve time."""

    name = "static"

    def decide(self, t: int, traffic: float, ci_now: dict) -> Decision:
        s = self.scenario
        movable = s.dag.movable_ids()
        return Decision(
            placement=Placement(
                assign={m: s.base_region for m in movable}, base_region=s.base_region
            ),
            solve_time_s=0.0,
            evaluations=0,
            search_space_log10=0.0,
            movable=movable,
            retained=[s.base_region],
        )


class VanillaGaStrategy(_Base):
    """The same GA engine with both prunings disabled."""

    name = "vanilla-ga"

    def _retained_at_init(self) -> list[str]:
        return list(self.scenario.allowed_regions)

    def decide(self, t: int, traffic: float, ci_now: dict) -> Decision:
        ctx = self._context(t, traffic, ci_now, use_region_filter=False, use_pinning=False)
        prep = prepare(ctx)
        result = optimize(ctx, prep)
        return Decision(
            placement=result.placement,
            solve_time_s=result.solve_time_s,
            evaluations=result.evaluations,
            search_space_log10=result.search_space_log10,
            movable=prep.movable,
            retained=prep.retained,
        )


class BruteForceStrategy(_Base):
    """Exhaustive oracle; only viable on desk-scale instances."""

    name = "brute-force"

    def _retained_at_init(self) -> list[str]:
        return filtered_regions(self.scenario)

    def decide(self, t: int, traffic: float, ci_now: dict) -> Decision:
        ctx = self._context(t, traffic, ci_now)
        prep = prepare(ctx)
        result = brute_force_optimize(ctx, prep)
        return Decision(
            placement=result.placement,
            solve_time_s=result.solve_time_s,
            evaluations=result.evaluations,
            search_space_log10=result.search_space_log10,
            movable=prep.movable,
            retained=prep.retained,
        )


class SamplingStrategy(_Base):
    """Biased stochastic sampling with a conservative change policy.

    Draws n_samples placements with per-region probability inversely
    proportional to the carbon-intensity x reference-price product, keeps
    the best feasible one, and adopts it only when it beats the incumbent
    placement's objective by more than the hysteresis margin.
    """

    name = "sampling"

    def __init__(self, n_samples: int = 512, hysteresis: float = 0.10):
        super().__init__()
        self.n_samples = n_samples
        self.hysteresis = hysteresis
        self._incumbent: Placement | None = None

    def _retained_at_init(self) -> list[str]:
        return list(self.scenario.allowed_regions)

    def decide(self, t: int, traffic: float, ci_now: dict) -> Decision:
        t0 = time.monotonic()
        s = self.scenario
        ctx = self._context(t, traffic, ci_now, use_region_filter=False, use_pinning=False)
        prep = prepare(ctx)
        movable, regions = prep.movable, prep.retained
        rng = np.random.default_rng(derive_seed(s.seed, f"sampling:{t}"))

        prices = {r: reference_price(s.infra.pricing, r) for r in regions}
        bias = np.array([1.0 / max(1e-9, ci_now[r] * prices[r]) for r in regions])
        bias /= bias.sum()

        from .optimizer import weighted_objective

        genes = rng.choice(len(regions), size=(self.n_samples, len(movable)), p=bias).astype(
            np.int32
        )
        res = prep.evaluator.evaluate(
            prep.evaluator.full_assign(movable, genes), prep.ci_vec, traffic
        )
        fit = np.asarray(weighted_objective(prep, ctx.weights, res.carbon_g_hr, res.cost_usd_hr))
        fit[res.latency_ms > ctx.slo_ms] = np.inf
        best = int(np.argmin(fit))

        incumbent = self._incumbent
        if incumbent is None:
            incumbent = Placement(
                assign={m: s.base_region for m in movable}, base_region=s.base_region
            )
        inc_res = prep.evaluator.evaluate(
            prep.evaluator.assign_from_placement(incumbent.assign), prep.ci_vec, traffic
        )
        inc_fit = float(
            weighted_objective(prep, ctx.weights, inc_res.carbon_g_hr, inc_res.cost_usd_hr)[0]
        )
        if float(inc_res.latency_ms[0]) > ctx.slo_ms:
            inc_fit = math.inf

        if np.isfinite(fit[best]) and fit[best] < inc_fit * (1.0 - self.hysteresis):
            chosen = Placement(
                assign={m: regions[g] for m, g in zip(movable, genes[best])},
                base_region=s.base_region,
            )
        else:
            chosen = incumbent
        self._incumbent = chosen
        return Decision(
            placement=chosen,
            solve_time_s=time.monotonic() - t0,
            evaluations=self.n_samples + 1,
            search_space_log10=search_space_log10(len(movable), len(regions)),
            movable=movable,
            retained=regions,
        )


def static_strategy(base_region: str | None = None) -> StaticStrategy:
    return StaticStrategy()


def vanilla_ga_strategy(ga: GaConfig | None = None) -> VanillaGaStrategy:
    return VanillaGaStrategy()


def stochastic_sampling_strategy(n_samples: int = 512, hysteresis: float = 0.10) -> SamplingStrategy:
    return SamplingStrategy(n_samples=n_samples, hysteresis=hysteresis)


def make_strategy(name: str, **kwargs):
    if name == "aceso":
        return AcesoStrategy()
    if name == "static":
        return StaticStrategy()
    if name == "vanilla-ga":
        return VanillaGaStrategy()
    if name == "sampling":
        return SamplingStrategy(**kwargs)
    if name == "brute-force":
        return BruteForceStrategy()
    raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGY_NAMES)}")
