"""Discrete-time (5-minute tick) simulation of a geo-distributed deployment.

Each tick accrues carbon, cost, latency and SLO violations for the current
placement. On hourly boundaries the control loop forecasts the next hour of
traffic, evaluates the carbon and workload triggers, and re-optimizes when
either fires. New placements take effect after a migration delay during
which both old and new instances are billed (make-before-break).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .appmodel import AppDag, activation_stages
from .evaluation import J_PER_KWH, PlacementEvaluator
from .forecaster import (
    N_LAGS,
    STEP_S,
    ForecastConfig,
    GbdtModel,
    TrafficTrace,
    hour_estimate,
    predict_window,
    train,
)
from .infra import HOUR, InfraBundle, ci_at, format_utc, smallest_instance
from .optimizer import GaConfig, PinPolicy, Placement, Weights
from .profiler import BucketTable, ServiceLoad, bucket_index, lookup

TICKS_PER_HOUR = HOUR // STEP_S
HOURS_PER_MONTH = 730.0
TREND_HOURS = 6


def derive_seed(master: int, label: str) -> int:
    """Stable per-component seed from the master seed and a role label."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class Scenario:
    name: str
    dag: AppDag
    infra: InfraBundle
    traffic: TrafficTrace
    profiles: BucketTable
    base_region: str
    allowed_regions: list[str]
    slo_ms: float
    horizon_start: int
    horizon_end: int
    weights: Weights = Weights()
    pin_policy: PinPolicy = PinPolicy()
    ga: GaConfig = GaConfig()
    jitter_sigma: float = 0.15
    migration_delay_ticks: int = 2
    payload_gb: float = 0.0
    image_gb: float = 5.0
    seed: int = 0
    forecaster_enabled: bool = True
    forecast: ForecastConfig = ForecastConfig()
    n_draws: int = 1000
    ci_forecast: str = "lookahead"  # or "persistence"

    def __post_init__(self):
        if self.base_region not in self.allowed_regions:
            raise ValueError("base region must be allowed")
        if self.horizon_start % HOUR != 0:
            raise ValueError("horizon must start on an hour boundary")
        if self.horizon_end <= self.horizon_start:
            raise ValueError("empty horizon")
        t0, t1 = self.traffic.timestamps[0], self.traffic.timestamps[-1]
        if t0 > self.horizon_start - N_LAGS * STEP_S or t1 < self.horizon_end - STEP_S:
            raise ValueError("traffic trace does not cover the horizon plus warmup")
        for r in self.allowed_regions:
            trace = self.infra.carbon.get(r)
            if trace is None:
                raise ValueError(f"no carbon trace for region {r}")
            if trace.start > self.horizon_start - TREND_HOURS * HOUR or (
                trace.end_exclusive < self.horizon_end + HOUR
            ):
                raise ValueError(f"carbon trace for {r} does not cover the horizon")


@dataclass
class MetricsLog:
    scenario: str
    strategy: str
    seed: int
    region_ids: list[str]
    ticks: np.ndarray
    carbon_g: np.ndarray
    cost_usd: np.ndarray
    latency_ms: np.ndarray
    violation_frac: np.ndarray
    region_counts: np.ndarray  # ticks x regions
    trigger_carbon: np.ndarray
    trigger_workload: np.ndarray
    events: list[dict]
    summary: dict


def e2e_latency(
    dag: AppDag,
    placement: Placement,
    loads: dict[str, ServiceLoad],
    infra: InfraBundle,
) -> float:
    """End-to-end request latency of one placement (pure reference path).

    completion(v) = max over predecessors of (completion(u) + rtt) plus the
    service's internal latency; the result adds the return hop from the
    last-finishing sink's owner back to the base region.
    """
    rtt = infra.rtt
    comp: dict[int, float] = {}
    for v in dag.topological_order():
        rv = placement.region_of(v)
        best = 0.0
        for u in dag.predecessors(v):
            hop = rtt.rtt_ms[rtt.index[placement.region_of(u)], rtt.index[rv]]
            best = max(best, comp[u] + hop)
        comp[v] = best + loads[dag.node(v).profile_key].latency_ms
    sinks = dag.sinks()
    last = max(sinks, key=lambda s: (comp[s], -s))
    owner_region = placement.region_of(dag.sink_owner(last))
    return comp[last] + float(rtt.rtt_ms[rtt.index[owner_region], rtt.index[placement.base_region]])


def violation_rate(
    latency_ms: float,
    slo_ms: float,
    jitter_sigma: float,
    n_draws: int = 1000,
    seed: int = 0,
) -> float:
    """Monte-Carlo SLO violation fraction under lognormal latency jitter."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    if jitter_sigma == 0:
        return 1.0 if latency_ms > slo_ms else 0.0
    rng = np.random.default_rng(seed)
    draws = rng.lognormal(mean=0.0, sigma=jitter_sigma, size=n_draws)
    return float(np.mean(latency_ms * draws > slo_ms))


def carbon_step(
    dag: AppDag,
    placement: Placement,
    loads: dict[str, ServiceLoad],
    ci_now: dict[str, float],
    dt_s: float = STEP_S,
) -> float:
    """Grams of CO2eq emitted in one interval: energy x regional intensity."""
    total = 0.0
    for node in dag.nodes:
        energy_j = loads[node.profile_key].energy_j * dt_s / STEP_S
        total += energy_j / J_PER_KWH * ci_now[placement.region_of(node.id)]
    return total


def cost_step(
    dag: AppDag,
    placement: Placement,
    loads: dict[str, ServiceLoad],
    infra: InfraBundle,
    traffic_rps: float,
    dt_s: float = STEP_S,
    payload_gb: float = 0.0,
    image_gb: float = 0.0,
    storage_regions: int = 1,
) -> float:
    """USD spent in one interval: compute + storage + cross-region egress."""
    catalog = infra.pricing
    hours = dt_s / 3600.0
    total = 0.0
    for node in dag.nodes:
        load = loads[node.profile_key]
        inst = smallest_instance(catalog, placement.region_of(node.id), load.cpu_cores, load.mem_gb)
        total += inst.price_hr * hours
    total += catalog.storage_price_gb_month * image_gb * storage_regions / HOURS_PER_MONTH * hours
    for u, v in dag.edges:
        ru, rv = placement.region_of(u), placement.region_of(v)
        if ru != rv:
            total += catalog.egress_usd_per_gb(ru, rv) * payload_gb * traffic_rps * dt_s
    return total


@dataclass
class Decision:
    placement: Placement
    solve_time_s: float
    evaluations: int
    search_space_log10: float
    movable: list[int]
    retained: list[str]


class _EvalCache:
    """Per-bucket placement evaluators for fast tick accounting."""

    def __init__(self, scenario: Scenario, storage_regions: int):
        self.scenario = scenario
        self.storage_regions = storage_regions
        self._cache: dict[int, PlacementEvaluator] = {}

    def at_bucket(self, bucket: int) -> PlacementEvaluator:
        ev = self._cache.get(bucket)
        if ev is None:
            s = self.scenario
            ev = PlacementEvaluator(
                s.dag,
                s.profiles.buckets[bucket].per_ms,
                s.infra,
                list(s.allowed_regions),
                s.base_region,
                payload_gb=s.payload_gb,
                image_gb=s.image_gb,
                storage_regions=self.storage_regions,
            )
            self._cache[bucket] = ev
        return ev


def _ci_trend(infra: InfraBundle, region: str, t: int) -> float:
    vals = [ci_at(infra.carbon[region], t - i * HOUR) for i in range(1, TREND_HOURS + 1)]
    return float(np.mean(vals))


def _ci_forecast(scenario: Scenario, region: str, t: int) -> float:
    if scenario.ci_forecast == "persistence":
        return ci_at(scenario.infra.carbon[region], t)
    return ci_at(scenario.infra.carbon[region], t + HOUR)


def run(scenario: Scenario, strategy) -> MetricsLog:
    """Simulate one scenario under one placement strategy."""
    from .optimizer import carbon_trigger, workload_trigger  # cycle-free import

    s = scenario
    strategy.configure(s)
    jitter_rng_seed = derive_seed(s.seed, "jitter")

    model: GbdtModel | None = None
    if s.forecaster_enabled:
        warmup = s.traffic.slice_between(int(s.traffic.timestamps[0]), s.horizon_start)
        model = train(warmup, s.forecast)

    ticks = np.arange(s.horizon_start, s.horizon_end, STEP_S, dtype=np.int64)
    n_ticks = len(ticks)
    n_services = len(s.dag.nodes)
    region_ids = list(s.allowed_regions)
    region_pos = {r: i for i, r in enumerate(region_ids)}

    def estimate_at(t: int) -> float:
        if model is not None:
            i = (t - int(s.traffic.timestamps[0])) // STEP_S
            history = s.traffic.values[i - N_LAGS : i]
            return hour_estimate(predict_window(model, history, t))
        return s.traffic.value_at(t)

    def ci_now_at(t: int) -> dict[str, float]:
        return {r: ci_at(s.infra.carbon[r], t) for r in region_ids}

    # initial placement: decided once before the horizon begins
    est0 = estimate_at(s.horizon_start)
    decision = strategy.decide(s.horizon_start, est0, ci_now_at(s.horizon_start))
    current = decision.placement
    current_bucket = bucket_index(s.profiles, est0)
    pending: tuple[Placement, int] | None = None

    cache = _EvalCache(s, strategy.storage_regions())

    carbon = np.zeros(n_ticks)
    cost = np.zeros(n_ticks)
    latency = np.zeros(n_ticks)
    violations = np.zeros(n_ticks)
    counts = np.zeros((n_ticks, len(region_ids)), dtype=np.int32)
    trig_c = np.zeros(n_ticks, dtype=bool)
    trig_w = np.zeros(n_ticks, dtype=bool)
    events: list[dict] = [_decision_event(s.horizon_start, "initial", decision, None, 0.0)]

    n_triggers = 0
    n_changes = 0
    moved_fracs: list[float] = []
    solve_total = 0.0
    evals_total = decision.evaluations

    def count_vector(placement: Placement) -> np.ndarray:
        vec = np.zeros(len(region_ids), dtype=np.int32)
        for node in s.dag.nodes:
            vec[region_pos[placement.region_of(node.id)]] += 1
        return vec

    cur_counts = count_vector(current)
    jrng = np.random.default_rng(jitter_rng_seed)

    for k, t in enumerate(map(int, ticks)):
        if pending is not None and k >= pending[1]:
            current = pending[0]
            cur_counts = count_vector(current)
            pending = None

        traffic = s.traffic.value_at(t)
        hourly = t % HOUR == 0 and t > s.horizon_start

        fire_c = fire_w = False
        estimate = None
        if pending is None:
            if hourly:
                estimate = estimate_at(t)
                fire_w = workload_trigger(current_bucket, bucket_index(s.profiles, estimate))
                fire_c = any(
                    carbon_trigger(_ci_trend(s.infra, r, t), _ci_forecast(s, r, t))
                    for r in region_ids
                )
            elif model is None:
                # reactive mode: profiler-observed load shifts trigger immediately
                estimate = traffic
                fire_w = workload_trigger(current_bucket, bucket_index(s.profiles, estimate))

        if fire_c or fire_w:
            trig_c[k] = fire_c
            trig_w[k] = fire_w
            n_triggers += 1
            decision = strategy.decide(t, estimate, ci_now_at(t))
            solve_total += decision.solve_time_s
            evals_total += decision.evaluations
            new_placement = decision.placement
            moved = sum(
                1
                for m in decision.movable
                if new_placement.region_of(m) != current.region_of(m)
            )
            changed = moved > 0
            if changed:
                n_changes += 1
                moved_fracs.append(moved / max(1, len(decision.movable)))
                pending = (new_placement, k + s.migration_delay_ticks)
            current_bucket = bucket_index(s.profiles, estimate)
            events.append(
                _decision_event(
                    t,
                    "carbon+workload" if fire_c and fire_w else "carbon" if fire_c else "workload",
                    decision,
                    changed,
                    moved / max(1, len(decision.movable)),
                )
            )

        bucket = bucket_index(s.profiles, traffic)
        ev = cache.at_bucket(bucket)
        ci_vec = ev.ci_vector(ci_now_at(t))
        res = ev.evaluate(ev.assign_from_placement(current.assign), ci_vec, traffic)
        lat = float(res.latency_ms[0])
        carbon[k] = float(res.carbon_g_hr[0]) / TICKS_PER_HOUR
        cost[k] = float(res.cost_usd_hr[0]) / TICKS_PER_HOUR
        if pending is not None:
            res_new = ev.evaluate(ev.assign_from_placement(pending[0].assign), ci_vec, traffic)
            cost[k] += float(res_new.cost_usd_hr[0]) / TICKS_PER_HOUR  # dual billing
        latency[k] = lat
        if s.jitter_sigma > 0:
            draws = jrng.lognormal(0.0, s.jitter_sigma, size=s.n_draws)
            violations[k] = float(np.mean(lat * draws > s.slo_ms))
        else:
            violations[k] = 1.0 if lat > s.slo_ms else 0.0
        counts[k] = cur_counts

    days = (s.horizon_end - s.horizon_start) / 86400.0
    summary = {
        "scenario": s.name,
        "strategy": strategy.name,
        "seed": s.seed,
        "total_carbon_g": float(carbon.sum()),
        "total_cost_usd": float(cost.sum()),
        "mean_latency_ms": float(latency.mean()),
        "violation_frac": float(violations.mean()),
        "triggers": n_triggers,
        "placement_changes": n_changes,
        "adaptation_rate": (n_changes / n_triggers) if n_triggers else None,
        "avg_ms_moved_frac": float(np.mean(moved_fracs)) if moved_fracs else None,
        "changes_per_day": n_changes / days,
        "solve_time_total_s": solve_total,
        "optimizer_evaluations": evals_total,
        "region_share": {
            r: float(counts[:, i].sum()) / float(counts.sum())
            for i, r in enumerate(region_ids)
        },
    }
    assert np.all(counts.sum(axis=1) == n_services)
    return MetricsLog(
        scenario=s.name,
        strategy=strategy.name,
        seed=s.seed,
        region_ids=region_ids,
        ticks=ticks,
        carbon_g=carbon,
        cost_usd=cost,
        latency_ms=latency,
        violation_frac=violations,
        region_counts=counts,
        trigger_carbon=trig_c,
        trigger_workload=trig_w,
        events=events,
        summary=summary,
    )


def _decision_event(t, kind, decision: Decision, changed, moved_frac) -> dict:
    return {
        "t": format_utc(t),
        "kind": kind,
        "changed": changed,
        "moved_frac": moved_frac,
        "solve_time_s": decision.solve_time_s,
        "evaluations": decision.evaluations,
        "search_space_log10": decision.search_space_log10,
        "retained": decision.retained,
        "n_movable": len(decision.movable),
        "assign": {str(k): v for k, v in sorted(decision.placement.assign.items())},
    }


def stability_summary(log: MetricsLog) -> dict:
    """Adaptation/stability digest recomputed from the event list."""
    triggers = [e for e in log.events if e["kind"] != "initial"]
    changes = [e for e in triggers if e["changed"]]
    days = (int(log.ticks[-1]) + STEP_S - int(log.ticks[0])) / 86400.0
    return {
        "adaptation_rate": (len(changes) / len(triggers)) if triggers else None,
        "avg_ms_moved_frac": (
            float(np.mean([e["moved_frac"] for e in changes])) if changes else None
        ),
        "changes_per_day": len(changes) / days,
    }


def load_scenario(
    path,
    seed: int | None = None,
    slo_ms: float | None = None,
    forecaster_enabled: bool | None = None,
) -> Scenario:
    """Load scenario.json and every file it references (paths are relative)."""
    from .appmodel import load_app
    from .forecaster import load_traffic_csv
    from .infra import load_infra, parse_utc
    from .profiler import (
        DEFAULT_K_MAX,
        DEFAULT_K_MIN,
        DEFAULT_N_MIN,
        MODE_MEAN_SIGMA,
        build_buckets,
        load_profile_csv,
    )

    path = Path(path)
    raw = json.loads(path.read_text())
    base_dir = path.parent

    dag = load_app(base_dir / raw["app"])
    infra = load_infra(
        base_dir / raw["infra"]["carbon_dir"],
        base_dir / raw["infra"]["pricing"],
        base_dir / raw["infra"]["rtt"],
    )
    traffic = load_traffic_csv(base_dir / raw["traffic"])
    bucket_cfg = raw.get("bucket", {})
    profiles = build_buckets(
        load_profile_csv(base_dir / raw["profile"]),
        n_min=bucket_cfg.get("n_min", DEFAULT_N_MIN),
        k_max=bucket_cfg.get("k_max", DEFAULT_K_MAX),
        k_min=bucket_cfg.get("k_min", DEFAULT_K_MIN),
        mode=raw.get("profile_mode", MODE_MEAN_SIGMA),
    )
    weights = Weights(**raw.get("weights", {}))
    ga_raw = raw.get("ga", {})
    ga = GaConfig(**{**ga_raw, "seed": 0})
    pin = PinPolicy(theta=raw.get("theta", 0.85), enabled=raw.get("pin_enabled", True))

    return Scenario(
        name=raw.get("name", path.stem),
        dag=dag,
        infra=infra,
        traffic=traffic,
        profiles=profiles,
        base_region=raw["base_region"],
        allowed_regions=list(raw["allowed_regions"]),
        slo_ms=float(slo_ms if slo_ms is not None else raw["slo_ms"]),
        horizon_start=parse_utc(raw["horizon"]["start"]),
        horizon_end=parse_utc(raw["horizon"]["end"]),
        weights=weights,
        pin_policy=pin,
        ga=ga,
        jitter_sigma=float(raw.get("jitter_sigma", 0.15)),
        migration_delay_ticks=int(raw.get("migration_delay_ticks", 2)),
        payload_gb=float(raw.get("request_payload_gb", 0.0)),
        image_gb=float(raw.get("image_gb", 5.0)),
        seed=int(seed if seed is not None else raw.get("seed", 0)),
        forecaster_enabled=(
            forecaster_enabled
            if forecaster_enabled is not None
            else bool(raw.get("forecaster_enabled", True))
        ),
    )


def write_metrics_csv(path, log: MetricsLog) -> None:
    with open(Path(path), "w", newline="") as fh:
        cols = ["timestamp", "carbon_g", "cost_usd", "latency_ms", "violation_frac",
                "trigger_carbon", "trigger_workload"] + [f"n_{r}" for r in log.region_ids]
        fh.write(",".join(cols) + "\n")
        for k in range(len(log.ticks)):
            row = [
                format_utc(int(log.ticks[k])),
                f"{log.carbon_g[k]:.10g}",
                f"{log.cost_usd[k]:.10g}",
                f"{log.latency_ms[k]:.10g}",
                f"{log.violation_frac[k]:.10g}",
                str(int(log.trigger_carbon[k])),
                str(int(log.trigger_workload[k])),
            ] + [str(int(c)) for c in log.region_counts[k]]
            fh.write(",".join(row) + "\n")


def write_events_jsonl(path, log: MetricsLog) -> None:
    with open(Path(path), "w") as fh:
        for e in log.events:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


def write_summary_json(path, log: MetricsLog) -> None:
    # wall-clock solve time stays out of the file so identical seeds produce
    # byte-identical summaries; report.json carries the timing
    stable = {k: v for k, v in log.summary.items() if k != "solve_time_total_s"}
    Path(path).write_text(json.dumps(stable, indent=2, sort_keys=True) + "\n")
