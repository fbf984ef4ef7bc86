"""Command-line entry points.

Subcommands: run, compare, ablate, scale, forecast-eval, gen. All randomness
derives from --seed through sha256-based per-component splitting
(simulator.derive_seed), so identical flags reproduce byte-identical CSVs.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 infeasible
scenario.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

EXIT_VALIDATION = 3
EXIT_INFEASIBLE = 4


@dataclass
class RunReport:
    scenario: str
    strategy: str
    seed: int
    carbon_vs_static: float
    cost_vs_static: float
    mean_latency_ms: float
    violation_frac: float
    solve_time_total_s: float
    adaptation_rate: float | None
    changes_per_day: float
    files: dict[str, str]


def _write_rows(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _run_once(scenario_path, strategy_name, seed, forecaster_enabled=None, slo_ms=None):
    from .baselines import make_strategy
    from .simulator import load_scenario, run

    scenario = load_scenario(
        scenario_path, seed=seed, slo_ms=slo_ms, forecaster_enabled=forecaster_enabled
    )
    return run(scenario, make_strategy(strategy_name))


def cmd_run(args) -> int:
    from .simulator import write_events_jsonl, write_metrics_csv, write_summary_json

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = _run_once(args.scenario, args.strategy, args.seed,
                    forecaster_enabled=None if args.forecaster else False)
    files = {
        "metrics": str(out / "metrics.csv"),
        "events": str(out / "events.jsonl"),
        "summary": str(out / "summary.json"),
    }
    write_metrics_csv(files["metrics"], log)
    write_events_jsonl(files["events"], log)
    write_summary_json(files["summary"], log)

    if args.strategy == "static":
        static_summary = log.summary
    else:
        static_summary = _run_once(args.scenario, "static", args.seed).summary
    report = RunReport(
        scenario=log.scenario,
        strategy=log.strategy,
        seed=args.seed,
        carbon_vs_static=log.summary["total_carbon_g"] / static_summary["total_carbon_g"],
        cost_vs_static=log.summary["total_cost_usd"] / static_summary["total_cost_usd"],
        mean_latency_ms=log.summary["mean_latency_ms"],
        violation_frac=log.summary["violation_frac"],
        solve_time_total_s=log.summary["solve_time_total_s"],
        adaptation_rate=log.summary["adaptation_rate"],
        changes_per_day=log.summary["changes_per_day"],
        files=files,
    )
    (out / "report.json").write_text(json.dumps(report.__dict__, indent=2, sort_keys=True) + "\n")
    print(f"{log.strategy} on {log.scenario}: carbon {report.carbon_vs_static:.3f}x, "
          f"cost {report.cost_vs_static:.3f}x vs static, latency {report.mean_latency_ms:.1f} ms, "
          f"violations {report.violation_frac:.2%}")
    return 0


def cmd_compare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    strategies = args.strategies.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]

    logs = {}
    for seed in seeds:
        for strat in dict.fromkeys(strategies + ["static"]):
            logs[(strat, seed)] = _run_once(args.scenario, strat, seed)

    rows = []
    region_ids = logs[(strategies[0], seeds[0])].region_ids
    share_rows = []
    for strat in strategies:
        for seed in seeds:
            log = logs[(strat, seed)]
            ref = logs[("static", seed)]
            s, r = log.summary, ref.summary
            rows.append([
                strat, seed,
                _fmt(s["total_carbon_g"] / r["total_carbon_g"]),
                _fmt(s["total_cost_usd"] / r["total_cost_usd"]),
                _fmt(s["mean_latency_ms"] / r["mean_latency_ms"]),
                _fmt(s["violation_frac"]),
                _fmt(s["solve_time_total_s"]),
                _fmt(s["triggers"]),
                _fmt(s["adaptation_rate"] if s["adaptation_rate"] is not None else ""),
                _fmt(s["avg_ms_moved_frac"] if s["avg_ms_moved_frac"] is not None else ""),
            ])
            share_rows.append([strat, seed] + [_fmt(s["region_share"][rid]) for rid in region_ids])

    _write_rows(out / "comparison.csv",
                ["strategy", "seed", "carbon_vs_static", "cost_vs_static", "latency_vs_static",
                 "violation_frac", "solve_time_s", "triggers", "adaptation_rate", "avg_ms_moved_frac"],
                rows)
    _write_rows(out / "region_distribution.csv", ["strategy", "seed"] + list(region_ids), share_rows)
    print(f"wrote {out / 'comparison.csv'} ({len(rows)} rows)")
    return 0


def cmd_ablate(args) -> int:
    from .appmodel import activation_stages
    from .baselines import AcesoStrategy
    from .optimizer import OptimizeContext, optimize, prepare
    from .simulator import load_scenario

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = load_scenario(args.scenario, seed=args.seed, slo_ms=args.slo_ms)
    from .infra import ci_at

    strat = AcesoStrategy()
    strat.configure(scenario)
    t = scenario.horizon_start
    traffic = scenario.traffic.value_at(t)
    ci_now = {r: ci_at(scenario.infra.carbon[r], t) for r in scenario.allowed_regions}

    variants = [
        ("both", True, True),
        ("no-filtering", False, True),
        ("no-pinning", True, False),
        ("neither", False, False),
    ]
    rows = []
    for name, use_filter, use_pin in variants:
        ctx = strat._context(t, traffic, ci_now,
                             use_region_filter=use_filter, use_pinning=use_pin)
        prep = prepare(ctx)
        result = optimize(ctx, prep)
        rows.append([
            name,
            len(prep.movable),
            len(prep.retained),
            _fmt(result.search_space_log10),
            _fmt(result.solve_time_s),
            _fmt(result.objective),
        ])
        print(f"{name:13s} movable={len(prep.movable):4d} regions={len(prep.retained)} "
              f"space_log10={result.search_space_log10:8.2f} solve={result.solve_time_s:6.2f}s")
    _write_rows(out / "ablation.csv",
                ["variant", "movable", "retained_regions", "search_space_log10",
                 "solve_time_s", "objective"],
                rows)
    return 0


def cmd_scale(args) -> int:
    from .fixtures import build_scale_context
    from .optimizer import optimize, prepare

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    counts = [int(c) for c in args.counts.split(",")]
    region_sets = args.region_sets.split(",")
    slo_levels = args.slo_levels.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]

    rows = []
    for count in counts:
        for region_set in region_sets:
            for slo_level in slo_levels:
                times = []
                for seed in seeds:
                    ctx, meta = build_scale_context(
                        n_services=count, region_set=region_set,
                        slo_level=slo_level, seed=seed,
                    )
                    prep = prepare(ctx)
                    result = optimize(ctx, prep)
                    times.append(result.solve_time_s)
                    rows.append([
                        count, region_set, slo_level, seed, len(prep.movable),
                        len(prep.retained), _fmt(result.search_space_log10),
                        _fmt(result.solve_time_s), _fmt(result.evaluations),
                    ])
                med = sorted(times)[len(times) // 2]
                print(f"M={count:5d} regions={region_set:6s} slo={slo_level:8s} "
                      f"median solve {med:7.2f}s over {len(seeds)} seeds")
    _write_rows(out / "scaling.csv",
                ["services", "region_set", "slo_level", "seed", "movable",
                 "retained_regions", "search_space_log10", "solve_time_s", "evaluations"],
                rows)
    return 0


def cmd_forecast_eval(args) -> int:
    from .forecaster import (
        ForecastConfig,
        N_LAGS,
        TrafficTrace,
        hour_estimate,
        lag_mean,
        load_traffic_csv,
        naive_persistence,
        predict_window,
        train,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = load_traffic_csv(args.trace)
    n = len(trace.values)
    split = int(n * args.split)
    if split < N_LAGS + 1 or n - split < N_LAGS + 1:
        print("trace too short for the requested split", file=sys.stderr)
        return EXIT_VALIDATION
    train_trace = TrafficTrace(trace.timestamps[:split], trace.values[:split])
    model = train(train_trace, ForecastConfig())

    abs_err = {"gbdt": [], "persistence": [], "lag-mean": []}
    infer_times = []
    for i in range(split, n - 1):
        history = trace.values[i - N_LAGS + 1 : i + 1]
        t = int(trace.timestamps[i])
        actual = trace.values[i + 1]
        t0 = time.perf_counter()
        pred = predict_window(model, history, t)[0]
        infer_times.append((time.perf_counter() - t0) / 12.0)  # per one-step prediction
        abs_err["gbdt"].append(abs(pred - actual))
        abs_err["persistence"].append(abs(naive_persistence(history)[0] - actual))
        abs_err["lag-mean"].append(abs(lag_mean(history)[0] - actual))

    rows = []
    for name in ("gbdt", "persistence", "lag-mean"):
        mae = float(np.mean(abs_err[name]))
        t_inf = float(np.mean(infer_times)) if name == "gbdt" else 0.0
        rows.append([name, _fmt(mae), _fmt(t_inf * 1000.0)])
        print(f"{name:12s} MAE {mae:8.3f}  inference {t_inf * 1000.0:.4f} ms")
    _write_rows(out / "forecast_eval.csv", ["model", "mae", "inference_ms"], rows)
    return 0


def cmd_gen(args) -> int:
    from .fixtures import build_deathstar_fixture, build_eu_fixture
    from .forecaster import write_traffic_csv
    from .infra import serialize_trace
    from .simulator import derive_seed
    from .synth import gen_ci_trace, gen_layered_dag, gen_traffic_trace

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.preset == "deathstar":
        path = build_deathstar_fixture(out)
        print(f"wrote {path}")
        return 0
    if args.preset == "eu4day":
        path = build_eu_fixture(out, seed=args.seed, n_services=args.services,
                                days=args.days)
        print(f"wrote {path}")
        return 0

    start = 1691366400  # 2023-08-07T00:00:00Z
    if args.kind == "traffic":
        trace = gen_traffic_trace(start, n_days=args.days, base_rps=args.base_rps,
                                  bursts_per_day=args.bursts_per_day,
                                  seed=derive_seed(args.seed, "traffic"))
        write_traffic_csv(out / "traffic.csv", trace)
        print(f"wrote {out / 'traffic.csv'}")
    elif args.kind == "ci":
        trace = gen_ci_trace("region", start, int(args.days * 24), mean=args.ci_mean,
                             seed=derive_seed(args.seed, "ci"))
        (out / "ci.csv").write_text(serialize_trace(trace))
        print(f"wrote {out / 'ci.csv'}")
    elif args.kind == "app":
        dag = gen_layered_dag(args.services, seed=derive_seed(args.seed, "app"))
        app = {
            "services": [
                {"id": n.id, "name": n.name, "kind": n.kind, "profile_key": n.profile_key}
                for n in dag.nodes
            ],
            "edges": [list(e) for e in dag.edges],
            "frontend": dag.frontend_id,
        }
        (out / "app.json").write_text(json.dumps(app, indent=2) + "\n")
        print(f"wrote {out / 'app.json'}")
    else:
        print(f"unknown --kind {args.kind}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carbonplace",
        description="Carbon- and cost-aware microservice placement: simulate, "
                    "optimize, and reproduce the comparison/ablation/scaling experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out")
        p.add_argument("--config", default=None, help="optional JSON file with flag overrides")

    p_run = sub.add_parser("run", help="simulate one scenario under one strategy")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--strategy", default="aceso",
                       choices=["aceso", "static", "vanilla-ga", "sampling", "brute-force"])
    p_run.add_argument("--no-forecaster", dest="forecaster", action="store_false",
                       help="reactive mode: trigger on observed load instead of forecasts")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run several strategies x seeds, emit comparison tables")
    p_cmp.add_argument("--scenario", required=True)
    p_cmp.add_argument("--strategies", default="aceso,static,vanilla-ga,sampling")
    p_cmp.add_argument("--seeds", default="0,1,2")
    add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_abl = sub.add_parser("ablate", help="search-space ablation of the two prunings")
    p_abl.add_argument("--scenario", required=True)
    p_abl.add_argument("--slo-ms", type=float, default=None,
                       help="override the scenario SLO (tighter SLOs engage pinning)")
    add_common(p_abl)
    p_abl.set_defaults(func=cmd_ablate)

    p_scale = sub.add_parser("scale", help="solve-time scaling over app sizes/regions/SLOs")
    p_scale.add_argument("--counts", default="50,100,200,400")
    p_scale.add_argument("--region-sets", dest="region_sets", default="eu")
    p_scale.add_argument("--slo-levels", dest="slo_levels", default="relaxed")
    p_scale.add_argument("--seeds", default="0,1,2,3,4")
    add_common(p_scale)
    p_scale.set_defaults(func=cmd_scale)

    p_fc = sub.add_parser("forecast-eval", help="held-out MAE of the forecaster vs baselines")
    p_fc.add_argument("--trace", required=True)
    p_fc.add_argument("--split", type=float, default=0.7, help="training fraction")
    add_common(p_fc)
    p_fc.set_defaults(func=cmd_forecast_eval)

    p_gen = sub.add_parser("gen", help="generate synthetic fixtures")
    p_gen.add_argument("--preset", choices=["deathstar", "eu4day"], default=None)
    p_gen.add_argument("--kind", choices=["traffic", "ci", "app"], default="traffic")
    p_gen.add_argument("--days", type=float, default=4.0)
    p_gen.add_argument("--base-rps", dest="base_rps", type=float, default=100.0)
    p_gen.add_argument("--bursts-per-day", dest="bursts_per_day", type=float, default=4.0)
    p_gen.add_argument("--ci-mean", dest="ci_mean", type=float, default=300.0)
    p_gen.add_argument("--services", type=int, default=100)
    add_common(p_gen)
    p_gen.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    from .infra import InfraValidationError
    from .appmodel import AppValidationError
    from .optimizer import InfeasibleScenarioError, SearchSpaceError

    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
        for key, value in overrides.items():
            setattr(args, key.replace("-", "_"), value)
    try:
        return args.func(args)
    except InfeasibleScenarioError as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (AppValidationError, InfraValidationError, SearchSpaceError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
