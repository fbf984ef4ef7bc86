import json

import numpy as np
import pytest

from carbonplace.appmodel import activation_stages
from carbonplace.baselines import make_strategy
from carbonplace.fixtures import (
    EU_START,
    OFFLOAD_SUBTREE,
    build_synthetic_infra,
    deathstar_dag,
    deathstar_loads,
    eu_profile_specs,
    loads_from_specs,
)
from carbonplace.infra import HOUR, load_infra
from carbonplace.optimizer import Placement
from carbonplace.simulator import (
    Scenario,
    carbon_step,
    cost_step,
    e2e_latency,
    load_scenario,
    run,
    stability_summary,
    violation_rate,
    write_metrics_csv,
)
from carbonplace.synth import gen_layered_dag


def spearman(a, b):
    ra = np.argsort(np.argsort(a))
    rb = np.argsort(np.argsort(b))
    return np.corrcoef(ra, rb)[0, 1]


@pytest.fixture(scope="module")
def golden_infra(golden_dir):
    return load_infra(golden_dir / "carbon", golden_dir / "pricing.json", golden_dir / "rtt.csv")


def enumerate_latency(dag, placement, loads, infra):
    """Exhaustive path-enumeration latency oracle."""
    rtt = infra.rtt

    def hop(u, v):
        return float(rtt.rtt_ms[rtt.index[placement.region_of(u)],
                                rtt.index[placement.region_of(v)]])

    sinks = set(dag.sinks())
    completion = {}

    def walk(node, acc):
        acc = acc + loads[dag.node(node).profile_key].latency_ms
        completion[node] = max(completion.get(node, -1.0), acc)
        for nxt in dag.successors(node):
            walk(nxt, acc + hop(node, nxt))

    walk(dag.frontend_id, 0.0)
    last = max(sinks, key=lambda s: (completion[s], -s))
    owner = dag.sink_owner(last)
    return completion[last] + float(
        rtt.rtt_ms[rtt.index[placement.region_of(owner)], rtt.index[placement.base_region]]
    )


class TestE2eLatency:
    def test_golden_all_in_base_is_63ms(self, golden_infra):
        dag = deathstar_dag()
        placement = Placement(assign={}, base_region="eu-south-2")
        assert e2e_latency(dag, placement, deathstar_loads(), golden_infra) == pytest.approx(63.0, abs=1.0)

    def test_golden_offload_is_111ms(self, golden_infra):
        dag = deathstar_dag()
        placement = Placement(
            assign={m: "eu-north-1" for m in OFFLOAD_SUBTREE}, base_region="eu-south-2"
        )
        assert e2e_latency(dag, placement, deathstar_loads(), golden_infra) == pytest.approx(111.0, abs=1.0)

    def test_matches_enumeration_on_random_dags(self):
        infra = build_synthetic_infra("eu", EU_START - 12 * HOUR, 48, seed=0)
        rng = np.random.default_rng(12)
        for trial in range(40):
            dag = gen_layered_dag(int(rng.integers(3, 13)), seed=trial)
            specs = eu_profile_specs(dag, seed=trial)
            loads = loads_from_specs(specs, 100.0)
            movable = dag.movable_ids()
            assign = {
                m: infra.region_ids[int(rng.integers(0, 4))]
                for m in movable if rng.random() < 0.7
            }
            placement = Placement(assign=assign, base_region="eu-central-1")
            got = e2e_latency(dag, placement, loads, infra)
            want = enumerate_latency(dag, placement, loads, infra)
            assert got == pytest.approx(want)


class TestViolationRate:
    def test_zero_jitter_below_slo(self):
        assert violation_rate(100.0, 300.0, jitter_sigma=0.0) == 0.0

    def test_zero_jitter_above_slo(self):
        assert violation_rate(400.0, 300.0, jitter_sigma=0.0) == 1.0

    def test_latency_at_slo_is_half(self):
        rate = violation_rate(300.0, 300.0, jitter_sigma=0.2, n_draws=20000, seed=3)
        assert rate == pytest.approx(0.5, abs=0.05)

    def test_needs_draws(self):
        with pytest.raises(ValueError):
            violation_rate(1.0, 1.0, 0.1, n_draws=0)


class TestSteps:
    def test_zero_ci_means_zero_carbon(self, golden_infra):
        dag = deathstar_dag()
        placement = Placement(assign={}, base_region="eu-south-2")
        ci = {"eu-south-2": 0.0, "eu-north-1": 0.0}
        assert carbon_step(dag, placement, deathstar_loads(), ci) == 0.0

    def test_unit_conversion(self):
        from carbonplace.appmodel import AppDag, Microservice
        from carbonplace.profiler import ServiceLoad

        dag = AppDag(nodes=(Microservice(0, "fe", "frontend", "fe"),), edges=(), frontend_id=0)
        loads = {"fe": ServiceLoad(energy_j=3.6e6, latency_ms=1, cpu_cores=1, mem_gb=1, net_mbps=1)}
        placement = Placement(assign={}, base_region="r")
        assert carbon_step(dag, placement, loads, {"r": 100.0}) == pytest.approx(100.0)

    def test_two_region_hand_sum(self, golden_infra):
        dag = deathstar_dag()
        loads = deathstar_loads()
        placement = Placement(
            assign={m: "eu-north-1" for m in OFFLOAD_SUBTREE}, base_region="eu-south-2"
        )
        ci = {"eu-south-2": 180.0, "eu-north-1": 30.0}
        moved = sum(loads[f"M{m}"].energy_j for m in OFFLOAD_SUBTREE)
        total = sum(loads[n.profile_key].energy_j for n in dag.nodes)
        expected = (moved * 30.0 + (total - moved) * 180.0) / 3.6e6
        assert carbon_step(dag, placement, loads, ci) == pytest.approx(expected)

    def test_cost_all_in_base_no_payload(self, golden_infra):
        dag = deathstar_dag()
        loads = deathstar_loads()
        placement = Placement(assign={}, base_region="eu-south-2")
        got = cost_step(dag, placement, loads, golden_infra, traffic_rps=100.0,
                        dt_s=3600.0, payload_gb=0.0, image_gb=5.0, storage_regions=1)
        from carbonplace.infra import smallest_instance

        compute = sum(
            smallest_instance(golden_infra.pricing, "eu-south-2",
                              loads[n.profile_key].cpu_cores,
                              loads[n.profile_key].mem_gb).price_hr
            for n in dag.nodes
        )
        storage = 0.10 * 5.0 * 1 / 730.0
        assert got == pytest.approx(compute + storage)

    def test_storage_example_one_dollar_per_month(self, golden_infra):
        # 0.10 USD/GB-month, 5 GB image, replicated in 2 regions -> 1 USD/month
        from carbonplace.appmodel import AppDag, Microservice
        from carbonplace.infra import InstanceType, PricingCatalog, InfraBundle

        dag = AppDag(nodes=(Microservice(0, "fe", "frontend", "fe"),), edges=(), frontend_id=0)
        free = (InstanceType("free", 64, 512, 0.0),)
        infra = InfraBundle(
            regions=golden_infra.regions,
            carbon=golden_infra.carbon,
            pricing=PricingCatalog(
                instances={r.id: free for r in golden_infra.regions},
                storage_price_gb_month=0.10, egress_default=0.0, egress_pairs={},
            ),
            rtt=golden_infra.rtt,
        )
        from carbonplace.profiler import ServiceLoad

        loads = {"fe": ServiceLoad(0, 1, 1, 1, 0)}
        month = cost_step(dag, Placement(assign={}, base_region="eu-south-2"), loads,
                          infra, traffic_rps=0.0, dt_s=730.0 * 3600.0,
                          image_gb=5.0, storage_regions=2)
        assert month == pytest.approx(1.00)

    def test_cross_region_edge_egress_hand_computed(self, golden_infra):
        dag = deathstar_dag()
        loads = deathstar_loads()
        placement = Placement(assign={5: "eu-north-1"}, base_region="eu-south-2")
        base = cost_step(dag, Placement(assign={}, base_region="eu-south-2"), loads,
                         golden_infra, 100.0, dt_s=300.0, payload_gb=1e-6,
                         image_gb=0.0, storage_regions=1)
        moved = cost_step(dag, placement, loads, golden_infra, 100.0, dt_s=300.0,
                          payload_gb=1e-6, image_gb=0.0, storage_regions=1)
        # M5 has one inbound and one outbound edge; same instance price in
        # Sweden differs, so subtract the compute delta first
        from carbonplace.infra import smallest_instance

        price_base = smallest_instance(golden_infra.pricing, "eu-south-2", 1.5, 3.0).price_hr
        price_se = smallest_instance(golden_infra.pricing, "eu-north-1", 1.5, 3.0).price_hr
        compute_delta = (price_se - price_base) * 300.0 / 3600.0
        egress = 2 * 0.02 * 1e-6 * 100.0 * 300.0
        assert moved - base == pytest.approx(compute_delta + egress)


def tiny_scenario(tmp_path, ci_step=0.0, flat_traffic=True, days=1.0, seed=3):
    """A 4-service scenario with controllable carbon and traffic signals."""
    import csv as _csv

    from carbonplace.fixtures import eu_pricing_dict
    from carbonplace.forecaster import STEP_S, TrafficTrace, write_traffic_csv
    from carbonplace.infra import CarbonTrace, format_utc, serialize_trace
    from carbonplace.profiler import ProfileSample, ServiceLoad, write_profile_csv

    out = tmp_path / "tiny"
    (out / "carbon").mkdir(parents=True)
    dag = gen_layered_dag(4, seed=1)
    app = {
        "services": [
            {"id": n.id, "name": n.name, "kind": n.kind, "profile_key": n.profile_key}
            for n in dag.nodes
        ],
        "edges": [list(e) for e in dag.edges],
        "frontend": dag.frontend_id,
    }
    (out / "app.json").write_text(json.dumps(app))
    (out / "pricing.json").write_text(json.dumps(eu_pricing_dict("eu")))
    region_ids = list(eu_pricing_dict("eu")["regions"])
    with open(out / "rtt.csv", "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["region"] + region_ids)
        from carbonplace.fixtures import _rtt_between

        for r1 in region_ids:
            writer.writerow([r1] + [_rtt_between(r1, r2) for r2 in region_ids])

    start = EU_START
    trace_start = start - 86400
    n_hours = int(24 + days * 24 + 2 + 12)
    for rid in region_ids:
        base_ci = 300.0 if rid == "eu-central-1" else 80.0
        ci = np.full(n_hours, base_ci)
        if ci_step and rid == "eu-central-1":
            # +step jump halfway through the horizon
            jump_at = 24 + 12 + int(days * 12)
            ci[jump_at:] = base_ci * (1.0 + ci_step)
        ts = (trace_start - 12 * HOUR) + HOUR * np.arange(n_hours, dtype=np.int64)
        (out / "carbon" / f"{rid}.csv").write_text(
            serialize_trace(CarbonTrace(rid, ts, ci))
        )

    n = int((1 + days) * 86400 // STEP_S)
    ts = trace_start + STEP_S * np.arange(n, dtype=np.int64)
    values = np.full(n, 50.0)
    trace = TrafficTrace(ts, values)
    write_traffic_csv(out / "traffic.csv", trace)

    loads = {
        n_.profile_key: ServiceLoad(1000.0, 5.0, 1.0, 1.0, 1.0) for n_ in dag.nodes
    }
    samples = [
        ProfileSample(timestamp=int(t), traffic=float(v), per_ms=dict(loads))
        for t, v in zip(ts[:600], np.linspace(30, 70, 600))
    ]
    write_profile_csv(out / "profile.csv", samples)

    scenario = {
        "name": "tiny",
        "app": "app.json",
        "infra": {"carbon_dir": "carbon", "pricing": "pricing.json", "rtt": "rtt.csv"},
        "traffic": "traffic.csv",
        "profile": "profile.csv",
        "base_region": "eu-central-1",
        "allowed_regions": region_ids,
        "slo_ms": 5000.0,
        "horizon": {"start": format_utc(start), "end": format_utc(start + int(days * 86400))},
        "jitter_sigma": 0.1,
        "request_payload_gb": 0.0,
        "image_gb": 1.0,
        "seed": seed,
        "ga": {"population": 16, "max_generations": 40, "patience": 10},
    }
    path = out / "scenario.json"
    path.write_text(json.dumps(scenario))
    return path


class TestRun:
    def test_flat_signals_no_triggers(self, tmp_path):
        path = tiny_scenario(tmp_path)
        log = run(load_scenario(path), make_strategy("static"))
        assert log.summary["triggers"] == 0
        assert log.summary["adaptation_rate"] is None

    def test_ci_step_fires_carbon_trigger(self, tmp_path):
        path = tiny_scenario(tmp_path, ci_step=0.30)
        log = run(load_scenario(path), make_strategy("static"))
        assert log.trigger_carbon.any()
        assert log.summary["triggers"] >= 1

    def test_conservation_and_nonnegativity(self, tmp_path):
        path = tiny_scenario(tmp_path, ci_step=0.30)
        scen = load_scenario(path)
        log = run(scen, make_strategy("aceso"))
        assert np.all(log.region_counts.sum(axis=1) == len(scen.dag.nodes))
        assert np.all(log.carbon_g >= 0)
        assert np.all(log.cost_usd >= 0)
        assert np.all((log.violation_frac >= 0) & (log.violation_frac <= 1))

    def test_seed_determinism_bytes(self, tmp_path):
        path = tiny_scenario(tmp_path, ci_step=0.30)
        outs = []
        for rep in range(2):
            log = run(load_scenario(path, seed=123), make_strategy("aceso"))
            target = tmp_path / f"m{rep}.csv"
            write_metrics_csv(target, log)
            outs.append(target.read_bytes())
        assert outs[0] == outs[1]

    def test_stability_summary_matches_event_replay(self, tmp_path):
        path = tiny_scenario(tmp_path, ci_step=0.30)
        log = run(load_scenario(path), make_strategy("aceso"))
        replay = stability_summary(log)
        assert replay["adaptation_rate"] == log.summary["adaptation_rate"]
        assert replay["changes_per_day"] == pytest.approx(log.summary["changes_per_day"])
        if replay["avg_ms_moved_frac"] is not None:
            assert replay["avg_ms_moved_frac"] == pytest.approx(log.summary["avg_ms_moved_frac"])

    def test_every_trigger_changing_gives_rate_one(self, tmp_path):
        path = tiny_scenario(tmp_path, ci_step=0.30)
        log = run(load_scenario(path), make_strategy("aceso"))
        triggers = [e for e in log.events if e["kind"] != "initial"]
        changes = [e for e in triggers if e["changed"]]
        if triggers and len(changes) == len(triggers):
            assert log.summary["adaptation_rate"] == 1.0


class TestCarbonMonotonicity:
    def test_moving_to_cleaner_region_never_increases_carbon(self):
        from carbonplace.profiler import ServiceLoad

        dag = gen_layered_dag(10, seed=2)
        loads = {n.profile_key: ServiceLoad(2000.0, 5, 1, 1, 1) for n in dag.nodes}
        ci = {"dirty": 400.0, "clean": 50.0, "base": 200.0}
        rng = np.random.default_rng(0)
        movable = dag.movable_ids()
        for _ in range(50):
            assign = {m: str(rng.choice(["dirty", "clean", "base"])) for m in movable}
            placement = Placement(assign=assign, base_region="base")
            before = carbon_step(dag, placement, loads, ci)
            victim = int(rng.choice(movable))
            if assign[victim] == "dirty":
                better = dict(assign)
                better[victim] = "clean"
                after = carbon_step(dag, Placement(assign=better, base_region="base"), loads, ci)
                assert after <= before


@pytest.fixture(scope="module")
def metrics(golden_infra):
    return _replay_static_configs(TestFidelityHarness.CONFIGS, golden_infra)


def _replay_static_configs(configs, golden_infra):
    dag = deathstar_dag()
    loads = deathstar_loads()
    ci = {"eu-south-2": 180.0, "eu-north-1": 30.0}
    out = {}
    for name, moved in configs.items():
        placement = Placement(
            assign={m: "eu-north-1" for m in moved}, base_region="eu-south-2"
        )
        out[name] = {
            "carbon": carbon_step(dag, placement, loads, ci),
            "cost": cost_step(dag, placement, loads, golden_infra, 30.0,
                              payload_gb=1.83e-7, image_gb=5.0, storage_regions=2),
            "latency": e2e_latency(dag, placement, loads, golden_infra),
            "energy_moved": sum(loads[f"M{m}"].energy_j for m in moved),
        }
    return out


class TestFidelityHarness:
    """Replaying the static placement study through the simulator."""

    # placement name -> moved service ids
    CONFIGS = {
        "base": (),
        "M5": (5,),
        "M6": (6,),
        "M4": (4,),
        "M11": (11,),
        "text-subtree": (2, 3, 7),
        "early-subtree-6": OFFLOAD_SUBTREE,
        "home": (8, 9),
        "late-subtree-5": (7, 8, 9, 10, 11),
        "late-subtree-7": (2, 3, 7, 8, 9, 10, 11),
        "early-five": (2, 3, 4, 5, 6),
        "layer-1": (4, 6, 7, 9, 10, 11),
        "layers-12": (3, 4, 5, 6, 7, 9, 10, 11),
        "all": tuple(range(1, 12)),
    }
    EARLY = ("text-subtree", "early-subtree-6", "early-five")
    LATE = ("home", "late-subtree-5", "late-subtree-7")


    def test_carbon_ordering_tracks_moved_energy(self, metrics):
        names = list(self.CONFIGS)
        carbon = np.array([metrics[n]["carbon"] for n in names])
        energy = np.array([metrics[n]["energy_moved"] for n in names])
        # more energy moved to the cleaner region => strictly less carbon
        assert spearman(carbon, -energy) == pytest.approx(1.0)

    def test_paper_reduction_percentages(self, metrics):
        base = metrics["base"]["carbon"]

        def reduction(name):
            return 1.0 - metrics[name]["carbon"] / base

        for single in ("M5", "M6", "M4", "M11"):
            assert 0.03 <= reduction(single) <= 0.05
        assert reduction("early-subtree-6") == pytest.approx(0.21, abs=0.015)
        assert reduction("layers-12") == pytest.approx(0.28, abs=0.015)
        assert reduction("all") == pytest.approx(0.43, abs=0.015)

    def test_cost_ordering_mirrors_carbon_for_early_configs(self, metrics):
        # cost and carbon both fall with the number of services offloaded;
        # within one size class the tiny egress differences reorder costs, so
        # the strict rank check compares configurations of different sizes
        ladder = ["base", "M5", "text-subtree", "early-five", "early-subtree-6"]
        cost = np.array([metrics[n]["cost"] for n in ladder])
        carbon = np.array([metrics[n]["carbon"] for n in ladder])
        assert spearman(cost, carbon) == pytest.approx(1.0)
        assert np.all(np.diff(cost) < 0)
        assert np.all(np.diff(carbon) < 0)

    def test_cost_ratio_of_selected_placement(self, metrics):
        assert metrics["early-subtree-6"]["cost"] / metrics["base"]["cost"] == pytest.approx(
            0.982, abs=0.005
        )

    def test_latency_groups_early_below_late(self, metrics):
        worst_early = max(metrics[n]["latency"] for n in self.EARLY)
        best_late = min(metrics[n]["latency"] for n in self.LATE)
        assert worst_early < best_late
