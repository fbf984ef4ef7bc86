import json
from pathlib import Path

import numpy as np
import pytest

from carbonplace.cli import main


class TestRun:
    def test_run_emits_three_files(self, golden_scenario_path, tmp_path):
        code = main(["run", "--scenario", str(golden_scenario_path),
                     "--strategy", "aceso", "--seed", "7", "--out", str(tmp_path)])
        assert code == 0
        for name in ("metrics.csv", "events.jsonl", "summary.json"):
            assert (tmp_path / name).exists()

    def test_unknown_strategy_is_usage_error(self, golden_scenario_path, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--scenario", str(golden_scenario_path),
                  "--strategy", "magic", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_same_seed_identical_summary(self, golden_scenario_path, tmp_path):
        outs = []
        for rep in range(2):
            out = tmp_path / f"r{rep}"
            main(["run", "--scenario", str(golden_scenario_path),
                  "--strategy", "aceso", "--seed", "7", "--out", str(out)])
            outs.append((out / "summary.json").read_bytes())
        assert outs[0] == outs[1]

    def test_missing_scenario_is_validation_error(self, tmp_path):
        code = main(["run", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert code == 3

    def test_infeasible_scenario_exit_code(self, golden_scenario_path, tmp_path):
        raw = json.loads(Path(golden_scenario_path).read_text())
        raw["slo_ms"] = 1.0  # below the all-in-base latency
        bad = tmp_path / "scenario.json"
        for key in ("app", "traffic", "profile"):
            raw[key] = str(Path(golden_scenario_path).parent / raw[key])
        raw["infra"] = {
            k: str(Path(golden_scenario_path).parent / v) for k, v in raw["infra"].items()
        }
        bad.write_text(json.dumps(raw))
        code = main(["run", "--scenario", str(bad), "--out", str(tmp_path / "out")])
        assert code == 4


class TestCompare:
    def test_static_only_normalizes_to_one(self, golden_scenario_path, tmp_path):
        code = main(["compare", "--scenario", str(golden_scenario_path),
                     "--strategies", "static", "--seeds", "1,2", "--out", str(tmp_path)])
        assert code == 0
        rows = (tmp_path / "comparison.csv").read_text().splitlines()
        assert len(rows) == 1 + 2  # header + strategies x seeds
        for row in rows[1:]:
            cols = row.split(",")
            assert float(cols[2]) == 1.0
            assert float(cols[3]) == 1.0

    def test_row_count_and_aceso_below_one(self, golden_scenario_path, tmp_path):
        code = main(["compare", "--scenario", str(golden_scenario_path),
                     "--strategies", "aceso,static", "--seeds", "3", "--out", str(tmp_path)])
        assert code == 0
        rows = (tmp_path / "comparison.csv").read_text().splitlines()
        assert len(rows) == 1 + 2
        aceso = next(r for r in rows[1:] if r.startswith("aceso"))
        assert float(aceso.split(",")[2]) < 1.0
        dist = (tmp_path / "region_distribution.csv").read_text().splitlines()
        assert len(dist) == 1 + 2


class TestAblate:
    def test_four_rows_and_neither_is_largest(self, eu_scenario_path, tmp_path):
        code = main(["ablate", "--scenario", str(eu_scenario_path),
                     "--seed", "0", "--out", str(tmp_path)])
        assert code == 0
        rows = (tmp_path / "ablation.csv").read_text().splitlines()
        assert len(rows) == 1 + 4
        spaces = {r.split(",")[0]: float(r.split(",")[3]) for r in rows[1:]}
        assert spaces["neither"] == max(spaces.values())
        assert spaces["both"] == min(spaces.values())


class TestScale:
    def test_single_cell_smoke(self, tmp_path):
        code = main(["scale", "--counts", "30", "--region-sets", "eu",
                     "--slo-levels", "relaxed", "--seeds", "0", "--out", str(tmp_path)])
        assert code == 0
        rows = (tmp_path / "scaling.csv").read_text().splitlines()
        assert len(rows) == 2
        assert rows[1].startswith("30,eu,relaxed,0")


class TestForecastEval:
    def test_constant_trace_all_zero_mae(self, tmp_path):
        from carbonplace.forecaster import STEP_S, TrafficTrace, write_traffic_csv

        n = 600
        ts = 1691366400 + STEP_S * np.arange(n, dtype=np.int64)
        write_traffic_csv(tmp_path / "flat.csv", TrafficTrace(ts, np.full(n, 25.0)))
        code = main(["forecast-eval", "--trace", str(tmp_path / "flat.csv"),
                     "--out", str(tmp_path)])
        assert code == 0
        rows = (tmp_path / "forecast_eval.csv").read_text().splitlines()
        table = {r.split(",")[0]: r.split(",")[1:] for r in rows[1:]}
        assert float(table["gbdt"][0]) == pytest.approx(0.0, abs=1e-9)
        assert float(table["persistence"][0]) == 0.0
        assert float(table["lag-mean"][0]) == pytest.approx(0.0, abs=1e-9)
        assert float(table["gbdt"][1]) < 1.0  # sub-millisecond inference

    def test_gbdt_beats_baselines_on_diurnal_trace(self, golden_dir, tmp_path):
        code = main(["forecast-eval", "--trace", str(golden_dir / "traffic.csv"),
                     "--split", "0.66", "--out", str(tmp_path)])
        assert code == 0
        rows = (tmp_path / "forecast_eval.csv").read_text().splitlines()
        mae = {r.split(",")[0]: float(r.split(",")[1]) for r in rows[1:]}
        assert mae["gbdt"] < mae["persistence"]
        assert mae["gbdt"] < mae["lag-mean"]


class TestGen:
    def test_burst_durations_within_range(self):
        from carbonplace.synth import BURST_MAX_S, BURST_MIN_S, sample_bursts

        rng = np.random.default_rng(0)
        bursts = sample_bursts(rng, n_days=30, bursts_per_day=5, burst_mult=(1.5, 2.5))
        assert len(bursts) > 50
        for _t0, dur, amp in bursts:
            assert BURST_MIN_S <= dur <= BURST_MAX_S
            assert 1.5 <= amp <= 2.5

    def test_poisson_mean_within_two_percent(self):
        from carbonplace.synth import gen_traffic_trace

        trace = gen_traffic_trace(0, n_days=4.0, base_rps=100.0, diurnal_frac=0.0,
                                  bursts_per_day=0.0, seed=5)
        assert trace.values.mean() == pytest.approx(100.0, rel=0.02)

    def test_generated_dag_validates(self, tmp_path):
        code = main(["gen", "--kind", "app", "--services", "60",
                     "--seed", "3", "--out", str(tmp_path)])
        assert code == 0
        from carbonplace.appmodel import load_app

        dag = load_app(tmp_path / "app.json")
        assert len(dag.nodes) == 60

    def test_traffic_file_roundtrips(self, tmp_path):
        code = main(["gen", "--kind", "traffic", "--days", "0.5", "--out", str(tmp_path)])
        assert code == 0
        from carbonplace.forecaster import load_traffic_csv

        trace = load_traffic_csv(tmp_path / "traffic.csv")
        assert len(trace.values) == 144

    def test_reproducible_outputs(self, tmp_path):
        for rep in range(2):
            main(["gen", "--kind", "traffic", "--days", "0.5", "--seed", "9",
                  "--out", str(tmp_path / f"g{rep}")])
        a = (tmp_path / "g0" / "traffic.csv").read_bytes()
        b = (tmp_path / "g1" / "traffic.csv").read_bytes()
        assert a == b
