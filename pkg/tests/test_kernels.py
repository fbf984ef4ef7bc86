"""Backend parity and the evaluation bridge."""

import numpy as np
import pytest

from carbonplace import _kernels
from carbonplace._kernels import _evalpy
from carbonplace.evaluation import PlacementEvaluator
from carbonplace.fixtures import build_synthetic_infra, EU_START, eu_profile_specs, loads_from_specs
from carbonplace.infra import HOUR
from carbonplace.optimizer import Placement
from carbonplace.simulator import e2e_latency
from carbonplace.synth import gen_layered_dag


@pytest.fixture(scope="module")
def setup():
    infra = build_synthetic_infra("eu", EU_START - 12 * HOUR, 48, seed=0)
    dag = gen_layered_dag(40, seed=3)
    specs = eu_profile_specs(dag, seed=4)
    loads = loads_from_specs(specs, 100.0)
    ev = PlacementEvaluator(
        dag, loads, infra, infra.region_ids, "eu-central-1",
        payload_gb=1e-7, image_gb=5.0, storage_regions=3,
    )
    return infra, dag, loads, ev


def _call(fn, ev, assign, ci, traffic):
    n = assign.shape[0]
    lat = np.empty(n)
    carbon = np.empty(n)
    cost = np.empty(n)
    fn(
        np.ascontiguousarray(assign, dtype=np.int32),
        ev.pred_indptr, ev.pred_indices, ev.service_ms, ev.energy_kwh_hr,
        np.ascontiguousarray(ci), ev.price_hr, ev.rtt_ms, ev.edge_src, ev.edge_dst,
        np.ascontiguousarray(ev.unit_egress_hr * traffic), ev.sink_idx, ev.sink_owner,
        ev.base_idx, ev.fixed_cost_hr, lat, carbon, cost,
    )
    return lat, carbon, cost


@pytest.mark.skipif(_kernels.BACKEND != "compiled", reason="compiled kernel not built")
def test_compiled_matches_python_fallback(setup):
    infra, dag, loads, ev = setup
    rng = np.random.default_rng(11)
    n_regions = len(ev.region_ids)
    movable = [n.id for n in dag.nodes if not n.structurally_pinned]
    genes = rng.integers(0, n_regions, size=(64, len(movable)), dtype=np.int32)
    assign = ev.full_assign(movable, genes)
    ci = rng.uniform(20, 500, size=n_regions)

    from carbonplace._kernels import _evalcore

    res_c = _call(_evalcore.eval_placements, ev, assign, ci, 120.0)
    res_p = _call(_evalpy.eval_placements, ev, assign, ci, 120.0)
    for a, b in zip(res_c, res_p):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-9)


def test_single_region_latency_equals_critical_path(setup):
    from carbonplace.appmodel import structural_critical_path

    infra, dag, loads, ev = setup
    # zero out rtt so the evaluation reduces to the node-weight longest path
    ev_zero = PlacementEvaluator(dag, loads, infra, infra.region_ids, "eu-central-1")
    ev_zero.rtt_ms = np.zeros_like(ev_zero.rtt_ms)
    assign = ev_zero.full_assign([], np.empty((1, 0), dtype=np.int32))
    res = ev_zero.evaluate(assign, np.full(len(ev_zero.region_ids), 100.0), 100.0)
    weights = {n.id: loads[n.profile_key].latency_ms for n in dag.nodes}
    _, length = structural_critical_path(dag, weights)
    assert res.latency_ms[0] == pytest.approx(length)


def test_two_node_chain_example():
    """A(10ms) in R1 -> B(5ms) in R2, rtt 30 each way, return hop -> 75 ms."""
    from carbonplace.appmodel import AppDag, Microservice
    from carbonplace.infra import (
        CarbonTrace,
        InfraBundle,
        InstanceType,
        PricingCatalog,
        Region,
        RttMatrix,
    )
    from carbonplace.profiler import ServiceLoad

    dag = AppDag(
        nodes=(
            Microservice(0, "a", "frontend", "a"),
            Microservice(1, "b", "compute", "b"),
        ),
        edges=((0, 1),),
        frontend_id=0,
    )
    loads = {
        "a": ServiceLoad(1000, 10.0, 1, 1, 1),
        "b": ServiceLoad(1000, 5.0, 1, 1, 1),
    }
    types = (InstanceType("s", 2, 4, 0.05),)
    infra = InfraBundle(
        regions=(Region("r1", "R1", "X"), Region("r2", "R2", "X")),
        carbon={
            "r1": CarbonTrace("r1", np.array([0]), np.array([100.0])),
            "r2": CarbonTrace("r2", np.array([0]), np.array([100.0])),
        },
        pricing=PricingCatalog(instances={"r1": types, "r2": types},
                               storage_price_gb_month=0, egress_default=0, egress_pairs={}),
        rtt=RttMatrix(("r1", "r2"), np.array([[0.0, 30.0], [30.0, 0.0]])),
    )
    placement = Placement(assign={1: "r2"}, base_region="r1")
    assert e2e_latency(dag, placement, loads, infra) == pytest.approx(75.0)

    ev = PlacementEvaluator(dag, loads, infra, ["r1", "r2"], "r1")
    res = ev.evaluate(ev.assign_from_placement(placement.assign), np.array([100.0, 100.0]), 1.0)
    assert res.latency_ms[0] == pytest.approx(75.0)
