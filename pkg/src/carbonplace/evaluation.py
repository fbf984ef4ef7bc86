"""Batch placement evaluation: the bridge between domain objects and kernels.

A PlacementEvaluator is scoped to one application, one region universe and
one traffic bucket (per-service metrics are bucket-wise constant). It
prepares flat arrays once, then evaluates whole populations of candidate
placements through the selected kernel backend.

Units: latency ms, carbon gCO2eq/hour, cost USD/hour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .appmodel import AppDag, KIND_DATABASE
from .infra import InfraBundle, InfraValidationError, smallest_instance
from .profiler import ServiceLoad

J_PER_KWH = 3.6e6
INTERVALS_PER_HOUR = 12
HOURS_PER_MONTH = 730.0


@dataclass
class EvalResult:
    latency_ms: np.ndarray
    carbon_g_hr: np.ndarray
    cost_usd_hr: np.ndarray


class PlacementEvaluator:
    def __init__(
        self,
        dag: AppDag,
        loads: dict[str, ServiceLoad],
        infra: InfraBundle,
        region_ids: list[str],
        base_region: str,
        payload_gb: float = 0.0,
        image_gb: float = 0.0,
        storage_regions: int = 1,
        movable_region_ids: list[str] | None = None,
        movable_ids: list[int] | None = None,
    ):
        self.dag = dag
        self.region_ids = list(region_ids)
        self.region_pos = {r: i for i, r in enumerate(self.region_ids)}
        if base_region not in self.region_pos:
            raise InfraValidationError(f"base region {base_region!r} not in region set")
        self.base_region = base_region
        self.base_idx = self.region_pos[base_region]

        self.node_ids = dag.topological_order()
        self.pos = {nid: i for i, nid in enumerate(self.node_ids)}
        n = len(self.node_ids)

        indptr = [0]
        indices: list[int] = []
        for nid in self.node_ids:
            for p in sorted(dag.predecessors(nid)):
                indices.append(self.pos[p])
            indptr.append(len(indices))
        self.pred_indptr = np.asarray(indptr, dtype=np.int32)
        self.pred_indices = np.asarray(indices, dtype=np.int32)
        self.edge_src = np.asarray([self.pos[u] for u, _ in dag.edges], dtype=np.int32)
        self.edge_dst = np.asarray([self.pos[v] for _, v in dag.edges], dtype=np.int32)
        sinks = dag.sinks()
        self.sink_idx = np.asarray([self.pos[s] for s in sinks], dtype=np.int32)
        self.sink_owner = np.asarray([self.pos[dag.sink_owner(s)] for s in sinks], dtype=np.int32)

        self.service_ms = np.empty(n)
        self.energy_kwh_hr = np.empty(n)
        cpu = np.empty(n)
        mem = np.empty(n)
        for nid in self.node_ids:
            node = dag.node(nid)
            try:
                load = loads[node.profile_key]
            except KeyError:
                raise KeyError(f"profile missing for service {node.profile_key!r}") from None
            i = self.pos[nid]
            self.service_ms[i] = load.latency_ms
            self.energy_kwh_hr[i] = load.energy_j * INTERVALS_PER_HOUR / J_PER_KWH
            cpu[i] = load.cpu_cores
            mem[i] = load.mem_gb

        # Per (node, region) hourly price of the smallest compatible instance.
        # Regions a service can actually be assigned to must price it; other
        # cells stay +inf so accidental use is loud.
        catalog = infra.pricing
        movable_regions = set(movable_region_ids if movable_region_ids is not None else self.region_ids)
        movable_regions.add(base_region)
        if movable_ids is None:
            movable = {nid for nid in self.node_ids if not dag.node(nid).structurally_pinned}
        else:
            movable = set(movable_ids)
        self.price_hr = np.full((n, len(self.region_ids)), np.inf)
        for nid in self.node_ids:
            i = self.pos[nid]
            for r in self.region_ids:
                if r != base_region and (nid not in movable or r not in movable_regions):
                    continue
                self.price_hr[i, self.region_pos[r]] = smallest_instance(
                    catalog, r, cpu[i], mem[i]
                ).price_hr

        self.rtt_ms = np.empty((len(self.region_ids), len(self.region_ids)))
        for r1, i in self.region_pos.items():
            for r2, j in self.region_pos.items():
                self.rtt_ms[i, j] = infra.rtt.rtt_ms[infra.rtt.index[r1], infra.rtt.index[r2]]

        # Egress USD/hour per DAG edge at traffic = 1 req/s.
        self.unit_egress_hr = np.zeros_like(self.rtt_ms)
        for r1, i in self.region_pos.items():
            for r2, j in self.region_pos.items():
                self.unit_egress_hr[i, j] = (
                    catalog.egress_usd_per_gb(r1, r2) * payload_gb * 3600.0
                )

        self.fixed_cost_hr = (
            catalog.storage_price_gb_month * image_gb * storage_regions / HOURS_PER_MONTH
        )

        self.ci_default = np.zeros(len(self.region_ids))

    def ci_vector(self, ci_now: dict[str, float]) -> np.ndarray:
        return np.asarray([ci_now[r] for r in self.region_ids])

    def full_assign(self, movable_ids: list[int], genes: np.ndarray) -> np.ndarray:
        """Expand GA genes (region idx per movable service) to full assignments."""
        genes = np.atleast_2d(np.asarray(genes, dtype=np.int32))
        assign = np.full((genes.shape[0], len(self.node_ids)), self.base_idx, dtype=np.int32)
        cols = [self.pos[m] for m in movable_ids]
        if cols:
            assign[:, cols] = genes
        return assign

    def assign_from_placement(self, placement: dict[int, str]) -> np.ndarray:
        assign = np.full((1, len(self.node_ids)), self.base_idx, dtype=np.int32)
        for nid, region in placement.items():
            assign[0, self.pos[nid]] = self.region_pos[region]
        return assign

    def evaluate(self, assign: np.ndarray, ci: np.ndarray, traffic_rps: float) -> EvalResult:
        assign = np.ascontiguousarray(np.atleast_2d(assign), dtype=np.int32)
        n_pop = assign.shape[0]
        lat = np.empty(n_pop)
        carbon = np.empty(n_pop)
        cost = np.empty(n_pop)
        _kernels.eval_placements(
            assign,
            self.pred_indptr,
            self.pred_indices,
            self.service_ms,
            self.energy_kwh_hr,
            np.ascontiguousarray(ci, dtype=np.float64),
            self.price_hr,
            self.rtt_ms,
            self.edge_src,
            self.edge_dst,
            np.ascontiguousarray(self.unit_egress_hr * traffic_rps),
            self.sink_idx,
            self.sink_owner,
            self.base_idx,
            self.fixed_cost_hr,
            lat,
            carbon,
            cost,
        )
        return EvalResult(latency_ms=lat, carbon_g_hr=carbon, cost_usd_hr=cost)
