"""Pure-Python/numpy fallback for the placement evaluation kernel.

Same contract as the compiled `_evalcore.eval_placements`; vectorized
across the population so the fallback stays usable at moderate scale.
"""

from __future__ import annotations

import numpy as np


def eval_placements(
    assign,
    pred_indptr,
    pred_indices,
    service_ms,
    energy_kwh_hr,
    ci,
    price_hr,
    rtt_ms,
    edge_src,
    edge_dst,
    egress_hr,
    sink_idx,
    sink_owner,
    base_region,
    fixed_cost,
    out_latency,
    out_carbon,
    out_cost,
):
    assign = np.asarray(assign)
    n_pop, n_nodes = assign.shape

    comp = np.zeros((n_pop, n_nodes))
    for v in range(n_nodes):
        lo, hi = pred_indptr[v], pred_indptr[v + 1]
        rv = assign[:, v]
        best = np.zeros(n_pop)
        for k in range(lo, hi):
            u = pred_indices[k]
            np.maximum(best, comp[:, u] + rtt_ms[assign[:, u], rv], out=best)
        comp[:, v] = best + service_ms[v]

    sink_comp = comp[:, sink_idx]
    best_sink = np.argmax(sink_comp, axis=1)
    rows = np.arange(n_pop)
    owner_region = assign[rows, np.asarray(sink_owner)[best_sink]]
    out_latency[:] = sink_comp[rows, best_sink] + rtt_ms[owner_region, base_region]

    out_carbon[:] = (np.asarray(energy_kwh_hr)[None, :] * np.asarray(ci)[assign]).sum(axis=1)

    node_cols = np.arange(n_nodes)
    cost = np.asarray(price_hr)[node_cols[None, :], assign].sum(axis=1) + fixed_cost
    if len(edge_src):
        cost += np.asarray(egress_hr)[assign[:, edge_src], assign[:, edge_dst]].sum(axis=1)
    out_cost[:] = cost
