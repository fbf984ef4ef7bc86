# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch evaluation of candidate placements.

For each row of `assign` (one placement, one region index per node in
topological order) computes end-to-end latency via the completion-time
DP over the DAG, carbon as energy x regional carbon intensity, and cost
as compute + egress + a fixed component.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def eval_placements(
    cnp.int32_t[:, ::1] assign,
    cnp.int32_t[::1] pred_indptr,
    cnp.int32_t[::1] pred_indices,
    cnp.float64_t[::1] service_ms,
    cnp.float64_t[::1] energy_kwh_hr,
    cnp.float64_t[::1] ci,
    cnp.float64_t[:, ::1] price_hr,
    cnp.float64_t[:, ::1] rtt_ms,
    cnp.int32_t[::1] edge_src,
    cnp.int32_t[::1] edge_dst,
    cnp.float64_t[:, ::1] egress_hr,
    cnp.int32_t[::1] sink_idx,
    cnp.int32_t[::1] sink_owner,
    int base_region,
    double fixed_cost,
    cnp.float64_t[::1] out_latency,
    cnp.float64_t[::1] out_carbon,
    cnp.float64_t[::1] out_cost,
):
    cdef Py_ssize_t n_pop = assign.shape[0]
    cdef Py_ssize_t n_nodes = assign.shape[1]
    cdef Py_ssize_t n_edges = edge_src.shape[0]
    cdef Py_ssize_t n_sinks = sink_idx.shape[0]
    cdef Py_ssize_t p, v, e, s, k
    cdef int rv, ru, best_sink
    cdef double comp_v, cand, carbon, cost, best_comp
    cdef cnp.float64_t[::1] comp = np.empty(n_nodes, dtype=np.float64)

    for p in range(n_pop):
        carbon = 0.0
        cost = fixed_cost
        for v in range(n_nodes):
            rv = assign[p, v]
            comp_v = 0.0
            for k in range(pred_indptr[v], pred_indptr[v + 1]):
                ru = assign[p, pred_indices[k]]
                cand = comp[pred_indices[k]] + rtt_ms[ru, rv]
                if cand > comp_v:
                    comp_v = cand
            comp[v] = comp_v + service_ms[v]
            carbon += energy_kwh_hr[v] * ci[rv]
            cost += price_hr[v, rv]
        for e in range(n_edges):
            cost += egress_hr[assign[p, edge_src[e]], assign[p, edge_dst[e]]]
        best_comp = -1.0
        best_sink = 0
        for s in range(n_sinks):
            if comp[sink_idx[s]] > best_comp:
                best_comp = comp[sink_idx[s]]
                best_sink = s
        out_latency[p] = best_comp + rtt_ms[assign[p, sink_owner[best_sink]], base_region]
        out_carbon[p] = carbon
        out_cost[p] = cost
