"""Synthetic fixture generators: traffic, carbon traces, layered DAGs, profiles.

Traffic is a Poisson arrival process whose rate follows a diurnal cycle with
randomly injected 15-45 minute bursts (the shape of production function
traces). Carbon traces are per-region diurnal sinusoids with noise. DAGs are
random layered graphs with one frontend, database leaves and compute layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .appmodel import (
    KIND_COMPUTE,
    KIND_DATABASE,
    KIND_FRONTEND,
    AppDag,
    Microservice,
)
from .forecaster import STEP_S, TrafficTrace
from .infra import HOUR, CarbonTrace
from .profiler import METRICS, ProfileSample, ServiceLoad

BURST_MIN_S = 15 * 60
BURST_MAX_S = 45 * 60


def sample_bursts(rng, n_days, bursts_per_day, burst_mult):
    """(start_s, duration_s, multiplier) for each injected burst."""
    n_bursts = rng.poisson(bursts_per_day * n_days)
    return [
        (
            float(rng.uniform(0, n_days * 86400)),
            float(rng.uniform(BURST_MIN_S, BURST_MAX_S)),
            float(rng.uniform(*burst_mult)),
        )
        for _ in range(n_bursts)
    ]


def gen_traffic_trace(
    start: int,
    n_days: float,
    base_rps: float = 100.0,
    diurnal_frac: float = 0.35,
    peak_hour: float = 14.0,
    bursts_per_day: float = 4.0,
    burst_mult: tuple[float, float] = (1.6, 2.4),
    rate_noise: float = 0.0,
    seed: int = 0,
) -> TrafficTrace:
    """Poisson request arrivals with diurnal modulation and burst injections.

    `rate_noise` adds per-interval multiplicative lognormal variation on top
    of the Poisson sampling, mimicking the short-lived fluctuations of
    production function traces.
    """
    rng = np.random.default_rng(seed)
    n = int(round(n_days * 86400 / STEP_S))
    ts = start + STEP_S * np.arange(n, dtype=np.int64)
    hour_of_day = (ts % 86400) / 3600.0
    rate = base_rps * (1.0 + diurnal_frac * np.sin(2 * np.pi * (hour_of_day - peak_hour + 6.0) / 24.0))

    mult = np.ones(n)
    for t0, dur, amp in sample_bursts(rng, n_days, bursts_per_day, burst_mult):
        lo = int(t0 // STEP_S)
        hi = min(n, int(math.ceil((t0 + dur) / STEP_S)))
        mult[lo:hi] = np.maximum(mult[lo:hi], amp)

    if rate_noise > 0:
        mult = mult * rng.lognormal(0.0, rate_noise, size=n)

    lam = np.maximum(rate * mult, 0.0) * STEP_S
    counts = rng.poisson(lam)
    return TrafficTrace(timestamps=ts, values=counts / STEP_S)


def gen_ci_trace(
    region_id: str,
    start: int,
    n_hours: int,
    mean: float,
    amplitude_frac: float = 0.3,
    phase_hour: float = 3.0,
    noise_frac: float = 0.02,
    seed: int = 0,
) -> CarbonTrace:
    """Diurnal carbon-intensity sinusoid: highest in the evening, lowest midday."""
    rng = np.random.default_rng(seed)
    ts = start + HOUR * np.arange(n_hours, dtype=np.int64)
    hod = (ts % 86400) / 3600.0
    ci = mean * (1.0 + amplitude_frac * np.cos(2 * np.pi * (hod - phase_hour) / 24.0))
    ci = ci + rng.normal(0.0, noise_frac * mean, size=n_hours)
    return CarbonTrace(region_id=region_id, timestamps=ts, ci=np.maximum(ci, 1.0))


def gen_layered_dag(
    n_services: int,
    seed: int = 0,
    db_frac: float = 0.12,
    mean_layer_width: float = 12.0,
) -> AppDag:
    """Random layered application: frontend -> compute layers -> database leaves."""
    if n_services < 2:
        raise ValueError("need at least a frontend and one service")
    rng = np.random.default_rng(seed)
    n_db = max(1, int(round(n_services * db_frac))) if n_services >= 4 else 0
    n_compute = n_services - 1 - n_db

    layers: list[list[int]] = []
    next_id = 1
    remaining = n_compute
    while remaining > 0:
        width = int(min(remaining, max(1, rng.poisson(mean_layer_width))))
        layers.append(list(range(next_id, next_id + width)))
        next_id += width
        remaining -= width

    nodes = [Microservice(id=0, name="frontend", kind=KIND_FRONTEND, profile_key="ms-0")]
    edges: list[tuple[int, int]] = []
    for li, layer in enumerate(layers):
        prev = [0] if li == 0 else layers[li - 1]
        for nid in layer:
            nodes.append(
                Microservice(id=nid, name=f"svc-{nid}", kind=KIND_COMPUTE, profile_key=f"ms-{nid}")
            )
            n_parents = 1 if li == 0 else int(rng.integers(1, min(3, len(prev)) + 1))
            parents = rng.choice(prev, size=n_parents, replace=False)
            for p in sorted(int(x) for x in parents):
                edges.append((p, nid))

    # databases hang off the deepest compute layers
    owners = []
    for layer in reversed(layers):
        owners.extend(layer)
        if len(owners) >= n_db:
            break
    for i in range(n_db):
        nid = next_id
        next_id += 1
        owner = owners[i % len(owners)]
        nodes.append(
            Microservice(id=nid, name=f"db-{nid}", kind=KIND_DATABASE, profile_key=f"ms-{nid}")
        )
        edges.append((owner, nid))

    return AppDag(nodes=tuple(nodes), edges=tuple(edges), frontend_id=0)


@dataclass(frozen=True)
class ServiceProfileSpec:
    """Per-service generative parameters for profile samples."""
    energy_j: float       # joules per 5-min interval at the reference traffic
    latency_ms: float
    cpu_cores: float
    mem_gb: float
    net_mbps: float
    energy_slope: float = 0.6   # relative growth from zero to max traffic
    latency_slope: float = 0.4


def gen_profile_samples(
    specs: dict[str, ServiceProfileSpec],
    traffic: TrafficTrace,
    seed: int = 0,
    noise_frac: float = 0.03,
    traffic_ref: float | None = None,
) -> list[ProfileSample]:
    """Synthesize profiler observations along a traffic trace.

    Energy and internal latency grow linearly with the traffic level around
    the reference point; cpu/mem/net scale with energy.
    """
    rng = np.random.default_rng(seed)
    ref = traffic_ref if traffic_ref is not None else float(np.median(traffic.values))
    ref = max(ref, 1e-9)
    samples = []
    for ts, rps in zip(traffic.timestamps, traffic.values):
        rel = rps / ref - 1.0
        per_ms = {}
        for key, spec in specs.items():
            e_scale = max(0.05, 1.0 + spec.energy_slope * rel)
            l_scale = max(0.05, 1.0 + spec.latency_slope * rel)
            jitter = 1.0 + rng.normal(0.0, noise_frac)
            per_ms[key] = ServiceLoad(
                energy_j=max(0.0, spec.energy_j * e_scale * jitter),
                latency_ms=max(0.0, spec.latency_ms * l_scale * jitter),
                cpu_cores=max(0.01, spec.cpu_cores * math.sqrt(e_scale)),
                mem_gb=max(0.01, spec.mem_gb),
                net_mbps=max(0.0, spec.net_mbps * e_scale),
            )
        samples.append(ProfileSample(timestamp=int(ts), traffic=float(rps), per_ms=per_ms))
    return samples
