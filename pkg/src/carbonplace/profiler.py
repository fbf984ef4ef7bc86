"""Traffic-indexed per-microservice profiles.

Observed 5-minute samples (energy, internal latency, resource footprint per
service) are discretized into equal-frequency traffic buckets. Each bucket
stores a conservative representative per metric (mean plus one standard
deviation by default, 85th percentile optionally), so lookups under-promise
rather than over-promise. Tables are immutable; refresh builds a new one.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .infra import parse_utc

METRICS = ("energy_j", "latency_ms", "cpu_cores", "mem_gb", "net_mbps")

MODE_MEAN_SIGMA = "mean_plus_sigma"
MODE_P85 = "p85"

DEFAULT_N_MIN = 100
DEFAULT_K_MAX = 10
DEFAULT_K_MIN = 3
DEFAULT_WINDOW_S = 7 * 24 * 3600
DEFAULT_CAP = 2000


@dataclass(frozen=True)
class ServiceLoad:
    """Representative metrics of one service inside one traffic bucket."""
    energy_j: float    # joules per 5-min interval
    latency_ms: float
    cpu_cores: float
    mem_gb: float
    net_mbps: float


@dataclass(frozen=True)
class ProfileSample:
    timestamp: int                      # epoch seconds, 5-min grid
    traffic: float                      # requests/sec
    per_ms: dict[str, ServiceLoad]      # profile_key -> metrics

    def __post_init__(self):
        if self.traffic < 0:
            raise ValueError("negative traffic in profile sample")
        for key, load in self.per_ms.items():
            for metric in METRICS:
                if getattr(load, metric) < 0:
                    raise ValueError(f"negative {metric} for {key}")


@dataclass(frozen=True)
class Bucket:
    lo: float
    hi: float
    count: int
    per_ms: dict[str, ServiceLoad]


@dataclass(frozen=True)
class BucketTable:
    buckets: tuple[Bucket, ...]
    mode: str
    samples: tuple[ProfileSample, ...]  # retained source samples, for refresh
    undersized: bool = False            # true when N < K_min * N_min

    @property
    def edges(self) -> list[float]:
        return [b.lo for b in self.buckets] + [self.buckets[-1].hi]

    @property
    def profile_keys(self) -> list[str]:
        return sorted(self.buckets[0].per_ms)


def _representative(values: np.ndarray, mode: str) -> float:
    if mode == MODE_MEAN_SIGMA:
        return float(values.mean() + values.std())
    if mode == MODE_P85:
        # nearest-rank percentile
        ordered = np.sort(values)
        rank = max(1, int(np.ceil(0.85 * len(ordered))))
        return float(ordered[rank - 1])
    raise ValueError(f"unknown representative mode {mode!r}")


def build_buckets(
    samples: list[ProfileSample],
    n_min: int = DEFAULT_N_MIN,
    k_max: int = DEFAULT_K_MAX,
    k_min: int = DEFAULT_K_MIN,
    mode: str = MODE_MEAN_SIGMA,
) -> BucketTable:
    """Equal-frequency bucketing with left-to-right merging of small buckets.

    K = clamp(floor(N / n_min), k_min, k_max). After the equal-frequency
    split, any bucket with fewer than n_min samples is merged into its right
    neighbor (the rightmost merges left) until all buckets meet the
    threshold. When N < k_min * n_min that cannot converge to k_min buckets
    of n_min samples; the table keeps at least one bucket and is flagged
    undersized instead of guessing.
    """
    if not samples:
        raise ValueError("cannot build buckets from an empty sample list")
    if n_min < 1:
        raise ValueError("n_min must be >= 1")
    n = len(samples)
    k = max(k_min, min(k_max, n // n_min))
    k = min(k, n)  # never more buckets than samples

    order = np.argsort([s.traffic for s in samples], kind="stable")
    sorted_samples = [samples[i] for i in order]
    traffic = np.array([s.traffic for s in sorted_samples])

    # Positional equal-frequency split: counts differ by at most one.
    bounds = [round(i * n / k) for i in range(k + 1)]
    groups = [list(range(bounds[i], bounds[i + 1])) for i in range(k)]
    groups = [g for g in groups if g]

    merged = True
    while merged and len(groups) > 1:
        merged = False
        for i, g in enumerate(groups):
            if len(g) < n_min:
                j = i + 1 if i + 1 < len(groups) else i - 1
                groups[j] = g + groups[j] if j > i else groups[j] + g
                del groups[i]
                merged = True
                break

    undersized = any(len(g) < n_min for g in groups)

    buckets = []
    for gi, g in enumerate(groups):
        lo = float(traffic[g[0]]) if gi > 0 else float(traffic[0])
        hi = float(traffic[groups[gi + 1][0]]) if gi + 1 < len(groups) else float(traffic[-1])
        per_ms = {}
        for key in sorted_samples[0].per_ms:
            vals = {
                metric: np.array([getattr(sorted_samples[i].per_ms[key], metric) for i in g])
                for metric in METRICS
            }
            per_ms[key] = ServiceLoad(**{m: _representative(v, mode) for m, v in vals.items()})
        buckets.append(Bucket(lo=lo, hi=hi, count=len(g), per_ms=per_ms))

    return BucketTable(
        buckets=tuple(buckets),
        mode=mode,
        samples=tuple(sorted(samples, key=lambda s: s.timestamp)),
        undersized=undersized,
    )


def bucket_index(table: BucketTable, traffic: float) -> int:
    """Index of the containing bucket; saturates below the min and above the max."""
    starts = [b.lo for b in table.buckets]
    idx = bisect_right(starts, traffic) - 1
    return min(max(idx, 0), len(table.buckets) - 1)


def lookup(table: BucketTable, traffic: float) -> dict[str, ServiceLoad]:
    """Representatives of the bucket whose traffic range contains the value."""
    return table.buckets[bucket_index(table, traffic)].per_ms


def refresh(
    table: BucketTable,
    new_samples: list[ProfileSample],
    window_s: int = DEFAULT_WINDOW_S,
    cap: int = DEFAULT_CAP,
    n_min: int = DEFAULT_N_MIN,
    k_max: int = DEFAULT_K_MAX,
    k_min: int = DEFAULT_K_MIN,
) -> BucketTable:
    """Merge in new samples, forget the stale and the oldest, rebuild.

    Keeps samples within the trailing window ending at the newest timestamp,
    then drops the oldest beyond the cap.
    """
    if not new_samples:
        return table
    combined = sorted(table.samples + tuple(new_samples), key=lambda s: s.timestamp)
    horizon = combined[-1].timestamp - window_s
    recent = [s for s in combined if s.timestamp > horizon]
    if len(recent) > cap:
        recent = recent[-cap:]
    return build_buckets(recent, n_min=n_min, k_max=k_max, k_min=k_min, mode=table.mode)


def load_profile_csv(path) -> list[ProfileSample]:
    """Read profile.csv rows and group them into per-timestamp samples."""
    grouped: dict[int, dict] = {}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            ts = parse_utc(row["timestamp"])
            entry = grouped.setdefault(ts, {"traffic": float(row["traffic"]), "per_ms": {}})
            entry["per_ms"][row["profile_key"]] = ServiceLoad(
                energy_j=float(row["energy_j"]),
                latency_ms=float(row["latency_ms"]),
                cpu_cores=float(row["cpu_cores"]),
                mem_gb=float(row["mem_gb"]),
                net_mbps=float(row["net_mbps"]),
            )
    return [
        ProfileSample(timestamp=ts, traffic=v["traffic"], per_ms=v["per_ms"])
        for ts, v in sorted(grouped.items())
    ]


def write_profile_csv(path, samples: list[ProfileSample]) -> None:
    from .infra import format_utc

    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "traffic", "profile_key"] + list(METRICS))
        for s in samples:
            for key in sorted(s.per_ms):
                load = s.per_ms[key]
                writer.writerow(
                    [format_utc(s.timestamp), f"{s.traffic:.6g}", key]
                    + [f"{getattr(load, m):.6g}" for m in METRICS]
                )
