"""Regional infrastructure data: carbon traces, pricing catalogs, RTT matrix.

Everything is loaded from offline files (the artifact is strictly
trace-driven): hourly carbon intensity CSVs per region, a pricing JSON with
per-region instance shapes plus storage and egress rates, and a square RTT
matrix CSV. All structures are immutable after load.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

HOUR = 3600


class InfraValidationError(ValueError):
    """An infrastructure file violates a structural rule."""


def parse_utc(text: str) -> int:
    """ISO-8601 timestamp -> epoch seconds (naive timestamps are UTC)."""
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(t)
    except ValueError as exc:
        raise InfraValidationError(f"malformed timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_utc(epoch: int) -> str:
    return datetime.fromtimestamp(epoch, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Region:
    id: str
    display_name: str
    sovereignty_group: str


@dataclass(frozen=True)
class InstanceType:
    name: str
    vcpu: float
    mem_gb: float
    price_hr: float


@dataclass(frozen=True)
class CarbonTrace:
    region_id: str
    timestamps: np.ndarray  # epoch seconds, strictly increasing, 1h spacing
    ci: np.ndarray          # gCO2eq/kWh, >= 0

    def __post_init__(self):
        ts = self.timestamps
        if len(ts) == 0:
            raise InfraValidationError(f"empty carbon trace for {self.region_id}")
        diffs = np.diff(ts)
        if len(ts) > 1 and not np.all(diffs == HOUR):
            bad = int(np.argmax(diffs != HOUR))
            raise InfraValidationError(
                f"carbon trace for {self.region_id} not hourly at row {bad + 1}"
            )
        if np.any(self.ci < 0):
            raise InfraValidationError(f"negative carbon intensity in {self.region_id}")

    @property
    def start(self) -> int:
        return int(self.timestamps[0])

    @property
    def end_exclusive(self) -> int:
        return int(self.timestamps[-1]) + HOUR

    def mean(self) -> float:
        return float(self.ci.mean())


def ci_at(trace: CarbonTrace, t: int) -> float:
    """Zero-order hold: carbon intensity of the latest sample <= t."""
    if t < trace.start or t >= trace.end_exclusive:
        raise InfraValidationError(
            f"timestamp {format_utc(int(t))} outside carbon trace for {trace.region_id}"
        )
    idx = (int(t) - trace.start) // HOUR
    return float(trace.ci[idx])


@dataclass(frozen=True)
class PricingCatalog:
    instances: dict[str, tuple[InstanceType, ...]]  # region -> sorted by (vcpu, mem, price)
    storage_price_gb_month: float
    egress_default: float                            # USD/GB for any cross-region pair
    egress_pairs: dict[tuple[str, str], float]       # overrides

    def __post_init__(self):
        for region, types in self.instances.items():
            if not types:
                raise InfraValidationError(f"no instance types for region {region}")
            keys = [(t.vcpu, t.mem_gb, t.price_hr) for t in types]
            if keys != sorted(keys):
                raise InfraValidationError(f"instance list for {region} not sorted")
            if any(t.price_hr < 0 for t in types):
                raise InfraValidationError(f"negative price in region {region}")
        if self.storage_price_gb_month < 0 or self.egress_default < 0:
            raise InfraValidationError("negative storage or egress price")

    def egress_usd_per_gb(self, r1: str, r2: str) -> float:
        if r1 == r2:
            return 0.0
        return self.egress_pairs.get((r1, r2), self.egress_default)


@dataclass(frozen=True)
class RttMatrix:
    region_ids: tuple[str, ...]
    rtt_ms: np.ndarray  # full ordered matrix, no symmetry assumed

    def __post_init__(self):
        n = len(self.region_ids)
        if self.rtt_ms.shape != (n, n):
            raise InfraValidationError("rtt matrix shape does not match region list")
        if np.any(self.rtt_ms < 0):
            raise InfraValidationError("negative rtt")
        diag = np.diag(self.rtt_ms)
        if np.any(diag[:, None] > self.rtt_ms + 1e-12):
            raise InfraValidationError("intra-region rtt exceeds an inter-region rtt")

    @property
    def index(self) -> dict[str, int]:
        idx = self.__dict__.get("_index_cache")
        if idx is None:
            idx = {r: i for i, r in enumerate(self.region_ids)}
            object.__setattr__(self, "_index_cache", idx)
        return idx


def rtt(matrix: RttMatrix, r1: str, r2: str) -> float:
    try:
        return float(matrix.rtt_ms[matrix.index[r1], matrix.index[r2]])
    except KeyError as exc:
        raise InfraValidationError(f"unknown region {exc.args[0]!r}") from exc


def smallest_instance(catalog: PricingCatalog, region: str, cpu: float, mem_gb: float) -> InstanceType:
    """First instance in the sorted list that dominates the footprint."""
    if cpu <= 0 or mem_gb <= 0:
        raise InfraValidationError("footprint must be positive")
    types = catalog.instances.get(region)
    if types is None:
        raise InfraValidationError(f"unknown region {region!r}")
    for t in types:
        if t.vcpu >= cpu and t.mem_gb >= mem_gb:
            return t
    raise InfraValidationError(
        f"no instance in {region} fits footprint ({cpu} cores, {mem_gb} GB)"
    )


def canonical_shape(catalog: PricingCatalog) -> tuple[float, float]:
    """Median (vcpu, mem) shape across the whole catalog."""
    shapes = sorted({(t.vcpu, t.mem_gb) for types in catalog.instances.values() for t in types})
    return shapes[(len(shapes) - 1) // 2]


def reference_price(catalog: PricingCatalog, region: str) -> float:
    """Price a region charges for the catalog's canonical shape.

    Region filtering compares regional pricing trends on one fixed
    like-for-like shape, not on per-service footprints.
    """
    cpu, mem = canonical_shape(catalog)
    return smallest_instance(catalog, region, cpu, mem).price_hr


@dataclass(frozen=True)
class InfraBundle:
    regions: tuple[Region, ...]
    carbon: dict[str, CarbonTrace]
    pricing: PricingCatalog
    rtt: RttMatrix

    @property
    def region_ids(self) -> list[str]:
        return [r.id for r in self.regions]

    def ci_now(self, t: int) -> dict[str, float]:
        return {r: ci_at(trace, t) for r, trace in self.carbon.items()}


def _load_carbon_csv(path: Path, region_id: str) -> CarbonTrace:
    ts, ci = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ts.append(parse_utc(row["timestamp_utc"]))
            ci.append(float(row["ci_g_per_kwh"]))
    return CarbonTrace(
        region_id=region_id,
        timestamps=np.asarray(ts, dtype=np.int64),
        ci=np.asarray(ci, dtype=np.float64),
    )


def _load_rtt_csv(path: Path) -> RttMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = [c.strip() for c in rows[0][1:]]
    values = np.zeros((len(header), len(header)))
    seen = []
    for row in rows[1:]:
        seen.append(row[0].strip())
        values[len(seen) - 1, :] = [float(x) for x in row[1:]]
    if seen != header:
        raise InfraValidationError(f"rtt matrix rows/columns mismatch in {path}")
    return RttMatrix(region_ids=tuple(header), rtt_ms=values)


def load_pricing(path) -> tuple[tuple[Region, ...], PricingCatalog]:
    raw = json.loads(Path(path).read_text())
    regions = []
    instances: dict[str, tuple[InstanceType, ...]] = {}
    for rid, spec in raw["regions"].items():
        group = str(spec.get("sovereignty_group", ""))
        if not group:
            raise InfraValidationError(f"empty sovereignty_group for {rid}")
        regions.append(Region(id=rid, display_name=str(spec.get("display_name", rid)),
                              sovereignty_group=group))
        types = tuple(
            InstanceType(name=str(n), vcpu=float(c), mem_gb=float(m), price_hr=float(p))
            for n, c, m, p in spec["instances"]
        )
        instances[rid] = tuple(sorted(types, key=lambda t: (t.vcpu, t.mem_gb, t.price_hr)))
    egress = raw.get("egress_usd_per_gb", {})
    pairs = {}
    for key, val in egress.get("pairs", {}).items():
        r1, _, r2 = key.partition(":")
        pairs[(r1, r2)] = float(val)
    catalog = PricingCatalog(
        instances=instances,
        storage_price_gb_month=float(raw.get("storage_price_gb_month", 0.0)),
        egress_default=float(egress.get("default", 0.0)),
        egress_pairs=pairs,
    )
    return tuple(regions), catalog


def load_infra(carbon_dir, pricing_path, rtt_path) -> InfraBundle:
    """Load and cross-validate the full infrastructure bundle."""
    regions, catalog = load_pricing(pricing_path)
    rtt_matrix = _load_rtt_csv(Path(rtt_path))
    carbon_dir = Path(carbon_dir)
    carbon: dict[str, CarbonTrace] = {}
    for region in regions:
        path = carbon_dir / f"{region.id}.csv"
        if not path.exists():
            raise InfraValidationError(f"missing carbon trace for region {region.id}")
        carbon[region.id] = _load_carbon_csv(path, region.id)
    missing = set(r.id for r in regions) - set(rtt_matrix.region_ids)
    if missing:
        raise InfraValidationError(f"rtt matrix missing regions {sorted(missing)}")
    return InfraBundle(regions=regions, carbon=carbon, pricing=catalog, rtt=rtt_matrix)


def serialize_trace(trace: CarbonTrace) -> str:
    """Round-trip form of a carbon trace (normalized CSV text)."""
    lines = ["timestamp_utc,ci_g_per_kwh"]
    for ts, ci in zip(trace.timestamps, trace.ci):
        lines.append(f"{format_utc(int(ts))},{float(ci):g}")
    return "\n".join(lines) + "\n"
