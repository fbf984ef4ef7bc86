"""Short-term traffic forecasting.

A single gradient-boosted regression-tree model predicts the next hour of
traffic at 5-minute granularity by recursive one-step forecasting over the
last 12 observations (plus optional time-of-day / day-of-week features).
The hour estimate is the maximum of the 12 predicted values: conservative
against short bursts, responsive to real load shifts.

Trees use exact greedy splits (variance reduction over sorted unique
feature values), so training is fully deterministic for a given trace.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .infra import parse_utc

STEP_S = 300
N_LAGS = 12


class ForecastError(ValueError):
    pass


@dataclass(frozen=True)
class TrafficTrace:
    timestamps: np.ndarray  # epoch seconds on a strict 5-min grid
    values: np.ndarray      # requests/sec, >= 0

    def __post_init__(self):
        if len(self.timestamps) != len(self.values):
            raise ForecastError("timestamp/value length mismatch")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) == STEP_S):
            raise ForecastError("traffic trace must be on a gapless 5-minute grid")
        if np.any(self.values < 0):
            raise ForecastError("negative traffic")

    def slice_between(self, start: int, end: int) -> "TrafficTrace":
        mask = (self.timestamps >= start) & (self.timestamps < end)
        return TrafficTrace(self.timestamps[mask], self.values[mask])

    def value_at(self, t: int) -> float:
        idx = (int(t) - int(self.timestamps[0])) // STEP_S
        if idx < 0 or idx >= len(self.values):
            raise ForecastError("timestamp outside traffic trace")
        return float(self.values[idx])


def load_traffic_csv(path) -> TrafficTrace:
    ts, vals = [], []
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            ts.append(parse_utc(row["timestamp"]))
            vals.append(float(row["requests_per_sec"]))
    return TrafficTrace(np.asarray(ts, dtype=np.int64), np.asarray(vals, dtype=np.float64))


def write_traffic_csv(path, trace: TrafficTrace) -> None:
    from .infra import format_utc

    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "requests_per_sec"])
        for t, v in zip(trace.timestamps, trace.values):
            writer.writerow([format_utc(int(t)), f"{float(v):.6g}"])


@dataclass(frozen=True)
class ForecastConfig:
    n_trees: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    calendar_features: bool = True


@dataclass
class _Tree:
    # flat arrays; feature == -1 marks a leaf whose value sits in `threshold`
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        for i, x in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[i] = self.threshold[node]
        return out

    def predict_one(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return float(self.threshold[node])

    def depth(self) -> int:
        def walk(node, d):
            if self.feature[node] < 0:
                return d
            return max(walk(self.left[node], d + 1), walk(self.right[node], d + 1))

        return walk(0, 0)


@dataclass
class GbdtModel:
    trees: list[_Tree]
    learning_rate: float
    max_depth: int
    base_prediction: float
    config: ForecastConfig

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_features(self, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        pred = np.full(len(X), self.base_prediction)
        for tree in self.trees[: self.n_trees if n_trees is None else n_trees]:
            pred += self.learning_rate * tree.predict(X)
        return pred

    def predict_one(self, x: np.ndarray) -> float:
        pred = self.base_prediction
        for tree in self.trees:
            pred += self.learning_rate * tree.predict_one(x)
        return pred


def _calendar_features(t: int) -> list[float]:
    day_frac = (t % 86400) / 86400.0
    dow = (t // 86400 + 4) % 7  # epoch day 0 was a Thursday
    return [math.sin(2 * math.pi * day_frac), math.cos(2 * math.pi * day_frac), float(dow)]


def make_features(lags: np.ndarray, t: int, config: ForecastConfig) -> np.ndarray:
    feats = list(lags)
    if config.calendar_features:
        feats.extend(_calendar_features(t))
    return np.asarray(feats, dtype=np.float64)


def _build_dataset(trace: TrafficTrace, config: ForecastConfig) -> tuple[np.ndarray, np.ndarray]:
    v = trace.values
    rows = []
    for i in range(N_LAGS, len(v)):
        rows.append(make_features(v[i - N_LAGS : i], int(trace.timestamps[i]), config))
    return np.asarray(rows), v[N_LAGS:].copy()


def _fit_tree(X: np.ndarray, y: np.ndarray, max_depth: int, min_leaf: int) -> _Tree:
    feature, threshold, left, right = [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        target = y[idx]
        if depth >= max_depth or len(idx) < 2 * min_leaf or np.all(target == target[0]):
            threshold[node] = float(target.mean())
            return node

        best_gain, best_feat, best_thr = 0.0, -1, 0.0
        n_here = len(idx)
        total_sum = target.sum()
        for f in range(X.shape[1]):
            col = X[idx, f]
            order = np.argsort(col, kind="stable")
            col_sorted = col[order]
            y_sorted = target[order]
            left_sum = np.cumsum(y_sorted)[:-1]
            # candidate split after position p (count on the left = p + 1)
            counts = np.arange(1, n_here)
            valid = (col_sorted[1:] > col_sorted[:-1]) & (counts >= min_leaf) & (
                n_here - counts >= min_leaf
            )
            if not np.any(valid):
                continue
            # variance-reduction gain, SSE form
            raw = (
                left_sum * left_sum / counts
                + (total_sum - left_sum) ** 2 / (n_here - counts)
                - total_sum * total_sum / n_here
            )
            gains = np.where(valid, raw, -np.inf)
            p = int(np.argmax(gains))
            if gains[p] > best_gain + 1e-12:
                best_gain = float(gains[p])
                best_feat = f
                best_thr = float((col_sorted[p] + col_sorted[p + 1]) / 2.0)
        if best_feat < 0:
            threshold[node] = float(target.mean())
            return node

        mask = X[idx, best_feat] <= best_thr
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(len(y)), 0)
    return _Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
    )


def train(trace: TrafficTrace, config: ForecastConfig = ForecastConfig()) -> GbdtModel:
    """Gradient boosting with squared-error loss on lagged traffic features."""
    if len(trace.values) < N_LAGS + 1:
        raise ForecastError(
            f"need at least {N_LAGS + 1} samples to train, got {len(trace.values)}"
        )
    X, y = _build_dataset(trace, config)
    base = float(y.mean())
    residual = y - base
    trees: list[_Tree] = []
    for _ in range(config.n_trees):
        tree = _fit_tree(X, residual, config.max_depth, config.min_samples_leaf)
        residual -= config.learning_rate * tree.predict(X)
        trees.append(tree)
    return GbdtModel(
        trees=trees,
        learning_rate=config.learning_rate,
        max_depth=config.max_depth,
        base_prediction=base,
        config=config,
    )


def predict_window(model: GbdtModel, history: np.ndarray, t: int) -> np.ndarray:
    """Next hour at 5-minute steps via recursive one-step forecasting.

    `history` holds the 12 most recent observations ending at time t; each
    predicted value is appended to the lag window for the next step.
    Outputs are clamped at zero.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.shape != (N_LAGS,):
        raise ForecastError(f"history must hold exactly {N_LAGS} values")
    window = history.copy()
    out = np.empty(N_LAGS)
    for step in range(N_LAGS):
        ts = t + (step + 1) * STEP_S
        pred = model.predict_one(make_features(window, ts, model.config))
        pred = max(pred, 0.0)
        out[step] = pred
        window = np.roll(window, -1)
        window[-1] = pred
    return out


def hour_estimate(window: np.ndarray) -> float:
    """Max-aggregation of the forecast window: the conservative load estimate."""
    window = np.asarray(window)
    if window.shape != (N_LAGS,):
        raise ForecastError(f"window must hold exactly {N_LAGS} values")
    return float(window.max())


def naive_persistence(history: np.ndarray) -> np.ndarray:
    """Baseline: repeat the last observed value for the whole horizon."""
    history = np.asarray(history, dtype=np.float64)
    if history.size == 0:
        raise ForecastError("empty history")
    return np.full(N_LAGS, float(history[-1]))


def lag_mean(history: np.ndarray) -> np.ndarray:
    """Baseline: mean of the trailing lag window, repeated."""
    history = np.asarray(history, dtype=np.float64)
    if history.size == 0:
        raise ForecastError("empty history")
    return np.full(N_LAGS, float(history[-N_LAGS:].mean()))
