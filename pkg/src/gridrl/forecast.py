"""Day-ahead wind power forecasting.

Pipeline: raw 10-minute records -> hourly means -> nearest-neighbor
imputation -> sliding windows (24 h of history, 24 h horizon) -> per-feature
standardization -> stacked recurrent net emitting the whole horizon at once.
The band baseline simply repeats the previous 24 hours with a symmetric
uncertainty margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from gridrl.errors import DataError, TrainingError
from gridrl.nn import RecurrentNet, RecurrentSpec, make_optimizer, optimizer_step

FEATURES = ("wind_speed", "wind_direction", "temperature", "active_power")
TARGET = "active_power"
DIVERGENCE_LOSS = 1e6


@dataclass
class WindRecord:
    timestamp: datetime
    wind_speed: float | None
    wind_direction: float | None
    temperature: float | None
    active_power: float | None

    def get(self, feature: str) -> float | None:
        return getattr(self, feature)

    def replace(self, feature: str, value: float) -> None:
        setattr(self, feature, value)


def check_series(records: list[WindRecord]) -> None:
    for a, b in zip(records, records[1:]):
        if b.timestamp <= a.timestamp:
            raise DataError(f"timestamps not strictly increasing at {b.timestamp}")
    for r in records:
        if r.wind_speed is not None and r.wind_speed < 0:
            raise DataError(f"negative wind speed at {r.timestamp}")


def resample_hourly(records: list[WindRecord]) -> list[WindRecord]:
    """Mean of each feature over hour buckets; all-missing buckets stay missing."""
    check_series(records)
    out: list[WindRecord] = []
    bucket: list[WindRecord] = []
    bucket_hour = None
    for r in records:
        hour = r.timestamp.replace(minute=0, second=0, microsecond=0)
        if bucket_hour is None or hour == bucket_hour:
            bucket.append(r)
            bucket_hour = hour
        else:
            out.append(_bucket_mean(bucket_hour, bucket))
            bucket = [r]
            bucket_hour = hour
    if bucket:
        out.append(_bucket_mean(bucket_hour, bucket))
    return out


def _bucket_mean(hour, bucket):
    values = {}
    for f in FEATURES:
        present = [r.get(f) for r in bucket if r.get(f) is not None]
        values[f] = float(np.mean(present)) if present else None
    return WindRecord(timestamp=hour, **values)


def impute_missing(records: list[WindRecord], k: int = 5) -> list[WindRecord]:
    """Fill gaps per feature with the mean of the k temporally nearest values.

    Records that are already complete come through unchanged; imputed values
    are averages of original (non-imputed) observations only, so a second
    pass is a no-op.
    """
    if k < 1:
        raise DataError("k must be at least 1")
    out = [WindRecord(r.timestamp, r.wind_speed, r.wind_direction,
                      r.temperature, r.active_power) for r in records]
    for feature in FEATURES:
        known = [(i, r.get(feature)) for i, r in enumerate(records)
                 if r.get(feature) is not None]
        missing = [i for i, r in enumerate(records) if r.get(feature) is None]
        if not missing:
            continue
        if not known:
            raise DataError(f"feature {feature!r} has no observed values to impute from")
        if len(known) < k:
            raise DataError(
                f"feature {feature!r} has {len(known)} observed values, need >= k={k}"
            )
        times = [r.timestamp for r in records]
        for i in missing:
            ranked = sorted(known, key=lambda item: (abs((times[item[0]] - times[i]).total_seconds()), item[0]))
            neighbors = [v for _, v in ranked[:k]]
            out[i].replace(feature, float(np.mean(neighbors)))
    return out


@dataclass
class Scaler:
    """Per-feature standardization fitted on the training split only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray, tolerate_constant: bool = False) -> "Scaler":
        x = np.asarray(x, dtype=np.float64)
        flat = x.reshape(-1, x.shape[-1])
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)  # population std
        if np.any(std <= 0):
            if not tolerate_constant:
                bad = [FEATURES[i] if i < len(FEATURES) else str(i)
                       for i in np.flatnonzero(std <= 0)]
                raise DataError(f"constant features rejected by the scaler: {bad}")
            # constant column carries no signal; center it and leave scale at 1
            std = np.where(std <= 0, 1.0, std)
        return cls(mean=mean, std=std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


@dataclass
class WindowedDataset:
    inputs: np.ndarray   # [samples, window_len, features]
    targets: np.ndarray  # [samples, horizon]
    window_len: int
    horizon: int

    def __len__(self) -> int:
        return self.inputs.shape[0]


def series_to_arrays(records: list[WindRecord]) -> np.ndarray:
    rows = []
    for r in records:
        vals = [r.get(f) for f in FEATURES]
        if any(v is None for v in vals):
            raise DataError(f"missing values remain at {r.timestamp}; impute first")
        rows.append(vals)
    return np.array(rows, dtype=np.float64)


def make_windows(records: list[WindRecord], window_len: int = 24, horizon: int = 24,
                 split_fraction: float = 0.8) -> tuple[WindowedDataset, WindowedDataset]:
    """Sliding windows in temporal order, split train-first at the sample level."""
    data = series_to_arrays(records)
    n = data.shape[0] - window_len - horizon + 1
    if n < 1:
        raise DataError(
            f"series of length {data.shape[0]} too short for window {window_len} "
            f"+ horizon {horizon}"
        )
    target_col = FEATURES.index(TARGET)
    inputs = np.stack([data[i:i + window_len] for i in range(n)])
    targets = np.stack([data[i + window_len:i + window_len + horizon, target_col]
                        for i in range(n)])
    n_train = int(np.floor(split_fraction * n))
    train = WindowedDataset(inputs[:n_train], targets[:n_train], window_len, horizon)
    test = WindowedDataset(inputs[n_train:], targets[n_train:], window_len, horizon)
    return train, test


@dataclass
class ForecasterConfig:
    hidden_sizes: tuple[int, ...] = (100, 100)
    cell: str = "lstm"
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.001
    seed: int = 0
    wp_max: float = 50.0
    grad_clip: float | None = 5.0


@dataclass
class ForecasterModel:
    net: RecurrentNet
    feature_scaler: Scaler
    target_scaler: Scaler
    window_len: int
    horizon: int
    wp_max: float
    epoch_losses: list[float] = field(default_factory=list)

    def predict_scaled(self, inputs: np.ndarray) -> np.ndarray:
        x = self.feature_scaler.transform(inputs)
        return self.net.forward(x)

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Inverse-scaled forecast in MW, clipped to the plant's range."""
        y = self.predict_scaled(inputs)
        y = self.target_scaler.inverse(y)
        return np.clip(y, 0.0, self.wp_max)


def train_forecaster(train: WindowedDataset, config: ForecasterConfig) -> ForecasterModel:
    """Minibatch MSE training on standardized inputs and targets."""
    rng = np.random.default_rng(config.seed)
    feature_scaler = Scaler.fit(train.inputs, tolerate_constant=True)
    target_scaler = Scaler.fit(train.targets.reshape(-1, 1), tolerate_constant=True)
    x = feature_scaler.transform(train.inputs)
    y = (train.targets - target_scaler.mean[0]) / target_scaler.std[0]

    spec = RecurrentSpec(config.cell, in_dim=len(FEATURES),
                         hidden_sizes=tuple(config.hidden_sizes), out_dim=train.horizon)
    net = RecurrentNet(spec, rng=rng)
    opt = make_optimizer("adam", net.params, learning_rate=config.learning_rate)
    n = x.shape[0]
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            out = net.forward(x[idx])
            err = out - y[idx]
            loss = float(np.mean(err**2))
            epoch_loss += loss * len(idx)
            grads, _ = net.backward(2.0 * err / err.size)
            if config.grad_clip is not None:
                grads = grads.clip_global_norm(config.grad_clip)
            optimizer_step(opt, net.params, grads, "descent")
        epoch_loss /= n
        losses.append(epoch_loss)
        if not np.isfinite(epoch_loss) or epoch_loss > DIVERGENCE_LOSS:
            raise TrainingError(f"forecaster diverged at epoch {epoch} (loss {epoch_loss})")
    # target scaler stored as (mean, std) over the flattened horizon
    return ForecasterModel(net=net, feature_scaler=feature_scaler,
                           target_scaler=Scaler(mean=np.array([target_scaler.mean[0]]),
                                                std=np.array([target_scaler.std[0]])),
                           window_len=train.window_len, horizon=train.horizon,
                           wp_max=config.wp_max, epoch_losses=losses)


def predict_day_ahead(model: ForecasterModel, history: list[WindRecord]) -> np.ndarray:
    """Hourly MW forecast for the next horizon, from the last window of records."""
    if len(history) != model.window_len:
        raise DataError(f"history must hold exactly {model.window_len} records, "
                        f"got {len(history)}")
    window = series_to_arrays(history)
    return model.predict(window[None, :, :])[0]


def uncertainty_band_forecast(last_24h, margin: float):
    """Persistence point forecast with a symmetric fractional band."""
    values = np.asarray(last_24h, dtype=np.float64)
    if values.shape != (24,):
        raise DataError(f"expected 24 hourly values, got shape {values.shape}")
    if margin < 0:
        raise DataError("margin must be >= 0")
    point = values.copy()
    return point, point * (1.0 - margin), point * (1.0 + margin)


def persistence_prediction(dataset: WindowedDataset) -> np.ndarray:
    """Repeat the window's trailing power values as the horizon forecast."""
    if dataset.window_len < dataset.horizon:
        raise DataError("window shorter than horizon; persistence undefined")
    col = FEATURES.index(TARGET)
    return dataset.inputs[:, -dataset.horizon:, col]


def eval_metrics(pred, actual) -> dict:
    """RMSE, MAE, and MAPE (percent, near-zero actuals excluded and counted)."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape or p.size == 0:
        raise DataError(f"need equal nonempty shapes, got {p.shape} vs {a.shape}")
    err = p - a
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    valid = np.abs(a) >= 1e-6
    excluded = int(np.sum(~valid))
    if np.any(valid):
        mape = float(100.0 * np.mean(np.abs(err[valid] / a[valid])))
    else:
        mape = None
    return {"rmse": rmse, "mae": mae, "mape": mape, "mape_excluded": excluded}
