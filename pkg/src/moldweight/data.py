"""Datasets of molding cycles: schema, CSV I/O, synthetic generator, windowing.

A dataset is held column-wise: ``values[i, j]`` is channel ``j`` of the
``i``-th mold in file order. Channels carry a physical unit and a
sequential/non-sequential tag; the tag decides how a model consumes them.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    HeaderMismatchError,
    InsufficientDataError,
    InvalidConfigError,
    NonMonotonicMoldIndexError,
    ParseError,
    SchemaMismatchError,
    UnknownChannelError,
    ZeroVarianceError,
)

MOLD_COLUMN = "mold_index"
TARGET_COLUMN = "weight"


class Property(str, Enum):
    SEQUENTIAL = "sequential"
    NONSEQUENTIAL = "non-sequential"


class DecidedBy(str, Enum):
    ACF = "acf"
    OVERRIDE = "override"


@dataclass(frozen=True)
class FeatureProperty:
    kind: Property
    decided_by: DecidedBy

    @property
    def sequential(self) -> bool:
        return self.kind is Property.SEQUENTIAL


@dataclass(frozen=True)
class Channel:
    name: str
    unit: str = ""
    source: str = "machine"
    property: Property | None = None
    decided_by: DecidedBy | None = None


@dataclass(frozen=True)
class FeatureSchema:
    channels: tuple[Channel, ...]

    def __post_init__(self):
        if not self.channels:
            raise InvalidConfigError("schema needs at least one channel")
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise InvalidConfigError("channel names must be unique")
        if MOLD_COLUMN in names or TARGET_COLUMN in names:
            raise InvalidConfigError(f"{MOLD_COLUMN!r}/{TARGET_COLUMN!r} are reserved")

    def __len__(self):
        return len(self.channels)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def index(self, name: str) -> int:
        for i, c in enumerate(self.channels):
            if c.name == name:
                return i
        raise UnknownChannelError(f"unknown channel {name!r}")

    @property
    def tagged(self) -> bool:
        return all(c.property is not None for c in self.channels)

    @property
    def sequential_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.channels) if c.property is Property.SEQUENTIAL]

    @property
    def nonsequential_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.channels) if c.property is Property.NONSEQUENTIAL]

    def fingerprint(self) -> str:
        """Hash of ordered channel names and property tags."""
        text = "\n".join(
            f"{c.name}\t{c.property.value if c.property else '?'}" for c in self.channels
        )
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def to_json(self) -> list[dict]:
        return [
            {
                "name": c.name,
                "unit": c.unit,
                "source": c.source,
                "property": c.property.value if c.property else None,
            }
            for c in self.channels
        ]

    @classmethod
    def from_json(cls, items) -> "FeatureSchema":
        try:
            return cls(
                tuple(
                    Channel(
                        name=d["name"],
                        unit=d.get("unit", ""),
                        source=d.get("source", "machine"),
                        property=Property(d["property"]) if d.get("property") else None,
                        decided_by=DecidedBy(d["decided_by"]) if d.get("decided_by") else None,
                    )
                    for d in items
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidConfigError):
                raise
            raise SchemaMismatchError(f"malformed schema: {exc}") from exc


def save_schema(schema: FeatureSchema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_json(), indent=2) + "\n", encoding="utf-8")


def load_schema(path) -> FeatureSchema:
    try:
        items = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaMismatchError(f"{path}: not valid JSON ({exc})") from exc
    return FeatureSchema.from_json(items)


def schema_sidecar(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".schema.json")


@dataclass(frozen=True)
class MoldRecord:
    mold_index: int
    features: dict[str, float]
    weight: float | None = None


@dataclass
class Dataset:
    schema: FeatureSchema
    mold_index: np.ndarray
    values: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        self.mold_index = np.asarray(self.mold_index, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        n = len(self.mold_index)
        if self.values.shape != (n, len(self.schema)) or self.weight.shape != (n,):
            raise SchemaMismatchError(
                f"values {self.values.shape} / weight {self.weight.shape} "
                f"inconsistent with {n} molds x {len(self.schema)} channels"
            )
        if n > 1 and np.any(np.diff(self.mold_index) <= 0):
            raise NonMonotonicMoldIndexError("mold_index must be strictly increasing")

    def __len__(self):
        return len(self.mold_index)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def with_schema(self, schema: FeatureSchema) -> "Dataset":
        if schema.names != self.schema.names:
            raise SchemaMismatchError("schema channel names differ from dataset")
        return Dataset(schema, self.mold_index, self.values, self.weight)

    def molds(self, first: int, last: int) -> "Dataset":
        """Rows whose mold index lies in ``[first, last]``."""
        keep = (self.mold_index >= first) & (self.mold_index <= last)
        return Dataset(self.schema, self.mold_index[keep], self.values[keep], self.weight[keep])

    def records(self):
        names = self.schema.names
        for i in range(len(self)):
            yield MoldRecord(
                int(self.mold_index[i]),
                dict(zip(names, self.values[i].tolist())),
                float(self.weight[i]),
            )

    def equals(self, other: "Dataset") -> bool:
        return (
            self.schema.names == other.schema.names
            and np.array_equal(self.mold_index, other.mold_index)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.weight, other.weight)
        )


# ---------------------------------------------------------------------------
# CSV


def _fmt(x: float) -> str:
    return repr(float(x))


def dataset_to_csv_text(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([MOLD_COLUMN, *dataset.schema.names, TARGET_COLUMN])
    for i in range(len(dataset)):
        writer.writerow(
            [int(dataset.mold_index[i]), *map(_fmt, dataset.values[i]), _fmt(dataset.weight[i])]
        )
    return buf.getvalue()


def save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dataset_to_csv_text(dataset))


def parse_header(header: list[str], schema: FeatureSchema | None = None,
                 require_target: bool = True) -> FeatureSchema:
    """Channels named by a CSV header; the weight column may be absent when
    ``require_target`` is false (streaming prediction input)."""
    header = [h.strip() for h in header]
    if not header or header[0] != MOLD_COLUMN:
        raise HeaderMismatchError(f"first column must be {MOLD_COLUMN!r}")
    if header[-1] == TARGET_COLUMN:
        names = header[1:-1]
    elif require_target:
        raise HeaderMismatchError(f"last column must be {TARGET_COLUMN!r}")
    else:
        names = header[1:]
    if schema is None:
        return FeatureSchema(tuple(Channel(n) for n in names))
    if names != schema.names:
        raise HeaderMismatchError(
            f"header channels {names} do not match schema channels {schema.names}"
        )
    return schema


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ParseError(
            f"row {row}, column {column!r}: cannot parse {text!r} as a number", row, column
        ) from None
    if not math.isfinite(x):
        raise ParseError(f"row {row}, column {column!r}: non-finite value {text!r}", row, column)
    return x


def parse_row(cells: list[str], header: list[str], row: int,
              require_target: bool = True) -> tuple[int, list[float], float]:
    """``(mold_index, channel values, weight)``; weight is NaN when the header
    has no weight column or, with ``require_target`` false, the cell is blank."""
    if len(cells) != len(header):
        raise ParseError(f"row {row}: expected {len(header)} fields, got {len(cells)}", row)
    try:
        mold = int(cells[0])
    except ValueError:
        raise ParseError(
            f"row {row}, column {MOLD_COLUMN!r}: {cells[0]!r} is not an integer", row, MOLD_COLUMN
        ) from None
    has_target = header[-1] == TARGET_COLUMN
    end = -1 if has_target else len(header)
    vals = [_parse_float(c, row, h) for c, h in zip(cells[1:end], header[1:end])]
    if not has_target or (not require_target and not cells[-1].strip()):
        return mold, vals, math.nan
    return mold, vals, _parse_float(cells[-1], row, TARGET_COLUMN)


def load_csv(path, schema: FeatureSchema | None = None) -> Dataset:
    """Read a dataset CSV.

    Without ``schema`` the channels come from the header, untagged. Row
    numbers in errors are 1-based data rows (the header is row 0).
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise HeaderMismatchError(f"{path}: empty file") from None
        schema = parse_header(header, schema)
        header = [h.strip() for h in header]
        molds, rows, weights = [], [], []
        for row, cells in enumerate(reader, start=1):
            if not cells:
                continue
            mold, vals, w = parse_row(cells, header, row)
            if molds and mold <= molds[-1]:
                raise NonMonotonicMoldIndexError(
                    f"row {row}: mold_index {mold} does not increase (previous {molds[-1]})"
                )
            molds.append(mold)
            rows.append(vals)
            weights.append(w)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(schema))
    return Dataset(schema, np.array(molds, dtype=np.int64), values, np.array(weights))


# ---------------------------------------------------------------------------
# Synthetic generator

# Screw cross-section for a 30 mm screw; volume channels are stroke * area.
_AREA_30MM = math.pi * 30.0**2 / 4.0

# (name, unit, source, offset, scale); latent standardized processes are mapped
# to offset + scale * z so files read like controller exports.
_SEQUENTIAL_CHANNELS = [
    ("melt_time_s", "s", "machine", 4.2, 0.05),
    ("melt_start_position_mm3", "mm3", "machine", 70.0 * _AREA_30MM, 0.8 * _AREA_30MM),
    ("barrel_T1_C", "°C", "machine", 200.0, 0.3),
    ("return_water_T_C", "°C", "machine", 30.0, 0.2),
    ("cavity_T_C", "°C", "cavity", 45.0, 0.4),
    ("barrel_T2_C", "°C", "machine", 210.0, 0.3),
    ("barrel_T3_C", "°C", "machine", 205.0, 0.3),
    ("barrel_T4_C", "°C", "machine", 175.0, 0.3),
]
_NONSEQUENTIAL_CHANNELS = [
    ("peak_injection_pressure_MPa", "MPa", "machine", 120.0, 1.5),
    ("vp_switch_position_mm3", "mm3", "machine", 15.0 * _AREA_30MM, 0.6 * _AREA_30MM),
    ("actual_holding_time_s", "s", "machine", 0.5, 0.002),
    ("cavity_peak_pressure_MPa", "MPa", "cavity", 60.0, 1.2),
    ("switchover_speed_mm_s", "mm/s", "machine", 110.0, 0.8),
    ("injection_time_s", "s", "machine", 0.9, 0.01),
    ("mold_close_time_s", "s", "machine", 1.8, 0.02),
    ("mold_open_time_s", "s", "machine", 1.6, 0.02),
]

# Channels whose export path goes through the position rounding.
DEFAULT_QUANTIZED = ("melt_start_position_mm3", "vp_switch_position_mm3")

N_LAGS = 4


@dataclass
class GenConfig:
    n_molds: int = 400
    n_sequential: int = 8
    n_nonsequential: int = 8
    ar_coefficients: tuple[float, ...] | None = None
    ar_range: tuple[float, float] = (0.6, 0.85)
    n_relevant_sequential: int = 5
    n_relevant_nonsequential: int = 5
    beta_range: tuple[float, float] = (0.005, 0.01)
    lag_weights: tuple[float, ...] = (0.015, 0.01, 0.0075, 0.005)
    noise_std: float = 0.01
    w_base: float = 1.0
    drift: float = 0.0
    drift_period: float = 200.0
    beta: tuple[float, ...] | None = None
    u: tuple[float, ...] | None = None

    def validate(self) -> None:
        if self.n_molds < 2:
            raise InvalidConfigError("n_molds must be >= 2")
        if self.n_sequential < 0 or self.n_nonsequential < 0:
            raise InvalidConfigError("channel counts must be >= 0")
        if self.n_sequential + self.n_nonsequential < 1:
            raise InvalidConfigError("at least one channel is required")
        if not self.noise_std > 0:
            raise InvalidConfigError("noise_std must be > 0")
        if len(self.lag_weights) != N_LAGS:
            raise InvalidConfigError(f"lag_weights needs {N_LAGS} entries")
        if self.ar_coefficients is not None:
            if len(self.ar_coefficients) != self.n_sequential:
                raise InvalidConfigError("one AR coefficient per sequential channel")
            if any(not abs(p) < 1 for p in self.ar_coefficients):
                raise InvalidConfigError("AR coefficients must satisfy |phi| < 1")
        lo, hi = self.ar_range
        if not (-1 < lo <= hi < 1):
            raise InvalidConfigError("ar_range must lie inside (-1, 1)")
        if self.beta is not None and len(self.beta) != self.n_nonsequential:
            raise InvalidConfigError("beta needs one entry per non-sequential channel")
        if self.u is not None and len(self.u) != self.n_sequential:
            raise InvalidConfigError("u needs one entry per sequential channel")
        if self.drift_period <= 0:
            raise InvalidConfigError("drift_period must be > 0")


@dataclass
class GroundTruth:
    ar_coefficients: list[float]
    beta: list[float]
    u: list[float]
    lag_weights: list[float]
    w_base: float
    noise_std: float
    drift: float
    channel_offset: list[float]
    channel_scale: list[float]
    noiseless_weight: list[float] = field(repr=False, default_factory=list)

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _channel_table(n_seq: int, n_non: int):
    def take(table, n, prefix):
        out = list(table[:n])
        out += [(f"{prefix}_{j}", "", "machine", 0.0, 1.0) for j in range(len(table), n)]
        return out

    return take(_SEQUENTIAL_CHANNELS, n_seq, "seq_extra"), take(
        _NONSEQUENTIAL_CHANNELS, n_non, "nonseq_extra"
    )


def generate_synthetic(config: GenConfig | None = None, seed: int = 0):
    """Draw a dataset whose weight depends on lagged sequential channels and
    current non-sequential channels.

    Sequential channel j is a unit-variance AR(1) with coefficient phi_j;
    non-sequential channels are iid N(0, 1). With ``s`` the latent sequential
    vector and ``b`` the latent non-sequential vector::

        weight_t = w_base + beta . b_t + sum_l gamma_l tanh(u . s_{t-l}) + N(0, sigma_w)

    Returns ``(dataset, ground_truth)``.
    """
    config = config or GenConfig()
    config.validate()
    rng = np.random.default_rng(seed)
    n, n_seq, n_non = config.n_molds, config.n_sequential, config.n_nonsequential

    if config.ar_coefficients is not None:
        phi = np.array(config.ar_coefficients, dtype=float)
    else:
        phi = rng.uniform(*config.ar_range, size=n_seq)

    if config.beta is not None:
        beta = np.array(config.beta, dtype=float)
    else:
        k = min(config.n_relevant_nonsequential, n_non)
        beta = np.zeros(n_non)
        beta[:k] = rng.uniform(*config.beta_range, size=k) * rng.choice([-1.0, 1.0], size=k)

    if config.u is not None:
        u = np.array(config.u, dtype=float)
    else:
        k = min(config.n_relevant_sequential, n_seq)
        u = np.zeros(n_seq)
        if k:
            raw = rng.standard_normal(k)
            u[:k] = raw / np.linalg.norm(raw)
    gamma = np.array(config.lag_weights, dtype=float)

    # N_LAGS molds of pre-history so the first molds have lagged terms.
    total = n + N_LAGS
    s = np.empty((total, n_seq))
    if n_seq:
        s[0] = rng.standard_normal(n_seq)
        innov = rng.standard_normal((total, n_seq)) * np.sqrt(1.0 - phi**2)
        for t in range(1, total):
            s[t] = phi * s[t - 1] + innov[t]
        if config.drift:
            t_axis = np.arange(total) - N_LAGS + 1
            s += config.drift * np.sin(2 * np.pi * t_axis / config.drift_period)[:, None]
    b = rng.standard_normal((n, n_non))
    noise = rng.normal(0.0, config.noise_std, size=n)

    proj = np.tanh(s @ u) if n_seq else np.zeros(total)
    lagged = sum(gamma[l - 1] * proj[N_LAGS - l : N_LAGS - l + n] for l in range(1, N_LAGS + 1))
    clean = config.w_base + b @ beta + lagged
    weight = clean + noise

    seq_table, non_table = _channel_table(n_seq, n_non)
    channels, offsets, scales = [], [], []
    for table, prop in ((seq_table, Property.SEQUENTIAL), (non_table, Property.NONSEQUENTIAL)):
        for name, unit, source, off, sc in table:
            channels.append(Channel(name, unit, source, prop, DecidedBy.OVERRIDE))
            offsets.append(off)
            scales.append(sc)
    latent = np.hstack([s[N_LAGS:], b])
    values = np.array(offsets) + np.array(scales) * latent

    dataset = Dataset(FeatureSchema(tuple(channels)), np.arange(1, n + 1), values, weight)
    truth = GroundTruth(
        ar_coefficients=phi.tolist(),
        beta=beta.tolist(),
        u=u.tolist(),
        lag_weights=gamma.tolist(),
        w_base=config.w_base,
        noise_std=config.noise_std,
        drift=config.drift,
        channel_offset=offsets,
        channel_scale=scales,
        noiseless_weight=clean.tolist(),
    )
    return dataset, truth


# ---------------------------------------------------------------------------
# Split, windows, standardization


def split(dataset: Dataset, train=(1, 100), test=(101, 200)):
    """Time-ordered split by mold index (defaults: molds 1-100 / 101-200)."""
    if train[0] > train[1] or test[0] > test[1] or train[1] >= test[0]:
        raise InvalidConfigError("train range must precede a non-empty test range")
    if len(dataset) == 0 or dataset.mold_index[0] > train[0] or dataset.mold_index[-1] < test[1]:
        raise InsufficientDataError(
            f"dataset covers molds {dataset.mold_index[:1].tolist()}..."
            f"{dataset.mold_index[-1:].tolist()}, need {train[0]}..{test[1]}"
        )
    return dataset.molds(*train), dataset.molds(*test)


@dataclass
class WindowSet:
    """Supervised samples: ``values[i]`` holds molds t-L+1..t (all channels)."""

    values: np.ndarray  # (N, L, C)
    weight: np.ndarray  # (N,)
    mold_index: np.ndarray  # (N,) the mold t each sample predicts
    schema: FeatureSchema

    def __len__(self):
        return len(self.weight)

    @property
    def window_length(self) -> int:
        return self.values.shape[1]

    @property
    def sequential(self) -> np.ndarray:
        return self.values[:, :, self.schema.sequential_indices]

    @property
    def nonsequential(self) -> np.ndarray:
        return self.values[:, -1, self.schema.nonsequential_indices]

    @property
    def current(self) -> np.ndarray:
        return self.values[:, -1, :]

    def subset(self, idx) -> "WindowSet":
        return WindowSet(self.values[idx], self.weight[idx], self.mold_index[idx], self.schema)


def make_windows(dataset: Dataset, L: int, molds: tuple[int, int] | None = None) -> WindowSet:
    """One sample per mold with L molds of history available in ``dataset``.

    Windows that would need molds before the start of ``dataset`` are dropped.
    ``molds`` restricts which target molds are emitted; their windows may
    still reach back before ``molds[0]``.
    """
    if L < 1:
        raise InvalidConfigError("window length must be >= 1")
    n, c = dataset.values.shape
    m = max(n - L + 1, 0)
    if m:
        idx = np.arange(L)[None, :] + np.arange(m)[:, None]
        vals = dataset.values[idx]
    else:
        vals = np.empty((0, L, c))
    target = dataset.weight[L - 1 :]
    mold = dataset.mold_index[L - 1 :]
    ws = WindowSet(vals, target, mold, dataset.schema)
    if molds is not None:
        ws = ws.subset((mold >= molds[0]) & (mold <= molds[1]))
    return ws


@dataclass
class Standardization:
    mean: np.ndarray
    std: np.ndarray
    target_mean: float
    target_std: float

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def apply_target(self, y):
        return (np.asarray(y, dtype=float) - self.target_mean) / self.target_std

    def invert_target(self, z):
        return np.asarray(z, dtype=float) * self.target_std + self.target_mean

    def to_json(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Standardization":
        return cls(
            np.array(d["mean"], dtype=float),
            np.array(d["std"], dtype=float),
            float(d["target_mean"]),
            float(d["target_std"]),
        )


def standardize_fit(train: Dataset) -> Standardization:
    """Per-channel z-score statistics (population std) from training molds.

    A constant target is allowed and gets unit scale; a constant input
    channel is a data fault.
    """
    if len(train) == 0:
        raise InsufficientDataError("cannot standardize an empty dataset")
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    bad = [train.schema.names[j] for j in np.flatnonzero(~(std > 0))]
    if bad:
        raise ZeroVarianceError(f"constant channel(s): {', '.join(bad)}")
    t_std = float(train.weight.std())
    return Standardization(mean, std, float(train.weight.mean()), t_std if t_std > 0 else 1.0)


def standardize_apply(stats: Standardization, dataset: Dataset) -> Dataset:
    return Dataset(dataset.schema, dataset.mold_index, stats.apply(dataset.values), dataset.weight)


# ---------------------------------------------------------------------------
# Export-precision quantizer


@dataclass(frozen=True)
class QuantizationSpec:
    diameter: float = 30.0
    channels: tuple[str, ...] = DEFAULT_QUANTIZED
    rounding: str = "half-away"

    def __post_init__(self):
        if not self.diameter > 0:
            raise InvalidConfigError("screw diameter must be > 0")
        if self.rounding not in ("half-away", "half-even"):
            raise InvalidConfigError(f"unknown rounding mode {self.rounding!r}")


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(values, spec: QuantizationSpec = QuantizationSpec()) -> np.ndarray:
    """Export value of a controller reading: round(4 v / (pi D^2))."""
    scaled = 4.0 * np.asarray(values, dtype=float) / (math.pi * spec.diameter**2)
    if spec.rounding == "half-even":
        return np.round(scaled) + 0.0
    return round_half_away(scaled) + 0.0


def quantize_dataset(dataset: Dataset, spec: QuantizationSpec = QuantizationSpec()) -> Dataset:
    values = dataset.values.copy()
    for name in spec.channels:
        j = dataset.schema.index(name)
        values[:, j] = quantize(values[:, j], spec)
    return Dataset(dataset.schema, dataset.mold_index, values, dataset.weight)


def dataset_hash(dataset: Dataset) -> str:
    return hashlib.sha256(dataset_to_csv_text(dataset).encode("utf-8")).hexdigest()


__all__ = [
    "Channel",
    "Dataset",
    "DecidedBy",
    "FeatureProperty",
    "FeatureSchema",
    "GenConfig",
    "GroundTruth",
    "MoldRecord",
    "Property",
    "QuantizationSpec",
    "Standardization",
    "WindowSet",
    "generate_synthetic",
    "load_csv",
    "load_schema",
    "make_windows",
    "quantize",
    "quantize_dataset",
    "save_csv",
    "save_schema",
    "split",
    "standardize_apply",
    "standardize_fit",
]
