"""Autocorrelation analysis and sequential/non-sequential channel tagging."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .data import Channel, Dataset, DecidedBy, FeatureProperty, FeatureSchema, Property
from .errors import (
    InvalidConfidenceError,
    LagTooLargeError,
    NonFiniteInputError,
    UnknownChannelError,
    ZeroVarianceError,
)

DEFAULT_MAX_LAG = 20
DEFAULT_CONFIDENCE = 0.99


@dataclass(frozen=True)
class AcfResult:
    coefficients: np.ndarray  # r_0..r_K
    max_lag: int
    n: int
    bound: float
    significant_lags: frozenset[int]


def significance_bound(n: int, confidence: float = DEFAULT_CONFIDENCE) -> float:
    """Large-sample white-noise half-width z_{(1+c)/2} / sqrt(n)."""
    if n < 2:
        raise LagTooLargeError("need n >= 2")
    if not 0 < confidence < 1:
        raise InvalidConfidenceError(f"confidence must lie in (0, 1), got {confidence}")
    return NormalDist().inv_cdf((1 + confidence) / 2) / math.sqrt(n)


def acf(series, max_lag: int, confidence: float = DEFAULT_CONFIDENCE) -> AcfResult:
    """Sample autocorrelation r_0..r_max_lag, normalized by the lag-0 sum of squares."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    n = len(x)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("series contains NaN or inf")
    if not 1 <= max_lag < n:
        raise LagTooLargeError(f"max_lag must satisfy 1 <= max_lag < n={n}, got {max_lag}")
    d = x - x.mean()
    denom = float(d @ d)
    # relative threshold so float noise on a constant series is still constant
    if denom <= (1e-26 * n * max(1.0, float(np.max(np.abs(x)))) ** 2):
        raise ZeroVarianceError("constant series has no autocorrelation")
    r = np.empty(max_lag + 1)
    r[0] = 1.0
    for k in range(1, max_lag + 1):
        r[k] = float(d[: n - k] @ d[k:]) / denom
    bound = significance_bound(n, confidence)
    sig = frozenset(k for k in range(1, max_lag + 1) if abs(r[k]) > bound)
    return AcfResult(r, max_lag, n, bound, sig)


def family_confidence(confidence: float, max_lag: int) -> float:
    """Per-lag confidence so that all max_lag tests jointly hold at ``confidence`` (Sidak)."""
    return confidence ** (1.0 / max_lag)


def classify_feature(
    series,
    max_lag: int = DEFAULT_MAX_LAG,
    confidence: float = DEFAULT_CONFIDENCE,
    correction: str = "sidak",
) -> FeatureProperty:
    """Sequential iff any lag 1..max_lag exceeds the significance bound.

    With ``correction="sidak"`` the bound is widened so that white noise is
    tagged sequential with probability ~1-confidence over the whole lag
    window; ``"none"`` tests every lag at ``confidence``.
    """
    if correction == "sidak":
        level = family_confidence(confidence, max_lag)
    elif correction == "none":
        level = confidence
    else:
        raise ValueError(f"unknown correction {correction!r}")
    res = acf(series, max_lag, level)
    kind = Property.SEQUENTIAL if res.significant_lags else Property.NONSEQUENTIAL
    return FeatureProperty(kind, DecidedBy.ACF)


def classify_dataset(
    dataset: Dataset,
    overrides: dict[str, Property | str] | None = None,
    max_lag: int = DEFAULT_MAX_LAG,
    confidence: float = DEFAULT_CONFIDENCE,
    correction: str = "sidak",
) -> FeatureSchema:
    """Tag every channel; ``overrides`` (name -> property) skip the ACF test."""
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(dataset.schema.names)
    if unknown:
        raise UnknownChannelError(f"override names not in dataset: {sorted(unknown)}")
    if len(dataset) == 0:
        raise ZeroVarianceError("empty dataset")
    lag = min(max_lag, len(dataset) - 1)
    out = []
    for j, ch in enumerate(dataset.schema.channels):
        if ch.name in overrides:
            prop = FeatureProperty(Property(overrides[ch.name]), DecidedBy.OVERRIDE)
        else:
            prop = classify_feature(dataset.values[:, j], lag, confidence, correction)
        out.append(Channel(ch.name, ch.unit, ch.source, prop.kind, prop.decided_by))
    return FeatureSchema(tuple(out))
