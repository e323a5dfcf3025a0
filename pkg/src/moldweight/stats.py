"""Student-t distribution and the paired t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDfError, LengthMismatchError, ZeroVarianceDifferencesError

_EPS = 1e-16
_TINY = 1e-300


def _betacf(a, b, x, max_iter=10_000):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _check_df(df):
    if not df >= 1:
        raise InvalidDfError(f"degrees of freedom must be >= 1, got {df}")


def student_t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for T ~ Student-t(df)."""
    _check_df(df)
    if math.isinf(t):
        return 0.0
    if t == 0:
        return 1.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


def student_t_cdf(t: float, df: float) -> float:
    _check_df(df)
    if t == 0:
        return 0.5
    tail = 0.5 * student_t_sf_two_sided(t, df)
    return 1.0 - tail if t > 0 else tail


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: int
    p_value_two_sided: float
    mean_difference: float
    sd_difference: float
    n: int
    pairing: str

    def to_json(self) -> dict:
        return {
            "t_statistic": self.t_statistic,
            "degrees_of_freedom": self.degrees_of_freedom,
            "p_value_two_sided": self.p_value_two_sided,
            "p_value_text": format_p(self.p_value_two_sided),
            "mean_difference": self.mean_difference,
            "sd_difference": self.sd_difference,
            "n": self.n,
            "pairing": self.pairing,
        }


def paired_differences(errors_a, errors_b, pairing="absolute"):
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatchError(f"paired samples differ in shape: {a.shape} vs {b.shape}")
    if pairing == "absolute":
        return np.abs(a) - np.abs(b)
    if pairing == "signed":
        return a - b
    raise ValueError(f"unknown pairing {pairing!r}")


def paired_t_test(errors_a, errors_b, pairing="absolute", on_zero_variance="raise") -> TTestResult:
    """Paired t-test on per-sample differences d_i (|e_a| - |e_b| by default).

    t = mean(d) / (sd(d) / sqrt(n)), two-sided p with n - 1 degrees of freedom.
    When every d_i is equal the statistic is undefined: ``on_zero_variance``
    = "raise" raises ZeroVarianceDifferencesError, "null" returns t = 0,
    p = 1 if the differences are all zero (t = +-inf, p = 0 otherwise).
    """
    d = paired_differences(errors_a, errors_b, pairing)
    n = len(d)
    if n < 2:
        raise LengthMismatchError("paired t-test needs n >= 2")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if on_zero_variance == "raise":
            raise ZeroVarianceDifferencesError("all paired differences are identical")
        if mean == 0.0:
            return TTestResult(0.0, n - 1, 1.0, 0.0, 0.0, n, pairing)
        return TTestResult(math.copysign(math.inf, mean), n - 1, 0.0, mean, 0.0, n, pairing)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, n - 1, student_t_sf_two_sided(t, n - 1), mean, sd, n, pairing)


def format_p(p: float) -> str:
    if p < 1e-15:
        return "<1e-15"
    return f"{p:.3g}"
