"""Metrics, error distributions and the experiment harnesses.

The harnesses train every requested variant on the molds of the training
range and score it on the test range. A harness run is identified by a
variant and a seed; the seed fixes both weight initialization and the
minibatch/dropout streams (and the forest's bootstrap), so the same call
reproduces the same numbers.

Significance between two arms uses the paired t-test on absolute errors.
With several seeds the pairs are pooled across (seed, mold), which keeps
every pair matched on the same input.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import classic, model as mdl
from .data import Dataset, QuantizationSpec, quantize_dataset, split
from .errors import EmptyWindowError, InvalidConfigError, LengthMismatchError
from .stats import TTestResult, format_p, paired_t_test

NEURAL_VARIANTS = tuple(v.value for v in mdl.Variant)
CLASSIC_VARIANTS = ("svr", "rf")
ALL_VARIANTS = NEURAL_VARIANTS + CLASSIC_VARIANTS
COMPARISON_VARIANTS = ("mfa-ann", "flat-ann", "all-lstm", "svr", "rf")
ABLATION_VARIANTS = ("mfa-ann", "mixed-no-attention", "flat-attention", "flat-ann")
DEFAULT_TRAIN = (1, 100)
DEFAULT_TEST = (101, 200)

DatasetSource = Union[Dataset, Callable[[int], Dataset]]


# ---------------------------------------------------------------------------
# Metrics


def rmse(actual, predicted) -> float:
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise LengthMismatchError(f"actual {a.shape} vs predicted {p.shape}")
    if a.size == 0:
        raise EmptyWindowError("no predictions to score")
    return math.sqrt(float(np.mean((a - p) ** 2)))


def error_cdf(errors, absolute=True) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF as step points ``(value, cumulative probability)``.

    Repeated values collapse to one point carrying the cumulative mass up to
    and including them, so the last probability is exactly 1.
    """
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise EmptyWindowError("no errors to summarize")
    if absolute:
        e = np.abs(e)
    values, counts = np.unique(e, return_counts=True)
    prob = np.cumsum(counts) / e.size
    prob[-1] = 1.0
    return values, prob


@dataclass(frozen=True)
class BoxSummary:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float
    whisker_low: float
    whisker_high: float
    n_outliers: int

    @classmethod
    def of(cls, values) -> "BoxSummary":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            raise EmptyWindowError("no values to summarize")
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        iqr = q3 - q1
        inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
        return cls(float(v.min()), float(q1), float(med), float(q3), float(v.max()),
                   float(v.mean()), float(inside.min()), float(inside.max()),
                   int(v.size - inside.size))

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalRun:
    """Predictions of one trained model on the test molds."""

    variant: str
    seed: int
    mold_index: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return self.actual - self.predicted

    @property
    def rmse(self) -> float:
        return rmse(self.actual, self.predicted)

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "seed": self.seed,
            "rmse": self.rmse,
            "params": self.params,
            "mold_index": self.mold_index.tolist(),
            "actual": self.actual.tolist(),
            "predicted": self.predicted.tolist(),
        }


@dataclass
class EvalReport:
    rmse: float
    n: int
    errors: np.ndarray
    cdf: tuple[np.ndarray, np.ndarray]
    summary: BoxSummary
    run: EvalRun

    def to_json(self) -> dict:
        return {
            "rmse": self.rmse,
            "n": self.n,
            "abs_error_summary": self.summary.to_json(),
            "run": self.run.to_json(),
        }


def report_for(run: EvalRun) -> EvalReport:
    e = run.errors
    return EvalReport(run.rmse, len(e), e, error_cdf(e), BoxSummary.of(np.abs(e)), run)


def evaluate(model, dataset: Dataset, molds=DEFAULT_TEST, seed=-1) -> EvalReport:
    """Score a trained model on ``molds`` of ``dataset`` (history may precede them)."""
    mold_index, pred = mdl.predict_dataset(model, dataset, molds)
    if len(pred) == 0:
        raise EmptyWindowError(f"no mold in {molds} has a full window")
    actual = dataset.weight[np.searchsorted(dataset.mold_index, mold_index)]
    variant = model.variant.value if isinstance(model, mdl.NeuralModel) else model.variant
    return report_for(EvalRun(variant, seed, mold_index, actual, pred))


# ---------------------------------------------------------------------------
# Fitting one arm


@dataclass(frozen=True)
class HarnessConfig:
    train: tuple[int, int] = DEFAULT_TRAIN
    test: tuple[int, int] = DEFAULT_TEST
    model: dict = field(default_factory=dict)  # ModelConfig overrides
    training: dict = field(default_factory=dict)  # TrainConfig overrides
    svr_grid: dict | None = None
    rf_grid: dict | None = None
    folds: int = 5
    threads: int = 1


def fit_variant(variant: str, train_data: Dataset, seed: int, config: HarnessConfig = HarnessConfig()):
    if variant in CLASSIC_VARIANTS:
        grid = config.svr_grid if variant == "svr" else config.rf_grid
        return classic.fit_classic(variant, train_data, grid, seed=seed, k=config.folds)
    if variant not in NEURAL_VARIANTS:
        raise InvalidConfigError(f"unknown variant {variant!r}; choose from {', '.join(ALL_VARIANTS)}")
    m = mdl.build(mdl.ModelConfig(variant=mdl.Variant(variant), **config.model), train_data.schema, seed)
    mdl.train(m, train_data, mdl.TrainConfig(seed=seed, **config.training))
    return m


def run_arm(dataset: Dataset, variant: str, seed: int, config: HarnessConfig = HarnessConfig()) -> EvalRun:
    train_data, _ = split(dataset, config.train, config.test)
    fitted = fit_variant(variant, train_data, seed, config)
    # the test windows may reach back into the training molds for history
    history = dataset.molds(config.train[0], config.test[1])
    run = evaluate(fitted, history, config.test, seed).run
    if isinstance(fitted, classic.ClassicModel):
        run.params = dict(fitted.params)
    return run


def _resolve(source: DatasetSource, seed: int) -> Dataset:
    return source(seed) if callable(source) else source


def _arm_job(args):
    source, variant, seed, config = args
    return run_arm(_resolve(source, seed), variant, seed, config)


def run_arms(source: DatasetSource, variants: Sequence[str], seeds: Sequence[int],
             config: HarnessConfig = HarnessConfig()) -> dict[str, list[EvalRun]]:
    """Every variant for every seed; ``{variant: [run per seed]}``."""
    if not variants:
        raise InvalidConfigError("no variants requested")
    if not seeds:
        raise InvalidConfigError("no seeds requested")
    for v in variants:
        if v not in ALL_VARIANTS:
            raise InvalidConfigError(f"unknown variant {v!r}; choose from {', '.join(ALL_VARIANTS)}")
    jobs = [(source, v, s, config) for s in seeds for v in variants]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as ex:
            results = list(ex.map(_arm_job, jobs))
    else:
        results = [_arm_job(j) for j in jobs]
    out: dict[str, list[EvalRun]] = {v: [] for v in variants}
    for (_, v, _, _), run in zip(jobs, results):
        out[v].append(run)
    return out


def pooled_errors(runs: Sequence[EvalRun]) -> np.ndarray:
    return np.concatenate([r.errors for r in runs])


def compare_arms(runs_a: Sequence[EvalRun], runs_b: Sequence[EvalRun]) -> TTestResult:
    for a, b in zip(runs_a, runs_b):
        if a.seed != b.seed or not np.array_equal(a.mold_index, b.mold_index):
            raise LengthMismatchError("arms are not paired on the same seeds and molds")
    return paired_t_test(pooled_errors(runs_a), pooled_errors(runs_b), on_zero_variance="null")


def _rmse_stats(runs: Sequence[EvalRun]) -> dict:
    r = np.array([x.rmse for x in runs])
    return {
        "mean": float(r.mean()),
        "std": float(r.std(ddof=1)) if len(r) > 1 else 0.0,
        "per_seed": r.tolist(),
    }


# ---------------------------------------------------------------------------
# Pairwise comparison


@dataclass
class ComparisonReport:
    variants: list[str]
    seeds: list[int]
    runs: dict[str, list[EvalRun]]
    tests: dict[tuple[str, str], TTestResult]

    def rmse(self, variant: str) -> dict:
        return _rmse_stats(self.runs[variant])

    def p_value(self, a: str, b: str) -> float:
        key = (a, b) if (a, b) in self.tests else (b, a)
        return self.tests[key].p_value_two_sided

    def table(self) -> list[list[str]]:
        """Lower-triangular p-value table; the diagonal and above read ``×``."""
        rows = [[""] + list(self.variants)]
        for i, a in enumerate(self.variants):
            row = [a]
            for j, b in enumerate(self.variants):
                row.append(format_p(self.p_value(a, b)) if j < i else "×")
            rows.append(row)
        return rows

    def render(self) -> str:
        lines = [render_table(self.table()), "", "RMSE (g) over seeds " + ",".join(map(str, self.seeds))]
        for v in self.variants:
            s = self.rmse(v)
            lines.append(f"  {v:<20s} {s['mean']:.5f} ± {s['std']:.5f}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "variants": self.variants,
            "seeds": self.seeds,
            "rmse": {v: self.rmse(v) for v in self.variants},
            "p_values": {f"{a}|{b}": t.to_json() for (a, b), t in self.tests.items()},
            "table": self.table(),
            "runs": {v: [r.to_json() for r in rs] for v, rs in self.runs.items()},
        }


def render_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows)


def comparison_from_runs(runs: dict[str, list[EvalRun]]) -> ComparisonReport:
    variants = list(runs)
    seeds = [r.seed for r in runs[variants[0]]]
    tests = {}
    for i, a in enumerate(variants):
        for b in variants[:i]:
            tests[(a, b)] = compare_arms(runs[a], runs[b])
    return ComparisonReport(variants, seeds, runs, tests)


def run_comparison(source: DatasetSource, seeds: Sequence[int] = (0,),
                   variants: Sequence[str] = COMPARISON_VARIANTS,
                   config: HarnessConfig = HarnessConfig()) -> ComparisonReport:
    """Train each variant per seed, test on the held-out molds, tabulate p-values.

    ``source`` is a dataset shared by every seed, or a callable producing
    the dataset for a given seed.
    """
    return comparison_from_runs(run_arms(source, list(variants), list(seeds), config))


# ---------------------------------------------------------------------------
# Ablation


@dataclass(frozen=True)
class AblationRow:
    group: int
    variant: str
    mixed: bool
    attention: bool
    rmse_mean: float
    rmse_std: float
    improvement_pct: float  # relative to group 4
    p_value: float | None  # paired test against group 4

    def flags(self) -> tuple[str, str]:
        return ("✓" if self.mixed else "×", "✓" if self.attention else "×")

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["p_value_text"] = None if self.p_value is None else format_p(self.p_value)
        return d


@dataclass
class AblationReport:
    rows: list[AblationRow]
    comparison: ComparisonReport

    def render(self) -> str:
        table = [["group", "mixed input", "attention", "RMSE (g)", "improvement", "p vs group 4"]]
        for r in self.rows:
            m, a = r.flags()
            table.append([
                str(r.group), m, a, f"{r.rmse_mean:.5f} ± {r.rmse_std:.5f}",
                f"{r.improvement_pct:+.1f}%", "×" if r.p_value is None else format_p(r.p_value),
            ])
        return render_table(table)

    def to_json(self) -> dict:
        return {"rows": [r.to_json() for r in self.rows], "comparison": self.comparison.to_json()}


def ablation_from_runs(runs: dict[str, list[EvalRun]]) -> AblationReport:
    comp = comparison_from_runs({v: runs[v] for v in ABLATION_VARIANTS})
    base = comp.rmse("flat-ann")["mean"]
    rows = []
    for g, v in enumerate(ABLATION_VARIANTS, start=1):
        var = mdl.Variant(v)
        s = comp.rmse(v)
        rows.append(AblationRow(
            g, v, var.mixed, var.uses_attention, s["mean"], s["std"],
            (base - s["mean"]) / base * 100.0,
            None if v == "flat-ann" else comp.p_value(v, "flat-ann"),
        ))
    return AblationReport(rows, comp)


def run_ablation(source: DatasetSource, seeds: Sequence[int] = (0,),
                 config: HarnessConfig = HarnessConfig()) -> AblationReport:
    """The four groups crossing mixed input with feature attention."""
    return ablation_from_runs(run_arms(source, list(ABLATION_VARIANTS), list(seeds), config))


# ---------------------------------------------------------------------------
# Precision study


@dataclass(frozen=True)
class _QuantizedSource:
    source: Callable[[int], Dataset]
    spec: QuantizationSpec

    def __call__(self, seed: int) -> Dataset:
        return quantize_dataset(self.source(seed), self.spec)


@dataclass
class PrecisionReport:
    variant: str
    spec: QuantizationSpec
    original: list[EvalRun]
    quantized: list[EvalRun]
    test: TTestResult

    @property
    def rmse_original(self) -> float:
        return _rmse_stats(self.original)["mean"]

    @property
    def rmse_quantized(self) -> float:
        return _rmse_stats(self.quantized)["mean"]

    @property
    def degradation_pct(self) -> float:
        return (self.rmse_quantized - self.rmse_original) / self.rmse_original * 100.0

    def box(self, arm: str) -> BoxSummary:
        runs = self.original if arm == "original" else self.quantized
        return BoxSummary.of(np.abs(pooled_errors(runs)))

    def render(self) -> str:
        lines = [f"variant {self.variant}; quantized channels {', '.join(self.spec.channels)}"]
        for arm in ("original", "quantized"):
            b = self.box(arm)
            r = self.rmse_original if arm == "original" else self.rmse_quantized
            lines.append(f"  {arm:<10s} RMSE {r:.5f}  |e| q1 {b.q1:.5f} median {b.median:.5f} q3 {b.q3:.5f}")
        lines.append(f"  degradation {self.degradation_pct:+.2f}%  paired p {format_p(self.test.p_value_two_sided)}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "quantization": {"diameter": self.spec.diameter, "channels": list(self.spec.channels),
                             "rounding": self.spec.rounding},
            "rmse_original": _rmse_stats(self.original),
            "rmse_quantized": _rmse_stats(self.quantized),
            "degradation_pct": self.degradation_pct,
            "box_original": self.box("original").to_json(),
            "box_quantized": self.box("quantized").to_json(),
            "paired_test": self.test.to_json(),
            "runs_original": [r.to_json() for r in self.original],
            "runs_quantized": [r.to_json() for r in self.quantized],
        }


def run_precision_study(source: DatasetSource, spec: QuantizationSpec = QuantizationSpec(),
                        seeds: Sequence[int] = (0,), variant: str = "mfa-ann",
                        config: HarnessConfig = HarnessConfig()) -> PrecisionReport:
    """Same variant, splits and seeds on full-precision and export-quantized inputs."""
    original = run_arms(source, [variant], list(seeds), config)[variant]
    src = _QuantizedSource(source, spec) if callable(source) else quantize_dataset(source, spec)
    quantized = run_arms(src, [variant], list(seeds), config)[variant]
    return PrecisionReport(variant, spec, original, quantized, compare_arms(quantized, original))
