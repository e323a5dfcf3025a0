"""Command-line entry point: ``moldweight <command> [options]``.

Exit codes: 0 on success, 1 on a usage error (nothing is written), 2 on a
data or numeric failure (files written by the failed command are removed).
Every command that writes artifacts also writes ``<out stem>.manifest.json``
recording the command line, seeds, version, input hash, outputs and run time.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import data as ds
from . import evaluation as ev
from . import model as mdl
from . import tsa
from .errors import MoldWeightError, UsageError

SEED_ENV = "MOLDWEIGHT_SEED"


class _ArgumentError(Exception):
    def __init__(self, parser, message):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(self, message)


class _Outputs:
    """Tracks files a command creates so a failed run can remove them."""

    def __init__(self, inputs=()):
        self.paths: list[Path] = []
        self.inputs = {Path(p).resolve() for p in inputs}

    def claim(self, path) -> Path:
        p = Path(path)
        if p.resolve() in self.inputs:
            raise UsageError(f"refusing to overwrite input file {p}")
        self.paths.append(p)
        return p

    def write_text(self, path, text: str) -> Path:
        p = self.claim(path)
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return p

    def write_json(self, path, obj) -> Path:
        return self.write_text(path, json.dumps(obj, indent=2, ensure_ascii=False) + "\n")

    def write_csv(self, path, header, rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return self.write_text(path, buf.getvalue())

    def rollback(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _stem(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem)


def _sibling(path, suffix) -> Path:
    s = _stem(path)
    return s.with_name(s.name + suffix)


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None


def _range(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected FIRST:LAST, got {text!r}") from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _channels(text: str) -> tuple[str, ...]:
    return tuple(c.strip() for c in text.split(",") if c.strip())


def _read_dataset(path, schema_path=None) -> ds.Dataset:
    schema = None
    sidecar = Path(schema_path) if schema_path else ds.schema_sidecar(path)
    if schema_path or sidecar.exists():
        schema = ds.load_schema(sidecar)
    return ds.load_csv(path, schema)


def _manifest(out: _Outputs, args, argv, primary, seeds, dataset_hash, started):
    path = _sibling(primary, ".manifest.json")
    outputs = [str(p) for p in out.paths] + [str(path)]
    out.write_json(path, {
        "command": ["moldweight", *argv],
        "subcommand": args.command,
        "seeds": list(seeds),
        "version": __version__,
        "dataset_hash": dataset_hash,
        "outputs": outputs,
        "wall_clock_s": round(time.perf_counter() - started, 6),
    })


def _plot(args, fn, *a, **kw):
    if getattr(args, "no_plots", False):
        return
    from . import plotting

    getattr(plotting, fn)(*a, **kw)


# ---------------------------------------------------------------------------
# Commands


def cmd_gen(args, out, argv, started):
    seed = _seed(args)
    cfg = ds.GenConfig(n_molds=args.molds, n_sequential=args.seq, n_nonsequential=args.nonseq,
                       noise_std=args.noise, drift=args.drift)
    dataset, truth = ds.generate_synthetic(cfg, seed)
    ds_text = ds.dataset_to_csv_text(dataset)
    out.write_text(args.out, ds_text)
    out.write_json(ds.schema_sidecar(args.out), dataset.schema.to_json())
    out.write_json(_sibling(args.out, ".truth.json"), truth.to_json())
    _manifest(out, args, argv, args.out, [seed], ds.dataset_hash(dataset), started)


def cmd_quantize(args, out, argv, started):
    dataset = _read_dataset(args.input)
    channels = args.channels or ds.DEFAULT_QUANTIZED
    spec = ds.QuantizationSpec(args.diameter, channels, args.rounding)
    q = ds.quantize_dataset(dataset, spec)
    out.write_text(args.out, ds.dataset_to_csv_text(q))
    if dataset.schema.tagged or ds.schema_sidecar(args.input).exists():
        out.write_json(ds.schema_sidecar(args.out), q.schema.to_json())
    _manifest(out, args, argv, args.out, [], ds.dataset_hash(dataset), started)


def _overrides(items):
    result = {}
    for item in items or []:
        name, sep, prop = item.partition("=")
        if not sep or prop not in (p.value for p in ds.Property):
            raise UsageError(f"override must be NAME=sequential|non-sequential, got {item!r}")
        result[name] = prop
    return result


def cmd_acf(args, out, argv, started):
    dataset = _read_dataset(args.input)
    if args.molds:
        dataset = dataset.molds(*args.molds)
    overrides = _overrides(args.override)
    schema = tsa.classify_dataset(dataset, overrides, args.max_lag, args.confidence, args.correction)
    lag = min(args.max_lag, len(dataset) - 1)
    conf = tsa.family_confidence(args.confidence, lag) if args.correction == "sidak" else args.confidence
    rows, report = [], []
    results = {}
    for j, ch in enumerate(schema.channels):
        res = tsa.acf(dataset.values[:, j], lag, conf)
        results[ch.name] = res
        rows.extend([ch.name, k, repr(float(r)), repr(res.bound)] for k, r in enumerate(res.coefficients))
        report.append({
            "channel": ch.name,
            "property": ch.property.value,
            "decided_by": ch.decided_by.value,
            "significant_lags": sorted(res.significant_lags),
            "bound": res.bound,
        })
    out.write_csv(args.out, ["channel", "lag", "r", "bound"], rows)
    out.write_json(_sibling(args.out, ".json"), {
        "n": len(dataset),
        "max_lag": lag,
        "confidence": args.confidence,
        "correction": args.correction,
        "per_lag_confidence": conf,
        "channels": report,
    })
    if args.schema_out:
        out.write_json(args.schema_out, schema.to_json())
    if args.plots:
        for name, res in results.items():
            p = out.claim(_sibling(args.out, f".{name}.png"))
            _plot(args, "acf_figure", res.coefficients, res.bound, name, p)
    _manifest(out, args, argv, args.out, [], ds.dataset_hash(dataset), started)


def _train_config(args, seed) -> dict:
    kw = {"seed": seed}
    for flag, key in (("epochs", "max_epochs"), ("lr", "lr"), ("batch", "batch_size"),
                      ("weight_decay", "weight_decay"), ("patience", "early_stop_patience")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    return kw


def cmd_train(args, out, argv, started):
    seed = _seed(args)
    if args.variant not in ev.ALL_VARIANTS:
        raise UsageError(f"unknown variant {args.variant!r}; choose from {', '.join(ev.ALL_VARIANTS)}")
    dataset = _read_dataset(args.input, args.schema)
    train_data = dataset.molds(*args.train_molds)
    if len(train_data) == 0:
        raise ds.InsufficientDataError(f"no molds in {args.train_molds}")
    if not train_data.schema.tagged:
        tagged = tsa.classify_dataset(train_data)
        dataset, train_data = dataset.with_schema(tagged), train_data.with_schema(tagged)
    history = None
    if args.variant in ev.CLASSIC_VARIANTS:
        from .classic import fit_classic

        model = fit_classic(args.variant, train_data, seed=seed)
    else:
        mk = {"variant": args.variant}
        if args.window is not None:
            mk["window"] = args.window
        if args.dropout is not None:
            mk["dropout"] = args.dropout
        model = mdl.build(mdl.ModelConfig(**mk), train_data.schema, seed)
        model, history = mdl.train(model, train_data, mdl.TrainConfig(**_train_config(args, seed)))
    out.write_text(args.out, json.dumps(mdl.model_to_json(model)) + "\n")
    if history is not None:
        out.write_json(_sibling(args.out, ".history.json"), history.to_json())
    _manifest(out, args, argv, args.out, [seed], ds.dataset_hash(dataset), started)


def _fmt(x) -> str:
    return repr(float(x))


def cmd_predict(args, out, argv, started):
    model = mdl.load(args.model)
    if args.online:
        return _predict_online(model, args, out, argv, started)
    dataset = ds.load_csv(args.input, model.schema)
    mdl.check_schema(model, dataset)
    mold_index, pred = mdl.predict_dataset(model, dataset)
    predicted = dict(zip(mold_index.tolist(), pred.tolist()))
    rows = [[m, _fmt(predicted[m]) if m in predicted else "warming_up"] for m in dataset.mold_index.tolist()]
    if args.out in (None, "-"):
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["mold_index", "prediction"])
        w.writerows(rows)
        return
    out.write_csv(args.out, ["mold_index", "prediction"], rows)
    _manifest(out, args, argv, args.out, [], ds.dataset_hash(dataset), started)


def _predict_online(model, args, out, argv, started):
    stream = sys.stdin if args.input in (None, "-") else open(args.input, encoding="utf-8")
    sink = sys.stdout if args.out in (None, "-") else open(out.claim(args.out), "w", encoding="utf-8")
    try:
        reader = csv.reader(stream)
        header = [h.strip() for h in next(reader)]
        ds.parse_header(header, model.schema, require_target=False)
        predictor = mdl.OnlinePredictor(model)
        sink.write("mold_index,prediction\n")
        sink.flush()
        for row, cells in enumerate(reader, start=1):
            if not cells:
                continue
            mold, values, _ = ds.parse_row(cells, header, row, require_target=False)
            mold, p = predictor.feed((mold, values))
            sink.write(f"{mold},{'warming_up' if p is None else _fmt(p)}\n")
            sink.flush()
    finally:
        if stream is not sys.stdin:
            stream.close()
        if sink is not sys.stdout:
            sink.close()
    if sink is not sys.stdout:
        _manifest(out, args, argv, args.out, [], None, started)


def _write_box_csv(out, path, arms: dict):
    rows = []
    for name, errs in arms.items():
        b = ev.BoxSummary.of(np.abs(errs))
        rows.append([name, b.minimum, b.whisker_low, b.q1, b.median, b.q3, b.whisker_high, b.maximum,
                     b.mean, b.n_outliers])
    out.write_csv(path, ["arm", "min", "whisker_low", "q1", "median", "q3", "whisker_high", "max",
                         "mean", "n_outliers"], rows)


def _write_cdf_csv(out, path, errors):
    x, p = ev.error_cdf(errors)
    out.write_csv(path, ["abs_error", "cum_prob"], [[_fmt(a), _fmt(b)] for a, b in zip(x, p)])


def cmd_eval(args, out, argv, started):
    model = mdl.load(args.model)
    dataset = ds.load_csv(args.input, model.schema)
    report = ev.evaluate(model, dataset, args.molds)
    doc = report.to_json()
    doc["pairing"] = "absolute"
    out.write_json(args.out, doc)
    _write_cdf_csv(out, _sibling(args.out, ".cdf.csv"), report.errors)
    _write_box_csv(out, _sibling(args.out, ".box.csv"), {report.run.variant: report.errors})
    if not args.no_plots:
        _plot(args, "cdf_figure", {report.run.variant: report.errors}, out.claim(_sibling(args.out, ".cdf.png")))
        r = report.run
        _plot(args, "prediction_figure", r.mold_index, r.actual, r.predicted,
              out.claim(_sibling(args.out, ".pred.png")))
    _manifest(out, args, argv, args.out, [], ds.dataset_hash(dataset), started)


def _harness(args) -> tuple[list[int], ev.HarnessConfig]:
    base = _seed(args)
    seeds = list(range(base, base + args.seeds))
    training = {}
    if args.epochs is not None:
        training["max_epochs"] = args.epochs
    if args.patience is not None:
        training["early_stop_patience"] = args.patience
    cfg = ev.HarnessConfig(train=args.train_molds, test=args.test_molds, training=training,
                           threads=args.threads)
    return seeds, cfg


def _tagged(path) -> ds.Dataset:
    dataset = _read_dataset(path)
    if not dataset.schema.tagged:
        dataset = dataset.with_schema(tsa.classify_dataset(dataset.molds(1, 100) if len(dataset) > 100 else dataset))
    return dataset


def cmd_compare(args, out, argv, started):
    variants = list(args.variants or ev.COMPARISON_VARIANTS)
    for v in variants:
        if v not in ev.ALL_VARIANTS:
            raise UsageError(f"unknown variant {v!r}; choose from {', '.join(ev.ALL_VARIANTS)}")
    seeds, cfg = _harness(args)
    dataset = _tagged(args.input)
    report = ev.run_comparison(dataset, seeds, variants, cfg)
    doc = report.to_json()
    doc["pairing"] = "absolute"
    out.write_json(args.out, doc)
    out.write_text(_sibling(args.out, ".txt"), report.render() + "\n")
    errs = {v: ev.pooled_errors(rs) for v, rs in report.runs.items()}
    _write_box_csv(out, _sibling(args.out, ".box.csv"), errs)
    if not args.no_plots:
        _plot(args, "cdf_figure", errs, out.claim(_sibling(args.out, ".cdf.png")))
        _plot(args, "rmse_bar_figure", {v: report.rmse(v) for v in variants},
              out.claim(_sibling(args.out, ".rmse.png")))
    _manifest(out, args, argv, args.out, seeds, ds.dataset_hash(dataset), started)
    print(report.render())


def cmd_ablate(args, out, argv, started):
    seeds, cfg = _harness(args)
    dataset = _tagged(args.input)
    report = ev.run_ablation(dataset, seeds, cfg)
    rows = []
    for r in report.rows:
        m, a = r.flags()
        rows.append([r.group, r.variant, m, a, _fmt(r.rmse_mean), _fmt(r.rmse_std),
                     f"{r.improvement_pct:.4f}", "×" if r.p_value is None else ev.format_p(r.p_value)])
    out.write_csv(args.out, ["group", "variant", "mixed_features", "attention", "rmse_mean", "rmse_std",
                             "improvement_pct", "p_value_vs_group4"], rows)
    doc = report.to_json()
    doc["pairing"] = "absolute"
    out.write_json(_sibling(args.out, ".json"), doc)
    if not args.no_plots:
        _plot(args, "rmse_bar_figure",
              {f"G{r.group} {r.variant}": {"mean": r.rmse_mean, "std": r.rmse_std} for r in report.rows},
              out.claim(_sibling(args.out, ".png")), title="Ablation: test RMSE")
    _manifest(out, args, argv, args.out, seeds, ds.dataset_hash(dataset), started)
    print(report.render())


def cmd_precision(args, out, argv, started):
    seeds, cfg = _harness(args)
    dataset = _tagged(args.input)
    spec = ds.QuantizationSpec(args.diameter, args.channels or ds.DEFAULT_QUANTIZED, args.rounding)
    report = ev.run_precision_study(dataset, spec, seeds, args.variant, cfg)
    out.write_json(args.out, report.to_json())
    arms = {"original": ev.pooled_errors(report.original), "quantized": ev.pooled_errors(report.quantized)}
    _write_box_csv(out, _sibling(args.out, ".box.csv"), arms)
    if not args.no_plots:
        _plot(args, "box_figure", arms, out.claim(_sibling(args.out, ".box.png")))
    _manifest(out, args, argv, args.out, seeds, ds.dataset_hash(dataset), started)
    print(report.render())


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="moldweight", description="Injection-molding part-weight prediction.")
    p.add_argument("--version", action="version", version=f"moldweight {__version__}")
    p.add_argument("--threads", type=_positive, default=1, help="parallel harness cells (default 1)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    g.add_argument("--molds", type=_positive, default=400)
    g.add_argument("--seq", type=int, default=8, help="sequential channels")
    g.add_argument("--nonseq", type=int, default=8, help="non-sequential channels")
    g.add_argument("--seed", type=int)
    g.add_argument("--noise", type=float, default=0.01, help="weight noise std (g)")
    g.add_argument("--drift", type=float, default=0.0, help="slow drift amplitude (g)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    a = sub.add_parser("acf", help="autocorrelation analysis and channel classification")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--molds", type=_range, help="FIRST:LAST molds to analyse (default all)")
    a.add_argument("--max-lag", type=_positive, default=tsa.DEFAULT_MAX_LAG)
    a.add_argument("--confidence", type=float, default=tsa.DEFAULT_CONFIDENCE)
    a.add_argument("--correction", choices=("sidak", "none"), default="sidak")
    a.add_argument("--override", action="append", metavar="NAME=PROPERTY")
    a.add_argument("--schema-out", help="write the tagged schema JSON here")
    a.add_argument("--plots", action="store_true", help="one ACF figure per channel")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_acf)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--variant", default="mfa-ann", help=", ".join(ev.ALL_VARIANTS))
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--schema", help="schema JSON (default: the CSV's sidecar, else ACF tagging)")
    t.add_argument("--train-molds", type=_range, default=ev.DEFAULT_TRAIN)
    t.add_argument("--window", type=_positive)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=_positive)
    t.add_argument("--patience", type=_positive)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch", type=_positive)
    t.add_argument("--dropout", type=float)
    t.add_argument("--weight-decay", type=float)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict weights with a trained model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", "--in", dest="input", help="CSV file ('-' or omitted with --online: stdin)")
    pr.add_argument("--online", action="store_true", help="stream records line by line")
    pr.add_argument("--out", help="output CSV (default stdout)")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="score a trained model on test molds")
    e.add_argument("--model", required=True)
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--molds", type=_range, default=ev.DEFAULT_TEST)
    e.add_argument("--no-plots", action="store_true")
    e.add_argument("--out", default="eval.json")
    e.set_defaults(func=cmd_eval)

    def harness(name, help_text, out_default):
        h = sub.add_parser(name, help=help_text)
        h.add_argument("--in", dest="input", required=True)
        h.add_argument("--seeds", type=_positive, default=10, help="number of seeds")
        h.add_argument("--seed", type=int, help="first seed")
        h.add_argument("--train-molds", type=_range, default=ev.DEFAULT_TRAIN)
        h.add_argument("--test-molds", type=_range, default=ev.DEFAULT_TEST)
        h.add_argument("--epochs", type=_positive)
        h.add_argument("--patience", type=_positive)
        h.add_argument("--no-plots", action="store_true")
        h.add_argument("--out", default=out_default)
        return h

    c = harness("compare", "pairwise comparison of variants", "compare.json")
    c.add_argument("--variants", type=_channels, help="comma list (default: " + ",".join(ev.COMPARISON_VARIANTS) + ")")
    c.set_defaults(func=cmd_compare)

    ab = harness("ablate", "mixed-input / attention ablation", "ablation.csv")
    ab.set_defaults(func=cmd_ablate)

    pc = harness("precision", "full vs export-precision inputs", "precision.json")
    pc.add_argument("--variant", default="mfa-ann")
    pc.add_argument("--diameter", type=float, default=30.0)
    pc.add_argument("--channels", type=_channels)
    pc.add_argument("--rounding", choices=("half-away", "half-even"), default="half-away")
    pc.set_defaults(func=cmd_precision)

    q = sub.add_parser("quantize", help="apply export quantization to a dataset")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--diameter", type=float, default=30.0)
    q.add_argument("--channels", type=_channels)
    q.add_argument("--rounding", choices=("half-away", "half-even"), default="half-away")
    q.set_defaults(func=cmd_quantize)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"{exc.parser.prog}: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("moldweight: error: a command is required", file=sys.stderr)
        return 1
    inputs = [getattr(args, k) for k in ("input", "model", "schema") if getattr(args, k, None) not in (None, "-")]
    out = _Outputs(inputs)
    started = time.perf_counter()
    try:
        args.func(args, out, argv, started)
    except UsageError as exc:
        out.rollback()
        print(f"moldweight {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (MoldWeightError, ValueError, ArithmeticError, OSError) as exc:
        out.rollback()
        print(f"moldweight {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
