import csv
import io
import json
import math
import subprocess
import sys

import pytest

from moldweight.cli import main


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("MOLDWEIGHT_SEED", raising=False)
    assert main(["gen", "--molds", "240", "--seed", "7", "--out", "d.csv"]) == 0
    return tmp_path


def test_gen_is_byte_identical(work):
    assert main(["gen", "--molds", "240", "--seed", "7", "--out", "e.csv"]) == 0
    assert (work / "d.csv").read_bytes() == (work / "e.csv").read_bytes()
    assert (work / "d.schema.json").exists() and (work / "d.truth.json").exists()
    man = json.loads((work / "d.manifest.json").read_text())
    assert man["seeds"] == [7] and man["subcommand"] == "gen"
    assert {"command", "version", "dataset_hash", "outputs", "wall_clock_s"} <= set(man)
    assert "d.csv" in man["outputs"]


def test_seed_environment_fallback(work, monkeypatch):
    monkeypatch.setenv("MOLDWEIGHT_SEED", "7")
    assert main(["gen", "--molds", "240", "--out", "f.csv"]) == 0
    assert (work / "f.csv").read_bytes() == (work / "d.csv").read_bytes()
    monkeypatch.setenv("MOLDWEIGHT_SEED", "x")
    assert main(["gen", "--molds", "240", "--out", "g.csv"]) == 1
    assert not (work / "g.csv").exists()


def test_train_eval_pipeline(work):
    before = (work / "d.csv").read_bytes()
    assert main(["train", "--variant", "mfa-ann", "--in", "d.csv", "--seed", "1", "--epochs", "5",
                 "--out", "m.json"]) == 0
    assert main(["train", "--variant", "mfa-ann", "--in", "d.csv", "--seed", "1", "--epochs", "5",
                 "--out", "m2.json"]) == 0
    assert (work / "m.json").read_bytes() == (work / "m2.json").read_bytes()
    assert main(["eval", "--model", "m.json", "--in", "d.csv", "--out", "r.json"]) == 0
    rep = json.loads((work / "r.json").read_text())
    assert math.isfinite(rep["rmse"]) and rep["pairing"] == "absolute"
    rows = list(csv.reader(open(work / "r.cdf.csv")))
    assert rows[0] == ["abs_error", "cum_prob"] and float(rows[-1][1]) == 1.0
    assert (work / "r.box.csv").exists() and (work / "r.cdf.png").stat().st_size > 0
    assert (work / "d.csv").read_bytes() == before


def test_predict_batch_and_online_agree(work, capsys):
    main(["train", "--variant", "flat-attention", "--in", "d.csv", "--seed", "2", "--epochs", "3", "--out", "m.json"])
    assert main(["predict", "--model", "m.json", "--input", "d.csv", "--out", "p.csv"]) == 0
    batch = list(csv.reader(open(work / "p.csv")))
    lines = (work / "d.csv").read_text().splitlines()
    # online input without the weight column
    header = lines[0].rsplit(",", 1)[0]
    stream = "\n".join([header] + [ln.rsplit(",", 1)[0] for ln in lines[1:30]]) + "\n"
    proc = subprocess.run([sys.executable, "-m", "moldweight", "predict", "--model", "m.json", "--online"],
                          input=stream, capture_output=True, text=True, cwd=work)
    assert proc.returncode == 0, proc.stderr
    online = list(csv.reader(io.StringIO(proc.stdout)))
    assert online[0] == ["mold_index", "prediction"]
    for got, ref in zip(online[1:], batch[1:30]):
        assert got[0] == ref[0]
        assert abs(float(got[1]) - float(ref[1])) <= 1e-12


def test_online_warming_up_lines(work):
    main(["train", "--variant", "mfa-ann", "--in", "d.csv", "--seed", "2", "--epochs", "2", "--window", "3",
          "--out", "m.json"])
    lines = (work / "d.csv").read_text().splitlines()[:5]
    proc = subprocess.run([sys.executable, "-m", "moldweight", "predict", "--model", "m.json", "--online"],
                          input="\n".join(lines) + "\n", capture_output=True, text=True, cwd=work)
    out = proc.stdout.splitlines()
    assert out[1:3] == ["1,warming_up", "2,warming_up"]
    assert float(out[3].split(",")[1]) > 0


@pytest.mark.parametrize("variant", ["svr", "rf"])
def test_train_classical(work, variant):
    assert main(["train", "--variant", variant, "--in", "d.csv", "--seed", "0", "--out", "c.json"]) == 0
    assert main(["eval", "--model", "c.json", "--in", "d.csv", "--no-plots", "--out", "c_eval.json"]) == 0
    assert json.loads((work / "c.json").read_text())["variant"] == variant


def test_acf_outputs(work):
    assert main(["acf", "--in", "d.csv", "--molds", "1:100", "--out", "a.csv", "--schema-out", "t.json"]) == 0
    rows = list(csv.DictReader(open(work / "a.csv")))
    assert list(rows[0]) == ["channel", "lag", "r", "bound"]
    assert rows[0]["lag"] == "0" and float(rows[0]["r"]) == 1.0
    rep = json.loads((work / "a.json").read_text())
    truth = json.loads((work / "d.schema.json").read_text())
    assert [c["property"] for c in rep["channels"]] == [c["property"] for c in truth]
    assert main(["acf", "--in", "d.csv", "--override", "melt_time_s=non-sequential", "--out", "b.csv"]) == 0
    rep = json.loads((work / "b.json").read_text())
    assert rep["channels"][0]["decided_by"] == "override"


def test_quantize(work):
    assert main(["quantize", "--in", "d.csv", "--out", "q.csv", "--channels", "vp_switch_position_mm3"]) == 0
    rows = list(csv.DictReader(open(work / "q.csv")))
    assert all(float(r["vp_switch_position_mm3"]).is_integer() for r in rows)
    assert (work / "q.schema.json").exists()


def test_harness_commands(work, capsys):
    common = ["--in", "d.csv", "--seeds", "1", "--epochs", "2", "--no-plots"]
    assert main(["compare", *common, "--variants", "mfa-ann,flat-ann,svr", "--out", "c.json"]) == 0
    doc = json.loads((work / "c.json").read_text())
    assert doc["table"][1][1:] == ["×", "×", "×"] and doc["table"][3][3] == "×"
    assert (work / "c.txt").read_text().splitlines()[0].split() == ["mfa-ann", "flat-ann", "svr"]
    assert main(["ablate", *common, "--out", "a.csv"]) == 0
    rows = list(csv.DictReader(open(work / "a.csv", encoding="utf-8")))
    assert [(r["mixed_features"], r["attention"]) for r in rows] == [("✓", "✓"), ("✓", "×"), ("×", "✓"), ("×", "×")]
    assert rows[3]["p_value_vs_group4"] == "×"
    assert main(["precision", *common, "--out", "p.json"]) == 0
    doc = json.loads((work / "p.json").read_text())
    assert "degradation_pct" in doc and (work / "p.box.csv").exists()


def test_compare_writes_figures(work):
    assert main(["compare", "--in", "d.csv", "--seeds", "1", "--epochs", "1", "--variants", "flat-ann,svr",
                 "--out", "c.json"]) == 0
    assert (work / "c.cdf.png").stat().st_size > 0 and (work / "c.rmse.png").stat().st_size > 0


def test_usage_errors_exit_1(work, capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main([]) == 1
    assert main(["train", "--in", "d.csv"]) == 1
    assert main(["train", "--variant", "gbm", "--in", "d.csv", "--out", "x.json"]) == 1
    assert not (work / "x.json").exists()
    assert main(["compare", "--in", "d.csv", "--variants", "nope", "--out", "c.json"]) == 1
    assert not (work / "c.json").exists()
    assert main(["quantize", "--in", "d.csv", "--out", "d.csv"]) == 1


def test_data_errors_exit_2_and_clean_up(work):
    (work / "bad.csv").write_text("mold_index,a,weight\n1,0.1,1.0\n2,oops,1.0\n")
    assert main(["acf", "--in", "bad.csv", "--out", "a.csv"]) == 2
    assert not (work / "a.csv").exists()
    assert main(["eval", "--model", "missing.json", "--in", "d.csv", "--out", "r.json"]) == 2
    (work / "m.json").write_text("{}")
    assert main(["predict", "--model", "m.json", "--input", "d.csv", "--out", "p.csv"]) == 2
    assert not (work / "p.csv").exists()


def test_help_and_version(capsys):
    assert main(["--version"]) == 0
    assert "moldweight" in capsys.readouterr().out
    for cmd in ("gen", "acf", "train", "predict", "eval", "compare", "ablate", "precision", "quantize"):
        assert main([cmd, "--help"]) == 0
