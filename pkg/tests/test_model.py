import json

import numpy as np
import pytest

from moldweight import model as mdl
from moldweight import nn
from moldweight.data import Channel, FeatureSchema, GenConfig, Property, generate_synthetic, make_windows, split
from moldweight.errors import (
    CorruptFileError,
    InsufficientDataError,
    InvalidConfigError,
    OutOfOrderRecordError,
    SchemaFingerprintMismatchError,
    SchemaMismatchError,
    SchemaVariantMismatchError,
    VersionMismatchError,
    WindowLengthMismatchError,
)

V = mdl.Variant


def randomize(model, seed=0, scale=0.5):
    r = np.random.default_rng(seed)
    for t in model.tensors.values():
        t[...] = r.normal(scale=scale, size=t.shape)


def test_variant_flags_match_ablation_table():
    flags = {v: (v.mixed, v.uses_attention) for v in V}
    assert flags[V.MFA_ANN] == (True, True)
    assert flags[V.MIXED_NO_ATTENTION] == (True, False)
    assert flags[V.FLAT_WITH_ATTENTION] == (False, True)
    assert flags[V.FLAT_ANN] == (False, False)
    assert V.ALL_LSTM.uses_lstm and not V.ALL_LSTM.mixed


def test_tensor_inventory(small_dataset):
    s = small_dataset.schema
    cfg = dict(window=3, lstm_hidden=2, attention_dk=2, mlp_hidden=3)
    m = mdl.build(mdl.ModelConfig(variant="mfa-ann", **cfg), s)
    assert m.tensors["lstm.W_f"].shape == (2, 2 + 3)
    assert m.tensors["attn.W_q"].shape == (1, 2)
    assert m.tensors["mlp.hidden.W"].shape == (2 + 3, 3)
    assert mdl.fused_dim(m) == 5
    f = mdl.build(mdl.ModelConfig(variant="flat-ann", **cfg), s)
    assert not any(k.startswith(("lstm", "attn")) for k in f.tensors)
    assert f.window_length == 1 and f.tensors["mlp.hidden.W"].shape == (6, 3)
    a = mdl.build(mdl.ModelConfig(variant="all-lstm", **cfg), s)
    assert a.tensors["lstm.W_f"].shape == (2, 2 + 6)


def test_mixed_needs_tagged_schema():
    s = FeatureSchema((Channel("a"), Channel("b")))
    with pytest.raises(SchemaVariantMismatchError):
        mdl.build(mdl.ModelConfig(variant="mfa-ann"), s)
    only_seq = FeatureSchema((Channel("a", property=Property.SEQUENTIAL),))
    with pytest.raises(SchemaVariantMismatchError):
        mdl.build(mdl.ModelConfig(variant="mixed-no-attention"), only_seq)
    mdl.build(mdl.ModelConfig(variant="flat-ann"), s)


def test_config_validation():
    with pytest.raises(InvalidConfigError):
        mdl.ModelConfig(dropout=1.0)
    with pytest.raises(InvalidConfigError):
        mdl.ModelConfig(window=0)
    with pytest.raises(InvalidConfigError):
        mdl.ModelConfig(attention_residual=True, attention_dv=2)
    with pytest.raises(ValueError):
        mdl.ModelConfig(variant="bogus")


def test_build_is_deterministic(small_dataset, tiny_model_config):
    a = mdl.build(tiny_model_config, small_dataset.schema, seed=4)
    b = mdl.build(tiny_model_config, small_dataset.schema, seed=4)
    c = mdl.build(tiny_model_config, small_dataset.schema, seed=5)
    assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)
    assert not np.array_equal(a.tensors["lstm.W_f"], c.tensors["lstm.W_f"])


def test_shared_submodules_share_initialization(small_dataset):
    full = mdl.build(mdl.ModelConfig(variant="mfa-ann"), small_dataset.schema, seed=2)
    ablated = mdl.build(mdl.ModelConfig(variant="mixed-no-attention"), small_dataset.schema, seed=2)
    for k in ablated.tensors:
        np.testing.assert_array_equal(full.tensors[k], ablated.tensors[k])


def test_forward_matches_manual_composition(small_dataset, tiny_model_config, rng):
    m = mdl.build(tiny_model_config, small_dataset.schema, seed=1)
    randomize(m)
    X = rng.normal(size=(4, 3, 6))
    seq, non = small_dataset.schema.sequential_indices, small_dataset.schema.nonsequential_indices
    views = m._views
    H = nn.lstm_forward(views["lstm"], X[:, :, seq])
    fused = np.concatenate([H, X[:, -1, non]], axis=1)
    att, _ = nn.self_attention(views["attn"], fused[..., None])
    feats = att[..., 0] + fused
    h = np.maximum(feats @ m.tensors["mlp.hidden.W"] + m.tensors["mlp.hidden.b"], 0)
    expected = (h @ m.tensors["mlp.out.W"] + m.tensors["mlp.out.b"])[:, 0]
    np.testing.assert_allclose(mdl.forward(m, X), expected, atol=1e-13)


def test_attention_weights_exposed(small_dataset, tiny_model_config, rng):
    m = mdl.build(tiny_model_config, small_dataset.schema, seed=1)
    details = {}
    mdl.forward(m, rng.normal(size=(2, 3, 6)), details=details)
    assert details["attention"].shape == (2, 5, 5)
    np.testing.assert_allclose(details["attention"].sum(-1), 1.0, atol=1e-12)


@pytest.mark.parametrize("variant", [v.value for v in V])
def test_model_gradients(small_dataset, variant, rng):
    m = mdl.build(mdl.ModelConfig(variant=variant, window=3, lstm_hidden=2, attention_dk=2, mlp_hidden=3),
                  small_dataset.schema, seed=1)
    randomize(m, seed=3)
    L = m.window_length
    rep = mdl.gradient_check(m, rng.normal(size=(5, L, 6)), rng.normal(size=5))
    assert rep.passed, rep


def test_forward_shape_errors(small_dataset, tiny_model_config):
    m = mdl.build(tiny_model_config, small_dataset.schema)
    with pytest.raises(WindowLengthMismatchError):
        mdl.forward(m, np.zeros((1, 4, 6)))
    with pytest.raises(SchemaMismatchError):
        mdl.forward(m, np.zeros((1, 3, 5)))


def test_dropout_only_in_training(small_dataset, tiny_model_config, rng):
    m = mdl.build(mdl.ModelConfig(window=3, dropout=0.5), small_dataset.schema)
    randomize(m)
    X = rng.normal(size=(8, 3, 6))
    np.testing.assert_array_equal(mdl.forward(m, X), mdl.forward(m, X))
    t1 = mdl.forward(m, X, training=True, rng=np.random.default_rng(1))
    t2 = mdl.forward(m, X, training=True, rng=np.random.default_rng(2))
    assert not np.allclose(t1, t2)


def test_training_is_reproducible_and_improves(small_dataset, tiny_model_config, quick_train):
    tr = small_dataset.molds(1, 100)
    a, ha = mdl.train(mdl.build(tiny_model_config, tr.schema, 0), tr, quick_train)
    b, hb = mdl.train(mdl.build(tiny_model_config, tr.schema, 0), tr, quick_train)
    assert ha.train_loss == hb.train_loss
    assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)
    assert ha.train_loss[-1] < ha.train_loss[0]


def test_best_validation_tensors_restored(small_dataset, tiny_model_config):
    tr = small_dataset.molds(1, 100)
    m, h = mdl.train(mdl.build(tiny_model_config, tr.schema, 0), tr,
                     mdl.TrainConfig(max_epochs=40, early_stop_patience=40, lr=5e-2, seed=1))
    ws = make_windows(tr, m.window_length)
    n_val = round(0.2 * len(ws))
    pred = mdl.predict_windows(m, ws.values[-n_val:])
    val = float(np.sqrt(np.mean((pred - ws.weight[-n_val:]) ** 2)))
    assert val == pytest.approx(h.best_val_rmse, rel=1e-9)
    assert h.best_val_rmse == min(h.val_rmse)


def test_early_stopping_halts(small_dataset, tiny_model_config):
    tr = small_dataset.molds(1, 100)
    _, h = mdl.train(mdl.build(tiny_model_config, tr.schema, 0), tr,
                     mdl.TrainConfig(max_epochs=500, early_stop_patience=3, lr=0.5, seed=0))
    assert len(h.train_loss) == h.best_epoch + 1 + 3


def test_insufficient_training_data(small_dataset, tiny_model_config):
    with pytest.raises(InsufficientDataError):
        mdl.train(mdl.build(tiny_model_config, small_dataset.schema), small_dataset.molds(1, 5))


def test_flat_ann_reaches_noise_floor_on_linear_task():
    cfg = GenConfig(n_molds=400, n_sequential=0, n_nonsequential=8, beta_range=(0.01, 0.02),
                    lag_weights=(0.0,) * 4, noise_std=0.01)
    d, _ = generate_synthetic(cfg, seed=0)
    tr, _ = split(d)
    m, _ = mdl.train(mdl.build(mdl.ModelConfig(variant="flat-ann"), d.schema, 0), tr, mdl.TrainConfig(seed=0))
    _, pred = mdl.predict_dataset(m, d, (101, 200))
    r = float(np.sqrt(np.mean((pred - d.molds(101, 200).weight) ** 2)))
    assert r <= 0.02


def _trained(small_dataset, variant="mfa-ann"):
    tr = small_dataset.molds(1, 100)
    cfg = mdl.ModelConfig(variant=variant, window=3, lstm_hidden=2, attention_dk=2, mlp_hidden=3)
    return mdl.train(mdl.build(cfg, tr.schema, 0), tr, mdl.TrainConfig(max_epochs=5, seed=0))[0]


@pytest.mark.parametrize("variant", ["mfa-ann", "flat-attention", "all-lstm"])
def test_save_load_round_trip(tmp_path, small_dataset, variant):
    m = _trained(small_dataset, variant)
    p = tmp_path / "m.json"
    mdl.save(m, p)
    back = mdl.load(p)
    _, a = mdl.predict_dataset(m, small_dataset)
    _, b = mdl.predict_dataset(back, small_dataset)
    np.testing.assert_array_equal(a, b)
    doc = json.loads(p.read_text())
    assert {"version", "variant", "config", "schema_fingerprint", "standardization", "tensors"} <= set(doc)


def test_corrupt_model_files(tmp_path, small_dataset):
    m = _trained(small_dataset)
    p = tmp_path / "m.json"
    mdl.save(m, p)
    doc = json.loads(p.read_text())
    p.write_text("{")
    with pytest.raises(CorruptFileError):
        mdl.load(p)
    bad = dict(doc, version=99)
    p.write_text(json.dumps(bad))
    with pytest.raises(VersionMismatchError):
        mdl.load(p)
    bad = dict(doc)
    del bad["tensors"]
    p.write_text(json.dumps(bad))
    with pytest.raises(CorruptFileError):
        mdl.load(p)
    bad = json.loads(json.dumps(doc))
    bad["tensors"]["lstm.W_f"]["shape"] = [1, 1]
    bad["tensors"]["lstm.W_f"]["data"] = [0.0]
    p.write_text(json.dumps(bad))
    with pytest.raises(CorruptFileError):
        mdl.load(p)
    bad = dict(doc, schema_fingerprint="0" * 64)
    p.write_text(json.dumps(bad))
    with pytest.raises(CorruptFileError):
        mdl.load(p)


def test_online_equals_batch(small_dataset):
    m = _trained(small_dataset)
    mold, batch = mdl.predict_dataset(m, small_dataset)
    online = list(mdl.predict_online(m, small_dataset.records()))
    assert [p for _, p in online[:2]] == [None, None]
    got = np.array([p for _, p in online[2:]])
    assert [k for k, _ in online[2:]] == mold.tolist()
    np.testing.assert_allclose(got, batch, atol=1e-12, rtol=0)


def test_online_rejects_out_of_order(small_dataset):
    p = mdl.OnlinePredictor(_trained(small_dataset))
    recs = list(small_dataset.records())
    p.feed(recs[3])
    with pytest.raises(OutOfOrderRecordError):
        p.feed(recs[3])
    with pytest.raises(OutOfOrderRecordError):
        p.feed(recs[1])


def test_schema_checks_on_prediction(small_dataset):
    m = _trained(small_dataset)
    renamed = FeatureSchema(tuple(Channel(c.name + "_x", property=c.property) for c in small_dataset.schema.channels))
    with pytest.raises(SchemaMismatchError):
        mdl.predict_dataset(m, small_dataset.with_schema(renamed))
    flipped = FeatureSchema(tuple(
        Channel(c.name, property=Property.SEQUENTIAL) for c in small_dataset.schema.channels
    ))
    with pytest.raises(SchemaFingerprintMismatchError):
        mdl.predict_dataset(m, small_dataset.with_schema(flipped))
    untagged = FeatureSchema(tuple(Channel(c.name) for c in small_dataset.schema.channels))
    mdl.predict_dataset(m, small_dataset.with_schema(untagged))
