"""Neural weight regressors: the mixed-feature attention network and its ablations.

Variants
--------
``mfa-ann``             LSTM over sequential channels, concat current
                        non-sequential channels, feature attention, MLP.
``mixed-no-attention``  as above without attention.
``flat-attention``      current mold's channels -> attention -> MLP.
``flat-ann``            current mold's channels -> MLP.
``all-lstm``            every channel as the LSTM sequence -> MLP.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import nn
from .data import Dataset, FeatureSchema, MoldRecord, Standardization, make_windows, standardize_fit
from .errors import (
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

FILE_VERSION = 1


class Variant(str, Enum):
    MFA_ANN = "mfa-ann"
    MIXED_NO_ATTENTION = "mixed-no-attention"
    FLAT_WITH_ATTENTION = "flat-attention"
    FLAT_ANN = "flat-ann"
    ALL_LSTM = "all-lstm"

    @property
    def mixed(self) -> bool:
        return self in (Variant.MFA_ANN, Variant.MIXED_NO_ATTENTION)

    @property
    def uses_lstm(self) -> bool:
        return self.mixed or self is Variant.ALL_LSTM

    @property
    def uses_attention(self) -> bool:
        return self in (Variant.MFA_ANN, Variant.FLAT_WITH_ATTENTION)

    @property
    def windowed(self) -> bool:
        return self.uses_lstm


@dataclass
class ModelConfig:
    variant: Variant = Variant.MFA_ANN
    window: int = 5
    lstm_hidden: int = 8
    attention_dk: int = 4
    attention_dv: int = 1
    attention_residual: bool = True  # output = x + attention(x); W_v starts at zero
    attention_embed: int = 0  # 0: each feature is a 1-dim token; >0: learned per-feature embedding
    mlp_hidden: int = 16
    dropout: float = 0.3
    ann_input: str = "all"  # flat variants: "all" channels or "nonsequential" only

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.window < 1 or self.lstm_hidden < 1 or self.mlp_hidden < 1:
            raise InvalidConfigError("window, lstm_hidden and mlp_hidden must be >= 1")
        if self.attention_dk < 1 or self.attention_dv < 1:
            raise InvalidConfigError("attention dims must be >= 1")
        if self.attention_residual and self.attention_dv != 1:
            raise InvalidConfigError("residual attention needs attention_dv = 1")
        if not 0 <= self.dropout < 1:
            raise InvalidConfigError("dropout must lie in [0, 1)")
        if self.ann_input not in ("all", "nonsequential"):
            raise InvalidConfigError("ann_input must be 'all' or 'nonsequential'")

    @property
    def window_length(self) -> int:
        return self.window if self.variant.windowed else 1

    def to_json(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d


@dataclass
class TrainConfig:
    lr: float = 5e-4
    batch_size: int = 4
    weight_decay: float = 0.01
    max_epochs: int = 2000
    early_stop_patience: int = 100
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1")
        if not 0 <= self.val_fraction <= 0.5:
            raise InvalidConfigError("val_fraction must lie in [0, 0.5]")
        if self.max_epochs < 1 or self.early_stop_patience < 1:
            raise InvalidConfigError("max_epochs and early_stop_patience must be >= 1")


def _identity_standardization(n_channels: int) -> Standardization:
    return Standardization(np.zeros(n_channels), np.ones(n_channels), 0.0, 1.0)


@dataclass
class NeuralModel:
    """Learnable tensors plus everything needed to map raw molds to grams."""

    config: ModelConfig
    schema: FeatureSchema
    tensors: dict[str, np.ndarray]
    standardization: Standardization
    _views: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        t = self.tensors
        if self.config.variant.uses_lstm:
            self._views["lstm"] = nn.LstmParams(**{n: t["lstm." + n] for n in nn.LstmParams.NAMES})
        if self.config.variant.uses_attention:
            self._views["attn"] = nn.AttentionParams(
                **{n: t["attn." + n] for n in nn.AttentionParams.NAMES}
            )
        self._views["mlp"] = (
            nn.Dense(t["mlp.hidden.W"], t["mlp.hidden.b"]),
            nn.Dense(t["mlp.out.W"], t["mlp.out.b"]),
        )

    @property
    def variant(self) -> Variant:
        return self.config.variant

    @property
    def window_length(self) -> int:
        return self.config.window_length

    @property
    def n_parameters(self) -> int:
        return sum(a.size for a in self.tensors.values())

    @property
    def flat_indices(self) -> list[int]:
        if self.config.ann_input == "nonsequential":
            return self.schema.nonsequential_indices
        return list(range(len(self.schema)))

    def fingerprint(self) -> str:
        return self.schema.fingerprint()

    def copy(self) -> "NeuralModel":
        return NeuralModel(
            self.config,
            self.schema,
            {k: v.copy() for k, v in self.tensors.items()},
            self.standardization,
        )


def build(config: ModelConfig, schema: FeatureSchema, seed: int = 0) -> NeuralModel:
    """Freshly initialized model; deterministic in ``seed``."""
    v = config.variant
    n_seq = len(schema.sequential_indices)
    n_non = len(schema.nonsequential_indices)
    if v.mixed:
        if n_seq == 0 or n_non == 0:
            raise SchemaVariantMismatchError(
                f"{v.value} needs >= 1 sequential and >= 1 non-sequential channel "
                f"(got {n_seq} / {n_non})"
            )
    if v in (Variant.FLAT_ANN, Variant.FLAT_WITH_ATTENTION) and config.ann_input == "nonsequential":
        if n_non == 0:
            raise SchemaVariantMismatchError("ann_input='nonsequential' needs non-sequential channels")
    if (v.mixed or config.ann_input == "nonsequential") and not schema.tagged:
        raise SchemaVariantMismatchError("schema channels must be tagged sequential/non-sequential")

    # one stream per submodule so variants sharing a submodule share its init
    rng_lstm, rng_attn, rng_mlp = (np.random.default_rng([seed, k]) for k in (1, 2, 3))
    tensors: dict[str, np.ndarray] = {}
    n_channels = len(schema)
    if v.uses_lstm:
        lstm_in = n_seq if v.mixed else n_channels
        for name, arr in nn.LstmParams.init(rng_lstm, lstm_in, config.lstm_hidden).tensors().items():
            tensors["lstm." + name] = arr
    if v.mixed:
        feat_dim = config.lstm_hidden + n_non
    elif v is Variant.ALL_LSTM:
        feat_dim = config.lstm_hidden
    elif config.ann_input == "nonsequential":
        feat_dim = n_non
    else:
        feat_dim = n_channels
    if v.uses_attention:
        e = config.attention_embed or 1
        if config.attention_embed:
            tensors["attn.E"] = rng_attn.normal(0.0, 1.0 / math.sqrt(e), size=(feat_dim, e))
            tensors["attn.P"] = rng_attn.normal(0.0, 1.0 / math.sqrt(e), size=(feat_dim, e))
        attn = nn.AttentionParams.init(rng_attn, e, config.attention_dk, config.attention_dv)
        if config.attention_residual:
            attn.W_v[...] = 0.0
        for name, arr in attn.tensors().items():
            tensors["attn." + name] = arr
        feat_dim *= config.attention_dv
    for prefix, (n_in, n_out) in (
        ("mlp.hidden", (feat_dim, config.mlp_hidden)),
        ("mlp.out", (config.mlp_hidden, 1)),
    ):
        layer = nn.Dense.init(rng_mlp, n_in, n_out)
        tensors[prefix + ".W"] = layer.W
        tensors[prefix + ".b"] = layer.b
    return NeuralModel(config, schema, tensors, _identity_standardization(n_channels))


def fused_dim(model: NeuralModel) -> int:
    """Length of the feature vector entering attention / the MLP."""
    return model.tensors["mlp.hidden.W"].shape[0] // (
        model.config.attention_dv if model.variant.uses_attention else 1
    )


def forward(model: NeuralModel, windows, training=False, rng=None, tape=None, details=None):
    """Standardized prediction for standardized windows of shape (B, L, C).

    If ``details`` is a dict it receives the fused features and, for attention
    variants, the attention weights.
    """
    X = np.asarray(windows, dtype=float)
    if X.ndim != 3:
        raise SchemaMismatchError("windows must be (B, L, C)")
    if X.shape[1] != model.window_length:
        raise WindowLengthMismatchError(
            f"window length {X.shape[1]} != model window {model.window_length}"
        )
    if X.shape[2] != len(model.schema):
        raise SchemaMismatchError(f"{X.shape[2]} channels != schema {len(model.schema)}")
    v = model.variant
    views = model._views
    if v.mixed:
        H = nn.lstm_forward(views["lstm"], X[:, :, model.schema.sequential_indices], tape)
        feats = nn.concat(H, X[:, -1, model.schema.nonsequential_indices], tape)
    elif v is Variant.ALL_LSTM:
        feats = nn.lstm_forward(views["lstm"], X, tape)
    else:
        feats = X[:, -1, model.flat_indices]
    if details is not None:
        details["fused"] = feats
    if v.uses_attention:
        emb = (model.tensors["attn.E"], model.tensors["attn.P"]) if model.config.attention_embed else None
        feats, A = nn.feature_attention(
            views["attn"], feats, tape, model.config.attention_residual, emb
        )
        if details is not None:
            details["attention"] = A
    return nn.mlp_forward(views["mlp"], model.config.dropout, training, feats, rng, tape)


def loss_and_gradients(model: NeuralModel, windows, target):
    """Squared-error loss on standardized ``windows`` and its gradient for every tensor
    (inference mode, so the loss is a deterministic function of the tensors)."""
    tape = nn.Tape()
    loss = nn.mse_loss(forward(model, windows, tape=tape), target, tape)
    return float(loss), nn.backward(tape, model.tensors)


def gradient_check(model: NeuralModel, windows, target, eps=1e-5, tol=1e-4) -> nn.GradCheckReport:
    """Analytic gradients against central differences over every model tensor."""
    _, grads = loss_and_gradients(model, windows, target)
    return nn.grad_check(lambda: nn.mse_loss(forward(model, windows), target), grads, model.tensors,
                         eps, tol)


def predict_windows(model: NeuralModel, raw_windows) -> np.ndarray:
    """Predictions in grams for raw (unstandardized) windows (B, L, C)."""
    z = forward(model, model.standardization.apply(np.asarray(raw_windows, dtype=float)))
    return model.standardization.invert_target(z)


def check_schema(model, dataset: Dataset) -> None:
    if dataset.schema.names != model.schema.names:
        raise SchemaMismatchError(
            f"dataset channels {dataset.schema.names} != model channels {model.schema.names}"
        )
    if dataset.schema.tagged and dataset.schema.fingerprint() != model.schema.fingerprint():
        raise SchemaFingerprintMismatchError("dataset property tags differ from the model's schema")


def predict_dataset(model, dataset: Dataset, molds=None):
    """``(mold_index, prediction)`` for every mold with a full window."""
    check_schema(model, dataset)
    ws = make_windows(dataset, model.window_length, molds)
    if len(ws) == 0:
        return ws.mold_index, np.empty(0)
    return ws.mold_index, predict_any(model, ws.values)


# ---------------------------------------------------------------------------
# Training


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_rmse: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_rmse: float = math.inf

    def to_json(self) -> dict:
        return asdict(self)


def _minibatch_step(model, opt, xb, yb, rng):
    tape = nn.Tape()
    pred = forward(model, xb, training=True, rng=rng, tape=tape)
    loss = nn.mse_loss(pred, yb, tape)
    grads = nn.backward(tape, model.tensors)
    opt.step(grads)
    return float(loss)


def train(model: NeuralModel, train_data: Dataset, config: TrainConfig | None = None):
    """Minibatch AdamW on squared error with early stopping.

    The last ``val_fraction`` of the training windows (time order) is held out;
    training stops after ``early_stop_patience`` epochs without a validation
    improvement and the best-validation tensors are restored. Returns
    ``(model, history)``; ``model`` is updated in place.
    """
    config = config or TrainConfig()
    check_schema(model, train_data)
    if len(train_data) < 2:
        raise InsufficientDataError("need at least 2 training molds")
    stats = standardize_fit(train_data)
    model.standardization = stats
    ws = make_windows(train_data, model.window_length)
    X = stats.apply(ws.values)
    y = stats.apply_target(ws.weight)
    n = len(y)
    n_val = int(round(config.val_fraction * n)) if config.val_fraction > 0 else 0
    if config.val_fraction > 0:
        n_val = max(n_val, 1)
    n_tr = n - n_val
    if n_tr < config.batch_size:
        raise InsufficientDataError(
            f"{n} windows leave {n_tr} for training, fewer than batch size {config.batch_size}"
        )
    X_tr, y_tr, X_val, y_val = X[:n_tr], y[:n_tr], X[n_tr:], y[n_tr:]

    shuffle_ss, dropout_ss = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    opt = nn.AdamW(model.tensors, lr=config.lr, weight_decay=config.weight_decay)
    hist = History()
    best = {k: v.copy() for k, v in model.tensors.items()}
    bs = config.batch_size
    since_best = 0
    for epoch in range(config.max_epochs):
        perm = shuffle_rng.permutation(n_tr)
        total = 0.0
        for start in range(0, n_tr, bs):
            idx = perm[start : start + bs]
            total += _minibatch_step(model, opt, X_tr[idx], y_tr[idx], dropout_rng) * len(idx)
        hist.train_loss.append(total / n_tr)
        if n_val:
            z = forward(model, X_val)
            score = math.sqrt(float(np.mean((z - y_val) ** 2))) * stats.target_std
        else:
            score = math.sqrt(hist.train_loss[-1]) * stats.target_std
        hist.val_rmse.append(score)
        if score < hist.best_val_rmse:
            hist.best_val_rmse = score
            hist.best_epoch = epoch
            for k, v in model.tensors.items():
                np.copyto(best[k], v)
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                break
    for k, v in model.tensors.items():
        np.copyto(v, best[k])
    return model, hist


# ---------------------------------------------------------------------------
# Streaming prediction


class OnlinePredictor:
    """Feeds molds one at a time; emits ``None`` while the window is filling."""

    def __init__(self, model):
        self.model = model
        self._buf = deque(maxlen=model.window_length)
        self._last = None
        self._names = model.schema.names

    def feed(self, record) -> tuple[int, float | None]:
        if isinstance(record, MoldRecord):
            mold = record.mold_index
            row = np.array([record.features[n] for n in self._names], dtype=float)
        else:
            mold, row = record
            row = np.asarray(row, dtype=float)
        if self._last is not None and mold <= self._last:
            raise OutOfOrderRecordError(f"mold {mold} arrived after mold {self._last}")
        self._last = mold
        self._buf.append(row)
        if len(self._buf) < self._buf.maxlen:
            return mold, None
        window = np.stack(self._buf)[None]
        return mold, float(predict_any(self.model, window)[0])


def predict_online(model, records):
    """Generator of ``(mold_index, prediction or None)`` for a record stream."""
    p = OnlinePredictor(model)
    for rec in records:
        yield p.feed(rec)


def predict_any(model, raw_windows):
    if isinstance(model, NeuralModel):
        return predict_windows(model, raw_windows)
    return model.predict_windows(raw_windows)


# ---------------------------------------------------------------------------
# Serialization


def _tensor_json(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _tensor_from_json(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=np.float64).reshape(d["shape"])


def model_to_json(model) -> dict:
    if isinstance(model, NeuralModel):
        variant = model.variant.value
        config = model.config.to_json()
        tensors = {k: _tensor_json(v) for k, v in model.tensors.items()}
    else:
        variant = model.variant
        config = model.config_json()
        tensors = model.payload()
    return {
        "version": FILE_VERSION,
        "variant": variant,
        "config": config,
        "schema": model.schema.to_json(),
        "schema_fingerprint": model.schema.fingerprint(),
        "standardization": model.standardization.to_json(),
        "tensors": tensors,
    }


def save(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model)) + "\n", encoding="utf-8")


def model_from_json(doc: dict):
    if not isinstance(doc, dict):
        raise CorruptFileError("model file must hold a JSON object")
    required = {"version", "variant", "config", "schema_fingerprint", "standardization", "tensors"}
    missing = required - set(doc)
    if missing:
        raise CorruptFileError(f"model file lacks keys {sorted(missing)}")
    if doc["version"] != FILE_VERSION:
        raise VersionMismatchError(f"model file version {doc['version']} != {FILE_VERSION}")
    try:
        schema = FeatureSchema.from_json(doc["schema"])
        if schema.fingerprint() != doc["schema_fingerprint"]:
            raise CorruptFileError("schema fingerprint does not match stored schema")
        stats = Standardization.from_json(doc["standardization"])
        if doc["variant"] in ("svr", "rf"):
            from .classic import ClassicModel

            return ClassicModel.from_payload(doc["variant"], doc["config"], schema, stats, doc["tensors"])
        config = ModelConfig(**doc["config"])
        if config.variant.value != doc["variant"]:
            raise CorruptFileError("variant field disagrees with config")
        tensors = {k: _tensor_from_json(v) for k, v in doc["tensors"].items()}
        reference = build(config, schema, 0).tensors
        if set(reference) != set(tensors) or any(
            reference[k].shape != tensors[k].shape for k in reference
        ):
            raise CorruptFileError("tensor names/shapes do not match the variant")
        return NeuralModel(config, schema, tensors, stats)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (CorruptFileError, VersionMismatchError)):
            raise
        raise CorruptFileError(f"malformed model file: {exc}") from exc


def load(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"{path}: not a valid model file ({exc})") from exc
    return model_from_json(doc)
