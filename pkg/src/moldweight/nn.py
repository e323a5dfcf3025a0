"""Differentiable numpy kernels for the weight regressors.

Every op takes an optional :class:`Tape`. When given, the op records a closure
that maps the gradient of its output to gradients of its inputs, so
:func:`backward` can replay the graph in reverse. Arrays are identified by
object identity; ops always return fresh arrays and parameters are updated in
place, so identities stay stable for the life of a model.

All math is float64. Batched inputs carry the batch on axis 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyWindowError,
    IncompleteTapeError,
    LengthMismatchError,
    NonFiniteInputError,
    ShapeMismatchError,
)


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Tape:
    """Record of forward ops for reverse-mode differentiation."""

    def __init__(self):
        self._ops = []
        self._keep = []  # holds arrays alive so their ids stay unique
        self.loss = None

    def record(self, inputs, output, backward_fn):
        self._keep.append(output)
        self._keep.extend(inputs)
        self._ops.append((tuple(id(a) for a in inputs), id(output), backward_fn))

    def __len__(self):
        return len(self._ops)


def backward(tape: Tape, wrt: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Gradients of ``tape.loss`` with respect to each array in ``wrt``.

    Arrays the loss does not depend on get an exact zero gradient.
    """
    if tape.loss is None:
        raise IncompleteTapeError("tape has no recorded scalar loss")
    adj = {id(tape.loss): np.ones_like(tape.loss)}
    for in_ids, out_id, fn in reversed(tape._ops):
        g = adj.pop(out_id, None)
        if g is None:
            continue
        for i, gi in zip(in_ids, fn(g)):
            if gi is None:
                continue
            if i in adj:
                adj[i] = adj[i] + gi
            else:
                adj[i] = gi
    return {name: adj.get(id(a), np.zeros_like(a)) for name, a in wrt.items()}


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteInputError("input contains NaN or inf")


# ---------------------------------------------------------------------------
# Parameters


def xavier_uniform(rng, fan_in, fan_out, shape=None):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


@dataclass
class LstmParams:
    """Gate weights act on ``[h_{t-1}, x_t]``; shapes (hidden, hidden + input)."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    NAMES = ("W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c")

    def __post_init__(self):
        h = self.W_f.shape[0]
        for name in ("W_i", "W_o", "W_c"):
            if getattr(self, name).shape != self.W_f.shape:
                raise ShapeMismatchError(f"{name} shape differs from W_f")
        for name in ("b_f", "b_i", "b_o", "b_c"):
            if getattr(self, name).shape != (h,):
                raise ShapeMismatchError(f"{name} must have shape ({h},)")
        if self.W_f.shape[1] <= h:
            raise ShapeMismatchError("weights must be (hidden, hidden + input)")

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_f.shape[1] - self.hidden

    @classmethod
    def init(cls, rng, input_dim, hidden, forget_bias=1.0):
        a = 1.0 / math.sqrt(hidden)
        shape = (hidden, hidden + input_dim)
        ws = [rng.uniform(-a, a, size=shape) for _ in range(4)]
        bs = [np.full(hidden, float(forget_bias)), np.zeros(hidden), np.zeros(hidden), np.zeros(hidden)]
        return cls(*ws, *bs)

    @classmethod
    def zeros(cls, input_dim, hidden):
        shape = (hidden, hidden + input_dim)
        return cls(*(np.zeros(shape) for _ in range(4)), *(np.zeros(hidden) for _ in range(4)))

    def tensors(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in self.NAMES}


@dataclass
class AttentionParams:
    """Projections from token embedding dim to d_k (queries/keys) and d_v (values)."""

    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray

    NAMES = ("W_q", "W_k", "W_v")

    def __post_init__(self):
        if self.W_q.shape != self.W_k.shape:
            raise ShapeMismatchError("W_q and W_k must share shape (embed, d_k)")
        if self.W_v.shape[0] != self.W_q.shape[0] or self.W_q.shape[1] < 1:
            raise ShapeMismatchError("projections must share the embedding dim; d_k >= 1")

    @property
    def d_k(self) -> int:
        return self.W_q.shape[1]

    @property
    def d_v(self) -> int:
        return self.W_v.shape[1]

    @classmethod
    def init(cls, rng, embed=1, d_k=4, d_v=1):
        return cls(
            xavier_uniform(rng, embed, d_k),
            xavier_uniform(rng, embed, d_k),
            xavier_uniform(rng, embed, d_v),
        )

    def tensors(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in self.NAMES}


@dataclass
class Dense:
    W: np.ndarray  # (in, out)
    b: np.ndarray  # (out,)

    @classmethod
    def init(cls, rng, n_in, n_out):
        return cls(xavier_uniform(rng, n_in, n_out), np.zeros(n_out))

    def tensors(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


# ---------------------------------------------------------------------------
# LSTM


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray
    gates: dict = field(default_factory=dict, repr=False)


def lstm_step(params: LstmParams, x_t, prev: LstmState) -> LstmState:
    """One cell update; works on a single vector or a batch (B, input)."""
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != params.input_dim or prev.h.shape[-1] != params.hidden:
        raise ShapeMismatchError(
            f"x_t last dim {x_t.shape[-1]} / h {prev.h.shape[-1]} vs "
            f"params input {params.input_dim} / hidden {params.hidden}"
        )
    _check_finite(x_t, prev.h, prev.c)
    z = np.concatenate([prev.h, x_t], axis=-1)
    f = sigmoid(z @ params.W_f.T + params.b_f)
    i = sigmoid(z @ params.W_i.T + params.b_i)
    o = sigmoid(z @ params.W_o.T + params.b_o)
    g = np.tanh(z @ params.W_c.T + params.b_c)
    c = f * prev.c + i * g
    h = o * np.tanh(c)
    return LstmState(h, c, {"f": f, "i": i, "o": o, "c_tilde": g})


def lstm_forward(params: LstmParams, window, tape: Tape | None = None) -> np.ndarray:
    """Last hidden state after running the cell over ``window`` from zero state.

    ``window`` is (L, input) for one sample or (B, L, input) for a batch.
    """
    X = np.asarray(window, dtype=float)
    single = X.ndim == 2
    if single:
        X = reshape(X, (1, *X.shape), tape)
    if X.ndim != 3:
        raise ShapeMismatchError("window must be (L, input) or (B, L, input)")
    B, L, n_in = X.shape
    if L == 0:
        raise EmptyWindowError("window has no time steps")
    if n_in != params.input_dim:
        raise ShapeMismatchError(f"input dim {n_in} != {params.input_dim}")
    _check_finite(X)
    hdim = params.hidden
    W = np.concatenate([params.W_f, params.W_i, params.W_o, params.W_c], axis=0)
    b = np.concatenate([params.b_f, params.b_i, params.b_o, params.b_c])
    h = np.zeros((B, hdim))
    c = np.zeros((B, hdim))
    cache = []
    for t in range(L):
        z = np.concatenate([h, X[:, t]], axis=1)
        pre = z @ W.T + b
        sg = sigmoid(pre[:, : 3 * hdim])
        f, i, o = sg[:, :hdim], sg[:, hdim : 2 * hdim], sg[:, 2 * hdim :]
        g = np.tanh(pre[:, 3 * hdim :])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        cache.append((z, f, i, o, g, c_prev, tc))
    H = h

    if tape is not None:

        def grad_fn(dH):
            dW = np.zeros_like(W)
            db = np.zeros_like(b)
            dX = np.zeros_like(X)
            dh = dH
            dc = np.zeros((B, hdim))
            for t in range(L - 1, -1, -1):
                z, f, i, o, g, c_prev, tc = cache[t]
                do = dh * tc
                dc = dc + dh * o * (1.0 - tc * tc)
                dpre = np.concatenate(
                    [
                        dc * c_prev * f * (1.0 - f),
                        dc * g * i * (1.0 - i),
                        do * o * (1.0 - o),
                        dc * i * (1.0 - g * g),
                    ],
                    axis=1,
                )
                dc = dc * f
                dW += dpre.T @ z
                db += dpre.sum(axis=0)
                dz = dpre @ W
                dh = dz[:, :hdim]
                dX[:, t] = dz[:, hdim:]
            dWs = np.split(dW, 4, axis=0)
            dbs = np.split(db, 4)
            return (*dWs, *dbs, dX)

        inputs = [params.W_f, params.W_i, params.W_o, params.W_c,
                  params.b_f, params.b_i, params.b_o, params.b_c, X]
        tape.record(inputs, H, grad_fn)
    return reshape(H, (hdim,), tape) if single else H


# ---------------------------------------------------------------------------
# Feature self-attention


def _softmax_rows(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def self_attention(params: AttentionParams, tokens, tape: Tape | None = None):
    """Scaled dot-product self-attention over tokens.

    ``tokens`` is (d, embed) or (B, d, embed). Returns ``(output, weights)``
    with output (…, d, d_v) and row-stochastic weights (…, d, d).
    """
    T = np.asarray(tokens, dtype=float)
    single = T.ndim == 2
    if single:
        T = T[None]
    if T.ndim != 3 or T.shape[1] < 1:
        raise ShapeMismatchError("tokens must be (d, embed) or (B, d, embed) with d >= 1")
    if T.shape[2] != params.W_q.shape[0]:
        raise ShapeMismatchError(f"embed dim {T.shape[2]} != {params.W_q.shape[0]}")
    scale = 1.0 / math.sqrt(params.d_k)
    Q = T @ params.W_q
    K = T @ params.W_k
    V = T @ params.W_v
    A = _softmax_rows((Q @ K.transpose(0, 2, 1)) * scale)
    out = A @ V

    if tape is not None:

        def grad_fn(dOut):
            dA = dOut @ V.transpose(0, 2, 1)
            dV = A.transpose(0, 2, 1) @ dOut
            dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) * scale
            dQ = dS @ K
            dK = dS.transpose(0, 2, 1) @ Q
            Tt = T.transpose(0, 2, 1)
            dWq = (Tt @ dQ).sum(axis=0)
            dWk = (Tt @ dK).sum(axis=0)
            dWv = (Tt @ dV).sum(axis=0)
            dT = dQ @ params.W_q.T + dK @ params.W_k.T + dV @ params.W_v.T
            return dWq, dWk, dWv, dT

        tape.record([params.W_q, params.W_k, params.W_v, T], out, grad_fn)
    if single:
        return out[0], A[0]
    return out, A


def feature_embedding(E, P, features, tape: Tape | None = None):
    """Per-feature token: token_j = x_j * E[j] + P[j]; (B, d) -> (B, d, e)."""
    X = np.asarray(features, dtype=float)
    if E.shape != P.shape or E.shape[0] != X.shape[-1]:
        raise ShapeMismatchError("embedding tables must be (d, embed) matching the features")
    T = X[..., None] * E + P
    if tape is not None:

        def grad_fn(g):
            return (X[..., None] * g).sum(axis=0), g.sum(axis=0), (g * E).sum(axis=-1)

        tape.record([E, P, X], T, grad_fn)
    return T


def feature_attention(params: AttentionParams, features, tape: Tape | None = None, residual=False,
                      embedding=None):
    """Attention across feature dimensions: each of the d features is one token
    of embedding dim 1; the (B, d, d_v) output is flattened to (B, d * d_v).

    Returns ``(output, weights)``.
    """
    X = np.asarray(features, dtype=float)
    B, d = X.shape
    if embedding is None:
        tokens = reshape(X, (B, d, 1), tape)
    else:
        tokens = feature_embedding(*embedding, X, tape)
    out, A = self_attention(params, tokens, tape)
    flat = reshape(out, (B, d * params.d_v), tape)
    if residual:
        if params.d_v != 1:
            raise ShapeMismatchError("residual connection needs d_v = 1")
        flat = add(flat, X, tape)
    return flat, A


# ---------------------------------------------------------------------------
# Elementwise / shape ops


def reshape(x, shape, tape: Tape | None = None):
    y = np.array(x, dtype=float).reshape(shape)  # copy keeps ids distinct
    if tape is not None:
        orig = x.shape
        tape.record([x], y, lambda g: (g.reshape(orig),))
    return y


def add(a, b, tape: Tape | None = None):
    y = a + b
    if tape is not None:
        tape.record([a, b], y, lambda g: (g, g))
    return y


def concat(a, b, tape: Tape | None = None):
    """Concatenate along the last axis."""
    y = np.concatenate([a, b], axis=-1)
    if tape is not None:
        na = a.shape[-1]
        tape.record([a, b], y, lambda g: (g[..., :na], g[..., na:]))
    return y


def dense(layer: Dense, x, tape: Tape | None = None):
    if x.shape[-1] != layer.W.shape[0]:
        raise ShapeMismatchError(f"dense input {x.shape[-1]} != {layer.W.shape[0]}")
    y = x @ layer.W + layer.b
    if tape is not None:

        def grad_fn(g):
            g2 = g.reshape(-1, g.shape[-1])
            x2 = x.reshape(-1, x.shape[-1])
            return x2.T @ g2, g2.sum(axis=0), g @ layer.W.T

        tape.record([layer.W, layer.b, x], y, grad_fn)
    return y


def relu(x, tape: Tape | None = None):
    mask = x > 0
    y = np.where(mask, x, 0.0)
    if tape is not None:
        tape.record([x], y, lambda g: (g * mask,))
    return y


def dropout(x, rate: float, training: bool, rng=None, tape: Tape | None = None):
    """Inverted dropout: surviving units are scaled by 1/(1-rate) at train time."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not training or rate == 0:
        mask = None
        y = x.copy()
    else:
        mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
        y = x * mask
    if tape is not None:
        tape.record([x], y, (lambda g: (g,)) if mask is None else (lambda g: (g * mask,)))
    return y


def squeeze_last(x, tape: Tape | None = None):
    y = x[..., 0].copy()
    if tape is not None:
        tape.record([x], y, lambda g: (g[..., None],))
    return y


def mlp_forward(layers, dropout_rate, training, x, rng=None, tape: Tape | None = None):
    """dense -> ReLU -> dropout -> dense -> scalar per sample."""
    hidden_layer, out_layer = layers
    if hidden_layer.W.shape[1] != out_layer.W.shape[0] or out_layer.W.shape[1] != 1:
        raise ShapeMismatchError("MLP layers do not chain to a scalar output")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None]
    h = relu(dense(hidden_layer, x, tape), tape)
    h = dropout(h, dropout_rate, training, rng, tape)
    y = squeeze_last(dense(out_layer, h, tape), tape)
    return float(y[0]) if single else y


def mse_loss(pred, target, tape: Tape | None = None):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.size == 0:
        raise LengthMismatchError(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = np.array(np.mean(diff * diff))
    if tape is not None:
        n = diff.size
        tape.record([pred], loss, lambda g: (g * 2.0 * diff / n,))
        tape.loss = loss
    return loss


# ---------------------------------------------------------------------------
# AdamW


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(state: AdamState, params: dict, grads: dict, lr=5e-4, weight_decay=0.01,
               beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place AdamW update.

    The Adam step uses bias-corrected moments; decay is decoupled and uses the
    pre-step value: theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"gradient shape for {k}: {g.shape} != {p.shape}")
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        if weight_decay:
            update = update + weight_decay * p
        p -= lr * update
    return params


class AdamW:
    def __init__(self, params: dict, lr=5e-4, weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.state = AdamState.zeros_like(params)

    def step(self, grads):
        adamw_step(self.state, self.params, grads, self.lr, self.weight_decay,
                   self.betas[0], self.betas[1], self.eps)


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: str
    tol: float
    n_checked: int
    per_tensor: dict

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def relative_error(a, b, floor=1e-6):
    """|a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries from
    dominating through roundoff."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_gradient(loss_fn, params: dict, eps=1e-5):
    """Central finite differences of ``loss_fn()`` w.r.t. every entry of ``params``
    (perturbed in place and restored)."""
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + eps
            fp = float(loss_fn())
            flat[j] = old - eps
            fm = float(loss_fn())
            flat[j] = old
            gflat[j] = (fp - fm) / (2 * eps)
        out[name] = g
    return out


def grad_check(loss_fn, analytic: dict, params: dict, eps=1e-5, tol=1e-4) -> GradCheckReport:
    """Compare analytic gradients with central differences of ``loss_fn``."""
    numeric = numeric_gradient(loss_fn, params, eps)
    worst, worst_name, per, n = 0.0, "", {}, 0
    for name in params:
        err = relative_error(analytic[name], numeric[name])
        e = float(err.max()) if err.size else 0.0
        per[name] = e
        n += err.size
        if e >= worst:
            worst, worst_name = e, name
    return GradCheckReport(worst, worst_name, tol, n, per)
