"""Minimal reverse-mode autodiff over float64 numpy arrays.

Ops record onto the active Graph (a tape); application order is a valid
topological order, so backward() replays the tape in reverse. Values are
treated as immutable once produced. Only exact-shape and scalar broadcasting
are supported; anything wider raises ShapeError.
"""

import contextlib

import numpy as np

from . import kernels
from .errors import ContractError, GraphError, ShapeError


class Tensor:
    """An n-d float64 array plus an optional gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad", "_graph", "_epoch")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._graph = None
        self._epoch = -1

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data):
    """A leaf tensor with a preallocated gradient accumulator."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


class _Node:
    __slots__ = ("outs", "fn")

    def __init__(self, outs, fn):
        self.outs = outs
        self.fn = fn


class Graph:
    """Tape of recorded ops; one per training job."""

    def __init__(self):
        self._nodes = []
        self._epoch = 0

    def __len__(self):
        return len(self._nodes)

    def record(self, outs, fn):
        for out in outs:
            out.requires_grad = True
            out._graph = self
            out._epoch = self._epoch
        self._nodes.append(_Node(outs, fn))

    def backward(self, loss):
        """Accumulate grads for everything reachable from loss, then clear."""
        if loss.data.shape != ():
            raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        if not loss.requires_grad:
            raise GraphError("loss does not depend on any recorded operation")
        if loss._graph is not self or loss._epoch != self._epoch:
            raise GraphError("graph already consumed by backward() or reset(); re-record the ops")
        loss.grad = np.ones(())
        for node in reversed(self._nodes):
            if all(out.grad is None for out in node.outs):
                continue
            node.fn()
        self._clear()

    def reset(self):
        """Drop recorded nodes and their grads; weights are untouched."""
        for node in self._nodes:
            for out in node.outs:
                out.grad = None
        self._clear()

    def _clear(self):
        self._nodes.clear()
        self._epoch += 1


_graph_stack = [Graph()]
_grad_enabled = [True]


def active_graph():
    return _graph_stack[-1]


@contextlib.contextmanager
def use_graph(graph):
    _graph_stack.append(graph)
    try:
        yield graph
    finally:
        _graph_stack.pop()


@contextlib.contextmanager
def no_grad():
    _grad_enabled.append(False)
    try:
        yield
    finally:
        _grad_enabled.pop()


def backward(loss):
    """Run reverse-mode accumulation from a scalar loss on the active graph."""
    active_graph().backward(loss)


def _tracking(*tensors):
    return _grad_enabled[-1] and any(
        isinstance(t, Tensor) and t.requires_grad for t in tensors
    )


def _acc(t, g):
    """Accumulate a gradient contribution into t.grad."""
    if not (isinstance(t, Tensor) and t.requires_grad):
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _out_grad(t):
    return t.grad if t.grad is not None else np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    out = Tensor(a.data @ b.data)
    if _tracking(a, b):
        def fn():
            d = out.grad
            _acc(a, d @ b.data.T)
            _acc(b, a.data.T @ d)
        active_graph().record((out,), fn)
    return out


def _check_elementwise(x, y):
    if x.data.shape == y.data.shape:
        return
    if x.data.shape == () or y.data.shape == ():
        return
    raise ShapeError(
        f"elementwise op: shapes {x.data.shape} and {y.data.shape} "
        "(only exact-shape and scalar broadcast supported)"
    )


def _reduce_to(g, shape):
    # collapse a broadcast gradient back to a scalar operand
    if shape == () and g.shape != ():
        return g.sum()
    return g


def add(a, b):
    _check_elementwise(a, b)
    out = Tensor(a.data + b.data)
    if _tracking(a, b):
        def fn():
            d = out.grad
            _acc(a, _reduce_to(d, a.data.shape))
            _acc(b, _reduce_to(d, b.data.shape))
        active_graph().record((out,), fn)
    return out


def mul(a, b):
    _check_elementwise(a, b)
    out = Tensor(a.data * b.data)
    if _tracking(a, b):
        def fn():
            d = out.grad
            _acc(a, _reduce_to(d * b.data, a.data.shape))
            _acc(b, _reduce_to(d * a.data, b.data.shape))
        active_graph().record((out,), fn)
    return out


def scale(a, s):
    s = float(s)
    out = Tensor(a.data * s)
    if _tracking(a):
        def fn():
            _acc(a, out.grad * s)
        active_graph().record((out,), fn)
    return out


def add_bias(x, b):
    """(m, n) + (n,) row broadcast."""
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise ShapeError(f"add_bias: shapes {x.data.shape} and {b.data.shape}")
    out = Tensor(x.data + b.data)
    if _tracking(x, b):
        def fn():
            d = out.grad
            _acc(x, d)
            _acc(b, d.sum(axis=0))
        active_graph().record((out,), fn)
    return out


def tanh(x):
    out = Tensor(np.tanh(x.data))
    if _tracking(x):
        def fn():
            _acc(x, out.grad * (1.0 - out.data * out.data))
        active_graph().record((out,), fn)
    return out


def _sigmoid_values(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    out = Tensor(_sigmoid_values(np.asarray(x.data, dtype=np.float64)))
    if _tracking(x):
        def fn():
            _acc(x, out.grad * out.data * (1.0 - out.data))
        active_graph().record((out,), fn)
    return out


def tsum(x):
    """Full reduction to a scalar."""
    out = Tensor(x.data.sum())
    if _tracking(x):
        def fn():
            _acc(x, np.broadcast_to(out.grad, x.data.shape))
        active_graph().record((out,), fn)
    return out


def reshape(x, shape):
    out = Tensor(x.data.reshape(shape))
    if _tracking(x):
        def fn():
            _acc(x, out.grad.reshape(x.data.shape))
        active_graph().record((out,), fn)
    return out


def concat_cols(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"concat_cols: shapes {a.data.shape} and {b.data.shape}")
    p = a.data.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1))
    if _tracking(a, b):
        def fn():
            d = out.grad
            _acc(a, d[:, :p])
            _acc(b, d[:, p:])
        active_graph().record((out,), fn)
    return out


def stack_time(steps):
    """Stack a list of (B, H) tensors into (B, N, H)."""
    out = Tensor(np.stack([s.data for s in steps], axis=1))
    if _tracking(*steps):
        def fn():
            d = out.grad
            for t, s in enumerate(steps):
                _acc(s, d[:, t, :])
        active_graph().record((out,), fn)
    return out


def embedding(table, ids):
    """Row lookup table[ids] with scatter-add gradient."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding id out of range [0, {table.data.shape[0]})"
        )
    out = Tensor(table.data[ids])
    if _tracking(table):
        def fn():
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, out.grad)
        active_graph().record((out,), fn)
    return out


def attn_scores(enc, query):
    """scores[b, n] = sum_h enc[b, n, h] * query[b, h]."""
    out = Tensor(np.einsum("bnh,bh->bn", enc.data, query.data))
    if _tracking(enc, query):
        def fn():
            d = out.grad
            _acc(enc, d[:, :, None] * query.data[:, None, :])
            _acc(query, np.einsum("bn,bnh->bh", d, enc.data))
        active_graph().record((out,), fn)
    return out


def attn_context(enc, weights):
    """context[b, h] = sum_n weights[b, n] * enc[b, n, h]."""
    out = Tensor(np.einsum("bnh,bn->bh", enc.data, weights.data))
    if _tracking(enc, weights):
        def fn():
            d = out.grad
            _acc(enc, weights.data[:, :, None] * d[:, None, :])
            _acc(weights, np.einsum("bh,bnh->bn", d, enc.data))
        active_graph().record((out,), fn)
    return out


def _softmax_backward(x, out):
    def fn():
        d = out.grad
        inner = (d * out.data).sum(axis=-1, keepdims=True)
        _acc(x, out.data * (d - inner))
    return fn


def softmax_rows(x):
    """Row softmax with max-subtraction; NaN input is rejected."""
    v = x.data
    if np.isnan(v).any():
        raise ContractError("softmax_rows: NaN in input")
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = Tensor(e / e.sum(axis=-1, keepdims=True))
    if _tracking(x):
        active_graph().record((out,), _softmax_backward(x, out))
    return out


def masked_softmax_rows(x, mask):
    """Row softmax over positions with mask 1; masked outputs are exactly 0."""
    v = x.data
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != v.shape:
        raise ShapeError(f"masked_softmax_rows: mask {m.shape} vs input {v.shape}")
    if (m.sum(axis=-1) == 0).any():
        raise ContractError("masked_softmax_rows: a row has no unmasked position")
    z = np.where(m > 0, v, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(m > 0, np.exp(z), 0.0)
    out = Tensor(e / e.sum(axis=-1, keepdims=True))
    if _tracking(x):
        active_graph().record((out,), _softmax_backward(x, out))
    return out


def _logsumexp_rows(v):
    mx = v.max(axis=-1, keepdims=True)
    return (mx + np.log(np.exp(v - mx).sum(axis=-1, keepdims=True)))[..., 0]


def cross_entropy_rows(logits, targets, mask):
    """Per-row masked negative log softmax: (B,) from (B, V) logits.

    Masked rows contribute exactly 0 loss and 0 gradient.
    """
    v = logits.data
    t = np.asarray(targets)
    m = np.asarray(mask, dtype=np.float64)
    if v.ndim != 2 or t.shape != (v.shape[0],) or m.shape != t.shape:
        raise ShapeError(
            f"cross_entropy_rows: logits {v.shape}, targets {t.shape}, mask {m.shape}"
        )
    live = m > 0
    if live.any() and (t[live].min() < 0 or t[live].max() >= v.shape[1]):
        raise IndexError(f"cross_entropy target out of range [0, {v.shape[1]})")
    rows = np.arange(v.shape[0])
    safe_t = np.where(live, t, 0)
    # masked rows must come out exactly 0; guard the gather so a banned
    # (-inf) placeholder column cannot poison them
    gathered = np.where(live, v[rows, safe_t], 0.0)
    nll = np.where(live, (_logsumexp_rows(v) - gathered) * m, 0.0)
    out = Tensor(nll)
    if _tracking(logits):
        def fn():
            z = v - v.max(axis=-1, keepdims=True)
            e = np.exp(z)
            p = e / e.sum(axis=-1, keepdims=True)
            p[rows, safe_t] -= 1.0
            _acc(logits, p * (out.grad * m)[:, None])
        active_graph().record((out,), fn)
    return out


def cross_entropy(logits, targets, mask):
    """Summed masked negative log-likelihood (scalar)."""
    return tsum(cross_entropy_rows(logits, targets, mask))


def bce_rows(logits, labels):
    """Per-element binary cross-entropy from logits against 0/1 labels."""
    z = logits.data
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != z.shape:
        raise ShapeError(f"bce_rows: logits {z.shape} vs labels {y.shape}")
    # softplus(z) - y*z, computed stably
    loss = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(loss)
    if _tracking(logits):
        def fn():
            _acc(logits, (_sigmoid_values(z) - y) * out.grad)
        active_graph().record((out,), fn)
    return out


def dropout(x, rate, training, rng):
    """Inverted dropout: scales survivors at train time, identity at inference."""
    rate = float(rate)
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * keep)
    if _tracking(x):
        def fn():
            _acc(x, out.grad * keep)
        active_graph().record((out,), fn)
    return out


def lstm_cell(x, h_prev, c_prev, wx, wh, b, mask=None):
    """Fused LSTM step: returns (h, c) tensors, one tape node.

    mask is an optional constant (B,) float array; rows with 0 carry the
    previous state through unchanged (padding freeze).
    """
    if mask is not None:
        mask = np.ascontiguousarray(mask, dtype=np.float64)
    c_prev_data = np.ascontiguousarray(c_prev.data)
    h_prev_data = np.ascontiguousarray(h_prev.data)
    pre = x.data @ wx.data + h_prev.data @ wh.data + b.data
    h_data, c_data, gates, tc = kernels.lstm_forward(
        pre, c_prev_data, h_prev_data, mask
    )
    h = Tensor(h_data)
    c = Tensor(c_data)
    if _tracking(x, h_prev, c_prev, wx, wh, b):
        def fn():
            dh = np.ascontiguousarray(_out_grad(h))
            dc = np.ascontiguousarray(_out_grad(c))
            dpre, dc_prev, dh_bypass = kernels.lstm_backward(
                gates, c_prev_data, tc, mask, dh, dc
            )
            _acc(wx, x.data.T @ dpre)
            _acc(wh, h_prev.data.T @ dpre)
            _acc(b, dpre.sum(axis=0))
            _acc(x, dpre @ wx.data.T)
            _acc(h_prev, dpre @ wh.data.T + dh_bypass)
            _acc(c_prev, dc_prev)
        active_graph().record((h, c), fn)
    return h, c
