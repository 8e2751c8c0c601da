"""Pure numpy reference implementation of the LSTM gate kernels.

The compiled module in _gates.pyx implements the same math in one C pass;
this file is the import-time fallback and the ground truth the parity tests
compare against. Gate layout inside the (B, 4H) preactivation block is
[input | forget | cell | output].
"""

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(pre, c_prev, h_prev, mask):
    """One LSTM cell step from gate preactivations.

    pre: (B, 4H) preactivations (x@Wx + h_prev@Wh + b), c_prev/h_prev: (B, H),
    mask: (B,) float 0/1 or None. Rows with mask 0 carry h_prev/c_prev through
    unchanged. Returns (h, c, gates, tc) where gates is the (B, 4H) block of
    activated gate values and tc = tanh(c_new) before mask gating.
    """
    hid = c_prev.shape[1]
    gates = np.empty_like(pre)
    gates[:, :hid] = _sigmoid(pre[:, :hid])
    gates[:, hid:2 * hid] = _sigmoid(pre[:, hid:2 * hid])
    gates[:, 2 * hid:3 * hid] = np.tanh(pre[:, 2 * hid:3 * hid])
    gates[:, 3 * hid:] = _sigmoid(pre[:, 3 * hid:])
    i = gates[:, :hid]
    f = gates[:, hid:2 * hid]
    g = gates[:, 2 * hid:3 * hid]
    o = gates[:, 3 * hid:]

    c_new = f * c_prev + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    if mask is None:
        return h_new, c_new, gates, tc
    m = mask[:, None]
    h = m * h_new + (1.0 - m) * h_prev
    c = m * c_new + (1.0 - m) * c_prev
    return h, c, gates, tc


def lstm_backward(gates, c_prev, tc, mask, dh, dc):
    """Backward pass matching lstm_forward.

    dh/dc are gradients w.r.t. the (gated) outputs h and c. Returns
    (dpre, dc_prev, dh_prev) where dh_prev holds only the mask-bypass
    contribution (the dpre @ Wh^T term is added by the caller).
    """
    hid = c_prev.shape[1]
    i = gates[:, :hid]
    f = gates[:, hid:2 * hid]
    g = gates[:, 2 * hid:3 * hid]
    o = gates[:, 3 * hid:]

    if mask is None:
        dh_new = dh
        dc_on_new = dc
        dh_prev = np.zeros_like(c_prev)
        dc_prev_bypass = 0.0
    else:
        m = mask[:, None]
        dh_new = dh * m
        dc_on_new = dc * m
        dh_prev = dh * (1.0 - m)
        dc_prev_bypass = dc * (1.0 - m)

    dcn = dc_on_new + dh_new * o * (1.0 - tc * tc)
    do = dh_new * tc
    di = dcn * g
    df = dcn * c_prev
    dg = dcn * i
    dc_prev = dcn * f + dc_prev_bypass

    dpre = np.empty_like(gates)
    dpre[:, :hid] = di * i * (1.0 - i)
    dpre[:, hid:2 * hid] = df * f * (1.0 - f)
    dpre[:, 2 * hid:3 * hid] = dg * (1.0 - g * g)
    dpre[:, 3 * hid:] = do * o * (1.0 - o)
    return dpre, dc_prev, dh_prev
