"""Compiled inner loops of the LSTM recurrence (forward and BPTT)."""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=False)
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def lstm_forward(xproj, U):
    """
    Run one LSTM direction over a sequence.

    `xproj` holds the input projections ``x_t @ W.T + b`` (T x 4H) with gate
    blocks ordered (input, forget, cell, output). Returns activated gates
    (T x 4H), cell states and hidden states (T x H each).

    """
    T = xproj.shape[0]
    H = U.shape[1]
    gates = np.empty((T, 4 * H))
    c = np.empty((T, H))
    h = np.empty((T, H))
    h_prev = np.zeros(H)
    c_prev = np.zeros(H)
    z = np.empty(4 * H)
    U = np.ascontiguousarray(U)
    for t in range(T):
        z[:] = xproj[t] + np.dot(U, h_prev)
        for k in range(H):
            i = _sigmoid(z[k])
            f = _sigmoid(z[H + k])
            g = np.tanh(z[2 * H + k])
            o = _sigmoid(z[3 * H + k])
            gates[t, k] = i
            gates[t, H + k] = f
            gates[t, 2 * H + k] = g
            gates[t, 3 * H + k] = o
            ct = f * c_prev[k] + i * g
            c[t, k] = ct
            h[t, k] = o * np.tanh(ct)
        for k in range(H):
            h_prev[k] = h[t, k]
            c_prev[k] = c[t, k]
    return gates, c, h


@njit(cache=True)
def lstm_backward(gates, c, h, U, dh_out):
    """
    Backpropagation through time for one LSTM direction.

    Returns the gradient w.r.t. the gate pre-activations (T x 4H) and the
    recurrent weight gradient (4H x H).

    """
    T, H = h.shape
    dz = np.empty((T, 4 * H))
    UT = np.ascontiguousarray(U.T)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        for k in range(H):
            i = gates[t, k]
            f = gates[t, H + k]
            g = gates[t, 2 * H + k]
            o = gates[t, 3 * H + k]
            tc = np.tanh(c[t, k])
            dh = dh_out[t, k] + dh_next[k]
            do = dh * tc
            dc = dc_next[k] + dh * o * (1.0 - tc * tc)
            c_prev = c[t - 1, k] if t > 0 else 0.0
            dz[t, k] = dc * g * i * (1.0 - i)
            dz[t, H + k] = dc * c_prev * f * (1.0 - f)
            dz[t, 2 * H + k] = dc * i * (1.0 - g * g)
            dz[t, 3 * H + k] = do * o * (1.0 - o)
            dc_next[k] = dc * f
        dh_next[:] = np.dot(UT, dz[t])
    dU = np.dot(dz[1:].T, h[:-1]) if T > 1 else np.zeros((4 * H, H))
    return dz, dU
