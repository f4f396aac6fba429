"""Pure numpy GRU sequence kernels (fallback for the compiled extension).

Gate layout along the last axis of the projected input and of ``wh`` is
``[reset | update | candidate]``.  One step, with the reset gate applied before the recurrent product::

    r  = sigmoid(xr + h_prev @ Wh_r)
    z  = sigmoid(xz + h_prev @ Wh_z)
    c  = tanh(xc + (r * h_prev) @ Wh_c)
    h  = z * h_prev + (1 - z) * c

Where ``mask`` is 0 the state is carried unchanged, so the final column of
the output holds the state after the last real token.
"""
import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_forward(xw, wh, mask):
    """Run the recurrence from a zero state.

    ``xw`` is (B, m, 3h) with input projection and biases already applied,
    ``wh`` is (h, 3h), ``mask`` is (B, m) of 0/1.  Returns ``(H, cache)``.
    """
    B, m, h3 = xw.shape
    h = h3 // 3
    H = np.zeros((B, m, h))
    R = np.zeros((B, m, h))
    Z = np.zeros((B, m, h))
    Cc = np.zeros((B, m, h))
    hp = np.zeros((B, h))
    wh_rz = wh[:, : 2 * h]
    wh_c = wh[:, 2 * h:]
    for t in range(m):
        x = xw[:, t]
        u = hp @ wh_rz
        r = _sigmoid(x[:, :h] + u[:, :h])
        z = _sigmoid(x[:, h:2 * h] + u[:, h:])
        c = np.tanh(x[:, 2 * h:] + (r * hp) @ wh_c)
        hn = z * hp + (1.0 - z) * c
        mk = mask[:, t:t + 1]
        hp = mk * hn + (1.0 - mk) * hp
        H[:, t] = hp
        R[:, t], Z[:, t], Cc[:, t] = r, z, c
    return H, (R, Z, Cc)


def gru_backward(dH, H, cache, wh, mask):
    """Gradients w.r.t. the projected input and the recurrent weights."""
    R, Z, Cc = cache
    B, m, h = H.shape
    wh_rz = wh[:, : 2 * h]
    wh_c = wh[:, 2 * h:]
    dxw = np.zeros((B, m, 3 * h))
    dwh = np.zeros_like(wh)
    carry = np.zeros((B, h))
    for t in range(m - 1, -1, -1):
        hp = H[:, t - 1] if t > 0 else np.zeros((B, h))
        r, z, c = R[:, t], Z[:, t], Cc[:, t]
        mk = mask[:, t:t + 1]
        dh = dH[:, t] + carry
        dhn = mk * dh
        dhp = (1.0 - mk) * dh + dhn * z
        dz = dhn * (hp - c)
        dac = dhn * (1.0 - z) * (1.0 - c * c)
        rh = r * hp
        dwh[:, 2 * h:] += rh.T @ dac
        drh = dac @ wh_c.T
        dhp += drh * r
        dar = drh * hp * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        darz = np.concatenate([dar, daz], axis=1)
        dwh[:, : 2 * h] += hp.T @ darz
        dhp += darz @ wh_rz.T
        dxw[:, t, :h] = dar
        dxw[:, t, h:2 * h] = daz
        dxw[:, t, 2 * h:] = dac
        carry = dhp
    return dxw, dwh
