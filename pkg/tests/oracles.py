"""Straight-line scalar re-implementations of the cell equations."""

import math


def _mv(m, v):
    return [sum(a * b for a, b in zip(row, v)) for row in m.tolist()]


def _sig(v):
    return [1.0 / (1.0 + math.exp(-a)) for a in v]


def _gate(W_x, W_h, b, x, h):
    return [a + c + d for a, c, d in zip(_mv(W_x, x), _mv(W_h, h), b.tolist())]


def oracle_lstm(p, h, c, x):
    i = _sig(_gate(p.W_xi, p.W_hi, p.b_i, x, h))
    o = _sig(_gate(p.W_xo, p.W_ho, p.b_o, x, h))
    f = _sig(_gate(p.W_xf, p.W_hf, p.b_f, x, h))
    j = [math.tanh(a) for a in _gate(p.W_xj, p.W_hj, p.b_j, x, h)]
    c_new = [ck * fk + ik * jk for ck, fk, ik, jk in zip(c, f, i, j)]
    h_new = [math.tanh(ck) * ok for ck, ok in zip(c_new, o)]
    return h_new, c_new


def oracle_gru(p, h, x):
    r = _sig(_gate(p.W_xr, p.W_hr, p.b_r, x, h))
    z = _sig(_gate(p.W_xz, p.W_hz, p.b_z, x, h))
    rh = [a * b for a, b in zip(r, h)]
    ht = [math.tanh(a) for a in _gate(p.W_xh, p.W_hh, p.b_h, x, rh)]
    return [zk * hk + (1 - zk) * tk for zk, hk, tk in zip(z, h, ht)]


