"""Central finite-difference gradient checks for tape-recorded functions."""

import numpy as np

from soccermap import autograd as ag

EPS = 1e-5
FLOOR = 1e-6  # elements where both gradients are below this count as agreeing


def analytic(fn, tensors):
    for t in tensors:
        t.grad = None
    with ag.Tape() as tape:
        loss = fn()
        tape.backward(loss)
    return [np.zeros_like(t.values) if t.grad is None else t.grad.copy() for t in tensors]


def numeric(fn, tensors, eps=EPS):
    out = []
    for t in tensors:
        g = np.zeros_like(t.values)
        flat = t.values.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            up = float(fn().values)
            flat[i] = old - eps
            down = float(fn().values)
            flat[i] = old
            gf[i] = (up - down) / (2 * eps)
        out.append(g)
    return out


def max_rel_error(a, n, floor=FLOOR):
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check(fn, tensors, eps=EPS):
    """Largest relative error across all ``tensors`` (which must be float64)."""
    for t in tensors:
        assert t.values.dtype == np.float64
        t.requires_grad = True
    an = analytic(fn, tensors)
    nu = numeric(fn, tensors, eps)
    return max(max_rel_error(a, n) for a, n in zip(an, nu))
