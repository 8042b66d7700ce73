"""Pure-Python loss/gradient kernels.

This is the fallback backend mirrored by the compiled extension in
``_core.pyx``. Both perform the same libm calls (exp, log, log1p) in the
same order, so the two backends return bit-identical float64 results.
Keep the two files in sync when changing either.

Numerical layout shared by every routine (for a logit vector z of length n):

    m    = max(z), im = first index attaining it
    e[j] = exp(z[j] - m)            (e[im] == 1.0 exactly)
    rest = sum of e[j] for j != im  (ascending index order)
    s    = 1.0 + rest               (the softmax normalizer)

The log-normalizer is then m + log1p(rest), which stays fully accurate even
when one logit dominates; naive log(sum(exp(z))) loses the tiny loss values
that the finite-difference checker needs to resolve.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "python"

_LN_HALF = math.log(0.5)


def _prep(z):
    zl = z.tolist() if isinstance(z, np.ndarray) else [float(v) for v in z]
    n = len(zl)
    if n == 0:
        raise ValueError("empty logit vector")
    m = zl[0]
    im = 0
    for j in range(1, n):
        if zl[j] > m:
            m = zl[j]
            im = j
    return zl, n, m, im


def _check_target(target, n):
    if target < 0 or target >= n:
        raise IndexError(f"target index {target} out of range for {n} logits")


def softmax(z):
    """Max-shifted softmax; returns a float64 array summing to 1."""
    zl, n, m, im = _prep(z)
    out = np.empty(n)
    rest = 0.0
    for j in range(n):
        e = math.exp(zl[j] - m)
        out[j] = e
        if j != im:
            rest += e
    s = 1.0 + rest
    for j in range(n):
        out[j] = out[j] / s
    return out


def ce_loss(z, target):
    """Negative log-softmax of the target component."""
    zl, n, m, im = _prep(z)
    _check_target(target, n)
    rest = 0.0
    for j in range(n):
        if j != im:
            rest += math.exp(zl[j] - m)
    return (m - zl[target]) + math.log1p(rest)


def ce_grad(z, target):
    """softmax(z) minus the one-hot target vector."""
    zl, n, m, im = _prep(z)
    _check_target(target, n)
    out = np.empty(n)
    rest = 0.0
    for j in range(n):
        e = math.exp(zl[j] - m)
        out[j] = e
        if j != im:
            rest += e
    s = 1.0 + rest
    for j in range(n):
        out[j] = out[j] / s
    out[target] -= 1.0
    return out


def ce_loss_grad(z, target):
    zl, n, m, im = _prep(z)
    _check_target(target, n)
    out = np.empty(n)
    rest = 0.0
    for j in range(n):
        e = math.exp(zl[j] - m)
        out[j] = e
        if j != im:
            rest += e
    loss = (m - zl[target]) + math.log1p(rest)
    s = 1.0 + rest
    for j in range(n):
        out[j] = out[j] / s
    out[target] -= 1.0
    return loss, out


def ul_loss(z, target, eps):
    """-log(1 - p[target]) with p clamped to at most 1 - eps.

    Returns (loss, clamped). The complement 1 - p is never formed by
    subtraction: for small p the loss is -log1p(-p), otherwise the
    complementary sum sc = sum of e[j] over j != target gives 1 - p = sc/s.
    """
    zl, n, m, im = _prep(z)
    _check_target(target, n)
    e = [0.0] * n
    rest = 0.0
    for j in range(n):
        ej = math.exp(zl[j] - m)
        e[j] = ej
        if j != im:
            rest += ej
    s = 1.0 + rest
    sc = 0.0
    for j in range(n):
        if j != target:
            sc += e[j]
    if sc < eps * s:
        return -math.log(eps), True
    lp = (zl[target] - m) - math.log1p(rest)
    if lp <= _LN_HALF:
        return -math.log1p(-math.exp(lp)), False
    return -math.log(sc / s), False


def ul_grad(z, target, eps):
    """Gradient of ul_loss w.r.t. the logits.

    Target component p_t, off-target components -p_j * p_t/(1-p_t); the odds
    ratio is formed as e[target]/sc so no cancellation occurs near p_t = 1.
    Returns (grad, clamped).
    """
    zl, n, m, im = _prep(z)
    _check_target(target, n)
    out = np.empty(n)
    rest = 0.0
    for j in range(n):
        e = math.exp(zl[j] - m)
        out[j] = e
        if j != im:
            rest += e
    s = 1.0 + rest
    sc = 0.0
    for j in range(n):
        if j != target:
            sc += out[j]
    et = float(out[target])
    clamped = sc < eps * s
    if clamped:
        odds = (1.0 - eps) / eps
        gt = 1.0 - eps
    else:
        odds = et / sc
        gt = et / s
    for j in range(n):
        out[j] = -(out[j] / s) * odds
    out[target] = gt
    return out, clamped


def ul_loss_grad(z, target, eps):
    zl, n, m, im = _prep(z)
    _check_target(target, n)
    out = np.empty(n)
    rest = 0.0
    for j in range(n):
        e = math.exp(zl[j] - m)
        out[j] = e
        if j != im:
            rest += e
    s = 1.0 + rest
    sc = 0.0
    for j in range(n):
        if j != target:
            sc += out[j]
    et = float(out[target])
    clamped = sc < eps * s
    if clamped:
        loss = -math.log(eps)
        odds = (1.0 - eps) / eps
        gt = 1.0 - eps
    else:
        lp = (zl[target] - m) - math.log1p(rest)
        if lp <= _LN_HALF:
            loss = -math.log1p(-math.exp(lp))
        else:
            loss = -math.log(sc / s)
        odds = et / sc
        gt = et / s
    for j in range(n):
        out[j] = -(out[j] / s) * odds
    out[target] = gt
    return loss, out, clamped
