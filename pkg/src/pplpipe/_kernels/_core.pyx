# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled loss/gradient kernels.

Mirror of ``_reference.py``: the same libm calls in the same order, so this
backend returns bit-identical float64 results. Keep the two files in sync.
"""

from libc.math cimport exp, log, log1p

import numpy as np

NAME = "cython"

cdef double _LN_HALF = log(0.5)


cdef inline Py_ssize_t _argmax(const double[::1] z, double *m_out) except -1:
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t j, im = 0
    cdef double m = z[0]
    for j in range(1, n):
        if z[j] > m:
            m = z[j]
            im = j
    m_out[0] = m
    return im


cdef inline int _check(Py_ssize_t n, Py_ssize_t target) except -1:
    if n == 0:
        raise ValueError("empty logit vector")
    if target < 0 or target >= n:
        raise IndexError(f"target index {target} out of range for {n} logits")
    return 0


def softmax(const double[::1] z):
    """Max-shifted softmax; returns a float64 array summing to 1."""
    cdef Py_ssize_t n = z.shape[0]
    if n == 0:
        raise ValueError("empty logit vector")
    cdef double m
    cdef Py_ssize_t im = _argmax(z, &m)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j
    cdef double e, rest = 0.0
    for j in range(n):
        e = exp(z[j] - m)
        out[j] = e
        if j != im:
            rest += e
    cdef double s = 1.0 + rest
    for j in range(n):
        out[j] = out[j] / s
    return out_arr


def ce_loss(const double[::1] z, Py_ssize_t target):
    """Negative log-softmax of the target component."""
    cdef Py_ssize_t n = z.shape[0]
    _check(n, target)
    cdef double m
    cdef Py_ssize_t im = _argmax(z, &m)
    cdef Py_ssize_t j
    cdef double rest = 0.0
    for j in range(n):
        if j != im:
            rest += exp(z[j] - m)
    return (m - z[target]) + log1p(rest)


def ce_grad(const double[::1] z, Py_ssize_t target):
    """softmax(z) minus the one-hot target vector."""
    cdef Py_ssize_t n = z.shape[0]
    _check(n, target)
    cdef double m
    cdef Py_ssize_t im = _argmax(z, &m)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j
    cdef double e, rest = 0.0
    for j in range(n):
        e = exp(z[j] - m)
        out[j] = e
        if j != im:
            rest += e
    cdef double s = 1.0 + rest
    for j in range(n):
        out[j] = out[j] / s
    out[target] -= 1.0
    return out_arr


def ce_loss_grad(const double[::1] z, Py_ssize_t target):
    cdef Py_ssize_t n = z.shape[0]
    _check(n, target)
    cdef double m
    cdef Py_ssize_t im = _argmax(z, &m)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j
    cdef double e, rest = 0.0
    for j in range(n):
        e = exp(z[j] - m)
        out[j] = e
        if j != im:
            rest += e
    cdef double loss = (m - z[target]) + log1p(rest)
    cdef double s = 1.0 + rest
    for j in range(n):
        out[j] = out[j] / s
    out[target] -= 1.0
    return loss, out_arr


def ul_loss(const double[::1] z, Py_ssize_t target, double eps):
    """-log(1 - p[target]) with p clamped to at most 1 - eps.

    Returns (loss, clamped); see _reference.ul_loss for the branch layout.
    """
    cdef Py_ssize_t n = z.shape[0]
    _check(n, target)
    cdef double m
    cdef Py_ssize_t im = _argmax(z, &m)
    e_arr = np.empty(n)
    cdef double[::1] e = e_arr
    cdef Py_ssize_t j
    cdef double ej, rest = 0.0
    for j in range(n):
        ej = exp(z[j] - m)
        e[j] = ej
        if j != im:
            rest += ej
    cdef double s = 1.0 + rest
    cdef double sc = 0.0
    for j in range(n):
        if j != target:
            sc += e[j]
    if sc < eps * s:
        return -log(eps), True
    cdef double lp = (z[target] - m) - log1p(rest)
    if lp <= _LN_HALF:
        return -log1p(-exp(lp)), False
    return -log(sc / s), False


def ul_grad(const double[::1] z, Py_ssize_t target, double eps):
    """Gradient of ul_loss w.r.t. the logits; returns (grad, clamped)."""
    cdef Py_ssize_t n = z.shape[0]
    _check(n, target)
    cdef double m
    cdef Py_ssize_t im = _argmax(z, &m)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j
    cdef double e, rest = 0.0
    for j in range(n):
        e = exp(z[j] - m)
        out[j] = e
        if j != im:
            rest += e
    cdef double s = 1.0 + rest
    cdef double sc = 0.0
    for j in range(n):
        if j != target:
            sc += out[j]
    cdef double et = out[target]
    cdef bint clamped = sc < eps * s
    cdef double odds, gt
    if clamped:
        odds = (1.0 - eps) / eps
        gt = 1.0 - eps
    else:
        odds = et / sc
        gt = et / s
    for j in range(n):
        out[j] = -(out[j] / s) * odds
    out[target] = gt
    return out_arr, clamped


def ul_loss_grad(const double[::1] z, Py_ssize_t target, double eps):
    cdef Py_ssize_t n = z.shape[0]
    _check(n, target)
    cdef double m
    cdef Py_ssize_t im = _argmax(z, &m)
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j
    cdef double e, rest = 0.0
    for j in range(n):
        e = exp(z[j] - m)
        out[j] = e
        if j != im:
            rest += e
    cdef double s = 1.0 + rest
    cdef double sc = 0.0
    for j in range(n):
        if j != target:
            sc += out[j]
    cdef double et = out[target]
    cdef bint clamped = sc < eps * s
    cdef double odds, gt, loss, lp
    if clamped:
        loss = -log(eps)
        odds = (1.0 - eps) / eps
        gt = 1.0 - eps
    else:
        lp = (z[target] - m) - log1p(rest)
        if lp <= _LN_HALF:
            loss = -log1p(-exp(lp))
        else:
            loss = -log(sc / s)
        odds = et / sc
        gt = et / s
    for j in range(n):
        out[j] = -(out[j] / s) * odds
    out[target] = gt
    return loss, out_arr, clamped
