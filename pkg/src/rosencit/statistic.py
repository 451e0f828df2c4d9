"""Closed-form V-statistics on transformed samples.

All statistics are double sums over ordered pairs ``(i, j)`` including the
diagonal. The pair loops run in compiled code with O(n) extra memory: each row
sum is stored, and the row sums are reduced in a fixed order, so the result
does not depend on how rows might be partitioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import DimensionError, InsufficientSampleError
from .transforms import TransformedSample

E_INV = math.exp(-1.0)
#: normalising constant, ``1 / (13 e^-3 - 40 e^-2 + 13 e^-1)``
C0 = 1.0 / (13.0 * math.exp(-3.0) - 40.0 * math.exp(-2.0) + 13.0 * E_INV)


@dataclass(frozen=True)
class StatisticValue:
    value: float
    n: int
    dims: tuple
    normalized: bool

    def __float__(self):
        return float(self.value)


def s0(u1, u2):
    """Centred kernel ``S(u1, u2)`` for uniform margins."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    out = (np.exp(-np.abs(u1 - u2)) + np.exp(-u1) + np.exp(u1 - 1.0)
           + np.exp(-u2) + np.exp(u2 - 1.0) + 2.0 * E_INV - 4.0)
    return out[()] if out.ndim == 0 else out


def s_marginal_product(u_row) -> float:
    """``prod_k (2 - exp(-u_k) - exp(u_k - 1))``, i.e. ``E exp(-||u - U'||_1)``.

    Accepts a vector (one row) or a matrix (returns one value per row).
    """
    u = np.asarray(u_row, dtype=float)
    terms = 2.0 - np.exp(-u) - np.exp(u - 1.0)
    out = np.prod(terms, axis=-1)
    return out[()] if np.ndim(out) == 0 else out


@njit(cache=True)
def _pair_row_sums(u, v, w, mu, mv, cu, cv):
    n = u.shape[0]
    p = u.shape[1]
    q = v.shape[1]
    r = w.shape[1]
    rows = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            du = 0.0
            for k in range(p):
                du += abs(u[i, k] - u[j, k])
            dv = 0.0
            for k in range(q):
                dv += abs(v[i, k] - v[j, k])
            dw = 0.0
            for k in range(r):
                dw += abs(w[i, k] - w[j, k])
            a = math.exp(-du) + cu - mu[i] - mu[j]
            b = math.exp(-dv) + cv - mv[i] - mv[j]
            acc += a * b * math.exp(-dw)
        rows[i] = acc
    return rows


@njit(cache=True)
def _joint_row_sums(u, v, w):
    n = u.shape[0]
    rows = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            d = 0.0
            for k in range(u.shape[1]):
                d += abs(u[i, k] - u[j, k])
            for k in range(v.shape[1]):
                d += abs(v[i, k] - v[j, k])
            for k in range(w.shape[1]):
                d += abs(w[i, k] - w[j, k])
            acc += math.exp(-d)
        rows[i] = acc
    return rows


def _blocks(ts: TransformedSample, need_w: bool):
    u = np.ascontiguousarray(ts.u, dtype=np.float64)
    v = np.ascontiguousarray(ts.v, dtype=np.float64)
    w = np.ascontiguousarray(ts.w, dtype=np.float64)
    if u.shape[1] < 1 or v.shape[1] < 1:
        raise DimensionError("u and v need at least one column")
    if need_w and w.shape[1] < 1:
        raise DimensionError("conditional statistic needs at least one w column")
    return u, v, w


def pair_sum_statistic(u, v, w) -> float:
    """``n^-2 sum_ij A_ij B_ij exp(-||w_i - w_j||_1)``; ``w`` may have zero columns."""
    n = u.shape[0]
    p, q = u.shape[1], v.shape[1]
    mu = np.ascontiguousarray(s_marginal_product(u), dtype=np.float64).reshape(n)
    mv = np.ascontiguousarray(s_marginal_product(v), dtype=np.float64).reshape(n)
    rows = _pair_row_sums(u, v, w, mu, mv, (2.0 * E_INV) ** p, (2.0 * E_INV) ** q)
    return float(np.sum(rows)) / (n * n)


def rho_hat(ts: TransformedSample) -> StatisticValue:
    """Normalized index estimate for scalar ``u``, ``v``, ``w``.

    ``c0 n^-2 sum_ij s0(u_i, u_j) s0(v_i, v_j) exp(-|w_i - w_j|)``.
    """
    u, v, w = _blocks(ts, need_w=True)
    if ts.dims != (1, 1, 1):
        raise DimensionError(f"rho_hat needs p = q = r = 1, got {ts.dims}")
    if ts.n < 2:
        raise InsufficientSampleError("rho_hat needs n >= 2")
    return StatisticValue(C0 * pair_sum_statistic(u, v, w), ts.n, ts.dims, True)


def rho0_hat(ts: TransformedSample) -> StatisticValue:
    """Moment estimator that ignores the independence of ``u``/``v`` from ``w``.

    Kept for comparison only; its null distribution depends on the smoothing.
    """
    u, v, w = _blocks(ts, need_w=True)
    if ts.dims != (1, 1, 1):
        raise DimensionError(f"rho0_hat needs p = q = r = 1, got {ts.dims}")
    n = ts.n
    joint = float(np.sum(_joint_row_sums(u, v, w))) / (n * n)
    prod = s_marginal_product(u) * s_marginal_product(v) * s_marginal_product(w)
    value = C0 * (joint + 8.0 * math.exp(-3.0) - 2.0 * float(np.sum(prod)) / n)
    return StatisticValue(value, n, ts.dims, True)


def rho_hat_multi(ts: TransformedSample) -> StatisticValue:
    """Unnormalized statistic for vector-valued ``u``, ``v``, ``w`` (l1 distances)."""
    u, v, w = _blocks(ts, need_w=True)
    if ts.n < 2:
        raise InsufficientSampleError("rho_hat_multi needs n >= 2")
    return StatisticValue(pair_sum_statistic(u, v, w), ts.n, ts.dims, False)


def rho_unconditional(ts: TransformedSample) -> StatisticValue:
    """Same double sum with the ``w`` factor dropped (tests ``u`` independent of ``v``)."""
    u, v, _ = _blocks(ts, need_w=False)
    if ts.n < 2:
        raise InsufficientSampleError("rho_unconditional needs n >= 2")
    empty = np.empty((ts.n, 0))
    return StatisticValue(pair_sum_statistic(u, v, empty), ts.n, (ts.dims[0], ts.dims[1], 0),
                          False)
