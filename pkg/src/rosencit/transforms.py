"""Rosenblatt-type transforms mapping raw observations onto [0, 1].

Continuous columns go through kernel estimates of conditional CDFs, chained
column by column for vectors. Discrete columns go through the randomized
probability integral transform, which interpolates between the left limit and
the value of the within-level empirical CDF with an independent uniform.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    DataError,
    DimensionError,
    IsolatedPointError,
    KindMismatchError,
    UsageError,
)
from .kernels import BandwidthPolicy, KernelSpec, column_bandwidths

CONTINUOUS = "continuous"
DISCRETE = "discrete"

TIE_WARN_FRACTION = 0.01


@dataclass
class Dataset:
    """Numeric table with a kind mark per column.

    ``values`` is an ``(n, k)`` float array; ``kinds`` holds ``"continuous"`` or
    ``"discrete"`` for each of ``names``.
    """

    values: np.ndarray
    names: list
    kinds: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DimensionError("dataset values must be two-dimensional")
        self.names = [str(c) for c in self.names]
        if len(self.names) != self.values.shape[1] or len(self.kinds) != len(self.names):
            raise DimensionError("names/kinds do not match the number of columns")
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate column names")
        if not np.all(np.isfinite(self.values)):
            raise DataError("dataset contains missing or non-finite values")
        for name, kind in zip(self.names, self.kinds):
            if kind not in (CONTINUOUS, DISCRETE):
                raise UsageError(f"column {name!r}: unknown kind {kind!r}")

    @classmethod
    def from_columns(cls, columns: dict, discrete: Sequence[str] = ()) -> "Dataset":
        names = list(columns)
        unknown = set(discrete) - set(names)
        if unknown:
            raise DataError(f"unknown discrete column(s): {sorted(unknown)}")
        values = np.column_stack([np.asarray(columns[c], dtype=float) for c in names])
        kinds = [DISCRETE if c in discrete else CONTINUOUS for c in names]
        return cls(values, names, kinds)

    @classmethod
    def from_array(cls, values, names=None, discrete: Sequence[str] = ()) -> "Dataset":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if names is None:
            names = [f"X{k + 1}" for k in range(values.shape[1])]
        kinds = [DISCRETE if c in discrete else CONTINUOUS for c in names]
        return cls(values, list(names), kinds)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown column {name!r}") from None

    def block(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.index(c) for c in names]
        return self.values[:, idx]

    def block_kind(self, names: Sequence[str]) -> Optional[str]:
        """Common kind of ``names``; None for an empty selection."""
        kinds = {self.kinds[self.index(c)] for c in names}
        if len(kinds) > 1:
            raise KindMismatchError(f"columns {list(names)} mix continuous and discrete kinds")
        return kinds.pop() if kinds else None

    def take(self, rows) -> "Dataset":
        return Dataset(self.values[rows], list(self.names), list(self.kinds))

    def subset(self, names: Sequence[str]) -> "Dataset":
        idx = [self.index(c) for c in names]
        return Dataset(self.values[:, idx], [self.names[i] for i in idx],
                       [self.kinds[i] for i in idx])


@dataclass
class TransformedSample:
    """Per-observation coordinates on [0, 1]: ``u`` (n, p), ``v`` (n, q), ``w`` (n, r)."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = _as_2d(self.u)
        self.v = _as_2d(self.v)
        self.w = _as_2d(self.w, allow_empty=True, n=self.u.shape[0])
        n = self.u.shape[0]
        if self.v.shape[0] != n or self.w.shape[0] != n:
            raise DimensionError("u, v and w must have the same number of rows")

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def dims(self) -> tuple:
        return (self.u.shape[1], self.v.shape[1], self.w.shape[1])


def _as_2d(a, allow_empty=False, n=None) -> np.ndarray:
    if a is None:
        if not allow_empty:
            raise DimensionError("missing coordinate block")
        return np.empty((n, 0))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionError(f"expected a 1-D or 2-D array, got shape {a.shape}")
    return a


def ecdf_transform(z_col) -> np.ndarray:
    """Empirical CDF evaluated at the sample points, ``#{j: z_j <= z_i} / n``."""
    z = np.asarray(z_col, dtype=float).ravel()
    srt = np.sort(z)
    return np.searchsorted(srt, z, side="right") / z.size


def _warn_ties(col: np.ndarray, what: str = "column") -> None:
    n = col.size
    if n < 2:
        return
    _, counts = np.unique(col, return_counts=True)
    tied = float(np.sum(counts * (counts - 1))) / (n * (n - 1))
    if tied > TIE_WARN_FRACTION:
        warnings.warn(
            f"{what}: {100 * tied:.1f}% of pairs are tied; the continuous-data "
            "theory assumes no ties",
            stacklevel=3,
        )


def _kernel_weights(z_query: np.ndarray, z_ref: np.ndarray, h: np.ndarray,
                    spec: KernelSpec) -> np.ndarray:
    """Product-kernel weights, shape (len(z_query), len(z_ref)).

    Normalising constants and the 1/h factors cancel in the ratio estimator and
    are dropped.
    """
    nq, nr = z_query.shape[0], z_ref.shape[0]
    if spec.family == "gaussian":
        sq = np.zeros((nq, nr))
        for k in range(z_ref.shape[1]):
            d = (z_ref[None, :, k] - z_query[:, None, k]) / h[k]
            sq += d * d
        return np.exp(-0.5 * sq)
    wts = np.ones((nq, nr))
    for k in range(z_ref.shape[1]):
        d = (z_ref[None, :, k] - z_query[:, None, k]) / h[k]
        wts *= np.where(np.abs(d) <= 1.0, 1.0 - d * d, 0.0)
    return wts


def cond_cdf_at(x_query, z_query, x_ref, z_ref, h, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Kernel estimate of ``F(x_query[i] | z_query[i])`` from the reference sample."""
    x_query = np.asarray(x_query, dtype=float).ravel()
    x_ref = np.asarray(x_ref, dtype=float).ravel()
    z_query = _as_2d(z_query)
    z_ref = _as_2d(z_ref)
    h = np.broadcast_to(np.asarray(h, dtype=float), (z_ref.shape[1],))
    if z_ref.shape[0] != x_ref.size or z_query.shape[0] != x_query.size:
        raise DimensionError("x and z must have the same number of rows")
    if z_ref.shape[1] != z_query.shape[1]:
        raise DimensionError("query and reference z have different widths")
    if np.any(h <= 0):
        raise UsageError("bandwidths must be positive")
    wts = _kernel_weights(z_query, z_ref, h, spec)
    denom = wts.sum(axis=1)
    if np.any(denom <= 0):
        bad = int(np.flatnonzero(denom <= 0)[0])
        raise IsolatedPointError(
            f"no reference point within the kernel window of row {bad}; "
            "use a larger bandwidth or the gaussian kernel"
        )
    ind = x_ref[None, :] <= x_query[:, None]
    num = np.where(ind, wts, 0.0).sum(axis=1)
    return np.clip(num / denom, 0.0, 1.0)


def kernel_cond_cdf(x_col, z_mat, h, spec: KernelSpec = KernelSpec()) -> np.ndarray:
    """Leave-in kernel estimate of ``F(x_i | z_i)`` at every sample point.

    Parameters
    ----------
    x_col : array of shape (n,)
    z_mat : array of shape (n, d) or (n,)
    h : float or array of shape (d,)
        Per-coordinate bandwidths.
    spec : KernelSpec

    Returns
    -------
    ndarray of shape (n,) with entries in [0, 1].
    """
    return cond_cdf_at(x_col, z_mat, x_col, z_mat, h, spec)


def rank_scale(cond: np.ndarray) -> np.ndarray:
    """Column-wise empirical CDF values of a conditioning matrix."""
    out = np.empty(cond.shape)
    for k in range(cond.shape[1]):
        out[:, k] = ecdf_transform(cond[:, k])
    return out


def rosenblatt_chain(block, cond=None, policy: BandwidthPolicy = BandwidthPolicy(),
                     spec: KernelSpec = KernelSpec(), return_bandwidths: bool = False):
    """Sequential conditional-CDF transform of the columns of ``block``.

    Column k is transformed given ``[cond, block[:, :k]]``. When that set is
    empty (no ``cond`` and k = 0) the marginal ECDF is used. Bandwidths are
    recomputed at every stage from the current conditioning matrix, after the
    rank mapping when ``policy.cond_scale == "rank"``. Conditioning on ranks
    targets the same conditional CDF, since the ECDF of a continuous column is
    a monotone relabelling of it.

    Returns
    -------
    out : ndarray of shape (n, p)
    bandwidths : list of lists, only if ``return_bandwidths``
        Per-stage bandwidth vectors (empty for ECDF stages).
    """
    block = _as_2d(block)
    n, p = block.shape
    cond = _as_2d(cond, allow_empty=True, n=n)
    if cond.shape[0] != n:
        raise DimensionError("block and cond must have the same number of rows")
    out = np.empty((n, p))
    stages = []
    for k in range(p):
        _warn_ties(block[:, k], f"column {k}")
        given = np.hstack([cond, block[:, :k]])
        try:
            if given.shape[1] == 0:
                out[:, k] = ecdf_transform(block[:, k])
                stages.append([])
                continue
            if policy.cond_scale == "rank":
                given = rank_scale(given)
            h = column_bandwidths(given, policy)
            out[:, k] = kernel_cond_cdf(block[:, k], given, h, spec)
        except DataError as exc:
            raise type(exc)(f"stage {k}: {exc}") from exc
        stages.append(h.tolist())
    if return_bandwidths:
        return out, stages
    return out


def _check_discrete(col: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(col)) or not np.all(col == np.round(col)):
        raise KindMismatchError(
            f"{what} has non-integer values; discrete columns must be integer coded"
        )


def _levels(cond: np.ndarray) -> np.ndarray:
    if cond.shape[1] == 0:
        return np.zeros(cond.shape[0], dtype=np.intp)
    _, inv = np.unique(cond, axis=0, return_inverse=True)
    return inv.ravel()


def _pit_within_levels(x: np.ndarray, levels: np.ndarray, unif: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for lev in np.unique(levels):
        rows = np.flatnonzero(levels == lev)
        xs = np.sort(x[rows])
        m = rows.size
        upper = np.searchsorted(xs, x[rows], side="right") / m
        lower = np.searchsorted(xs, x[rows], side="left") / m
        out[rows] = (1.0 - unif[rows]) * lower + unif[rows] * upper
    return out


def discrete_randomized_pit(x_col, z_col=None, rng_seed=None) -> np.ndarray:
    """Randomized PIT of a discrete column within each level of ``z_col``.

    ``U = (1 - U_X) F(X- | Z) + U_X F(X | Z)`` with the within-level empirical
    CDF and one uniform ``U_X`` per row. ``z_col`` may be None (unconditional),
    a column, or a matrix whose distinct rows define the levels.

    ``rng_seed`` is anything accepted by :func:`numpy.random.default_rng`.
    """
    x = np.asarray(x_col, dtype=float).ravel()
    _check_discrete(x, "x column")
    cond = _as_2d(z_col, allow_empty=True, n=x.size)
    if cond.shape[0] != x.size:
        raise DimensionError("x and z must have the same number of rows")
    for k in range(cond.shape[1]):
        _check_discrete(cond[:, k], f"conditioning column {k}")
    unif = np.random.default_rng(rng_seed).random(x.size)
    return _pit_within_levels(x, _levels(cond), unif)


def discrete_chain(block, cond=None, rng_seed=None) -> np.ndarray:
    """Randomized PIT applied column by column, each given ``cond`` and earlier columns.

    One uniform per (row, column), drawn as a single row-major matrix so the
    mapping from seed to output is fixed.
    """
    block = _as_2d(block)
    n, p = block.shape
    cond = _as_2d(cond, allow_empty=True, n=n)
    for k in range(p):
        _check_discrete(block[:, k], f"column {k}")
    for k in range(cond.shape[1]):
        _check_discrete(cond[:, k], f"conditioning column {k}")
    unif = np.random.default_rng(rng_seed).random((n, p))
    out = np.empty((n, p))
    for k in range(p):
        given = np.hstack([cond, block[:, :k]])
        out[:, k] = _pit_within_levels(block[:, k], _levels(given), unif[:, k])
    return out


class RosenblattTransformer(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`rosenblatt_chain`.

    ``fit(X, Z)`` stores the reference sample and per-stage bandwidths;
    ``transform(X, Z)`` evaluates the estimated conditional CDFs at new rows.
    Transforming the training rows reproduces the leave-in chain exactly.

    Parameters
    ----------
    kernel : {"gaussian", "epanechnikov"}
    bandwidth_scale : float
    bandwidth : float, optional
        Fixed bandwidth overriding the rule of thumb.
    cond_scale : {"rank", "raw"}
        New conditioning values are placed on the rank scale through the
        training ECDF.
    """

    def __init__(self, kernel="gaussian", bandwidth_scale=1.0, bandwidth=None,
                 cond_scale="rank"):
        self.kernel = kernel
        self.bandwidth_scale = bandwidth_scale
        self.bandwidth = bandwidth
        self.cond_scale = cond_scale

    def _parts(self):
        return KernelSpec(self.kernel), BandwidthPolicy(self.bandwidth_scale, self.bandwidth,
                                                        self.cond_scale)

    def _scaled(self, ref_given, q_given):
        if self.cond_scale != "rank":
            return ref_given, q_given
        ref_out, q_out = np.empty(ref_given.shape), np.empty(q_given.shape)
        m = ref_given.shape[0]
        for c in range(ref_given.shape[1]):
            srt = np.sort(ref_given[:, c])
            ref_out[:, c] = np.searchsorted(srt, ref_given[:, c], side="right") / m
            q_out[:, c] = np.searchsorted(srt, q_given[:, c], side="right") / m
        return ref_out, q_out

    def fit(self, X, Z=None):
        X = check_array(X, ensure_2d=False)
        X = _as_2d(X)
        Z = None if Z is None else _as_2d(check_array(Z, ensure_2d=False))
        cond = _as_2d(Z, allow_empty=True, n=X.shape[0])
        if cond.shape[0] != X.shape[0]:
            raise DimensionError("X and Z must have the same number of rows")
        _, policy = self._parts()
        self.bandwidths_ = []
        for k in range(X.shape[1]):
            given = np.hstack([cond, X[:, :k]])
            if given.shape[1] and self.cond_scale == "rank":
                given = rank_scale(given)
            self.bandwidths_.append(
                column_bandwidths(given, policy) if given.shape[1] else np.empty(0)
            )
        self.X_ref_ = X
        self.Z_ref_ = cond
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X, Z=None):
        check_is_fitted(self, "X_ref_")
        X = _as_2d(check_array(X, ensure_2d=False))
        cond = _as_2d(None if Z is None else check_array(Z, ensure_2d=False),
                      allow_empty=True, n=X.shape[0])
        if X.shape[1] != self.n_features_in_ or cond.shape[1] != self.Z_ref_.shape[1]:
            raise DimensionError("X/Z widths differ from those seen in fit")
        spec, _ = self._parts()
        out = np.empty(X.shape)
        for k in range(X.shape[1]):
            ref_given = np.hstack([self.Z_ref_, self.X_ref_[:, :k]])
            if ref_given.shape[1] == 0:
                srt = np.sort(self.X_ref_[:, k])
                out[:, k] = np.searchsorted(srt, X[:, k], side="right") / srt.size
                continue
            q_given = np.hstack([cond, X[:, :k]])
            ref_s, q_s = self._scaled(ref_given, q_given)
            out[:, k] = cond_cdf_at(X[:, k], q_s, self.X_ref_[:, k], ref_s,
                                    self.bandwidths_[k], spec)
        return out

    def fit_transform(self, X, Z=None, **fit_params):
        return self.fit(X, Z).transform(X, Z)
