"""Full conditional independence test: transform, statistic, calibration, decision."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataError, InsufficientSampleError, KindMismatchError, UsageError
from .kernels import BandwidthPolicy, KernelSpec
from .nulldist import (
    DEFAULT_REPS,
    NullCache,
    NullKey,
    cache_get_or_build,
    critical_value,
    get_default_cache,
    p_value,
)
from .statistic import StatisticValue, rho_hat, rho_hat_multi, rho_unconditional
from .transforms import (
    DISCRETE,
    Dataset,
    TransformedSample,
    discrete_chain,
    rosenblatt_chain,
)

DEFAULT_MIN_N = 20
REPORT_ALPHAS = (0.05, 0.10)


@dataclass(frozen=True)
class TestSpec:
    """What to test and how.

    ``seed`` drives the randomized transform of discrete columns;
    ``null_seed`` keys the null table, so many datasets share one table.
    """

    __test__ = False  # keep pytest from collecting this class

    x_cols: tuple
    y_cols: tuple
    z_cols: tuple = ()
    alpha: float = 0.05
    kernel: KernelSpec = KernelSpec()
    bandwidth: BandwidthPolicy = BandwidthPolicy()
    reps_B: int = DEFAULT_REPS
    seed: int = 0
    null_seed: int = 0
    min_n: int = DEFAULT_MIN_N

    def __post_init__(self):
        for name in ("x_cols", "y_cols", "z_cols"):
            val = getattr(self, name)
            object.__setattr__(self, name, (val,) if isinstance(val, str) else tuple(val))
        if not self.x_cols or not self.y_cols:
            raise UsageError("x and y column selections must be nonempty")
        sx, sy, sz = set(self.x_cols), set(self.y_cols), set(self.z_cols)
        if sx & sy or sx & sz or sy & sz:
            raise UsageError("x, y and z column selections must be disjoint")
        if not 0.0 < self.alpha < 1.0:
            raise UsageError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.reps_B < 1:
            raise UsageError("reps_B must be >= 1")

    def with_columns(self, x_cols, y_cols, z_cols=()) -> "TestSpec":
        return TestSpec(tuple(x_cols), tuple(y_cols), tuple(z_cols), self.alpha, self.kernel,
                        self.bandwidth, self.reps_B, self.seed, self.null_seed, self.min_n)


@dataclass
class TestResult:
    __test__ = False

    statistic: StatisticValue
    p_value: float
    critical_values: dict
    reject: bool
    n: int
    alpha: float
    bandwidths: dict
    seed_used: int
    null_key: NullKey
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        key = self.null_key
        return {
            "statistic": float(self.statistic.value),
            "statistic_kind": key.kind,
            "normalized": self.statistic.normalized,
            "n_statistic": float(self.n * self.statistic.value),
            "p_value": float(self.p_value),
            "alpha": self.alpha,
            "reject": bool(self.reject),
            "critical_values": {f"{a:g}": float(c) for a, c in self.critical_values.items()},
            "n": self.n,
            "dims": list(self.statistic.dims),
            "seed": self.seed_used,
            "null_table": {"n": key.n, "dims": list(key.dims), "B": key.B,
                           "seed": key.seed, "kind": key.kind},
            "bandwidths": self.bandwidths,
            "config": self.config,
        }


def _spec_config(spec: TestSpec) -> dict:
    return {
        "x": list(spec.x_cols), "y": list(spec.y_cols), "z": list(spec.z_cols),
        "alpha": spec.alpha, "kernel": spec.kernel.family,
        "bandwidth_scale": spec.bandwidth.scale_c, "bandwidth": spec.bandwidth.explicit_h,
        "cond_scale": spec.bandwidth.cond_scale,
        "reps": spec.reps_B, "seed": spec.seed, "null_seed": spec.null_seed,
    }


def _check_n(data: Dataset, spec: TestSpec) -> None:
    if data.n < max(2, spec.min_n):
        raise InsufficientSampleError(
            f"n = {data.n} is below the minimum sample size {max(2, spec.min_n)}"
        )


def transform_columns(data: Dataset, x_cols, y_cols=(), z_cols=(),
                      kernel: KernelSpec = KernelSpec(),
                      bandwidth: BandwidthPolicy = BandwidthPolicy(), seed: int = 0) -> tuple:
    """Rosenblatt-transform the ``x`` and ``y`` blocks given ``z``, and ``z`` itself.

    ``y_cols`` and ``z_cols`` may be empty. Returns ``(u, v, w, bandwidths, kind)``
    where absent blocks come back as ``None``.
    """
    kinds = {data.block_kind(c) for c in (x_cols, y_cols, z_cols) if c}
    if len(kinds) > 1:
        raise KindMismatchError(
            "mixed continuous/discrete selections are not supported; "
            "x, y and z must all be continuous or all discrete"
        )
    kind = kinds.pop()
    x = data.block(x_cols)
    y = data.block(y_cols) if y_cols else None
    z = data.block(z_cols) if z_cols else None
    if kind == DISCRETE:
        su, sv, sw = np.random.SeedSequence(seed).spawn(3)
        u = discrete_chain(x, z, su)
        v = discrete_chain(y, z, sv) if y is not None else None
        w = discrete_chain(z, None, sw) if z is not None else None
        return u, v, w, {"u": [], "v": [], "w": []}, kind
    try:
        u, bu = rosenblatt_chain(x, z, bandwidth, kernel, return_bandwidths=True)
        v, bv = (rosenblatt_chain(y, z, bandwidth, kernel, return_bandwidths=True)
                 if y is not None else (None, []))
        w, bww = (rosenblatt_chain(z, None, bandwidth, kernel, return_bandwidths=True)
                  if z is not None else (None, []))
    except DataError as exc:
        raise type(exc)(f"transforming x={list(x_cols)} y={list(y_cols)} "
                        f"z={list(z_cols)}: {exc}") from exc
    return u, v, w, {"u": bu, "v": bv, "w": bww}, kind


def transform_dataset(data: Dataset, spec: TestSpec) -> tuple:
    """Build the transformed sample for ``spec``.

    Returns ``(TransformedSample, bandwidths)`` where ``bandwidths`` maps
    ``"u"``, ``"v"``, ``"w"`` to per-stage bandwidth lists (empty for discrete data).
    """
    u, v, w, bw, kind = transform_columns(data, spec.x_cols, spec.y_cols, spec.z_cols,
                                          spec.kernel, spec.bandwidth, spec.seed)
    ts = TransformedSample(u, v, w, meta={"kind": kind, "bandwidths": bw, "seed": spec.seed})
    return ts, bw


def compute_statistic(ts: TransformedSample) -> tuple:
    """Pick the statistic matching the sample's block widths.

    Returns ``(StatisticValue, statistic_kind)``.
    """
    if ts.dims[2] == 0:
        return rho_unconditional(ts), "rho_unconditional"
    if ts.dims == (1, 1, 1):
        return rho_hat(ts), "rho_normalized"
    return rho_hat_multi(ts), "rho_multi_unnormalized"


def _calibrate(stat: StatisticValue, kind: str, ts: TransformedSample, spec: TestSpec,
               bw: dict, cache: Optional[NullCache], n_jobs: int) -> TestResult:
    cache = cache if cache is not None else get_default_cache()
    key = NullKey(ts.n, ts.dims, spec.reps_B, spec.null_seed, kind)
    table = cache_get_or_build(cache, key, n_jobs=n_jobs)
    pval = p_value(table, stat.value)
    alphas = sorted(set(REPORT_ALPHAS) | {spec.alpha})
    crit = {a: critical_value(table, a) for a in alphas}
    return TestResult(stat, pval, crit, pval <= spec.alpha, ts.n, spec.alpha, bw, spec.seed,
                      key, _spec_config(spec))


def run_test(data: Dataset, spec: TestSpec, cache: Optional[NullCache] = None,
             n_jobs: int = 1) -> TestResult:
    """Test ``x`` independent of ``y`` given ``z`` on ``data``.

    An empty ``z`` selection falls through to :func:`run_unconditional_test`.
    """
    if not spec.z_cols:
        return run_unconditional_test(data, spec.x_cols, spec.y_cols, spec, cache, n_jobs)
    _check_n(data, spec)
    ts, bw = transform_dataset(data, spec)
    stat, kind = compute_statistic(ts)
    return _calibrate(stat, kind, ts, spec, bw, cache, n_jobs)


def run_unconditional_test(data: Dataset, x_cols, y_cols, spec: TestSpec,
                           cache: Optional[NullCache] = None, n_jobs: int = 1) -> TestResult:
    """Test ``x`` independent of ``y`` with no conditioning set."""
    spec = spec.with_columns(x_cols, y_cols, ())
    _check_n(data, spec)
    ts, bw = transform_dataset(data, spec)
    stat, kind = compute_statistic(ts)
    return _calibrate(stat, kind, ts, spec, bw, cache, n_jobs)


class ConditionalIndependenceTest(BaseEstimator):
    """Estimator-style front end to :func:`run_test`.

    ``fit(X, Y, Z)`` runs the test on arrays and stores the outcome in
    ``result_``, ``statistic_``, ``pvalue_`` and ``reject_``.

    Parameters
    ----------
    alpha : float
    kernel : {"gaussian", "epanechnikov"}
    bandwidth_scale : float
    bandwidth : float, optional
    cond_scale : {"rank", "raw"}
        Scale on which conditioning columns are smoothed.
    n_reps : int
        Null table size B.
    seed : int
        Seed for randomized transforms of discrete data.
    null_seed : int
    discrete : bool
        Treat every column as discrete (integer coded).
    cache : NullCache, optional
    """

    def __init__(self, alpha=0.05, kernel="gaussian", bandwidth_scale=1.0, bandwidth=None,
                 cond_scale="rank", n_reps=DEFAULT_REPS, seed=0, null_seed=0, discrete=False,
                 cache=None):
        self.alpha = alpha
        self.kernel = kernel
        self.bandwidth_scale = bandwidth_scale
        self.bandwidth = bandwidth
        self.cond_scale = cond_scale
        self.n_reps = n_reps
        self.seed = seed
        self.null_seed = null_seed
        self.discrete = discrete
        self.cache = cache

    def fit(self, X, Y, Z=None):
        blocks = {"x": X, "y": Y, "z": Z}
        cols, names = [], {}
        for label, arr in blocks.items():
            if arr is None:
                names[label] = ()
                continue
            arr = check_array(arr, ensure_2d=False, ensure_min_samples=2)
            arr = arr[:, None] if arr.ndim == 1 else arr
            names[label] = tuple(f"{label}{k + 1}" for k in range(arr.shape[1]))
            cols.append(arr)
        lengths = {c.shape[0] for c in cols}
        if len(lengths) != 1:
            raise DataError("X, Y and Z must have the same number of rows")
        all_names = [c for label in ("x", "y", "z") for c in names[label]]
        data = Dataset.from_array(np.hstack(cols), all_names,
                                  discrete=all_names if self.discrete else ())
        spec = TestSpec(names["x"], names["y"], names["z"], self.alpha,
                        KernelSpec(self.kernel),
                        BandwidthPolicy(self.bandwidth_scale, self.bandwidth, self.cond_scale),
                        self.n_reps, self.seed, self.null_seed)
        self.result_ = run_test(data, spec, cache=self.cache)
        self.statistic_ = self.result_.statistic.value
        self.pvalue_ = self.result_.p_value
        self.reject_ = self.result_.reject
        return self

    def summary(self) -> dict:
        check_is_fitted(self, "result_")
        return self.result_.to_dict()
