"""Simulation models and experiment drivers for size, power and DAG recovery.

Every replicate draws from its own generator derived from
``(seed, model number, replicate index)``, so reports are reproducible and do
not depend on which other models are run alongside or on worker count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .causal import PartialCorrelationTester, RhoTester, pc, tpr_fpr
from .citest import TestSpec, run_test, transform_dataset
from .exceptions import BudgetError, UsageError
from .kernels import BandwidthPolicy, KernelSpec
from .nulldist import NullCache, get_default_cache, simulate_null
from .statistic import rho0_hat, rho_hat
from .transforms import Dataset

MODEL_IDS = tuple(f"M{k}" for k in range(1, 19))
NULL_MODELS = ("M1", "M7", "M13")
#: ceiling on total ``reps * n**2`` pair evaluations of one bench run
DEFAULT_BENCH_CEILING = 5e10


def model_columns(model_id: str) -> tuple:
    """``(x_cols, y_cols, z_cols)`` of the dataset produced by :func:`gen_model`."""
    k = _model_number(model_id)
    if k <= 6:
        return ("x",), ("y",), ("z",)
    if k <= 12:
        return ("x",), ("y",), ("z1", "z2")
    return ("x1", "x2"), ("y1", "y2"), ("z1", "z2")


def _model_number(model_id: str) -> int:
    if model_id not in MODEL_IDS:
        raise UsageError(f"unknown model {model_id!r}; expected one of M1..M18")
    return int(model_id[1:])


def _log(a):
    # log of a nonpositive argument is undefined in the model displays
    # (probability ~1e-5 per draw for the +10 shifts); use |a|.
    return np.log(np.abs(a))


def gen_model(model_id: str, n: int, seed=None) -> Dataset:
    """Draw ``n`` rows from simulation model M1..M18.

    M1-M3 use standard normal ingredients; M4-M6 use Cauchy (t with one degree
    of freedom) ``X1``, ``X2`` with a normal ``Z``; M7-M12 add a second
    conditioning coordinate; in M13-M18 ``x`` and ``y`` are bivariate and their
    second coordinates are independent normal noise.
    """
    k = _model_number(model_id)
    if n < 2:
        raise UsageError("n must be >= 2")
    rng = np.random.default_rng(seed)
    if k <= 6:
        if k <= 3:
            x1, x2 = rng.standard_normal(n), rng.standard_normal(n)
        else:
            x1, x2 = rng.standard_t(1, n), rng.standard_t(1, n)
        z = rng.standard_normal(n)
        if k == 1:
            x, y = x1 + z, x2 + z
        elif k == 2:
            x, y = x1 + z, x1 ** 2 + z
        elif k == 3:
            x, y = x1 + z, 0.5 * np.sin(np.pi * x1) + z
        elif k == 4:
            x, y = x1 + z, x1 + x2 + z
        elif k == 5:
            x, y = np.sqrt(np.abs(x1 * z)) + z, 0.25 * x1 ** 2 * x2 ** 2 + x2 + z
        else:
            x, y = np.log(np.abs(x1 * z) + 1.0) + z, 0.5 * (x1 ** 2 * z) + x2 + z
        return Dataset.from_columns({"x": x, "y": y, "z": z})
    if k <= 12:
        x1, x2 = rng.standard_normal(n), rng.standard_normal(n)
        z1, z2 = rng.standard_normal(n), rng.standard_normal(n)
        s = z1 + z2
        if k == 7:
            x, y = x1 + s, x2 + s
        elif k == 8:
            x, y = x1 ** 2 + s, _log(x1 + 10.0) + s
        elif k == 9:
            x, y = np.tanh(x1) + s, np.log(x1 ** 2 + 10.0) + s
        elif k == 10:
            x, y = x1 ** 2 + s, _log(x1 * z1 + 10.0) + s
        elif k == 11:
            x, y = x1 + s, np.sin(x1 * z1) + s
        else:
            x, y = _log(x1 * z1 + 10.0) + s, np.exp(x1 * z2) + s
        return Dataset.from_columns({"x": x, "y": y, "z1": z1, "z2": z2})
    xt = rng.standard_normal(n)
    x2 = rng.standard_normal(n)
    y2 = rng.standard_normal(n)
    z1, z2 = rng.standard_normal(n), rng.standard_normal(n)
    s = z1 + z2
    if k == 13:
        x1, y1 = xt + z1, s
    elif k == 14:
        x1, y1 = _log(xt * z1 + 100.0) + s, np.exp(xt * z1) + s
    elif k == 15:
        x1, y1 = np.log(xt ** 2 + 100.0) + s, 0.1 * xt ** 3 + s
    elif k == 16:
        x1, y1 = _log(xt * z1 + 100.0) + s, 0.5 * xt ** 3 * z1 ** 3 + s
    elif k == 17:
        x1, y1 = 0.1 * np.exp(xt) + s, np.sin(xt) + np.abs(xt) + s
    else:
        x1, y1 = np.tanh(xt) + s, 0.5 * np.log(xt ** 2 + 100.0) + 0.5 * x2 + s
    return Dataset.from_columns({"x1": x1, "x2": x2, "y1": y1, "y2": y2, "z1": z1, "z2": z2})


def replicate_seed(seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=tuple(int(p) for p in path))


@dataclass
class BenchReport:
    """Rejection frequencies (one row per model, n, alpha and bandwidth scale)."""

    kind: str
    n: int
    reps: int
    seed: int
    rows: list = field(default_factory=list)
    wall_seconds: float = 0.0
    config: dict = field(default_factory=dict)

    def frequency(self, model: str, alpha: float = 0.05, c: float = 1.0) -> float:
        for row in self.rows:
            if row["model"] == model and row["alpha"] == alpha and row["c"] == c:
                return row["frequency"]
        raise KeyError((model, alpha, c))

    def to_dict(self, timing: bool = False) -> dict:
        """Document form; wall-clock time is left out unless ``timing`` is set
        so that repeated runs give identical documents."""
        doc = {"kind": self.kind, "n": self.n, "reps": self.reps, "seed": self.seed,
               "rows": self.rows, "config": self.config}
        if timing:
            doc["wall_seconds"] = round(self.wall_seconds, 3)
        return doc

    def to_text(self) -> str:
        head = f"{'model':<6} {'n':>5} {'alpha':>6} {'c':>5} {'reps':>5} {'freq':>7}"
        lines = [f"# {self.kind} seed={self.seed} reps={self.reps} n={self.n}", head,
                 "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r['model']:<6} {self.n:>5} {r['alpha']:>6.3f} {r['c']:>5.2f} "
                         f"{r['reps']:>5} {r['frequency']:>7.3f}")
        return "\n".join(lines) + "\n"


def _one_rep(model_id, n, seed, rep, spec_kw, cache):
    k = _model_number(model_id)
    data = gen_model(model_id, n, replicate_seed(seed, k, rep))
    x, y, z = model_columns(model_id)
    spec = TestSpec(x, y, z, **spec_kw)
    return run_test(data, spec, cache=cache).p_value


def _check_budget(n_models, n, reps, ceiling):
    work = float(n_models) * reps * n * n
    if work > ceiling:
        raise BudgetError(f"bench work {work:.3g} exceeds the ceiling {ceiling:.3g}")


def _model_pvalues(model_id, n, reps, seed, spec_kw, cache, n_jobs):
    if n_jobs == 1:
        return [_one_rep(model_id, n, seed, r, spec_kw, cache) for r in range(reps)]
    # warm the null table once so workers share it
    _one_rep(model_id, n, seed, 0, spec_kw, cache)
    return Parallel(n_jobs=n_jobs)(
        delayed(_one_rep)(model_id, n, seed, r, spec_kw, cache) for r in range(reps))


def size_power_run(ids: Sequence[str], n: int, alphas=(0.05, 0.10), reps: int = 500,
                   seed: int = 0, *, kernel: KernelSpec = KernelSpec(), scale_c: float = 1.0,
                   cond_scale: str = "rank", reps_B: int = 1000, null_seed: int = 0, cache: Optional[NullCache] = None,
                   n_jobs: int = 1, work_ceiling: float = DEFAULT_BENCH_CEILING) -> BenchReport:
    """Empirical rejection frequency of the test for each model and level."""
    return _sweep(ids, n, [scale_c], alphas, reps, seed, kernel, cond_scale, reps_B, null_seed,
                  cache, n_jobs, work_ceiling, kind="size_power")


def bandwidth_sweep(ids: Sequence[str], n: int, c_values: Sequence[float], reps: int = 500,
                    seed: int = 0, *, alphas=(0.05,), kernel: KernelSpec = KernelSpec(),
                    cond_scale: str = "rank", reps_B: int = 1000, null_seed: int = 0, cache: Optional[NullCache] = None,
                    n_jobs: int = 1,
                    work_ceiling: float = DEFAULT_BENCH_CEILING) -> BenchReport:
    """Rejection frequency per model and bandwidth multiplier ``c``.

    Datasets depend only on ``(seed, model, replicate)``, so the ``c = 1`` column
    equals :func:`size_power_run` with the same seed.
    """
    if any(not c > 0 for c in c_values):
        raise UsageError("bandwidth scales must be positive")
    return _sweep(ids, n, list(c_values), alphas, reps, seed, kernel, cond_scale, reps_B,
                  null_seed, cache, n_jobs, work_ceiling, kind="bandwidth_sweep")


def _sweep(ids, n, c_values, alphas, reps, seed, kernel, cond_scale, reps_B, null_seed, cache,
           n_jobs, work_ceiling, kind):
    if reps < 1:
        raise UsageError("reps must be >= 1")
    _check_budget(len(ids) * len(c_values), n, reps, work_ceiling)
    cache = cache if cache is not None else get_default_cache()
    t0 = time.perf_counter()
    rows = []
    for model_id in ids:
        for c in c_values:
            spec_kw = dict(alpha=max(alphas), kernel=kernel, bandwidth=BandwidthPolicy(c, None, cond_scale),
                           reps_B=reps_B, seed=seed, null_seed=null_seed)
            pvals = np.asarray(_model_pvalues(model_id, n, reps, seed, spec_kw, cache, n_jobs))
            for a in alphas:
                hits = int(np.sum(pvals <= a))
                rows.append({"model": model_id, "n": n, "alpha": a, "c": c, "reps": reps,
                             "rejections": hits, "frequency": hits / reps})
    config = {"models": list(ids), "alphas": list(alphas), "c_values": list(c_values),
              "kernel": kernel.family, "cond_scale": cond_scale, "reps_B": reps_B,
              "null_seed": null_seed}
    return BenchReport(kind, n, reps, seed, rows, time.perf_counter() - t0, config)


def random_dag_instance(p: int, edge_prob: float, n: int, noise: str = "normal", seed=None):
    """Random linear SEM over ``X1..Xp`` with edges only from lower to higher index.

    Returns
    -------
    truth : ndarray of int, shape (p, p)
        ``truth[k, j] == 1`` iff ``Xk -> Xj``.
    weights : ndarray, shape (p, p)
        Edge weights drawn from U(0.1, 1), zero where there is no edge.
    data : Dataset
    """
    if p < 2:
        raise UsageError("p must be >= 2")
    if noise not in ("normal", "uniform"):
        raise UsageError(f"unknown noise {noise!r}")
    rng = np.random.default_rng(seed)
    upper = np.triu(np.ones((p, p), dtype=bool), 1)
    present = (rng.random((p, p)) < edge_prob) & upper
    weights = np.where(present, rng.uniform(0.1, 1.0, (p, p)), 0.0)
    eps = rng.standard_normal((n, p)) if noise == "normal" else rng.random((n, p))
    x = np.empty((n, p))
    for j in range(p):
        x[:, j] = x[:, :j] @ weights[:j, j] + eps[:, j]
    names = [f"X{j + 1}" for j in range(p)]
    return present.astype(int), weights, Dataset.from_array(x, names)


def dag_study(p: int = 5, edge_prob: float = 0.4, n: int = 200, reps: int = 100,
              noise: str = "normal", alpha: float = 0.05, test: str = "rho", seed: int = 0,
              cache: Optional[NullCache] = None, check_order: bool = False,
              cond_scale: str = "rank") -> dict:
    """Mean skeleton TPR/FPR of PC over random DAG instances.

    With ``check_order`` every replicate is re-run on a column permutation and
    the skeleton edge sets are compared.
    """
    cache = cache if cache is not None else get_default_cache()
    tprs, fprs = [], []
    cyclic = 0
    order_mismatch = 0
    for rep in range(reps):
        truth, _, data = random_dag_instance(p, edge_prob, n, noise, replicate_seed(seed, rep))
        tester = (RhoTester(alpha, bandwidth=BandwidthPolicy(1.0, None, cond_scale), cache=cache)
                  if test == "rho" else PartialCorrelationTester())
        est = pc(data, alpha, tester=tester)
        cyclic += est.has_directed_cycle()
        tpr, fpr = tpr_fpr(est, truth, data.names)
        tprs.append(tpr)
        fprs.append(fpr)
        if check_order:
            perm = np.random.default_rng(replicate_seed(seed, rep, 1)).permutation(p)
            shuffled = data.subset([data.names[k] for k in perm])
            est2 = pc(shuffled, alpha, tester=tester)
            order_mismatch += est2.skeleton_edges() != est.skeleton_edges()
    return {
        "p": p, "edge_prob": edge_prob, "n": n, "reps": reps, "noise": noise, "alpha": alpha,
        "test": test, "cond_scale": cond_scale, "seed": seed,
        "mean_tpr": float(np.nanmean(tprs)), "mean_fpr": float(np.nanmean(fprs)),
        "cyclic_outputs": int(cyclic), "order_mismatches": int(order_mismatch),
    }


def _ingredient(rng, kind, size):
    if kind == "normal":
        return rng.standard_normal(size)
    if kind == "uniform":
        return rng.random(size)
    if kind == "exponential":
        return rng.exponential(1.0, size)
    raise UsageError(f"unknown ingredient {kind!r}")


def null_distribution_study(n: int = 100, reps: int = 1000, ingredient: str = "normal",
                            statistic_kind: str = "rho", scale_c: float = 1.0, seed: int = 0,
                            kernel: KernelSpec = KernelSpec(),
                            cond_scale: str = "rank") -> np.ndarray:
    """``n * statistic`` through the full pipeline on ``X = Z + e1, Y = Z + e2``.

    ``statistic_kind`` is ``"rho"`` or ``"rho0"``; ``Z``, ``e1`` and ``e2`` are
    i.i.d. draws from ``ingredient``.
    """
    if statistic_kind not in ("rho", "rho0"):
        raise UsageError("statistic_kind must be 'rho' or 'rho0'")
    stat = rho_hat if statistic_kind == "rho" else rho0_hat
    spec = TestSpec(("x",), ("y",), ("z",), kernel=kernel, bandwidth=BandwidthPolicy(scale_c, None, cond_scale))
    out = np.empty(reps)
    for rep in range(reps):
        rng = np.random.default_rng(replicate_seed(seed, rep))
        z, e1, e2 = (_ingredient(rng, ingredient, n) for _ in range(3))
        data = Dataset.from_columns({"x": z + e1, "y": z + e2, "z": z})
        ts, _ = transform_dataset(data, spec)
        out[rep] = n * stat(ts).value
    return out


def null_reference(n: int = 100, reps: int = 1000, seed: int = 12345) -> np.ndarray:
    """``n * statistic`` on exact uniforms (the simulated reference law)."""
    return n * simulate_null(n, (1, 1, 1), reps, seed, "rho_normalized").stats
