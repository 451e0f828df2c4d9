"""Acceptance criteria 1-11, each checked at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line; the lines are repeated in the
terminal summary of the pytest run.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import ACCEPTANCE_LINES
from rosencit.citest import TestSpec, run_test
from rosencit.cli import main
from rosencit.simbench import (
    bandwidth_sweep,
    dag_study,
    gen_model,
    null_distribution_study,
    null_reference,
    size_power_run,
)
from rosencit.statistic import C0, rho0_hat, rho_hat, rho_hat_multi, s0
from rosencit.transforms import Dataset, TransformedSample

E = math.e
INGREDIENTS = ("normal", "uniform", "exponential")


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def reference():
    return null_reference(100, 1000)


def test_criterion_01_constants():
    t0 = time.perf_counter()
    f = lambda v, u: s0(u, v) ** 2
    lower, _ = integrate.dblquad(f, 0, 1, 0, lambda u: u, epsabs=1e-13)
    upper, _ = integrate.dblquad(f, 0, 1, lambda u: u, 1, epsabs=1e-13)
    es2 = lower + upper
    closed = 6.5 * E ** -2 - 20 / E + 6.5
    elapsed = time.perf_counter() - t0
    ok = abs(es2 - closed) < 1e-5 and abs(1 / C0 - 2 / E * closed) < 1e-6 and elapsed < 1
    report(1, ok, f"E s0^2={es2:.10f} closed={closed:.10f} 1/c0={1 / C0:.10f} "
                  f"({elapsed:.2f}s)")


def test_criterion_02_degeneracy():
    lower, _ = integrate.dblquad(lambda v, u: s0(u, v), 0, 1, 0, lambda u: u, epsabs=1e-13)
    upper, _ = integrate.dblquad(lambda v, u: s0(u, v), 0, 1, lambda u: u, 1, epsabs=1e-13)
    total = lower + upper
    n = 10_000
    u = np.sort(np.random.default_rng(0).random(n))
    # sum over i < j of exp(-(u_j - u_i)) for sorted u, in O(n)
    prefix = np.concatenate([[0.0], np.cumsum(np.exp(u))[:-1]])
    pair_exp = 2.0 * np.sum(np.exp(-u) * prefix)
    marg = np.sum(np.exp(-u) + np.exp(u - 1))
    off = pair_exp + 2 * (n - 1) * marg + n * (n - 1) * (2 / E - 4)
    mean = off / (n * (n - 1))
    ok = abs(total) < 1e-8 and abs(mean) < 1e-2
    report(2, ok, f"integral={total:.2e} off-diagonal mean (n=1e4)={mean:.2e}")


def _naive_pair(u, v, w):
    n = len(u)

    def m(row):
        out = 1.0
        for a in row:
            out *= 2 - math.exp(-a) - math.exp(a - 1)
        return out

    def a_term(x, i, j):
        d = sum(abs(p - q) for p, q in zip(x[i], x[j]))
        return math.exp(-d) + (2 / E) ** len(x[i]) - m(x[i]) - m(x[j])

    tot = 0.0
    for i in range(n):
        for j in range(n):
            dw = sum(abs(p - q) for p, q in zip(w[i], w[j]))
            tot += a_term(u, i, j) * a_term(v, i, j) * math.exp(-dw)
    return tot / n ** 2


def _naive_rho0(u, v, w):
    n = len(u)
    joint = sum(math.exp(-abs(u[i] - u[j]) - abs(v[i] - v[j]) - abs(w[i] - w[j]))
                for i in range(n) for j in range(n))
    m = lambda a: 2 - math.exp(-a) - math.exp(a - 1)
    prod = sum(m(u[i]) * m(v[i]) * m(w[i]) for i in range(n))
    return C0 * (joint / n ** 2 + 8 * E ** -3 - 2 * prod / n)


def test_criterion_03_oracle_equivalence():
    rho_hat_multi(TransformedSample(*np.random.default_rng(0).random((3, 3, 1))))  # warm
    worst = 0.0
    t0 = time.perf_counter()
    for seed in range(50):
        r = np.random.default_rng([3, seed])
        n = int(r.integers(2, 9))
        p, q, k = (int(d) for d in r.integers(1, 4, 3))
        u, v, w = r.random((n, p)), r.random((n, q)), r.random((n, k))
        worst = max(worst, abs(rho_hat_multi(TransformedSample(u, v, w)).value
                               - _naive_pair(u.tolist(), v.tolist(), w.tolist())))
        u1, v1, w1 = u[:, 0], v[:, 0], w[:, 0]
        ts = TransformedSample(u1, v1, w1)
        naive = C0 * _naive_pair(u1[:, None].tolist(), v1[:, None].tolist(),
                                 w1[:, None].tolist())
        worst = max(worst, abs(rho_hat(ts).value - naive),
                    abs(rho0_hat(ts).value - _naive_rho0(u1, v1, w1)))
    elapsed = time.perf_counter() - t0
    report(3, worst < 1e-12 and elapsed < 1, f"max abs diff={worst:.1e} ({elapsed:.2f}s)")


def _ks_table(reference, scales):
    out = {}
    for c in scales:
        for ing in INGREDIENTS:
            sample = null_distribution_study(100, 1000, ing, "rho", scale_c=c, seed=1)
            out[(c, ing)] = stats.ks_2samp(sample, reference).statistic
    return out


@pytest.mark.slow
def test_criterion_04_distribution_free(reference):
    ks = _ks_table(reference, [1.0])
    ok = max(ks.values()) < 0.06
    report(4, ok, "KS " + " ".join(f"{ing}={d:.3f}" for (_, ing), d in ks.items())
           + " (bound 0.06)")


@pytest.mark.slow
def test_criterion_05_bandwidth_insensitivity(reference, cache):
    ks = _ks_table(reference, [0.5, 2.0])
    sweep = bandwidth_sweep(["M2"], 100, [0.5, 1.0, 1.5], reps=500, seed=0, cache=cache)
    power = {c: sweep.frequency("M2", 0.05, c) for c in (0.5, 1.0, 1.5)}
    ok = max(ks.values()) < 0.06 and min(power.values()) >= 0.99
    report(5, ok, "KS " + " ".join(f"c={c:g}/{ing}={d:.3f}" for (c, ing), d in ks.items())
           + "; M2 power " + " ".join(f"c={c:g}:{p:.3f}" for c, p in power.items()))


@pytest.mark.slow
def test_criterion_06_univariate_table(cache):
    rep = size_power_run(["M1", "M2", "M3", "M4"], 100, (0.05,), reps=500, seed=0, cache=cache)
    f = {m: rep.frequency(m) for m in ("M1", "M2", "M3", "M4")}
    ok = 0.02 <= f["M1"] <= 0.08 and f["M2"] >= 0.99 and f["M3"] >= 0.90 and f["M4"] >= 0.99
    report(6, ok, " ".join(f"{m}={v:.3f}" for m, v in f.items())
           + " (M1 in [0.02,0.08], M2>=0.99, M3>=0.90, M4>=0.99)")


@pytest.mark.slow
def test_criterion_07_bivariate_tables(cache):
    rep = size_power_run(["M7", "M9", "M13", "M14"], 100, (0.05,), reps=500, seed=0,
                         cache=cache)
    f = {m: rep.frequency(m) for m in ("M7", "M9", "M13", "M14")}
    ok = (0.02 <= f["M7"] <= 0.08 and f["M9"] >= 0.95 and f["M13"] <= 0.08
          and f["M14"] >= 0.99)
    report(7, ok, " ".join(f"{m}={v:.3f}" for m, v in f.items())
           + " (M7 in [0.02,0.08], M9>=0.95, M13<=0.08, M14>=0.99)")


def test_criterion_08_monotone_invariance(cache):
    spec = TestSpec(("x",), ("y",), ("z",))
    worst, p_changed = 0.0, 0
    for model in ("M1", "M2", "M3"):
        for seed in range(20):
            data = gen_model(model, 100, [8, seed])
            vals = data.values.copy()
            vals[:, 0] = np.exp(vals[:, 0])
            vals[:, 1] = np.arctan(vals[:, 1])
            a = run_test(data, spec, cache=cache)
            b = run_test(Dataset(vals, data.names, data.kinds), spec, cache=cache)
            worst = max(worst, abs(a.statistic.value - b.statistic.value))
            p_changed += a.p_value != b.p_value
    report(8, worst < 1e-12 and p_changed == 0,
           f"max |d stat|={worst:.1e}, p-values changed in {p_changed}/60 runs")


@pytest.mark.slow
def test_criterion_09_causal_discovery(cache):
    res = dag_study(5, 0.4, 200, 100, "normal", 0.05, "rho", seed=0, cache=cache,
                    check_order=True)
    ok = (res["mean_tpr"] >= 0.60 and res["mean_fpr"] <= 0.16 and res["cyclic_outputs"] == 0
          and res["order_mismatches"] == 0)
    report(9, ok, f"TPR={res['mean_tpr']:.3f} FPR={res['mean_fpr']:.3f} "
                  f"cyclic={res['cyclic_outputs']} order mismatches={res['order_mismatches']}"
                  " (TPR>=0.60, FPR<=0.16)")


def test_criterion_10_performance(cache):
    data = gen_model("M1", 100, 0)
    spec = TestSpec(("x",), ("y",), ("z",))
    run_test(data, spec, cache=cache)  # compile and cache the table
    per_test = min(_timed(lambda: run_test(data, spec, cache=cache)) for _ in range(20))
    times = []
    for n in (500, 1000, 2000):
        ts = TransformedSample(*np.random.default_rng(n).random((3, n)))
        rho_hat(ts)
        times.append(min(_timed(lambda: rho_hat(ts)) for _ in range(7)))
    ratios = [times[1] / times[0], times[2] / times[1]]
    ok = per_test < 0.05 and all(3 <= r <= 5 for r in ratios)
    report(10, ok, f"full test n=100 {1000 * per_test:.1f} ms; scaling ratios "
                   f"{ratios[0]:.2f}, {ratios[1]:.2f} (need <50 ms, 3-5x)")


def _timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def test_criterion_11_determinism(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ROSENCIT_CACHE_DIR", str(tmp_path / "cache"))
    d = gen_model("M3", 100, 2)
    csv = tmp_path / "d.csv"
    csv.write_text(",".join(d.names) + "\n"
                   + "\n".join(",".join(repr(v) for v in row) for row in d.values.tolist()))
    docs = {}
    runs = {
        "test": ["test", str(csv), "--x", "x", "--y", "y", "--z", "z", "--seed", "7"],
        "bench": ["bench", "--models", "M1,M2", "--n", "60", "--reps", "6", "--seed", "7"],
        "calibrate": ["calibrate", "--n", "60", "--dims", "1,1,2", "--reps", "300",
                      "--seed", "9"],
    }
    for name, argv in runs.items():
        for threads in ("1", "2", "1"):
            # fresh cache each time so tables are rebuilt with this worker count
            monkeypatch.setenv("ROSENCIT_CACHE_DIR", str(tmp_path / f"cache-{name}-{threads}"))
            import rosencit.nulldist as nd
            monkeypatch.setattr(nd, "_default_cache", None)
            out = tmp_path / f"{name}-{threads}-{len(docs.get(name, []))}.json"
            assert main(argv + ["--threads", threads, "--output", str(out)]) == 0
            docs.setdefault(name, []).append(out.read_bytes())
    capsys.readouterr()
    same = {name: len(set(blobs)) == 1 for name, blobs in docs.items()}
    json.loads(docs["test"][0])
    report(11, all(same.values()),
           " ".join(f"{k}={'identical' if v else 'DIFFERENT'}" for k, v in same.items())
           + " across 3 runs (threads 1, 2, 1)")
