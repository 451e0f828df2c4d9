import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rosencit.exceptions import BudgetError, UsageError
from rosencit.nulldist import (
    NullCache,
    NullKey,
    NullTable,
    cache_get_or_build,
    critical_value,
    p_value,
    replicate_rng,
    simulate_null,
)
from rosencit.statistic import rho_hat
from rosencit.transforms import TransformedSample


def table_of(values):
    return NullTable(10, (1, 1, 1), len(values), 0, "rho_normalized", np.sort(values))


def test_single_replicate_table():
    t = simulate_null(20, B=1, seed=4)
    rng = replicate_rng(4, 0)
    u, v, w = rng.random((20, 1)), rng.random((20, 1)), rng.random((20, 1))
    assert t.stats[0] == rho_hat(TransformedSample(u, v, w)).value


def test_determinism_and_worker_independence():
    a = simulate_null(30, (1, 2, 1), 40, 7, "rho_multi_unnormalized")
    b = simulate_null(30, (1, 2, 1), 40, 7, "rho_multi_unnormalized")
    c = simulate_null(30, (1, 2, 1), 40, 7, "rho_multi_unnormalized", n_jobs=2)
    np.testing.assert_array_equal(a.stats, b.stats)
    np.testing.assert_array_equal(a.stats, c.stats)
    a.validate()
    assert not np.array_equal(a.stats, simulate_null(30, (1, 2, 1), 40, 8,
                                                     "rho_multi_unnormalized").stats)


def test_critical_value_examples():
    t = table_of([0.1, 0.2, 0.3])
    assert critical_value(t, 1 / 3) == 0.2
    assert critical_value(t, 1e-9) == 0.3
    big = table_of(np.arange(1000.0))
    assert critical_value(big, 0.05) == 949.0  # the 950th order statistic


def test_p_value_examples():
    t = table_of([0.1, 0.2, 0.3])
    assert p_value(t, 0.25) == 0.5
    assert p_value(t, 5.0) == 1 / 4
    assert p_value(t, -1.0) == 1.0
    assert p_value(t, 0.2) == 0.75  # ties count as at least as extreme


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.floats(-6, 6), st.floats(0, 3))
def test_p_value_monotone_and_in_range(stats, obs, step):
    t = table_of(np.array(stats))
    p1, p2 = p_value(t, obs), p_value(t, obs + step)
    assert 0 < p2 <= p1 <= 1


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=50), st.floats(-6, 6),
       st.floats(0.001, 0.999))
def test_p_rule_implies_critical_value_rule(stats, obs, alpha):
    t = table_of(np.array(stats))
    if p_value(t, obs) <= alpha:
        assert obs > critical_value(t, alpha)


def test_quantile_stable_across_seeds():
    q = [100 * critical_value(simulate_null(100, B=1000, seed=s), 0.05) for s in (1, 2)]
    assert abs(q[0] - q[1]) / q[0] < 0.10


@pytest.mark.slow
def test_size_calibration_on_exact_uniforms():
    table = simulate_null(100, B=1000, seed=0)
    crit = critical_value(table, 0.05)
    R = 500
    hits = 0
    for r in range(R):
        u, v, w = np.random.default_rng([99, r]).random((3, 100))
        hits += rho_hat(TransformedSample(u, v, w)).value > crit
    assert abs(hits / R - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / R)


def test_key_validation():
    with pytest.raises(UsageError):
        NullKey(10, (1, 1, 2), 10, 0, "rho_normalized")
    with pytest.raises(UsageError):
        NullKey(10, (1, 1, 0), 10, 0, "rho_multi_unnormalized")
    with pytest.raises(UsageError):
        NullKey(10, (1, 1, 1), 10, 0, "rho_unconditional")
    with pytest.raises(UsageError):
        NullKey(10, (1, 1, 1), 10, 0, "other")
    a = NullKey(10, (1, 1, 1), 10, 0, "rho_normalized")
    b = NullKey(10, (1, 1, 1), 10, 1, "rho_normalized")
    assert a.filename != b.filename


def test_budget_guard():
    with pytest.raises(BudgetError):
        simulate_null(1000, B=1000, work_ceiling=1e8)
    with pytest.raises(UsageError):
        simulate_null(1, B=10)


def test_cache_cold_then_warm(tmp_path):
    key = NullKey(25, (1, 1, 1), 30, 3, "rho_normalized")
    cold = NullCache(tmp_path)
    t1 = cache_get_or_build(cold, key)
    assert cold.builds == 1
    path = cold.path_for(key)
    raw = path.read_bytes()
    doc = json.loads(raw)
    assert set(doc) == {"format_version", "n", "p", "q", "r", "B", "seed",
                        "statistic_kind", "stats"}
    warm = NullCache(tmp_path)
    t2 = cache_get_or_build(warm, key)
    assert warm.builds == 0
    np.testing.assert_array_equal(t1.stats, t2.stats)
    assert path.read_bytes() == raw


def test_cache_recovers_from_truncated_file(tmp_path):
    key = NullKey(25, (1, 1, 1), 30, 3, "rho_normalized")
    store = NullCache(tmp_path)
    good = cache_get_or_build(store, key)
    path = store.path_for(key)
    path.write_text(path.read_text()[:50])
    fresh = NullCache(tmp_path)
    with pytest.warns(UserWarning, match="corrupt"):
        rebuilt = cache_get_or_build(fresh, key)
    assert fresh.builds == 1
    np.testing.assert_array_equal(rebuilt.stats, good.stats)
    assert NullTable.from_dict(json.loads(path.read_text())).key == key


def test_cache_distinct_seeds(tmp_path):
    store = NullCache(tmp_path)
    a = cache_get_or_build(store, NullKey(20, (1, 1, 1), 10, 0, "rho_normalized"))
    b = cache_get_or_build(store, NullKey(20, (1, 1, 1), 10, 1, "rho_normalized"))
    assert store.builds == 2 and not np.array_equal(a.stats, b.stats)
    assert len(list(tmp_path.glob("*.json"))) == 2


def test_unwritable_cache_falls_back(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    store = NullCache(blocker / "sub")
    with pytest.warns(UserWarning, match="not writable"):
        cache_get_or_build(store, NullKey(20, (1, 1, 1), 5, 0, "rho_normalized"))
    assert not store.persist
    cache_get_or_build(store, NullKey(20, (1, 1, 1), 5, 0, "rho_normalized"))
    assert store.builds == 1


def test_from_dict_rejects_bad_documents():
    good = simulate_null(10, B=5).to_dict()
    for bad in ({**good, "format_version": 9}, {**good, "stats": good["stats"][:-1]},
                {**good, "stats": good["stats"][::-1]}):
        with pytest.raises(ValueError):
            NullTable.from_dict(bad)
