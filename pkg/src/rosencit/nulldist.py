"""Monte-Carlo null tables for the transformed-sample statistics.

Under the null the transformed coordinates are i.i.d. uniform and mutually
independent, so the null law of each statistic depends only on ``n`` and the
block widths. Tables are simulated once per key and cached on disk.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from joblib import Parallel, delayed

from .exceptions import BudgetError, UsageError
from .statistic import rho_hat, rho_hat_multi, rho_unconditional
from .transforms import TransformedSample

logger = logging.getLogger(__name__)

StatisticKind = Literal["rho_normalized", "rho_multi_unnormalized", "rho_unconditional"]
KINDS = ("rho_normalized", "rho_multi_unnormalized", "rho_unconditional")

FORMAT_VERSION = 1
DEFAULT_REPS = 1000
#: ceiling on ``B * n**2`` pair evaluations for one table
DEFAULT_WORK_CEILING = 2e10
CACHE_ENV = "ROSENCIT_CACHE_DIR"


@dataclass(frozen=True)
class NullKey:
    n: int
    dims: tuple
    B: int
    seed: int
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.kind not in KINDS:
            raise UsageError(f"unknown statistic kind {self.kind!r}")
        _check_dims(self.dims, self.kind)

    @property
    def filename(self) -> str:
        p, q, r = self.dims
        return f"null_{self.kind}_n{self.n}_p{p}q{q}r{r}_B{self.B}_s{self.seed}.json"


@dataclass
class NullTable:
    """Sorted simulated null statistics for one key."""

    n: int
    dims: tuple
    B: int
    seed: int
    statistic_kind: str
    stats: np.ndarray

    @property
    def key(self) -> NullKey:
        return NullKey(self.n, self.dims, self.B, self.seed, self.statistic_kind)

    def to_dict(self) -> dict:
        p, q, r = self.dims
        return {
            "format_version": FORMAT_VERSION,
            "n": self.n, "p": p, "q": q, "r": r,
            "B": self.B, "seed": self.seed,
            "statistic_kind": self.statistic_kind,
            "stats": [float(s) for s in self.stats],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NullTable":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {doc.get('format_version')!r}")
        stats = np.asarray(doc["stats"], dtype=float)
        table = cls(int(doc["n"]), (int(doc["p"]), int(doc["q"]), int(doc["r"])),
                    int(doc["B"]), int(doc["seed"]), str(doc["statistic_kind"]), stats)
        table.validate()
        return table

    def validate(self) -> None:
        if self.stats.shape != (self.B,):
            raise ValueError(f"expected {self.B} stats, found {self.stats.shape}")
        if not np.all(np.isfinite(self.stats)):
            raise ValueError("non-finite null statistic")
        if np.any(np.diff(self.stats) < 0):
            raise ValueError("stats are not sorted")


def _check_dims(dims, kind) -> None:
    p, q, r = dims
    if p < 1 or q < 1 or r < 0:
        raise UsageError(f"invalid dims {dims}")
    if kind == "rho_normalized" and dims != (1, 1, 1):
        raise UsageError("rho_normalized tables need dims (1, 1, 1)")
    if kind == "rho_multi_unnormalized" and r < 1:
        raise UsageError("rho_multi_unnormalized tables need r >= 1")
    if kind == "rho_unconditional" and r != 0:
        raise UsageError("rho_unconditional tables need r = 0")


def statistic_for(kind: str):
    return {"rho_normalized": rho_hat,
            "rho_multi_unnormalized": rho_hat_multi,
            "rho_unconditional": rho_unconditional}[kind]


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for replicate ``index``; independent of how replicates are scheduled."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _simulate_chunk(n, dims, seed, kind, indices):
    stat = statistic_for(kind)
    p, q, r = dims
    out = np.empty(len(indices))
    for pos, b in enumerate(indices):
        rng = replicate_rng(seed, b)
        u = rng.random((n, p))
        v = rng.random((n, q))
        w = rng.random((n, r))
        out[pos] = stat(TransformedSample(u, v, w)).value
    return out


def simulate_null(n: int, dims=(1, 1, 1), B: int = DEFAULT_REPS, seed: int = 0,
                  kind: str = "rho_normalized", n_jobs: int = 1,
                  work_ceiling: float = DEFAULT_WORK_CEILING) -> NullTable:
    """Simulate ``B`` statistics on exact i.i.d. uniform coordinates.

    Each replicate draws ``u`` (n, p), ``v`` (n, q), ``w`` (n, r) from its own
    generator derived from ``(seed, replicate index)``, so the table does not
    depend on ``n_jobs``.
    """
    key = NullKey(int(n), tuple(dims), int(B), int(seed), kind)
    if key.n < 2:
        raise UsageError(f"null simulation needs n >= 2, got {n}")
    if key.B < 1:
        raise UsageError(f"null simulation needs B >= 1, got {B}")
    work = float(key.B) * key.n * key.n
    if work > work_ceiling:
        raise BudgetError(
            f"B * n^2 = {work:.3g} exceeds the work ceiling {work_ceiling:.3g}; "
            "lower B or raise the ceiling"
        )
    if n_jobs == 1:
        stats = _simulate_chunk(key.n, key.dims, key.seed, kind, range(key.B))
    else:
        chunks = np.array_split(np.arange(key.B), max(1, abs(n_jobs)) * 4)
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_simulate_chunk)(key.n, key.dims, key.seed, kind, c.tolist())
            for c in chunks if c.size
        )
        stats = np.concatenate(parts)
    return NullTable(key.n, key.dims, key.B, key.seed, kind, np.sort(stats))


def critical_value(table: NullTable, alpha: float) -> float:
    """Upper-alpha critical value: the ``ceil(B (1 - alpha))``-th smallest statistic."""
    if not 0.0 < alpha < 1.0:
        raise UsageError(f"alpha must lie in (0, 1), got {alpha}")
    k = math.ceil(table.B * (1.0 - alpha) - 1e-9)
    k = min(max(k, 1), table.B)
    return float(table.stats[k - 1])


def p_value(table: NullTable, observed: float) -> float:
    """Monte-Carlo p-value ``(1 + #{stats >= observed}) / (B + 1)``."""
    at_least = table.B - int(np.searchsorted(table.stats, observed, side="left"))
    return (1.0 + at_least) / (table.B + 1.0)


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "rosencit"


class NullCache:
    """Null tables held in memory and, when possible, in a directory.

    Parameters
    ----------
    directory : path, optional
        Defaults to ``$ROSENCIT_CACHE_DIR`` or ``~/.cache/rosencit``.
    persist : bool
        When False the cache never touches the filesystem.
    """

    def __init__(self, directory=None, persist: bool = True):
        self.persist = persist
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self._memory: dict = {}
        self.builds = 0

    def path_for(self, key: NullKey) -> Path:
        return self.directory / key.filename

    def load(self, key: NullKey) -> Optional[NullTable]:
        if key in self._memory:
            return self._memory[key]
        if not self.persist:
            return None
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            table = NullTable.from_dict(json.loads(path.read_text()))
            if table.key != key:
                raise ValueError("file contents do not match its key")
        except (ValueError, KeyError, TypeError) as exc:
            warnings.warn(f"corrupt null table {path.name} ({exc}); rebuilding", stacklevel=3)
            return None
        self._memory[key] = table
        return table

    def store(self, table: NullTable) -> None:
        self._memory[table.key] = table
        if not self.persist:
            return
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            with os.fdopen(fd, "w") as fh:
                json.dump(table.to_dict(), fh)
            os.replace(tmp, self.path_for(table.key))
        except OSError as exc:
            warnings.warn(f"null cache {self.directory} is not writable ({exc}); "
                          "keeping tables in memory only", stacklevel=3)
            self.persist = False


def cache_get_or_build(store: NullCache, key: NullKey, n_jobs: int = 1,
                       work_ceiling: float = DEFAULT_WORK_CEILING) -> NullTable:
    table = store.load(key)
    if table is not None:
        return table
    logger.info("simulating null table %s", key)
    table = simulate_null(key.n, key.dims, key.B, key.seed, key.kind, n_jobs=n_jobs,
                          work_ceiling=work_ceiling)
    store.builds += 1
    store.store(table)
    return table


_default_cache: Optional[NullCache] = None


def get_default_cache() -> NullCache:
    global _default_cache
    if _default_cache is None:
        _default_cache = NullCache()
    return _default_cache
