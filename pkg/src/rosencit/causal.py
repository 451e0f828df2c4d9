"""PC-algorithm structure learning with a pluggable CI oracle.

The skeleton search is the order-independent ("stable") variant: conditioning
sets at each depth come from a snapshot of the adjacencies taken at the start
of that depth. Nodes, candidate sets and test sides are always enumerated by
sorted column name, so results do not depend on the column order of the data.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator

from .citest import TestSpec, run_test
from .exceptions import DimensionError, OracleError, RosenCITError, UsageError
from .kernels import BandwidthPolicy, KernelSpec
from .nulldist import NullCache
from .transforms import Dataset

logger = logging.getLogger(__name__)

#: ``tester(data, x_name, y_name, cond_names) -> p-value``
CITester = Callable[[Dataset, str, str, tuple], float]


class RhoTester:
    """CI oracle backed by :func:`rosencit.citest.run_test`."""

    def __init__(self, alpha=0.05, kernel: KernelSpec = KernelSpec(),
                 bandwidth: BandwidthPolicy = BandwidthPolicy(), reps_B: int = 1000,
                 seed: int = 0, null_seed: int = 0, cache: Optional[NullCache] = None):
        self.template = TestSpec(("_x",), ("_y",), (), alpha, kernel, bandwidth, reps_B,
                                 seed, null_seed)
        self.cache = cache
        self.calls = 0

    def __call__(self, data: Dataset, x: str, y: str, cond: tuple) -> float:
        self.calls += 1
        spec = self.template.with_columns((x,), (y,), tuple(cond))
        return run_test(data, spec, cache=self.cache).p_value


class PartialCorrelationTester:
    """Gaussian partial-correlation oracle (Fisher z), a baseline for cross-checks."""

    def __init__(self):
        self.calls = 0

    def __call__(self, data: Dataset, x: str, y: str, cond: tuple) -> float:
        self.calls += 1
        return partial_correlation_pvalue(data.block((x, y) + tuple(cond)))


def partial_correlation_pvalue(block: np.ndarray) -> float:
    """p-value for zero partial correlation of columns 0 and 1 given the rest."""
    n, k = block.shape
    corr = np.corrcoef(block, rowvar=False)
    prec = np.linalg.pinv(corr)
    r = -prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1])
    r = float(np.clip(r, -1 + 1e-12, 1 - 1e-12))
    dof = n - (k - 2) - 3
    if dof < 1:
        return 1.0
    z = np.sqrt(dof) * np.arctanh(r)
    return float(2.0 * stats.norm.sf(abs(z)))


@dataclass
class Cpdag:
    """Partially directed graph.

    ``amat[i, j] == amat[j, i] == 1`` encodes ``i - j``; ``amat[i, j] == 1`` with
    ``amat[j, i] == 0`` encodes ``i -> j``. ``sepsets`` maps sorted name pairs to
    the separating set recorded when the edge was removed.
    """

    names: list
    amat: np.ndarray
    sepsets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.amat = np.asarray(self.amat, dtype=np.int8)
        p = len(self.names)
        if self.amat.shape != (p, p):
            raise DimensionError("adjacency matrix does not match the node list")
        if np.any(np.diag(self.amat)):
            raise ValueError("self-loops are not allowed")

    def copy(self) -> "Cpdag":
        return Cpdag(list(self.names), self.amat.copy(), dict(self.sepsets))

    def adjacent(self, i, j) -> bool:
        return bool(self.amat[i, j] or self.amat[j, i])

    def is_undirected(self, i, j) -> bool:
        return bool(self.amat[i, j] and self.amat[j, i])

    def is_directed(self, i, j) -> bool:
        return bool(self.amat[i, j] and not self.amat[j, i])

    def skeleton(self) -> np.ndarray:
        return (self.amat | self.amat.T).astype(bool)

    def skeleton_edges(self) -> set:
        sk = self.skeleton()
        return {frozenset((self.names[i], self.names[j]))
                for i, j in zip(*np.nonzero(np.triu(sk, 1)))}

    def directed_edges(self) -> list:
        return sorted((self.names[i], self.names[j])
                      for i, j in zip(*np.nonzero(self.amat)) if not self.amat[j, i])

    def undirected_edges(self) -> list:
        return sorted(tuple(sorted((self.names[i], self.names[j])))
                      for i, j in zip(*np.nonzero(np.triu(self.amat & self.amat.T, 1))))

    def has_directed_cycle(self) -> bool:
        directed = (self.amat == 1) & (self.amat.T == 0)
        return _has_cycle(directed)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.names),
            "directed": [list(e) for e in self.directed_edges()],
            "undirected": [list(e) for e in self.undirected_edges()],
            "sepsets": {f"{a}|{b}": list(s) for (a, b), s in sorted(self.sepsets.items())},
        }

    def to_adjacency_text(self) -> str:
        """One line per node: ``name: -> children ; -- neighbours``."""
        lines = []
        for i, name in enumerate(self.names):
            children = [self.names[j] for j in range(len(self.names)) if self.is_directed(i, j)]
            nbrs = [self.names[j] for j in range(len(self.names)) if self.is_undirected(i, j)]
            lines.append(f"{name}: -> {' '.join(children)} ; -- {' '.join(nbrs)}".rstrip())
        return "\n".join(lines) + "\n"

    def to_dot(self) -> str:
        out = ["digraph cpdag {"]
        out += [f'  "{n}";' for n in self.names]
        out += [f'  "{a}" -> "{b}";' for a, b in self.directed_edges()]
        out += [f'  "{a}" -> "{b}" [dir=none];' for a, b in self.undirected_edges()]
        out.append("}")
        return "\n".join(out) + "\n"


def _has_cycle(directed: np.ndarray) -> bool:
    indeg = directed.sum(axis=0).astype(int)
    queue = [i for i in range(len(indeg)) if indeg[i] == 0]
    seen = 0
    while queue:
        i = queue.pop()
        seen += 1
        for j in np.flatnonzero(directed[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
    return seen != directed.shape[0]


def _sep_key(a: str, b: str) -> tuple:
    return (a, b) if a <= b else (b, a)


def pc_skeleton(data: Dataset, alpha: float = 0.05, max_depth: Optional[int] = None,
                tester: Optional[CITester] = None):
    """Stable PC adjacency search.

    Returns
    -------
    skeleton : ndarray of bool, shape (p, p)
    sepsets : dict
        ``(name_a, name_b)`` with ``name_a < name_b`` -> tuple of separating names.
    """
    names = data.names
    p = len(names)
    if p < 2:
        raise UsageError("structure learning needs at least two columns")
    if max_depth is None:
        max_depth = p - 2
    if max_depth < 0:
        raise UsageError("max_depth must be >= 0")
    tester = tester if tester is not None else RhoTester(alpha)
    order = sorted(range(p), key=lambda i: names[i])
    adj = ~np.eye(p, dtype=bool)
    sepsets: dict = {}
    depth = 0
    while depth <= max_depth:
        snapshot = adj.copy()
        tested_any = False
        for a_pos, i in enumerate(order):
            for j in order[a_pos + 1:]:
                if not snapshot[i, j]:
                    continue
                for src, dst in ((i, j), (j, i)):
                    cand = sorted((k for k in np.flatnonzero(snapshot[src]) if k != dst),
                                  key=lambda k: names[k])
                    if len(cand) < depth:
                        continue
                    tested_any = True
                    found = None
                    for subset in combinations(cand, depth):
                        cond = tuple(names[k] for k in subset)
                        try:
                            pval = tester(data, names[i], names[j], cond)
                        except RosenCITError as exc:
                            raise OracleError(
                                f"CI test {names[i]} _||_ {names[j]} | {list(cond)} failed: {exc}"
                            ) from exc
                        if pval > alpha:
                            found = cond
                            break
                    if found is not None:
                        adj[i, j] = adj[j, i] = False
                        sepsets[_sep_key(names[i], names[j])] = found
                        break
        if not tested_any:
            break
        depth += 1
    return adj, sepsets


def _creates_cycle(amat: np.ndarray, a: int, b: int) -> bool:
    """Would orienting ``a -> b`` close a directed cycle through existing arrows?"""
    directed = (amat == 1) & (amat.T == 0)
    stack, seen = [b], {b}
    while stack:
        k = stack.pop()
        if k == a:
            return True
        for m in np.flatnonzero(directed[k]):
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return False


def orient_v_structures(skeleton: np.ndarray, sepsets: dict, names: Sequence[str]) -> Cpdag:
    """Orient ``i -> k <- j`` for every unshielded triple with ``k`` outside sepset(i, j).

    An edge that two triples want oriented in opposite directions stays undirected.
    """
    names = list(names)
    sk = np.asarray(skeleton, dtype=bool)
    p = len(names)
    order = sorted(range(p), key=lambda i: names[i])
    arrows = set()
    for k in order:
        nbrs = [m for m in order if sk[k, m]]
        for x_pos, i in enumerate(nbrs):
            for j in nbrs[x_pos + 1:]:
                if sk[i, j]:
                    continue
                sep = sepsets.get(_sep_key(names[i], names[j]), ())
                if names[k] not in sep:
                    arrows.add((i, k))
                    arrows.add((j, k))
    amat = sk.astype(np.int8)
    for a, b in sorted(arrows, key=lambda e: (names[e[0]], names[e[1]])):
        if (b, a) in arrows:
            continue
        if amat[a, b] and amat[b, a] and not _creates_cycle(amat, a, b):
            amat[b, a] = 0
    return Cpdag(names, amat, dict(sepsets))


def _orient(amat, a, b) -> bool:
    if amat[a, b] and amat[b, a] and not _creates_cycle(amat, a, b):
        amat[b, a] = 0
        return True
    return False


def meek_rules(cpdag: Cpdag) -> Cpdag:
    """Apply Meek's rules R1-R4 until nothing changes."""
    out = cpdag.copy()
    g = out.amat
    p = len(out.names)

    def und(a, b):
        return g[a, b] and g[b, a]

    def dire(a, b):
        return g[a, b] and not g[b, a]

    def adj(a, b):
        return g[a, b] or g[b, a]

    changed = True
    while changed:
        changed = False
        for a in range(p):
            for b in range(p):
                if a == b or not und(a, b):
                    continue
                others = [c for c in range(p) if c not in (a, b)]
                # R1: c -> a - b, c and b nonadjacent
                if any(dire(c, a) and not adj(c, b) for c in others):
                    changed |= _orient(g, a, b)
                    continue
                # R2: a -> c -> b with a - b
                if any(dire(a, c) and dire(c, b) for c in others):
                    changed |= _orient(g, a, b)
                    continue
                # R3: a - c -> b, a - d -> b, c and d nonadjacent
                mids = [c for c in others if und(a, c) and dire(c, b)]
                if any(not adj(c, d) for c, d in combinations(mids, 2)):
                    changed |= _orient(g, a, b)
                    continue
                # R4: a - c, c -> d -> b, a adjacent to d, c and b nonadjacent
                if any(und(a, c) and dire(c, d) and dire(d, b) and adj(a, d) and not adj(c, b)
                       for c in others for d in others if c != d):
                    changed |= _orient(g, a, b)
    return out


def pc(data: Dataset, alpha: float = 0.05, max_depth: Optional[int] = None,
       tester: Optional[CITester] = None) -> Cpdag:
    """Skeleton search, v-structure orientation and Meek closure."""
    sk, sepsets = pc_skeleton(data, alpha, max_depth, tester)
    return meek_rules(orient_v_structures(sk, sepsets, data.names))


def tpr_fpr(estimated: Cpdag, truth, truth_names: Optional[Sequence[str]] = None) -> tuple:
    """Skeleton true/false positive rates.

    ``truth`` is a (p, p) adjacency matrix (nonzero ``[i, j]`` means ``i -> j``)
    over ``truth_names`` (default: the estimate's node order). A rate with an
    empty denominator is returned as nan.
    """
    truth = np.asarray(truth) != 0
    names = list(truth_names) if truth_names is not None else list(estimated.names)
    if sorted(names) != sorted(estimated.names) or truth.shape != (len(names), len(names)):
        raise DimensionError("estimated and true graphs have different node sets")
    perm = [estimated.names.index(nm) for nm in names]
    est = estimated.skeleton()[np.ix_(perm, perm)]
    true_sk = truth | truth.T
    iu = np.triu_indices(len(names), 1)
    t, e = true_sk[iu], est[iu]
    n_true, n_false = int(t.sum()), int((~t).sum())
    tpr = float((t & e).sum()) / n_true if n_true else float("nan")
    fpr = float((~t & e).sum()) / n_false if n_false else float("nan")
    return tpr, fpr


class PC(BaseEstimator):
    """Estimator wrapper: ``PC(...).fit(data)`` sets ``cpdag_``, ``skeleton_``, ``sepsets_``.

    Parameters
    ----------
    alpha : float
    max_depth : int, optional
    test : {"rho", "pcor"}
    kernel, bandwidth_scale, bandwidth, cond_scale, n_reps, seed, null_seed
        Passed to the rho oracle.
    cache : NullCache, optional
    """

    def __init__(self, alpha=0.05, max_depth=None, test="rho", kernel="gaussian",
                 bandwidth_scale=1.0, bandwidth=None, cond_scale="rank", n_reps=1000, seed=0,
                 null_seed=0, cache=None):
        self.alpha = alpha
        self.max_depth = max_depth
        self.test = test
        self.kernel = kernel
        self.bandwidth_scale = bandwidth_scale
        self.bandwidth = bandwidth
        self.cond_scale = cond_scale
        self.n_reps = n_reps
        self.seed = seed
        self.null_seed = null_seed
        self.cache = cache

    def make_tester(self):
        if self.test == "pcor":
            return PartialCorrelationTester()
        if self.test == "rho":
            return RhoTester(self.alpha, KernelSpec(self.kernel),
                             BandwidthPolicy(self.bandwidth_scale, self.bandwidth,
                                             self.cond_scale),
                             self.n_reps, self.seed, self.null_seed, self.cache)
        raise UsageError(f"unknown test {self.test!r}")

    def fit(self, X, y=None):
        data = X if isinstance(X, Dataset) else Dataset.from_array(X)
        self.tester_ = self.make_tester()
        self.skeleton_, self.sepsets_ = pc_skeleton(data, self.alpha, self.max_depth,
                                                    self.tester_)
        self.cpdag_ = meek_rules(orient_v_structures(self.skeleton_, self.sepsets_,
                                                     data.names))
        self.n_tests_ = self.tester_.calls
        return self
