"""Second-order smoothing kernels and rule-of-thumb bandwidths."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .exceptions import ConstantColumnError, UsageError

KernelFamily = Literal["gaussian", "epanechnikov"]
CondScale = Literal["rank", "raw"]

_GAUSS_NORM = 1.0 / math.sqrt(2.0 * math.pi)
SILVERMAN_CONSTANT = 1.06


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and order.

    Only second-order kernels are shipped.
    """

    family: KernelFamily = "gaussian"
    order_m: int = 2

    def __post_init__(self):
        if self.family not in ("gaussian", "epanechnikov"):
            raise UsageError(f"unknown kernel family {self.family!r}")
        if self.order_m != 2:
            raise UsageError("only order-2 kernels are implemented")

    @property
    def compact(self) -> bool:
        return self.family == "epanechnikov"


@dataclass(frozen=True)
class BandwidthPolicy:
    """How bandwidths are chosen.

    Parameters
    ----------
    scale_c : float
        Multiplier applied to the rule-of-thumb bandwidth.
    explicit_h : float, optional
        When set, used as the bandwidth for every coordinate and every stage.
    cond_scale : {"rank", "raw"}
        Scale on which conditioning columns are smoothed. ``"rank"`` replaces
        each conditioning column by its empirical CDF values before the
        bandwidth is chosen, so bandwidths (and ``explicit_h``) are in units of
        [0, 1]; ``"raw"`` smooths the observed values.
    """

    scale_c: float = 1.0
    explicit_h: Optional[float] = None
    cond_scale: CondScale = "rank"

    def __post_init__(self):
        if self.cond_scale not in ("rank", "raw"):
            raise UsageError(f"cond_scale must be 'rank' or 'raw', got {self.cond_scale!r}")
        if not self.scale_c > 0:
            raise UsageError(f"bandwidth scale must be positive, got {self.scale_c}")
        if self.explicit_h is not None and not self.explicit_h > 0:
            raise UsageError(f"explicit bandwidth must be positive, got {self.explicit_h}")


def kernel_weight(spec: KernelSpec, u):
    """Evaluate the kernel K(u). Works on scalars and arrays."""
    u = np.asarray(u, dtype=float)
    if spec.family == "gaussian":
        out = _GAUSS_NORM * np.exp(-0.5 * u * u)
    else:
        out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return out[()] if out.ndim == 0 else out


def rule_of_thumb_bandwidth(
    column_sd: float, n: int, cond_dim: int, policy: BandwidthPolicy = BandwidthPolicy()
) -> float:
    """Silverman-type bandwidth ``c * 1.06 * sd * n**(-1/(4 + cond_dim))``.

    ``policy.explicit_h`` short-circuits the rule.
    """
    if policy.explicit_h is not None:
        return float(policy.explicit_h)
    if n < 2:
        raise UsageError(f"bandwidth needs n >= 2, got {n}")
    if cond_dim < 1:
        raise UsageError(f"cond_dim must be >= 1, got {cond_dim}")
    if not column_sd > 0:
        raise ConstantColumnError(
            "conditioning column is constant (sd = 0); drop it or add variation"
        )
    return policy.scale_c * SILVERMAN_CONSTANT * column_sd * n ** (-1.0 / (4 + cond_dim))


def column_bandwidths(cond: np.ndarray, policy: BandwidthPolicy) -> np.ndarray:
    """One bandwidth per column of ``cond`` (product kernel)."""
    n, d = cond.shape
    if policy.explicit_h is not None:
        return np.full(d, float(policy.explicit_h))
    sds = cond.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
    out = np.empty(d)
    for k in range(d):
        try:
            out[k] = rule_of_thumb_bandwidth(sds[k], n, d, policy)
        except ConstantColumnError as exc:
            raise ConstantColumnError(f"conditioning column {k} is constant (sd = 0)") from exc
    return out
