"""Distribution-free conditional independence testing on Rosenblatt-transformed data."""

from .citest import (
    ConditionalIndependenceTest,
    TestResult,
    TestSpec,
    run_test,
    run_unconditional_test,
    transform_columns,
)
from .causal import PC, Cpdag, pc, tpr_fpr
from .kernels import BandwidthPolicy, KernelSpec
from .nulldist import NullCache, NullTable, critical_value, p_value, simulate_null
from .statistic import C0, rho0_hat, rho_hat, rho_hat_multi, rho_unconditional
from .simbench import bandwidth_sweep, dag_study, gen_model, size_power_run
from .transforms import Dataset, RosenblattTransformer, TransformedSample

__version__ = "0.1.0"
