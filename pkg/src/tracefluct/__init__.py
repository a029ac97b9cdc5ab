"""Simulation and exact-oracle laboratory for trace fluctuations of i.i.d. random matrices."""

__version__ = "0.1.0"

from .ensemble import EntryDistribution, FixedArray, MatrixArray, ScaledMatrix, make_distribution, sample_matrix
from .errors import BudgetExceededError
from .chain_combinatorics import Chain, ClassSpec, FreedomCertificate, Partition
from .moment_oracle import MomentPolynomial, ScaledValue
from .chaos_kernels import DenseKernel
from .trace_engine import TraceFluctuation
from .asclt_lab import TracePath

__all__ = [
    "__version__",
    "EntryDistribution",
    "FixedArray",
    "MatrixArray",
    "ScaledMatrix",
    "make_distribution",
    "sample_matrix",
    "BudgetExceededError",
    "Chain",
    "ClassSpec",
    "FreedomCertificate",
    "Partition",
    "MomentPolynomial",
    "ScaledValue",
    "DenseKernel",
    "TraceFluctuation",
    "TracePath",
]
