"""Carbon- and cost-aware placement of microservice applications across
constrained cloud regions: trace-driven simulator, pruned genetic optimizer,
traffic forecaster and workload profiler.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
