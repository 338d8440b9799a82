"""Kinetic particle-gas collision kernels, transport coefficients, hydrodynamic
limit sweeps and a Vlasov-Navier-Stokes solver."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .errors import (AerokinError, CFLError, ConfigError, ContractError, ConvergenceError,  # noqa: E402
                     InconsistencyError, SamplingError, SimulationError)
from .kernels import (ElasticPGKernel, InelasticPGKernel, MolecularKernel, ScalingParams,  # noqa: E402
                      molecular_kernel, pg_kernel)

__all__ = [
    "__version__", "AerokinError", "CFLError", "ConfigError", "ContractError", "ConvergenceError",
    "InconsistencyError", "SamplingError", "SimulationError", "ElasticPGKernel", "InelasticPGKernel",
    "MolecularKernel", "ScalingParams", "molecular_kernel", "pg_kernel",
]
