"""Long-range percolation laboratory: sampling, renormalization, flows and resistance."""

from ._kernels import BACKEND
from .errors import (ConvergenceError, DomainError, LrpercError, OracleInapplicable,
                     RenormGraphError, ValidationError)
from .model import DerivedConstants, Kernel, connect_bound, derive_constants, eta
from .sampler import Box, Configuration, sample_config, thin_config, truncate_config
from .seeding import SeedRecord

__version__ = "0.1.0"
