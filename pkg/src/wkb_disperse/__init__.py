"""Spectral WKB toolkit for 1-D Schrodinger operators with slowly decaying
attractive potentials: Jost solutions, spectral density, stationary-phase
bound checks, and dispersive-decay scans with discrete oracles."""

__version__ = "0.1.0"

from .potential import (
    PotentialModel,
    AssumptionReport,
    coulomb_symmetric,
    anisotropic,
    bump,
    constant,
    eval_potential,
    certify_assumption,
)
from .propagator import (
    PropagatorKernel,
    KernelAssembler,
    DecayScan,
    LocalDecayScan,
    kernel,
    decay_scan,
    local_decay_scan,
    signed_log_grid,
)

__all__ = [
    "__version__",
    "PotentialModel",
    "AssumptionReport",
    "coulomb_symmetric",
    "anisotropic",
    "bump",
    "constant",
    "eval_potential",
    "certify_assumption",
    "PropagatorKernel",
    "KernelAssembler",
    "DecayScan",
    "LocalDecayScan",
    "kernel",
    "decay_scan",
    "local_decay_scan",
    "signed_log_grid",
]
