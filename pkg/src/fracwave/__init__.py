"""Fractional damped wave equations on an interval: spectra, evolution, control."""
__version__ = "0.1.0"

from .errors import (
    AssemblyError,
    ContractError,
    DomainError,
    FracwaveError,
    NumericalError,
    RegularizationRequiredError,
)
from .spectral_core import Grid1D, SpectralBasis, StiffnessSystem, assemble, c_ns, eigenpairs, norm
from .nonlocal_ops import ExteriorProfile, dirichlet_lift, mode_fluxes, nonlocal_normal_derivative
from .modal_dynamics import DampingSpectrum, classify, coeff_A, coeff_B, coeff_C, coeff_D
from .evolution import (
    ExteriorControl,
    StatePair,
    TimeProfile,
    solve_controlled,
    solve_dual,
    solve_full,
    solve_homogeneous,
)
from .control_analysis import (
    ControlAnsatz,
    approximate_control,
    duality_residual,
    spectral_control_diagnostic,
    unique_continuation_test,
)
