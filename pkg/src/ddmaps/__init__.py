"""Double Diffusion Maps: latent-space reduced models of dissipative dynamics.

Diffusion Maps find latent coordinates of sampled long-time dynamics,
Nystrom extension restricts new ambient states to them, Latent Harmonics
lifts latent points back, and three reduced vector fields (BF, GT, TaLHI)
integrate the dynamics in latent space.
"""

from .dmaps import DMapModel, fit_dmaps, local_linear_residuals, select_nonharmonic
from .errors import (
    DDMapsError,
    GridCoverageError,
    IllConditionedWarning,
    InsufficientSampling,
    InvalidConfig,
    InvalidData,
    LeftManifold,
    NoReductionWarning,
    NumericalDegeneracy,
    OutOfSampleTooFar,
    UnstableStep,
    UnsupportedNormalization,
)
from .kernel_core import EigenSystem, KernelConfig, eigendecompose, kernel_matrix, normalize
from .latent_harmonics import LHModel, extend, fit_lh, lift
from .nystrom import jacobian, restrict
from .reduced_models import (
    AmbientSystem,
    GridTable,
    ReducedModel,
    Trajectory,
    bf_rhs,
    build_grid,
    chain_rule_rhs,
    fit_talhi,
    gt_rhs,
    integrate,
    make_bf,
    make_gt,
    talhi_rhs,
)

__version__ = "0.1.0"
