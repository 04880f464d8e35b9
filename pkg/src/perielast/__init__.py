"""Spectral cell-problem solvers and effective dispersive models for
periodic elastic media on the unit torus."""

__version__ = "0.1.0"

from .tensors import (LamePair, Tensor4, TensorN, isotropic_tensor,
                      check_symmetries, convexity_margin, apply_tensor,
                      dump_tensor, load_tensor)
from .fields import (CellGrid, CellField, ConstantMedium, LaminateMedium,
                     VoxelMedium, SmoothMedium, Medium, build_medium,
                     spectral_gradient, spectral_divergence, cell_average,
                     read_voxel_file, write_voxel_file)
from .solver import (SolverConfig, SolveReport, PeriodicSolver,
                     solve_periodic, apply_operator, CompatibilityError,
                     NonConvergence)
from .correctors import CorrectorSet, solve_all
from .effective import (EffectiveModel, build_effective_model, effective_C,
                        effective_rho, dispersive_tensors, acoustic_matrix,
                        dispersion_relation, identity_checks)
from .bloch import BlochBands, bloch_bands, model_error_slopes
from .laminate import (LaminateProfile, profile_from_laminate,
                       profile_from_smooth, laminate_effective_C,
                       laminate_bloch_oracle)
from .dtn import (DtnCoefficients, spherical_hankel, dtn_coefficients,
                  reciprocity_defect, ResonantDenominator)
