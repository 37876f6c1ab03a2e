"""Numerical lab for radial blow-up of u_t = Δu + e^u on a ball."""

from .errors import BlowupOverflow, ConfigurationError, ConsistencyError, DomainError, PreconditionError
from .evolution import (EvolutionState, Nonlinearity, StepControls, continue_past_blowup, estimate_blowup_time,
                        run_until_blowup, step)
from .grid import RadialField, RadialGrid, build_grid, radial_laplacian
from .profiles import ProfileFamily, bracket_c_sharp, map_alpha_to_C, residual, shoot, singular_profile
from .similarity import (check_regularization_rate, classify_rate, fit_final_profile, to_backward, to_forward,
                         to_intrinsic)
from .sturm import (count_blowup_events_vs_bound, intersections_with, monotone_near_origin_check, zero_number,
                    zero_number_monotonicity_harness)

__version__ = "0.1.0"
