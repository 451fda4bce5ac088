"""Extended-precision laboratory for scale-free rescaling cascades."""
from __future__ import annotations

from .bigscale import (BigReal, DyadicScale, big, log_product_accumulate, pow_tower,
                       required_precision)
from .cascade import (CascadeConfig, CascadeTrace, GeneralizedSolution, RescalingSchedule,
                      deviation_order, generalized_solution, run_cascade, standard_product,
                      terminate_and_unwind)
from .errors import (DegenerateFitError, DomainError, InsufficientScalesError, PrecisionError,
                     SFLError)
from .fracdim import (CantorSpec, CoverReport, DimensionEstimate, box_count, build_cantor,
                      golden_mean_cf, lambda_cascade_fit, sigma_from_lambda, sigma_local)
from .genint import (Integrand, cantor_residual_length, cantor_void_length, extended_integral,
                     measure_replacement, modulated_exp, riemann)
from .picardx import (RhsField, mu_factor, picard_extended, picard_standard, quadratic_mu,
                      correction_rhs)

__version__ = "0.1.0"
