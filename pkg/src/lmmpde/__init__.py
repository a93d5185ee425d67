"""Rate-curve derivative pricing via principal-component PDE expansions.

The N-dimensional backward pricing problem of a lognormal forward-rate model
is reduced to one- and two-dimensional heat-equation solves in dominant
principal components plus finite-difference corrections in the remaining
eigenvalue directions. A Monte Carlo engine (plain pricing, primal-dual
Bermudan bounds, shared-noise expansion terms) provides benchmarks.
"""

from .anova import ExpansionPlan, Stencil, enumerate_terms, first_order_combine, stencil_table
from .errors import ConfigurationError, IncompletePlanError, NumericalError
from .heatpde import AxisMap, GridSpec, SolutionSurface, solve_term
from .model import (FrozenDrift, LmmConfig, Spectrum, ZTransform, build_correlation,
                    build_covariance, build_transform, eigendecompose, freeze_drift)
from .mcbench import (BoundEstimate, McConfig, PolicyThresholds, bermudan_bounds,
                      learn_policy, lower_bound, mc_price_ratchet, mc_vrst, upper_bound)
from .pricing import (FirstOrderTerms, PdeParams, bermudan_pde_terms,
                      price_bermudan_pde, price_ratchet_pde, ratchet_pde_terms)
from .products import (BermudanSwaption, RatchetFloor, StrikeAxis, floorlet_payoff,
                       ratchet_strike_update, swaption_intrinsic, yearly_exercise_indices)
from .results import PriceEstimate

__version__ = "0.1.0"

__all__ = [
    "AxisMap", "BermudanSwaption", "BoundEstimate", "ConfigurationError",
    "ExpansionPlan", "FirstOrderTerms", "FrozenDrift", "GridSpec",
    "IncompletePlanError", "LmmConfig", "McConfig", "NumericalError",
    "PdeParams", "PolicyThresholds", "PriceEstimate", "RatchetFloor",
    "SolutionSurface", "Spectrum", "Stencil", "StrikeAxis", "ZTransform",
    "bermudan_bounds", "bermudan_pde_terms", "build_correlation",
    "build_covariance", "build_transform", "eigendecompose",
    "enumerate_terms", "first_order_combine", "floorlet_payoff",
    "freeze_drift", "learn_policy", "lower_bound", "mc_price_ratchet",
    "mc_vrst", "price_bermudan_pde", "price_ratchet_pde",
    "ratchet_pde_terms", "ratchet_strike_update", "solve_term",
    "stencil_table", "swaption_intrinsic", "upper_bound",
    "yearly_exercise_indices",
]
