"""Slow-fast regime-switching diffusions: averaging, Poisson equations,
moderate-deviation rates and Monte Carlo checks."""
from .chain import invariant_measure, is_irreducible
from .errors import (ConfigError, IllConditioned, Infeasible, ModelError, NotIrreducible, NumericalError,
                     RegimeMDPError, ZetaViolated)
from .mc import clt_check, estimate_tail, mdp_scan
from .model import RegimeModel, affine_tanh_model, build_builtin, builtin_names, validate_model
from .poisson import analyze_point, averaged_drift, effective_covariance, jacobian_bbar, solve_poisson
from .rate import min_rate_to_target, pointwise_rate, pointwise_rate_qp_oracle, rate_functional
from .simulate import (deviation_path, simulate_batch, simulate_controlled, simulate_coupled,
                       solve_averaged)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "IllConditioned", "Infeasible", "ModelError", "NotIrreducible", "NumericalError",
    "RegimeMDPError", "RegimeModel", "ZetaViolated", "affine_tanh_model", "analyze_point",
    "averaged_drift", "build_builtin", "builtin_names", "clt_check", "deviation_path",
    "effective_covariance", "estimate_tail", "invariant_measure", "is_irreducible", "jacobian_bbar",
    "mdp_scan", "min_rate_to_target", "pointwise_rate", "pointwise_rate_qp_oracle", "rate_functional",
    "simulate_batch", "simulate_controlled", "simulate_coupled", "solve_averaged", "solve_poisson",
    "validate_model",
]
