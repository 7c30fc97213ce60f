"""Two-step estimation for ergodic SDEs driven by pure-jump Lévy noise.

Gaussian quasi-likelihood fits the drift and scale parameters; moment fitting
on the Euler residuals then estimates Lévy-measure functionals, with a joint
asymptotic covariance that accounts for the plugged-in scale estimate.
"""

from .avar import JointFit, confidence_intervals, delta_method, joint_fit, studentize
from .gqmle import GqmleFit, estimating_function, estimating_function_jacobian, fit_gqmle
from .levy import CompoundPoissonNormalDriver, NIGDriver, make_driver
from .models import CoefficientModel, ParamDomain, get_model
from .residual import MomentFunction, builtin_phi_cos, euler_residuals, moment_estimate
from .simulate import ObservationSeries, SimulationPlan, simulate_path

__all__ = [
    "CoefficientModel", "CompoundPoissonNormalDriver", "GqmleFit", "JointFit", "MomentFunction",
    "NIGDriver", "ObservationSeries", "ParamDomain", "SimulationPlan", "builtin_phi_cos",
    "confidence_intervals", "delta_method", "estimating_function", "estimating_function_jacobian",
    "euler_residuals", "fit_gqmle", "get_model", "joint_fit", "make_driver", "moment_estimate",
    "simulate_path", "studentize",
]
