"""decaylab: energy-decay laboratory for hyperbolic systems with
nonautonomous nonlinear damping.

Modules
-------
feedback    damping nonlinearities g and their concave majorants G
modulation  time (and piecewise space) factors alpha(t, x)
envelope    h, p, psi, psi^{-1}, comparison ODE, closed-form rates
waves       semi-discrete 1D wave models and energy traces
kato        resolvent / Yosida approximation at finite dimension
harness     configs, fits, envelope comparison, sweeps
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DecayLabError, DomainError, InsufficientDataError,  # noqa: F401
                     InvalidProfileError, NumericalError, SolverError, StepFailure,
                     StiffnessError, UnsupportedClosedFormError, UsageError)
from .feedback import ConcaveMajorant, FeedbackLaw, concave_majorant_for, eval_g, validate_feedback  # noqa: F401
from .modulation import ModulationProfile, classify, eval_alpha, integral_alpha, integral_weighted  # noqa: F401
