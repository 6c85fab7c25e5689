"""Sampled-data feedback passivation."""
from ._accel import BACKEND
from ._roots import ConvergenceError
from .disgrad import DiscreteGradient, discrete_gradient, discrete_gradient_expansion
from .jet import Jet, JetOrderError
from .passivation import (
    SampledController, SingularTermError, StorageDesign, approx_controller,
    average_output, damping_series_term, gamma_series_term, isdm_residual, isdm_rhs,
    openloop_passifying_output, passifying_output, passifying_output_series,
    solve_damping, solve_isdm,
)
from .pch import (
    PortHamiltonianSystem, ida_closed_loop, pch_drift, pch_residual, theorem3_structure,
)
from .sdmodel import ControlAffineSystem, SampledMap, control_direction, sampled_map
from .sim import (
    ExperimentConfig, Trace, pendulum_closed_loop, pendulum_design, simulate_continuous,
    simulate_sampled, storage_rmse,
)
from .vfcalc import exp_lie_series, lie_bracket, lie_derivative

__version__ = "0.1.0"
