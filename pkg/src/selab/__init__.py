"""Monte Carlo state evolution for mixed first-order and saddle-point iterations on Gaussian matrices."""

from .empirical import Trajectory, run_plan, solve_saddle
from .ensembles import GaussianData, sample_data
from .plans import Step, UpdatePlan, preset
from .state_evolution import (SEBank, SEParameters, init_se, run_state_evolution, se_first_order_step,
                              se_saddle_step)
from .verify import TestFunction, compare, fixpoint_audit, rate_sweep

__version__ = "0.1.0"

__all__ = ["GaussianData", "SEBank", "SEParameters", "Step", "TestFunction", "Trajectory", "UpdatePlan",
           "compare", "fixpoint_audit", "init_se", "preset", "rate_sweep", "run_plan", "run_state_evolution",
           "sample_data", "se_first_order_step", "se_saddle_step", "solve_saddle"]
