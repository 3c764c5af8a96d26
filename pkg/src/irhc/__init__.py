"""Interval-wise receding horizon control under interval-wise total energy constraints.

Modules:

- :mod:`irhc.plant` - plant models, discretization, rollouts and stage costs
- :mod:`irhc.trajopt` - finite-horizon optimal control with energy and terminal constraints
- :mod:`irhc.controller` - the interval-wise receding horizon controller and closed-loop runner
- :mod:`irhc.baselines` - traditional RHC, proportional-budget RHC, static feedback
- :mod:`irhc.analysis` - feasibility certification and cost-bound checks
- :mod:`irhc.experiments` / :mod:`irhc.cli` - config-driven runs and the ``irhc`` command
"""

from .analysis import Certificate, certify, check_bounds, gamma_sequence, itec_cost_bound, non_itec_cost_bound
from .baselines import ProportionalRHC, StaticFeedback, TraditionalRHC
from .controller import IRHC, ControllerState, ItecSpec, RunRecord, run
from .errors import (
    CertificationError,
    ConfigurationError,
    ControllerError,
    DimensionError,
    IRHCError,
    NumericalDomainError,
)
from .plant import DiscretizedPlant, DiscretizerConfig, LinearSystem, PlantModel, make_system
from .trajopt import Checkpoint, EnergyWindow, HorizonProblem, InputSet, SolverConfig, SolveResult, solve

__version__ = "0.1.0"
