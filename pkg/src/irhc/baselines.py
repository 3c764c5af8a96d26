"""Comparison controllers.

- Traditional receding horizon control: fixed horizon, no terminal constraint,
  first control applied, horizon slides by one every step.
- Step-wise receding horizon control with a proportional split of the energy
  budget: when the horizon only reaches ``j`` steps into an upcoming window it
  is allowed ``j*C/N`` of the budget there.
- Static output feedback ``u = -3 x2``.

All solver-backed baselines share :func:`irhc.trajopt.solve` and the
shift-and-pad warm start used by :class:`irhc.controller.IRHC`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .controller import ItecSpec, StepRow, shift_warm_start
from .errors import ConfigurationError, ControllerError
from .trajopt import EnergyWindow, HorizonProblem, InputSet, SolverConfig, solve

__all__ = [
    "static_feedback",
    "StaticFeedback",
    "traditional_rhc_step",
    "TraditionalRHC",
    "ProportionalState",
    "proportional_window",
    "proportional_itec_rhc_step",
    "ProportionalRHC",
]


def static_feedback(x_k, gain=3.0) -> np.ndarray:
    x_k = np.asarray(x_k, dtype=float)
    if x_k.shape != (2,):
        raise ConfigurationError(f"static feedback needs a 2-state plant, got state shape {x_k.shape}")
    return np.array([-gain * x_k[1]])


class StaticFeedback:
    def __init__(self, gain=3.0):
        self.gain = gain

    def __call__(self, x_k):
        return static_feedback(x_k, self.gain)


def traditional_rhc_step(x_k, horizon, system, solver: SolverConfig = SolverConfig(),
                         warm_start=None, input_set: InputSet = InputSet()):
    """Solve the terminal-free problem of length ``horizon``; return ``(u, result)``."""
    if horizon < 1:
        raise ConfigurationError("horizon must be at least 1")
    problem = HorizonProblem(np.asarray(x_k, dtype=float), horizon, system, input_set)
    result = solve(problem, warm_start, solver)
    return result.controls[0].copy(), result


class TraditionalRHC:
    def __init__(self, system, horizon, solver: SolverConfig = SolverConfig(),
                 input_set: InputSet = InputSet()):
        self.system = system
        self.horizon = horizon
        self.solver = solver
        self.input_set = input_set
        self.plan = None
        self.k = 0

    def reset(self, x0):
        self.plan = None
        self.k = 0

    def __call__(self, x_k):
        warm = None if self.plan is None else shift_warm_start(self.plan, self.horizon, self.system.input_dim)
        u, result = traditional_rhc_step(x_k, self.horizon, self.system, self.solver, warm, self.input_set)
        if not result.feasible:
            raise ControllerError(f"horizon problem {result.status}", step=self.k, last_state=x_k, result=result)
        self.plan = result.controls
        row = StepRow(self.k, x_k, u, self.horizon, 0.0, 0, float("inf"), result.status, float("nan"))
        self.k += 1
        return u, row


@dataclass(frozen=True, eq=False)
class ProportionalState:
    k: int
    gamma: float
    itec: ItecSpec
    plan: Optional[np.ndarray] = None


def proportional_window(k, gamma, itec: ItecSpec) -> Optional[EnergyWindow]:
    """Energy constraint imposed on a length-``N`` horizon starting at ``k``.

    Inside a window the remaining budget ``C - gamma`` applies up to the
    window's last step.  When the horizon's tail reaches ``j`` steps into the
    next window, the first ``j`` of them share ``j*C/N``.
    """
    N, C = itec.N, itec.C
    p = itec.window_containing(k)
    if p is not None:
        _, hi = itec.window(p)
        return EnergyWindow(0, hi - k, max(0.0, C - gamma))
    lo, _ = itec.window(k // (2 * N) + 1)
    j = k + N - lo
    if j < 1:
        return None
    return EnergyWindow(lo - k, N - 1, j * C / N)


def proportional_itec_rhc_step(x_k, state: ProportionalState, system,
                               solver: SolverConfig = SolverConfig(), input_set: InputSet = InputSet()):
    """One step of horizon-``N`` RHC with proportional budget allocation.

    Returns ``(u, next_state, result)``.
    """
    itec = state.itec
    window = proportional_window(state.k, state.gamma, itec)
    problem = HorizonProblem(np.asarray(x_k, dtype=float), itec.N, system, input_set, energy_window=window)
    warm = None if state.plan is None else shift_warm_start(state.plan, itec.N, system.input_dim)
    result = solve(problem, warm, solver)
    u = result.controls[0].copy()
    gamma = state.gamma
    p = itec.window_containing(state.k)
    if p is not None:
        _, hi = itec.window(p)
        gamma = 0.0 if state.k == hi else gamma + float(u @ u)
    return u, replace(state, k=state.k + 1, gamma=gamma, plan=result.controls), result


class ProportionalRHC:
    def __init__(self, system, itec: ItecSpec, solver: SolverConfig = SolverConfig(),
                 input_set: InputSet = InputSet()):
        self.system = system
        self.itec = itec
        self.solver = solver
        self.input_set = input_set
        self.state = None

    def reset(self, x0):
        self.state = ProportionalState(0, 0.0, self.itec)

    def __call__(self, x_k):
        s = self.state
        u, self.state, result = proportional_itec_rhc_step(x_k, s, self.system, self.solver, self.input_set)
        if not result.feasible:
            raise ControllerError(f"horizon problem {result.status}", step=s.k, last_state=x_k, result=result)
        row = StepRow(s.k, x_k, u, self.itec.N, s.gamma, 0, float("inf"), result.status, float("nan"))
        return u, row
