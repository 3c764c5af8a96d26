"""Finite-horizon constrained optimal control by single shooting.

The decision variables are the controls ``u(0..h-1)`` only; states come from
rolling out the :class:`~irhc.plant.DiscreteSystem`.  The objective is

    J(u) = sum_{j=1}^{h} |x(j)|^2 + |u(j-1)|^2

and at most two inequality constraints are attached:

- an energy window ``sum_{j=s}^{e} |u(j)|^2 <= budget`` (offsets relative to
  the first control), and
- a terminal bound ``|x(h)|^2 <= terminal_bound``,

plus an optional interior checkpoint ``|x(t)|^2 <= bound`` for some
``1 <= t <= h`` (used by the controller to hold an earlier terminal bound).

Both are treated with a Powell-Hestenes-Rockafellar augmented Lagrangian.
Each inner problem is minimized with L-BFGS-B, whose bound handling takes
care of a box input set.  Gradients come from an adjoint sweep through the
rollout, so one forward and one backward pass cost O(h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy.optimize import minimize

from .errors import ConfigurationError, DimensionError
from .plant import DiscreteSystem

__all__ = [
    "InputSet",
    "EnergyWindow",
    "Checkpoint",
    "HorizonProblem",
    "SolverConfig",
    "SolveResult",
    "rollout",
    "evaluate",
    "gradient",
    "constraint_gradients",
    "solve",
]

ENERGY = "energy"
TERMINAL = "terminal"
CHECKPOINT = "checkpoint"


@dataclass(frozen=True)
class InputSet:
    """Admissible inputs: all of R^m, or a box containing the origin."""

    kind: str = "unbounded"
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "unbounded":
            return
        if self.kind != "box":
            raise ConfigurationError(f"unknown input set kind {self.kind!r}")
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigurationError("box bounds must be 1D and of equal length")
        if np.any(lo > hi):
            raise ConfigurationError("box needs lower <= upper componentwise")
        if np.any(lo > 0) or np.any(hi < 0):
            raise ConfigurationError("box input set must contain the origin")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))

    @classmethod
    def box(cls, lower, upper):
        return cls("box", tuple(np.atleast_1d(lower).tolist()), tuple(np.atleast_1d(upper).tolist()))

    def bounds(self, horizon):
        """Per-variable bounds for the flattened ``[h*m]`` control vector, or None."""
        if self.kind == "unbounded":
            return None
        return list(zip(self.lower, self.upper)) * horizon

    def project(self, U):
        if self.kind == "unbounded":
            return U
        return np.clip(U, self.lower, self.upper)

    def violation(self, U):
        if self.kind == "unbounded":
            return 0.0
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return float(max(np.max(lo - U, initial=0.0), np.max(U - hi, initial=0.0)))


@dataclass(frozen=True)
class EnergyWindow:
    """``sum_{j=start}^{end} |u(j)|^2 <= budget``; offsets index the control sequence."""

    start: int
    end: int
    budget: float


@dataclass(frozen=True)
class Checkpoint:
    """``|x(offset)|^2 <= bound``, offset counted in steps from ``x_init``."""

    offset: int
    bound: float


@dataclass(frozen=True, eq=False)
class HorizonProblem:
    x_init: np.ndarray
    horizon: int
    system: DiscreteSystem
    input_set: InputSet = InputSet()
    energy_window: Optional[EnergyWindow] = None
    terminal_bound: Optional[float] = None
    checkpoint: Optional[Checkpoint] = None

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x_init, dtype=float)).copy()
        if x.shape != (self.system.state_dim,):
            raise DimensionError(f"x_init must have shape ({self.system.state_dim},), got {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "x_init", x)
        if self.horizon < 1:
            raise ConfigurationError("horizon must be positive")
        w = self.energy_window
        if w is not None:
            if not (0 <= w.start <= w.end < self.horizon):
                raise ConfigurationError(
                    f"energy window offsets ({w.start}, {w.end}) must satisfy 0 <= start <= end < {self.horizon}"
                )
            if w.budget < 0:
                raise ConfigurationError(f"energy budget must be nonnegative, got {w.budget}")
        if self.terminal_bound is not None and self.terminal_bound < 0:
            raise ConfigurationError(f"terminal bound must be nonnegative, got {self.terminal_bound}")
        c = self.checkpoint
        if c is not None and not (1 <= c.offset <= self.horizon and c.bound >= 0):
            raise ConfigurationError(f"checkpoint {c} must have 1 <= offset <= {self.horizon} and bound >= 0")

    @property
    def input_dim(self):
        return self.system.input_dim

    def zeros(self):
        return np.zeros((self.horizon, self.system.input_dim))

    def constraint_ids(self):
        ids = []
        if self.energy_window is not None:
            ids.append(ENERGY)
        if self.terminal_bound is not None and math.isfinite(self.terminal_bound):
            ids.append(TERMINAL)
        if self.checkpoint is not None:
            ids.append(CHECKPOINT)
        return ids


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-6
    grad_tol: float = 1e-6
    max_outer: int = 200
    max_inner: int = 500
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e12
    restarts: int = 0
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        if not d:
            return cls()
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SolveResult:
    controls: np.ndarray
    cost: float
    max_constraint_violation: float
    iterations: int
    status: str
    violations: list = field(default_factory=list)
    multipliers: dict = field(default_factory=dict)
    stationarity: float = float("nan")

    @property
    def feasible(self):
        return self.status in ("optimal", "feasible_suboptimal")


# -- rollout, evaluation, adjoint ----------------------------------------------

def _check_controls(problem, controls):
    U = np.asarray(controls, dtype=float)
    m = problem.system.input_dim
    if U.ndim == 1 and U.size == problem.horizon * m:
        U = U.reshape(problem.horizon, m)
    if U.shape != (problem.horizon, m):
        raise DimensionError(f"controls must have shape ({problem.horizon}, {m}), got {U.shape}")
    return U


def rollout(problem: HorizonProblem, controls) -> np.ndarray:
    """States ``x(0..h)`` produced by ``controls`` from ``problem.x_init``."""
    U = _check_controls(problem, controls)
    return _rollout(problem.system, problem.x_init, U)


def _rollout(system, x0, U):
    return system.rollout(x0, U)


def _forward(system, x0, U):
    return system.rollout_linearized(x0, U)


def _constraint_values(problem, X, U):
    """Constraint functions ``g(u)`` (feasible iff ``g <= 0``) keyed by id."""
    g = {}
    w = problem.energy_window
    if w is not None:
        seg = U[w.start:w.end + 1]
        g[ENERGY] = float(np.sum(seg * seg)) - w.budget
    tb = problem.terminal_bound
    if tb is not None and math.isfinite(tb):
        g[TERMINAL] = float(X[-1] @ X[-1]) - tb
    c = problem.checkpoint
    if c is not None:
        g[CHECKPOINT] = float(X[c.offset] @ X[c.offset]) - c.bound
    return g


@njit(cache=True)
def _adjoint(U, X, As, Bs, w_control, w_state):
    """Gradient of ``w_control*sum|u_k|^2 + sum_k w_state[k]*|x_k|^2`` by a backward sweep."""
    h = U.shape[0]
    grad = np.empty_like(U)
    lam = 2.0 * w_state[h] * X[h]
    for k in range(h - 1, -1, -1):
        grad[k] = 2.0 * w_control * U[k] + Bs[k].T @ lam
        if k > 0:
            lam = 2.0 * w_state[k] * X[k] + As[k].T @ lam
    return grad


def _backward(problem, U, X, As, Bs, w_cost, w):
    """Gradient of ``w_cost*J + sum_c w[c]*g_c`` w.r.t. the controls."""
    h = U.shape[0]
    w_state = np.full(h + 1, float(w_cost))
    w_state[h] += w.get(TERMINAL, 0.0)
    if problem.checkpoint is not None:
        w_state[problem.checkpoint.offset] += w.get(CHECKPOINT, 0.0)
    grad = _adjoint(U, X, np.ascontiguousarray(As), np.ascontiguousarray(Bs), float(w_cost), w_state)
    win = problem.energy_window
    w_energy = w.get(ENERGY, 0.0)
    if win is not None and w_energy != 0.0:
        grad[win.start:win.end + 1] += 2.0 * w_energy * U[win.start:win.end + 1]
    return grad


def _cost(X, U):
    return float(np.sum(X[1:] * X[1:]) + np.sum(U * U))


def evaluate(problem: HorizonProblem, controls):
    """Rollout cost and per-constraint residuals ``max(0, g)``.

    Returns ``(cost, [(constraint_id, residual), ...])``; the list has one
    entry per constraint attached to ``problem`` and an ``"input"`` entry
    when the input set is a box.
    """
    U = _check_controls(problem, controls)
    X = _rollout(problem.system, problem.x_init, U)
    g = _constraint_values(problem, X, U)
    violations = [(cid, max(0.0, val)) for cid, val in g.items()]
    if problem.input_set.kind == "box":
        violations.append(("input", problem.input_set.violation(U)))
    return _cost(X, U), violations


def gradient(problem: HorizonProblem, controls) -> np.ndarray:
    """Gradient of the rollout cost with respect to every control entry, shape ``[h, m]``."""
    U = _check_controls(problem, controls)
    X, As, Bs = _forward(problem.system, problem.x_init, U)
    return _backward(problem, U, X, As, Bs, 1.0, {})


def constraint_gradients(problem: HorizonProblem, controls) -> dict:
    """Gradients of each attached constraint function, keyed by constraint id."""
    U = _check_controls(problem, controls)
    X, As, Bs = _forward(problem.system, problem.x_init, U)
    return {cid: _backward(problem, U, X, As, Bs, 0.0, {cid: 1.0}) for cid in problem.constraint_ids()}


# -- solver ------------------------------------------------------------------

def _projected_norm(problem, U, grad):
    if problem.input_set.kind == "box":
        lo = np.asarray(problem.input_set.lower)
        hi = np.asarray(problem.input_set.upper)
        grad = np.where((U <= lo) & (grad > 0), 0.0, grad)
        grad = np.where((U >= hi) & (grad < 0), 0.0, grad)
    return float(np.max(np.abs(grad), initial=0.0))


class _Evaluator:
    """Caches the latest forward pass; L-BFGS-B asks for f and g together."""

    def __init__(self, problem):
        self.problem = problem
        self.shape = (problem.horizon, problem.system.input_dim)
        self.bounds = problem.input_set.bounds(problem.horizon)

    def al(self, lam, rho):
        problem = self.problem

        def fun(z):
            U = z.reshape(self.shape)
            X, As, Bs = _forward(problem.system, problem.x_init, U)
            J = _cost(X, U)
            g = _constraint_values(problem, X, U)
            val = J
            w = {}
            for cid, gi in g.items():
                t = max(0.0, lam[cid] + rho * gi)
                val += (t * t - lam[cid] ** 2) / (2.0 * rho)
                w[cid] = t
            grad = _backward(problem, U, X, As, Bs, 1.0, w)
            return val, grad.ravel()

        return fun

    def restoration(self):
        problem = self.problem

        def fun(z):
            U = z.reshape(self.shape)
            X, As, Bs = _forward(problem.system, problem.x_init, U)
            g = _constraint_values(problem, X, U)
            val = 0.0
            w = {}
            for cid, gi in g.items():
                v = max(0.0, gi)
                val += v * v
                w[cid] = 2.0 * v
            grad = _backward(problem, U, X, As, Bs, 0.0, w)
            return val, grad.ravel()

        return fun

    def minimize(self, fun, U, max_iter, gtol):
        res = minimize(
            fun, U.ravel(), jac=True, method="L-BFGS-B", bounds=self.bounds,
            options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-16, "maxcor": 20},
        )
        return res.x.reshape(self.shape), res


def _lagrangian_stationarity(problem, U, lam):
    X, As, Bs = _forward(problem.system, problem.x_init, U)
    g = _constraint_values(problem, X, U)
    grad = _backward(problem, U, X, As, Bs, 1.0, lam)
    comp = max((abs(lam[c] * g[c]) for c in g), default=0.0)
    return max(_projected_norm(problem, U, grad), comp)


def _max_violation(violations):
    return max((r for _, r in violations), default=0.0)


def _augmented_lagrangian(problem, U, cfg, ev):
    lam = {cid: 0.0 for cid in problem.constraint_ids()}
    rho = cfg.penalty_init
    prev_viol = math.inf
    iterations = 0
    converged = False
    for _ in range(cfg.max_outer):
        iterations += 1
        J0, _ = evaluate(problem, U)
        inner_tol = 0.1 * cfg.grad_tol * max(1.0, J0)
        U, _ = ev.minimize(ev.al(lam, rho), U, cfg.max_inner, inner_tol)
        X = _rollout(problem.system, problem.x_init, U)
        g = _constraint_values(problem, X, U)
        for cid in lam:
            lam[cid] = max(0.0, lam[cid] + rho * g[cid])
        viol = max((max(0.0, v) for v in g.values()), default=0.0)
        J = _cost(X, U)
        stat = _lagrangian_stationarity(problem, U, lam)
        if viol <= cfg.feas_tol and stat <= cfg.grad_tol * max(1.0, J):
            converged = True
            break
        if viol > 0.25 * prev_viol and viol > cfg.feas_tol:
            rho = min(rho * cfg.penalty_growth, cfg.penalty_max)
        prev_viol = viol
        if not lam:
            # unconstrained; one L-BFGS-B pass is the whole solve
            break
    return U, lam, iterations, converged


def _solve_once(problem, U0, cfg):
    ev = _Evaluator(problem)
    U, lam, iterations, converged = _augmented_lagrangian(problem, U0, cfg, ev)
    cost, violations = evaluate(problem, U)
    viol = _max_violation(violations)

    if viol > cfg.feas_tol:
        # one feasibility restoration attempt, then re-optimize from there
        U_r, res = ev.minimize(ev.restoration(), U, cfg.max_inner, 1e-14)
        cost_r, violations_r = evaluate(problem, U_r)
        if _max_violation(violations_r) > cfg.feas_tol:
            status = "max_iter" if res.status == 1 else "infeasible"
            return SolveResult(U_r, cost_r, _max_violation(violations_r), iterations, status, violations_r, lam)
        U2, lam2, it2, converged = _augmented_lagrangian(problem, U_r, cfg, ev)
        iterations += it2
        cost2, violations2 = evaluate(problem, U2)
        if _max_violation(violations2) <= cfg.feas_tol:
            U, lam, cost, violations = U2, lam2, cost2, violations2
        else:
            U, cost, violations, converged = U_r, cost_r, violations_r, False

    viol = _max_violation(violations)
    stat = _lagrangian_stationarity(problem, U, lam)
    status = "optimal" if converged else "feasible_suboptimal"
    return SolveResult(U, cost, viol, iterations, status, violations, dict(lam), stat)


def solve(problem: HorizonProblem, warm_start=None, config: SolverConfig = SolverConfig()) -> SolveResult:
    """Minimize the rollout cost of ``problem`` subject to its constraints.

    ``warm_start`` defaults to all zeros.  With ``config.restarts > 0`` extra
    starts are drawn from a generator seeded with ``config.seed`` and the best
    feasible result is kept.
    """
    U0 = problem.zeros() if warm_start is None else _check_controls(problem, warm_start).copy()
    U0 = problem.input_set.project(U0)
    best = _solve_once(problem, U0, config)
    if config.restarts > 0:
        rng = np.random.default_rng(config.seed)
        scale = max(1.0, float(np.linalg.norm(problem.x_init)))
        for _ in range(config.restarts):
            Ur = problem.input_set.project(rng.normal(scale=scale, size=U0.shape))
            cand = _solve_once(problem, Ur, config)
            if _better(cand, best):
                cand.iterations += best.iterations
                best = cand
    return best


def _better(a, b):
    if a.feasible != b.feasible:
        return a.feasible
    if a.feasible:
        return a.cost < b.cost
    return a.max_constraint_violation < b.max_constraint_violation
