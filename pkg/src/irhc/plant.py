"""Plant models, fixed-step discretization and closed-loop bookkeeping.

A :class:`PlantModel` is a continuous-time vector field ``f(x, u)``.  The
controller never sees it directly; it works with a :class:`DiscreteSystem`,
i.e. a step map ``x(k+1) = phi(x(k), u(k))`` together with its Jacobians,
which is what single shooting needs for rollouts and adjoint sweeps.

Conventions:

- ``x`` is a 1D array of shape ``[n]``, ``u`` a 1D array of shape ``[m]``.
- Control sequences are 2D arrays of shape ``[K, m]``.
- Norms are Euclidean; stage cost is ``|x(k+1)|^2 + |u(k)|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numba import njit

from .errors import ConfigurationError, DimensionError, NumericalDomainError

__all__ = [
    "PlantModel",
    "DiscretizerConfig",
    "DiscreteSystem",
    "DiscretizedPlant",
    "LinearSystem",
    "Trajectory",
    "eval_continuous",
    "discretize",
    "discretize_step",
    "simulate",
    "trajectory_cost",
    "stage_costs",
    "oscillator",
    "linear_plant",
    "scalar_linear",
    "make_system",
    "PRESETS",
]


@dataclass(frozen=True)
class PlantModel:
    """Continuous-time dynamics ``xdot = dynamics(x, u)``.

    ``jacobian``, when given, returns ``(df/dx, df/du)`` with shapes
    ``[n, n]`` and ``[n, m]``.  Without it the discretizer falls back to
    central differences.
    """

    state_dim: int
    input_dim: int
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None
    name: str = "plant"
    jit: bool = False

    def __post_init__(self):
        if self.state_dim < 1 or self.input_dim < 1:
            raise ConfigurationError("state_dim and input_dim must be positive")


@dataclass(frozen=True)
class DiscretizerConfig:
    dt: float = 0.05
    method: str = "rk4"

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be a positive finite number, got {self.dt!r}")
        if self.method not in ("euler", "rk4"):
            raise ConfigurationError(f"unknown discretization method {self.method!r}")


def _as_vector(v, dim, what):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise DimensionError(f"{what} must have shape ({dim},), got {arr.shape}")
    return arr


def _check_finite(*arrays, step=None):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalDomainError("non-finite state or input", step=step)


def eval_continuous(model: PlantModel, x, u) -> np.ndarray:
    """Evaluate the vector field of ``model`` at ``(x, u)``."""
    x = _as_vector(x, model.state_dim, "state")
    u = _as_vector(u, model.input_dim, "input")
    out = np.asarray(model.dynamics(x, u), dtype=float)
    if out.shape != (model.state_dim,):
        raise DimensionError(f"dynamics returned shape {out.shape}, expected ({model.state_dim},)")
    return out


def _fd_jacobian(model, x, u, eps=1e-6):
    n, m = model.state_dim, model.input_dim
    fx = np.empty((n, n))
    fu = np.empty((n, m))
    for i in range(n):
        d = np.zeros(n)
        d[i] = eps
        fx[:, i] = (model.dynamics(x + d, u) - model.dynamics(x - d, u)) / (2 * eps)
    for i in range(m):
        d = np.zeros(m)
        d[i] = eps
        fu[:, i] = (model.dynamics(x, u + d) - model.dynamics(x, u - d)) / (2 * eps)
    return fx, fu


class DiscreteSystem:
    """Discrete-time step map with Jacobians.

    Subclasses implement :meth:`step` and :meth:`linearize`, and may override
    the two rollout methods with something faster.  None of these validate
    their arguments; that is the job of the public helpers
    (:func:`discretize_step`, :func:`simulate`) and of the optimizer, which
    calls them in tight loops.
    """

    state_dim: int
    input_dim: int

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def linearize(self, x: np.ndarray, u: np.ndarray):
        """Return ``(x_next, A, B)`` with ``A = d x_next / d x`` and ``B = d x_next / d u``."""
        raise NotImplementedError

    def rollout(self, x0: np.ndarray, U: np.ndarray) -> np.ndarray:
        """States ``x(0..h)``, shape ``[h+1, n]``."""
        X = np.empty((U.shape[0] + 1, self.state_dim))
        X[0] = x = x0
        for k in range(U.shape[0]):
            X[k + 1] = x = self.step(x, U[k])
        return X

    def rollout_linearized(self, x0: np.ndarray, U: np.ndarray):
        """States plus stacked step Jacobians ``A[h, n, n]`` and ``B[h, n, m]``."""
        h = U.shape[0]
        X = np.empty((h + 1, self.state_dim))
        As = np.empty((h, self.state_dim, self.state_dim))
        Bs = np.empty((h, self.state_dim, self.input_dim))
        X[0] = x = x0
        for k in range(h):
            x, As[k], Bs[k] = self.linearize(x, U[k])
            X[k + 1] = x
        return X, As, Bs


class DiscretizedPlant(DiscreteSystem):
    """Zero-order-hold discretization of a :class:`PlantModel`."""

    def __init__(self, model: PlantModel, cfg: DiscretizerConfig = DiscretizerConfig()):
        self.model = model
        self.cfg = cfg
        self.state_dim = model.state_dim
        self.input_dim = model.input_dim
        self._jac = model.jacobian or (lambda x, u: _fd_jacobian(model, x, u))
        self._kernels = _compiled_kernels(model) if model.jit else None

    def __repr__(self):
        return f"DiscretizedPlant({self.model.name!r}, dt={self.cfg.dt}, method={self.cfg.method!r})"

    def step(self, x, u):
        f = self.model.dynamics
        dt = self.cfg.dt
        if self.cfg.method == "euler":
            return x + dt * f(x, u)
        k1 = f(x, u)
        k2 = f(x + 0.5 * dt * k1, u)
        k3 = f(x + 0.5 * dt * k2, u)
        k4 = f(x + dt * k3, u)
        return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def linearize(self, x, u):
        f = self.model.dynamics
        jac = self._jac
        dt = self.cfg.dt
        n = self.state_dim
        eye = np.eye(n)
        k1 = f(x, u)
        fx1, fu1 = jac(x, u)
        if self.cfg.method == "euler":
            return x + dt * k1, eye + dt * fx1, dt * fu1

        # chain rule through the four stages, input held constant
        x2 = x + 0.5 * dt * k1
        k2 = f(x2, u)
        fx2, fu2 = jac(x2, u)
        d2x = fx2 @ (eye + 0.5 * dt * fx1)
        d2u = fx2 @ (0.5 * dt * fu1) + fu2

        x3 = x + 0.5 * dt * k2
        k3 = f(x3, u)
        fx3, fu3 = jac(x3, u)
        d3x = fx3 @ (eye + 0.5 * dt * d2x)
        d3u = fx3 @ (0.5 * dt * d2u) + fu3

        x4 = x + dt * k3
        k4 = f(x4, u)
        fx4, fu4 = jac(x4, u)
        d4x = fx4 @ (eye + dt * d3x)
        d4u = fx4 @ (dt * d3u) + fu4

        c = dt / 6.0
        x_next = x + c * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        A = eye + c * (fx1 + 2.0 * d2x + 2.0 * d3x + d4x)
        B = c * (fu1 + 2.0 * d2u + 2.0 * d3u + d4u)
        return x_next, A, B

    def rollout(self, x0, U):
        if self._kernels is None:
            return super().rollout(x0, U)
        return self._kernels[0](x0, U, self.cfg.dt, self.cfg.method == "rk4")

    def rollout_linearized(self, x0, U):
        if self._kernels is None:
            return super().rollout_linearized(x0, U)
        return self._kernels[1](x0, U, self.cfg.dt, self.cfg.method == "rk4")


_KERNELS = {}


def _compiled_kernels(model):
    """Numba rollout kernels for a model whose dynamics and jacobian are njit functions."""
    key = (model.dynamics, model.jacobian)
    if key in _KERNELS:
        return _KERNELS[key]
    f = model.dynamics
    jac = model.jacobian
    n = model.state_dim
    m = model.input_dim

    @njit(cache=False)
    def rollout(x0, U, dt, rk4):
        h = U.shape[0]
        X = np.empty((h + 1, n))
        X[0] = x0
        for k in range(h):
            x = X[k]
            u = U[k]
            k1 = f(x, u)
            if rk4:
                k2 = f(x + 0.5 * dt * k1, u)
                k3 = f(x + 0.5 * dt * k2, u)
                k4 = f(x + dt * k3, u)
                X[k + 1] = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            else:
                X[k + 1] = x + dt * k1
        return X

    @njit(cache=False)
    def rollout_linearized(x0, U, dt, rk4):
        h = U.shape[0]
        X = np.empty((h + 1, n))
        As = np.empty((h, n, n))
        Bs = np.empty((h, n, m))
        eye = np.eye(n)
        X[0] = x0
        for k in range(h):
            x = X[k]
            u = U[k]
            k1 = f(x, u)
            fx1, fu1 = jac(x, u)
            if not rk4:
                X[k + 1] = x + dt * k1
                As[k] = eye + dt * fx1
                Bs[k] = dt * fu1
                continue
            x2 = x + 0.5 * dt * k1
            k2 = f(x2, u)
            fx2, fu2 = jac(x2, u)
            d2x = fx2 @ (eye + 0.5 * dt * fx1)
            d2u = fx2 @ (0.5 * dt * fu1) + fu2
            x3 = x + 0.5 * dt * k2
            k3 = f(x3, u)
            fx3, fu3 = jac(x3, u)
            d3x = fx3 @ (eye + 0.5 * dt * d2x)
            d3u = fx3 @ (0.5 * dt * d2u) + fu3
            x4 = x + dt * k3
            k4 = f(x4, u)
            fx4, fu4 = jac(x4, u)
            d4x = fx4 @ (eye + dt * d3x)
            d4u = fx4 @ (dt * d3u) + fu4
            c = dt / 6.0
            X[k + 1] = x + c * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            As[k] = eye + c * (fx1 + 2.0 * d2x + 2.0 * d3x + d4x)
            Bs[k] = c * (fu1 + 2.0 * d2u + 2.0 * d3u + d4u)
        return X, As, Bs

    _KERNELS[key] = (rollout, rollout_linearized)
    return _KERNELS[key]


class LinearSystem(DiscreteSystem):
    """``x(k+1) = A x(k) + B u(k)``."""

    def __init__(self, A, B):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        if self.A.shape[0] != self.A.shape[1] or self.B.shape[0] != self.A.shape[0]:
            raise ConfigurationError(f"incompatible shapes A{self.A.shape}, B{self.B.shape}")
        self.state_dim = self.A.shape[0]
        self.input_dim = self.B.shape[1]

    def __repr__(self):
        return f"LinearSystem(A={self.A.tolist()}, B={self.B.tolist()})"

    def step(self, x, u):
        return self.A @ x + self.B @ u

    def linearize(self, x, u):
        return self.A @ x + self.B @ u, self.A, self.B

    def rollout_linearized(self, x0, U):
        h = U.shape[0]
        X = self.rollout(x0, U)
        return X, np.broadcast_to(self.A, (h,) + self.A.shape), np.broadcast_to(self.B, (h,) + self.B.shape)


def discretize(model: PlantModel, cfg: DiscretizerConfig = DiscretizerConfig()) -> DiscretizedPlant:
    return DiscretizedPlant(model, cfg)


def discretize_step(model: PlantModel, x, u, cfg: DiscretizerConfig = DiscretizerConfig()) -> np.ndarray:
    """One zero-order-hold step of ``model`` from ``x`` under constant input ``u``."""
    x = _as_vector(x, model.state_dim, "state")
    u = _as_vector(u, model.input_dim, "input")
    _check_finite(x, u)
    x_next = DiscretizedPlant(model, cfg).step(x, u)
    _check_finite(x_next)
    return x_next


@dataclass
class Trajectory:
    """States ``x(0..K)`` and the controls ``u(0..K-1)`` that produced them."""

    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.controls = np.asarray(self.controls, dtype=float)
        if self.controls.ndim == 1:
            self.controls = self.controls.reshape(-1, 1)
        if self.states.shape[0] != self.controls.shape[0] + 1:
            raise DimensionError(
                f"need len(states) == len(controls) + 1, got {self.states.shape[0]} and {self.controls.shape[0]}"
            )

    def __len__(self):
        return self.controls.shape[0]


def _as_controls(controls, m):
    U = np.asarray(controls, dtype=float)
    if U.ndim == 1:
        U = U.reshape(-1, m) if m > 1 else U.reshape(-1, 1)
    if U.ndim != 2 or U.shape[1] != m:
        raise DimensionError(f"controls must have shape (K, {m}), got {U.shape}")
    return U


def simulate(system: DiscreteSystem, x0, controls) -> Trajectory:
    """Roll ``system`` forward from ``x0`` under ``controls``."""
    x = _as_vector(x0, system.state_dim, "initial state")
    U = _as_controls(controls, system.input_dim)
    if U.shape[0] == 0:
        raise DimensionError("controls must be nonempty")
    _check_finite(x, step=0)
    states = np.empty((U.shape[0] + 1, system.state_dim))
    states[0] = x
    for k, u in enumerate(U):
        _check_finite(u, step=k)
        x = system.step(x, u)
        _check_finite(x, step=k)
        states[k + 1] = x
    return Trajectory(states, U)


def stage_costs(traj: Trajectory) -> np.ndarray:
    """Per-step charges ``|x(k+1)|^2 + |u(k)|^2`` for ``k = 0..K-1``."""
    return np.sum(traj.states[1:] ** 2, axis=1) + np.sum(traj.controls ** 2, axis=1)


def trajectory_cost(traj: Trajectory) -> float:
    """Sum of stage costs; the initial state is not charged."""
    return float(np.sum(stage_costs(traj)))


# -- presets -----------------------------------------------------------------

_HALF_PI = 0.5 * math.pi


@njit(cache=True)
def _oscillator_f(x, u):
    x1 = x[0]
    s = 1.0 + 25.0 * x1 * x1
    out = np.empty(2)
    out[0] = x[1]
    out[1] = -x1 * (_HALF_PI + math.atan(5.0 * x1)) - 5.0 * x1 * x1 / (2.0 * s) + 4.0 * x[1] + 3.0 * u[0]
    return out


@njit(cache=True)
def _oscillator_jac(x, u):
    x1 = x[0]
    s = 1.0 + 25.0 * x1 * x1
    fx = np.zeros((2, 2))
    fx[0, 1] = 1.0
    fx[1, 0] = -(_HALF_PI + math.atan(5.0 * x1)) - 5.0 * x1 / s - 5.0 * x1 / (s * s)
    fx[1, 1] = 4.0
    fu = np.zeros((2, 1))
    fu[1, 0] = 3.0
    return fx, fu


def oscillator() -> PlantModel:
    """Two-state nonlinear oscillator with an unstable linear part.

    ``x1' = x2``,
    ``x2' = -x1 (pi/2 + atan(5 x1)) - 5 x1^2 / (2 (1 + 25 x1^2)) + 4 x2 + 3 u``.
    """
    return PlantModel(2, 1, _oscillator_f, _oscillator_jac, name="oscillator", jit=True)


def linear_plant(A, B, name="linear") -> PlantModel:
    """Continuous-time ``xdot = A x + B u``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return PlantModel(
        A.shape[0], B.shape[1],
        lambda x, u: A @ x + B @ u,
        lambda x, u: (A, B),
        name=name,
    )


def scalar_linear(a=1.0, b=1.0) -> LinearSystem:
    """Discrete scalar system ``x(k+1) = a x(k) + b u(k)``."""
    return LinearSystem([[a]], [[b]])


PRESETS = ("oscillator", "scalar_linear")


def make_system(name: str, dt: float = 0.05, method: str = "euler", a: float = 1.0, b: float = 1.0) -> DiscreteSystem:
    """Build a preset discrete system by name."""
    if name == "oscillator":
        return DiscretizedPlant(oscillator(), DiscretizerConfig(dt, method))
    if name == "scalar_linear":
        return scalar_linear(a, b)
    raise ConfigurationError(f"unknown plant preset {name!r}; expected one of {PRESETS}")
