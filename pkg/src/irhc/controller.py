"""Interval-wise receding horizon control (IRHC) with contractive terminal constraints.

Energy-constrained windows are ``[(2p-1)N, 2pN-1]`` for ``p = 1, 2, ...``.
The optimization horizon starts at ``2N``, shrinks by one each step and,
on reaching ``N``, is pushed ``N`` steps ahead (reset to ``2N``).  Hence the
horizon always contains the remainder of the active or next window.

The terminal constraint ``|x(k+h)|^2 <= beta**(i+1) |x(0)|^2`` sits at the end
of the current horizon.  In ``itec`` mode the exponent ``i`` grows by one each
time the horizon is pushed over an energy window; in ``non_itec`` mode there
is no energy constraint and the exponent grows at every push.

:func:`step` is the functional core (state in, state out).  :class:`IRHC`
wraps it as a policy for :func:`run`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigurationError, ControllerError
from .plant import DiscreteSystem
from .trajopt import Checkpoint, EnergyWindow, HorizonProblem, InputSet, SolverConfig, solve

__all__ = [
    "ItecSpec",
    "ControllerState",
    "StepRow",
    "RunRecord",
    "init",
    "build_problem",
    "step",
    "shift_warm_start",
    "IRHC",
    "run",
    "itec_windows",
    "window_energies",
    "reconstruct_gamma",
    "MODES",
]

MODES = ("itec", "non_itec")


@dataclass(frozen=True)
class ItecSpec:
    C: float
    N: int

    def __post_init__(self):
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise ConfigurationError(f"N must be a positive integer, got {self.N!r}")
        if not (self.C >= 0 and math.isfinite(self.C)):
            raise ConfigurationError(f"C must be a nonnegative finite number, got {self.C!r}")

    def window(self, p):
        """Inclusive step range of the ``p``-th constrained window (``p >= 1``)."""
        return (2 * p - 1) * self.N, 2 * p * self.N - 1

    def window_containing(self, k):
        """``p`` such that ``k`` lies in window ``p``, or None."""
        if k < self.N:
            return None
        p = k // (2 * self.N) + 1
        lo, hi = self.window(p)
        return p if lo <= k <= hi else None


def itec_windows(itec: ItecSpec, n_steps: int):
    """Windows fully contained in steps ``0..n_steps-1``."""
    out = []
    p = 1
    while True:
        lo, hi = itec.window(p)
        if hi >= n_steps:
            return out
        out.append((lo, hi))
        p += 1


def window_energies(controls, itec: ItecSpec):
    """Applied energy ``sum |u|^2`` over each completed window."""
    U = np.asarray(controls, dtype=float).reshape(len(controls), -1)
    return [float(np.sum(U[lo:hi + 1] ** 2)) for lo, hi in itec_windows(itec, U.shape[0])]


@dataclass(frozen=True, eq=False)
class ControllerState:
    """Bookkeeping carried between solves.

    ``f`` is kept for trace fidelity only; energy accrues whenever ``k`` lies
    inside window ``[p, p+N-1]``.  ``plan`` is the last optimal control
    sequence, used to warm start the next solve.
    """

    k: int
    h: int
    gamma: float
    i: int
    f: int
    p: int
    x0_norm_sq: float
    beta: float
    itec: ItecSpec
    mode: str = "itec"
    hold_checkpoint: bool = True
    checkpoint_time: Optional[int] = None
    checkpoint_bound: Optional[float] = None
    plan: Optional[np.ndarray] = None

    @property
    def N(self):
        return self.itec.N

    @property
    def terminal_bound(self):
        return self.beta ** (self.i + 1) * self.x0_norm_sq

    @property
    def terminal_time(self):
        return self.k + self.h


def init(beta, itec: ItecSpec, x0, mode="itec", hold_checkpoint=True) -> ControllerState:
    if not (0.0 <= beta < 1.0):
        raise ConfigurationError(f"beta must lie in [0, 1), got {beta!r}")
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    x0 = np.asarray(x0, dtype=float)
    N = itec.N
    return ControllerState(
        k=0, h=2 * N, gamma=0.0, i=0, f=0, p=N,
        x0_norm_sq=float(x0 @ x0), beta=float(beta), itec=itec, mode=mode,
        hold_checkpoint=bool(hold_checkpoint),
    )


def build_problem(state: ControllerState, x_k, system: DiscreteSystem,
                  input_set: InputSet = InputSet()) -> HorizonProblem:
    """The finite-horizon problem solved at ``state.k``."""
    window = None
    if state.mode == "itec":
        start = max(state.p, state.k) - state.k
        end = state.p + state.N - 1 - state.k
        window = EnergyWindow(start, end, max(0.0, state.itec.C - state.gamma))
    checkpoint = None
    if state.checkpoint_time is not None and state.checkpoint_time > state.k:
        checkpoint = Checkpoint(state.checkpoint_time - state.k, state.checkpoint_bound)
    return HorizonProblem(
        x_init=x_k, horizon=state.h, system=system, input_set=input_set,
        energy_window=window, terminal_bound=state.terminal_bound, checkpoint=checkpoint,
    )


def shift_warm_start(plan, new_horizon, input_dim):
    """Drop the applied first control and pad with zeros to ``new_horizon``."""
    out = np.zeros((new_horizon, input_dim))
    if plan is not None:
        tail = np.asarray(plan)[1:new_horizon + 1]
        out[:tail.shape[0]] = tail
    return out


def _advance(state: ControllerState, u_applied) -> ControllerState:
    k, h, gamma, i, f, p = state.k, state.h, state.gamma, state.i, state.f, state.p
    N = state.N
    ck_time, ck_bound = state.checkpoint_time, state.checkpoint_bound
    if state.mode == "itec" and p <= k <= p + N - 1:
        gamma += float(np.dot(u_applied, u_applied))
    h -= 1
    if h == N:
        if state.hold_checkpoint:
            ck_time, ck_bound = state.terminal_time, state.terminal_bound
        h = 2 * N
        gamma = 0.0
        if state.mode == "non_itec":
            i += 1
        elif k == p - 1:
            i += 1
            f = 1
        elif k == p + N - 1:
            p += 2 * N
            f = 0
    return replace(state, k=k + 1, h=h, gamma=gamma, i=i, f=f, p=p,
                   checkpoint_time=ck_time, checkpoint_bound=ck_bound)


@dataclass
class StepRow:
    k: int
    x: np.ndarray
    u: np.ndarray
    h: int
    gamma: float
    i: int
    terminal_bound: float
    solver_status: str
    stage_cost: float


def step(state: ControllerState, x_k, system: DiscreteSystem,
         solver: SolverConfig = SolverConfig(), input_set: InputSet = InputSet()):
    """One pass of the IRHC loop.

    Returns ``(u_applied, next_state, row)``; ``row.stage_cost`` is left at
    NaN because the successor state is not known here.
    """
    x_k = np.asarray(x_k, dtype=float)
    problem = build_problem(state, x_k, system, input_set)
    warm = shift_warm_start(state.plan, state.h, system.input_dim) if state.plan is not None else None
    result = solve(problem, warm, solver)
    if not result.feasible:
        raise ControllerError(f"horizon problem {result.status}", step=state.k, last_state=x_k, result=result)
    u = result.controls[0].copy()
    row = StepRow(state.k, x_k, u, state.h, state.gamma, state.i, state.terminal_bound,
                  result.status, float("nan"))
    nxt = replace(_advance(state, u), plan=result.controls)
    return u, nxt, row


class IRHC:
    """Stateful policy wrapper around :func:`step`."""

    def __init__(self, system, beta, itec: ItecSpec, mode="itec",
                 solver: SolverConfig = SolverConfig(), input_set: InputSet = InputSet(),
                 hold_checkpoint=True):
        if not (0.0 <= beta < 1.0):
            raise ConfigurationError(f"beta must lie in [0, 1), got {beta!r}")
        self.system = system
        self.beta = beta
        self.itec = itec
        self.mode = mode
        self.solver = solver
        self.input_set = input_set
        self.hold_checkpoint = hold_checkpoint
        self.state = None

    def reset(self, x0):
        self.state = init(self.beta, self.itec, x0, self.mode, self.hold_checkpoint)

    def __call__(self, x_k):
        u, self.state, row = step(self.state, x_k, self.system, self.solver, self.input_set)
        return u, row


# -- closed loop ---------------------------------------------------------------

CSV_COLUMNS = ("k", "x", "u", "h", "gamma", "i", "terminal_bound", "solver_status", "stage_cost")


@dataclass
class RunRecord:
    """Per-step trace of a closed-loop run plus its summary."""

    rows: list
    final_state: np.ndarray
    converged: bool = False
    diverged: bool = False
    error: Optional[str] = None
    error_step: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def steps(self):
        return len(self.rows)

    @property
    def states(self):
        xs = [r.x for r in self.rows] + [self.final_state]
        return np.array(xs, dtype=float)

    @property
    def controls(self):
        if not self.rows:
            return np.zeros((0, len(self.final_state)))
        return np.array([r.u for r in self.rows], dtype=float)

    @property
    def total_cost(self):
        return float(sum(r.stage_cost for r in self.rows))

    @property
    def status(self):
        if self.error is not None:
            return "aborted"
        if self.diverged:
            return "unstable"
        return "converged" if self.converged else "max_steps"

    def summary(self, itec: Optional[ItecSpec] = None):
        out = {
            "status": self.status,
            "total_cost": self.total_cost,
            "steps": self.steps,
            "converged": self.converged,
            "diverged": self.diverged,
            "final_state_norm": float(np.linalg.norm(self.final_state)),
        }
        if itec is not None:
            out["itec_window_energies"] = window_energies(self.controls, itec) if self.rows else []
        if self.error is not None:
            out["error"] = self.error
            out["error_step"] = self.error_step
        out.update(self.meta)
        return out

    def to_csv(self) -> str:
        n = len(self.final_state)
        m = self.rows[0].u.shape[0] if self.rows else 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k"] + [f"x{j + 1}" for j in range(n)] + [f"u{j + 1}" for j in range(m)]
                   + ["h", "gamma", "i", "terminal_bound", "solver_status", "stage_cost"])
        for r in self.rows:
            w.writerow([r.k] + [_fmt(v) for v in r.x] + [_fmt(v) for v in r.u]
                       + [r.h, _fmt(r.gamma), r.i, _fmt(r.terminal_bound), r.solver_status, _fmt(r.stage_cost)])
        return buf.getvalue()

    def summary_json(self, itec=None) -> str:
        return json.dumps(self.summary(itec), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_csv(cls, text: str, final_state=None, system: Optional[DiscreteSystem] = None):
        """Parse :meth:`to_csv` output.

        The CSV holds ``x(0..K-1)``; the final state is taken from
        ``final_state`` or recomputed with ``system``.
        """
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        xcols = [j for j, c in enumerate(header) if c.startswith("x")]
        ucols = [j for j, c in enumerate(header) if c.startswith("u")]
        col = {c: j for j, c in enumerate(header)}
        rows = []
        for rec in reader:
            if not rec:
                continue
            rows.append(StepRow(
                k=int(rec[col["k"]]),
                x=np.array([float(rec[j]) for j in xcols]),
                u=np.array([float(rec[j]) for j in ucols]),
                h=int(rec[col["h"]]),
                gamma=float(rec[col["gamma"]]),
                i=int(rec[col["i"]]),
                terminal_bound=float(rec[col["terminal_bound"]]),
                solver_status=rec[col["solver_status"]],
                stage_cost=float(rec[col["stage_cost"]]),
            ))
        if final_state is None:
            if system is None:
                raise ValueError("need final_state or system to close the trace")
            final_state = system.step(rows[-1].x, rows[-1].u) if rows else None
        return cls(rows, np.asarray(final_state, dtype=float))


def _fmt(v):
    return repr(float(v))


def run(policy, system: DiscreteSystem, x0, max_steps: int, convergence_eps: float = 1e-3,
        divergence_factor: float = 10.0) -> RunRecord:
    """Close the loop between ``policy`` and ``system``.

    ``policy`` is either an object with ``reset(x0)`` and ``__call__(x) -> (u, row)``,
    or a plain function ``x -> u``.  Stops when ``|x| < convergence_eps``
    (converged), ``|x| > divergence_factor*|x0|`` or non-finite (diverged),
    on a controller failure (recorded, not raised), or at ``max_steps``.
    """
    if max_steps < 1:
        raise ConfigurationError("max_steps must be at least 1")
    x = np.asarray(x0, dtype=float).copy()
    x0_norm = float(np.linalg.norm(x))
    if hasattr(policy, "reset"):
        policy.reset(x)
    rows = []
    rec = RunRecord(rows, x)
    for k in range(max_steps):
        if np.linalg.norm(x) < convergence_eps:
            rec.converged = True
            break
        try:
            out = policy(x)
        except ControllerError as exc:
            rec.error, rec.error_step = str(exc), exc.step
            break
        if isinstance(out, tuple):
            u, row = out
        else:
            u = np.atleast_1d(np.asarray(out, dtype=float))
            row = StepRow(k, x, u, 0, 0.0, 0, float("nan"), "static", float("nan"))
        row.k = k
        row.x = x
        x_next = system.step(x, u)
        row.stage_cost = float(x_next @ x_next + u @ u)
        rows.append(row)
        x = x_next
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > divergence_factor * x0_norm:
            rec.diverged = True
            break
    else:
        rec.converged = bool(np.linalg.norm(x) < convergence_eps)
    rec.final_state = x
    return rec


def reconstruct_gamma(controls, itec: ItecSpec):
    """Energy spent inside the active window before each step ``k``."""
    U = np.asarray(controls, dtype=float).reshape(len(controls), -1)
    out = []
    for k in range(U.shape[0]):
        p = itec.window_containing(k)
        if p is None:
            out.append(0.0)
        else:
            lo, _ = itec.window(p)
            out.append(float(np.sum(U[lo:k] ** 2)))
    return out
