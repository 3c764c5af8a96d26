"""Independent reference computations shared by the unit and acceptance tests.

Nothing here calls the optimizer or the adjoint; costs are rebuilt from the
plain step map so the checks do not share code paths with what they test.
"""

import numpy as np

from irhc.plant import make_system
from irhc.trajopt import EnergyWindow, HorizonProblem, InputSet

GRID_POINTS = 201


def scalar_instance(seed):
    """Seeded scalar-linear problem with a box input set, horizon 1..3, maybe an energy window."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.5, 1.5)
    b = rng.choice([-1, 1]) * rng.uniform(0.2, 2.0)
    h = int(rng.integers(1, 4))
    lo, hi = -rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5)
    window = None
    if rng.random() < 0.5:
        start = int(rng.integers(0, h))
        end = int(rng.integers(start, h))
        window = EnergyWindow(start, end, float(rng.uniform(0.05, 1.0)))
    system = make_system("scalar_linear", a=a, b=b)
    return HorizonProblem(np.array([rng.uniform(-2, 2)]), h, system, InputSet.box([lo], [hi]), energy_window=window)


def grid_search(problem, points=GRID_POINTS):
    """Exhaustive minimum over a uniform grid on the box.

    Returns ``(best_cost, increment)`` where ``increment`` is the largest cost
    change between the best grid point and a feasible grid neighbour.
    """
    a = problem.system.A[0, 0]
    b = problem.system.B[0, 0]
    grid = np.linspace(problem.input_set.lower[0], problem.input_set.upper[0], points)
    h = problem.horizon
    shape = (points,) * h
    x = np.full((), problem.x_init[0])
    cost = np.zeros(())
    energy = np.zeros(())
    win = problem.energy_window
    for k in range(h):
        u = grid.reshape((1,) * k + (points,))
        x = a * x[..., None] + b * u
        cost = cost[..., None] + x ** 2 + u ** 2
        energy = energy[..., None] + ((u ** 2) if (win is not None and win.start <= k <= win.end) else 0.0 * u)
    cost = np.broadcast_to(cost, shape)
    if win is not None:
        cost = np.where(np.broadcast_to(energy, shape) <= win.budget, cost, np.inf)
    idx = np.unravel_index(np.argmin(cost), shape)
    best = float(cost[idx])
    increment = 0.0
    for axis in range(h):
        for d in (-1, 1):
            nb = list(idx)
            nb[axis] += d
            if 0 <= nb[axis] < points and np.isfinite(cost[tuple(nb)]):
                increment = max(increment, abs(float(cost[tuple(nb)]) - best))
    return best, increment


def reference_cost(problem, U):
    """Stage-cost sum rebuilt from ``system.step`` alone."""
    x = np.array(problem.x_init, dtype=float)
    total = 0.0
    for u in np.asarray(U, dtype=float).reshape(problem.horizon, -1):
        x = problem.system.step(x, u)
        total += float(x @ x + u @ u)
    return total


def reference_constraints(problem, U):
    """Constraint residuals ``max(0, g)`` from an independent rollout."""
    U = np.asarray(U, dtype=float).reshape(problem.horizon, -1)
    xs = [np.array(problem.x_init, dtype=float)]
    for u in U:
        xs.append(problem.system.step(xs[-1], u))
    out = {}
    w = problem.energy_window
    if w is not None:
        out["energy"] = max(0.0, float(np.sum(U[w.start:w.end + 1] ** 2)) - w.budget)
    if problem.terminal_bound is not None and np.isfinite(problem.terminal_bound):
        out["terminal"] = max(0.0, float(xs[-1] @ xs[-1]) - problem.terminal_bound)
    if problem.checkpoint is not None:
        xc = xs[problem.checkpoint.offset]
        out["checkpoint"] = max(0.0, float(xc @ xc) - problem.checkpoint.bound)
    if problem.input_set.kind == "box":
        lo, hi = np.asarray(problem.input_set.lower), np.asarray(problem.input_set.upper)
        out["input"] = float(max(np.max(lo - U, initial=0.0), np.max(U - hi, initial=0.0)))
    return out


def central_difference(fun, U, eps=1e-6):
    U = np.asarray(U, dtype=float)
    g = np.zeros_like(U)
    for idx in np.ndindex(U.shape):
        e = np.zeros_like(U)
        e[idx] = eps
        g[idx] = (fun(U + e) - fun(U - e)) / (2 * eps)
    return g


def gradient_instance(seed):
    """Seeded oscillator or scalar problem plus a random control sequence."""
    rng = np.random.default_rng(seed)
    if rng.random() < 0.7:
        system = make_system("oscillator", method=str(rng.choice(["euler", "rk4"])))
        x0 = rng.uniform(-2.5, 2.5, size=2)
    else:
        system = make_system("scalar_linear", a=rng.uniform(-1.5, 1.5), b=rng.uniform(-2, 2))
        x0 = rng.uniform(-2, 2, size=1)
    h = int(rng.integers(1, 11))
    problem = HorizonProblem(x0, h, system, terminal_bound=float(rng.uniform(0, 2)))
    U = rng.normal(scale=1.5, size=(h, system.input_dim))
    return problem, U
