# A single finite-horizon problem.
#
# Controls are the only decision variables; states come from the rollout.
# Energy and terminal constraints are handled by an augmented Lagrangian,
# box inputs by the bounds of the inner quasi-Newton solver.

# %%
import numpy as np

from irhc.plant import make_system, scalar_linear
from irhc.trajopt import EnergyWindow, HorizonProblem, evaluate, gradient, solve

# x(k+1) = x(k) + u(k) from x=1, one step: the unconstrained optimum is u=-0.5.
unit = scalar_linear(1.0, 1.0)
r = solve(HorizonProblem(np.array([1.0]), 1, unit))
print(r.status, r.controls.ravel(), r.cost)

# With a budget u^2 <= 0.04 the optimum moves to the boundary, u=-0.2.
r = solve(HorizonProblem(np.array([1.0]), 1, unit, energy_window=EnergyWindow(0, 0, 0.04)))
print(r.status, r.controls.ravel(), r.cost, r.multipliers)

# %%
# The first problem the controller solves on the oscillator: horizon 8,
# energy 4.8 over steps 4..7 and |x(8)|^2 <= 0.8 |x0|^2.
osc = make_system("oscillator")
x0 = np.array([2.0, -1.0])
problem = HorizonProblem(x0, 8, osc, energy_window=EnergyWindow(4, 7, 4.8), terminal_bound=0.8 * 5.0)
r = solve(problem)
print(r.status, "cost", round(r.cost, 4), "iterations", r.iterations)
print("energy over the window:", float(np.sum(r.controls[4:] ** 2)))
X = osc.rollout(x0, r.controls)
print("|x(8)|^2 =", float(X[-1] @ X[-1]))

# %%
# The gradient comes from a backward (adjoint) sweep; compare one entry
# with a central difference.
U = r.controls
g = gradient(problem, U)
e = np.zeros_like(U)
e[3, 0] = 1e-6
fd = (evaluate(problem, U + e)[0] - evaluate(problem, U - e)[0]) / 2e-6
print("dJ/du3 adjoint", g[3, 0], "finite difference", fd)
