# Plant models and discretization.
#
# The oscillator is a two-state system whose linear part is unstable
# (the x2 coefficient is +4).  It is sampled every 0.05 time units with a
# zero-order hold; Euler and RK4 are both available.

# %%
import numpy as np

from irhc.plant import DiscretizerConfig, Trajectory, eval_continuous, make_system, oscillator, simulate, trajectory_cost

model = oscillator()
print("f([2,-1], 0) =", eval_continuous(model, [2.0, -1.0], [0.0]))
print("f([2,-1], 1) =", eval_continuous(model, [2.0, -1.0], [1.0]))

# %%
# One sampling period from x0 under each scheme.  The two differ by a few
# 1e-3 per step, which compounds over a long closed-loop run.
x0 = np.array([2.0, -1.0])
for method in ("euler", "rk4"):
    system = make_system("oscillator", dt=0.05, method=method)
    print(f"{method:5s} x(1) =", system.step(x0, np.zeros(1)))

# %%
# Left alone, the state grows: after 40 steps it is far from the origin.
system = make_system("oscillator")
traj = simulate(system, x0, np.zeros((40, 1)))
print("|x(40)| without control:", np.linalg.norm(traj.states[-1]))

# %%
# The stage cost charges |x(k)|^2 for k >= 1 and |u(k-1)|^2; x(0) is free.
print("cost of [[1],[2],[0]] under [[1],[1]]:",
      trajectory_cost(Trajectory([[1.0], [2.0], [0.0]], [[1.0], [1.0]])))
