# Comparison controllers and the cost table.
#
# Static feedback u=-3 x2, fixed-horizon RHC without terminal constraint,
# the interval-wise controller with contraction every N steps (no energy
# limit), and a horizon-N RHC that splits the budget proportionally.
# The full table takes about 40 seconds.

# %%
import numpy as np

from irhc.baselines import ProportionalRHC, StaticFeedback, TraditionalRHC
from irhc.controller import ItecSpec, run, window_energies
from irhc.experiments import format_table1_markdown, load_config, table1
from irhc.plant import make_system

system = make_system("oscillator")
x0 = np.array([2.0, -1.0])

rec = run(StaticFeedback(), system, x0, 400)
print("u=-3x2:", rec.status, round(rec.total_cost, 1))

rec = run(TraditionalRHC(system, 8), system, x0, 400)
print("RHC horizon 8:", rec.status, round(rec.total_cost, 1))

# %%
# Horizon 10 looks fine for a long while, then drifts off; it leaves the
# 10|x0| ball only after about 1600 steps.
rec = run(TraditionalRHC(system, 10), system, x0, 2000)
print("RHC horizon 10:", rec.status, "at step", rec.steps)

# %%
# Proportional allocation: a horizon reaching j steps into the next window
# may plan j*C/N of energy there.
itec = ItecSpec(4.8, 4)
# It keeps every window within budget but cannot stop the growth: the
# split leaves too little energy at the moment it is needed.
rec = run(ProportionalRHC(system, itec), system, x0, 400)
print("proportional:", rec.status, round(rec.total_cost, 1), "max window energy",
      round(max(window_energies(rec.controls, itec)), 4))

# %%
rows = table1(load_config("table1.json"))
print(format_table1_markdown(rows))
