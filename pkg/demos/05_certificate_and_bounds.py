# Empirical stabilizability certificate and the cost bound.
#
# sigma is estimated from sampled states in a ball: at each sample the
# cheapest N-step sequence that contracts by beta, and the cheapest one that
# does not let the state grow while spending at most C, must cost no more
# than sigma |x|^2.  With it the closed-loop cost is bounded by
# (1+beta)/(1-beta) sigma |x0|^2, and the Gamma sequence must not increase.

# %%
import numpy as np

from irhc.analysis import certify, check_bounds, gamma_sequence, min_costs
from irhc.controller import IRHC, ItecSpec, run
from irhc.plant import make_system

system = make_system("oscillator")
x0 = np.array([2.0, -1.0])

# At x0 the budgeted problem has no solution with C=4.8: no 4-step
# sequence of that energy keeps |x(4)| <= |x0|.
print("minimal costs at x0 (contractive, budgeted):", min_costs(system, x0, 0.8, 4, 4.8))

# %%
cert = certify(system, 0.8, 4, 4.8, ball_radius=2.5, extra_samples=[x0])
print("sigma_hat =", round(cert.sigma, 3), "all_feasible =", cert.all_feasible,
      f"({len(cert.itec_infeasible)} of {len(cert.sample_states)} samples budget-infeasible)")

# %%
record = run(IRHC(system, 0.8, ItecSpec(4.8, 4)), system, x0, 400)
report = check_bounds(record, system, cert)
for name, c in report["checks"].items():
    print(f"{'PASS' if c['pass'] else 'FAIL'} {name}")
print("cost", round(report["truncated_cost"], 2), "bound", round(report["bound"], 2))

# %%
gs = gamma_sequence(record, system, cert.sigma, 0.8, 4)
print("Gamma_1..5:", np.round(gs.values[:5], 3))
print("Gamma_Q:", round(gs.values[-1], 3))
