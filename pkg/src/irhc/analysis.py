"""Empirical stabilizability certificates and stability-bound diagnostics.

A system is beta-stabilizable with horizon ``N`` and budget ``C`` on a ball
if some ``sigma > 0`` makes two feasibility problems solvable from every
state ``x`` in the ball:

- *contractive*: an ``N``-step sequence with cost ``<= sigma |x|^2`` and
  ``|x(N)|^2 <= beta |x|^2``;
- *budgeted*: an ``N``-step sequence with cost ``<= sigma |x|^2``,
  ``|x(N)|^2 <= |x|^2`` and ``sum |u|^2 <= C``.

Both are decided here by minimizing the cost under the state/energy
constraints and comparing the optimum with ``sigma |x|^2``.  The optimizer
is local, so a certificate built from samples is a falsifiable empirical
claim, nothing more.

The Gamma diagnostics follow the cost functional

    Gamma_q = sum_{j=1}^{(q+1)N} |x(j)|^2 + |v_q(j-1)|^2
              + sigma |x(0)|^2 sum_{j=q+1}^inf beta^ceil(j/2)

where ``v_q`` is the applied control sequence cut after ``(q+1)N`` steps and
padded with zeros.  For a certified system the sequence is nonincreasing and
bounded by ``(1+beta)/(1-beta) sigma |x(0)|^2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .controller import RunRecord
from .errors import CertificationError
from .trajopt import EnergyWindow, HorizonProblem, InputSet, SolverConfig, solve

__all__ = [
    "Feasibility",
    "Certificate",
    "GammaSequence",
    "certify_contractive",
    "certify_itec",
    "min_costs",
    "estimate_sigma",
    "sample_ball",
    "certify",
    "ceil_half_tail",
    "gamma_sequence",
    "itec_cost_bound",
    "non_itec_cost_bound",
    "contraction_envelope",
    "check_bounds",
]


@dataclass
class Feasibility:
    feasible: bool
    controls: np.ndarray
    cost: float
    solver_status: str

    def __bool__(self):
        return self.feasible


def _min_cost(problem, solver):
    if not np.any(problem.x_init):
        return Feasibility(True, problem.zeros(), 0.0, "optimal")
    res = solve(problem, None, solver)
    return Feasibility(res.feasible, res.controls, res.cost, res.status)


def _contractive_problem(system, x, beta, N, input_set):
    x = np.asarray(x, dtype=float)
    return HorizonProblem(x, N, system, input_set, terminal_bound=beta * float(x @ x))


def _itec_problem(system, x, N, C, input_set):
    x = np.asarray(x, dtype=float)
    return HorizonProblem(x, N, system, input_set, energy_window=EnergyWindow(0, N - 1, C),
                          terminal_bound=float(x @ x))


def _decide(fe: Feasibility, sigma, x):
    bound = sigma * float(np.dot(x, x))
    return Feasibility(fe.feasible and fe.cost <= bound * (1 + 1e-12), fe.controls, fe.cost, fe.solver_status)


def certify_contractive(system, x, beta, N, sigma, input_set: InputSet = InputSet(),
                        solver: SolverConfig = SolverConfig()) -> Feasibility:
    """Is there an ``N``-step sequence with cost ``<= sigma|x|^2`` and ``|x(N)|^2 <= beta|x|^2``?"""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    fe = _min_cost(_contractive_problem(system, x, beta, N, input_set), solver)
    return _decide(fe, sigma, x)


def certify_itec(system, x, N, C, sigma, input_set: InputSet = InputSet(),
                 solver: SolverConfig = SolverConfig()) -> Feasibility:
    """Is there an ``N``-step sequence with cost ``<= sigma|x|^2``, no state growth and energy ``<= C``?"""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if C < 0:
        raise ValueError("C must be nonnegative")
    fe = _min_cost(_itec_problem(system, x, N, C, input_set), solver)
    return _decide(fe, sigma, x)


def min_costs(system, x, beta, N, C, input_set=InputSet(), solver=SolverConfig()):
    """Minimal costs of the contractive and budgeted problems at ``x`` (inf if infeasible)."""
    a = _min_cost(_contractive_problem(system, x, beta, N, input_set), solver)
    b = _min_cost(_itec_problem(system, x, N, C, input_set), solver)
    return (a.cost if a.feasible else math.inf), (b.cost if b.feasible else math.inf)


def _sigma_ratios(system, samples, beta, N, C, input_set, solver):
    """Per sample ``(contractive, budgeted)`` minimal cost divided by ``|x|^2``."""
    samples = [np.asarray(s, dtype=float) for s in samples]
    if not samples:
        raise ValueError("need at least one sample state")
    if any(not np.any(s) for s in samples):
        raise ValueError("sample states must be nonzero")
    out = []
    for s in samples:
        c1, c2 = min_costs(system, s, beta, N, C, input_set, solver)
        r = float(s @ s)
        out.append((c1 / r, c2 / r))
    return out


def estimate_sigma(system, samples, beta, N, C, input_set: InputSet = InputSet(),
                   solver: SolverConfig = SolverConfig(), cap=1e6, rel_tol=0.01) -> float:
    """Smallest ``sigma`` (to ``rel_tol``) for which both problems certify every sample.

    Each sample is solved once; the bisection runs on the cached optimal
    costs, which is equivalent to re-solving since the decision is monotone
    in ``sigma``.
    """
    ratios = [max(a, b) for a, b in _sigma_ratios(system, samples, beta, N, C, input_set, solver)]
    return _bisect_sigma(ratios, cap, rel_tol)


def _bisect_sigma(ratios, cap, rel_tol):
    def ok(sig):
        return all(r <= sig for r in ratios)

    if not ok(cap):
        raise CertificationError(f"no sigma <= {cap:g} certifies all samples (worst ratio {max(ratios):.6g})")
    lo, hi = 0.0, cap
    # geometric bisection is pointless near zero; bracket first
    while hi > 1e-12 and ok(hi / 2):
        hi /= 2
    lo = hi / 2
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def sample_ball(dim, radius, directions=32, radii=3, seed=0):
    """Seeded sample states: random unit directions scaled to ``radius*(j/radii)``, ``j=1..radii``."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(directions, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return [radius * (j / radii) * v for j in range(1, radii + 1) for v in d]


@dataclass
class Certificate:
    """Sampled stabilizability claim.

    ``sigma`` bounds every finite minimal cost found at the samples.  Samples
    where the budgeted problem has no solution at all are listed in
    ``itec_infeasible`` (indices into ``sample_states``); any such sample, or
    any sample failing re-verification at ``sigma``, makes ``all_feasible``
    false.
    """

    beta: float
    sigma: float
    N: int
    C: float
    ball_radius: float
    sample_states: list
    all_feasible: bool
    itec_infeasible: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["sample_states"] = [np.asarray(s, dtype=float).tolist() for s in self.sample_states]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["beta"], d["sigma"], int(d["N"]), d["C"], d["ball_radius"],
                   [np.asarray(s) for s in d["sample_states"]], bool(d["all_feasible"]),
                   list(d.get("itec_infeasible", [])))


def certify(system, beta, N, C, ball_radius, directions=32, radii=3, seed=0,
            input_set: InputSet = InputSet(), solver: SolverConfig = SolverConfig(),
            sigma_cap=1e6, extra_samples=()) -> Certificate:
    """Sample the ball, estimate sigma and re-verify every sample at that sigma.

    Unlike :func:`estimate_sigma`, samples whose budgeted problem is
    infeasible do not abort the estimate; they are recorded and the
    certificate is marked as not fully feasible.  A contractive problem
    without solution still raises :class:`CertificationError`.
    """
    samples = sample_ball(system.state_dim, ball_radius, directions, radii, seed)
    samples += [np.asarray(s, dtype=float) for s in extra_samples if np.any(s)]
    ratios = _sigma_ratios(system, samples, beta, N, C, input_set, solver)
    itec_bad = [j for j, (_, b) in enumerate(ratios) if not math.isfinite(b)]
    sigma = _bisect_sigma([max(a, b) if math.isfinite(b) else a for a, b in ratios], sigma_cap, 0.01)
    all_ok = not itec_bad and all(
        certify_contractive(system, s, beta, N, sigma, input_set, solver).feasible
        and certify_itec(system, s, N, C, sigma, input_set, solver).feasible
        for s in samples
    )
    return Certificate(beta, sigma, N, C, ball_radius, samples, all_ok, itec_bad)


# -- Gamma diagnostics ---------------------------------------------------------

def ceil_half_tail(beta, start):
    """Closed form of ``sum_{j=start}^inf beta**ceil(j/2)`` for ``start >= 1``.

    Odd and even ``j`` pair up: ``j = 2t-1`` and ``j = 2t`` both give ``beta**t``.
    """
    if start < 1:
        raise ValueError("start must be >= 1")
    if beta == 0.0:
        return 0.0
    t = (start + 1) // 2
    if start % 2 == 1:
        return 2.0 * beta ** t / (1.0 - beta)
    return beta ** t + 2.0 * beta ** (t + 1) / (1.0 - beta)


def _tail_sum(beta, start, terms):
    """Explicit partial sum over ``terms`` terms plus the closed-form remainder."""
    partial = sum(beta ** math.ceil(j / 2) for j in range(start, start + terms))
    return partial + ceil_half_tail(beta, start + terms)


@dataclass
class GammaSequence:
    values: np.ndarray
    sigma_used: float
    bound: float
    beta: float
    N: int
    parts: np.ndarray = field(default=None)

    @property
    def q(self):
        return np.arange(1, len(self.values) + 1)


def _v_q_stage_costs(record: RunRecord, system, q, N):
    """Stage costs ``|x(j)|^2 + |v_q(j-1)|^2`` for ``j = 1..(q+1)N``."""
    x0 = record.states[0]
    U = record.controls
    steps = (q + 1) * N
    V = np.zeros((steps, U.shape[1]))
    n_applied = min(steps, U.shape[0])
    V[:n_applied] = U[:n_applied]
    X = system.rollout(x0, V)
    return np.sum(X[1:] ** 2, axis=1) + np.sum(V ** 2, axis=1)


def gamma_sequence(record: RunRecord, system, sigma, beta, N, tail_terms=64, q_max=None) -> GammaSequence:
    """Gamma_q for ``q = 1..Q``, ``Q = K//N - 1`` (``K`` = recorded steps), via two routes.

    ``values`` uses one rollout of ``v_q`` and an explicit partial tail sum with
    closed-form remainder.  ``parts[q-1]`` holds the five-way split
    ``(G1, G2, G3, G4, G5)`` whose tails are pure closed forms.
    """
    K = record.steps
    Q = K // N - 1 if q_max is None else min(q_max, K // N - 1)
    x0 = record.states[0] if K else record.final_state
    r0 = float(x0 @ x0)
    values = np.zeros(max(Q, 0))
    parts = np.zeros((max(Q, 0), 5))
    for q in range(1, Q + 1):
        stages = _v_q_stage_costs(record, system, q, N)
        values[q - 1] = float(np.sum(stages)) + sigma * r0 * _tail_sum(beta, q + 1, tail_terms)
        parts[q - 1] = (
            float(np.sum(stages[:(q - 1) * N])),
            float(np.sum(stages[(q - 1) * N:q * N])),
            float(np.sum(stages[q * N:(q + 1) * N])),
            beta ** math.ceil((q + 1) / 2) * sigma * r0,
            ceil_half_tail(beta, q + 2) * sigma * r0,
        )
    return GammaSequence(values, sigma, itec_cost_bound(beta, sigma, r0), beta, N, parts)


def itec_cost_bound(beta, sigma, x0_norm_sq):
    return (1.0 + beta) / (1.0 - beta) * sigma * x0_norm_sq


def non_itec_cost_bound(beta, sigma, x0_norm_sq):
    return sigma / (1.0 - beta) * x0_norm_sq


def contraction_envelope(record: RunRecord, beta, N, mode="itec"):
    """Largest excess of ``|x(mN)|^2`` over its envelope, ``m >= 2``.

    The envelope is ``beta**ceil(m/2) |x(0)|^2`` in ``itec`` mode and
    ``beta**(m-1) |x(0)|^2`` in ``non_itec`` mode.  Returns ``-inf`` when no
    ``m >= 2`` was reached.
    """
    X = record.states
    r0 = float(X[0] @ X[0])
    worst = -math.inf
    m = 2
    while m * N < len(X):
        expo = math.ceil(m / 2) if mode == "itec" else m - 1
        xm = X[m * N]
        worst = max(worst, float(xm @ xm) - beta ** expo * r0)
        m += 1
    return worst


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def check_bounds(record: RunRecord, system, certificate: Certificate, mode="itec",
                 tol=1e-9, envelope_tol=1e-6, tail_terms=64) -> dict:
    """Numerical checks of the cost bound and its supporting identities.

    Every entry of ``checks`` carries ``pass`` and a margin-like figure.  In
    ``non_itec`` mode only the ``sigma/(1-beta)`` bound and the envelope apply.
    """
    beta, sigma, N = certificate.beta, certificate.sigma, certificate.N
    X = record.states
    r0 = float(X[0] @ X[0])
    G = record.total_cost
    checks = {}
    report = {
        "mode": mode,
        "beta": beta,
        "sigma": sigma,
        "sigma_source": "estimated from sampled certificate",
        "N": N,
        "x0_norm_sq": r0,
        "truncated_cost": G,
        "steps": record.steps,
        "checks": checks,
    }

    env = contraction_envelope(record, beta, N, mode)
    checks["contraction_envelope"] = {"pass": bool(env <= envelope_tol), "max_excess": env}

    if mode == "non_itec":
        bound = non_itec_cost_bound(beta, sigma, r0)
        checks["cost_bound"] = {"pass": bool(G <= bound), "cost": G, "bound": bound, "margin": bound - G}
        report["bound"] = bound
        report["all_pass"] = all(c["pass"] for c in checks.values())
        return report

    bound = itec_cost_bound(beta, sigma, r0)
    report["bound"] = bound
    checks["cost_bound"] = {"pass": bool(G <= bound), "cost": G, "bound": bound, "margin": bound - G}

    gs = gamma_sequence(record, system, sigma, beta, N, tail_terms)
    vals, P = gs.values, gs.parts
    report["gamma"] = vals.tolist()
    if len(vals) == 0:
        report["all_pass"] = all(c["pass"] for c in checks.values())
        return report

    split = P.sum(axis=1)
    dec = max(_rel(a, b) for a, b in zip(vals, split))
    checks["decomposition"] = {"pass": bool(dec <= tol), "max_rel_error": dec}

    inc = np.diff(vals)
    max_inc = float(inc.max()) if inc.size else -math.inf
    checks["gamma_nonincreasing"] = {"pass": bool(max_inc <= tol), "max_increase": max_inc}

    tele = max((_rel(P[q + 1, 0], P[q, 0] + P[q, 1]) for q in range(len(P) - 1)), default=0.0)
    checks["telescoping"] = {"pass": bool(tele <= tol), "max_rel_error": tele}

    tail = max((_rel(P[q + 1, 3] + P[q + 1, 4], P[q, 4]) for q in range(len(P) - 1)), default=0.0)
    checks["tail_identity"] = {"pass": bool(tail <= tol), "max_rel_error": tail}

    block = max((P[q + 1, 1] + P[q + 1, 2] - P[q, 2] - P[q, 3] for q in range(len(P) - 1)), default=-math.inf)
    checks["block_inequality"] = {"pass": bool(block <= tol), "max_excess": float(block)}

    first = float(vals[0])
    checks["gamma_bounded"] = {"pass": bool(vals.max() <= bound * (1 + tol)), "max_gamma": float(vals.max()),
                               "bound": bound}
    gQ = float(vals[-1])
    checks["bound_hierarchy"] = {"pass": bool(G <= gQ * (1 + tol) and gQ <= bound * (1 + tol)),
                                 "cost": G, "gamma_Q": gQ, "gamma_1": first, "bound": bound}
    report["all_pass"] = all(c["pass"] for c in checks.values())
    return report
