"""Config-driven experiments: closed-loop runs, certification, cost-table reproduction.

Configs are JSON documents.  A run config looks like::

    {
      "plant": {"name": "oscillator", "dt": 0.05, "method": "euler"},
      "x0": [2, -1],
      "input_set": {"kind": "unbounded"},
      "solver": {"feas_tol": 1e-6},
      "controller": {"mode": "irhc", "itec": true, "beta": 0.8, "C": 4.8, "N": 4,
                     "max_steps": 400, "convergence_eps": 1e-3},
      "certify": {"ball_radius": 2.5, "directions": 32, "radii": 3}
    }

See README.md for every key and its default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis
from .baselines import ProportionalRHC, StaticFeedback, TraditionalRHC
from .controller import IRHC, ItecSpec, RunRecord, run
from .errors import ConfigurationError
from .plant import make_system
from .trajopt import InputSet, SolverConfig

__all__ = [
    "load_config",
    "RunSpec",
    "parse_run_config",
    "simulate",
    "certify",
    "check_bounds",
    "table1",
    "REFERENCE_COSTS",
    "format_table1_csv",
    "format_table1_markdown",
]

CONTROLLER_MODES = ("irhc", "rhc", "proportional", "feedback")

# published closed-loop costs for each cell; None marks an unstable cell
REFERENCE_COSTS = {
    ("feedback", None, None): 325.4,
    ("rhc", 4, None): 437.2,
    ("rhc", 5, None): None,
    ("irhc", 4, 0.8): 412.9,
    ("irhc", 5, 0.8): 539.4,
    ("irhc", 4, 0.2): 3947.0,
    ("irhc", 5, 0.2): 2053.0,
}


def load_config(path) -> dict:
    """Read a JSON config from ``path``, falling back to the shipped configs by file name."""
    p = Path(path)
    try:
        if p.exists():
            text = p.read_text()
        else:
            shipped = resources.files("irhc").joinpath("configs", p.name)
            if not shipped.is_file():
                raise ConfigurationError(f"config file {path!s} not found")
            text = shipped.read_text()
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path!s} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    return cfg


def _plant(cfg):
    p = dict(cfg.get("plant", {"name": "oscillator"}))
    name = p.pop("name", "oscillator")
    allowed = {"dt", "method", "a", "b"}
    if set(p) - allowed:
        raise ConfigurationError(f"unknown plant options {sorted(set(p) - allowed)}")
    return make_system(name, **p)


def _input_set(cfg):
    d = cfg.get("input_set", {"kind": "unbounded"})
    if d.get("kind", "unbounded") == "box":
        return InputSet.box(d["lower"], d["upper"])
    return InputSet(d.get("kind", "unbounded"))


def _x0(cfg, system):
    if "x0" not in cfg:
        raise ConfigurationError("config needs an initial state 'x0'")
    x0 = np.atleast_1d(np.asarray(cfg["x0"], dtype=float))
    if x0.shape != (system.state_dim,):
        raise ConfigurationError(f"x0 must have {system.state_dim} entries")
    return x0


@dataclass
class RunSpec:
    system: object
    policy: object
    x0: np.ndarray
    itec: ItecSpec
    max_steps: int
    convergence_eps: float
    divergence_factor: float
    mode: str
    irhc_mode: str
    beta: float
    input_set: InputSet
    solver: SolverConfig


def parse_run_config(cfg: dict) -> RunSpec:
    system = _plant(cfg)
    solver = SolverConfig.from_dict(cfg.get("solver"))
    input_set = _input_set(cfg)
    x0 = _x0(cfg, system)
    c = cfg.get("controller")
    if not isinstance(c, dict):
        raise ConfigurationError("config needs a 'controller' block")
    mode = c.get("mode", "irhc")
    if mode not in CONTROLLER_MODES:
        raise ConfigurationError(f"controller mode must be one of {CONTROLLER_MODES}, got {mode!r}")
    max_steps = c.get("max_steps", 400)
    if not isinstance(max_steps, int) or max_steps < 1:
        raise ConfigurationError(f"max_steps must be a positive integer, got {max_steps!r}")
    itec = ItecSpec(float(c.get("C", 0.0)), c.get("N", 1))
    beta = float(c.get("beta", 0.8))
    irhc_mode = "itec" if c.get("itec", True) else "non_itec"
    if mode == "irhc":
        policy = IRHC(system, beta, itec, irhc_mode, solver, input_set, c.get("hold_checkpoint", True))
    elif mode == "rhc":
        policy = TraditionalRHC(system, c.get("horizon", 2 * itec.N), solver, input_set)
    elif mode == "proportional":
        policy = ProportionalRHC(system, itec, solver, input_set)
    else:
        policy = StaticFeedback(c.get("gain", 3.0))
    return RunSpec(system, policy, x0, itec, max_steps, float(c.get("convergence_eps", 1e-3)),
                   float(c.get("divergence_factor", 10.0)), mode, irhc_mode, beta, input_set, solver)


def _uses_itec(spec: RunSpec):
    return (spec.mode == "irhc" and spec.irhc_mode == "itec") or spec.mode == "proportional"


def simulate(cfg: dict):
    """Run the configured closed loop; returns ``(record, summary_dict)``."""
    spec = parse_run_config(cfg)
    rec = run(spec.policy, spec.system, spec.x0, spec.max_steps, spec.convergence_eps, spec.divergence_factor)
    summary = rec.summary(spec.itec if _uses_itec(spec) else None)
    summary["controller"] = spec.mode
    if spec.mode == "irhc":
        summary["irhc_mode"] = spec.irhc_mode
    return rec, summary


def certify(cfg: dict, seed=None) -> analysis.Certificate:
    spec = parse_run_config(cfg)
    cc = dict(cfg.get("certify", {}))
    extra = [spec.x0] if cc.get("include_x0", True) else []
    return analysis.certify(
        spec.system, spec.beta, spec.itec.N, spec.itec.C,
        ball_radius=float(cc.get("ball_radius", 1.1 * float(np.linalg.norm(spec.x0)))),
        directions=int(cc.get("directions", 32)),
        radii=int(cc.get("radii", 3)),
        seed=int(cc.get("seed", 0) if seed is None else seed),
        input_set=spec.input_set,
        solver=spec.solver,
        sigma_cap=float(cc.get("sigma_cap", 1e6)),
        extra_samples=extra,
    )


def check_bounds(cfg: dict, record: RunRecord = None, certificate: analysis.Certificate = None, seed=None):
    spec = parse_run_config(cfg)
    if spec.mode != "irhc":
        raise ConfigurationError("check-bounds needs an irhc controller config")
    if record is None:
        record, _ = simulate(cfg)
    if certificate is None:
        certificate = certify(cfg, seed)
    report = analysis.check_bounds(record, spec.system, certificate, spec.irhc_mode)
    report["certificate_all_feasible"] = certificate.all_feasible
    report["certificate_itec_infeasible_samples"] = len(certificate.itec_infeasible)
    return report


# -- cost table ----------------------------------------------------------------

def _table1_cells(t):
    cells = [("feedback", None, None)]
    for N in t.get("horizons", [4, 5]):
        cells.append(("rhc", N, None))
    for beta in t.get("betas", [0.8, 0.2]):
        for N in t.get("horizons", [4, 5]):
            cells.append(("irhc", N, beta))
    return cells


def table1(cfg: dict, dt=None):
    """Run every cell of the cost table; returns a list of row dicts.

    Costs are truncated at ``max_steps``.  A run still moving at that point
    is continued up to ``stability_steps`` only to decide stability.
    """
    base = dict(cfg)
    if dt is not None:
        base["plant"] = dict(base.get("plant", {}), dt=dt)
    max_steps = int(base.get("max_steps", 400))
    stability_steps = int(base.get("stability_steps", 2000))
    eps = float(base.get("convergence_eps", 1e-3))
    hold = base.get("hold_checkpoint", True)
    rows = []
    for kind, N, beta in _table1_cells(base):
        ctrl = {"mode": kind, "max_steps": max(max_steps, stability_steps), "convergence_eps": eps}
        if kind == "feedback":
            ctrl["gain"] = base.get("feedback_gain", 3.0)
        if kind in ("rhc", "irhc"):
            ctrl["N"] = N
        if kind == "irhc":
            ctrl.update(beta=beta, itec=False, C=0.0, hold_checkpoint=hold)
        spec = parse_run_config({**base, "controller": ctrl})
        rec = run(spec.policy, spec.system, spec.x0, spec.max_steps, spec.convergence_eps, spec.divergence_factor)
        cost = float(sum(r.stage_cost for r in rec.rows[:max_steps]))
        if rec.error is not None:
            status = "aborted"
        elif rec.diverged:
            status = "Unstable"
        else:
            status = "stable"
        ref = REFERENCE_COSTS.get((kind, N, beta), "n/a")
        rows.append({
            "controller": kind,
            "N": N,
            "beta": beta,
            "status": status,
            "cost": None if status != "stable" else cost,
            "steps": rec.steps,
            "reference": ref,
            "rel_error": (cost - ref) / ref if (status == "stable" and isinstance(ref, float)) else None,
            "dt": spec.system.cfg.dt if hasattr(spec.system, "cfg") else None,
        })
    return rows


def _label(row):
    if row["controller"] == "feedback":
        return "u=-3x2"
    if row["controller"] == "rhc":
        return f"RHC N={row['N']}"
    return f"IRHC(beta={row['beta']}) N={row['N']}"


def _cell(row):
    return "Unstable" if row["status"] == "Unstable" else (
        row["status"] if row["cost"] is None else f"{row['cost']:.1f}")


def _reference_cell(row):
    p = row["reference"]
    return "Unstable" if p is None else (p if isinstance(p, str) else f"{p:.1f}")


def format_table1_csv(rows) -> str:
    out = ["cell,controller,N,beta,dt,status,cost,reference,rel_error"]
    for r in rows:
        out.append(",".join([
            _label(r), r["controller"], "" if r["N"] is None else str(r["N"]),
            "" if r["beta"] is None else repr(r["beta"]),
            "" if r["dt"] is None else repr(r["dt"]),
            r["status"], _cell(r), _reference_cell(r),
            "" if r["rel_error"] is None else f"{r['rel_error']:+.4f}",
        ]))
    return "\n".join(out) + "\n"


def format_table1_markdown(rows) -> str:
    lines = ["| cell | ours | reference | rel. error |", "|---|---|---|---|"]
    for r in rows:
        rel = "" if r["rel_error"] is None else f"{100 * r['rel_error']:+.1f}%"
        lines.append(f"| {_label(r)} | {_cell(r)} | {_reference_cell(r)} | {rel} |")
    return "\n".join(lines) + "\n"
