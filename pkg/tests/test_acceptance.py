"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line.

Criteria 1, 2, 5 and 6 share a single 400-step run of the energy-constrained
oscillator experiment (C=4.8, N=4, beta=0.8, x0=[2,-1], dt=0.05) and one
sampled certificate.  Criteria 3, 4 and 8 share two executions of the
``table1`` command.
"""

import contextlib
import csv
import io
import math

import numpy as np
import pytest

from conftest import BETA, ITEC, X0
from oracles import central_difference, gradient_instance, grid_search, reference_cost, scalar_instance
from irhc.analysis import check_bounds, gamma_sequence
from irhc.cli import main
from irhc.experiments import REFERENCE_COSTS, format_table1_markdown, load_config, table1
from irhc.trajopt import gradient, solve

pytestmark = pytest.mark.slow

RESULTS = {}


@contextlib.contextmanager
def criterion(n, title):
    detail = {"text": ""}
    try:
        yield detail
    except BaseException as exc:
        RESULTS[n] = (False, title, f"{detail['text']} {type(exc).__name__}: {exc}".strip())
        raise
    RESULTS[n] = (True, title, detail["text"])


@pytest.fixture(scope="module")
def table_runs(tmp_path_factory):
    outs = [tmp_path_factory.mktemp(f"table1_{j}") for j in range(2)]
    codes = [main(["table1", "--config", "table1.json", "--out", str(o), "--seed", "0"]) for o in outs]
    return codes, outs


def table_rows(out):
    rows = list(csv.DictReader(io.StringIO((out / "table1.csv").read_text())))
    return {(r["controller"], r["N"], r["beta"]): r for r in rows}


def window_energy_list(controls, N):
    out, p = [], 1
    while 2 * p * N - 1 < len(controls):
        seg = controls[(2 * p - 1) * N:2 * p * N]
        out.append(float(np.sum(seg ** 2)))
        p += 1
    return out


def test_criterion_1_itec_exactness(itec_run):
    with criterion(1, "ITEC exactness") as d:
        energies = window_energy_list(itec_run.controls, ITEC.N)
        runtime = itec_run.meta["runtime_s"]
        d["text"] = f"{len(energies)} windows, max energy {max(energies):.9f}, runtime {runtime:.1f}s"
        assert itec_run.error is None
        assert len(energies) == 400 // (2 * ITEC.N)
        assert max(energies) <= 4.8 + 1e-6
        assert runtime < 60.0


def test_criterion_2_contraction_envelope(itec_run):
    with criterion(2, "contraction envelope") as d:
        X = itec_run.states
        worst, m = -math.inf, 2
        while m * ITEC.N < len(X):
            x = X[m * ITEC.N]
            worst = max(worst, float(x @ x) - BETA ** math.ceil(m / 2) * 5.0)
            m += 1
        d["text"] = f"m=2..{m - 1}, max excess {worst:.3e}"
        assert m > 2
        assert worst <= 1e-6


def test_criterion_3_table1_qualitative(table_runs):
    with criterion(3, "cost table, qualitative") as d:
        codes, outs = table_runs
        rows = table_rows(outs[0])
        rhc5 = rows[("rhc", "5", "")]
        irhc = {(N, b): rows[("irhc", N, b)] for N in ("4", "5") for b in ("0.8", "0.2")}
        d["text"] = (f"RHC N=5 {rhc5['status']}; IRHC(0.8) N=4 {irhc['4', '0.8']['status']}, "
                     f"N=5 {irhc['5', '0.8']['status']}; "
                     f"IRHC N=4 cost 0.2: {irhc['4', '0.2']['cost']} vs 0.8: {irhc['4', '0.8']['cost']}")
        assert codes == [0, 0]
        assert rhc5["status"] == "Unstable"
        assert irhc["4", "0.8"]["status"] == "stable"
        assert irhc["5", "0.8"]["status"] == "stable"
        assert float(irhc["4", "0.2"]["cost"]) > float(irhc["4", "0.8"]["cost"])


def test_criterion_4_table1_quantitative(table_runs):
    with criterion(4, "cost table, quantitative") as d:
        rows = table_rows(table_runs[1][0])
        checks = [
            ("u=-3x2", rows[("feedback", "", "")], REFERENCE_COSTS[("feedback", None, None)], 0.15),
            ("RHC N=4", rows[("rhc", "4", "")], REFERENCE_COSTS[("rhc", 4, None)], 0.25),
            ("IRHC(0.8) N=4", rows[("irhc", "4", "0.8")], REFERENCE_COSTS[("irhc", 4, 0.8)], 0.25),
        ]
        parts, in_band = [], True
        for name, row, ref, tol in checks:
            cost = float(row["cost"]) if row["status"] == "stable" else math.nan
            rel = (cost - ref) / ref
            ok = abs(rel) <= tol
            in_band &= ok
            parts.append(f"{name} {cost:.1f} vs {ref} ({100 * rel:+.1f}%, band {100 * tol:.0f}%)")
        d["text"] = "; ".join(parts)
        if not in_band:
            # out of band: report the sensitivity to the sampling period alongside
            cfg = load_config("table1.json")
            sweep = "".join(f"\ndt={dt}:\n" + format_table1_markdown(table1(cfg, dt=dt)) for dt in (0.05, 0.025))
            d["text"] += "\n" + sweep
            print(sweep)
        assert in_band


def test_criterion_5_gamma_monotonicity(itec_run, itec_certificate, oscillator):
    with criterion(5, "Gamma monotonicity and split identities") as d:
        sigma, N = itec_certificate.sigma, ITEC.N
        gs = gamma_sequence(itec_run, oscillator, sigma, BETA, N)
        U, r0 = itec_run.controls, 5.0
        Q = len(gs.values)

        # recompute every Gamma_q from the step map and a long explicit tail
        def tail(start):
            return math.fsum(BETA ** math.ceil(j / 2) for j in range(start, start + 3000))

        direct, parts = [], []
        for q in range(1, Q + 1):
            x = X0.copy()
            stages = []
            for j in range((q + 1) * N):
                u = U[j] if j < len(U) else np.zeros(1)
                x = oscillator.step(x, u)
                stages.append(float(x @ x + u @ u))
            g1 = math.fsum(stages[:(q - 1) * N])
            g2 = math.fsum(stages[(q - 1) * N:q * N])
            g3 = math.fsum(stages[q * N:(q + 1) * N])
            g4 = BETA ** math.ceil((q + 1) / 2) * sigma * r0
            g5 = tail(q + 2) * sigma * r0
            parts.append((g1, g2, g3, g4, g5))
            direct.append(math.fsum(stages) + sigma * r0 * tail(q + 1))
        direct = np.array(direct)
        P = np.array(parts)

        def rel(a, b):
            return np.max(np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b))))

        agree = rel(direct, gs.values)
        max_inc = float(np.max(np.diff(direct)))
        tele = rel(P[1:, 0], P[:-1, 0] + P[:-1, 1])
        tail_id = rel(P[1:, 3] + P[1:, 4], P[:-1, 4])
        split = rel(P.sum(axis=1), direct)
        d["text"] = (f"sigma_hat={sigma:.4f}, Q={Q}, max increase {max_inc:.3e}, telescoping {tele:.1e}, "
                     f"tail {tail_id:.1e}, split {split:.1e}, library vs direct {agree:.1e}")
        assert Q >= 90
        assert agree <= 1e-9
        assert max_inc <= 1e-9
        assert tele <= 1e-9 and tail_id <= 1e-9 and split <= 1e-9
        report = check_bounds(itec_run, oscillator, itec_certificate)
        for name in ("gamma_nonincreasing", "telescoping", "tail_identity", "decomposition"):
            assert report["checks"][name]["pass"], name


def test_criterion_6_itec_cost_bound(itec_run, itec_certificate):
    with criterion(6, "closed-loop cost bound") as d:
        G = float(sum(r.stage_cost for r in itec_run.rows))
        bound = (1 + 0.8) / (1 - 0.8) * itec_certificate.sigma * 5.0
        d["text"] = (f"G={G:.2f} <= 45*sigma_hat={bound:.2f} (sigma_hat={itec_certificate.sigma:.4f}; "
                     f"{len(itec_certificate.itec_infeasible)} of {len(itec_certificate.sample_states)} "
                     f"samples budget-infeasible)")
        assert G <= bound


def test_criterion_7_optimizer_oracle():
    with criterion(7, "optimizer oracle") as d:
        grid_bad = []
        for seed in range(20):
            p = scalar_instance(seed)
            r = solve(p)
            best, inc = grid_search(p)
            if not (r.feasible and abs(r.cost - best) <= 2 * inc + 1e-9):
                grid_bad.append(seed)
        grad_bad, worst = [], 0.0
        for seed in range(50):
            p, U = gradient_instance(seed)
            g = gradient(p, U)
            fd = central_difference(lambda V: reference_cost(p, V), U)
            tol = max(1e-5, 1e-4 * np.linalg.norm(g))
            err = float(np.max(np.abs(g - fd)))
            worst = max(worst, err / tol)
            if err > tol:
                grad_bad.append(seed)
        d["text"] = (f"grid search 20/20 agree" if not grid_bad else f"grid failures {grid_bad}") + (
            f"; gradients 50/50 within tolerance (worst error/tol {worst:.2e})" if not grad_bad
            else f"; gradient failures {grad_bad}")
        assert not grid_bad and not grad_bad


def test_criterion_8_determinism(table_runs):
    with criterion(8, "determinism") as d:
        codes, (a, b) = table_runs
        same = {name: (a / name).read_bytes() == (b / name).read_bytes() for name in ("table1.csv", "table1.md")}
        d["text"] = ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items())
        assert all(same.values())
