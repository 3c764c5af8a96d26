import sys
import time

import numpy as np
import pytest

from irhc.analysis import certify
from irhc.controller import IRHC, ItecSpec, run
from irhc.plant import make_system

X0 = np.array([2.0, -1.0])
ITEC = ItecSpec(4.8, 4)
BETA = 0.8


@pytest.fixture(scope="session")
def oscillator():
    return make_system("oscillator", dt=0.05, method="euler")


@pytest.fixture(scope="session")
def itec_run(oscillator):
    """The C=4.8, N=4, beta=0.8 run from x0=[2,-1], 400 steps."""
    t0 = time.perf_counter()
    rec = run(IRHC(oscillator, BETA, ITEC, "itec"), oscillator, X0, 400)
    rec.meta["runtime_s"] = time.perf_counter() - t0
    return rec


@pytest.fixture(scope="session")
def itec_certificate(oscillator):
    return certify(oscillator, BETA, ITEC.N, ITEC.C, ball_radius=2.5, extra_samples=[X0])


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n} ({title}): {detail}")
