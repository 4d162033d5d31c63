from fractions import Fraction

import pytest

from csmadelay.model import JobTypeSpec, SimConfig, resolve_job_type
from csmadelay.utility import LogUtility


def simple_job(type_id=0, size=1, deadline=50, arrival_max=1, drop_max=2, epsilon=Fraction(1, 2)):
    return JobTypeSpec(type_id, size, deadline, arrival_max, drop_max, Fraction(epsilon))


def derived_config(graph, sizes=(1,), deadline_per_size=None, V=10, beta=2, T=None, W=4, horizon=1000,
                   seed=0, eps_target=0.2, arrival_max=1):
    """Config with derived epsilon, picking deadlines so that epsilon is about ``eps_target``."""
    u = LogUtility()
    jobs = []
    for m, s in enumerate(sizes):
        q_max = V + 2 * arrival_max * s
        D = int((q_max + Fraction(V * beta, s)) / Fraction(eps_target)) + 2
        if deadline_per_size is not None:
            D = deadline_per_size[m]
        jobs.append(resolve_job_type(m, s, D, arrival_max, V=V, beta=beta, utility=u))
    return SimConfig(graph, jobs, V=V, beta=beta, T=T or max(sizes), W=W, horizon=horizon, rng_seed=seed)


@pytest.fixture
def log_u():
    return LogUtility()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in results:
        terminalreporter.write_line(line)
