import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def sphere_pair():
    from projop.geometry import sphere, sphere_morse
    return sphere(), sphere_morse()


@pytest.fixture(scope="session")
def torus_pair():
    from projop.geometry import torus, torus_morse
    return torus(), torus_morse()


@pytest.fixture(scope="session")
def sphere_dec(sphere_pair):
    """Sphere decomposition at p = 2 on the reference grid (128 x 256)."""
    from projop.decomposition import build_decomposition
    S, M = sphere_pair
    return build_decomposition(S, M, 0.8, p=2.0, n_levels=128, n_traj=256)


@pytest.fixture(scope="session")
def sphere_dec_small(sphere_pair):
    from projop.decomposition import build_decomposition
    S, M = sphere_pair
    return build_decomposition(S, M, 0.8, p=1.5, n_levels=128, n_traj=128)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Recorder for acceptance lines; they are repeated in the terminal summary."""
    def record(n, title, ok, elapsed, budget, detail=""):
        ok = bool(ok) and elapsed < budget
        line = (f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}  "
                f"[{elapsed:.1f}s / {budget:g}s] {detail}")
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
