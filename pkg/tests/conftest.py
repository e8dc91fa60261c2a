import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, cond=50.0):
    """SPD matrix with eigenvalues spread over ``[1, cond]``."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), n))
    return (q * eig) @ q.T


def random_geometry(rng, n=None, eta_fraction=None):
    """Dogleg geometry on a random SPD quadratic with ``eta < 1/lambda_max``."""
    from dogleg_prox.dogleg import build_geometry
    from dogleg_prox.quad_model import from_matrix

    n = int(rng.integers(1, 11)) if n is None else n
    obj = from_matrix(random_spd(rng, n, cond=float(rng.uniform(1.0, 1e3))),
                      rng.standard_normal(n), float(rng.standard_normal()))
    frac = rng.uniform(1e-3, 1.0) if eta_fraction is None else eta_fraction
    eta = frac / obj.lipschitz * (1 - 1e-9)
    return build_geometry(obj, rng.standard_normal(n) * 2, eta)


# one line per acceptance criterion, shown after the test session
ACCEPTANCE_REPORT: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_REPORT):
        terminalreporter.write_line(ACCEPTANCE_REPORT[key])
