import numpy as np
import pytest

from msalasso import solver
from msalasso.core import Dataset, standardize

# Session-wide audit of every solution the solver hands back.
SOLVER_AUDIT = {"count": 0, "max_kkt": 0.0, "max_support_excess": -np.inf}
ACCEPTANCE_LINES = []

_original_solve = solver._Problem.solve


def _audited_solve(self, lam, beta0, cfg):
    beta, used = _original_solve(self, lam, beta0, cfg)
    res = solver.kkt_residual(self.d, self.w, lam, self.expand(beta))
    excess = np.count_nonzero(beta) - min(self.d.n, self.d.p)
    SOLVER_AUDIT["count"] += 1
    SOLVER_AUDIT["max_kkt"] = max(SOLVER_AUDIT["max_kkt"], res)
    SOLVER_AUDIT["max_support_excess"] = max(SOLVER_AUDIT["max_support_excess"], excess)
    assert res <= solver.KKT_TOL, f"solver returned KKT residual {res:.3g} at lambda={lam}"
    assert excess <= 0, f"solver returned {np.count_nonzero(beta)} nonzeros with n={self.d.n}"
    return beta, used


@pytest.fixture(autouse=True, scope="session")
def audit_solver():
    solver._Problem.solve = _audited_solve
    yield SOLVER_AUDIT
    solver._Problem.solve = _original_solve


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    terminalreporter.write_line(
        f"solver audit: {SOLVER_AUDIT['count']} solutions, "
        f"max KKT residual {SOLVER_AUDIT['max_kkt']:.3g}"
    )


def orthogonal_design(n, p, rng):
    """Centered columns, mutually orthogonal, each with variance 1 (divisor n)."""
    a = rng.standard_normal((n, p))
    a -= a.mean(axis=0)
    q, _ = np.linalg.qr(a)
    return q * np.sqrt(n)


def random_instance(rng, n, p, rho=0.0, k=3, sigma=1.0):
    from msalasso.simgen import gen_ar1_design

    x = gen_ar1_design(n, p, rho, rng)
    beta = np.zeros(p)
    beta[: min(k, p)] = rng.uniform(0.5, 2.0, min(k, p)) * rng.choice([-1, 1], min(k, p))
    y = x @ beta + sigma * rng.standard_normal(n)
    return Dataset(x, y), beta


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_std(rng):
    d, _ = random_instance(rng, 40, 10, rho=0.3)
    return standardize(d)


def train_val_pair(rng, n_train, n_val, p, rho=0.0, k=3, sigma=1.0):
    """Training and validation sets drawn from the same sparse model."""
    d, beta = random_instance(rng, n_train + n_val, p, rho=rho, k=k, sigma=sigma)
    return d.subset(range(n_train)), d.subset(range(n_train, n_train + n_val)), beta
