import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from decoupling_lab.ensembles import EnsembleKind, EnsembleSpec, generate
from decoupling_lab.parabola import make_function, make_params

settings.register_profile(
    "lab",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("lab")

FIELDS = [("padic", 3), ("laurent", 3), ("padic", 2), ("padic", 5), ("laurent", 5)]


@pytest.fixture(scope="session")
def p3n2():
    return make_params("padic", 3, 2)


@pytest.fixture(scope="session")
def l3n2():
    return make_params("laurent", 3, 2)


def random_function(params, seed, sparse=False):
    kind = EnsembleKind.SPARSE if sparse else EnsembleKind.RANDOM_PHASE
    return generate(EnsembleSpec(kind, seed=seed), params)


def gaussian_function(params, seed):
    rng = np.random.default_rng(seed)
    return make_function(params, rng.normal(size=params.q) + 1j * rng.normal(size=params.q))


def direct_grid(params, coeffs):
    """f(u) = sum_a c_a e(a u1 + a^2 u2) by explicit summation over the ring."""
    ring = params.ring
    q = params.q
    u = np.arange(q)
    out = np.zeros((q, q), dtype=complex)
    for a in np.flatnonzero(coeffs):
        a = int(a)
        ph1 = ring.mul(a, u)
        ph2 = ring.mul(int(ring.sqr(a)), u)
        out += coeffs[a] * ring.character(ring.add(ph1[:, None], ph2[None, :]))
    return out


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}
ACCEPTANCE_COUNT = 11


@pytest.fixture
def criterion():
    def record(n: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE[n] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:>2}: NOT RUN")
