import numpy as np
import pytest

from riemep import Euclidean, Hyperbolic, Product, Sphere

FAMILIES = {
    "euclidean": lambda: Euclidean(3),
    "sphere": lambda: Sphere(2),
    "hyperbolic": lambda: Hyperbolic(2),
    "product": lambda: Product([Euclidean(1), Sphere(2)]),
}


@pytest.fixture(params=sorted(FAMILIES))
def manifold(request):
    return FAMILIES[request.param]()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def tangent_with_norm(M, rng, x, max_norm):
    """Random tangent vectors at the rows of ``x`` with norms uniform in ``[0, max_norm)``."""
    v = M.random_tangent(rng, x)
    n = M.norm(x, v)[..., None]
    r = max_norm * rng.uniform(size=n.shape)
    return v / np.where(n > 0, n, 1.0) * r


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report(criterion: int, passed: bool, detail: str) -> bool:
    line = f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
