import numpy as np
import pytest

from teamcontract.production import Primitive, ProductionSpec

_CRITERIA: list[str] = []


@pytest.fixture
def record():
    """Collect one summary line per acceptance criterion."""
    return _CRITERIA.append


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture
def intro():
    """Two agents, f(a) = 3 a1^(1/3) a2^(1/3); the induced production is 3 b1 b2."""
    return ProductionSpec.cobb_douglas([1 / 3, 1 / 3], scale=3.0)


@pytest.fixture
def sqrt_cd():
    """One agent, f(a) = a^(1/2); F(b) = b / 2."""
    return ProductionSpec.cobb_douglas([0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def custom_cd(weights, scale=1.0):
    """Cobb-Douglas written through the custom separable template."""
    return ProductionSpec.custom(Primitive("exp"), [Primitive("log", w) for w in weights], scale)


def custom_ces(weights, r, d, scale=1.0):
    return ProductionSpec.custom(Primitive("negpower", 1.0, d / r), [Primitive("power", -w, r) for w in weights], scale)
