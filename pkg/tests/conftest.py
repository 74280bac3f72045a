import numpy as np
import pytest

from fracham import FracOrder, LagrangianSpec, UniformGrid

HALF = FracOrder(0.5, 0.5, 0.5)
NEAR_CLASSICAL = FracOrder(0.99, 0.99, 1.0)

FREE = "0.5*v1^2"
OSCILLATOR = "0.5*v1^2 - 0.5*q1^2"


@pytest.fixture
def unit_grid():
    return UniformGrid(0.0, 1.0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lagrangian(text, order=HALF, n=1):
    return LagrangianSpec.from_text(text, [order] * n)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"acceptance {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
