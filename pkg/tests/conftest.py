import numpy as np
import pytest

from torus_sb.curves import standard_test_curve, static_curve
from torus_sb.grid import PeriodicGrid


@pytest.fixture(scope="session")
def g64():
    return PeriodicGrid(1, 64)


@pytest.fixture(scope="session")
def g128():
    return PeriodicGrid(1, 128)


@pytest.fixture(scope="session")
def g256():
    return PeriodicGrid(1, 256)


@pytest.fixture(scope="session")
def test_curve():
    return standard_test_curve()


@pytest.fixture(scope="session")
def bumpy():
    """Static two-mode density used for self-transport checks."""
    return static_curve(1, [(1, 0.5, 0.0), (2, 0.2, 0.7)])


def trig_density(x, coeffs):
    """(1 + sum a_k cos(k x + p_k)) / 2pi for coeffs = [(k, a, p)]."""
    out = np.ones_like(x)
    for k, a, p in coeffs:
        out = out + a * np.cos(k * x + p)
    return out / (2 * np.pi)


# -- acceptance reporting ---------------------------------------------------
ACCEPTANCE: dict = {}


@pytest.fixture
def report():
    """report(criterion, title, checks) with checks = [(label, ok, detail)]; prints and stores one line."""

    def _report(num: int, title: str, checks):
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{c[0]}={c[2]}" + ("" if c[1] else " (FAIL)") for c in checks)
        line = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE[num] = line
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
