import math

import numpy as np
import pytest

from msfilter.models import constant_h_model, ou_max_model
from msfilter.sde import simulate_xy


def closed_form_max_coeffs(theta, K):
    """Hermite coefficients of max(x, theta) under N(theta, 1), from integration by parts.

    Uses u*He_i = He_{i+1} + i*He_{i-1} and int_0^inf He_k(u) phi(u) du = He_{k-1}(0) phi(0).
    """
    phi0 = 1.0 / math.sqrt(2.0 * math.pi)

    def he0(n):
        if n % 2:
            return 0.0
        return (-1) ** (n // 2) * math.prod(range(n - 1, 0, -2))

    c = [theta + phi0, 0.5]
    for i in range(2, K + 1):
        c.append((he0(i) + i * he0(i - 2)) * phi0 / math.sqrt(math.factorial(i)))
    return np.array(c[: K + 1])


@pytest.fixture(scope="session")
def ou():
    return ou_max_model()


@pytest.fixture(scope="session")
def const_model():
    return constant_h_model(1.3)


@pytest.fixture(scope="session")
def benchmark_path(ou):
    """One path of the benchmark setting: alpha = 1, delta = 0.01, T = 5."""
    return simulate_xy(ou, 1.0, 0.01, 5.0, seed=2024)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance_log(request):
    """Record one PASS/FAIL line for an acceptance criterion and echo it immediately."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def log(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config._acceptance_lines.append(line)
        with capman.global_and_fixture_disabled():
            print(f"\n    {line}")
        return ok

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
