import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from optoent.core import CW, SystemParams  # noqa: E402


def paper_params(delta0_over_omega_m: float, n_m: float = 0.0) -> SystemParams:
    """g/kappa = 1e-6, omega_m/kappa = 2.5, omega_m/gamma_m = 1e7."""
    return SystemParams.from_ratios(1e-6, 2.5, 1e7, delta0_over_omega_m, n_m=n_m)


@pytest.fixture
def sq_params():
    return paper_params(-1.0)


@pytest.fixture
def weak_drive():
    return CW(3e5)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
