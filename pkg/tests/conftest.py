import numpy as np
import pytest

from ncssd.ssd import ScanInputs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_scan(rng, L, D, N, a_range=(0.5, 1.5), dtype=np.float64):
    return ScanInputs(
        rng.standard_normal((L, D)).astype(dtype),
        rng.uniform(*a_range, size=L).astype(dtype),
        rng.standard_normal((L, N)).astype(dtype),
        rng.standard_normal((L, N)).astype(dtype),
    )


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def report(label: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
