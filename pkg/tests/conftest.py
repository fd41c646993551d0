import pytest

from peergrade.gibbs import GradeIndex
from peergrade.model import Hyperparameters
from peergrade.synth import ClassSpec, generate_class


@pytest.fixture(scope="session")
def hp():
    return Hyperparameters()


@pytest.fixture(scope="session")
def small_truth():
    return generate_class(ClassSpec(students=10, weeks=2, tas=1, ta_coverage=0.3, seed=5))


@pytest.fixture(scope="session")
def small_data(small_truth, hp):
    return GradeIndex.build(small_truth.dataset, hp)


VERDICTS: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
