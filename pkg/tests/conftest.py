import numpy as np
import pytest

from zcaria import load_profile

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def toy2():
    return load_profile("toy2")


@pytest.fixture(scope="session")
def toy4():
    return load_profile("toy4")


@pytest.fixture(scope="session")
def aria8():
    return load_profile("aria8")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the summary prints one line per criterion."""

    def record(number: int, title: str, failures: list[str], detail: str = "") -> None:
        ok = not failures
        note = detail if ok else "; ".join(failures)
        ACCEPTANCE[number] = (ok, f"{title}: {note}" if note else title)
        print(f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'} {ACCEPTANCE[number][1]}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}")
