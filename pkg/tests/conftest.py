import numpy as np
import pytest

from irn import tensor as T
from irn.data import toy_corpus


@pytest.fixture
def f64():
    with T.precision("float64"):
        yield


@pytest.fixture(scope="session")
def small_corpus():
    return toy_corpus(4, 48, seed=3)


def numeric_grad(f, arr: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``arr`` (mutated in place)."""
    out = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return out


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Record one PASS/FAIL line per criterion, echoed live and again in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])
    term = request.config.pluginmanager.get_plugin("terminalreporter")

    def report(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
        lines.append(line)
        if term is not None:
            term.write_line("")
            term.write_line(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
