import numpy as np
import pytest

from dgae.graph import Graph, normalize_adjacency
from dgae.synthetic import erdos_renyi


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_graph():
    """Connected-ish 12-node graph with 5 random features."""
    x = np.random.default_rng(7).normal(size=(12, 5))
    g = erdos_renyi(12, 0.35, seed=3, features=x)
    return g


@pytest.fixture
def small_adj(small_graph):
    return normalize_adjacency(small_graph)


def numeric_grad(f, arr, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        up = f()
        arr[idx] = old - h
        down = f()
        arr[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)) + np.max(np.abs(b))))


__all__ = ["Graph", "numeric_grad", "rel_err"]


# --------------------------------------------------------------------------
# acceptance report: one line per criterion at the end of the run

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label, text): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label, text = marker.args
    if report.when == "setup" and report.skipped:
        _CRITERIA[label] = ("SKIP", text, str(report.longrepr[-1]).removeprefix("Skipped: "))
    elif report.when == "call":
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        if report.skipped:
            _CRITERIA[label] = ("SKIP", text, str(report.longrepr[-1]).removeprefix("Skipped: "))
        else:
            _CRITERIA[label] = ("PASS" if report.passed else "FAIL", text, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA, key=lambda s: (len(s), s)):
        status, text, detail = _CRITERIA[label]
        line = f"[{status}] {label:>4}  {text}"
        terminalreporter.write_line(line + (f"  -- {detail}" if detail else ""))
