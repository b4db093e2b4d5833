import numpy as np
import pytest

from bicb.allocator import TrafficSlice


def make_slice(rows, steps=None, step_range=(0, 47)) -> TrafficSlice:
    """rows of (pctr, wp, obj)."""
    rows = np.asarray(rows, dtype=float).reshape(-1, 3)
    n = len(rows)
    steps = np.zeros(n, dtype=int) if steps is None else np.asarray(steps)
    return TrafficSlice(steps, rows[:, 0], rows[:, 1], rows[:, 2], step_range)


@pytest.fixture
def three_items():
    # pctr=1, wp=1, objs 0.9/0.6/0.3
    return make_slice([(1, 1, 0.9), (1, 1, 0.6), (1, 1, 0.3)])


_CRITERIA = {}


class _Criterion:
    def __init__(self, n: int):
        self.n = n

    def check(self, ok: bool, detail: str):
        _CRITERIA[self.n] = (bool(ok), detail)
        assert ok, f"criterion {self.n}: {detail}"


@pytest.fixture
def criterion(request):
    """Recorder for one numbered acceptance criterion; the number comes from the test name."""
    n = int(request.node.name.split("_")[2])
    yield _Criterion(n)
    if n not in _CRITERIA:
        _CRITERIA[n] = (False, "test errored before checking")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
