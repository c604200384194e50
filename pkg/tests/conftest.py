import numpy as np
import pytest

from motionstitch.tensor import default_dtype


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function of one float64 array."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def recursive_fk(parent, rest, rotations, root):
    """Reference FK written independently: a joint's world frame is its parent's world frame times its local one."""

    def world(i):
        p = parent[i]
        bone = rest[i] - rest[p] if p >= 0 else rest[i]
        if p < 0:
            return rotations[i], root + bone
        rp, pp = world(p)
        return rp @ rotations[i], pp + rp @ bone

    return np.array([world(i)[1] for i in range(len(parent))])


@pytest.fixture
def f64():
    with default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
