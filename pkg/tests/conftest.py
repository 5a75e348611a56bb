import numpy as np
import pytest

from delaydoppler.signal_model import RadarGrid


@pytest.fixture
def small_grid():
    return RadarGrid(16, 8, 1.0e6, 1.0e-4)


@pytest.fixture
def accept_grid():
    # 256 x 64 grid keeping the 6.25 ns / 156.25 Hz resolutions
    return RadarGrid(256, 64, 625.0e3, 100.0e-6)


def naive_frame(paths, grid):
    """Scalar double loop over the path model."""
    out = np.zeros((grid.K, grid.L), dtype=complex)
    for k in range(grid.K):
        for l in range(grid.L):
            acc = 0j
            for p in paths:
                acc += p.weight * np.exp(-2j * np.pi * k * p.delay * grid.delta_f) * np.exp(
                    2j * np.pi * l * p.doppler * grid.delta_t
                )
            out[k, l] = acc
    return out


def naive_periodogram(data, pad_delay=1, pad_doppler=1):
    """Direct evaluation of |sum_kl H exp(+2j pi k i/Ki) exp(-2j pi l j/Lj)|^2."""
    K, L = data.shape
    n_i, n_j = K * pad_delay, L * pad_doppler
    k = np.arange(K)
    l = np.arange(L)
    out = np.empty((n_i, n_j))
    for i in range(n_i):
        for j in range(n_j):
            kern = np.outer(np.exp(2j * np.pi * k * i / n_i), np.exp(-2j * np.pi * l * j / n_j))
            out[i, j] = abs(np.sum(data * kern)) ** 2
    return out


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
