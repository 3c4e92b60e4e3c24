"""Shared numerical oracles for the test suite."""
import math

import numpy as np
import pytest


def central_difference(fun, order: int, h: float) -> float:
    """Plain central difference of the given order with half-step h."""
    acc = 0.0
    for j in range(order + 1):
        acc += (-1.0) ** j * math.comb(order, j) * fun((order - 2 * j) * h)
    return acc / (2.0 * h) ** order


def nth_derivative(fun, order: int, h: float, levels: int = 3) -> float:
    """Richardson-extrapolated central finite difference at 0.

    Builds a Romberg-style table over h, h/2, ... eliminating the even
    error powers; `fun` must be smooth near 0.
    """
    table = [central_difference(fun, order, h / 2**k) for k in range(levels)]
    for stage in range(1, levels):
        factor = 4.0**stage
        table = [
            (factor * fine - coarse) / (factor - 1.0)
            for coarse, fine in zip(table, table[1:])
        ]
    return table[0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240731)
