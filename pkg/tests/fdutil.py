"""Finite-difference oracles with repeated Richardson extrapolation."""
import numpy as np

_STENCILS = {
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
    4: {-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0},
}


def central(f, x, order, h):
    return sum(w * f(x + k * h) for k, w in _STENCILS[order].items()) / h**order


def richardson(f, x, order, h, levels=2):
    """Central difference of ``order``; each level removes the next even power of h."""
    table = [central(f, x, order, h / 2**i) for i in range(levels + 1)]
    for lev in range(1, levels + 1):
        c = 4.0**lev
        table = [(c * table[i + 1] - table[i]) / (c - 1.0) for i in range(len(table) - 1)]
    return table[0]


# step per order as a fraction of the shortest resolved length scale; balances
# the truncation remainder against round-off amplified by h^-order
STEP_FRACTION = {1: 5e-2, 2: 1e-1, 3: 5e-2, 4: 8e-2}
