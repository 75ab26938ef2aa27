"""Generalized Laguerre polynomials and occupation-dependent coupling factors.

The sideband coupling between |n> and |n+1> deviates from the linear
sqrt(n+1) scaling at finite Lamb-Dicke parameter eta.  The deviation is
captured by Laguerre polynomials evaluated at eta**2; everything here is
computed with the stable three-term upward recurrence, no factorials.
"""

from __future__ import annotations

import math

import numpy as np


def laguerre(n: int, alpha: float, x: float) -> float:
    """Generalized Laguerre polynomial L_n^(alpha)(x) by upward recurrence."""
    if n < 0:
        raise ValueError("n must be >= 0")
    prev = 1.0
    if n == 0:
        return prev
    cur = 1.0 + alpha - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur


def laguerre_table(n_max: int, alpha: float, x: float) -> np.ndarray:
    """L_k^(alpha)(x) for k = 0 .. n_max as a vector."""
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = 1.0 + alpha - x
    for k in range(1, n_max):
        out[k + 1] = ((2 * k + 1 + alpha - x) * out[k] - (k + alpha) * out[k - 1]) / (k + 1)
    return out


def coupling_factor(n: int, eta: float) -> float:
    """Relative strength f(n) of the |n> <-> |n+1> sideband coupling.

    f(n) = exp(-eta^2/2) L_n^(1)(eta^2) / (n+1); f -> 1 as eta -> 0.
    """
    x = eta * eta
    return math.exp(-x / 2) * laguerre(n, 1.0, x) / (n + 1)


def bystander_factor(n: int, eta: float) -> float:
    """Carrier-like factor B(n) = exp(-eta^2/2) L_n(eta^2) from a spectator mode."""
    x = eta * eta
    return math.exp(-x / 2) * laguerre(n, 0.0, x)


def spectator_product(ns, etas, active_mode: int) -> float:
    """Product of bystander factors over every mode except the active one."""
    out = 1.0
    for j, (n, eta) in enumerate(zip(ns, etas)):
        if j == active_mode:
            continue
        out *= bystander_factor(int(n), eta)
    return out


def shift_scaling(n: int, eta: float) -> float:
    """Occupation scaling S(n) of the dispersive phase at finite eta.

    S(n) = exp(-eta^2) ( [L_n^(1)(eta^2)]^2 / (n+1) + [L_{n-1}^(1)(eta^2)]^2 / n ),
    with the second term absent at n = 0.  In the small-eta limit
    S(n) -> 2n + 1.
    """
    x = eta * eta
    first = laguerre(n, 1.0, x) ** 2 / (n + 1)
    second = laguerre(n - 1, 1.0, x) ** 2 / n if n > 0 else 0.0
    return math.exp(-x) * (first + second)
