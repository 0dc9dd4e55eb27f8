"""Park (0dq) transformation with the non-power-invariant 2/3 scaling.

Rows are ordered (0, d, q).  The stationary frame uses ``theta = 0``.
"""

import math

import numpy as np

LAMBDA = 2.0 * math.pi / 3.0


def park_matrix(theta: float = 0.0) -> np.ndarray:
    return (2.0 / 3.0) * np.array(
        [
            [0.5, 0.5, 0.5],
            [math.cos(theta), math.cos(theta - LAMBDA), math.cos(theta + LAMBDA)],
            [math.sin(theta), math.sin(theta - LAMBDA), math.sin(theta + LAMBDA)],
        ]
    )


def inverse_park_matrix(theta: float = 0.0) -> np.ndarray:
    return np.array(
        [
            [1.0, math.cos(theta), math.sin(theta)],
            [1.0, math.cos(theta - LAMBDA), math.sin(theta - LAMBDA)],
            [1.0, math.cos(theta + LAMBDA), math.sin(theta + LAMBDA)],
        ]
    )


def abc_to_0dq(theta: float, f_abc) -> np.ndarray:
    return park_matrix(theta) @ np.asarray(f_abc, dtype=float)


def dq0_to_abc(theta: float, f_0dq) -> np.ndarray:
    return inverse_park_matrix(theta) @ np.asarray(f_0dq, dtype=float)
