"""Stirred chemical reactor with heat exchanger, sampled at h = 0.05.

States: product concentration, product temperature, jacket water
temperature, coolant temperature. The first three are measured.
"""

import numpy as np

from .plant import LtiModel

F = (
    (0.8353, 0.0, 0.0, 0.0),
    (0.0, 0.8324, 0.0, 0.0031),
    (0.0, 0.0001, 0.1633, 0.0),
    (0.0, 0.0280, 0.0172, 0.9320),
)
G = (
    (0.0458, 0.0, 0.0),
    (0.0, 0.0457, 0.0),
    (0.0, 0.0, 0.0231),
    (0.0, 0.0007, 0.0006),
)
C = (
    (1.0, 0.0, 0.0, 0.0),
    (0.0, 1.0, 0.0, 0.0),
    (0.0, 0.0, 1.0, 0.0),
)

# reference filter quantities, given to four decimals with the model data
REFERENCE_L = (
    (0.8271, 0.0, 0.0),
    (0.0, 0.8243, 0.0002),
    (0.0, 0.0002, 0.1619),
    (0.0, 0.0481, 0.0543),
)
REFERENCE_SIGMA = (
    (1.0169, 0.0, 0.0),
    (0.0, 1.0169, 0.0001),
    (0.0, 0.0001, 1.0105),
)


def reactor_fixture() -> LtiModel:
    return LtiModel(
        F=np.array(F),
        G=np.array(G),
        C=np.array(C),
        R0=np.eye(4),
        R1=np.eye(4),
        R2=0.01 * np.eye(3),
    )
