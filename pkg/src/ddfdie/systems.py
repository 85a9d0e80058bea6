"""The three benchmark plants used in the examples and acceptance checks."""
from __future__ import annotations

import numpy as np

from .sim import StateSpaceModel, closed_loop_model, zoh_discretize

# Two-input, two-output plant with a transmission zero outside the unit circle.
NMP_A = np.array([
    [0.0, 0.0, 0.0, -0.01],
    [1.0, 0.0, 0.0, 0.08],
    [0.0, 1.0, 0.0, -0.27],
    [0.0, 0.0, 1.0, -0.54],
])
NMP_B = np.array([[1.0, -0.3], [0.0, 3.82], [0.0, 1.55], [0.0, -0.61]])
NMP_C = np.array([[1.58, 0.725, -0.60, 0.31], [2.4, -0.08, 0.42, -0.05]])

# Two-input, two-output minimum-phase plant. The matrix as commonly printed
# (MP_A_PRINTED) has poles and zeros that disagree with the ones quoted next to
# it; changing A[1, 3] to -0.40 and A[3, 3] to -0.50 restores poles
# {-0.37, 0.31, -0.515 +- 0.53j} and zeros {0.10, -0.60} and agrees with the
# published filter matrices. The corrected matrix is the default.
MP_A_PRINTED = np.array([
    [-0.05, -0.40, 0.0, -0.08],
    [-0.29, -0.11, 0.05, -0.03],
    [-0.06, 0.18, -0.43, 0.36],
    [0.28, 0.18, -0.43, 0.36],
])
MP_A = MP_A_PRINTED.copy()
MP_A[1, 3] = -0.40
MP_A[3, 3] = -0.50
MP_B = np.array([[-0.15, -0.99], [0.0, 0.0], [-0.68, 0.07], [-0.96, -0.20]])
MP_C = np.array([[-2.08, 0.0, -0.69, 0.0], [0.0, -0.84, 0.20, 0.89]])

# Linearized VTOL aircraft (continuous time).
VTOL_AC = np.array([
    [-0.036, 0.027, 0.018, -0.455],
    [0.048, -1.01, 0.002, -4.020],
    [0.100, 0.368, -0.707, 1.42],
    [0.0, 0.0, 1.0, 0.0],
])
VTOL_BC = np.array([[0.44, 0.17], [3.54, -7.59], [-5.52, 4.49], [0.0, 0.0]])
VTOL_C = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 1.0, 1.0],
])
VTOL_DT = 0.5
VTOL_KY = np.array([[0.0, 0.0, -0.5, 0.0], [0.0, 0.0, -0.1, -0.1]])
VTOL_Q = 0.16
VTOL_R = 0.64

EXAMPLE_NOISE = 0.1


def nonminimum_phase(noise: float = EXAMPLE_NOISE) -> StateSpaceModel:
    n, l = 4, 2
    return StateSpaceModel(NMP_A, NMP_B, NMP_C, noise * np.eye(n), noise * np.eye(l))


def minimum_phase(noise: float = EXAMPLE_NOISE, printed: bool = False) -> StateSpaceModel:
    n, l = 4, 2
    A = MP_A_PRINTED if printed else MP_A
    return StateSpaceModel(A, MP_B, MP_C, noise * np.eye(n), noise * np.eye(l))


def vtol_open_loop(q: float = VTOL_Q, r: float = VTOL_R) -> StateSpaceModel:
    """ZOH discretization of the VTOL model (open loop, not Schur stable)."""
    A, B = zoh_discretize(VTOL_AC, VTOL_BC, VTOL_DT)
    return StateSpaceModel(A, B, VTOL_C, q * np.eye(4), r * np.eye(4))


def vtol_closed_loop(q: float = VTOL_Q, r: float = VTOL_R) -> StateSpaceModel:
    """Reference-to-output VTOL model under the fixed output feedback."""
    return closed_loop_model(vtol_open_loop(q, r), VTOL_KY)


PAPER_SYSTEMS = {
    "example1": nonminimum_phase,
    "example2": minimum_phase,
    "vtol": vtol_closed_loop,
}


def get_system(name: str, **kw) -> StateSpaceModel:
    try:
        return PAPER_SYSTEMS[name](**kw)
    except KeyError:
        raise KeyError(f"unknown system {name!r}; choose from {sorted(PAPER_SYSTEMS)}") from None
