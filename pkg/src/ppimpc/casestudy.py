"""DC-DC converter benchmark used throughout the tests and the default config.

``A`` is the matrix whose LQR solution for ``Q = diag(1, 10)``, ``R = 1`` is
``P = [[1.9074, -5.0562], [-5.0562, 39.5448]]`` and
``K_f = [-0.2858, 0.4910]``.  ``PRINTED_A`` (off-diagonals ten times larger)
is kept for comparison only: its LQR gain differs and ``A + B K_f`` with the
gain above is unstable for it.
"""

import numpy as np

from .geometry import Polytope
from .synthesis import SystemModel

A = np.array([[1.0, 0.0075], [-0.143, 0.996]])
PRINTED_A = np.array([[1.0, 0.075], [-1.43, 0.996]])
B = np.array([[4.798], [0.115]])
MU_W = np.array([0.005, 0.005])
SIGMA_W = 1e-4 * np.eye(2)
Q = np.diag([1.0, 10.0])
R = np.array([[1.0]])
P_REPORTED = np.array([[1.9074, -5.0562], [-5.0562, 39.5448]])
K_REPORTED = np.array([[-0.2858, 0.4910]])
X0 = np.array([2.6, 3.2])
EPS = 0.2
N = 10
FAN_SIZE = 66
T = 25
RUNS = 10_000

# |x1| <= 2, |x2| <= 3, |u| <= 0.4, each row scaled so its offset is 1
X_SET = Polytope([[0.5, 0.0], [-0.5, 0.0], [0.0, 1 / 3], [0.0, -1 / 3]], np.ones(4))
U_SET = Polytope([[2.5], [-2.5]], np.ones(2))


def model(A_matrix=A, eps_x=EPS, eps_u=EPS, mu_w=MU_W, Sigma_w=SIGMA_W) -> SystemModel:
    return SystemModel(A_matrix, B, mu_w, Sigma_w, X_SET, U_SET, eps_x, eps_u)
