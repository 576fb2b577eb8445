"""Independent reference computations used by the tests.

The radial oracle here minimises the p-energy over piecewise-linear radial
profiles directly; it shares no code with the library's quadrature oracle.
"""
import math

import numpy as np
from scipy.optimize import minimize


def sphere_area(n):
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _shell_weights(nodes, n):
    """omega * integral of rho^(n-1) over each segment."""
    return sphere_area(n) * (nodes[1:] ** n - nodes[:-1] ** n) / n


def radial_bruteforce(r_F, r_G, n, p, nodes=20_000):
    """Exact minimum over piecewise-linear profiles falling from 1 to 0.

    With segment lengths L_i and weights a_i the energy is
    sum a_i |du_i / L_i|^p subject to sum du_i = 1; the Lagrange conditions
    give the closed minimum (sum L_i^(p/(p-1)) a_i^(-1/(p-1)))^(1-p).
    Geometric spacing keeps the small-radius end resolved.
    """
    x = np.geomspace(r_F, r_G, nodes + 1)
    L = np.diff(x)
    a = _shell_weights(x, n)
    s = np.sum(L ** (p / (p - 1)) * a ** (-1 / (p - 1)))
    return float(s ** (1 - p))


def radial_minimize(r_F, r_G, n, p, nodes=200):
    """The same discrete problem solved by a generic optimiser."""
    x = np.geomspace(r_F, r_G, nodes + 1)
    L = np.diff(x)
    a = _shell_weights(x, n)

    def energy(u_inner):
        u = np.concatenate([[1.0], u_inner, [0.0]])
        g = np.abs(np.diff(u)) / L
        e = np.sum(a * g ** p)
        sg = np.sign(np.diff(u)) * p * g ** (p - 1) / L * a
        grad = np.zeros_like(u)
        grad[:-1] -= sg
        grad[1:] += sg
        return e, grad[1:-1]

    u0 = np.linspace(1, 0, nodes + 1)[1:-1]
    res = minimize(energy, u0, jac=True, method="L-BFGS-B", bounds=[(0, 1)] * len(u0),
                   options={"maxiter": 20_000, "ftol": 1e-15, "gtol": 1e-12})
    return float(res.fun)


# frozen outputs of radial_bruteforce (20000 nodes); radial_minimize agrees to
# 1e-5 relative and the closed forms 2 pi / log(r_G / r_F), 4 pi / (1/r_F - 1/r_G)
# to 1e-9
ANNULUS_05_1_P2 = 9.064720284561716
ANNULUS_1_E_P2 = 6.283185308488583
ANNULUS_05_1_P15 = 6.283185308122953
ANNULUS_05_1_P3 = 18.310543838460696
SHELL_1_2_P2_3D = 25.132741238780927
