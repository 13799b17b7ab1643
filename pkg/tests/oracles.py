"""Independent reference values and closed-form solutions.

Nothing here imports the package.  The frozen constants were computed once
from the closed-form expressions next to them (plain ``math``) and are
compared against the implementation in the module tests.
"""

import math

MMHG = 133.322387415

# Hagen-Poiseuille: pi R^4 dp / (8 mu L), R = 10 um, L = 1 mm, dp = 100 Pa, mu = 3e-3
POISEUILLE_Q = 1.3089969389957477e-13

# interendothelial, homogenised: rho eps_v L_p S/V dp with L_p = 1e-10 m^2 s/kg,
# eps_v = 0.028, S/V = 7000, dp = 100 Pa, mean omega = 1e-3 (omega factor included)
INTERENDO_HOMOG = 1.96e-6
# interendothelial, discrete, per unit length: rho 2 pi R L_p dp omega, R = 10 um
INTERENDO_DISCRETE = 6.283185307179587e-13
# transendothelial, homogenised: rho eps_v P_v S/V domega, P_v = 2e-9 m/s
TRANSENDO_HOMOG = 3.9200000000000007e-07
# lymphatic drainage: rho (L_p S/V)^ly p_l omega, p_l = 533.3 Pa
LYMPH_DRAINAGE = 5.546319999999999e-4

# volumetric heat source: rho eps_v omega SAR, eps_v = 0.028, omega = 2e-3, SAR = 2e6
Q_P_VOLUME = 112000.0
# line heat source: rho pi R^2 omega SAR, R = 10 um
Q_P_LINE = 1.2566370614359175e-3
# lumped sink: rho c w dT, w = 0.018, dT = 1 K
Q_BL_LUMPED = 62459.99999999999
# discrete sink: 2 pi R beta dT, R = 10 um, beta = 20, dT = 4 K
Q_BL_DISCRETE = 5.02654824574367e-3
# Pennes steady excess temperature Q_p / (rho c w) for Q_p = 1.12e5, w = 0.018
PENNES_DT = 1.7931476144732632


def poiseuille_flow(R, L, dp, mu):
    return math.pi * R**4 * dp / (8.0 * mu * L)


def fourier_slab(x, t, L, alpha, theta0, terms=400):
    """Excess temperature of a slab at uniform theta0, ends held at zero."""
    s = 0.0
    for k in range(terms):
        n = 2 * k + 1
        s += 4.0 * theta0 / (n * math.pi) * math.sin(n * math.pi * x / L) * math.exp(
            -alpha * (n * math.pi / L) ** 2 * t)
    return s


def bilinear_product_integral(a, b):
    """Integral over [-1,1]^2 of (a0 + a1 x + a2 y + a3 xy)(b0 + b1 x + b2 y + b3 xy)."""
    # monomial moments: int x^i y^j = m(i) m(j), m(0) = 2, m(1) = 0, m(2) = 2/3
    m = {0: 2.0, 1: 0.0, 2: 2.0 / 3.0}
    powers = [(0, 0), (1, 0), (0, 1), (1, 1)]
    total = 0.0
    for ai, (pi, qi) in zip(a, powers):
        for bj, (pj, qj) in zip(b, powers):
            total += ai * bj * m[pi + pj] * m[qi + qj]
    return total


def ellipse_area_fraction(a, b, Lx, Ly):
    return math.pi * a * b / (Lx * Ly)


def upwind_front_position(Q, A, t):
    return Q / A * t
