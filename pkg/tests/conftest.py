"""Closed-form oracles shared by the test modules.

These are written independently of the package: quadratic and cubic roots,
polynomial critical points and scipy quadrature of explicit densities.
"""

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy import integrate


def mp_m1o(z_o, phi):
    """Root with Im > 0 of z m^2 + (z + 1 - phi) m + 1 = 0 (identity population, o-scale)."""
    z_o = np.asarray(z_o, dtype=complex)
    b = z_o + 1.0 - phi
    disc = np.sqrt(b * b - 4.0 * z_o)
    r1 = (-b + disc) / (2.0 * z_o)
    r2 = (-b - disc) / (2.0 * z_o)
    return np.where(r1.imag > 0, r1, r2)


def mp_density_rescaled(E, phi):
    """M-normalised density of the identity-population law on the rescaled scale."""
    E = np.asarray(E, dtype=float)
    s = np.sqrt(phi)
    x = s * E
    a, b = (1 - s) ** 2, (1 + s) ** 2
    inside = (x > a) & (x < b)
    val = np.zeros_like(x)
    xi = x[inside]
    val[inside] = np.sqrt((b - xi) * (xi - a)) / (2 * np.pi * phi * xi)
    return s * val


def mp_mass_above(gamma, phi, R):
    """N-normalised mass of the continuous part above gamma (rho_W = phi * rho)."""
    val, _ = integrate.quad(lambda e: phi * mp_density_rescaled(np.array([e]), phi)[0], gamma, R, limit=200)
    return val


def semicircle_m(z):
    z = np.asarray(z, dtype=complex)
    r = (-z + np.sqrt(z * z - 4.0)) / 2.0
    return np.where(r.imag > 0, r, (-z - np.sqrt(z * z - 4.0)) / 2.0)


def two_atom_critical(phi, values=(2.0, 1.0), weights=(0.5, 0.5)):
    """Critical points and values of f by clearing denominators of f'(x) = 0."""
    c = [1.0 / v for v in values]
    A = Polynomial([c[0], 1]) ** 2
    B = Polynomial([c[1], 1]) ** 2
    X2 = Polynomial([0, 0, 1])
    poly = A * B - phi * X2 * (weights[0] * B + weights[1] * A)
    xs = sorted((r.real for r in poly.roots() if abs(r.imag) < 1e-10), reverse=True)
    f = lambda x: -1 / x + phi * sum(w / (x + ci) for w, ci in zip(weights, c))
    return xs, sorted((f(x) for x in xs), reverse=True)


def gsc_oracle(z):
    """Generalised semicircle system for pi = 0.5 delta_2 + 0.5 delta_1 via its cubic in g."""
    g = Polynomial([0, 1])
    lhs = g * Polynomial([-z, -2]) * Polynomial([-z, -1])
    rhs = Polynomial([-z, -1]) + 0.5 * Polynomial([-z, -2])
    for root in (lhs - rhs).roots():
        m = -(1 + root**2) / z
        if root.imag > 0 and m.imag > 0:
            return m, root
    raise AssertionError("no Herglotz root")


@pytest.fixture
def identity():
    from covspectra import identity_spectrum

    return identity_spectrum()


@pytest.fixture
def two_atom():
    from covspectra import make_spectrum

    return make_spectrum([(2.0, 0.5), (1.0, 0.5)])
