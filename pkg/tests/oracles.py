"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np
from scipy.integrate import quad
from scipy.special import j0

MU_0 = 4e-7 * np.pi


def halfspace_rte(lam, sigma, omega):
    u = np.sqrt(lam**2 + 1j * omega * MU_0 * sigma)
    return (lam - u) / (lam + u)


def hz_halfspace_quadrature(sigma, f, height, separation):
    """Normalized secondary Hz (percent) of a halfspace by adaptive quadrature."""
    omega = 2 * np.pi * f

    def part(fn):
        g = lambda lam: fn(halfspace_rte(lam, sigma, omega)) * np.exp(-2 * lam * height) * lam**2 * j0(lam * separation)
        # the kernel is below 1e-60 of its peak beyond 80 / height
        return quad(g, 0.0, 80.0 / height, limit=500, epsabs=0.0, epsrel=1e-11)[0]

    integral = part(np.real) + 1j * part(np.imag)
    return 100.0 * integral * separation**3


def laminate_tensor(s1, s2):
    """Effective tensor eigenvalues of an equal-volume laminate normal to z."""
    arith = 0.5 * (s1 + s2)
    harm = 2.0 / (1.0 / s1 + 1.0 / s2)
    return np.array([harm, arith, arith])
