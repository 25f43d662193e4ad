"""Closed-form references, written without any pilotbox internals."""

import numpy as np
from scipy.integrate import solve_ivp


def energy(m, length=1.0, mass=1.0, hbar=1.0):
    return (m * np.pi * hbar / length) ** 2 / (2 * mass)


def two_mode(x, t, coeffs=((1.0, 1), (1.0, 2)), length=1.0, mass=1.0, hbar=1.0):
    """psi, dpsi/dx, d2psi/dx2 of a normalized eigen-superposition at time t."""
    x = np.asarray(x, dtype=float)
    norm = np.sqrt(sum(abs(c) ** 2 for c, _ in coeffs))
    psi = np.zeros_like(x, dtype=complex)
    d1 = np.zeros_like(psi)
    d2 = np.zeros_like(psi)
    a = np.sqrt(2 / length)
    for c, m in coeffs:
        k = m * np.pi / length
        phase = c / norm * np.exp(-1j * energy(m, length, mass, hbar) * t / hbar)
        psi += phase * a * np.sin(k * x)
        d1 += phase * a * k * np.cos(k * x)
        d2 += -phase * a * k * k * np.sin(k * x)
    return psi, d1, d2


def velocity(x, t, **kw):
    psi, d1, _ = two_mode(x, t, **kw)
    mass, hbar = kw.get("mass", 1.0), kw.get("hbar", 1.0)
    return hbar / mass * (d1 / psi).imag


def quantum_potential_real(x, **kw):
    """-(1/2) R''/R for the t=0 real superposition, from analytic derivatives."""
    psi, _, d2 = two_mode(x, 0.0, **kw)
    return -0.5 * (d2 / psi).real


def trajectory(x0, t_end, rtol=1e-12, atol=1e-13, **kw):
    sol = solve_ivp(lambda t, y: velocity(y, t, **kw), (0.0, t_end), [x0],
                    rtol=rtol, atol=atol, dense_output=True, method="DOP853")
    return sol.sol


def box_ground_cdf(x, length=1.0):
    return x / length - np.sin(2 * np.pi * x / length) / (2 * np.pi)


def ks_brute(samples, cdf):
    """Textbook KS distance by scanning both sides of every jump."""
    s = np.sort(samples)
    n = len(s)
    best = 0.0
    for i, v in enumerate(s):
        f = cdf(v)
        best = max(best, (i + 1) / n - f, f - i / n)
    return best
