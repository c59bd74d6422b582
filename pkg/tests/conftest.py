import numpy as np
import pytest

from spindd.field import GAMMA_E
from spindd.sequence import TogglingFunction


def ou_chi_quadrature(tog: TogglingFunction, sigma_b: float, tau_c: float,
                      gamma_e: float = GAMMA_E) -> float:
    """Brute-force 2-D quadrature of the OU phase variance.

    chi = g^2 s^2 intint s(t) s(t') exp(-|t-t'|/tau_c) dt dt', integrated with
    scipy.dblquad over each (smooth) segment pair.  Independent of the
    closed-form segment sum and of the Monte Carlo sampler.
    """
    from scipy.integrate import dblquad

    total = 0.0
    segs = list(tog.segments())
    for a1, b1, s1 in segs:
        for a2, b2, s2 in segs:
            if (a1, b1) == (a2, b2):
                # |t - u| kinks on the diagonal; integrate the ordered
                # triangle u < t and double it
                val, _ = dblquad(
                    lambda u, t: np.exp(-(t - u) / tau_c),
                    a1, b1, lambda t: a1, lambda t: t,
                    epsabs=1e-14, epsrel=1e-11,
                )
                val *= 2.0
            else:
                val, _ = dblquad(
                    lambda t, u: np.exp(-abs(t - u) / tau_c),
                    a1, b1, a2, b2, epsabs=1e-14, epsrel=1e-11,
                )
            total += s1 * s2 * val
    return gamma_e**2 * sigma_b**2 * total


def toggled_sine_quadrature(tog: TogglingFunction, amplitude, frequency, phi0,
                            gamma_e: float = GAMMA_E) -> float:
    """Numeric quadrature of gamma int s(t) b sin(2 pi f t + phi0) dt."""
    from scipy.integrate import quad

    total = 0.0
    for a, b, s in tog.segments():
        val, _ = quad(
            lambda t: amplitude * np.sin(2 * np.pi * frequency * t + phi0),
            a, b, epsabs=1e-15, epsrel=1e-13, limit=200,
        )
        total += s * val
    return gamma_e * total
