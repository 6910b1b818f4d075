"""Mixture transport properties.

Viscosity uses the Wilke combination rule, thermal conductivity the standard
arithmetic/harmonic combination average, and diffusion the mixture-averaged
model built from Chapman-Enskog binary coefficients (Neufeld collision
integral fit).  Core functions are jax-traceable and assume an in-range
temperature; public wrappers validate.
"""

from __future__ import annotations

import jax.numpy as jnp
import numpy as np

from sabatier.constants import K_BOLTZMANN
from sabatier.species import SPECIES_NAMES, PropertyPack
from sabatier.thermo import TemperatureRangeError, _as_y3, _select_range, full_mass_fractions, mole_fractions

# Neufeld et al. 8-parameter fit of the reduced collision integral Omega(1,1)*.
_NEUFELD = (1.06036, 0.15610, 0.19300, 0.47635, 1.03587, 1.52996, 1.76474, 3.89411)

# Guard for the 1/(1 - Y_k) prefactor of the mixture-diffusion formula, which
# is singular for a pure species.
_PURE_SPECIES_EPS = 1e-12


def _fit_eval(T, lo, hi, last, coeffs):
    """ln(prop) = A ln T + B/T + C/T^2 + D, evaluated for all species."""
    val = coeffs[..., 0] * jnp.log(T) + coeffs[..., 1] / T + coeffs[..., 2] / T**2 + coeffs[..., 3]
    return jnp.exp(_select_range(T, lo, hi, last, val))


def species_viscosities(pack: PropertyPack, T):
    """Pure-species viscosities, Pa s, shape (4,)."""
    return _fit_eval(T, pack.visc_lo, pack.visc_hi, pack.visc_last, pack.visc_coeffs)


def species_conductivities(pack: PropertyPack, T):
    """Pure-species thermal conductivities, W/(m K), shape (4,)."""
    return _fit_eval(T, pack.cond_lo, pack.cond_hi, pack.cond_last, pack.cond_coeffs)


def wilke_weights(pack: PropertyPack, mu):
    """Phi_{k,j} combination weights from species viscosities and molar masses."""
    M = pack.molar_mass
    ratio_mu = mu[:, None] / mu[None, :]
    ratio_M = M[None, :] / M[:, None]
    num = (1.0 + jnp.sqrt(ratio_mu) * ratio_M**0.25) ** 2
    den = jnp.sqrt(8.0 * (1.0 + 1.0 / ratio_M))
    return num / den


def _viscosity_mix(pack: PropertyPack, y3, T):
    mu = species_viscosities(pack, T)
    X = mole_fractions(pack, y3)
    phi = wilke_weights(pack, mu)
    return jnp.sum(X * mu / (phi @ X))


def _conductivity_mix(pack: PropertyPack, y3, T):
    lam = species_conductivities(pack, T)
    X = mole_fractions(pack, y3)
    return 0.5 * (jnp.sum(X * lam) + 1.0 / jnp.sum(X / lam))


def collision_integral(t_reduced):
    """Reduced collision integral Omega(1,1)* as a function of T* = kB T / eps."""
    a, b, c, d, e, f, g, h = _NEUFELD
    return (
        a / t_reduced**b
        + c / jnp.exp(d * t_reduced)
        + e / jnp.exp(f * t_reduced)
        + g / jnp.exp(h * t_reduced)
    )


def binary_diffusion_matrix(pack: PropertyPack, T, p_ref):
    """Chapman-Enskog binary diffusion coefficients D_{k,j}, m^2/s, shape (4, 4).

    The diagonal holds the (unused) self-diffusion values of the same formula.
    """
    t_red = T / pack.eps_pair
    omega = collision_integral(t_red)
    num = 3.0 / 16.0 * jnp.sqrt(2.0 * jnp.pi * K_BOLTZMANN**3 * T**3 / pack.reduced_mass)
    den = p_ref * jnp.pi * pack.sigma_pair**2 * omega
    return num / den


def _diffusion_mix(pack: PropertyPack, y3, T, p_ref):
    y4 = full_mass_fractions(y3)
    X = mole_fractions(pack, y3)
    D = binary_diffusion_matrix(pack, T, p_ref)
    off = 1.0 - jnp.eye(4)
    inv_D = off / D
    term1 = inv_D @ X
    term2 = X / jnp.maximum(1.0 - y4, _PURE_SPECIES_EPS) * (inv_D @ y4)
    return 1.0 / jnp.maximum(term1 + term2, 1e-300)


# --- validated public wrappers ------------------------------------------------


def _check_range(pack: PropertyPack, T: float, lo, hi, what: str):
    for k in range(4):
        t_lo = lo[k][np.isfinite(lo[k])][0]
        t_hi = hi[k][np.isfinite(hi[k])][-1]
        if not t_lo <= T <= t_hi:
            raise TemperatureRangeError(
                f"T = {T} K outside {what} fit range [{t_lo:g}, {t_hi:g}] K for species {SPECIES_NAMES[k]}"
            )


def viscosity_mix(pack: PropertyPack, y, T: float) -> float:
    """Mixture viscosity (Wilke rule), Pa s."""
    _check_range(pack, T, pack.visc_lo, pack.visc_hi, "viscosity")
    return float(_viscosity_mix(pack, _as_y3(y), T))


def conductivity_mix(pack: PropertyPack, y, T: float) -> float:
    """Mixture thermal conductivity (combination average), W/(m K)."""
    _check_range(pack, T, pack.cond_lo, pack.cond_hi, "conductivity")
    return float(_conductivity_mix(pack, _as_y3(y), T))


def binary_diffusion(pack: PropertyPack, k: int, j: int, T: float, p_ref: float) -> float:
    """Binary diffusion coefficient of the pair (k, j), m^2/s."""
    if k == j:
        raise ValueError("binary diffusion requires two distinct species")
    return float(binary_diffusion_matrix(pack, T, p_ref)[k, j])


def diffusion_mix(pack: PropertyPack, y, T: float, p_ref: float) -> np.ndarray:
    """Mixture-averaged diffusion coefficients for all four species, m^2/s."""
    return np.asarray(_diffusion_mix(pack, _as_y3(y), T, p_ref))
