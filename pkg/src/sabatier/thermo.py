"""Mixture thermodynamics: molar mass, ideal-gas density, NASA-fit cp/h/s.

Compositions are passed as the three independent mass fractions
``y3 = (Y_CO2, Y_H2, Y_CH4)``; the H2O mass fraction is always derived as
``1 - sum(y3)``.  The core evaluation functions are written with jax.numpy so
they can be traced inside the reactor assembly kernel; they assume the
temperature is inside the fitted envelope (callers clamp), while the public
wrappers validate and raise :class:`TemperatureRangeError`.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from sabatier.constants import R_GAS
from sabatier.species import SPECIES_NAMES, PropertyPack


class TemperatureRangeError(ValueError):
    """Temperature outside a fitted range."""


@dataclass(frozen=True)
class Composition:
    """Mass fractions of (CO2, H2, CH4); Y_H2O is derived."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if y.shape != (3,):
            raise ValueError("composition needs exactly 3 mass fractions (CO2, H2, CH4)")
        if np.any(y < -1e-12) or self.y_h2o < -1e-12:
            raise ValueError(f"mass fractions out of range: {y}, Y_H2O={self.y_h2o}")

    @property
    def y_h2o(self) -> float:
        return 1.0 - float(self.y.sum())

    @property
    def full(self) -> np.ndarray:
        return np.append(self.y, self.y_h2o)


def full_mass_fractions(y3):
    """Append the derived H2O mass fraction: (3,) -> (4,)."""
    y3 = jnp.asarray(y3)
    return jnp.append(y3, 1.0 - jnp.sum(y3))


def _as_y3(y) -> jnp.ndarray:
    if isinstance(y, Composition):
        return jnp.asarray(y.y)
    return jnp.asarray(y)


def _select_range(T, lo, hi, last, values):
    """Pick the per-species fit value whose range contains T (last range
    inclusive at its upper bound)."""
    sel = (T >= lo) & ((T < hi) | last)
    return jnp.sum(sel * values, axis=1)


def clamp_temperature(pack: PropertyPack, T):
    """Clamp T to the validated fit envelope.

    Newton iterates may transiently leave the physical range; property
    evaluation stays defined (with zero derivative at the clamp), and
    converged states are interior so results are unaffected.
    """
    return jnp.clip(T, pack.t_min, pack.t_max)


# --- NASA 9-coefficient forms (molar quantities divided by R) ---------------


def molar_cp_over_R(pack: PropertyPack, T):
    """cp_k M_k / R for all four species, shape (4,)."""
    a = pack.nasa_coeffs  # (4, R, 9)
    val = (
        a[..., 0] / T**2
        + a[..., 1] / T
        + a[..., 2]
        + a[..., 3] * T
        + a[..., 4] * T**2
        + a[..., 5] * T**3
        + a[..., 6] * T**4
    )
    return _select_range(T, pack.nasa_lo, pack.nasa_hi, pack.nasa_last, val)


def molar_h_over_R(pack: PropertyPack, T):
    """h_k M_k / R (units K): the antiderivative of the cp fit plus b1."""
    a = pack.nasa_coeffs
    logT = jnp.log(T)
    val = (
        -a[..., 0] / T
        + a[..., 1] * logT
        + a[..., 2] * T
        + a[..., 3] / 2.0 * T**2
        + a[..., 4] / 3.0 * T**3
        + a[..., 5] / 4.0 * T**4
        + a[..., 6] / 5.0 * T**5
        + a[..., 7]
    )
    return _select_range(T, pack.nasa_lo, pack.nasa_hi, pack.nasa_last, val)


def molar_s_over_R(pack: PropertyPack, T):
    """s_k M_k / R: the antiderivative of cp/T plus b2."""
    a = pack.nasa_coeffs
    logT = jnp.log(T)
    val = (
        -a[..., 0] / 2.0 / T**2
        - a[..., 1] / T
        + a[..., 2] * logT
        + a[..., 3] * T
        + a[..., 4] / 2.0 * T**2
        + a[..., 5] / 3.0 * T**3
        + a[..., 6] / 4.0 * T**4
        + a[..., 8]
    )
    return _select_range(T, pack.nasa_lo, pack.nasa_hi, pack.nasa_last, val)


# --- mixture state -----------------------------------------------------------


def mean_molar_mass(pack: PropertyPack, y):
    """M = (sum_k Y_k / M_k)^-1 in kg/mol."""
    y4 = full_mass_fractions(_as_y3(y))
    return 1.0 / jnp.sum(y4 / pack.molar_mass)


def density(pack: PropertyPack, y, T, p_ref):
    """Weakly compressible ideal gas law: rho = p_ref M / (R T), kg/m^3."""
    return p_ref * mean_molar_mass(pack, y) / (R_GAS * T)


def mole_fractions(pack: PropertyPack, y):
    """X_k = Y_k M / M_k, shape (4,)."""
    y4 = full_mass_fractions(_as_y3(y))
    M = 1.0 / jnp.sum(y4 / pack.molar_mass)
    return y4 * M / pack.molar_mass


def mole_to_mass(pack: PropertyPack, x4):
    """Mass fractions (3 independent ones) from the full mole-fraction vector."""
    x4 = jnp.asarray(x4)
    w = x4 * pack.molar_mass
    y4 = w / jnp.sum(w)
    return y4[:3]


def stoichiometric_feed(pack: PropertyPack) -> np.ndarray:
    """Inlet mass fractions for the stoichiometric feed (mole fractions 1:4)."""
    return np.asarray(mole_to_mass(pack, jnp.array([0.2, 0.8, 0.0, 0.0])))


# --- validated per-species / mixture properties ------------------------------


def _check_species_range(pack: PropertyPack, k: int, T: float, lo, hi):
    t_lo, t_hi = lo[k][np.isfinite(lo[k])][0], hi[k][np.isfinite(hi[k])][-1]
    if not t_lo <= T <= t_hi:
        raise TemperatureRangeError(
            f"T = {T} K outside fitted range [{t_lo:g}, {t_hi:g}] K for species {SPECIES_NAMES[k]}"
        )


def cp_species(pack: PropertyPack, k: int, T: float) -> float:
    """Specific heat of species k in J/(kg K)."""
    _check_species_range(pack, k, T, pack.nasa_lo, pack.nasa_hi)
    return float(R_GAS * molar_cp_over_R(pack, T)[k] / pack.molar_mass[k])


def h_species(pack: PropertyPack, k: int, T: float) -> float:
    """Specific enthalpy of species k in J/kg (includes formation enthalpy)."""
    _check_species_range(pack, k, T, pack.nasa_lo, pack.nasa_hi)
    return float(R_GAS * molar_h_over_R(pack, T)[k] / pack.molar_mass[k])


def s_species(pack: PropertyPack, k: int, T: float) -> float:
    """Specific entropy of species k in J/(kg K)."""
    _check_species_range(pack, k, T, pack.nasa_lo, pack.nasa_hi)
    return float(R_GAS * molar_s_over_R(pack, T)[k] / pack.molar_mass[k])


def _check_envelope(pack: PropertyPack, T: float):
    if not pack.t_min <= T <= pack.t_max:
        raise TemperatureRangeError(
            f"T = {T} K outside the common fitted envelope [{pack.t_min:g}, {pack.t_max:g}] K"
        )


def cp_mix(pack: PropertyPack, y, T: float) -> float:
    """Mass-averaged mixture specific heat, J/(kg K)."""
    _check_envelope(pack, T)
    y4 = full_mass_fractions(_as_y3(y))
    return float(jnp.sum(y4 * R_GAS * molar_cp_over_R(pack, T) / pack.molar_mass))


def h_mix(pack: PropertyPack, y, T: float) -> float:
    """Mass-averaged mixture specific enthalpy, J/kg."""
    _check_envelope(pack, T)
    y4 = full_mass_fractions(_as_y3(y))
    return float(jnp.sum(y4 * R_GAS * molar_h_over_R(pack, T) / pack.molar_mass))


def s_mix(pack: PropertyPack, y, T: float) -> float:
    """Mass-averaged mixture specific entropy, J/(kg K)."""
    _check_envelope(pack, T)
    y4 = full_mass_fractions(_as_y3(y))
    return float(jnp.sum(y4 * R_GAS * molar_s_over_R(pack, T) / pack.molar_mass))
