"""Sabatier reaction source terms and equilibrium analysis.

The reaction CO2 + 4 H2 <=> CH4 + 2 H2O is modeled by a single empirical rate
of progress: an Arrhenius forward rate constant applied to the difference of
the forward and (equilibrium-scaled) reverse concentration products, each
raised to an empirical exponent.  Both the elementary and the empirical form
vanish at the same thermodynamic equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np
from scipy.optimize import brentq

from sabatier.constants import P_ATM, R_GAS
from sabatier.species import NU, PropertyPack
from sabatier.thermo import (
    TemperatureRangeError,
    _as_y3,
    full_mass_fractions,
    molar_h_over_R,
    molar_s_over_R,
)


@dataclass(frozen=True)
class KineticParams:
    """Arrhenius parameters of the forward rate constant plus the rate exponent.

    The pre-exponential factor is stored as its natural logarithm, which keeps
    it positive under optimization.  Units of exp(log_pre_exponential) are
    1/s (mol/m^3)^(1 - 5 n).
    """

    activation_energy: float  # J/mol
    log_pre_exponential: float
    rate_exponent: float  # dimensionless, >= 0

    def __post_init__(self):
        if self.rate_exponent < 0.0:
            raise ValueError(f"rate exponent must be non-negative, got {self.rate_exponent}")

    @property
    def pre_exponential(self) -> float:
        return math.exp(self.log_pre_exponential)

    def as_array(self) -> np.ndarray:
        return np.array([self.activation_energy, self.log_pre_exponential, self.rate_exponent])

    @staticmethod
    def from_array(x) -> "KineticParams":
        return KineticParams(float(x[0]), float(x[1]), float(x[2]))


# Reference parameters fitted to the benchmark microreactor conversion data.
REFERENCE_KINETICS = KineticParams(
    activation_energy=52141.0,
    log_pre_exponential=math.log(4.744e5),
    rate_exponent=0.0581,
)


@dataclass(frozen=True)
class ReactionState:
    """Volumetric reaction sources at one thermodynamic state."""

    rate_of_progress: float  # mol/(m^3 s)
    mass_sources: np.ndarray  # (4,), kg/(m^3 s), sums to zero
    heat_release: float  # W/m^3


def forward_rate(params, T):
    """Arrhenius forward rate constant k_f = A exp(-E_a / (R T))."""
    ea, loga = params.activation_energy, params.log_pre_exponential
    return jnp.exp(loga - ea / (R_GAS * T))


def equilibrium_constant(pack: PropertyPack, T):
    """Concentration-based equilibrium constant from Gibbs free energy.

    k_eq = exp(dS0/R - dH0/(R T)) (p_atm / (R T))^sum(nu) with sum(nu) = -2.
    """
    h_over_R = molar_h_over_R(pack, T)  # molar h / R, units K
    s_over_R = molar_s_over_R(pack, T)
    gibbs_exponent = jnp.dot(NU, s_over_R) - jnp.dot(NU, h_over_R) / T
    return jnp.exp(gibbs_exponent) * (P_ATM / (R_GAS * T)) ** -2.0


def _safe_pow(x, n):
    """x**n for x >= 0 with derivative 0 at (and below) the clamp at zero."""
    positive = x > 0.0
    x_safe = jnp.where(positive, x, 1.0)
    return jnp.where(positive, x_safe**n, 0.0)


def concentrations(pack: PropertyPack, y3, rho):
    """Molar concentrations [X_k] = rho Y_k / M_k, clamped non-negative."""
    y4 = full_mass_fractions(y3)
    c = rho * y4 / pack.molar_mass
    return jnp.where(c > 0.0, c, 0.0)


def _rate(pack: PropertyPack, y3, T, rho, ea, loga, n):
    """Rate of progress from raw parameter values (jax-traceable core)."""
    c = concentrations(pack, y3, rho)
    forward_product = c[0] * c[1] ** 4
    reverse_product = c[2] * c[3] ** 2
    k_eq = equilibrium_constant(pack, T)
    k_f = jnp.exp(loga - ea / (R_GAS * T))
    return k_f * (_safe_pow(forward_product, n) - _safe_pow(reverse_product / k_eq, n))


def rate_of_progress(pack: PropertyPack, y, T, rho, params):
    """Net volumetric rate Q = k_f ((c_CO2 c_H2^4)^n - (c_CH4 c_H2O^2 / k_eq)^n)."""
    return _rate(
        pack, _as_y3(y), T, rho, params.activation_energy, params.log_pre_exponential, params.rate_exponent
    )


def species_sources(pack: PropertyPack, y, T, rho, params, in_reaction_zone=True) -> ReactionState:
    """Mass and heat sources; all zero outside the catalytic reaction zone."""
    zone = 1.0 if in_reaction_zone else 0.0
    q = zone * rate_of_progress(pack, y, T, rho, params)
    omega = pack.molar_mass * NU * q
    h_mass = R_GAS * molar_h_over_R(pack, T) / pack.molar_mass
    heat = -jnp.dot(h_mass, omega)
    return ReactionState(
        rate_of_progress=float(q),
        mass_sources=np.asarray(omega),
        heat_release=float(heat),
    )


def reaction_enthalpy(pack: PropertyPack, T) -> float:
    """Molar reaction enthalpy dH0_r(T) = sum_k nu_k M_k h_k(T), J/mol."""
    return float(R_GAS * jnp.dot(NU, molar_h_over_R(pack, T)))


def equilibrium_conversion(pack: PropertyPack, T: float, p_total: float) -> float:
    """Equilibrium CO2 conversion for the stoichiometric feed at (T, p_total).

    With reaction extent xi, the mole table is {CO2: 1-xi, H2: 4-4xi, CH4: xi,
    H2O: 2xi, total: 5-2xi} and the equilibrium condition
    [CH4][H2O]^2 / ([CO2][H2]^4) = k_eq has a unique root xi in (0, 1), which
    equals the conversion.
    """
    if not pack.t_min <= T <= pack.t_max:
        raise TemperatureRangeError(
            f"T = {T} K outside the fitted envelope [{pack.t_min:g}, {pack.t_max:g}] K"
        )
    c_total = p_total / (R_GAS * T)
    target = math.log(float(equilibrium_constant(pack, T))) + 2.0 * math.log(c_total)

    def log_ratio(xi):
        # log of [xi (2 xi)^2 (5-2 xi)^2] / [(1-xi) (4 (1-xi))^4], monotone in xi
        return (
            3.0 * math.log(xi)
            + math.log(4.0)
            + 2.0 * math.log(5.0 - 2.0 * xi)
            - 5.0 * math.log(1.0 - xi)
            - math.log(256.0)
            - target
        )

    lo, hi = 1e-14, 1.0 - 1e-14
    f_lo, f_hi = log_ratio(lo), log_ratio(hi)
    if not (f_lo < 0.0 < f_hi):
        raise RuntimeError(
            f"equilibrium bracket failure at T={T} K, p={p_total} Pa: f({lo})={f_lo}, f({hi})={f_hi}"
        )
    return float(brentq(log_ratio, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200))


def equilibrium_mole_fractions(chi: float) -> np.ndarray:
    """Mole fractions (CO2, H2, CH4, H2O) at extent chi of the stoichiometric feed."""
    total = 5.0 - 2.0 * chi
    return np.array([(1.0 - chi) / total, 4.0 * (1.0 - chi) / total, chi / total, 2.0 * chi / total])
