"""1D steady reactor model on Omega = (-L/10, L).

The state (p, u, T, Y_CO2, Y_H2, Y_CH4) is discretized with a mixed
finite-element layout (P2 velocity, P1 everything else) on a uniform mesh.
The weak-form residual is assembled from a single per-element kernel written
with jax.numpy; the exact Jacobian and the control derivatives are
forward-mode AD of that same kernel.  The nonlinear system is solved with a
damped Newton method whose step acceptance uses the natural monotonicity
criterion (the simplified Newton correction, computed with the frozen
factorization, must contract).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu

from sabatier import kinetics as kin_mod
from sabatier import thermo, transport
from sabatier.constants import P_NORM, R_GAS, T_NORM
from sabatier.kinetics import KineticParams
from sabatier.species import NU, PropertyPack, SpeciesTable

# 3-point Gauss-Legendre quadrature on [0, 1].
_QP = np.array([0.5 - np.sqrt(3.0 / 5.0) / 2.0, 0.5, 0.5 + np.sqrt(3.0 / 5.0) / 2.0])
_QW = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])

# P1 and P2 shape functions and reference derivatives at the quadrature points.
_P1_N = np.stack([1.0 - _QP, _QP], axis=1)  # (3, 2)
_P1_D = np.array([-1.0, 1.0])  # (2,)
_P2_N = np.stack([(1.0 - _QP) * (1.0 - 2.0 * _QP), 4.0 * _QP * (1.0 - _QP), _QP * (2.0 * _QP - 1.0)], axis=1)
_P2_D = np.stack([4.0 * _QP - 3.0, 4.0 - 8.0 * _QP, 4.0 * _QP - 1.0], axis=1)  # (3, 3)

# Atom counts (C, O, H) per species (CO2, H2, CH4, H2O).
ATOM_MATRIX = np.array([
    [1.0, 0.0, 1.0, 0.0],
    [2.0, 0.0, 0.0, 1.0],
    [0.0, 2.0, 4.0, 2.0],
])

FLOW_UNIT = 1.0e-6 / 60.0  # mL/min -> m^3/s


class NonconvergenceError(RuntimeError):
    """Newton solve did not reach the residual tolerance."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class ReactorConfig:
    """Geometry, porous-medium parameters, and operating conditions."""

    length: float = 5.0e-2  # m, catalytic section; inlet section adds length/10
    channel_width: float = 4.5e-4  # m
    channel_height: float = 1.5e-4  # m
    n_channels: int = 80
    permeability: float = 1.48e-9  # m^2, Brinkman drag mu/K
    h_fs: float = 6.77e8  # W/(K m^3), gas-wall interfacial heat exchange
    p_ref: float = 1.0e6  # Pa, operating pressure
    n_nodes: int = 1001
    inlet_mass_fractions: tuple | None = None  # (Y_CO2, Y_H2, Y_CH4); None = stoichiometric
    reaction_enabled: bool = True

    def __post_init__(self):
        for name in ("length", "channel_width", "channel_height", "permeability", "h_fs", "p_ref"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.n_channels < 1 or self.n_nodes < 3:
            raise ValueError("need at least one channel and three mesh nodes")

    @property
    def x_inlet(self) -> float:
        return -self.length / 10.0

    @property
    def cross_section(self) -> float:
        return self.channel_width * self.channel_height


@dataclass(frozen=True)
class Mesh1D:
    """Uniform mesh on [-L/10, L] with a per-element reaction-zone flag."""

    nodes: np.ndarray
    reaction_elements: np.ndarray  # bool, True where the element midpoint is in x > 0

    @staticmethod
    def build(cfg: ReactorConfig) -> "Mesh1D":
        nodes = np.linspace(cfg.x_inlet, cfg.length, cfg.n_nodes)
        mid = 0.5 * (nodes[:-1] + nodes[1:])
        return Mesh1D(nodes=nodes, reaction_elements=mid > 0.0)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def h(self) -> float:
        return float(self.nodes[1] - self.nodes[0])


@dataclass(frozen=True)
class DofLayout:
    """Block layout of the global dof vector: p | u | T | Y_CO2 | Y_H2 | Y_CH4."""

    n_nodes: int

    @property
    def n_dof(self) -> int:
        return 7 * self.n_nodes - 1

    @property
    def off_p(self) -> int:
        return 0

    @property
    def off_u(self) -> int:
        return self.n_nodes

    @property
    def off_t(self) -> int:
        return 3 * self.n_nodes - 1

    def off_y(self, k: int) -> int:
        return (4 + k) * self.n_nodes - 1

    def element_dofs(self, e: np.ndarray) -> np.ndarray:
        """Global indices of the 13 local dofs of element(s) e."""
        e = np.atleast_1d(e)
        n = self.n_nodes
        cols = [
            e,
            e + 1,
            n + 2 * e,
            n + 2 * e + 1,
            n + 2 * e + 2,
            self.off_t + e,
            self.off_t + e + 1,
            self.off_y(0) + e,
            self.off_y(0) + e + 1,
            self.off_y(1) + e,
            self.off_y(1) + e + 1,
            self.off_y(2) + e,
            self.off_y(2) + e + 1,
        ]
        return np.stack(cols, axis=1)

    @property
    def dirichlet_rows(self) -> np.ndarray:
        """Inlet rows carrying prescribed values: u, T, and the three Y's."""
        return np.array([self.off_u, self.off_t, self.off_y(0), self.off_y(1), self.off_y(2)])

    def split(self, y: np.ndarray) -> "StateFields":
        n = self.n_nodes
        return StateFields(
            p=y[:n],
            u=y[n : 3 * n - 1],
            T=y[self.off_t : self.off_t + n],
            y_co2=y[self.off_y(0) : self.off_y(0) + n],
            y_h2=y[self.off_y(1) : self.off_y(1) + n],
            y_ch4=y[self.off_y(2) : self.off_y(2) + n],
        )


@dataclass(frozen=True)
class StateFields:
    """Field views of a state vector (arrays share memory with it)."""

    p: np.ndarray
    u: np.ndarray  # P2: vertices at even indices, midpoints at odd
    T: np.ndarray
    y_co2: np.ndarray
    y_h2: np.ndarray
    y_ch4: np.ndarray

    @property
    def u_nodal(self) -> np.ndarray:
        return self.u[::2]

    @property
    def y_h2o(self) -> np.ndarray:
        return 1.0 - self.y_co2 - self.y_h2 - self.y_ch4

    @property
    def y3(self) -> np.ndarray:
        return np.stack([self.y_co2, self.y_h2, self.y_ch4])


@dataclass(frozen=True)
class ResidualControls:
    """Everything the residual depends on besides the state."""

    kinetics: KineticParams
    wall_temperature: np.ndarray  # (n_nodes,), K
    flow_rate: float  # reactor-wide mL/min at normal conditions

    def kin_array(self) -> np.ndarray:
        return self.kinetics.as_array()


@dataclass
class SolveResult:
    """Outcome of one damped Newton solve."""

    y: np.ndarray
    converged: bool
    iterations: int
    residual_norms: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    message: str = ""


def inlet_velocity_from_flow(flow_mln: float, cfg: ReactorConfig, t_inlet: float) -> float:
    """Channel inlet velocity [m/s] for a reactor-wide normal-condition flow.

    The quoted flow (mL/min at 101325 Pa, 273.15 K) is split uniformly over
    the channels and re-expanded to the operating pressure and the inlet
    temperature with the ideal gas law.
    """
    per_channel = flow_mln * FLOW_UNIT / cfg.n_channels
    return per_channel * (P_NORM / cfg.p_ref) * (t_inlet / T_NORM) / cfg.cross_section


def molar_inflow(flow_mln: float) -> float:
    """Total molar feed rate [mol/s] of a normal-condition volumetric flow."""
    return flow_mln * FLOW_UNIT * P_NORM / (R_GAS * T_NORM)


def product_yield(flow_mln: float, conversion: float) -> float:
    """Reactor-wide molar product yield (CH4 + H2O) in mol/s.

    Each converted CO2 (1/5 of the stoichiometric feed) yields one CH4 and
    two H2O.
    """
    return 3.0 * conversion * molar_inflow(flow_mln) / 5.0


# --- element kernel -----------------------------------------------------------


def _element_rows(q, tw, kin, react, h, pref, kperm, hfs, pack: PropertyPack):
    """Weak-form residual rows of one element, including the two rows of the
    implied H2O equation (used only for diagnostics).

    q holds the 13 local dofs (p_l, p_r, u_l, u_m, u_r, T_l, T_r, and the
    left/right values of the three solved mass fractions); tw the local wall
    temperatures; kin = (E_a, log A, n); react is 1.0 inside the catalytic
    zone.
    """
    ea, loga, n_exp = kin[0], kin[1], kin[2]
    rows = jnp.zeros(15)

    for iq in range(3):
        w = _QW[iq] * h
        N1 = _P1_N[iq]
        dN1 = _P1_D / h
        N2 = _P2_N[iq]
        dN2 = _P2_D[iq] / h

        p = N1 @ q[0:2]
        u = N2 @ q[2:5]
        du = dN2 @ q[2:5]
        T = N1 @ q[5:7]
        dT = dN1 @ q[5:7]
        y3 = jnp.array([N1 @ q[7:9], N1 @ q[9:11], N1 @ q[11:13]])
        dy3 = jnp.array([dN1 @ q[7:9], dN1 @ q[9:11], dN1 @ q[11:13]])
        twq = N1 @ tw

        y4 = jnp.append(y3, 1.0 - jnp.sum(y3))
        dy4 = jnp.append(dy3, -jnp.sum(dy3))

        # Properties are evaluated at a clamped temperature so transient
        # Newton iterates cannot leave the fitted envelope.
        Tc = thermo.clamp_temperature(pack, T)
        inv_M = 1.0 / pack.molar_mass
        S = y4 @ inv_M
        rho = pref / (R_GAS * Tc * S)
        drho = -rho * (dT / Tc + (dy4 @ inv_M) / S)

        cp_k = R_GAS * thermo.molar_cp_over_R(pack, Tc) * inv_M
        h_k = R_GAS * thermo.molar_h_over_R(pack, Tc) * inv_M
        cp = y4 @ cp_k
        mu = transport._viscosity_mix(pack, y3, Tc)
        kappa = transport._conductivity_mix(pack, y3, Tc)
        d_mix = transport._diffusion_mix(pack, y3, Tc, pref)
        v_corr = d_mix @ dy4

        q_rate = react * kin_mod._rate(pack, y3, Tc, rho, ea, loga, n_exp)
        omega = pack.molar_mass * NU * q_rate
        heat_reaction = -h_k @ omega
        heat_diffusion = -rho * (cp_k @ (y4 * v_corr - d_mix * dy4)) * dT

        mass = rho * du + drho * u
        momentum_val = rho * u * du + mu / kperm * u
        momentum_grad = (4.0 / 3.0) * mu * du - p
        energy_val = rho * cp * u * dT + hfs * (T - twq) - heat_reaction - heat_diffusion
        energy_grad = kappa * dT

        rows = rows.at[0:2].add(w * mass * N1)
        rows = rows.at[2:5].add(w * (momentum_val * N2 + momentum_grad * dN2))
        rows = rows.at[5:7].add(w * (energy_val * N1 + energy_grad * dN1))
        for k in range(4):
            val = rho * u * dy4[k] - omega[k]
            grad = rho * d_mix[k] * dy4[k] - rho * v_corr * y4[k]
            lo = 7 + 2 * k
            rows = rows.at[lo : lo + 2].add(w * (val * N1 + grad * dN1))
    return rows


def _kernel13(q, tw, kin, react, h, pref, kperm, hfs, pack):
    return _element_rows(q, tw, kin, react, h, pref, kperm, hfs, pack)[:13]


def _kernel13_aux(q, tw, kin, react, h, pref, kperm, hfs, pack):
    r = _kernel13(q, tw, kin, react, h, pref, kperm, hfs, pack)
    return r, r


_AXES = (0, 0, None, 0, None, None, None, None, None)

_residual_batch = jax.jit(jax.vmap(_element_rows, in_axes=_AXES))
_resjac_batch = jax.jit(jax.vmap(jax.jacfwd(_kernel13_aux, argnums=0, has_aux=True), in_axes=_AXES))
_ctrljac_batch = jax.jit(jax.vmap(jax.jacfwd(_kernel13, argnums=(1, 2)), in_axes=_AXES))


def _mass_flux_quad(q, pref, pack):
    """rho*u at the element quadrature points (diagnostic)."""
    out = []
    for iq in range(3):
        N1 = _P1_N[iq]
        N2 = _P2_N[iq]
        u = N2 @ q[2:5]
        T = N1 @ q[5:7]
        y3 = jnp.array([N1 @ q[7:9], N1 @ q[9:11], N1 @ q[11:13]])
        y4 = jnp.append(y3, 1.0 - jnp.sum(y3))
        Tc = thermo.clamp_temperature(pack, T)
        rho = pref / (R_GAS * Tc * (y4 @ (1.0 / pack.molar_mass)))
        out.append(rho * u)
    return jnp.stack(out)


_mass_flux_batch = jax.jit(jax.vmap(_mass_flux_quad, in_axes=(0, None, None)))


class ReactorModel:
    """Residual/Jacobian assembly, Newton solve, and postprocessing."""

    def __init__(self, species: SpeciesTable, cfg: ReactorConfig | None = None):
        self.cfg = cfg if cfg is not None else ReactorConfig()
        self.pack: PropertyPack = species.pack() if isinstance(species, SpeciesTable) else species
        self.mesh = Mesh1D.build(self.cfg)
        self.layout = DofLayout(self.mesh.n_nodes)
        if self.cfg.inlet_mass_fractions is not None:
            self.y_in = np.asarray(self.cfg.inlet_mass_fractions, dtype=float)
        else:
            self.y_in = thermo.stoichiometric_feed(self.pack)

        elems = np.arange(self.mesh.n_elements)
        self._edofs = self.layout.element_dofs(elems)  # (n_elem, 13)
        self._react = self.mesh.reaction_elements.astype(float)
        if not self.cfg.reaction_enabled:
            self._react = np.zeros_like(self._react)

        # COO pattern for the state Jacobian plus the Dirichlet unit rows.
        rows = np.repeat(self._edofs, 13, axis=1).ravel()
        cols = np.tile(self._edofs, (1, 13)).ravel()
        dir_rows = self.layout.dirichlet_rows
        self._jac_rows = np.concatenate([rows, dir_rows])
        self._jac_cols = np.concatenate([cols, dir_rows])
        self._row_is_dirichlet = np.isin(self._edofs, dir_rows)  # (n_elem, 13)
        self._jac_mask = (~np.repeat(self._row_is_dirichlet, 13, axis=1).ravel()).astype(float)

    # -- assembly -------------------------------------------------------------

    def _u_inlet(self, ctrl: ResidualControls) -> float:
        return inlet_velocity_from_flow(ctrl.flow_rate, self.cfg, float(ctrl.wall_temperature[0]))

    def _dirichlet_values(self, ctrl: ResidualControls) -> np.ndarray:
        t_in = float(ctrl.wall_temperature[0])
        return np.array([self._u_inlet(ctrl), t_in, self.y_in[0], self.y_in[1], self.y_in[2]])

    def _gather(self, y: np.ndarray) -> np.ndarray:
        return y[self._edofs]

    def _kernel_args(self, y, ctrl):
        tw = np.asarray(ctrl.wall_temperature)
        tw_elems = np.stack([tw[:-1], tw[1:]], axis=1)
        return (
            self._gather(y),
            tw_elems,
            ctrl.kin_array(),
            self._react,
            self.mesh.h,
            self.cfg.p_ref,
            self.cfg.permeability,
            self.cfg.h_fs,
            self.pack,
        )

    def residual(self, y: np.ndarray, ctrl: ResidualControls) -> np.ndarray:
        """Assembled residual with Dirichlet rows replaced by consistency rows."""
        local = np.asarray(_residual_batch(*self._kernel_args(y, ctrl)))[:, :13]
        r = np.zeros(self.layout.n_dof)
        # Non-finite locals can occur on rejected line-search trials; the
        # Newton loop checks for them, so don't warn here.
        with np.errstate(invalid="ignore", over="ignore"):
            np.add.at(r, self._edofs.ravel(), local.ravel())
        rows = self.layout.dirichlet_rows
        r[rows] = y[rows] - self._dirichlet_values(ctrl)
        return r

    def residual_and_jacobian(self, y: np.ndarray, ctrl: ResidualControls):
        jac_local, res_local = _resjac_batch(*self._kernel_args(y, ctrl))
        res_local = np.asarray(res_local)
        jac_local = np.asarray(jac_local)

        r = np.zeros(self.layout.n_dof)
        np.add.at(r, self._edofs.ravel(), res_local.ravel())
        rows = self.layout.dirichlet_rows
        r[rows] = y[rows] - self._dirichlet_values(ctrl)

        data = np.concatenate([jac_local.ravel() * self._jac_mask, np.ones(len(rows))])
        jac = csr_matrix((data, (self._jac_rows, self._jac_cols)), shape=(self.layout.n_dof,) * 2)
        return r, jac

    def jacobian(self, y: np.ndarray, ctrl: ResidualControls) -> csr_matrix:
        return self.residual_and_jacobian(y, ctrl)[1]

    def species_residuals_unconstrained(self, y: np.ndarray, ctrl: ResidualControls) -> np.ndarray:
        """Weak residual rows of all four species equations without Dirichlet
        replacement, shape (4, n_nodes).  The four blocks sum to zero by the
        correction-velocity construction."""
        local = np.asarray(_residual_batch(*self._kernel_args(y, ctrl)))
        out = np.zeros((4, self.layout.n_nodes))
        e = np.arange(self.mesh.n_elements)
        for k in range(4):
            lo = 7 + 2 * k
            np.add.at(out[k], e, local[:, lo])
            np.add.at(out[k], e + 1, local[:, lo + 1])
        return out

    def control_derivative_products(self, y: np.ndarray, ctrl: ResidualControls, adjoint: np.ndarray):
        """(dR/d control)^T adjoint for the three control groups.

        Returns (g_kin (3,), g_twall (n_nodes,), g_flow scalar) where g_kin is
        with respect to (E_a [J/mol], log A, n), g_twall with respect to the
        nodal wall temperatures, and g_flow with respect to the flow rate.
        """
        jtw, jkin = _ctrljac_batch(*self._kernel_args(y, ctrl))
        jtw = np.asarray(jtw)
        jkin = np.asarray(jkin)
        p_local = adjoint[self._edofs] * (~self._row_is_dirichlet)

        g_kin = np.einsum("eij,ei->j", jkin, p_local)
        g_tw = np.zeros(self.layout.n_nodes)
        contrib = np.einsum("eij,ei->ej", jtw, p_local)
        e = np.arange(self.mesh.n_elements)
        np.add.at(g_tw, e, contrib[:, 0])
        np.add.at(g_tw, e + 1, contrib[:, 1])

        # Dirichlet rows: R_T0 = T0 - Twall[0] and R_u0 = u0 - flow*c*Twall[0].
        lay = self.layout
        t_in = float(ctrl.wall_temperature[0])
        c_u = inlet_velocity_from_flow(1.0, self.cfg, 1.0)  # u_in per (flow * T_in)
        g_tw[0] += -adjoint[lay.off_t] - adjoint[lay.off_u] * ctrl.flow_rate * c_u
        g_flow = -adjoint[lay.off_u] * c_u * t_in
        return g_kin, g_tw, float(g_flow)

    # -- Newton solve -----------------------------------------------------------

    def cold_start(self, ctrl: ResidualControls) -> np.ndarray:
        """Zero velocity and pressure, inlet mass fractions, and the wall
        temperature field as the initial temperature (the solution is
        quasi-isothermal, so this generalizes the constant-temperature start
        to non-uniform wall profiles)."""
        y = np.zeros(self.layout.n_dof)
        lay = self.layout
        n = lay.n_nodes
        y[lay.off_t : lay.off_t + n] = ctrl.wall_temperature
        for k in range(3):
            y[lay.off_y(k) : lay.off_y(k) + n] = self.y_in[k]
        return y

    def _scales(self, ctrl: ResidualControls):
        """Characteristic inlet magnitudes used to scale residual blocks and dofs."""
        t_in = float(ctrl.wall_temperature[0])
        u_in = max(self._u_inlet(ctrl), 1e-12)
        rho_in = float(thermo.density(self.pack, self.y_in, t_in, self.cfg.p_ref))
        cp_in = thermo.cp_mix(self.pack, self.y_in, t_in)
        mu_in = transport.viscosity_mix(self.pack, self.y_in, t_in)
        domain = self.cfg.length - self.cfg.x_inlet
        p_char = mu_in * u_in * domain / self.cfg.permeability

        lay = self.layout
        n = lay.n_nodes
        r_scale = np.empty(lay.n_dof)
        r_scale[:n] = rho_in * u_in
        r_scale[lay.off_u : lay.off_t] = p_char
        r_scale[lay.off_t : lay.off_t + n] = rho_in * cp_in * u_in * t_in
        for k in range(3):
            r_scale[lay.off_y(k) : lay.off_y(k) + n] = rho_in * u_in
        r_scale[lay.dirichlet_rows] = [u_in, t_in, 1.0, 1.0, 1.0]

        dof_scale = np.empty(lay.n_dof)
        dof_scale[:n] = p_char
        dof_scale[lay.off_u : lay.off_t] = u_in
        dof_scale[lay.off_t : lay.off_t + n] = t_in
        dof_scale[lay.off_y(0) :] = 1.0
        return r_scale, dof_scale

    def residual_norm(self, r: np.ndarray, r_scale: np.ndarray) -> float:
        return float(np.linalg.norm(r / r_scale))

    def solve(
        self,
        ctrl: ResidualControls,
        y0: np.ndarray | None = None,
        tol: float = 1e-10,
        max_iter: int = 50,
        min_step: float = 1e-6,
    ) -> SolveResult:
        """Damped Newton solve to the scaled residual tolerance.

        Raises NonconvergenceError (carrying the partial SolveResult) on
        line-search breakdown, non-finite residuals, or the iteration cap.
        """
        y = np.array(self.cold_start(ctrl) if y0 is None else y0, dtype=float)
        r_scale, dof_scale = self._scales(ctrl)

        r = self.residual(y, ctrl)
        rn = self.residual_norm(r, r_scale)
        result = SolveResult(y=y, converged=False, iterations=0, residual_norms=[rn])
        if not np.isfinite(rn):
            raise NonconvergenceError("non-finite residual at the initial guess", result)

        while rn > tol:
            if result.iterations >= max_iter:
                raise NonconvergenceError(
                    f"Newton did not converge in {max_iter} iterations (residual {rn:.3e})", result
                )
            _, jac = self.residual_and_jacobian(y, ctrl)
            try:
                lu = splu(jac.tocsc())
            except RuntimeError as exc:
                raise NonconvergenceError(f"singular Jacobian: {exc}", result) from exc
            dy = lu.solve(-r)
            dy_norm = np.linalg.norm(dy / dof_scale)

            lam = 1.0
            while True:
                y_trial = y + lam * dy
                r_trial = self.residual(y_trial, ctrl)
                if np.all(np.isfinite(r_trial)):
                    dy_bar = lu.solve(-r_trial)
                    ok = np.linalg.norm(dy_bar / dof_scale) <= (1.0 - lam / 2.0) * dy_norm
                else:
                    ok = False
                if ok:
                    break
                lam *= 0.5
                if lam < min_step:
                    result.message = "line search breakdown"
                    raise NonconvergenceError(
                        f"Newton line search breakdown at iteration {result.iterations}", result
                    )

            y = y_trial
            r = r_trial
            rn = self.residual_norm(r, r_scale)
            result.iterations += 1
            result.residual_norms.append(rn)
            result.step_sizes.append(lam)
            result.y = y

        result.converged = True
        result.message = "converged"
        return result

    # -- postprocessing ---------------------------------------------------------

    def conversion(self, y: np.ndarray) -> float:
        """Total CO2 conversion 1 - Y_CO2(outlet)/Y_CO2(inlet)."""
        lay = self.layout
        return 1.0 - float(y[lay.off_y(0) + lay.n_nodes - 1]) / self.y_in[0]

    def running_conversion(self, y: np.ndarray) -> np.ndarray:
        lay = self.layout
        return 1.0 - y[lay.off_y(0) : lay.off_y(0) + lay.n_nodes] / self.y_in[0]

    def _node_state(self, y: np.ndarray, i: int):
        lay = self.layout
        T = float(y[lay.off_t + i])
        y3 = np.array([float(y[lay.off_y(k) + i]) for k in range(3)])
        u = float(y[lay.off_u + 2 * i])
        return T, y3, u

    def outlet_mass_flow(self, y: np.ndarray) -> float:
        """Outgoing mass flow per channel, kg/s."""
        T, y3, u = self._node_state(y, self.layout.n_nodes - 1)
        rho = float(thermo.density(self.pack, y3, T, self.cfg.p_ref))
        return rho * u * self.cfg.cross_section

    def mass_flux_spread(self, y: np.ndarray) -> tuple[float, float]:
        """Relative spread of rho*u along the channel.

        Returns (element-mean spread, nodal spread).  The element-mean values
        are the quantity the weak continuity equation conserves; the nodal
        samples additionally carry interpolation wiggle.
        """
        flux_q = np.asarray(_mass_flux_batch(self._gather(y), self.cfg.p_ref, self.pack))
        elem_mean = flux_q @ _QW
        f = self.layout.split(y)
        inv_m = 1.0 / self.pack.molar_mass
        s = f.y3[0] * inv_m[0] + f.y3[1] * inv_m[1] + f.y3[2] * inv_m[2] + f.y_h2o * inv_m[3]
        rho_nodal = self.cfg.p_ref / (R_GAS * f.T * s)
        nodal = rho_nodal * f.u_nodal

        def spread(v):
            return float((v.max() - v.min()) / abs(v.mean()))

        return spread(elem_mean), spread(nodal)

    def atom_flow_balance(self, y: np.ndarray, ctrl: ResidualControls) -> float:
        """Maximum relative mismatch of the (C, O, H) atomic flow rates
        between inlet and outlet.

        Uses the fluxes the discretization actually conserves: the common
        element-mean mass flux times the nodal atomic content, plus the
        variationally recovered diffusive flux at the inlet (the assembled,
        unconstrained inlet residual rows).  The outlet needs no diffusive
        term since the do-nothing condition sets it to zero consistently.
        """
        lay = self.layout
        n = lay.n_nodes
        flux_q = np.asarray(_mass_flux_batch(self._gather(y), self.cfg.p_ref, self.pack))
        g_mean = float((flux_q @ _QW).mean())

        def atom_content(i):
            _, y3, _ = self._node_state(y, i)
            y4 = np.append(y3, 1.0 - y3.sum())
            return ATOM_MATRIX @ (y4 / self.pack.molar_mass)

        inlet_rows = self.species_residuals_unconstrained(y, ctrl)[:, 0]  # (4,)
        diffusive_in = ATOM_MATRIX @ (inlet_rows / self.pack.molar_mass)
        f_in = g_mean * atom_content(0) + diffusive_in
        f_out = g_mean * atom_content(n - 1)
        return float(np.max(np.abs(f_out - f_in) / np.abs(f_in)))

    def profile_columns(self, y: np.ndarray) -> dict:
        """Nodal profiles for CSV output."""
        f = self.layout.split(y)
        return {
            "x": self.mesh.nodes,
            "p": f.p,
            "u": f.u_nodal,
            "T": f.T,
            "Y_CO2": f.y_co2,
            "Y_H2": f.y_h2,
            "Y_CH4": f.y_ch4,
            "Y_H2O": f.y_h2o,
            "conversion": self.running_conversion(y),
        }
