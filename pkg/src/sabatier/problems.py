"""Concrete optimization problems on the 1D reactor model.

Three problem classes bind the reactor model to the projected L-BFGS
optimizer through discrete-adjoint gradients:

* identification: fit (E_a, log A, n) to measured outlet conversions over a
  grid of wall temperatures and flow rates;
* tracking: drive the outlet CO2 conversion toward one at fixed flow rate,
  controlling the wall temperature profile (four parameterizations);
* flow maximization: maximize the outlet mass flow over the flow rate and the
  wall temperature, with the conversion kept above a target by a
  Moreau-Yosida penalty homotopy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sabatier.adjoint import RieszMap, solve_adjoint
from sabatier.constants import R_GAS
from sabatier.kinetics import REFERENCE_KINETICS, KineticParams
from sabatier.optimize import (
    BoxConstraint,
    HomotopyResult,
    LbfgsResult,
    OptimizationReport,
    euclidean_inner,
    make_block_inner,
    moreau_yosida_homotopy,
    projected_lbfgs,
)
from sabatier.reactor import (
    NonconvergenceError,
    ReactorModel,
    ResidualControls,
    molar_inflow,
    product_yield,
)

# Box constraints for the wall temperature: 180 C (boiling point of water at
# 10 bar) to 600 C (validity limit of the single-reaction model).
T_WALL_MIN = 453.15
T_WALL_MAX = 873.15

TEMPERATURE_MODEL_KINDS = ("constant", "two_stage", "three_stage", "distributed")

# Operating grid of the benchmark experiments: 7 wall temperatures x 3 flows.
EXPERIMENT_TEMPERATURES_C = tuple(range(250, 401, 25))
EXPERIMENT_FLOWS = (50.0, 100.0, 150.0)

EXPERIMENT_HEADER = ("id", "T_wall_C", "flow_mln_min", "conversion")


class ExperimentDataError(ValueError):
    """Malformed or inconsistent experiment file."""


@dataclass(frozen=True)
class ExperimentRecord:
    """One measured operating point."""

    id: int
    t_wall_c: float
    flow: float  # mL/min at normal conditions
    conversion: float


def load_experiments(path) -> list[ExperimentRecord]:
    """Read the experiment CSV, validating header, ranges, and uniqueness."""
    path = Path(path)
    records = []
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EXPERIMENT_HEADER:
            raise ExperimentDataError(f"{path}: bad header {header}, expected {','.join(EXPERIMENT_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rec = ExperimentRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
            except (ValueError, IndexError) as exc:
                raise ExperimentDataError(f"{path}:{lineno}: unparseable row {row}") from exc
            if not 0.0 <= rec.conversion <= 1.0:
                raise ExperimentDataError(f"{path}:{lineno}: conversion {rec.conversion} outside [0, 1]")
            key = (rec.t_wall_c, rec.flow)
            if key in seen:
                raise ExperimentDataError(f"{path}:{lineno}: duplicate operating point {key}")
            seen.add(key)
            records.append(rec)
    if not records:
        raise ExperimentDataError(f"{path}: no experiment rows")
    return records


def save_experiments(path, records) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EXPERIMENT_HEADER)
        for rec in records:
            writer.writerow([rec.id, f"{rec.t_wall_c:.6g}", f"{rec.flow:.6g}", f"{rec.conversion:.11e}"])


def synthetic_experiments(
    model: ReactorModel, params: KineticParams, noise: float = 0.0, seed: int = 0
) -> list[ExperimentRecord]:
    """Simulated conversions on the benchmark grid, optionally perturbed by
    uniform noise of the given absolute amplitude."""
    rng = np.random.default_rng(seed)
    n = model.layout.n_nodes
    records = []
    warm = None
    idx = 1
    for t_c in EXPERIMENT_TEMPERATURES_C:
        for flow in EXPERIMENT_FLOWS:
            ctrl = ResidualControls(params, np.full(n, t_c + 273.15), flow)
            try:
                res = model.solve(ctrl, y0=warm)
            except NonconvergenceError:
                res = model.solve(ctrl)
            warm = res.y
            chi = model.conversion(res.y)
            if noise > 0.0:
                chi = float(np.clip(chi + rng.uniform(-noise, noise), 0.0, 1.0))
            records.append(ExperimentRecord(idx, float(t_c), float(flow), chi))
            idx += 1
    return records


# --- wall-temperature parameterizations --------------------------------------


@dataclass(frozen=True)
class TemperatureModel:
    """Map between control parameters and the nodal wall-temperature field.

    Staged variants split the catalytic section evenly and extend the first
    stage over the inlet section (keeping the inlet Dirichlet temperature
    consistent); the distributed variant controls every mesh node.
    """

    kind: str
    node_stage: np.ndarray  # (n_nodes,) stage index per node
    n_params: int
    riesz: RieszMap | None  # set for the distributed variant

    @staticmethod
    def create(kind: str, model: ReactorModel) -> "TemperatureModel":
        nodes = model.mesh.nodes
        n = len(nodes)
        if kind == "distributed":
            return TemperatureModel(kind, np.arange(n), n, RieszMap(nodes))
        n_stages = {"constant": 1, "two_stage": 2, "three_stage": 3}.get(kind)
        if n_stages is None:
            raise ValueError(f"unknown temperature model {kind!r}; choose from {TEMPERATURE_MODEL_KINDS}")
        length = model.cfg.length
        stage = np.clip(np.floor(nodes / (length / n_stages)), 0, n_stages - 1).astype(int)
        stage[nodes <= 0.0] = 0
        return TemperatureModel(kind, stage, n_stages, None)

    def embed(self, theta: np.ndarray) -> np.ndarray:
        """Nodal wall-temperature field from the control parameters."""
        theta = np.asarray(theta, dtype=float)
        return theta[self.node_stage]

    def pullback(self, raw_nodal: np.ndarray) -> np.ndarray:
        """Control-space gradient from the raw nodal derivative.

        For the finite-dimensional staged variants this is the transpose of
        the embedding; for the distributed variant the L2 Riesz representative
        (mass-matrix solve).
        """
        if self.kind == "distributed":
            return self.riesz.apply(raw_nodal)
        return np.bincount(self.node_stage, weights=raw_nodal, minlength=self.n_params)

    @property
    def inner(self):
        return self.riesz.inner if self.kind == "distributed" else euclidean_inner

    def box(self) -> BoxConstraint:
        return BoxConstraint(np.full(self.n_params, T_WALL_MIN), np.full(self.n_params, T_WALL_MAX))

    def initial(self, value: float) -> np.ndarray:
        return np.full(self.n_params, float(value))


# --- shared forward-solve plumbing --------------------------------------------


class _StateCache:
    """Warm-started forward solves with a solve counter; falls back to the
    cold start when the warm start fails."""

    def __init__(self, model: ReactorModel, newton_tol: float = 1e-10):
        self.model = model
        self.newton_tol = newton_tol
        self.y_warm: np.ndarray | None = None
        self.state_solves = 0

    def solve(self, ctrl: ResidualControls):
        if self.y_warm is not None:
            try:
                self.state_solves += 1
                res = self.model.solve(ctrl, y0=self.y_warm, tol=self.newton_tol)
                self.y_warm = res.y
                return res
            except NonconvergenceError:
                pass
        self.state_solves += 1
        res = self.model.solve(ctrl, tol=self.newton_tol)
        self.y_warm = res.y
        return res


def _conversion_state_gradient(model: ReactorModel, dj_dchi: float) -> np.ndarray:
    """dJ/dy for a cost that depends on the state only through the outlet
    conversion."""
    lay = model.layout
    g = np.zeros(lay.n_dof)
    g[lay.off_y(0) + lay.n_nodes - 1] = dj_dchi * (-1.0 / model.y_in[0])
    return g


def _outflow_state_gradient(model: ReactorModel, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and dJ/dy of J = -rho(outlet) * u(outlet) (per unit area)."""
    lay = model.layout
    n = lay.n_nodes
    iu = lay.off_u + 2 * (n - 1)
    it = lay.off_t + n - 1
    iy = [lay.off_y(k) + n - 1 for k in range(3)]
    u = y[iu]
    T = y[it]
    y3 = np.array([y[j] for j in iy])
    inv_m = 1.0 / model.pack.molar_mass
    s = y3 @ inv_m[:3] + (1.0 - y3.sum()) * inv_m[3]
    rho = model.cfg.p_ref / (R_GAS * T * s)

    g = np.zeros(lay.n_dof)
    g[iu] = -rho
    g[it] = rho * u / T
    for k, j in enumerate(iy):
        g[j] = rho * u * (inv_m[k] - inv_m[3]) / s
    return float(-rho * u), g


# --- parameter identification ---------------------------------------------------


class IdentificationProblem:
    """Least-squares conversion fit over the experiment set.

    The control vector is (E_a [kJ/mol], log A, n); the kJ scaling keeps the
    three components within a few orders of magnitude of each other.
    """

    def __init__(self, model: ReactorModel, records, newton_tol: float = 1e-10):
        self.model = model
        self.records = list(records)
        self.caches = [_StateCache(model, newton_tol) for _ in self.records]
        self.box = BoxConstraint(np.array([-np.inf, -np.inf, 0.0]), np.full(3, np.inf))
        self.inner = euclidean_inner
        self.adjoint_solves = 0

    @property
    def state_solves(self) -> int:
        return sum(c.state_solves for c in self.caches)

    def params_from_x(self, x) -> KineticParams:
        return KineticParams(float(x[0]) * 1e3, float(x[1]), max(float(x[2]), 0.0))

    def _ctrl(self, x, record: ExperimentRecord) -> ResidualControls:
        twall = np.full(self.model.layout.n_nodes, record.t_wall_c + 273.15)
        return ResidualControls(self.params_from_x(x), twall, record.flow)

    def simulated_conversions(self, x) -> np.ndarray:
        out = np.empty(len(self.records))
        for i, (rec, cache) in enumerate(zip(self.records, self.caches)):
            out[i] = self.model.conversion(cache.solve(self._ctrl(x, rec)).y)
        return out

    def value(self, x) -> float:
        try:
            chi = self.simulated_conversions(x)
        except NonconvergenceError:
            return np.inf
        return float(0.5 * np.sum((chi - np.array([r.conversion for r in self.records])) ** 2))

    def value_and_grad(self, x):
        total = 0.0
        grad = np.zeros(3)
        for rec, cache in zip(self.records, self.caches):
            ctrl = self._ctrl(x, rec)
            res = cache.solve(ctrl)
            chi = self.model.conversion(res.y)
            misfit = chi - rec.conversion
            total += 0.5 * misfit**2
            dj_dy = _conversion_state_gradient(self.model, misfit)
            jac = self.model.jacobian(res.y, ctrl)
            p = solve_adjoint(jac, dj_dy)
            self.adjoint_solves += 1
            g_kin, _, _ = self.model.control_derivative_products(res.y, ctrl, p)
            grad += g_kin * np.array([1e3, 1.0, 1.0])  # E_a in kJ/mol
        return total, grad


def run_identification(
    model: ReactorModel,
    records,
    x0=(65.0, 12.0, 0.222),
    tol_rel: float = 1e-6,
    max_iter: int = 200,
    newton_tol: float = 1e-10,
):
    """Fit the kinetic parameters; returns (params, report)."""
    problem = IdentificationProblem(model, records, newton_tol)
    res = projected_lbfgs(
        problem.value_and_grad,
        np.asarray(x0, dtype=float),
        problem.box,
        inner=problem.inner,
        value=problem.value,
        tol_rel=tol_rel,
        max_iter=max_iter,
    )
    params = problem.params_from_x(res.x)
    chi_sim = problem.simulated_conversions(res.x)
    chi_exp = np.array([r.conversion for r in problem.records])
    report = OptimizationReport(
        problem="identification",
        status=res.status,
        iterations=res.iterations,
        cost_history=res.cost_history,
        stationarity_history=res.stationarity_history,
        state_solves=problem.state_solves,
        adjoint_solves=problem.adjoint_solves,
        final_controls={
            "activation_energy_j_per_mol": params.activation_energy,
            "log_pre_exponential": params.log_pre_exponential,
            "rate_exponent": params.rate_exponent,
        },
        extras={
            "per_experiment_error": (chi_sim - chi_exp).tolist(),
            "mean_abs_error": float(np.mean(np.abs(chi_sim - chi_exp))),
            "max_abs_error": float(np.max(np.abs(chi_sim - chi_exp))),
        },
    )
    return params, report


# --- conversion tracking ---------------------------------------------------------


class TrackingProblem:
    """Drive the outlet conversion toward one at a fixed flow rate."""

    def __init__(
        self,
        model: ReactorModel,
        flow: float,
        temp_model: TemperatureModel,
        params: KineticParams = REFERENCE_KINETICS,
        newton_tol: float = 1e-10,
    ):
        self.model = model
        self.flow = float(flow)
        self.temp_model = temp_model
        self.params = params
        self.cache = _StateCache(model, newton_tol)
        self.box = temp_model.box()
        self.inner = temp_model.inner
        self.adjoint_solves = 0

    @property
    def state_solves(self) -> int:
        return self.cache.state_solves

    def _ctrl(self, theta) -> ResidualControls:
        return ResidualControls(self.params, self.temp_model.embed(theta), self.flow)

    def conversion(self, theta) -> float:
        return self.model.conversion(self.cache.solve(self._ctrl(theta)).y)

    def value(self, theta) -> float:
        try:
            chi = self.conversion(theta)
        except NonconvergenceError:
            return np.inf
        return 0.5 * (chi - 1.0) ** 2

    def value_and_grad(self, theta):
        ctrl = self._ctrl(theta)
        res = self.cache.solve(ctrl)
        chi = self.model.conversion(res.y)
        dj_dy = _conversion_state_gradient(self.model, chi - 1.0)
        p = solve_adjoint(self.model.jacobian(res.y, ctrl), dj_dy)
        self.adjoint_solves += 1
        _, g_tw, _ = self.model.control_derivative_products(res.y, ctrl, p)
        return 0.5 * (chi - 1.0) ** 2, self.temp_model.pullback(g_tw)


def run_tracking(
    model: ReactorModel,
    flow: float,
    kind: str,
    params: KineticParams = REFERENCE_KINETICS,
    theta0: np.ndarray | None = None,
    t_init: float = 673.15,
    tol_rel: float = 1e-4,
    max_iter: int = 200,
    newton_tol: float = 1e-10,
):
    """Optimize one wall-temperature model at one flow rate.

    Returns (theta, conversion, report).
    """
    temp_model = TemperatureModel.create(kind, model)
    problem = TrackingProblem(model, flow, temp_model, params, newton_tol)
    x0 = temp_model.initial(t_init) if theta0 is None else np.asarray(theta0, dtype=float)
    res = projected_lbfgs(
        problem.value_and_grad,
        x0,
        problem.box,
        inner=problem.inner,
        value=problem.value,
        tol_rel=tol_rel,
        max_iter=max_iter,
    )
    chi = problem.conversion(res.x)
    report = OptimizationReport(
        problem="tracking",
        status=res.status,
        iterations=res.iterations,
        cost_history=res.cost_history,
        stationarity_history=res.stationarity_history,
        state_solves=problem.state_solves,
        adjoint_solves=problem.adjoint_solves,
        final_controls={"temperature_model": kind, "flow_mln_min": flow, "theta": res.x},
        extras={
            "conversion": chi,
            "product_yield_mol_s": product_yield(flow, chi),
        },
    )
    return res.x, chi, report


def run_tracking_suite(
    model: ReactorModel,
    flows=EXPERIMENT_FLOWS,
    kinds=TEMPERATURE_MODEL_KINDS,
    params: KineticParams = REFERENCE_KINETICS,
    **kwargs,
) -> dict:
    """Tracking optimization for every (flow, model) pair.

    Staged models are warm started from the previous (coarser) optimum, which
    makes the monotone conversion improvement across model complexity robust.
    The distributed model starts from the default guess (the warm start is
    already near-stationary, which starves the relative stopping criterion);
    if it ever ends below the three-stage optimum it is re-run warm started.
    """
    results = {}
    for flow in flows:
        prev_theta = None
        prev_kind = None
        for kind in kinds:
            theta0 = None
            if prev_theta is not None and kind != "distributed":
                prev_model = TemperatureModel.create(prev_kind, model)
                nodal = prev_model.embed(prev_theta)
                this_model = TemperatureModel.create(kind, model)
                # stage value = mean of the previous profile over the stage
                theta0 = np.array(
                    [nodal[this_model.node_stage == s].mean() for s in range(this_model.n_params)]
                )
            theta, chi, report = run_tracking(model, flow, kind, params, theta0=theta0, **kwargs)
            if kind == "distributed" and prev_theta is not None:
                chi_prev = results[(flow, prev_kind)][1]
                if chi < chi_prev:
                    warm = TemperatureModel.create(prev_kind, model).embed(prev_theta)
                    theta, chi, report = run_tracking(model, flow, kind, params, theta0=warm, **kwargs)
            results[(flow, kind)] = (theta, chi, report)
            prev_theta, prev_kind = theta, kind
    return results


# --- flow maximization with a conversion constraint -------------------------------


class FlowProblem:
    """Maximize the outlet mass flow subject to conversion >= chi_des.

    Control vector: (flow rate [mL/min at normal conditions], temperature
    parameters).  The state constraint enters through a Moreau-Yosida penalty
    with parameter gamma (shift fixed at zero).
    """

    def __init__(
        self,
        model: ReactorModel,
        chi_des: float,
        temp_model: TemperatureModel,
        flow_bounds: tuple[float, float],
        params: KineticParams = REFERENCE_KINETICS,
        newton_tol: float = 1e-10,
    ):
        self.model = model
        self.chi_des = float(chi_des)
        self.temp_model = temp_model
        self.params = params
        self.cache = _StateCache(model, newton_tol)
        self.adjoint_solves = 0
        t_box = temp_model.box()
        self.box = BoxConstraint(
            np.concatenate([[flow_bounds[0]], t_box.lower]),
            np.concatenate([[flow_bounds[1]], t_box.upper]),
        )
        self.inner = make_block_inner(1, temp_model.inner)

    @property
    def state_solves(self) -> int:
        return self.cache.state_solves

    def _ctrl(self, x) -> ResidualControls:
        return ResidualControls(self.params, self.temp_model.embed(x[1:]), float(x[0]))

    def conversion(self, x) -> float:
        return self.model.conversion(self.cache.solve(self._ctrl(x)).y)

    def _cost_terms(self, y, gamma):
        flow_cost, flow_grad_y = _outflow_state_gradient(self.model, y)
        chi = self.model.conversion(y)
        t = max(0.0, gamma * (self.chi_des - chi))
        penalty = t * t / (2.0 * gamma)
        # d penalty / d chi = -t
        pen_grad_y = _conversion_state_gradient(self.model, -t)
        return flow_cost + penalty, flow_grad_y + pen_grad_y

    def value(self, x, gamma) -> float:
        try:
            y = self.cache.solve(self._ctrl(x)).y
        except NonconvergenceError:
            return np.inf
        return self._cost_terms(y, gamma)[0]

    def value_and_grad(self, x, gamma):
        ctrl = self._ctrl(x)
        res = self.cache.solve(ctrl)
        cost, dj_dy = self._cost_terms(res.y, gamma)
        p = solve_adjoint(self.model.jacobian(res.y, ctrl), dj_dy)
        self.adjoint_solves += 1
        _, g_tw, g_flow = self.model.control_derivative_products(res.y, ctrl, p)
        grad = np.concatenate([[g_flow], self.temp_model.pullback(g_tw)])
        return cost, grad

    def for_gamma(self, gamma: float):
        problem = self

        class _Stage:
            value = staticmethod(lambda x: problem.value(x, gamma))
            value_and_grad = staticmethod(lambda x: problem.value_and_grad(x, gamma))

        return _Stage()


def default_gamma_schedule(kind: str) -> list[float]:
    """Penalty homotopy schedules: 10^l for the staged models, the slower
    7^l ladder for the harder distributed model."""
    if kind == "distributed":
        return [7.0**l for l in range(8)]
    return [10.0**l for l in range(7)]


def run_flow_maximization(
    model: ReactorModel,
    chi_des: float,
    kind: str,
    params: KineticParams = REFERENCE_KINETICS,
    gammas=None,
    flow_lower: float = 50.0,
    flow_upper_start: float = 150.0,
    flow_upper_step: float = 50.0,
    flow_upper_cap: float = 500.0,
    t_init: float = 673.15,
    inner_tol: float = 1e-2,
    max_iter: int = 200,
    newton_tol: float = 1e-10,
    bound_tol: float = 1e-9,
):
    """Moreau-Yosida homotopy with the adaptive upper flow bound.

    The upper velocity bound starts at 150 mL/min; whenever the optimized
    flow rate lands on it, the bound is raised by 50 mL/min and the homotopy
    is rerun (warm started) until the optimum is interior.
    Returns (x, report); x = (flow rate, temperature parameters).
    """
    if gammas is None:
        gammas = default_gamma_schedule(kind)
    temp_model = TemperatureModel.create(kind, model)

    flow_upper = flow_upper_start
    x = np.concatenate([[flow_upper], temp_model.initial(t_init)])
    total_stages: list[LbfgsResult] = []
    state_solves = adjoint_solves = 0
    while True:
        problem = FlowProblem(model, chi_des, temp_model, (flow_lower, flow_upper), params, newton_tol)
        hom: HomotopyResult = moreau_yosida_homotopy(
            problem.for_gamma, gammas, x, problem.box, inner=problem.inner,
            inner_tol=inner_tol, max_iter=max_iter,
        )
        x = hom.x
        total_stages.extend(hom.stage_results)
        state_solves += problem.state_solves
        adjoint_solves += problem.adjoint_solves
        if flow_upper - x[0] > bound_tol or flow_upper >= flow_upper_cap:
            break
        flow_upper += flow_upper_step

    final_problem = FlowProblem(model, chi_des, temp_model, (flow_lower, flow_upper), params, newton_tol)
    chi = final_problem.conversion(x)
    state_solves += final_problem.state_solves
    flow = float(x[0])
    report = OptimizationReport(
        problem="flow",
        status=total_stages[-1].status,
        iterations=sum(s.iterations for s in total_stages),
        cost_history=[s.cost_history[-1] for s in total_stages],
        stationarity_history=[s.stationarity_history[-1] for s in total_stages],
        state_solves=state_solves,
        adjoint_solves=adjoint_solves,
        final_controls={
            "temperature_model": kind,
            "flow_mln_min": flow,
            "theta": x[1:],
        },
        constraint_violation=abs(chi - chi_des),
        extras={
            "chi_des": chi_des,
            "conversion": chi,
            "product_yield_mol_s": product_yield(flow, chi),
            "flow_upper_bound": flow_upper,
            "gamma_schedule": list(gammas),
            "molar_inflow_mol_s": molar_inflow(flow),
        },
    )
    return x, report
