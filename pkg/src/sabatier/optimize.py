"""Projected L-BFGS with Armijo line search, and a Moreau-Yosida homotopy.

The optimizer works on an abstract control space: box constraints are applied
componentwise, and all scalar products go through a user-supplied inner
product (Euclidean for finite-dimensional controls, mass-matrix weighted for
distributed ones).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ARMIJO_C = 1e-4
STEP_SHRINK = 0.5
MAX_HALVINGS = 30
CURVATURE_EPS = 1e-14
STATIONARITY_FLOOR = 1e-30


def euclidean_inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))


def make_block_inner(n_head: int, tail_inner):
    """Product-space inner: Euclidean on the first n_head entries, tail_inner
    on the rest."""

    def inner(a, b):
        head = float(np.dot(a[:n_head], b[:n_head]))
        return head + tail_inner(a[n_head:], b[n_head:])

    return inner


@dataclass(frozen=True)
class BoxConstraint:
    """Componentwise bounds; use +-inf for unconstrained entries."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if np.any(lower > upper):
            raise ValueError("box constraint needs lower <= upper componentwise")

    @staticmethod
    def unbounded(n: int) -> "BoxConstraint":
        return BoxConstraint(np.full(n, -np.inf), np.full(n, np.inf))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def stationarity_measure(x: np.ndarray, g: np.ndarray, box: BoxConstraint, inner=None) -> float:
    """Norm of the projected gradient step x - P(x - g); zero iff first-order
    stationary."""
    inner = inner or euclidean_inner
    d = x - box.project(x - g)
    return float(np.sqrt(max(inner(d, d), 0.0)))


@dataclass
class LbfgsResult:
    x: np.ndarray
    cost: float
    status: str  # converged | stationary_start | max_iter | line_search_failure
    iterations: int
    cost_history: list = field(default_factory=list)
    stationarity_history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status in ("converged", "stationary_start")


def _two_loop(g, pairs, inner):
    """Standard two-loop recursion; returns H g for the implicit inverse
    Hessian built from the stored (s, y) pairs."""
    q = np.array(g)
    alphas = []
    for s, yv, rho in reversed(pairs):
        a = rho * inner(s, q)
        q -= a * yv
        alphas.append(a)
    s_last, y_last, _ = pairs[-1]
    q *= inner(s_last, y_last) / inner(y_last, y_last)
    for (s, yv, rho), a in zip(pairs, reversed(alphas)):
        b = rho * inner(yv, q)
        q += (a - b) * s
    return q


def projected_lbfgs(
    value_and_grad,
    x0: np.ndarray,
    box: BoxConstraint,
    inner=None,
    value=None,
    memory: int = 5,
    tol_rel: float = 1e-6,
    max_iter: int = 200,
    callback=None,
) -> LbfgsResult:
    """Box-constrained quasi-Newton minimization.

    value_and_grad(x) -> (J, g) evaluates the cost and its gradient; value(x)
    (optional, defaults to value_and_grad) is the cheaper cost-only path used
    inside the Armijo line search with initial step one.  Iterates stay in the
    box via componentwise projection; the run terminates when the stationarity
    measure has dropped by tol_rel relative to the start, the iteration cap is
    hit, or the line search fails after MAX_HALVINGS halvings.  Curvature
    pairs failing the positivity test are discarded together with the whole
    history (restart with a gradient step).
    """
    inner = inner or euclidean_inner
    value = value or (lambda x: value_and_grad(x)[0])

    x = box.project(np.asarray(x0, dtype=float))
    cost, g = value_and_grad(x)
    stat0 = stationarity_measure(x, g, box, inner)
    result = LbfgsResult(x=x, cost=cost, status="", iterations=0, cost_history=[cost], stationarity_history=[stat0])
    if stat0 <= STATIONARITY_FLOOR:
        result.status = "stationary_start"
        return result

    pairs: list = []
    for _ in range(max_iter):
        accepted = None
        for attempt in range(2):
            if pairs:
                d = -_two_loop(g, pairs, inner)
                assert inner(g, d) < 0.0, "L-BFGS direction is not a descent direction"
            else:
                d = -g

            lam = 1.0
            for _halving in range(MAX_HALVINGS + 1):
                x_new = box.project(x + lam * d)
                step = x_new - x
                slope = inner(g, step)
                if slope < 0.0:
                    j_new = value(x_new)
                    if np.isfinite(j_new) and j_new <= cost + ARMIJO_C * slope:
                        accepted = x_new
                        break
                lam *= STEP_SHRINK
            if accepted is not None or not pairs:
                break
            # The projected quasi-Newton path failed; restart with a plain
            # projected gradient step.
            pairs.clear()
        if accepted is None:
            result.status = "line_search_failure"
            return result

        cost_new, g_new = value_and_grad(accepted)
        s = accepted - x
        yv = g_new - g
        sy = inner(s, yv)
        if sy <= CURVATURE_EPS * np.sqrt(inner(s, s) * inner(yv, yv)):
            pairs.clear()
        else:
            pairs.append((s, yv, 1.0 / sy))
            if len(pairs) > memory:
                pairs.pop(0)

        x, cost, g = accepted, cost_new, g_new
        stat = stationarity_measure(x, g, box, inner)
        result.iterations += 1
        result.x = x
        result.cost = cost
        result.cost_history.append(cost)
        result.stationarity_history.append(stat)
        if callback is not None:
            callback(result)
        if stat <= tol_rel * stat0 or stat <= STATIONARITY_FLOOR:
            result.status = "converged"
            return result

    result.status = "max_iter"
    return result


def moreau_yosida_penalty(deficit: float, gamma: float, shift: float = 0.0) -> float:
    """Quadratic penalty (1/(2 gamma)) max(0, shift + gamma * deficit)^2."""
    t = max(0.0, shift + gamma * deficit)
    return t * t / (2.0 * gamma)


@dataclass
class HomotopyResult:
    x: np.ndarray
    stage_results: list
    gammas: list

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.stage_results)

    @property
    def converged(self) -> bool:
        return all(r.status in ("converged", "stationary_start", "max_iter") for r in self.stage_results)


def moreau_yosida_homotopy(
    problem_for_gamma,
    gammas,
    x0: np.ndarray,
    box: BoxConstraint,
    inner=None,
    inner_tol: float = 1e-2,
    max_iter: int = 200,
    memory: int = 5,
) -> HomotopyResult:
    """Solve a sequence of penalized problems with increasing gamma, warm
    starting each run from the previous solution."""
    x = np.asarray(x0, dtype=float)
    stages = []
    for gamma in gammas:
        problem = problem_for_gamma(gamma)
        res = projected_lbfgs(
            problem.value_and_grad,
            x,
            box,
            inner=inner,
            value=getattr(problem, "value", None),
            memory=memory,
            tol_rel=inner_tol,
            max_iter=max_iter,
        )
        if res.status == "line_search_failure" and res.iterations == 0:
            # No progress possible at this stage; keep the warm start and move on.
            res.x = x
        x = res.x
        stages.append(res)
    return HomotopyResult(x=x, stage_results=stages, gammas=list(gammas))


@dataclass
class OptimizationReport:
    """Serializable summary of one optimization run."""

    problem: str
    status: str
    iterations: int
    cost_history: list
    stationarity_history: list
    state_solves: int
    adjoint_solves: int
    final_controls: dict
    constraint_violation: float | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self, indent: int = 2) -> str:
        def default(o):
            if isinstance(o, np.ndarray):
                return o.tolist()
            if isinstance(o, (np.floating, np.integer)):
                return o.item()
            raise TypeError(f"cannot serialize {type(o)}")

        return json.dumps(self.__dict__, indent=indent, default=default)
