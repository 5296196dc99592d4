"""Error-budgeted subspace search with COBYLA."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..errors import ConfigError, NumericalError
from ..results import EnergyEstimate
from .estimator import RatioObjective
from .subspace import SampleTensors

log = logging.getLogger(__name__)

RHOBEG = 0.5
RHOEND = 1e-6
MAXITER = 5000
FEASIBILITY_RTOL = 1e-9

# error budget as a fraction of |H_unmit| at tabulated system sizes
EPS_RATIO_TABLE = {16: 0.05, 32: 0.075, 48: 0.1, 64: 0.125, 80: 0.15}


def eps_ratio_for_size(n_qubits: int) -> float:
    sizes = sorted(EPS_RATIO_TABLE)
    return float(np.interp(n_qubits, sizes, [EPS_RATIO_TABLE[s] for s in sizes]))


@dataclass
class SolveResult:
    c_opt: np.ndarray
    energy: EnergyEstimate
    iterations: int
    eps_max: float
    hit_iteration_cap: bool = False
    diagnostic: str = ""
    history: list[tuple[float, float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "c_opt": [float(v) for v in self.c_opt],
            "energy": self.energy.to_dict(),
            "iterations": self.iterations,
            "eps_max": self.eps_max,
            "hit_iteration_cap": self.hit_iteration_cap,
            "diagnostic": self.diagnostic,
        }


class _Tracker:
    """Evaluates the objective and remembers the best feasible point seen."""

    def __init__(self, objective: RatioObjective, eps_max: float, penalty: float, keep_history: bool):
        self.objective = objective
        self.eps_max = eps_max
        self.penalty = penalty
        self.keep_history = keep_history
        self.history: list[tuple[float, float]] = []
        self.best: tuple[np.ndarray, EnergyEstimate] | None = None
        self._last_c = None
        self._last = None
        self.calls = 0

    def evaluate(self, c) -> EnergyEstimate | None:
        if self._last_c is not None and np.array_equal(c, self._last_c):
            return self._last
        self.calls += 1
        try:
            est = self.objective(c)
        except NumericalError:
            est = None
        self._last_c, self._last = np.array(c, dtype=float), est
        if est is not None:
            if self.keep_history:
                self.history.append((est.value, est.std_error))
            if self.is_feasible(est) and (self.best is None or est.value < self.best[1].value):
                self.best = (np.array(c, dtype=float), est)
        return est

    def is_feasible(self, est: EnergyEstimate) -> bool:
        return est.std_error <= self.eps_max * (1.0 + FEASIBILITY_RTOL)

    def value(self, c) -> float:
        est = self.evaluate(c)
        return self.penalty if est is None else est.value

    def slack(self, c) -> float:
        est = self.evaluate(c)
        return -self.eps_max if est is None else self.eps_max - est.std_error


def _cobyla(fun, x0, constraints=(), rhobeg=RHOBEG, rhoend=RHOEND, maxiter=MAXITER):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return minimize(fun, x0, method="COBYLA", constraints=constraints,
                        options={"rhobeg": rhobeg, "tol": rhoend, "maxiter": maxiter, "catol": 0.0})


def constrained_minimize(t: SampleTensors | RatioObjective, eps_max: float, *,
                         warm_starts=(), rhobeg: float = RHOBEG, rhoend: float = RHOEND,
                         maxiter: int = MAXITER, keep_history: bool = False) -> SolveResult:
    """Lowest ratio estimate subject to ``std_error(c) <= eps_max``.

    COBYLA starts from the lowest-energy feasible point among ``e_1`` and the
    ``warm_starts``.  The returned point is the best feasible point evaluated
    during the run, so it is never worse than any feasible start.
    """
    if not eps_max > 0:
        raise ConfigError(f"eps_max must be positive, got {eps_max}")
    objective = t if isinstance(t, RatioObjective) else RatioObjective(t)
    e1 = np.zeros(objective.dim)
    e1[0] = 1.0
    base = objective(e1)
    penalty = abs(base.value) * 1e3 + 1e3
    tracker = _Tracker(objective, eps_max, penalty, keep_history)
    tracker.evaluate(e1)
    if tracker.best is None:
        return SolveResult(e1, base, 0, eps_max, diagnostic=(
            f"start point infeasible: error {base.std_error:.4g} exceeds eps_max {eps_max:.4g}"))
    for c in warm_starts:
        c = np.asarray(c, dtype=float)
        if c.shape == e1.shape:
            tracker.evaluate(c)
    x0 = tracker.best[0].copy()
    hit_cap = False
    if objective.dim > 1:
        res = _cobyla(tracker.value, x0, constraints=({"type": "ineq", "fun": tracker.slack},),
                      rhobeg=rhobeg, rhoend=rhoend, maxiter=maxiter)
        hit_cap = res.nfev >= maxiter
        if hit_cap:
            log.warning("COBYLA stopped at the iteration cap (%d); returning best feasible iterate", maxiter)
    c_opt, est = tracker.best
    energy = EnergyEstimate(est.value, est.std_error, est.n_samples, True)
    return SolveResult(c_opt, energy, tracker.calls, eps_max, hit_cap, history=tracker.history)


def minimize_upper_bound(t: SampleTensors | RatioObjective, *, rhobeg: float = RHOBEG,
                         rhoend: float = RHOEND, maxiter: int = MAXITER) -> tuple[np.ndarray, EnergyEstimate]:
    """Unconstrained minimum of ``value + std_error`` starting from ``e_1``."""
    objective = t if isinstance(t, RatioObjective) else RatioObjective(t)
    e1 = np.zeros(objective.dim)
    e1[0] = 1.0
    start = objective(e1)
    best = [e1.copy(), start]
    penalty = abs(start.value) * 1e3 + 1e3

    def fun(c):
        try:
            est = objective(c)
        except NumericalError:
            return penalty
        score = est.value + est.std_error
        if score < best[1].value + best[1].std_error:
            best[0], best[1] = np.array(c, dtype=float), est
        return score

    if objective.dim > 1:
        _cobyla(fun, e1, rhobeg=rhobeg, rhoend=rhoend, maxiter=maxiter)
    return best[0], best[1]


def eps_sweep(t: SampleTensors | RatioObjective, eps_values, **kwargs) -> list[SolveResult]:
    """Solve for increasing budgets, warm-starting each from all earlier optima."""
    objective = t if isinstance(t, RatioObjective) else RatioObjective(t)
    out: list[SolveResult] = []
    starts: list[np.ndarray] = []
    for eps in sorted(eps_values):
        res = constrained_minimize(objective, eps, warm_starts=starts, **kwargs)
        out.append(res)
        if res.energy.feasible:
            starts.append(res.c_opt)
    return out


def landscape_scan(t: SampleTensors | RatioObjective, dims: tuple[int, int], grid_i, grid_j,
                   c_base=None) -> tuple[np.ndarray, np.ndarray]:
    """Estimate and error on a 2-D slice ``c = c_base`` with ``c[i], c[j]`` replaced.

    Returns ``(value, std_error)`` arrays of shape ``(len(grid_i), len(grid_j))``;
    singular cells are NaN.
    """
    i, j = dims
    if i == j:
        raise ConfigError("landscape dimensions must differ")
    objective = t if isinstance(t, RatioObjective) else RatioObjective(t)
    if c_base is None:
        c_base = np.zeros(objective.dim)
        c_base[0] = 1.0
    grid_i = np.asarray(grid_i, dtype=float)
    grid_j = np.asarray(grid_j, dtype=float)
    value = np.full((grid_i.size, grid_j.size), np.nan)
    error = np.full_like(value, np.nan)
    c = np.array(c_base, dtype=float)
    for a, ci in enumerate(grid_i):
        for b, cj in enumerate(grid_j):
            c[i], c[j] = ci, cj
            try:
                est = objective(c)
            except NumericalError:
                continue
            value[a, b], error[a, b] = est.value, est.std_error
    return value, error
