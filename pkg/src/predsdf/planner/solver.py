"""Damped Gauss-Newton (Levenberg) solver for the stacked least-squares problem."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .problem import FactorGraphProblem, PlannerConfig

log = logging.getLogger(__name__)

_LAMBDA_MAX = 1e12


@dataclass
class PlanResult:
    states: np.ndarray
    total_cost: float
    gp_cost: float
    obstacle_cost: float
    prior_cost: float
    iterations: int
    converged: bool
    extrapolated: bool = False
    cost_history: List[float] = field(default_factory=list)

    @property
    def warning(self) -> Optional[str]:
        return None if self.converged else "max_iters reached before convergence"


def optimize(problem: FactorGraphProblem, config: Optional[PlannerConfig] = None,
             init: Optional[np.ndarray] = None) -> PlanResult:
    """Minimise the problem's cost over its free knots, starting from ``init`` or ``problem.states``.

    The accepted iterate is written back to ``problem.states``. A step is
    accepted only if it lowers the total cost, so the recorded cost history
    is non-increasing.
    """
    cfg = config or problem.config
    k = problem.first_free
    v = problem.first_variable
    D = 2 * problem.dof
    X = (problem.states if init is None else np.asarray(init, dtype=float)).copy()
    X[:k] = problem.states[:k]
    if problem.anchor is not None:
        X[k] = problem.anchor

    lin = problem.evaluate(X)
    cost = lin.total_cost
    history = [cost]
    lam = cfg.lambda0
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        J, r = lin.jacobian, lin.residual
        H = J.T @ J
        g = J.T @ r
        eye = np.eye(len(g))
        accepted = False
        while lam <= _LAMBDA_MAX:
            step = np.linalg.solve(H + lam * eye, -g)
            Xc = X.copy()
            Xc[v:] += step.reshape(-1, D)
            cand = problem.evaluate(Xc, jacobian=False)
            if cand.total_cost < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # No descent direction left at any damping: a (local) minimum.
            converged = True
            break
        decrease = cost - cand.total_cost
        X, cost = Xc, cand.total_cost
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        lin = problem.evaluate(X)
        if decrease <= cfg.convergence_tol * max(cost, 1e-12) or np.max(np.abs(step)) < 1e-12:
            converged = True
            break

    if not converged:
        log.warning("optimizer stopped after %d iterations without converging", cfg.max_iters)
    problem.states = X
    return PlanResult(X.copy(), lin.total_cost, lin.gp_cost, lin.obstacle_cost, lin.prior_cost, it,
                      converged, lin.extrapolated, history)
