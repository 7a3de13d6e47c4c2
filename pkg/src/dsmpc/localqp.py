"""Per-agent inner problem of the dual ascent round: given the measured
state x and a coupling price lambda, minimize

    0.5 u' H u + (G x + E' lambda)' u    over    {u : D x + C u <= c},

and the input-recovery map that extracts the first-stage input from the
minimizer.
"""

from dataclasses import dataclass

import numpy as np

from .qpcore import DEFAULT_FEAS_TOL, DEFAULT_TOL, DenseQP

INNER_TOL = DEFAULT_TOL
FEAS_TOL = DEFAULT_FEAS_TOL


@dataclass
class LocalSolve:
    """Certified solution of one inner problem."""

    u: np.ndarray
    nu: np.ndarray
    active_set: tuple
    kkt_residual: float
    inner_iters: int


def _workspace(ca):
    ws = ca._workspace
    if ws is None:
        ws = DenseQP(ca.H, ca.C)
        ca._workspace = ws
    return ws


def solve_local(ca, x, lam, warm=None, inner_tol=INNER_TOL, feas_tol=FEAS_TOL,
                max_iter=200_000):
    """Solve one agent's inner QP.  `warm` may carry the LocalSolve of a
    previous call with nearby (x, lambda); it only affects speed, never the
    certified result.

    Raises Infeasible when {u : D x + C u <= c} is empty (the state has left
    the feasible parameter set for this agent) and MaxIters on a stall.
    """
    ws = _workspace(ca)
    x = np.asarray(x, dtype=float).reshape(ca.n)
    lam = np.asarray(lam, dtype=float)
    q = ca.G @ x if lam.size == 0 else ca.G @ x + ca.E.T @ lam
    r = ca.c - ca.D @ x
    res = ws.solve(
        q, r,
        warm_nu=None if warm is None else warm.nu,
        warm_active=None if warm is None else warm.active_set,
        tol=inner_tol, feas_tol=feas_tol, max_iter=max_iter,
    )
    return LocalSolve(res.z, res.nu, res.active, res.kkt_residual, res.iters)


def inner_value(ca, x, lam, solve):
    """Value of f(u, x) + lambda' E u at a LocalSolve, including the
    state-only cost term (needed for coherent dual values)."""
    u, xv = solve.u, np.asarray(x, dtype=float).reshape(ca.n)
    lin = ca.G @ xv if np.size(lam) == 0 else ca.G @ xv + ca.E.T @ np.asarray(lam)
    return float(0.5 * (u @ ca.H @ u) + lin @ u + 0.5 * (xv @ ca.W @ xv))


def recover_input(ca, x, lam, warm=None, inner_tol=INNER_TOL):
    """First-stage input block of the inner minimizer (the q-mapping)."""
    sol = solve_local(ca, x, lam, warm=warm, inner_tol=inner_tol)
    return sol.u[: ca.m].copy()
