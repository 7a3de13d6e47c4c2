"""Centralized high-accuracy reference: the monolithic condensed QP is solved
directly (regularized or not) and certified through KKT residuals computed on
the original problem data, independently of the solve path.  Supplies the
exact primal/dual solution maps, both feedback laws, and the square-root
value function used in the stability experiments.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .condense import condense_scenario, eval_condensed_cost
from .errors import NoConvergence
from .localqp import recover_input
from .model import shift_to_target
from .plant import plant_step
from .qpcore import DenseQP

ORACLE_TOL = 1e-9


@dataclass
class OracleSolution:
    """Certified primal-dual pair of the (possibly regularized) coupled QP."""

    u: np.ndarray            # stacked input trajectories
    lam: np.ndarray          # coupling duals (the regularized dual solution)
    nu: np.ndarray           # local-constraint duals, stacked in agent order
    kkt_residual: float
    value: float             # condensed cost at the primal solution
    epsilon: float
    dual_maybe_nonunique: bool = False

    def to_dict(self):
        """Solution dump in the scenario-file matrix encoding."""
        return {
            "u": self.u.tolist(),
            "lam": self.lam.tolist(),
            "nu": self.nu.tolist(),
            "kkt_residual": self.kkt_residual,
            "value": self.value,
            "epsilon": self.epsilon,
            "dual_maybe_nonunique": self.dual_maybe_nonunique,
        }


def _stacked(g, x):
    x_parts = g.split_states(x)
    H_all = block_diag(*[ca.H for ca in g.agents])
    q = np.concatenate([ca.G @ xi for ca, xi in zip(g.agents, x_parts)])
    C_loc = block_diag(*[ca.C for ca in g.agents])
    r_loc = np.concatenate([ca.c - ca.D @ xi for ca, xi in zip(g.agents, x_parts)])
    E_all = np.hstack([ca.E for ca in g.agents]) if g.n_dual else \
        np.zeros((0, sum(ca.nu for ca in g.agents)))
    Fx = np.zeros(g.n_dual)
    for ca, xi in zip(g.agents, x_parts):
        Fx += ca.F @ xi
    return H_all, q, C_loc, r_loc, E_all, Fx


def _reg_kkt_residual(H_all, q, C_loc, r_loc, E_all, b_eff, u, nu, lam, eps):
    """KKT residual of the regularized problem with the relaxation variable
    eliminated (coupling rows read E u <= b_eff + eps * lam)."""
    stat = H_all @ u + q + C_loc.T @ nu
    if lam.size:
        stat = stat + E_all.T @ lam
    res = float(np.max(np.abs(stat)))
    s_loc = r_loc - C_loc @ u
    if s_loc.size:
        res = max(res, float(max(0.0, -s_loc.min())))
        res = max(res, float(max(0.0, -nu.min())) if nu.size else 0.0)
        res = max(res, float(np.max(np.abs(nu * s_loc))) if nu.size else 0.0)
    if lam.size:
        s_cpl = b_eff + eps * lam - E_all @ u
        res = max(res, float(max(0.0, -s_cpl.min())))
        res = max(res, float(max(0.0, -lam.min())))
        res = max(res, float(np.max(np.abs(lam * s_cpl))))
    return res


def _workspace(g, eps):
    cache = getattr(g, "_oracle_ws", None)
    if cache is None:
        cache = {}
        g._oracle_ws = cache
    key = float(eps)
    if key in cache:
        return cache[key]
    H_all = block_diag(*[ca.H for ca in g.agents])
    C_loc = block_diag(*[ca.C for ca in g.agents])
    E_all = np.hstack([ca.E for ca in g.agents]) if g.n_dual else \
        np.zeros((0, H_all.shape[0]))
    if eps == 0.0:
        P = H_all
        A = np.vstack([C_loc, E_all])
    else:
        # Relaxation variable scaled by sqrt(eps) keeps the KKT system
        # well conditioned down to very small regularization.
        nv, p = H_all.shape[0], g.n_dual
        P = block_diag(H_all, np.eye(p))
        A = np.block([
            [C_loc, np.zeros((C_loc.shape[0], p))],
            [E_all, -np.sqrt(eps) * np.eye(p)],
        ])
    ws = DenseQP(P, A)
    cache[key] = ws
    return ws


def solve_centralized(g, x, eps, tol=ORACLE_TOL):
    """Solve the coupled condensed QP at state x to KKT residual <= tol.

    eps > 0 solves the regularized problem (unique dual); eps = 0 returns the
    exact primal and one dual, flagging possible dual non-uniqueness when the
    active constraint gradients are rank deficient.  Raises Infeasible when x
    is outside the feasible parameter set and NoConvergence if the residual
    contract cannot be met.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    x = np.asarray(x, dtype=float)
    H_all, q, C_loc, r_loc, E_all, Fx = _stacked(g, x)
    b_eff = g.b - Fx
    k_loc = C_loc.shape[0]
    n_u = H_all.shape[0]
    ws = _workspace(g, eps)

    if eps == 0.0:
        res = ws.solve(q, np.concatenate([r_loc, b_eff]), tol=tol)
        u = res.z
        nu = res.nu[:k_loc]
        lam = res.nu[k_loc:]
        kkt = res.kkt_residual
    else:
        p = g.n_dual
        res = ws.solve(np.concatenate([q, np.zeros(p)]),
                       np.concatenate([r_loc, b_eff]), tol=tol)
        u = res.z[:n_u]
        nu = res.nu[:k_loc]
        lam = res.nu[k_loc:]
        kkt = _reg_kkt_residual(H_all, q, C_loc, r_loc, E_all, b_eff,
                                u, nu, lam, eps)
    if kkt > 10 * tol:
        raise NoConvergence(f"oracle KKT residual {kkt:.3e} above tolerance")

    nonunique = False
    if eps == 0.0:
        act = [i for i in range(k_loc) if nu[i] > tol or
               (r_loc - C_loc @ u)[i] < 1e-10]
        act_c = [j for j in range(g.n_dual) if lam[j] > tol or
                 (b_eff - E_all @ u)[j] < 1e-10]
        Aact = np.vstack([C_loc[act], E_all[act_c]]) if (act or act_c) else \
            np.zeros((0, n_u))
        if Aact.shape[0]:
            sv = np.linalg.svd(Aact, compute_uv=False)
            nonunique = bool(sv.min() < 1e-8 * max(1.0, sv.max())) or \
                Aact.shape[0] > n_u

    return OracleSolution(
        u=u, lam=lam, nu=nu, kkt_residual=float(kkt),
        value=eval_condensed_cost(g, u, x), epsilon=float(eps),
        dual_maybe_nonunique=nonunique,
    )


def primal_solution(g, x):
    """Exact primal minimizer of the unregularized coupled QP."""
    return solve_centralized(g, x, 0.0).u


def dual_solution(g, x, eps):
    """Regularized dual solution (unique for eps > 0)."""
    return solve_centralized(g, x, eps).lam


def value_function(g, x):
    """Square root of the optimal cost, the Lyapunov candidate for the
    optimal closed loop."""
    sol = solve_centralized(g, x, 0.0)
    return float(np.sqrt(max(sol.value, 0.0)))


def feedback_laws(g, x, eps):
    """(exact MPC law, regularized law) at state x.  The exact law extracts
    the first input block of the primal; the regularized law is recovered
    from the regularized dual through the agents' inner problems."""
    x = np.asarray(x, dtype=float)
    sol0 = solve_centralized(g, x, 0.0)
    u_parts = g.split_inputs(sol0.u)
    kappa = np.concatenate([ui[: ca.m] for ca, ui in zip(g.agents, u_parts)])
    sol_eps = solve_centralized(g, x, eps)
    x_parts = g.split_states(x)
    kappa_eps = np.concatenate([
        recover_input(ca, xi, sol_eps.lam)
        for ca, xi in zip(g.agents, x_parts)
    ])
    return kappa, kappa_eps


def simulate_optimal_closed_loop(scenario, steps=None, eps=0.0):
    """Nominal (d = 0) closed loop under the exact MPC law (or its
    regularized version for eps > 0).  Returns states in original
    coordinates, shape (steps+1, n)."""
    steps = scenario.sim_steps if steps is None else int(steps)
    shifted = shift_to_target(scenario)
    g = condense_scenario(shifted)
    xbar, ubar = shifted.shift
    x = shifted.x0_stacked()
    states = np.zeros((steps + 1, x.size))
    states[0] = x + xbar
    zero_d = np.zeros(x.size)
    for t in range(steps):
        sol = solve_centralized(g, x, eps)
        u_parts = g.split_inputs(sol.u)
        u0 = np.concatenate([ui[: ca.m] for ca, ui in zip(g.agents, u_parts)])
        x = plant_step(x, u0, zero_d, shifted.agents)
        states[t + 1] = x + xbar
    return states
