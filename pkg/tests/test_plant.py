import numpy as np
import pytest

from dsmpc.errors import DimensionError, UnknownKind
from dsmpc.model import shift_to_target
from dsmpc.plant import (make_disturbance, plant_step, simulate_closed_loop)

from conftest import make_pair_scenario


class TestPlantStep:
    def test_zero_everything(self, formation3):
        n, m = formation3.n_total, formation3.m_total
        out = plant_step(np.zeros(n), np.zeros(m), np.zeros(n),
                         formation3.agents)
        assert np.all(out == 0.0)

    def test_double_integrator_axis(self, formation3):
        x = np.zeros(formation3.n_total)
        x[0], x[1] = 1.0, 0.5  # agent1 px, vx
        out = plant_step(x, np.zeros(formation3.m_total),
                         np.zeros(formation3.n_total), formation3.agents)
        assert out[0] == pytest.approx(1.5)
        assert out[1] == pytest.approx(0.5)

    def test_disturbance_additivity(self, formation3):
        n, m = formation3.n_total, formation3.m_total
        d = np.full(n, 0.05)
        base = plant_step(np.ones(n), np.zeros(m), np.zeros(n),
                          formation3.agents)
        shifted = plant_step(np.ones(n), np.zeros(m), d, formation3.agents)
        assert np.allclose(shifted - base, d)

    def test_dimension_check(self, formation3):
        with pytest.raises(DimensionError):
            plant_step(np.zeros(3), np.zeros(formation3.m_total),
                       np.zeros(formation3.n_total), formation3.agents)


class TestMakeDisturbance:
    def test_zero_kind(self):
        d = make_disturbance("zero", np.ones(4))
        assert np.all(d.realize(10) == 0.0)

    def test_uniform_degenerate_box(self):
        d = make_disturbance("uniform", np.zeros(3), seed=5)
        assert np.all(d.realize(20) == 0.0)

    def test_uniform_within_box(self):
        bound = np.array([0.1, 0.4, 0.0])
        d = make_disturbance("uniform", bound, seed=11)
        seq = d.realize(10_000)
        assert np.all(np.abs(seq) <= bound[None, :] + 1e-15)
        # the box is actually explored
        assert np.max(np.abs(seq[:, 0])) > 0.09

    def test_seed_reproducibility(self):
        a = make_disturbance("uniform", np.ones(2), seed=3).realize(50)
        b = make_disturbance("uniform", np.ones(2), seed=3).realize(50)
        c = make_disturbance("uniform", np.ones(2), seed=4).realize(50)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_constant_worst_vertex(self):
        d = make_disturbance("constant_worst", np.array([0.2, 0.3]),
                             vertex=[-1.0, 1.0])
        seq = d.realize(4)
        assert np.allclose(seq, np.tile([-0.2, 0.3], (4, 1)))

    def test_unknown_kind(self):
        with pytest.raises(UnknownKind):
            make_disturbance("gaussian", np.ones(2))

    def test_negative_bound_rejected(self):
        with pytest.raises(ValueError):
            make_disturbance("zero", np.array([-0.1]))


class TestSimulateClosedLoop:
    def test_equilibrium_stays_put(self, formation3):
        s = shift_to_target(formation3)
        # place every agent exactly at its (shifted) target
        for a in s.agents:
            a.x0 = np.zeros(a.n)
        tr = simulate_closed_loop(s, ell=2, steps=8)
        assert np.max(np.abs(tr.states)) <= 1e-12
        assert np.max(np.abs(tr.inputs)) <= 1e-12
        assert np.max(np.abs(tr.prices)) == 0.0  # warm start stays at zero
        assert tr.violations.max() == 0.0

    def test_replay_self_consistency(self, formation3):
        tr = simulate_closed_loop(formation3, ell=2, steps=10)
        assert tr.replay_residual(formation3.agents) <= 1e-12

    def test_replay_with_disturbance(self, formation3):
        dist = make_disturbance("uniform", 0.02 * np.ones(formation3.n_total),
                                seed=8)
        tr = simulate_closed_loop(formation3, ell=2, steps=10, dist=dist)
        assert tr.replay_residual(formation3.agents) <= 1e-12
        assert np.array_equal(tr.disturbances, dist.realize(10))

    def test_local_input_constraints_hold_exactly(self, formation3):
        tr = simulate_closed_loop(formation3, ell=1, steps=25)
        assert np.max(np.abs(tr.inputs)) <= 1.0 + 1e-8

    def test_violations_recorded_not_clipped(self, formation3):
        tr = simulate_closed_loop(formation3, ell=1, steps=25)
        assert tr.violations.max() > 1e-3  # the maneuver strains the tether

    def test_converges_with_one_round(self, formation3):
        tr = simulate_closed_loop(formation3, ell=1, steps=60)
        err = np.linalg.norm(tr.states[-1] - tr.targets)
        assert err <= 1e-2

    def test_trace_csv_deterministic(self, formation3):
        t1 = simulate_closed_loop(formation3, ell=1, steps=12)
        t2 = simulate_closed_loop(formation3, ell=1, steps=12)
        assert t1.to_csv() == t2.to_csv()

    def test_infeasible_start_truncates(self):
        # initial gap drift makes the stage-1 tether impossible: positions
        # 0.2 apart but separating at 1.0 per step against a 0.3 cap is
        # fine locally (no local rows hit), so force a local infeasibility
        # through a tight input box and an unreachable terminal pin
        s = make_pair_scenario(box=0.01)
        for a in s.agents:
            a.terminal_equality = True
            from dsmpc.model import Polytope
            a.terminal_poly = Polytope(np.array([[1.0], [-1.0]]), np.zeros(2))
            a.P = np.zeros((1, 1))
        tr = simulate_closed_loop(s, ell=1, steps=5)
        assert tr.infeasible_at == 0
        assert tr.states.shape[0] == 1


class TestDualDiagnostics:
    def test_optional_recording(self, formation3):
        tr = simulate_closed_loop(formation3, ell=3, steps=4,
                                  record_dual_diag=True)
        assert len(tr.dual_diagnostics) == 4
        assert all(len(step) == 3 for step in tr.dual_diagnostics)
        j, agg_res, mu_step = tr.dual_diagnostics[0][0]
        assert j == 1 and agg_res >= 0.0 and mu_step >= 0.0


class TestNonzeroEquilibriumInput:
    def test_holds_target_with_steady_input(self):
        # A=0.5, B=1, target 1 requires the steady input u = 0.5; the loop
        # must settle on the target while reporting original-frame inputs
        from dsmpc.model import (AgentModel, CouplingSpec, Polytope, Scenario,
                                 shift_to_target, solve_dare)

        P, _ = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
        agent = AgentModel(
            A=[[0.5]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], P=P,
            input_poly=Polytope.box([-1.0], [1.0]),
            state_poly=Polytope.unconstrained(1),
            terminal_poly=Polytope.unconstrained(1), terminal_equality=False,
            disturbance_bound=[0.0], x0=[0.0], target=[1.0], name="steady",
        )
        s = Scenario(agents=[agent], coupling=CouplingSpec([]), horizon=6,
                     epsilon=0.5, sim_steps=40, name="steady")
        shifted = shift_to_target(s)
        xbar, ubar = shifted.shift
        assert xbar[0] == pytest.approx(1.0)
        assert ubar[0] == pytest.approx(0.5)
        # the origin stays strictly inside the shifted input set
        assert shifted.agents[0].input_poly.contains([0.0])
        tr = simulate_closed_loop(s, ell=1, steps=40)
        assert tr.states[-1, 0] == pytest.approx(1.0, abs=1e-6)
        assert tr.inputs[-1, 0] == pytest.approx(0.5, abs=1e-6)
