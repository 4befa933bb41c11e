import numpy as np
import pytest

from hiermpc.errors import InfeasibleLL
from hiermpc.lowlevel import (apply_correction, correction_prediction,
                              design_ll_gain, simulate_auxiliary, solve_ll)
from hiermpc.lti import CouplingMap, SubsystemModel, assemble
from hiermpc.reduction import reduce_model
from hiermpc.sets import BallSet


def scalar_pair(a1=0.5, a2=0.6, couple=0.0, b1=1.0, b2=1.0):
    subs = [
        SubsystemModel(A=[[a1]], B=[[b1]], E=[[1.0]], C_z=[[1.0]],
                       input_set=BallSet(1, 10.0)),
        SubsystemModel(A=[[a2]], B=[[b2]], E=[[1.0]], C_z=[[1.0]],
                       input_set=BallSet(1, 10.0)),
    ]
    coupling = CouplingMap(((None, [[couple]]), ([[couple]], None)))
    return assemble(subs, coupling)


def test_auxiliary_matrix_power_oracle():
    model = scalar_pair(couple=0.1)
    x0 = np.array([1.0, -2.0])
    u = np.array([0.3, 0.4])
    period = 6
    aux = simulate_auxiliary(model, x0, u, period)
    oracle = np.linalg.matrix_power(model.A, period) @ x0
    oracle += sum(np.linalg.matrix_power(model.A, j) for j in range(period)) @ model.B @ u
    assert np.allclose(aux.terminal, oracle, atol=1e-12)
    assert aux.states.shape == (period + 1, 2)


def test_design_ll_gain_decoupled():
    model = scalar_pair()
    gain = design_ll_gain(model, [np.eye(1), np.eye(1)], [[[10.0]], [[10.0]]])
    assert gain.rho < 1.0
    assert gain.K.shape == (2, 2)
    assert gain.K[0, 1] == 0.0 and gain.K[1, 0] == 0.0


def test_design_ll_gain_detunes_under_coupling():
    # Strong skew coupling: local gains can destabilize the coupled loop, the
    # detuning loop must still land on a Schur matrix.
    subs = [
        SubsystemModel(A=[[0.9]], B=[[1.0]], E=[[1.0]], C_z=[[1.0]],
                       input_set=BallSet(1, 10.0)),
        SubsystemModel(A=[[0.9]], B=[[1.0]], E=[[1.0]], C_z=[[1.0]],
                       input_set=BallSet(1, 10.0)),
    ]
    coupling = CouplingMap(((None, [[0.6]]), ([[-0.6]], None)))
    model = assemble(subs, coupling)
    gain = design_ll_gain(model, [np.eye(1), np.eye(1)], [np.eye(1), np.eye(1)])
    assert gain.rho < 1.0


def test_correction_prediction_layout():
    A = np.array([[0.5]])
    B = np.array([[2.0]])
    Gamma, reach = correction_prediction(A, B, 3)
    # states j=1,2 from inputs (u0,u1,u2); reach maps to state j=3.
    assert np.allclose(Gamma, [[2.0, 0.0, 0.0], [1.0, 2.0, 0.0]])
    assert np.allclose(reach, [[0.5, 1.0, 2.0]])


def test_solve_ll_scalar_hand_kkt():
    # n=m=1, A=a, B=b, period 2, beta=1, no budget bound:
    # min q (b u0)^2 + r (u0^2 + u1^2)  s.t.  a b u0 + b u1 = rhs.
    a, b, q, r, rhs = 0.5, 1.0, 1.0, 2.0, 0.7
    model = scalar_pair(a1=a, a2=0.6, b1=b)
    red = reduce_model(model, [1, 1])
    assert np.isclose(abs(red.beta[0, 0]), 1.0)
    sign = red.beta[0, 0]
    target = sign * rhs  # choose projected target so the raw gap is rhs
    # Hand KKT: u = argmin u'Du s.t. c'u = rhs with D = diag(qb^2+r, r),
    # c = (ab, b): u = D^{-1} c rhs / (c' D^{-1} c).
    D = np.diag([q * b * b + r, r])
    cvec = np.array([a * b, b])
    u_hand = np.linalg.solve(D, cvec) * (rhs / (cvec @ np.linalg.solve(D, cvec)))

    aux_terminal = np.zeros(2)  # zero rollout: gap equals the target itself
    plan = solve_ll(model, red, 0, np.array([target]), aux_terminal,
                    BallSet(1, 100.0), [[q]], [[r]], period=2)
    assert np.allclose(plan.u_steps.ravel(), u_hand, atol=1e-6)
    assert plan.terminal_residual <= 1e-7


def test_solve_ll_budget_and_reset():
    rng = np.random.default_rng(29)
    model = scalar_pair(couple=0.05)
    red = reduce_model(model, [1, 1])
    budget = BallSet(1, 0.4)
    plan = solve_ll(model, red, 1, np.array([0.5]), rng.normal(size=2),
                    budget, np.eye(1), [[10.0]], period=8)
    assert np.allclose(plan.states[0], 0.0)
    assert all(np.linalg.norm(u) <= budget.radius + 1e-7 for u in plan.u_steps)
    assert plan.terminal_residual <= 1e-7


def test_solve_ll_infeasible_when_target_too_far():
    model = scalar_pair()
    red = reduce_model(model, [1, 1])
    with pytest.raises(InfeasibleLL) as err:
        solve_ll(model, red, 0, np.array([50.0]), np.zeros(2),
                 BallSet(1, 0.1), np.eye(1), np.eye(1), period=2)
    assert err.value.subsystem == 0
    assert err.value.diagnostics["target_norm"] > 0


def test_apply_correction_feedback_form():
    model = scalar_pair()
    red = reduce_model(model, [1, 1])
    plan = solve_ll(model, red, 0, np.array([0.3]), np.zeros(2),
                    BallSet(1, 10.0), np.eye(1), np.eye(1), period=3)
    K_i = np.array([[-0.4]])
    measured = np.array([0.25])
    out = apply_correction(plan, K_i, measured, 1)
    expected = plan.u_steps[1] + K_i @ (measured - plan.states[1])
    assert np.allclose(out, expected)


def test_decoupled_correction_reproduces_prediction():
    # With zero coupling the planned deviation trajectory is exact for the
    # plant: rolling the plant with held input + plan equals auxiliary + plan.
    model = scalar_pair()
    red = reduce_model(model, [1, 1])
    period = 5
    x0 = np.array([1.0, -1.0])
    u_bar = np.array([0.2, -0.1])
    aux = simulate_auxiliary(model, x0, u_bar, period)
    i = 0
    beta_i = red.beta_block(i, model)
    x_bar_pred = beta_i @ aux.terminal[model.state_slice(i)] + 0.15
    plan = solve_ll(model, red, i, x_bar_pred, aux.terminal,
                    BallSet(1, 10.0), np.eye(1), np.eye(1), period)
    x = x0.copy()
    for j in range(period):
        u = u_bar.copy()
        u[i] += plan.u_steps[j][0]
        x = model.A @ x + model.B @ u
    assert np.isclose(beta_i @ x[model.state_slice(i)], x_bar_pred, atol=1e-9)
