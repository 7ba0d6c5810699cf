import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from engine.errors import ConfigurationError, SolutionBlowUp
from engine.steppers import (SCHEMES, SemiDiscreteSystem, StepperState, backward_difference_coefficients,
                             etd1_step, etd2_step, etd_multistep_step, integrate, multistep_phi_weights,
                             prepare, step)

C = sp.diags([-1.0, -2.0]).tocsr()
U0 = np.array([1.0, 0.5])
T_END = 1.0
ORDERS = {"etd1": 1, "etd2": 2, "etd_ms3": 3, "etd_ms4": 4, "etd2rk": 2, "etd3rk": 3, "etd4rk": 4,
          "cn": 2, "rk4": 4}
DTS = [0.1, 0.05, 0.025, 0.0125]


def nonlinear(U, t):
    return np.array([np.sin(U[1]) + np.cos(t), U[0] * U[1] - 0.5 * np.sin(t)])


def forcing_only(U, t):
    return np.array([np.cos(t), np.sin(2.0 * t)])


def reference(F):
    sol = solve_ivp(lambda t, u: C @ u + F(u, t), (0.0, T_END), U0, method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1]


def final_error(scheme, dt):
    F = forcing_only if scheme == "cn" else nonlinear
    sys = SemiDiscreteSystem(C, F, 2, state_dependent=scheme != "cn")
    state = StepperState(U0.copy(), 0.0, krylov_tol=1e-13)
    state = integrate(sys, state, dt, int(round(T_END / dt)), scheme)
    assert state.t == pytest.approx(T_END)
    return np.linalg.norm(state.U - reference(F))


@pytest.mark.parametrize("scheme", SCHEMES)
def test_convergence_order(scheme):
    errors = [final_error(scheme, dt) for dt in DTS]
    slope = np.polyfit(np.log(DTS), np.log(errors), 1)[0]
    assert abs(slope - ORDERS[scheme]) <= 0.25


def test_backward_difference_coefficients():
    assert backward_difference_coefficients(0) == pytest.approx([1.0])
    assert backward_difference_coefficients(1) == pytest.approx([0.0, -1.0])
    # binom(-s, 2) = s (s + 1) / 2
    assert backward_difference_coefficients(2) == pytest.approx([0.0, 0.5, 0.5])


def test_multistep_weights():
    W = multistep_phi_weights(3)
    assert W == pytest.approx(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.5, 0.5]]))


def history_state():
    sys = SemiDiscreteSystem(C, nonlinear, 2)
    prev = np.array([0.9, 0.6])
    state = StepperState(U0.copy(), 0.1, history=(nonlinear(prev, 0.0),))
    return sys, state


def test_multistep_collapses_to_etd1_and_etd2():
    sys, state = history_state()
    one = etd_multistep_step(sys, state, 0.05, 1).U
    assert one == pytest.approx(etd1_step(sys, state, 0.05).U, rel=1e-12)
    two = etd_multistep_step(sys, state, 0.05, 2).U
    assert two == pytest.approx(etd2_step(sys, state, 0.05).U, rel=1e-12)


def test_etd1_exact_for_linear_problem():
    sys = SemiDiscreteSystem(C, lambda U, t: np.zeros(2), 2)
    state = StepperState(U0.copy(), 0.0, krylov_tol=1e-12)
    result = etd1_step(sys, state, 0.7)
    assert result.U == pytest.approx(scipy.linalg.expm(0.7 * C.toarray()) @ U0, rel=1e-12)


def test_history_grows_and_is_capped():
    sys = SemiDiscreteSystem(C, nonlinear, 2)
    state = StepperState(U0.copy(), 0.0)
    for _ in range(5):
        state = step(sys, state, 0.01, "etd_ms4")
    assert len(state.history) == 3
    assert state.t == pytest.approx(0.05)


def test_etd2_requires_history():
    sys = SemiDiscreteSystem(C, nonlinear, 2)
    with pytest.raises(ConfigurationError):
        etd2_step(sys, StepperState(U0.copy(), 0.0), 0.1)
    with pytest.raises(ConfigurationError):
        etd_multistep_step(sys, StepperState(U0.copy(), 0.0), 0.1, 3)


def test_crank_nicolson_rejects_state_dependent_source():
    sys = SemiDiscreteSystem(C, nonlinear, 2)
    with pytest.raises(ConfigurationError):
        step(sys, StepperState(U0.copy(), 0.0), 0.1, "cn")


def test_crank_nicolson_needs_matrix():
    sys = SemiDiscreteSystem(lambda x: C @ x, forcing_only, 2, state_dependent=False)
    with pytest.raises(ConfigurationError):
        prepare(sys, 0.1, "cn")


def test_prepare_caches_factorization():
    sys = SemiDiscreteSystem(C, forcing_only, 2, state_dependent=False)
    prepare(sys, 0.1, "cn")
    assert 0.1 in sys._cn_cache
    step(sys, StepperState(U0.copy(), 0.0), 0.1, "cn")
    assert len(sys._cn_cache) == 1


def test_unknown_scheme_and_bad_dt():
    sys = SemiDiscreteSystem(C, nonlinear, 2)
    with pytest.raises(ConfigurationError):
        step(sys, StepperState(U0.copy(), 0.0), 0.1, "euler")
    with pytest.raises(ConfigurationError):
        integrate(sys, StepperState(U0.copy(), 0.0), 0.0, 3, "etd1")


def test_rk4_blows_up_on_stiff_problem():
    stiff = sp.diags([-1e4, -1.0]).tocsr()
    sys = SemiDiscreteSystem(stiff, lambda U, t: np.zeros(2), 2)
    with pytest.raises(SolutionBlowUp) as info:
        integrate(sys, StepperState(U0.copy(), 0.0), 0.01, 50, "rk4")
    assert info.value.norm > 1e10 or not np.isfinite(info.value.norm)


def test_etd_stable_on_stiff_problem():
    stiff = sp.diags([-1e4, -1.0]).tocsr()
    sys = SemiDiscreteSystem(stiff, lambda U, t: np.ones(2), 2)
    state = integrate(sys, StepperState(U0.copy(), 0.0), 0.1, 20, "etd2")
    # steady state of u' = -1e4 u + 1 and u' = -u + 1
    assert state.U[0] == pytest.approx(1e-4, rel=1e-6)
    assert abs(state.U[1] - (1.0 - 0.5 * np.exp(-2.0))) < 1e-6


def test_callback_sees_every_step():
    sys = SemiDiscreteSystem(C, nonlinear, 2)
    seen = []
    integrate(sys, StepperState(U0.copy(), 0.0), 0.1, 4, "etd2rk", callback=lambda s: seen.append(s.t))
    assert seen == pytest.approx([0.1, 0.2, 0.3, 0.4])
