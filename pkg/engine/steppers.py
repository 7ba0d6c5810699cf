"""
Time steppers for the semi-discrete system U' = C U + F(U, t).

Every exponential update is a single phi_combination request. Steppers
return a new StepperState whose history holds the latest F evaluations
(most recent first), which is what the multistep schemes consume.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import polynomial as P

from engine.errors import ConfigurationError, SolutionBlowUp
from engine.phifun import PhiCombinationRequest, phi_combination
from engine.sparse import DEFAULT_CG_TOL, cg_solve, ic0_factor

log = logging.getLogger(__name__)

DEFAULT_KRYLOV_TOL = 1e-8
MAX_HISTORY = 3
BLOW_UP_NORM = 1e10

SCHEMES = ("etd1", "etd2", "etd_ms3", "etd_ms4", "etd2rk", "etd3rk", "etd4rk", "cn", "rk4")
MULTISTEP_ORDER = {"etd1": 1, "etd2": 2, "etd_ms3": 3, "etd_ms4": 4}


@dataclass
class SemiDiscreteSystem:
    """
    linear_op is a sparse/dense matrix or a callable x -> C x.
    state_dependent=False declares F(U, t) independent of U, which the
    Crank-Nicolson baseline requires.
    """
    linear_op: object
    nonlinear: Callable[[np.ndarray, float], np.ndarray]
    dim: int
    state_dependent: bool = True
    _cn_cache: dict = field(default_factory=dict, repr=False)

    def apply_linear(self, x):
        if callable(self.linear_op) and not hasattr(self.linear_op, "dot"):
            return np.asarray(self.linear_op(x), dtype=float)
        return self.linear_op @ x

    def F(self, U, t):
        return np.asarray(self.nonlinear(U, t), dtype=float)

    @property
    def matrix(self):
        if callable(self.linear_op) and not hasattr(self.linear_op, "dot"):
            return None
        return self.linear_op


@dataclass(frozen=True)
class StepperState:
    U: np.ndarray
    t: float
    history: Tuple[np.ndarray, ...] = ()
    krylov_tol: float = DEFAULT_KRYLOV_TOL
    cg_tol: float = DEFAULT_CG_TOL

    def advance(self, U, dt, F_n):
        """Next state; F_n joins the front of the history"""
        history = ((F_n,) + self.history)[:MAX_HISTORY]
        return replace(self, U=U, t=self.t + dt, history=history)


def _phi(sys, state, dt, vectors):
    """sum_k phi_k(dt C) v_k"""
    req = PhiCombinationRequest(sys.apply_linear, vectors, scale=dt, tolerance=state.krylov_tol)
    return phi_combination(req)


def etd1_step(sys, state, dt):
    F_n = sys.F(state.U, state.t)
    U = _phi(sys, state, dt, [state.U, dt * F_n])
    return state.advance(U, dt, F_n)


def etd2_step(sys, state, dt):
    if not state.history:
        raise ConfigurationError("ETD2 needs F at the previous step; bootstrap with a self-starting scheme")
    F_n = sys.F(state.U, state.t)
    F_prev = state.history[0]
    U = _phi(sys, state, dt, [state.U, dt * F_n, dt * (F_n - F_prev)])
    return state.advance(U, dt, F_n)


def backward_difference_coefficients(m):
    """
    Coefficients c_{m,k} of binom(-s, m) = sum_k c_{m,k} s^k
    (index k, lowest degree first).
    """
    poly = np.array([1.0])
    for i in range(m):
        poly = P.polymul(poly, np.array([-float(i), -1.0]))
    return poly / math.factorial(m)


def multistep_phi_weights(s):
    """
    Matrix W with W[m, k] = (-1)^m c_{m,k}: the coefficient of
    phi_{k+1}(dt C) multiplying the m-th backward difference of F.
    """
    W = np.zeros((s, s))
    for m in range(s):
        c = backward_difference_coefficients(m)
        W[m, :len(c)] = (-1) ** m * c
    return W


def backward_differences(F_list, s):
    """nabla^m F_n for m < s, from F_list = (F_n, F_{n-1}, ...)"""
    diffs = []
    for m in range(s):
        d = np.zeros_like(F_list[0])
        for k in range(m + 1):
            d = d + (-1) ** k * math.comb(m, k) * F_list[k]
        diffs.append(d)
    return diffs


def etd_multistep_step(sys, state, dt, s):
    """Explicit s-step ETD, s = 1..4, as one phi combination"""
    if not 1 <= s <= 4:
        raise ConfigurationError(f"multistep order must be 1..4, got {s}")
    if len(state.history) < s - 1:
        raise ConfigurationError(f"ETD multistep order {s} needs {s - 1} previous F values")
    F_n = sys.F(state.U, state.t)
    F_list = (F_n,) + state.history[:s - 1]
    diffs = backward_differences(F_list, s)
    W = multistep_phi_weights(s)
    vectors = [state.U]
    for k in range(s):
        v = np.zeros_like(F_n)
        for m in range(s):
            if W[m, k] != 0.0:
                v = v + W[m, k] * diffs[m]
        vectors.append(dt * v)
    U = _phi(sys, state, dt, vectors)
    return state.advance(U, dt, F_n)


def etd2rk_step(sys, state, dt):
    U, t = state.U, state.t
    F_n = sys.F(U, t)
    a = _phi(sys, state, dt, [U, dt * F_n])
    F_a = sys.F(a, t + dt)
    U_next = _phi(sys, state, dt, [U, dt * F_n, dt * (F_a - F_n)])
    return state.advance(U_next, dt, F_n)


def etd3rk_step(sys, state, dt):
    U, t = state.U, state.t
    half = 0.5 * dt
    F_n = sys.F(U, t)
    a = _phi(sys, state, half, [U, half * F_n])
    F_a = sys.F(a, t + half)
    b = _phi(sys, state, dt, [U, dt * (2.0 * F_a - F_n)])
    F_b = sys.F(b, t + dt)
    U_next = _phi(sys, state, dt, [
        U,
        dt * F_n,
        dt * (-3.0 * F_n + 4.0 * F_a - F_b),
        dt * (2.0 * F_n - 4.0 * F_a + 2.0 * F_b),
    ])
    return state.advance(U_next, dt, F_n)


def etd4rk_step(sys, state, dt):
    U, t = state.U, state.t
    half = 0.5 * dt
    F_n = sys.F(U, t)
    a = _phi(sys, state, half, [U, half * F_n])
    F_a = sys.F(a, t + half)
    b = _phi(sys, state, half, [U, half * F_a])
    F_b = sys.F(b, t + half)
    c = _phi(sys, state, half, [a, half * (2.0 * F_b - F_n)])
    F_c = sys.F(c, t + dt)
    U_next = _phi(sys, state, dt, [
        U,
        dt * F_n,
        dt * (-3.0 * F_n + 2.0 * (F_a + F_b) - F_c),
        dt * (2.0 * F_n - 2.0 * (F_a + F_b) + 2.0 * F_c),
    ])
    return state.advance(U_next, dt, F_n)


class _CrankNicolsonSolver:
    """Factored (I - dt/2 C) for one dt"""

    def __init__(self, C, dt):
        n = C.shape[0]
        identity = sp.identity(n, format="csr")
        self.lhs = sp.csr_matrix(identity - 0.5 * dt * C)
        self.rhs = sp.csr_matrix(identity + 0.5 * dt * C)
        self.precond = ic0_factor(self.lhs)


def cn_step(sys, state, dt):
    if sys.state_dependent:
        raise ConfigurationError("Crank-Nicolson supports only sources independent of the state")
    C = sys.matrix
    if C is None:
        raise ConfigurationError("Crank-Nicolson needs the linear operator as a matrix")
    solver = sys._cn_cache.get(dt)
    if solver is None:
        solver = _CrankNicolsonSolver(sp.csr_matrix(C), dt)
        sys._cn_cache[dt] = solver
    F_n = sys.F(state.U, state.t)
    F_next = sys.F(state.U, state.t + dt)
    b = solver.rhs @ state.U + 0.5 * dt * (F_n + F_next)
    U, iterations = cg_solve(solver.lhs, b, precond=solver.precond, tol=state.cg_tol, x0=state.U)
    log.debug("CN step at t=%.6g: %d CG iterations", state.t, iterations)
    return state.advance(U, dt, F_n)


def _check_finite(U, t):
    norm = np.linalg.norm(U)
    if not np.isfinite(norm) or norm > BLOW_UP_NORM:
        raise SolutionBlowUp(t, norm)


def rk4_step(sys, state, dt):
    U, t = state.U, state.t

    def rhs(x, s):
        return sys.apply_linear(x) + sys.F(x, s)

    with np.errstate(over="ignore", invalid="ignore"):
        F_n = sys.F(U, t)
        k1 = sys.apply_linear(U) + F_n
        k2 = rhs(U + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = rhs(U + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = rhs(U + dt * k3, t + dt)
        U_next = U + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(U_next, t + dt)
    return state.advance(U_next, dt, F_n)


STEPPERS = {
    "etd1": etd1_step,
    "etd2": etd2_step,
    "etd_ms3": lambda sys, state, dt: etd_multistep_step(sys, state, dt, 3),
    "etd_ms4": lambda sys, state, dt: etd_multistep_step(sys, state, dt, 4),
    "etd2rk": etd2rk_step,
    "etd3rk": etd3rk_step,
    "etd4rk": etd4rk_step,
    "cn": cn_step,
    "rk4": rk4_step,
}

# self-starting scheme of matching order for the first multistep steps
BOOTSTRAP = {2: etd2rk_step, 3: etd3rk_step, 4: etd4rk_step}


def prepare(sys, dt, scheme):
    """Build per-dt solver data ahead of time (the CN factorization)"""
    if scheme == "cn" and dt not in sys._cn_cache:
        if sys.matrix is None:
            raise ConfigurationError("Crank-Nicolson needs the linear operator as a matrix")
        sys._cn_cache[dt] = _CrankNicolsonSolver(sp.csr_matrix(sys.matrix), dt)


def step(sys, state, dt, scheme):
    """One step of the named scheme, bootstrapping multistep history"""
    if scheme not in STEPPERS:
        raise ConfigurationError(f"unknown scheme '{scheme}', expected one of {', '.join(SCHEMES)}")
    order = MULTISTEP_ORDER.get(scheme, 0)
    if order > 1 and len(state.history) < order - 1:
        return BOOTSTRAP[order](sys, state, dt)
    return STEPPERS[scheme](sys, state, dt)


def integrate(sys, state, dt, n_steps, scheme, callback: Optional[Callable] = None):
    """
    Advance n_steps of size dt. The optional callback receives each new
    state; schemes other than rk4 also get blow-up detection here.
    """
    if dt <= 0.0:
        raise ConfigurationError(f"time step must be positive, got {dt}")
    for _ in range(n_steps):
        state = step(sys, state, dt, scheme)
        if scheme != "rk4":
            _check_finite(state.U, state.t)
        if callback is not None:
            callback(state)
    return state
