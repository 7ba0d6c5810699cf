"""
phi-functions and their action on vectors.

Public functions use the normalization

    phi_0(z) = e^z,   phi_k(z) = int_0^1 e^{(1-s)z} s^{k-1} ds   (k >= 1)

so phi_k(0) = 1/k and z phi_{k+1}(z) + 1 = k phi_k(z). The usual
exponential-integrator functions phi_hat_k (phi_hat_k(0) = 1/k!) relate by
phi_k = (k-1)! phi_hat_k; the Krylov kernel works with phi_hat internally.

phi_combination evaluates sum_k phi_k(tau A) v_k for a large sparse A by
integrating the equivalent linear ODE

    y' = tau A y + sum_k t^{k-1}/(k-1)! w_k,   y(0) = v_0,   w_k = (k-1)! v_k

over [0, 1] with adaptive substeps, each handled by one Krylov projection
built with incomplete orthogonalization against the two latest vectors.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Sequence

import numpy as np
import scipy.linalg

from engine.errors import PhiAccuracyError
from engine.sparse import dense_expm

log = logging.getLogger(__name__)

MAX_PHI_ORDER = 8
MAX_COMBINATION_ORDER = 4
SERIES_RADIUS = 4.0
SERIES_TERMS = 80

# Substep control
SAFETY = 0.9
MAX_GROWTH = 5.0
MAX_SHRINK = 0.2
INITIAL_KRYLOV_DIM = 10
MAX_KRYLOV_DIM = 128
DEFAULT_MIN_SUBSTEP = 1e-10
ORTHOGONALIZATION_DEPTH = 2
LOCAL_TOLERANCE_FRACTION = 0.25
HAPPY_BREAKDOWN = 1e-13


def phi_hat_scalar(k, z):
    """phi_hat_k(z) = sum_j z^j / (j + k)!"""
    if k < 0 or k > MAX_PHI_ORDER:
        raise ValueError(f"phi order must be in [0, {MAX_PHI_ORDER}], got {k}")
    if abs(z) < SERIES_RADIUS:
        term = 1.0 / math.factorial(k)
        total = term
        for j in range(1, SERIES_TERMS):
            term = term * z / (j + k)
            total = total + term
            if abs(term) <= 1e-17 * abs(total):
                break
        return total
    value = np.exp(z)
    for j in range(1, k + 1):
        value = (value - 1.0 / math.factorial(j - 1)) / z
    return value


def phi_scalar(k, z):
    """phi_k(z) with phi_k(0) = 1/k"""
    if k == 0:
        return phi_hat_scalar(0, z)
    return math.factorial(k - 1) * phi_hat_scalar(k, z)


def phi_dense(k, A):
    """phi_k(A) for a small dense matrix, from one augmented exponential"""
    A = np.asarray(A, dtype=float)
    if k < 0 or k > MAX_PHI_ORDER:
        raise ValueError(f"phi order must be in [0, {MAX_PHI_ORDER}], got {k}")
    n = A.shape[0]
    if k == 0:
        return dense_expm(A)
    M = np.zeros((n * (k + 1), n * (k + 1)))
    M[:n, :n] = A
    eye = np.eye(n)
    for b in range(k):
        M[b * n:(b + 1) * n, (b + 1) * n:(b + 2) * n] = eye
    E = scipy.linalg.expm(M)
    return math.factorial(k - 1) * E[:n, k * n:(k + 1) * n]


def phi_combination_dense(A, vectors, scale=1.0):
    """sum_k phi_k(scale A) v_k from the (n+p)x(n+p) augmented matrix"""
    A = scale * np.asarray(A, dtype=float)
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    n = A.shape[0]
    p = len(vectors) - 1
    if p == 0:
        return dense_expm(A) @ vectors[0]
    M = np.zeros((n + p, n + p))
    M[:n, :n] = A
    # columns ordered w_p, ..., w_1 with w_k = (k-1)! v_k
    for col, k in enumerate(range(p, 0, -1)):
        M[:n, n + col] = math.factorial(k - 1) * vectors[k]
    for r in range(p - 1):
        M[n + r, n + r + 1] = 1.0
    start = np.zeros(n + p)
    start[:n] = vectors[0]
    start[n + p - 1] = 1.0
    return (scipy.linalg.expm(M) @ start)[:n]


def _as_operator(operator):
    if callable(operator) and not hasattr(operator, "dot"):
        return operator
    return lambda x: operator @ x


@dataclass
class PhiCombinationRequest:
    operator: Callable
    vectors: Sequence[np.ndarray]
    scale: float = 1.0
    tolerance: float = 1e-8
    max_krylov_dim: int = MAX_KRYLOV_DIM
    min_substep: float = DEFAULT_MIN_SUBSTEP
    initial_krylov_dim: int = INITIAL_KRYLOV_DIM

    def __post_init__(self):
        if not 1 <= len(self.vectors) <= MAX_COMBINATION_ORDER + 1:
            raise ValueError(f"need between 1 and {MAX_COMBINATION_ORDER + 1} vectors, got {len(self.vectors)}")
        self.vectors = [np.asarray(v, dtype=float) for v in self.vectors]
        n = self.vectors[0].shape
        if any(v.shape != n or v.ndim != 1 for v in self.vectors):
            raise ValueError("all vectors must be 1-D with the same length")
        if not self.tolerance > 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_krylov_dim < 1 or self.initial_krylov_dim < 1:
            raise ValueError("Krylov dimensions must be positive")

    @property
    def dim(self):
        return self.vectors[0].shape[0]

    @property
    def order(self):
        return len(self.vectors) - 1


@dataclass
class KrylovWorkspace:
    """Basis, projection and substep bookkeeping of one evaluation"""
    basis: List[np.ndarray] = field(default_factory=list)
    hessenberg: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    t: float = 0.0
    accepted: int = 0
    rejected: int = 0
    matvecs: int = 0
    dims: List[int] = field(default_factory=list)

    def reset(self):
        self.basis = []
        self.hessenberg = np.zeros((0, 0))
        self.t = 0.0


def _extend_basis(apply_a, ws, m_target, m_cap):
    """
    Grow the IOM-2 basis until the projection has m_target columns.
    Returns True on happy breakdown (the subspace is invariant).
    """
    V = ws.basis
    if ws.hessenberg.shape[0] < m_cap + 1:
        grown = np.zeros((m_cap + 1, m_cap))
        old = ws.hessenberg
        grown[:old.shape[0], :old.shape[1]] = old
        ws.hessenberg = grown
    H = ws.hessenberg
    j = len(V) - 1
    while j < m_target:
        w = apply_a(V[j])
        ws.matvecs += 1
        w_norm = np.linalg.norm(w)
        for i in range(max(0, j - ORTHOGONALIZATION_DEPTH + 1), j + 1):
            H[i, j] = float(V[i] @ w)
            w = w - H[i, j] * V[i]
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] <= HAPPY_BREAKDOWN * w_norm:
            H[j + 1, j] = 0.0
            return True
        V.append(w / H[j + 1, j])
        j += 1
    return False


def _projected_phi(H_m, tau, p):
    """
    phi_hat_p(tau H) e_1 and phi_hat_{p+1}(tau H) e_1 for the projected
    matrix, read from one augmented exponential.
    """
    m = H_m.shape[0]
    M = np.zeros((m + p + 1, m + p + 1))
    M[:m, :m] = tau * H_m
    M[0, m] = 1.0
    for r in range(p):
        M[m + r, m + r + 1] = 1.0
    E = scipy.linalg.expm(M)
    phi_p = E[:m, 0] if p == 0 else E[:m, m + p - 1]
    return phi_p, E[:m, m + p]


def _polynomial_part(hats, tau, p, n):
    """sum_{j<p} tau^j / j! hats_j"""
    head = np.zeros(n)
    for j in range(p):
        head += (tau ** j / math.factorial(j)) * hats[j]
    return head


def phi_combination(req, workspace=None):
    """
    y ~ sum_k phi_k(scale A) v_k with ||y - exact|| <= tolerance ||y||.

    Each substep [t, t + tau] uses

        sum_j tau^j phi_hat_j(tau A) w_j(t)
            = sum_{j<p} tau^j / j! c_j + tau^p phi_hat_p(tau A) c_p

    with c_0 = y(t) and c_j = A c_{j-1} + w_j(t), so a single Krylov
    space (for c_p) serves all p + 1 terms. Raises PhiAccuracyError,
    carrying the partial result, when the substep would fall below
    min_substep.
    """
    ws = workspace if workspace is not None else KrylovWorkspace()
    ws.reset()
    base_op = _as_operator(req.operator)
    scale = float(req.scale)

    def apply_a(x):
        return scale * np.asarray(base_op(x), dtype=float)

    n = req.dim
    p = req.order
    w = [req.vectors[0]] + [math.factorial(k - 1) * req.vectors[k] for k in range(1, p + 1)]
    reference = max(np.linalg.norm(v) for v in w)
    if reference == 0.0:
        return np.zeros(n)
    m_cap = max(1, min(req.max_krylov_dim, n))
    m_init = min(req.initial_krylov_dim, m_cap)

    u = w[0].copy()
    t = 0.0
    tau = 1.0
    while t < 1.0:
        tau = min(tau, 1.0 - t)
        # forcing re-expanded about t: w_j(t) = sum_l t^l / l! w_{j+l}
        shifted = [u]
        for j in range(1, p + 1):
            wj = np.zeros(n)
            for l in range(p - j + 1):
                wj += (t ** l / math.factorial(l)) * w[j + l]
            shifted.append(wj)
        hats = [shifted[0]]
        for j in range(1, p + 1):
            hats.append(apply_a(hats[-1]) + shifted[j])
            ws.matvecs += 1
        b = hats[p]
        beta = np.linalg.norm(b)

        if beta == 0.0:
            # no Krylov part: the substep is a polynomial in tau
            tau = 1.0 - t
            u = _polynomial_part(hats, tau, p, n) if p > 0 else np.zeros(n)
            ws.accepted += 1
            break

        ws.basis = [b / beta]
        ws.hessenberg = np.zeros((0, 0))
        breakdown = _extend_basis(apply_a, ws, m_init, m_cap)
        while True:
            m_eff = len(ws.basis) if breakdown else len(ws.basis) - 1
            H_m = ws.hessenberg[:m_eff, :m_eff]
            phi_p, phi_next = _projected_phi(H_m, tau, p)
            V = np.column_stack(ws.basis[:m_eff])
            candidate = V @ (beta * tau ** p * phi_p)
            if p > 0:
                candidate += _polynomial_part(hats, tau, p, n)
            if breakdown:
                err = 0.0
            else:
                err = beta * tau ** (p + 1) * ws.hessenberg[m_eff, m_eff - 1] * abs(phi_next[m_eff - 1])
            allowed = LOCAL_TOLERANCE_FRACTION * req.tolerance * tau * max(
                np.linalg.norm(candidate), 1e-8 * reference)
            if err <= allowed:
                break
            ws.rejected += 1
            order = max(1.0, m_eff / 4.0)
            shrink = min(SAFETY, max(MAX_SHRINK, SAFETY * (allowed / err) ** (1.0 / order)))
            if m_eff < m_cap and shrink < 0.5:
                target = min(m_cap, int(math.ceil(1.4 * m_eff)) + 1)
                breakdown = _extend_basis(apply_a, ws, target, m_cap)
                continue
            if tau * shrink < req.min_substep:
                raise PhiAccuracyError(candidate, err / max(np.linalg.norm(candidate), 1e-300))
            tau *= shrink

        u = candidate
        final = tau >= 1.0 - t
        t = 1.0 if final else t + tau
        ws.t = t
        ws.accepted += 1
        ws.dims.append(m_eff)
        if breakdown or err == 0.0:
            tau = 1.0
        else:
            order = max(1.0, m_eff / 4.0)
            tau *= min(MAX_GROWTH, max(1.0, SAFETY * (allowed / err) ** (1.0 / order)))

    log.debug("phi combination: %d substeps (%d rejected), %d matvecs, largest basis %d",
              ws.accepted, ws.rejected, ws.matvecs, max(ws.dims) if ws.dims else 0)
    return u
