"""
Monotone finite-difference operators of the discrete ergodic HJBI residual.

The compiled kernels work on a `Stencil`, a flat tuple of arrays and scalars
assembled once per Problem, and on the raw potential array phi[i, j, l] with a
0-based Erlang index. The public wrappers take a PotentialField and 1-based l.

    residual = h - f(S_j) + drift + advection + nonlocal + switching

Every neighbour enters with a non-positive coefficient and the vertex itself with
the coefficient returned by `diagonal`, which is what the Gauss-Seidel update isolates.
"""
import math
from typing import NamedTuple, Optional, Tuple

import numpy as np
from numba import njit
from scipy import sparse

from src.domain.errors import DomainError, NumericError
from src.domain.problem import PotentialField, Problem

EXP_LIMIT = 700.0


class Stencil(NamedTuple):
    n_q: int
    n_s: int
    n_l: int
    dq: float
    ds: float
    q: np.ndarray            # Q_i
    drift: np.ndarray        # (rho - M1) Q_i - A M1 - rho Q_min
    transport: np.ndarray    # F(Q_i, S_j)
    source: np.ndarray       # f(S_j), or any f(Q_i, S_j)
    weights: np.ndarray      # v_k at index k, index 0 unused
    midpoints: np.ndarray    # z_k at index k
    cum_v: np.ndarray        # sum_{k <= m} v_k at index m
    cum_vz: np.ndarray       # sum_{k <= m} v_k z_k at index m
    cost: np.ndarray         # o + C(j' dS) at index j'
    a_shift: float
    m1: float
    tail: float              # V = int_Qbar^inf z nu(dz)
    rho: float
    q_min: float
    psi: float
    inv_w: float
    switching: bool
    reflect_top: bool        # drift kept on the Q = Qbar row


def assemble(problem: Problem) -> Stencil:
    grid = problem.grid
    model = problem.model
    q = grid.q_nodes
    s = grid.s_nodes
    m1 = model.jump_moment(1)
    drift = (model.rho - m1) * q - model.a_shift * m1 - model.rho * model.q_min

    weights = np.zeros(grid.n_q + 1)
    midpoints = np.zeros(grid.n_q + 1)
    tail = 0.0
    if model.kernel is not None:
        weights[1:] = model.kernel.quadrature_weights(grid.dq, grid.n_q)
        midpoints[1:] = model.kernel.midpoints(grid.dq, grid.n_q)
        tail = model.kernel.tail_first_moment(grid.q_bar)
    cum_v = np.cumsum(weights)
    cum_vz = np.cumsum(weights * midpoints)

    transport = np.asarray(problem.transport.rate(q[:, None], s[None, :]), dtype=float)
    costs = problem.costs
    cost = costs.o + np.asarray(costs.replenishment_cost(s), dtype=float)

    return Stencil(
        n_q=int(grid.n_q), n_s=int(grid.n_s), n_l=int(grid.l_bar),
        dq=float(grid.dq), ds=float(grid.ds),
        q=q, drift=drift,
        transport=np.ascontiguousarray(transport),
        source=np.ascontiguousarray(problem.source_values()),
        weights=weights, midpoints=midpoints, cum_v=cum_v, cum_vz=cum_vz,
        cost=cost,
        a_shift=float(model.a_shift), m1=float(m1), tail=float(tail),
        rho=float(model.rho), q_min=float(model.q_min),
        psi=float(costs.psi),
        inv_w=1.0 / costs.w if problem.switching else 0.0,
        switching=bool(problem.switching),
        reflect_top=grid.top_boundary == 'reflect',
    )


# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _drift(phi, st, i, j, l):
    c = st.drift[i]
    if i == st.n_q:
        if st.reflect_top and c > 0.0:
            return c * (phi[i, j, l] - phi[i - 1, j, l]) / st.dq
        return 0.0
    if c >= 0.0 and i > 0:
        return c * (phi[i, j, l] - phi[i - 1, j, l]) / st.dq
    return c * (phi[i + 1, j, l] - phi[i, j, l]) / st.dq


@njit(cache=True, nogil=True)
def _advect(phi, st, i, j, l):
    if j == 0:
        return 0.0
    return st.transport[i, j] * (phi[i, j, l] - phi[i, j - 1, l]) / st.ds


@njit(cache=True, nogil=True)
def _nonlocal(phi, st, psi, i, j, l):
    """Returns (value, number of clamped exponents)."""
    if i == st.n_q:
        return 0.0, 0
    centre = phi[i, j, l]
    m = st.n_q - i
    total = 0.0
    clamps = 0
    if psi > 0.0:
        for k in range(1, m + 1):
            x = psi * (centre - phi[i + k, j, l])
            if x > EXP_LIMIT:
                x = EXP_LIMIT
                clamps += 1
            elif x < -EXP_LIMIT:
                x = -EXP_LIMIT
                clamps += 1
            total += st.weights[k] * -math.expm1(-x)
        total /= psi
    else:
        for k in range(1, m + 1):
            total += st.weights[k] * (centre - phi[i + k, j, l])
    if i > 0:
        total += st.cum_vz[m] * (centre - phi[i - 1, j, l]) / st.dq
        return (st.q[i] + st.a_shift) * total, clamps
    boundary = st.a_shift * st.tail * (phi[1, j, l] - centre) / st.dq
    return st.a_shift * total + boundary, clamps


@njit(cache=True, nogil=True)
def _switch(phi, st, i, j, l):
    """Returns (value, j', l') with l' 0-based; (j', l') = (-1, -1) when no minimum is taken."""
    if not st.switching:
        return 0.0, -1, -1
    if l > 0:
        return st.inv_w * (phi[i, j, l] - phi[i, j, l - 1]), -1, -1
    best = np.inf
    best_j = 0
    best_l = 0
    for jp in range(st.n_s - j + 1):
        for lp in range(st.n_l):
            candidate = phi[i, j + jp, lp] + st.cost[jp]
            if candidate < best:
                best = candidate
                best_j = jp
                best_l = lp
    return st.inv_w * (phi[i, j, 0] - best), best_j, best_l


@njit(cache=True, nogil=True)
def _diagonal(st, i, j):
    xi = 0.0
    if i < st.n_q:
        m = st.n_q - i
        if i == 0:
            xi += (st.a_shift * (st.m1 - st.tail) + st.rho * st.q_min) / st.dq
            xi += st.a_shift * st.cum_v[m]
        else:
            xi += abs(st.drift[i]) / st.dq
            xi += (st.q[i] + st.a_shift) * (st.cum_v[m] + st.cum_vz[m] / st.dq)
    elif st.reflect_top and st.drift[i] > 0.0:
        xi += st.drift[i] / st.dq
    if j > 0:
        xi += st.transport[i, j] / st.ds
    if st.switching:
        xi += st.inv_w
    return xi


@njit(cache=True, nogil=True)
def _residual(h, phi, st, i, j, l):
    nl, clamps = _nonlocal(phi, st, st.psi, i, j, l)
    sw, _, _ = _switch(phi, st, i, j, l)
    value = h - st.source[i, j] + _drift(phi, st, i, j, l) + _advect(phi, st, i, j, l) + nl + sw
    return value, clamps


@njit(cache=True, nogil=True)
def _sweep_pass(h, phi, st, w, order):
    """One Gauss-Seidel pass; bit 0 of `order` reverses i, bit 1 reverses j."""
    err = 0.0
    clamps = 0
    frozen = 0
    for a in range(st.n_q + 1):
        i = st.n_q - a if order & 1 else a
        for b in range(st.n_s + 1):
            j = st.n_s - b if order & 2 else b
            xi = _diagonal(st, i, j)
            for l in range(st.n_l):
                if i == 0 and j == 0 and l == 0:
                    continue
                if xi <= 0.0:
                    frozen += 1
                    continue
                r, c = _residual(h, phi, st, i, j, l)
                clamps += c
                old = phi[i, j, l]
                new = (1.0 - w) * old + w * (old - r / xi)
                phi[i, j, l] = new
                d = abs(new - old)
                if d > err or d != d:
                    err = d
    return err, clamps, frozen


@njit(cache=True, nogil=True)
def macro_iteration(h, phi, st, w):
    """
    Gauge update of h followed by the four alternating sweeps (in place on phi).
    Returns (h, largest change, clamped exponents, frozen vertex visits).
    """
    r, clamps = _residual(h, phi, st, 0, 0, 0)
    h = h - r
    err = 0.0
    frozen = 0
    for order in range(4):
        e, c, f = _sweep_pass(h, phi, st, w, order)
        clamps += c
        frozen += f
        if e > err or e != e:
            err = e
    return h, err, clamps, frozen


@njit(cache=True, nogil=True)
def max_abs_residual(h, phi, st):
    worst = 0.0
    for i in range(st.n_q + 1):
        for j in range(st.n_s + 1):
            if _diagonal(st, i, j) <= 0.0:
                continue
            for l in range(st.n_l):
                r, _ = _residual(h, phi, st, i, j, l)
                if abs(r) > worst:
                    worst = abs(r)
    return worst


@njit(cache=True, nogil=True)
def switching_argmin(phi, st):
    """Per-(i, j) argmin (j', l') of the observation minimization, l' 0-based."""
    jp = np.zeros((st.n_q + 1, st.n_s + 1), dtype=np.int64)
    lp = np.zeros((st.n_q + 1, st.n_s + 1), dtype=np.int64)
    for i in range(st.n_q + 1):
        for j in range(st.n_s + 1):
            best = np.inf
            for a in range(st.n_s - j + 1):
                for b in range(st.n_l):
                    candidate = phi[i, j + a, b] + st.cost[a]
                    if candidate < best:
                        best = candidate
                        jp[i, j] = a
                        lp[i, j] = b
    return jp, lp


# ---------------------------------------------------------------------------
# Vertex-level operators
# ---------------------------------------------------------------------------

def _checked(field: PotentialField, problem: Problem, i: int, j: int, l: int):
    grid = problem.grid
    if field.values.shape != grid.shape:
        raise DomainError(f"field shape {field.values.shape} does not match grid {grid.shape}")
    if not (0 <= i <= grid.n_q and 0 <= j <= grid.n_s and 1 <= l <= grid.l_bar):
        raise DomainError(f"vertex ({i}, {j}, {l}) outside the grid {grid.shape}")
    return np.ascontiguousarray(field.values, dtype=float), problem.stencil, l - 1


def drift_q_upwind(field: PotentialField, problem: Problem, i: int, j: int, l: int) -> float:
    phi, st, l0 = _checked(field, problem, i, j, l)
    return float(_drift(phi, st, i, j, l0))


def advect_s(field: PotentialField, problem: Problem, i: int, j: int, l: int) -> float:
    phi, st, l0 = _checked(field, problem, i, j, l)
    return float(_advect(phi, st, i, j, l0))


def nonlocal_neutral(field: PotentialField, problem: Problem, i: int, j: int, l: int) -> float:
    phi, st, l0 = _checked(field, problem, i, j, l)
    value, _ = _nonlocal(phi, st, 0.0, i, j, l0)
    return float(value)


def nonlocal_averse(
    field: PotentialField, problem: Problem, psi: float, i: int, j: int, l: int
) -> float:
    if not psi > 0:
        raise DomainError(f"uncertainty aversion must be positive, got {psi}")
    phi, st, l0 = _checked(field, problem, i, j, l)
    value, clamps = _nonlocal(phi, st, float(psi), i, j, l0)
    if clamps:
        raise NumericError(
            f"exponent overflow at vertex ({i}, {j}, {l}): {clamps} terms exceed |psi dPhi| = {EXP_LIMIT}"
        )
    return float(value)


def switching_operator(
    field: PotentialField, problem: Problem, i: int, j: int, l: int
) -> Tuple[float, Optional[Tuple[int, int]]]:
    """(value, (j', l')) at l = 1 with l' 1-based; (value, None) otherwise."""
    phi, st, l0 = _checked(field, problem, i, j, l)
    value, jp, lp = _switch(phi, st, i, j, l0)
    if jp < 0:
        return float(value), None
    return float(value), (int(jp), int(lp) + 1)


def residual(h: float, field: PotentialField, problem: Problem, i: int, j: int, l: int) -> float:
    phi, st, l0 = _checked(field, problem, i, j, l)
    value, clamps = _residual(float(h), phi, st, i, j, l0)
    if clamps:
        raise NumericError(f"exponent overflow at vertex ({i}, {j}, {l})")
    return float(value)


def diagonal(problem: Problem, i: int, j: int) -> float:
    """Coefficient Xi of Phi_{i,j,l} in the residual (identical for every l)."""
    grid = problem.grid
    if not (0 <= i <= grid.n_q and 0 <= j <= grid.n_s):
        raise DomainError(f"vertex ({i}, {j}) outside the grid")
    return float(_diagonal(problem.stencil, i, j))


def merged_boundary_flux(field: PotentialField, problem: Problem, j: int, l: int) -> float:
    """
    Drift plus neutral nonlocal term at Q = 0 written as one flux:
    A sum_k v_k (Phi_0 - Phi_k) + (A (M1 - V) + rho Q_min)(Phi_0 - Phi_1) / dQ.
    """
    phi, st, l0 = _checked(field, problem, 0, j, l)
    column = phi[:, j, l0]
    jumps = np.dot(st.weights[1:], column[0] - column[1:])
    coefficient = st.a_shift * (st.m1 - st.tail) + st.rho * st.q_min
    return float(st.a_shift * jumps + coefficient * (column[0] - column[1]) / st.dq)


def coupling_graph(problem: Problem, field: PotentialField) -> sparse.csr_matrix:
    """
    Directed graph with an edge u -> v whenever the residual at u strictly decreases
    in Phi_v. Vertices are numbered in C order of the (i, j, l) array.
    """
    st = problem.stencil
    shape = problem.grid.shape
    phi = np.ascontiguousarray(field.values, dtype=float)
    jp_star, lp_star = switching_argmin(phi, st) if st.switching else (None, None)
    rows, cols = [], []

    def link(u, v):
        rows.append(np.ravel_multi_index(u, shape))
        cols.append(np.ravel_multi_index(v, shape))

    for i in range(st.n_q + 1):
        for j in range(st.n_s + 1):
            for l in range(st.n_l):
                here = (i, j, l)
                if i == st.n_q and st.reflect_top and st.drift[i] > 0.0:
                    link(here, (i - 1, j, l))
                if i < st.n_q:
                    c = st.drift[i]
                    if c != 0.0:
                        link(here, (i - 1 if c >= 0.0 and i > 0 else i + 1, j, l))
                    for k in range(1, st.n_q - i + 1):
                        if st.weights[k] > 0.0:
                            link(here, (i + k, j, l))
                    if i > 0 and st.cum_vz[st.n_q - i] > 0.0:
                        link(here, (i - 1, j, l))
                if j > 0 and st.transport[i, j] > 0.0:
                    link(here, (i, j - 1, l))
                if st.switching:
                    if l > 0:
                        link(here, (i, j, l - 1))
                    elif (jp_star[i, j], lp_star[i, j]) != (0, 0):
                        link(here, (i, j + jp_star[i, j], lp_star[i, j]))
    n = int(np.prod(shape))
    data = np.ones(len(rows))
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
