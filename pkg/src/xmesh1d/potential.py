"""
Discrete incremental potential
==============================

With the displacement eliminated, the one-point-integrated potential of the
half model reads

    F(d, h; U) = Fe(U) K(d, h) + Gc W(d, h),       Fe(U) = E U^2 / (2 L)

    K = L / (h_0/w(d_0) + 2 sum_i h_i / w(dbar_i))
    W = (h_0 a(d_0) + 2 sum_i [h_i a(dbar_i) + r lc^2 (d_{i+1}-d_i)^2 / h_i]) / (c lc)

where ``dbar_i`` is the element-average damage. Gradients with respect to
nodal damage and element sizes are returned analytically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import H_MIN_FACTOR, node_positions
from .model import (MaterialParams, ModelKind, alpha_v, dalpha_v, ddalpha_v, ddomega_v,
                    derive, domega_v, omega_v)


@dataclass
class PotentialEval:
    value: float
    K: float
    W: float
    sigma: float
    grad_d: np.ndarray | None = None
    grad_h: np.ndarray | None = None


def elastic_energy(U: float, params: MaterialParams) -> float:
    """``Fe(U) = E U^2 / (2 L)``: energy per unit area of the intact bar."""
    return 0.5 * params.E * U * U / params.L


def element_damage(d) -> np.ndarray:
    """Element averages; the central element carries ``d[0]`` by symmetry."""
    d = np.asarray(d, dtype=float)
    return np.concatenate((d[:1], 0.5 * (d[:-1] + d[1:])))


def _mult(n_el: int) -> np.ndarray:
    m = np.full(n_el, 2.0)
    m[0] = 1.0
    return m


def _prepare(d, h):
    d = np.asarray(d, dtype=float)
    h = np.asarray(h, dtype=float)
    if d.shape != h.shape or d.ndim != 1 or d.size < 2:
        raise ValueError("d and h must be 1-d arrays of equal length >= 2")
    return d, h


def k_factor(d, h, model, params: MaterialParams) -> float:
    """Effective stiffness ratio ``K`` in ``[0, 1]``; a fully broken element gives 0."""
    return evaluate(d, h, 0.0, model, params, grad=False).K


def w_dissipation(d, h, model, params: MaterialParams) -> float:
    """Dimensionless dissipation ``W`` (``Gc W`` is the dissipated energy per area)."""
    model = ModelKind.parse(model)
    d, h = _prepare(d, h)
    if model.r and np.any((h[1:] < H_MIN_FACTOR * params.L) & (np.diff(d) != 0.0)):
        raise ValueError("damage jump across an element below the size floor (infeasible)")
    return evaluate(d, h, 0.0, model, params, grad=False).W


def evaluate(d, h, U: float, model, params: MaterialParams, grad: bool = True) -> PotentialEval:
    """Value of ``F`` with ``K``, ``W``, the uniform stress and optionally the gradients."""
    model = ModelKind.parse(model)
    d, h = _prepare(d, h)
    gamma = derive(params).gamma
    lc, c, r = params.lc, model.c, model.r
    m = _mult(h.size)

    db = element_damage(d)
    om = omega_v(model, db, gamma)
    al = alpha_v(model, db)
    jump = np.diff(d)

    broken = om <= 0.0
    if np.any(broken):
        K = 0.0
        S = np.inf
    else:
        S = float(np.sum(m * h / om))
        K = params.L / S

    W = float(np.sum(m * h * al)) / (c * lc)
    if r:
        W += 2.0 * r * lc / c * float(np.sum(jump * jump / h[1:]))

    fe = elastic_energy(U, params)
    value = fe * K + params.Gc * W
    sigma = params.E * K * U / params.L
    out = PotentialEval(value, K, W, sigma)
    if not grad:
        return out

    if K > 0.0:
        k2 = K * K / params.L
        dK_dh = -k2 * m / om
        dK_db = k2 * m * h * domega_v(model, db, gamma) / (om * om)
    else:
        dK_dh = np.zeros_like(h)
        dK_db = np.zeros_like(h)

    dW_dh = m * al / (c * lc)
    dW_db = m * h * dalpha_v(model, db) / (c * lc)
    dW_djump = np.zeros(jump.size)
    if r:
        dW_dh[1:] -= 2.0 * r * lc / c * jump * jump / (h[1:] * h[1:])
        dW_djump = 4.0 * r * lc / c * jump / h[1:]

    g_db = fe * dK_db + params.Gc * dW_db
    g_d = np.zeros_like(d)
    g_d[0] += g_db[0]
    g_d[:-1] += 0.5 * g_db[1:]
    g_d[1:] += 0.5 * g_db[1:]
    g_jump = params.Gc * dW_djump
    g_d[1:] += g_jump
    g_d[:-1] -= g_jump

    out.grad_d = g_d
    out.grad_h = fe * dK_dh + params.Gc * dW_dh
    return out


def f_potential(d, h, U: float, model, params: MaterialParams) -> PotentialEval:
    """Potential, stiffness ratio, dissipation, stress and analytic gradients."""
    return evaluate(d, h, U, model, params, grad=True)


def hessian(d, h, U: float, model, params: MaterialParams) -> np.ndarray:
    """
    Hessian of ``F`` with respect to ``(d, h)`` (nodal damage first).

    With a fully broken element ``K`` is identically zero, as in
    :func:`evaluate`, and only the dissipation contributes.
    """
    model = ModelKind.parse(model)
    d, h = _prepare(d, h)
    gamma = derive(params).gamma
    lc, c, r, L = params.lc, model.c, model.r, params.L
    n1 = d.size
    m = _mult(n1)
    db = element_damage(d)
    om = omega_v(model, db, gamma)
    fe = elastic_energy(U, params)
    i = np.arange(n1)
    HK = np.zeros((2 * n1, 2 * n1))
    if np.all(om > 0.0):
        dom = domega_v(model, db, gamma)
        ddom = ddomega_v(model, db, gamma)
        # compliance sum S and its derivatives in (dbar, h)
        S = float(np.sum(m * h / om))
        gS = np.concatenate((-m * h * dom / om**2, m / om))
        HS = np.zeros((2 * n1, 2 * n1))
        HS[i, i] = -m * h * (ddom * om - 2.0 * dom * dom) / om**3
        HS[i, n1 + i] = HS[n1 + i, i] = -m * dom / om**2
        HK = 2.0 * L / S**3 * np.outer(gS, gS) - L / S**2 * HS

    HW = np.zeros((2 * n1, 2 * n1))
    HW[i, i] = m * h * ddalpha_v(model, db) / (c * lc)
    HW[i, n1 + i] = HW[n1 + i, i] = m * dalpha_v(model, db) / (c * lc)

    P = np.zeros((n1, n1))
    P[0, 0] = 1.0
    P[i[1:], i[1:] - 1] = 0.5
    P[i[1:], i[1:]] = 0.5
    T = np.zeros((2 * n1, 2 * n1))
    T[:n1, :n1] = P
    T[n1:, n1:] = np.eye(n1)
    H = T.T @ (fe * HK + params.Gc * HW) @ T

    if r:
        jump = np.diff(d)
        hh = h[1:]
        coef = 2.0 * r * lc / c * params.Gc
        D = np.zeros((n1 - 1, n1))
        D[i[:-1], i[1:]] = 1.0
        D[i[:-1], i[:-1]] = -1.0
        H[:n1, :n1] += D.T @ np.diag(coef * 2.0 / hh) @ D
        cross = D.T * (coef * -2.0 * jump / hh**2)
        H[:n1, n1 + 1:] += cross
        H[n1 + 1:, :n1] += cross.T
        H[n1 + i[1:], n1 + i[1:]] += coef * 2.0 * jump**2 / hh**3
    return H


class AmbiguousBreakError(ValueError):
    """More than one element of the half model is fully broken."""


def displacement_from(d, h, U: float, model, params: MaterialParams) -> np.ndarray:
    """
    Nodal displacements ``u_1..u_{n+1}`` of the right half (left half is ``-u``).

    Intact bars carry the uniform stress ``E K U / L``. With a broken element
    the stress vanishes, intact elements keep zero strain and the whole
    elongation opens across the broken element.
    """
    model = ModelKind.parse(model)
    d, h = _prepare(d, h)
    gamma = derive(params).gamma
    om = omega_v(model, element_damage(d), gamma)
    broken = np.flatnonzero(om <= 0.0)
    u = np.empty(d.size)
    if broken.size == 0:
        ev = evaluate(d, h, U, model, params, grad=False)
        strain = ev.sigma / (params.E * om)
        u[0] = 0.5 * strain[0] * h[0]
        u[1:] = u[0] + np.cumsum(strain[1:] * h[1:])
    elif broken.size == 1:
        k = int(broken[0])
        # the opening across the broken element pair sums to U
        u[:] = 0.5 * U
        if k > 0:
            u[:k] = 0.0
    else:
        raise AmbiguousBreakError(f"elements {broken.tolist()} are all broken")
    u[-1] = 0.5 * U
    return u


def element_stress(d, h, u, model, params: MaterialParams) -> np.ndarray:
    """Per-element stress ``E w(dbar) (u_{i+1}-u_i)/h_i`` from nodal displacements."""
    model = ModelKind.parse(model)
    om = omega_v(model, element_damage(d), derive(params).gamma)
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    du = np.concatenate(([2.0 * u[0]], np.diff(u)))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(h > 0.0, params.E * om * du / h, 0.0)


def grad_check(d, h, U: float, model, params: MaterialParams, mode: str = "xmesh",
               rel_step: float = 1e-6) -> float:
    """
    Largest discrepancy between analytic and central-difference gradients.

    The discrepancy is measured relative to the largest gradient component.
    Only strictly interior points are accepted (``0 < d < 1``, element sizes
    above ten times the floor).
    """
    model = ModelKind.parse(model)
    d, h = _prepare(d, h)
    if np.any(d <= 0.0) or np.any(d >= 1.0):
        raise ValueError("grad_check needs 0 < d < 1 at every node")
    if np.any(h <= 10.0 * H_MIN_FACTOR * params.L):
        raise ValueError("grad_check needs element sizes well above the floor")
    if mode not in ("fixed", "xmesh"):
        raise ValueError(f"unknown mode {mode!r}")

    ev = evaluate(d, h, U, model, params)
    analytic = ev.grad_d if mode == "fixed" else np.concatenate((ev.grad_d, ev.grad_h))
    x0 = np.concatenate((d, h))
    nvar = d.size if mode == "fixed" else x0.size
    fd = np.empty(nvar)
    for j in range(nvar):
        step = rel_step * abs(x0[j])
        xp, xm = x0.copy(), x0.copy()
        xp[j] += step
        xm[j] -= step
        fp = evaluate(xp[:d.size], xp[d.size:], U, model, params, grad=False).value
        fm = evaluate(xm[:d.size], xm[d.size:], U, model, params, grad=False).value
        fd[j] = (fp - fm) / (2.0 * step)
    scale = max(float(np.max(np.abs(analytic))), 1e-300)
    return float(np.max(np.abs(analytic - fd)) / scale)


__all__ = [
    "PotentialEval", "elastic_energy", "element_damage", "k_factor", "w_dissipation",
    "evaluate", "f_potential", "hessian", "displacement_from", "element_stress", "grad_check",
    "node_positions", "AmbiguousBreakError",
]
