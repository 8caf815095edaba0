"""
Reference solutions of the regularized bar
==========================================

Peak damage versus elongation, stress, damage and displacement profiles for
a bar of length ``L`` pulled symmetrically by ``u(+-L/2) = +-U/2``.

Phase-field profiles are defined implicitly by

    dd/dx = -H(d, d0) / lc,   H = sqrt((2d - d^2) (1 - ((1-d0)/(1-d))^2)).

With ``t^2 = 2d - d^2`` and ``t = sqrt(alpha(d0)) sin(theta)`` the measure
``dd/H`` becomes ``d theta``, which gives closed forms for the profile and the
displacement. Independent adaptive-quadrature routes (endpoint singularities
removed by substitution) are kept for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import MaterialParams, ModelKind, alpha_v, derive, omega_v

QUAD_RTOL = 1e-9


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class AnalyticSolution:
    model: ModelKind
    params: MaterialParams
    d0: float
    U: float

    @classmethod
    def at(cls, model, params: MaterialParams, U: float) -> "AnalyticSolution":
        model = ModelKind.parse(model)
        return cls(model, params, d0_of_U(model, U, params), U)

    @property
    def sigma(self) -> float:
        return stress_of_U(self.model, self.U, self.params)

    def damage(self, x):
        return damage_profile(self.model, self.d0, x, self.params)

    def displacement(self, x):
        return exact_displacement(self.model, self.U, x, self.params)


# ---------------------------------------------------------------------------
# Global response
# ---------------------------------------------------------------------------

def d0_of_U(model, U: float, params: MaterialParams) -> float:
    """Peak damage reached under elongation ``U``."""
    model = ModelKind.parse(model)
    dp = derive(params)
    if U <= dp.Uc:
        return 0.0
    if U >= dp.wc:
        return 1.0
    t = (U - dp.Uc) / (dp.wc - dp.Uc)
    return t if model is ModelKind.PHASE else math.sqrt(t)


def U_of_d0(model, d0: float, params: MaterialParams) -> float:
    """Elongation at which the peak damage equals ``d0`` (inverse of :func:`d0_of_U`)."""
    model = ModelKind.parse(model)
    if not 0.0 <= d0 <= 1.0:
        raise ValueError(f"d0 must lie in [0, 1], got {d0}")
    dp = derive(params)
    t = d0 if model is ModelKind.PHASE else d0 * d0
    return dp.Uc + t * (dp.wc - dp.Uc)


def stress_of_d0(model, d0: float, params: MaterialParams) -> float:
    """``sigc (1 - d0)`` for phase-field, ``sigc (1 - d0^2)`` for lip-field."""
    model = ModelKind.parse(model)
    if not 0.0 <= d0 <= 1.0:
        raise ValueError(f"d0 must lie in [0, 1], got {d0}")
    if model is ModelKind.PHASE:
        return params.sigc * (1.0 - d0)
    return params.sigc * (1.0 - d0 * d0)


def stress_of_U(model, U: float, params: MaterialParams) -> float:
    dp = derive(params)
    if U <= dp.Uc:
        return params.E * U / params.L
    return stress_of_d0(model, d0_of_U(model, U, params), params)


def cohesive_law(w, params: MaterialParams):
    """Linear traction-opening law ``sigc (1 - w/wc)`` on ``[0, wc]``."""
    wc = derive(params).wc
    arr = np.asarray(w, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > wc * (1.0 + 1e-12)):
        raise ValueError("opening must lie in [0, wc]")
    out = params.sigc * (1.0 - arr / wc)
    return float(out) if np.ndim(w) == 0 else out


# ---------------------------------------------------------------------------
# Phase-field kernel and quadrature helpers
# ---------------------------------------------------------------------------

def H_kernel(d, d0: float):
    """``sqrt((2d - d^2)(1 - ((1-d0)/(1-d))^2))`` for ``0 <= d <= d0``, ``d < 1``."""
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > d0 * (1.0 + 1e-15)) or np.any(arr >= 1.0):
        raise ValueError(f"H_kernel needs 0 <= d <= d0 and d < 1 (d={d!r}, d0={d0})")
    arr = np.minimum(arr, d0)
    ratio = (1.0 - d0) / (1.0 - arr)
    out = np.sqrt(np.maximum((2.0 * arr - arr * arr) * (1.0 - ratio * ratio), 0.0))
    return float(out) if np.ndim(d) == 0 else out


def _quad(fun, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    val, err, *info = integrate.quad(fun, a, b, epsabs=0.0, epsrel=QUAD_RTOL,
                                     limit=200, full_output=1)
    if not np.isfinite(val) or err > 1e-7 * max(abs(val), 1e-300):
        raise QuadratureError(f"quadrature on [{a}, {b}] reached only {err:.3e} "
                              f"(value {val:.6e})")
    return val


def _pf_weighted_integral(g, lo: float, d0: float) -> float:
    """``int_lo^d0 g(d) / H(d, d0) dd`` with both endpoint singularities removed."""
    if lo >= d0:
        return 0.0
    mid = 0.5 * d0
    c2 = (1.0 - d0) ** 2
    total = 0.0
    if lo < mid:
        # lower part: t^2 = 2d - d^2, dd/H = dt / sqrt(1 - t^2 - (1-d0)^2)
        def low(t):
            dd = 1.0 - math.sqrt(max(1.0 - t * t, 0.0))
            return g(dd) / math.sqrt(max(1.0 - t * t - c2, 1e-300))
        total += _quad(low, math.sqrt(2.0 * lo - lo * lo), math.sqrt(2.0 * mid - mid * mid))
        lo = mid

    # upper part: d = d0 - s^2, dd/H = 2 (1-d) ds / (sqrt(2d - d^2) sqrt(2 - d0 - d))
    def up(s):
        dd = d0 - s * s
        return g(dd) * 2.0 * (1.0 - dd) / (math.sqrt(2.0 * dd - dd * dd) * math.sqrt(2.0 - d0 - dd))
    total += _quad(up, 0.0, math.sqrt(d0 - lo))
    return total


def pf_position_of_damage(d: float, d0: float, lc: float) -> float:
    """Distance from the centre at which the phase-field profile equals ``d`` (quadrature)."""
    if not 0.0 <= d <= d0 <= 1.0:
        raise ValueError("need 0 <= d <= d0 <= 1")
    return lc * _pf_weighted_integral(lambda _: 1.0, d, d0)


# ---------------------------------------------------------------------------
# Damage profiles
# ---------------------------------------------------------------------------

def band_halfwidth(model, d0: float, params: MaterialParams) -> float:
    """Half-width of the damaged zone (phase-field value by quadrature)."""
    model = ModelKind.parse(model)
    if not 0.0 < d0 <= 1.0:
        raise ValueError(f"d0 must lie in (0, 1], got {d0}")
    if model is ModelKind.LIP:
        return d0 * params.lc
    return pf_position_of_damage(0.0, d0, params.lc)


def _check_x(x, params: MaterialParams) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > 0.5 * params.L * (1.0 + 1e-12)):
        raise ValueError("position outside the bar")
    return arr


def damage_profile(model, d0: float, x, params: MaterialParams):
    """Reference damage field ``d(x)`` for peak value ``d0``."""
    model = ModelKind.parse(model)
    if not 0.0 <= d0 <= 1.0:
        raise ValueError(f"d0 must lie in [0, 1], got {d0}")
    ax = np.abs(_check_x(x, params))
    lc = params.lc
    if model is ModelKind.LIP:
        out = np.maximum(d0 - ax / lc, 0.0)
    elif d0 == 1.0:
        out = np.where(ax < 0.5 * math.pi * lc, 1.0 - np.sin(np.minimum(ax / lc, 0.5 * math.pi)), 0.0)
    else:
        # alpha(d(x)) = alpha(d0) cos^2(x/lc) inside the band
        a0 = 2.0 * d0 - d0 * d0
        theta = np.minimum(ax / lc, 0.5 * math.pi)
        cos, sin = np.cos(theta), np.sin(theta)
        z = a0 * cos * cos
        near_edge = z / (1.0 + np.sqrt(1.0 - z))
        # d0 - d written without cancellation for the part close to the peak
        q = 1.0 - d0
        drop = a0 * sin * sin / (np.sqrt(q * q + a0 * sin * sin) + q)
        out = np.where(near_edge < 0.5 * d0, near_edge, d0 - drop)
        out = np.where(ax < 0.5 * math.pi * lc, np.minimum(out, d0), 0.0)
    return float(out) if np.ndim(x) == 0 else out


# ---------------------------------------------------------------------------
# Displacement fields
# ---------------------------------------------------------------------------

def _pf_compliance_closed(theta, d0: float, gamma: float):
    # int_theta^{pi/2} dphi / omega(d(phi)), with 1/omega = 1 + k (1/(1 - b^2 sin^2) - 1)
    k = 2.0 / (math.pi * gamma)
    q = 1.0 - d0
    jt = np.arctan2(q * np.sin(theta), np.cos(theta)) / q
    jhalf = 0.5 * math.pi / q
    span = 0.5 * math.pi - theta
    return span * (1.0 - k) + k * (jhalf - jt)


def _pf_compliance_quad(d: float, d0: float, gamma: float) -> float:
    model = ModelKind.PHASE
    return _pf_weighted_integral(lambda s: 1.0 / float(omega_v(model, s, gamma)), d, d0)


def displacement_profile(model, d0: float, x, params: MaterialParams, *,
                         U: float | None = None, method: str = "closed"):
    """
    Reference displacement field for peak damage ``d0``.

    ``d0 = 0`` is the elastic bar and needs ``U`` (defaults to the onset
    elongation); ``d0 = 1`` is the broken bar, two rigid halves at
    ``+-U/2`` with ``U`` defaulting to ``wc``. ``method='quad'`` evaluates the
    phase-field compliance integral by adaptive quadrature instead of the
    closed form.
    """
    model = ModelKind.parse(model)
    if not 0.0 <= d0 <= 1.0:
        raise ValueError(f"d0 must lie in [0, 1], got {d0}")
    xa = _check_x(x, params)
    dp = derive(params)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(xa)
    sgn = np.sign(xa)
    ax = np.abs(xa)
    lc = params.lc

    if d0 == 0.0:
        Ue = dp.Uc if U is None else U
        out = Ue * xa / params.L
    elif d0 == 1.0:
        Ue = dp.wc if U is None else U
        out = 0.5 * Ue * sgn
    elif model is ModelKind.LIP:
        sig = stress_of_d0(model, d0, params)
        dl = np.maximum(d0 - ax / lc, 0.0)
        inner = lc * (d0 - dl + (1.0 / dp.gamma) * (1.0 / (1.0 - d0 * d0) - 1.0 / (1.0 - dl * dl)))
        inner = inner + np.maximum(ax - d0 * lc, 0.0)
        out = sgn * sig / params.E * inner
    else:
        sig = stress_of_d0(model, d0, params)
        band = 0.5 * math.pi * lc
        inb = np.minimum(ax, band)
        if method == "closed":
            theta = 0.5 * math.pi - inb / lc
            comp = _pf_compliance_closed(theta, d0, dp.gamma)
        elif method == "quad":
            dloc = np.atleast_1d(damage_profile(model, d0, inb, params))
            comp = np.array([_pf_compliance_quad(min(v, d0), d0, dp.gamma) for v in dloc])
        else:
            raise ValueError(f"unknown method {method!r}")
        out = sgn * sig / params.E * (lc * comp + np.maximum(ax - band, 0.0))
    return float(out[0]) if scalar else out


def exact_displacement(model, U: float, x, params: MaterialParams):
    """Reference displacement for imposed elongation ``U`` (any regime)."""
    d0 = d0_of_U(model, U, params)
    return displacement_profile(model, d0, x, params, U=U)
