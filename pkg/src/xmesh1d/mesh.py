"""
Symmetric half-bar mesh
=======================

Only the right half of the bar is stored. Element 0 is the central element
of size ``h[0]`` straddling ``x = 0``; elements ``i = 1..n`` have sizes
``h[i]``. Nodes ``x[0..n]`` sit at ``h[0]/2, h[0]/2 + h[1], ...`` with the
last one at ``L/2``. Nodal damage ``d[0..n]`` lives on those nodes; the
mirror image supplies the left half, so the central element carries the
constant damage ``d[0]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import MaterialParams, ModelKind

H_MIN_FACTOR = 1e-12   # element-size floor relative to L
CLOSURE_TOL = 1e-12    # length-closure tolerance relative to L


def node_positions(h, L: float | None = None) -> np.ndarray:
    """Node coordinates ``x_1..x_{n+1}`` implied by element sizes ``h``."""
    h = np.asarray(h, dtype=float)
    x = 0.5 * h[0] + np.concatenate(([0.0], np.cumsum(h[1:])))
    if L is not None:
        closure = x[-1] - 0.5 * L
        if abs(closure) > CLOSURE_TOL * L:
            raise ValueError(f"element sizes do not close the bar (mismatch {closure:.3e} m)")
        x[-1] = 0.5 * L
    return x


def length_residual(h, L: float) -> float:
    h = np.asarray(h, dtype=float)
    return float(h[0] + 2.0 * h[1:].sum() - L)


@dataclass
class HalfMesh:
    """Element sizes of the half model plus the bar length."""

    h: np.ndarray
    L: float

    def __post_init__(self):
        self.h = np.array(self.h, dtype=float)
        if self.h.ndim != 1 or self.h.size < 2:
            raise ValueError("need at least the central element and one side element")
        if np.any(self.h < 0.0):
            raise ValueError("element sizes must be non-negative")
        if abs(length_residual(self.h, self.L)) > CLOSURE_TOL * self.L:
            raise ValueError("element sizes do not sum to the bar length")

    @property
    def n(self) -> int:
        return self.h.size - 1

    @property
    def x(self) -> np.ndarray:
        return node_positions(self.h, self.L)

    @property
    def h_min(self) -> float:
        return H_MIN_FACTOR * self.L

    def midpoints(self) -> np.ndarray:
        """Element centres ``(x_i + x_{i+1})/2`` for i >= 1 and 0 for the central element."""
        x = self.x
        return np.concatenate(([0.0], 0.5 * (x[:-1] + x[1:])))

    def full_nodes(self) -> np.ndarray:
        x = self.x
        return np.concatenate((-x[::-1], x))

    def copy(self) -> "HalfMesh":
        return HalfMesh(self.h.copy(), self.L)


@dataclass
class DamageField:
    """Nodal damage on the half model; ``d[0]`` is the peak value d0."""

    d: np.ndarray

    def __post_init__(self):
        self.d = np.array(self.d, dtype=float)

    @property
    def d0(self) -> float:
        return float(self.d[0])

    def full(self) -> np.ndarray:
        return np.concatenate((self.d[::-1], self.d))


@dataclass
class PrevSnapshot:
    """Converged state of the previous increment (irreversibility reference)."""

    x: np.ndarray
    d: np.ndarray
    h: np.ndarray

    @classmethod
    def of(cls, mesh: HalfMesh, field_: DamageField) -> "PrevSnapshot":
        return cls(mesh.x.copy(), field_.d.copy(), mesh.h.copy())


def target_size(model: ModelKind, params: MaterialParams, n_c: int) -> float:
    model = ModelKind.parse(model)
    width = 0.5 * math.pi * params.lc if model is ModelKind.PHASE else params.lc
    return width / n_c


def build_uniform(model, params: MaterialParams, n_c: int) -> HalfMesh:
    """
    Uniform mesh with about ``n_c`` elements across the fully damaged width.

    The element count is the odd integer closest to ``L/h*``.
    """
    if int(n_c) != n_c or n_c < 1:
        raise ValueError(f"n_c must be a positive integer, got {n_c!r}")
    ratio = params.L / target_size(model, params, int(n_c))
    n_el = 2 * int(math.floor((ratio - 1.0) / 2.0 + 0.5)) + 1
    if n_el < 3:
        raise ValueError(f"mesh would have {n_el} element(s); at least 3 are needed")
    n = (n_el - 1) // 2
    h = np.full(n + 1, params.L / n_el)
    # absorb the rounding of L/n_el into the central element
    h[0] = params.L - 2.0 * h[1:].sum()
    return HalfMesh(h, params.L)


def interp_half(x_nodes, d, xq) -> np.ndarray:
    """Piecewise-linear damage at ``|xq|`` using the symmetric extension."""
    ax = np.abs(np.asarray(xq, dtype=float))
    return np.where(ax <= x_nodes[0], d[0], np.interp(ax, x_nodes, d))


def interpolate(field_: DamageField, mesh: HalfMesh, x):
    """Damage at position(s) ``x`` in ``[-L/2, L/2]``."""
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > 0.5 * mesh.L * (1.0 + 1e-12)):
        raise ValueError("position outside the bar")
    out = interp_half(mesh.x, field_.d, arr)
    return float(out) if np.ndim(x) == 0 else out


@dataclass
class ConstraintReport:
    """Signed residuals; positive entries are violations."""

    length: float
    box: np.ndarray
    irr_current: np.ndarray    # prev field at current nodes minus current values
    irr_previous: np.ndarray   # prev values minus current field at prev nodes
    lipschitz: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def max_violation(self, L: float = 1.0) -> float:
        parts = [abs(self.length) / L]
        for arr in (self.box, self.irr_current, self.irr_previous, self.lipschitz):
            if arr.size:
                parts.append(float(np.max(arr)))
        return max(parts)

    def feasible(self, tol: float = 1e-10, L: float = 1.0) -> bool:
        return self.max_violation(L) <= tol


def constraint_residuals(d, h, prev: PrevSnapshot | None, model, params: MaterialParams) -> ConstraintReport:
    """Residuals of the length, box, irreversibility and Lipschitz constraints."""
    model = ModelKind.parse(model)
    d = np.asarray(d, dtype=float)
    h = np.asarray(h, dtype=float)
    x = node_positions(h)
    box = np.maximum(-d, d - 1.0)
    if prev is None:
        irr_c = np.full(d.size, -np.inf)
        irr_p = np.full(d.size, -np.inf)
    else:
        irr_c = interp_half(prev.x, prev.d, x) - d
        irr_p = prev.d - interp_half(x, d, prev.x)
    lip = np.zeros(0)
    if model is ModelKind.LIP:
        lip = np.abs(np.diff(d)) - h[1:] / params.lc
    return ConstraintReport(length_residual(h, params.L), box, irr_c, irr_p, lip)
