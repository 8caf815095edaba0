"""
Five-element lip-field reduction
================================

A symmetric lip-field X-Mesh bar with five elements, damage ``d0`` on the
two nodes of the central element and zero elsewhere. The optimal mesh puts
the damage ramp at slope ``1/lc`` so that

    h1 = d0 lc,      h2 = L/2 - (h0/2 + d0 lc)

and the potential only depends on ``(d0, h0)``. With ``gamma = 1/2`` the
stress relation removes ``h0`` as well, leaving a scalar function of ``d0``
whose minima explain the sudden stress drop of the X-Mesh runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .model import TABLE2, MaterialParams, ModelKind, alpha_v, derive, omega_v
from .potential import elastic_energy

LIP = ModelKind.LIP
STAGES = ("a", "b", "c", "d", "e")
H0_RULES = ("from_reduction", "zero")


@dataclass(frozen=True)
class FiveElemSetup:
    params: MaterialParams = TABLE2

    @property
    def gamma(self) -> float:
        return derive(self.params).gamma

    @property
    def wc(self) -> float:
        return derive(self.params).wc

    @property
    def Uc(self) -> float:
        return derive(self.params).Uc

    def sizes(self, d0, h0):
        """``(h1, h2)`` of the optimised mesh; ``h2`` may come out negative."""
        d0 = np.asarray(d0, dtype=float)
        h1 = d0 * self.params.lc
        h2 = 0.5 * self.params.L - (0.5 * np.asarray(h0, dtype=float) + h1)
        return h1, h2


class GeometryError(ValueError):
    """The outer element would have a negative size."""


def _om(d, gamma):
    return omega_v(LIP, np.asarray(d, dtype=float), gamma)


def k5(d0, h0, setup: FiveElemSetup = FiveElemSetup()):
    """Stiffness ratio of the five-element bar (0 once the centre is broken)."""
    p = setup.params
    d0 = np.asarray(d0, dtype=float)
    h0 = np.asarray(h0, dtype=float)
    om0 = _om(d0, setup.gamma)
    om1 = _om(0.5 * d0, setup.gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        comp = h0 / om0 + 2.0 * d0 * p.lc / om1 + p.L - (h0 + 2.0 * d0 * p.lc)
        k = np.where(om0 > 0.0, p.L / comp, 0.0)
    return k if k.ndim else float(k)


def f5(d0, h0, U: float, setup: FiveElemSetup = FiveElemSetup(), strict: bool = False):
    """
    Potential of the five-element bar as a function of ``(d0, h0)``.

    Parameters
    ----------
    strict : bool
        Raise :class:`GeometryError` when the outer element size ``h2`` is
        negative. By default the closed form is evaluated regardless, which is
        what the reduced study needs for large ``d0``.
    """
    p = setup.params
    d0 = np.asarray(d0, dtype=float)
    h0 = np.asarray(h0, dtype=float)
    if np.any((d0 < 0.0) | (d0 > 1.0)):
        raise ValueError("d0 must lie in [0, 1]")
    if np.any(h0 < 0.0):
        raise ValueError("h0 must be non-negative")
    if strict and np.any(setup.sizes(d0, h0)[1] < -1e-15 * p.L):
        raise GeometryError("h2 < 0: central and ramp elements exceed the half bar")
    diss = p.Gc / p.lc * (h0 * alpha_v(LIP, d0) + 2.0 * d0 * p.lc * alpha_v(LIP, 0.5 * d0))
    out = elastic_energy(U, p) * k5(d0, h0, setup) + diss
    return out if np.ndim(out) else float(out)


def h0d0_of(d0, U: float, setup: FiveElemSetup = FiveElemSetup()):
    """
    Product ``h0 d0`` fixed by the lip stress law ``sigma = sigc (1 - d0^2)``.

    Only meaningful for ``gamma = 1/2``. A negative value means the reduced
    branch has no admissible ``h0`` at this load.
    """
    p = setup.params
    if abs(setup.gamma - 0.5) > 1e-12:
        raise ValueError(f"the reduction assumes gamma = 1/2 (got {setup.gamma:.6g})")
    d0 = np.asarray(d0, dtype=float)
    q = 1.0 - d0 * d0
    out = (p.E * U * q / (4.0 * p.sigc) - 0.25 * p.L * q * q
           - p.lc * d0 * d0 * q * q / (1.0 - 0.25 * d0 * d0) ** 2)
    return out if out.ndim else float(out)


def f5_reduced(d0, U: float, setup: FiveElemSetup = FiveElemSetup()):
    """Reduced potential on the stress-law branch (``h0`` eliminated)."""
    p = setup.params
    d0 = np.asarray(d0, dtype=float)
    out = (0.5 * U * p.sigc * (1.0 - d0 * d0)
           + 2.0 * p.sigc**2 / p.E * (h0d0_of(d0, U, setup) + d0 * d0 * p.lc))
    return out if out.ndim else float(out)


def h0_of(d0, U: float, setup: FiveElemSetup = FiveElemSetup()):
    """Central element size on the branch, floored at 0 (and 0 at ``d0 = 0``)."""
    d0 = np.asarray(d0, dtype=float)
    prod = np.maximum(h0d0_of(d0, U, setup), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(d0 > 0.0, prod / np.where(d0 > 0.0, d0, 1.0), 0.0)
    return out if out.ndim else float(out)


def profile(d0, U: float, setup: FiveElemSetup = FiveElemSetup()):
    """
    Reduced potential extended to the whole of ``[0, 1]``.

    Where the branch gives ``h0 d0 < 0`` the floor ``h0 = 0`` is active and
    ``f5(d0, 0)`` is used instead. ``d0 = 0`` is the elastic bar.
    """
    d0 = np.asarray(d0, dtype=float)
    on_branch = h0d0_of(d0, U, setup) >= 0.0
    out = np.where(on_branch, f5_reduced(d0, U, setup), f5(d0, np.zeros_like(d0), U, setup))
    out = np.where(d0 == 0.0, elastic_energy(U, setup.params), out)
    return out if out.ndim else float(out)


def f_inf(d0, U: float, setup: FiveElemSetup = FiveElemSetup(), h0_rule: str = "zero"):
    """
    Continuum counterpart of ``f5`` for a linear damage ramp.

    ``h0_rule`` picks the central size entering the closed form:
    ``"zero"`` uses ``h0 = 0``, ``"from_reduction"`` uses :func:`h0_of`.
    The latter grows without bound as ``d0 -> 0`` and flattens the curve
    completely at ``U = wc``, hence the default.
    """
    if h0_rule not in H0_RULES:
        raise ValueError(f"h0_rule must be one of {H0_RULES}")
    p = setup.params
    d0 = np.asarray(d0, dtype=float)
    h0 = h0_of(d0, U, setup) if h0_rule == "from_reduction" else np.zeros_like(d0)
    om0 = _om(d0, setup.gamma)
    om1 = _om(0.5 * d0, setup.gamma)
    den = h0 + 2.0 * d0 * p.lc * om0 / om1 + om0 * (p.L - (h0 + 2.0 * d0 * p.lc))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0.0, p.L * om0 / den, 0.0)
    out = elastic_energy(U, p) * ratio + p.Gc * d0 * d0
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# minima and stages
# ---------------------------------------------------------------------------

@dataclass
class LocalMin:
    d0: float
    value: float

    @property
    def at_zero(self) -> bool:
        return self.d0 == 0.0

    @property
    def at_one(self) -> bool:
        return self.d0 == 1.0


@dataclass
class StageReport:
    """Stage label at one load with the local minima of the reduced profile."""

    U: float
    stage: str
    minima: list[LocalMin] = field(default_factory=list)

    @property
    def global_min(self) -> LocalMin:
        return min(self.minima, key=lambda m: m.value)

    @property
    def interior(self) -> list[LocalMin]:
        return [m for m in self.minima if 0.0 < m.d0 < 1.0]


def local_minima(fun, grid, tol: float = 1e-10) -> list[LocalMin]:
    """
    Local minima of a scalar function sampled on ``grid``.

    Interior candidates are strictly below both neighbours and are refined by
    golden-section search inside the neighbouring cell pair. End points are
    compared one-sided.
    """
    grid = np.asarray(grid, dtype=float)
    f = np.asarray(fun(grid), dtype=float)
    out = []
    if f[0] < f[1]:
        out.append(LocalMin(float(grid[0]), float(f[0])))
    for k in np.flatnonzero((f[1:-1] < f[:-2]) & (f[1:-1] < f[2:])) + 1:
        res = minimize_scalar(lambda t: float(fun(np.array([t]))[0]),
                              bracket=(grid[k - 1], grid[k], grid[k + 1]),
                              method="golden", tol=tol)
        x, v = float(res.x), float(res.fun)
        if not grid[k - 1] <= x <= grid[k + 1] or v > f[k]:
            x, v = float(grid[k]), float(f[k])
        out.append(LocalMin(x, v))
    if f[-1] < f[-2]:
        out.append(LocalMin(float(grid[-1]), float(f[-1])))
    return out


def default_grid(n: int = 2001) -> np.ndarray:
    if n < 2001:
        raise ValueError("the stage scan needs at least 2001 grid points")
    return np.linspace(0.0, 1.0, n)


def classify_stage(U: float, setup: FiveElemSetup = FiveElemSetup(), grid=None) -> StageReport:
    """
    Label the load ``U`` by the minima of the reduced profile.

    (a) only ``d0 = 0``; (b) a single interior minimum; (c) interior and
    ``d0 = 1`` minima, interior global; (d) both, ``d0 = 1`` global;
    (e) only ``d0 = 1``.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size < 2001:
        raise ValueError("the stage scan needs at least 2001 grid points")
    mins = local_minima(lambda t: profile(t, U, setup), grid)
    inner = [m for m in mins if 0.0 < m.d0 < 1.0]
    one = [m for m in mins if m.at_one]
    if inner and one:
        label = "c" if min(m.value for m in inner) < one[0].value else "d"
    elif inner:
        label = "b"
    elif one:
        label = "e"
    else:
        label = "a"
    return StageReport(float(U), label, mins)


def stage_sweep(U_values, setup: FiveElemSetup = FiveElemSetup(), grid=None) -> list[StageReport]:
    return [classify_stage(U, setup, grid) for U in U_values]


def transitions(reports: list[StageReport]) -> list[tuple[str, float]]:
    """First load of every new label in a sweep."""
    out, prev = [], None
    for rep in reports:
        if rep.stage != prev:
            out.append((rep.stage, rep.U))
            prev = rep.stage
    return out


def f_inf_minima(U: float, setup: FiveElemSetup = FiveElemSetup(), grid=None,
                 h0_rule: str = "zero") -> list[LocalMin]:
    grid = default_grid() if grid is None else grid
    return local_minima(lambda t: f_inf(t, U, setup, h0_rule), grid)


def unique_global_min(minima: list[LocalMin], rtol: float = 1e-9) -> bool:
    """True when exactly one local minimum attains the lowest value."""
    if not minima:
        return False
    best = min(m.value for m in minima)
    tied = [m for m in minima if m.value <= best + rtol * max(1.0, abs(best))]
    return len(tied) == 1


# ---------------------------------------------------------------------------
# surface dumps
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_surface(path, U: float, setup: FiveElemSetup = FiveElemSetup(), n_d: int = 101,
                  n_h: int = 101, h0_max: float | None = None) -> None:
    """``F5`` on a ``(d0, h0)`` grid, one row per node (columns d0, h0, F5)."""
    h0_max = setup.params.L if h0_max is None else h0_max
    d_ax = np.linspace(0.0, 1.0, n_d)
    h_ax = np.linspace(0.0, h0_max, n_h)
    D, H = np.meshgrid(d_ax, h_ax, indexing="ij")
    F = f5(D, H, U, setup)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d0", "h0", "F5"])
        for d, h, v in zip(D.ravel(), H.ravel(), F.ravel()):
            w.writerow([_fmt(d), _fmt(h), _fmt(v)])


def write_profiles(path, U: float, setup: FiveElemSetup = FiveElemSetup(), n: int = 2001,
                   h0_rule: str = "zero") -> None:
    """Reduced profile and ``F_inf`` against ``d0`` (columns d0, h0, F5, Finf)."""
    d = np.linspace(0.0, 1.0, n)
    rows = zip(d, h0_of(d, U, setup), profile(d, U, setup), f_inf(d, U, setup, h0_rule))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["d0", "h0", "F5", "Finf"])
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def explicit_mesh(d0: float, h0: float, setup: FiveElemSetup = FiveElemSetup()):
    """Half-model ``(d, h)`` arrays of the five-element bar."""
    h1, h2 = setup.sizes(d0, h0)
    return np.array([d0, 0.0, 0.0]), np.array([h0, float(h1), float(h2)])


__all__ = [
    "FiveElemSetup", "GeometryError", "k5", "f5", "h0d0_of", "f5_reduced", "h0_of", "profile",
    "f_inf", "LocalMin", "StageReport", "local_minima", "default_grid", "classify_stage",
    "stage_sweep", "transitions", "f_inf_minima", "unique_global_min", "write_surface",
    "write_profiles", "explicit_mesh", "STAGES", "H0_RULES",
]
