"""
Quasi-static loading
====================

Monotone elongation of the bar, one constrained minimization per increment.
On a fixed mesh the unknowns are the nodal damages; with X-Mesh the element
sizes move as well. Inside the solver the unknowns are scaled as ``d`` and
``s = h / lc`` and the objective as ``F / Gc``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .mesh import (H_MIN_FACTOR, DamageField, HalfMesh, PrevSnapshot, build_uniform,
                   constraint_residuals, interp_half, node_positions)
from .model import MaterialParams, ModelKind, alpha_v, derive, omega_v, validity
from .optimizer import (CONVERGED, InequalitySet, NlpProblem, NlpResult, SolverOptions,
                        minimize)
from .potential import displacement_from, element_damage, evaluate, hessian

MESH_MODES = ("fixed", "xmesh")
BREAK_D0 = 1.0 - 1e-9
# a solve ending above this peak damage also tries the broken configuration
BREAK_PROBE = 1.0 - 1e-3


@dataclass
class LoadSchedule:
    """
    Elongation values ``U_0 = 0 < U_1 <= ...``.

    ``steps`` uniform increments up to ``umax_factor * wc``; a zoom window
    ``(lo, hi, n)`` in units of ``wc`` adds ``n`` evenly spaced values.
    """

    steps: int = 200
    umax_factor: float = 1.1
    zoom: tuple[float, float, int] | None = None

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if not self.umax_factor > 0:
            raise ValueError("umax_factor must be positive")
        if self.zoom is not None:
            lo, hi, n = self.zoom
            if not (0 <= lo < hi) or int(n) != n or n < 1:
                raise ValueError(f"bad zoom window {self.zoom!r}")

    @classmethod
    def default(cls, zoom: bool = False, **kw) -> "LoadSchedule":
        return cls(zoom=(0.95, 1.01, 200) if zoom else None, **kw)

    def values(self, wc: float) -> np.ndarray:
        base = np.linspace(0.0, self.umax_factor * wc, self.steps + 1)
        if self.zoom is None:
            return base
        lo, hi, n = self.zoom
        extra = np.linspace(lo * wc, hi * wc, int(n))
        return np.unique(np.concatenate((base, extra)))


@dataclass
class StepState:
    step: int
    U: float
    d: np.ndarray
    h: np.ndarray
    u: np.ndarray
    sigma: float
    F: float
    K: float
    W: float
    status: str
    kkt: float
    lam: float = float("nan")
    broken: bool = False
    nit: int = 0
    Wd: float = 0.0
    err2: float = float("nan")

    @property
    def d0(self) -> float:
        return float(self.d[0])

    @property
    def h0(self) -> float:
        return float(self.h[0])

    @property
    def x(self) -> np.ndarray:
        return node_positions(self.h)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def full_fields(self):
        """Mirrored ``(x, u, d)`` over the whole bar."""
        x = self.x
        return (np.concatenate((-x[::-1], x)), np.concatenate((-self.u[::-1], self.u)),
                np.concatenate((self.d[::-1], self.d)))


@dataclass
class History:
    model: ModelKind
    mode: str
    params: MaterialParams
    n_c: int
    steps: list[StepState] = field(default_factory=list)

    @property
    def U(self) -> np.ndarray:
        return np.array([s.U for s in self.steps])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([s.sigma for s in self.steps])

    @property
    def Wd(self) -> np.ndarray:
        return np.array([s.Wd for s in self.steps])

    @property
    def broken(self) -> bool:
        return any(s.broken for s in self.steps)

    @property
    def U_star(self) -> float | None:
        for s in self.steps:
            if s.broken:
                return s.U
        return None

    @property
    def all_converged(self) -> bool:
        return all(s.converged for s in self.steps)

    def previous(self, k: int) -> PrevSnapshot | None:
        """Snapshot of the state before step ``k`` (None for the first)."""
        if k <= 0:
            return None
        p = self.steps[k - 1]
        return PrevSnapshot(p.x, p.d.copy(), p.h.copy())


# ---------------------------------------------------------------------------
# per-increment problems (scaled variables)
# ---------------------------------------------------------------------------

def _lip_block(n: int, s_fixed: np.ndarray | None):
    """``|d_i - d_{i-1}| <= s_i`` split into two linear rows per element."""
    nv = n + 1 if s_fixed is not None else 2 * (n + 1)
    D = np.zeros((n, nv))
    idx = np.arange(n)
    D[idx, idx + 1] = 1.0
    D[idx, idx] = -1.0
    S = np.zeros((n, nv))
    if s_fixed is None:
        S[idx, n + 1 + idx + 1] = 1.0
    J = np.vstack((D - S, -D - S))

    def fun(z):
        if s_fixed is None:
            return J @ z, J
        return J @ z - np.concatenate((s_fixed[1:], s_fixed[1:])), J
    return fun


def _xi_jac(n: int) -> np.ndarray:
    """d xi_j / d s_k for node positions ``xi_j = s_0/2 + sum_{k<=j} s_k``."""
    M = np.tril(np.ones((n + 1, n + 1)))
    M[:, 0] = 0.5
    return M


def _interp_with_grad(xi_nodes, d, q):
    """Linear interpolation of nodal ``d`` at ``q`` with gradients w.r.t. nodes."""
    n1 = xi_nodes.size
    val = np.empty(q.size)
    gd = np.zeros((q.size, n1))
    gxi = np.zeros((q.size, n1))
    for r, qq in enumerate(q):
        if qq <= xi_nodes[0]:
            val[r] = d[0]
            gd[r, 0] = 1.0
            continue
        if qq >= xi_nodes[-1]:
            val[r] = d[-1]
            gd[r, -1] = 1.0
            continue
        k = int(np.searchsorted(xi_nodes, qq, side="right")) - 1
        width = xi_nodes[k + 1] - xi_nodes[k]
        t = (qq - xi_nodes[k]) / width
        slope = (d[k + 1] - d[k]) / width
        val[r] = d[k] + t * (d[k + 1] - d[k])
        gd[r, k] = 1.0 - t
        gd[r, k + 1] = t
        gxi[r, k] = -slope * (1.0 - t)
        gxi[r, k + 1] = -slope * t
    return val, gd, gxi


def _prev_slope(xi_prev, d_prev, q):
    """Value and slope of the previous piecewise-linear field at ``q``."""
    val = np.where(q <= xi_prev[0], d_prev[0], np.interp(q, xi_prev, d_prev))
    k = np.clip(np.searchsorted(xi_prev, q, side="right") - 1, 0, xi_prev.size - 2)
    slope = (d_prev[k + 1] - d_prev[k]) / (xi_prev[k + 1] - xi_prev[k])
    slope = np.where((q <= xi_prev[0]) | (q >= xi_prev[-1]), 0.0, slope)
    return val, slope


KINK_TOL = 1e-10   # node coincidence tolerance in units of lc


def _piece_slopes(xi_nodes, d):
    """Slopes left and right of every node (zero outside the half bar)."""
    el = np.diff(d) / np.diff(xi_nodes)
    return np.concatenate(([0.0], el)), np.concatenate((el, [0.0]))


def _irr_blocks(n: int, prev: PrevSnapshot, lc: float):
    """Both irreversibility conditions under moving nodes."""
    xi_prev = prev.x / lc
    d_prev = prev.d
    dxi = _xi_jac(n)
    watch = np.flatnonzero(d_prev > 0.0)
    p_left, p_right = _piece_slopes(xi_prev, d_prev)

    def current(z):
        d, s = z[:n + 1], z[n + 1:]
        xi = node_positions(s)
        val, slope = _prev_slope(xi_prev, d_prev, xi)
        J = np.hstack((-np.eye(n + 1), slope[:, None] * dxi))
        return val - d, J

    def current_kinks(z):
        s = z[n + 1:]
        xi = node_positions(s)
        rows, J = [], []
        for j, q in enumerate(xi):
            k = int(np.argmin(np.abs(xi_prev - q)))
            if abs(xi_prev[k] - q) > KINK_TOL or p_left[k] == p_right[k]:
                continue
            _, used = _prev_slope(xi_prev, d_prev, np.array([q]))
            other = p_left[k] if used[0] == p_right[k] else p_right[k]
            row = np.zeros(2 * (n + 1))
            row[j] = -1.0
            row[n + 1:] = other * dxi[j]
            rows.append(j)
            J.append(row)
        return np.array(rows, dtype=int), np.array(J).reshape(-1, 2 * (n + 1))

    def previous(z):
        d, s = z[:n + 1], z[n + 1:]
        xi = node_positions(s)
        val, gd, gxi = _interp_with_grad(xi, d, xi_prev[watch])
        J = np.hstack((-gd, -(gxi @ dxi)))
        return d_prev[watch] - val, J

    def previous_kinks(z):
        d, s = z[:n + 1], z[n + 1:]
        xi = node_positions(s)
        c_left, c_right = _piece_slopes(xi, d)
        rows, J = [], []
        for r, q in enumerate(xi_prev[watch]):
            j = int(np.argmin(np.abs(xi - q)))
            if abs(xi[j] - q) > KINK_TOL or c_left[j] == c_right[j]:
                continue
            # value d_j with a one-sided slope; report the side not used by ``previous``
            used_right = q >= xi[j] and j < n
            sl = c_left[j] if used_right else c_right[j]
            gxi = np.zeros(n + 1)
            gxi[j] = -sl
            row = np.zeros(2 * (n + 1))
            row[j] = -1.0
            row[n + 1:] = -(gxi @ dxi)
            rows.append(r)
            J.append(row)
        return np.array(rows, dtype=int), np.array(J).reshape(-1, 2 * (n + 1))

    blocks = [InequalitySet(current, "irr-current", current_kinks)]
    if watch.size:
        blocks.append(InequalitySet(previous, "irr-previous", previous_kinks))
    return blocks


def build_problem(model, mode: str, params: MaterialParams, U: float,
                  d_start, h_start, prev: PrevSnapshot, fix_center: bool = False) -> NlpProblem:
    """
    Scaled increment problem.

    ``fix_center`` pins ``d_0 = 1`` and ``h_0`` at the floor (broken
    candidate for X-Mesh).
    """
    model = ModelKind.parse(model)
    if mode not in MESH_MODES:
        raise ValueError(f"mode must be one of {MESH_MODES}, got {mode!r}")
    lc, Gc, L = params.lc, params.Gc, params.L
    n = len(d_start) - 1
    if mode == "fixed":
        h = np.asarray(h_start, dtype=float)

        def obj(z):
            ev = evaluate(z, h, U, model, params)
            return ev.value / Gc, ev.grad_d / Gc

        def hess(z):
            return hessian(z, h, U, model, params)[:n + 1, :n + 1] / Gc

        lower = np.maximum(prev.d, 0.0) if prev is not None else np.zeros(n + 1)
        upper = np.ones(n + 1)
        ineq = []
        if model is ModelKind.LIP:
            ineq.append(InequalitySet(_lip_block(n, h / lc), "lipschitz"))
        return NlpProblem(obj, np.asarray(d_start, dtype=float), lower, upper,
                          inequalities=ineq, hessian=hess)

    def obj(z):
        ev = evaluate(z[:n + 1], z[n + 1:] * lc, U, model, params)
        return ev.value / Gc, np.concatenate((ev.grad_d, ev.grad_h * lc)) / Gc

    scale = np.concatenate((np.ones(n + 1), np.full(n + 1, lc)))

    def hess(z):
        H = hessian(z[:n + 1], z[n + 1:] * lc, U, model, params)
        return H * np.outer(scale, scale) / Gc

    s_min = H_MIN_FACTOR * L / lc
    lower = np.concatenate((np.zeros(n + 1), np.full(n + 1, s_min)))
    upper = np.concatenate((np.ones(n + 1), np.full(n + 1, L / lc)))
    if fix_center:
        lower[0] = upper[0] = 1.0
        upper[n + 1] = s_min
    A = np.concatenate((np.zeros(n + 1), [1.0], np.full(n, 2.0)))[None, :]
    b = np.array([L / lc])
    ineq = []
    if model is ModelKind.LIP:
        ineq.append(InequalitySet(_lip_block(n, None), "lipschitz"))
    if prev is not None and np.any(prev.d > 0.0):
        ineq += _irr_blocks(n, prev, lc)
    z0 = np.concatenate((np.asarray(d_start, dtype=float), np.asarray(h_start, dtype=float) / lc))
    return NlpProblem(obj, z0, lower, upper, A_eq=A, b_eq=b, inequalities=ineq, hessian=hess)


# ---------------------------------------------------------------------------
# loading loop
# ---------------------------------------------------------------------------

def _is_broken(d, h, L: float) -> bool:
    return d[0] >= BREAK_D0 and h[0] <= 1.01 * H_MIN_FACTOR * L


def _freeze_broken(d, h, L: float):
    """Exact broken configuration: ``d_0 = 1`` and ``h_0`` on the floor."""
    d = d.copy()
    h = h.copy()
    d[0] = 1.0
    h_min = H_MIN_FACTOR * L
    h[-1] += 0.5 * (h[0] - h_min)
    h[0] = h_min
    return d, h


def _state(step: int, U: float, d, h, model, params, status: str, kkt: float,
           lam: float = float("nan"), broken: bool = False, nit: int = 0) -> StepState:
    ev = evaluate(d, h, U, model, params, grad=False)
    u = displacement_from(d, h, U, model, params)
    return StepState(step=step, U=float(U), d=np.array(d, dtype=float), h=np.array(h, dtype=float),
                     u=u, sigma=ev.sigma, F=ev.value, K=ev.K, W=ev.W, status=status, kkt=kkt,
                     lam=lam, broken=broken, nit=nit)


def solve_increment(model, mode: str, params: MaterialParams, U: float, d_start, h_start,
                    prev: PrevSnapshot | None, opts: SolverOptions | None = None):
    """
    One increment: local minimization from ``(d_start, h_start)``.

    Returns ``(d, h, result)`` with ``h`` in metres. On X-Mesh, a solve that
    ends next to full damage is compared with the broken configuration and
    the lower energy is kept.
    """
    model = ModelKind.parse(model)
    lc = params.lc
    n = len(d_start) - 1
    prob = build_problem(model, mode, params, U, d_start, h_start, prev)
    res = minimize(prob, opts)
    d = res.x[:n + 1].copy()
    h = np.asarray(h_start, dtype=float).copy() if mode == "fixed" else res.x[n + 1:] * lc
    if mode == "xmesh" and d[0] >= BREAK_PROBE:
        d_b, h_b = _freeze_broken(d, h, params.L)
        pb = build_problem(model, mode, params, U, d_b, h_b, prev, fix_center=True)
        alt = minimize(pb, opts)
        slack = 1e-12 * max(1.0, abs(res.f))
        if alt.status == CONVERGED and (alt.f <= res.f + slack or _is_broken(d, h, params.L)):
            res = alt
            d = res.x[:n + 1].copy()
            h = res.x[n + 1:] * lc
    return d, h, res


def run(model, mesh_mode: str, params: MaterialParams, n_c: int,
        schedule: LoadSchedule | None = None, opts: SolverOptions | None = None) -> History:
    """
    Quasi-static loading of the bar.

    Each increment warm-starts from the previous converged state; the first
    increment past the onset elongation starts from the analytic damage
    profile (on X-Mesh also from a fixed-mesh solve, keeping the lower
    energy). Once the X-Mesh bar is broken the state is frozen (``d_0 = 1``,
    ``h_0`` on the floor, zero stress).
    """
    model = ModelKind.parse(model)
    if mesh_mode not in MESH_MODES:
        raise ValueError(f"mesh_mode must be one of {MESH_MODES}, got {mesh_mode!r}")
    rep = validity(model, params)
    if not rep.ok:
        raise ValueError(f"invalid bar configuration: {rep.describe()}")
    schedule = schedule or LoadSchedule.default()
    der = derive(params)
    mesh = build_uniform(model, params, n_c)
    Us = schedule.values(der.wc)
    hist = History(model, mesh_mode, params, int(n_c))

    d = np.zeros(mesh.n + 1)
    h = mesh.h.copy()
    hist.steps.append(_state(0, Us[0], d, h, model, params, CONVERGED, 0.0,
                             lam=-0.5 * params.E * (Us[0] / params.L) ** 2 if mesh_mode == "xmesh"
                             else float("nan")))
    prev = PrevSnapshot(node_positions(h), d.copy(), h.copy())
    broken = False
    for k, U in enumerate(Us[1:], start=1):
        if broken:
            hist.steps.append(_state(k, U, d, h, model, params, CONVERGED, 0.0, broken=True))
            continue
        d_start = d
        if not np.any(d > 0.0) and U > der.Uc:
            d_start = analytic.damage_profile(model, analytic.d0_of_U(model, U, params),
                                              node_positions(h), params)
        onset = d_start is not d
        d, h, res = solve_increment(model, mesh_mode, params, U, d_start, h,
                                    prev if np.any(prev.d > 0.0) else None, opts)
        if onset and mesh_mode == "xmesh":
            # free nodes can settle on a ring of damage around an intact
            # centre; localize on the frozen mesh first, release, keep the lower
            d_f, h_f, _ = solve_increment(model, "fixed", params, U, d_start, prev.h, None, opts)
            d_r, h_r, alt = solve_increment(model, mesh_mode, params, U, d_f, h_f, None, opts)
            if alt.status == CONVERGED and (res.status != CONVERGED or alt.f < res.f):
                d, h, res = d_r, h_r, alt
        lam = float("nan")
        if mesh_mode == "xmesh":
            # reported with grad F = lam grad(h_0 + 2 sum h_i - L)
            lam = -(params.Gc / params.lc) * float(res.lam_eq[0])
            if _is_broken(d, h, params.L):
                d, h = _freeze_broken(d, h, params.L)
                broken = True
        hist.steps.append(_state(k, U, d, h, model, params, res.status, res.kkt, lam=lam,
                                 broken=broken, nit=res.nit))
        prev = PrevSnapshot(node_positions(h), d.copy(), h.copy())

    wd = dissipated_energy(hist)
    for s, w in zip(hist.steps, wd):
        s.Wd = float(w)
        s.err2 = l2_error(s, model, params)
    return hist


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def _full_midpoints(step: StepState):
    x = step.x
    xf = np.concatenate((-x[::-1], x))
    uf = np.concatenate((-step.u[::-1], step.u))
    hf = np.diff(xf)
    xm = 0.5 * (xf[:-1] + xf[1:])
    um = 0.5 * (uf[:-1] + uf[1:])
    # outer elements run from the last node to the bar end
    return hf, xm, um


def l2_error(step: StepState, model, params: MaterialParams, u_exact=None) -> float:
    """
    Relative midpoint-rule L2 error of the displacement over the whole bar.

    ``u_exact(x)`` defaults to the reference solution at the step's ``U``.
    """
    model = ModelKind.parse(model)
    if step.U == 0.0 and u_exact is None:
        return 0.0
    hf, xm, um = _full_midpoints(step)
    if u_exact is None:
        uex = analytic.exact_displacement(model, step.U, xm, params)
    else:
        uex = np.asarray(u_exact(xm), dtype=float)
    num = float(np.sum(hf * (um - uex) ** 2))
    den = float(np.sum(hf * uex ** 2))
    return math.sqrt(num / den)


def dissipated_energy(history: History) -> np.ndarray:
    """
    Trapezoidal external work minus the stored elastic energy, per step.
    """
    if not history.steps:
        raise ValueError("empty history")
    U = history.U
    sig = history.sigma
    work = np.concatenate(([0.0], np.cumsum(0.5 * (sig[1:] + sig[:-1]) * np.diff(U))))
    stored = np.array([0.5 * s.sigma * s.U for s in history.steps])
    return work - stored


@dataclass
class CohesivePairs:
    """Central jump, stress and gap to the linear cohesive law, per step."""

    w: np.ndarray
    sigma: np.ndarray
    gap: np.ndarray


def cohesive_pairs(history: History) -> CohesivePairs:
    """
    Jump ``w = u_1 - u_{-1}`` across the central element against the stress.

    Only a diagnostic: the equivalence with the cohesive law holds for the
    continuum, the discrete pairs are not expected to match it exactly.
    """
    p = history.params
    wc = derive(p).wc
    w = np.array([2.0 * s.u[0] for s in history.steps])
    sig = history.sigma
    law = p.sigc * (1.0 - np.clip(w, 0.0, wc) / wc)
    return CohesivePairs(w, sig, sig - law)


@dataclass
class ResidualReport:
    """Optimality diagnostics of one X-Mesh increment."""

    law: float                     # |sigma/sigc - analytic stress law(d0)|
    hopti: np.ndarray              # per element, scaled by Gc/lc; NaN where skipped
    gradient_gap: np.ndarray       # phase-field |lc |dd|/h - H(dbar, d0)|; NaN elsewhere
    slope_class: list[str]         # lip: "0", "1", "other" or "" (not damaged / central)
    slopes: np.ndarray             # lc |dd| / h per element (central entry 0)

    @property
    def n_other(self) -> int:
        return sum(c == "other" for c in self.slope_class)


SLOPE_TOL = 1e-3


def stress_law(model, d0: float) -> float:
    model = ModelKind.parse(model)
    return 1.0 - d0 if model is ModelKind.PHASE else 1.0 - d0 * d0


IRR_ACTIVE_TOL = 1e-10
COLLAPSED_FACTOR = 1e3


def _support_edge(x, d) -> float:
    """First node past the damaged band (NaN if nothing is damaged)."""
    pos = np.flatnonzero(d > 0.0)
    if pos.size == 0:
        return float("nan")
    return float(x[min(pos.max() + 1, x.size - 1)])


def _irr_coupled(d, h, prev: PrevSnapshot | None, params: MaterialParams) -> int:
    """
    Number of inner elements whose sizes enter an active irreversibility row.

    A node position depends on every element size between it and the centre,
    so an active row at current node ``j`` (or at a previous node lying in
    element ``e``) couples ``h_0 .. h_j`` (``h_0 .. h_e``).
    """
    if prev is None or not np.any(prev.d > 0.0):
        return 0
    x = node_positions(h, params.L)
    rep = constraint_residuals(d, h, prev, ModelKind.PHASE, params)
    tol = IRR_ACTIVE_TOL
    near = tol * params.L
    # where both fields vanish a row only binds at a support edge (kink)
    edge_p, edge_c = _support_edge(prev.x, prev.d), _support_edge(x, d)
    deepest = -1
    cur = np.flatnonzero((rep.irr_current >= -tol)
                         & ((d > 0.0) | (np.abs(x - edge_p) <= near)))
    if cur.size:
        deepest = int(cur.max())
    old = np.flatnonzero((rep.irr_previous >= -tol)
                         & ((prev.d > 0.0) | (np.abs(prev.x - edge_c) <= near)))
    if old.size:
        e = np.searchsorted(x, prev.x[old] - near, side="left")
        deepest = max(deepest, int(min(e.max(), d.size - 1)))
    return deepest + 1


def xmesh_residuals(step: StepState, model, params: MaterialParams,
                    lip_lc_tol: float = SLOPE_TOL, prev: PrevSnapshot | None = None) -> ResidualReport:
    """
    Optimality diagnostics of a converged X-Mesh step.

    Element-size residuals are skipped where a bound or the Lipschitz bound
    is active, and, when ``prev`` (the previous converged state) is given,
    on the elements coupled to an active irreversibility row.
    """
    model = ModelKind.parse(model)
    gamma = derive(params).gamma
    d, h = step.d, step.h
    n1 = d.size
    db = element_damage(d)
    om = omega_v(model, db, gamma)
    al = alpha_v(model, db)
    jump = np.concatenate(([0.0], np.diff(d)))
    slopes = np.zeros(n1)
    slopes[1:] = params.lc * np.abs(jump[1:]) / h[1:]

    law = abs(step.sigma / params.sigc - stress_law(model, step.d0)) if 0.0 < step.d0 < 1.0 else 0.0

    hopti = np.full(n1, np.nan)
    h_min = H_MIN_FACTOR * params.L
    fe2 = 0.5 * params.E * (step.U / params.L) ** 2 * step.K ** 2
    pinned = np.zeros(n1, dtype=bool)
    pinned[:_irr_coupled(d, h, prev, params)] = True
    if model is ModelKind.LIP:
        pinned[1:] = np.abs(slopes[1:] - 1.0) <= lip_lc_tol
    for i in range(n1):
        nodes = [0] if i == 0 else [i - 1, i]
        at_bound = any(d[j] <= 0.0 or d[j] >= 1.0 for j in nodes) or h[i] <= h_min * 1.01 or pinned[i]
        if at_bound or om[i] <= 0.0:
            continue
        grad_term = model.r * (params.lc * jump[i] / h[i]) ** 2 if i > 0 else 0.0
        val = fe2 * (1.0 - 1.0 / om[i]) + params.Gc / (model.c * params.lc) * (al[i] - grad_term)
        hopti[i] = val * params.lc / params.Gc

    gap = np.full(n1, np.nan)
    classes = [""] * n1
    if model is ModelKind.PHASE:
        if 0.0 < step.d0 < 1.0:
            for i in range(1, n1):
                if db[i] > 0.0:
                    gap[i] = abs(slopes[i] - analytic.H_kernel(min(db[i], step.d0), step.d0))
    else:
        # collapsed elements carry no resolvable slope
        collapsed = h <= COLLAPSED_FACTOR * h_min
        for i in range(1, n1):
            if db[i] > 0.0 and not collapsed[i]:
                if slopes[i] <= lip_lc_tol:
                    classes[i] = "0"
                elif abs(slopes[i] - 1.0) <= lip_lc_tol:
                    classes[i] = "1"
                else:
                    classes[i] = "other"
    return ResidualReport(law, hopti, gap, classes, slopes)


def detect_reloading(history: History, tol: float = 1e-12) -> list[int]:
    """
    Steps after damage onset where the stress rises while the dissipated
    energy does not grow (elastic reloading).
    """
    steps = history.steps
    onset = next((k for k, s in enumerate(steps) if s.d0 > 0.0), None)
    if onset is None:
        return []
    wd = history.Wd
    slack = tol * history.params.Gc
    out = []
    for k in range(onset + 1, len(steps)):
        if steps[k].sigma > steps[k - 1].sigma and wd[k] - wd[k - 1] <= slack:
            out.append(k)
    return out


def lip_ansatz(x_nodes, d0: float, lc: float) -> np.ndarray:
    """Triangular damage ``<d0 - x/lc>_+`` at the nodes."""
    return np.maximum(d0 - np.asarray(x_nodes) / lc, 0.0)


def basin_scan(mesh: HalfMesh, U: float, params: MaterialParams, d0_grid,
               model="lip") -> np.ndarray:
    """Potential along the one-parameter triangular ansatz on a fixed mesh."""
    model = ModelKind.parse(model)
    if model is not ModelKind.LIP:
        raise ValueError("basin_scan applies to the lip-field model")
    x = mesh.x
    return np.array([evaluate(lip_ansatz(x, d0, params.lc), mesh.h, U, model, params,
                              grad=False).value for d0 in np.asarray(d0_grid, dtype=float)])
