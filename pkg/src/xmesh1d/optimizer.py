"""
Constrained minimization for the per-increment problems
=======================================================

Problems have box bounds, linear equality constraints ``A x = b`` and
general inequalities ``g(x) <= 0``. Iterations are delegated to SLSQP
(``scipy.optimize.minimize``); this module owns start-point repair,
first-order multiplier recovery and the KKT / feasibility diagnostics that
decide the returned status.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

ObjectiveFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]
ConstraintFn = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


@dataclass
class InequalitySet:
    """
    Block of inequalities ``g(x) <= 0`` returning values and Jacobian.

    Piecewise-smooth blocks may supply ``kinks(x)`` returning
    ``(rows, J_other)``: rows of the block sitting on a kink, and the other
    one-sided Jacobian rows there. Stationarity is then checked against both
    pieces.
    """

    fun: ConstraintFn
    name: str = "ineq"
    kinks: Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"] | None = None


@dataclass
class NlpProblem:
    objective: ObjectiveFn
    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    inequalities: list[InequalitySet] = field(default_factory=list)
    hessian: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), self.x0.shape).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), self.x0.shape).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("inconsistent bounds")
        if self.A_eq is not None:
            self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            self.b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))

    @property
    def n_eq(self) -> int:
        return 0 if self.A_eq is None else self.A_eq.shape[0]

    def ineq(self, x) -> tuple[np.ndarray, np.ndarray]:
        vals, jacs = [np.zeros(0)], [np.zeros((0, x.size))]
        for block in self.inequalities:
            v, j = block.fun(x)
            vals.append(np.atleast_1d(v))
            jacs.append(np.atleast_2d(j).reshape(-1, x.size))
        return np.concatenate(vals), np.vstack(jacs)

    def ineq_ext(self, x):
        """Values, Jacobian and owning row of every smooth piece (kinks duplicated)."""
        vals, jac = self.ineq(x)
        owner = np.arange(vals.size)
        extra_rows, extra_jac = [], []
        offset = 0
        for block in self.inequalities:
            size = np.atleast_1d(block.fun(x)[0]).size
            if block.kinks is not None:
                rows, J = block.kinks(x)
                rows = np.asarray(rows, dtype=int)
                if rows.size:
                    extra_rows.append(rows + offset)
                    extra_jac.append(np.atleast_2d(J).reshape(-1, x.size))
            offset += size
        if extra_rows:
            rows = np.concatenate(extra_rows)
            owner = np.concatenate((owner, rows))
            vals = np.concatenate((vals, vals[rows]))
            jac = np.vstack([jac] + extra_jac)
        return vals, jac, owner

    def ineq_labels(self, x) -> list[str]:
        labels: list[str] = []
        for block in self.inequalities:
            v, _ = block.fun(x)
            labels += [f"{block.name}[{k}]" for k in range(np.atleast_1d(v).size)]
        return labels


@dataclass
class SolverOptions:
    kkt_tol: float = 1e-8       # scaled by max(1, |f|)
    feas_tol: float = 1e-10
    max_iter: int = 500
    active_tol: float = 1e-9    # distance at which a constraint counts as active
    ftol: float = 1e-15         # SLSQP objective-change tolerance
    restarts: int = 3           # extra SLSQP passes from the returned point

    def __post_init__(self):
        if self.kkt_tol <= 0 or self.feas_tol <= 0 or self.active_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


CONVERGED = "converged"
MAX_ITER = "max-iter"
INFEASIBLE = "infeasible"
NOT_STATIONARY = "not-stationary"


@dataclass
class NlpResult:
    x: np.ndarray
    f: float
    status: str
    kkt: float
    max_violation: float
    nit: int
    lam_eq: np.ndarray
    mu_ineq: np.ndarray
    ineq_values: np.ndarray
    mu_lower: np.ndarray
    mu_upper: np.ndarray
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


# ---------------------------------------------------------------------------

def project_start(problem: NlpProblem) -> np.ndarray:
    """Clip to the box, then restore each equality row by a shift along it."""
    x = np.clip(problem.x0, problem.lower, problem.upper)
    if problem.A_eq is None:
        return x
    for a, b in zip(problem.A_eq, problem.b_eq):
        def shifted(t, a=a):
            return np.clip(x - t * a, problem.lower, problem.upper)

        def resid(t, a=a, b=b):
            return float(a @ shifted(t) - b)

        r0 = resid(0.0)
        if abs(r0) <= 1e-15 * max(1.0, abs(b)):
            continue
        lo, hi = -1.0, 1.0
        while resid(lo) < 0.0 and lo > -1e12:
            lo *= 2.0
        while resid(hi) > 0.0 and hi < 1e12:
            hi *= 2.0
        if resid(lo) * resid(hi) > 0.0:
            raise ValueError("equality constraint cannot be met within the bounds")
        t = optimize.brentq(resid, lo, hi, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=400)
        x = shifted(t)
    return x


def kkt_multipliers(problem: NlpProblem, x: np.ndarray, grad: np.ndarray,
                    opts: SolverOptions):
    """
    Least-squares multipliers on the active set.

    Solves ``grad + A^T lam + J_act^T mu - nu_lo + nu_hi = 0`` with
    ``mu, nu >= 0`` and returns the multipliers and the stationarity residual.
    """
    n = x.size
    g_vals = problem.ineq(x)[0]
    e_vals, e_jac, owner = problem.ineq_ext(x)
    act_g = np.flatnonzero(e_vals >= -opts.active_tol)
    act_lo = np.flatnonzero(x - problem.lower <= opts.active_tol)
    act_hi = np.flatnonzero(problem.upper - x <= opts.active_tol)
    cols, lb = [], []
    if problem.n_eq:
        cols.append(problem.A_eq.T)
        lb += [-np.inf] * problem.n_eq
    if act_g.size:
        cols.append(e_jac[act_g].T)
        lb += [0.0] * act_g.size
    if act_lo.size:
        cols.append(-np.eye(n)[:, act_lo])
        lb += [0.0] * act_lo.size
    if act_hi.size:
        cols.append(np.eye(n)[:, act_hi])
        lb += [0.0] * act_hi.size

    lam = np.zeros(problem.n_eq)
    mu = np.zeros(g_vals.size)
    nu_lo = np.zeros(n)
    nu_hi = np.zeros(n)
    if not cols:
        return lam, mu, nu_lo, nu_hi, grad.copy(), g_vals

    M = np.hstack(cols)
    sol = optimize.lsq_linear(M, -grad, bounds=(np.array(lb), np.full(len(lb), np.inf)),
                              method="bvls", tol=1e-15, lsmr_tol=None)
    y = sol.x
    resid = grad + M @ y
    k = 0
    lam = y[k:k + problem.n_eq]
    k += problem.n_eq
    np.add.at(mu, owner[act_g], y[k:k + act_g.size])
    k += act_g.size
    nu_lo[act_lo] = y[k:k + act_lo.size]
    k += act_lo.size
    nu_hi[act_hi] = y[k:k + act_hi.size]
    return lam, mu, nu_lo, nu_hi, resid, g_vals


def max_violation(problem: NlpProblem, x: np.ndarray) -> float:
    parts = [0.0]
    parts.append(float(np.max(np.maximum(problem.lower - x, 0.0))))
    parts.append(float(np.max(np.maximum(x - problem.upper, 0.0))))
    if problem.n_eq:
        parts.append(float(np.max(np.abs(problem.A_eq @ x - problem.b_eq))))
    g, _ = problem.ineq(x)
    if g.size:
        parts.append(float(np.max(g)))
    return max(parts)


def _slsqp(problem: NlpProblem, x0: np.ndarray, opts: SolverOptions):
    cons = []
    if problem.n_eq:
        A, b = problem.A_eq, problem.b_eq
        cons.append({"type": "eq", "fun": lambda z: A @ z - b, "jac": lambda z: A})
    if problem.inequalities:
        # SLSQP asks for values and normals at the same point separately
        memo = {}

        def ineq(z):
            key = z.tobytes()
            if key not in memo:
                memo.clear()
                g, J = problem.ineq(z)
                memo[key] = (-g, -J)
            return memo[key]
        cons.append({"type": "ineq", "fun": lambda z: ineq(z)[0], "jac": lambda z: ineq(z)[1]})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return optimize.minimize(
            problem.objective, x0, jac=True, method="SLSQP",
            bounds=optimize.Bounds(problem.lower, problem.upper),
            constraints=cons,
            options={"maxiter": opts.max_iter, "ftol": opts.ftol},
        )


def _hessian(problem: NlpProblem, x: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Objective Hessian on the free variables (finite differences if none is supplied)."""
    idx = np.flatnonzero(free)
    if problem.hessian is not None:
        return problem.hessian(x)[np.ix_(idx, idx)]
    H = np.empty((idx.size, idx.size))
    for col, j in enumerate(idx):
        step = 1e-6 * max(abs(x[j]), 1e-4)
        up = min(step, problem.upper[j] - x[j])
        dn = min(step, x[j] - problem.lower[j])
        xp, xm = x.copy(), x.copy()
        if up > 0.0 and dn > 0.0:
            xp[j] += up
            xm[j] -= dn
            width = up + dn
        elif up > 0.0:
            xp[j] += up
            width = up
        else:
            xm[j] -= dn
            width = dn
        H[:, col] = (problem.objective(xp)[1][idx] - problem.objective(xm)[1][idx]) / width
    return 0.5 * (H + H.T)


def _assess(problem: NlpProblem, x: np.ndarray, opts: SolverOptions):
    f, g = problem.objective(x)
    mult = kkt_multipliers(problem, x, g, opts)
    resid = mult[4]
    kkt = float(np.max(np.abs(resid))) / max(1.0, abs(f)) if resid.size else 0.0
    return float(f), kkt, max_violation(problem, x), mult


def _piece_keys(owner: np.ndarray) -> np.ndarray:
    seen: dict[int, int] = {}
    keys = np.empty(owner.size, dtype=object)
    for k, row in enumerate(owner):
        occ = seen.get(int(row), 0)
        seen[int(row)] = occ + 1
        keys[k] = (int(row), occ)
    return keys


def _polish(problem: NlpProblem, x: np.ndarray, opts: SolverOptions, max_iter: int = 40):
    """
    Active-set Newton refinement of a nearly stationary point.

    The working set is read off ``x`` with a loose tolerance; constraints
    with negative multipliers are released and blocking ones are added by a
    ratio test on the linearization.
    """
    lo, hi = problem.lower, problem.upper
    ident = max(opts.active_tol, 1e-7)
    x = x.copy()
    at_lo = (x - lo <= ident) | (lo == hi)
    at_hi = (hi - x <= ident) & ~at_lo
    x[at_lo] = lo[at_lo]
    x[at_hi] = hi[at_hi]
    e_vals, _, owner = problem.ineq_ext(x)
    # working pieces keyed by (row, occurrence) so kink duplicates stay distinct
    work = set(_piece_keys(owner)[e_vals >= -ident])
    n_eq = problem.n_eq
    it = 0
    H_full, H_at = None, None
    for it in range(1, max_iter + 1):
        f, grad = problem.objective(x)
        g_vals, g_jac, owner = problem.ineq_ext(x)
        keys = _piece_keys(owner)
        work &= set(keys)
        free = ~(at_lo | at_hi)
        rows = [problem.A_eq] if n_eq else []
        vals = [problem.A_eq @ x - problem.b_eq] if n_eq else []
        w_idx = np.array([k for k, key in enumerate(keys) if key in work], dtype=int)
        if w_idx.size:
            rows.append(g_jac[w_idx])
            vals.append(g_vals[w_idx])
        nf = int(free.sum())
        C_full = np.vstack(rows) if rows else np.zeros((0, x.size))
        c = np.concatenate(vals) if vals else np.zeros(0)
        C = C_full[:, free]
        if H_at is None or not np.array_equal(H_at, x):
            H_full, H_at = _hessian(problem, x, np.ones(x.size, dtype=bool)), x.copy()
        H = H_full[np.ix_(free, free)]
        m = C.shape[0]
        M = np.block([[H, C.T], [C, np.zeros((m, m))]])
        rhs = -np.concatenate((grad[free], c))
        sol = np.linalg.lstsq(M, rhs, rcond=1e-13)[0]
        step, y = sol[:nf], sol[nf:]

        # release the working constraint with the most negative multiplier
        r = grad + C_full.T @ y
        cand = []
        if w_idx.size:
            yg = y[n_eq:]
            k = int(np.argmin(yg))
            cand.append((yg[k], "g", w_idx[k]))
        lo_idx = np.flatnonzero(at_lo & (lo < hi))
        if lo_idx.size:
            k = int(np.argmin(r[lo_idx]))
            cand.append((r[lo_idx][k], "lo", lo_idx[k]))
        hi_idx = np.flatnonzero(at_hi)
        if hi_idx.size:
            k = int(np.argmax(r[hi_idx]))
            cand.append((-r[hi_idx][k], "hi", hi_idx[k]))
        if cand:
            worst = min(cand, key=lambda t: t[0])
            if worst[0] < -opts.kkt_tol * max(1.0, abs(f)):
                if worst[1] == "g":
                    work.discard(keys[worst[2]])
                elif worst[1] == "lo":
                    at_lo[worst[2]] = False
                else:
                    at_hi[worst[2]] = False
                continue

        full_step = np.zeros_like(x)
        full_step[free] = step
        if not np.all(np.isfinite(full_step)):
            break
        # ratio test against the bounds and the inactive inequalities
        alpha, block = 1.0, None
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = np.where(full_step < 0.0, (lo - x) / full_step, np.inf)
            t_hi = np.where(full_step > 0.0, (hi - x) / full_step, np.inf)
        t_lo[~free] = np.inf
        t_hi[~free] = np.inf
        for arr, kind in ((t_lo, "lo"), (t_hi, "hi")):
            k = int(np.argmin(arr))
            if arr[k] < alpha:
                alpha, block = max(arr[k], 0.0), (kind, k)
        if g_vals.size:
            slope = g_jac @ full_step
            in_work = np.array([key in work for key in keys], dtype=bool)
            inactive = ~in_work & (slope > 0.0)
            if np.any(inactive):
                t_g = np.full(g_vals.size, np.inf)
                t_g[inactive] = -g_vals[inactive] / slope[inactive]
                k = int(np.argmin(t_g))
                if t_g[k] < alpha:
                    alpha, block = max(t_g[k], 0.0), ("g", k)
        x = x + alpha * full_step
        if block is not None:
            kind, k = block
            if kind == "lo":
                at_lo[k] = True
                x[k] = lo[k]
            elif kind == "hi":
                at_hi[k] = True
                x[k] = hi[k]
            else:
                work.add(keys[k])
            continue
        x = np.clip(x, lo, hi)
        if np.max(np.abs(full_step)) <= 1e-15 * max(1.0, float(np.max(np.abs(x)))):
            break
        c_ok = c.size == 0 or np.max(np.abs(c)) <= 1e-15
        if c_ok and (nf == 0 or np.max(np.abs(r[free])) <= 1e-2 * opts.kkt_tol):
            break
    return x, it


def minimize(problem: NlpProblem, opts: SolverOptions | None = None) -> NlpResult:
    """
    Local minimizer in the basin of ``problem.x0``.

    The start is projected onto the box and the equality constraints. Each
    SLSQP pass is followed by an active-set Newton polish; the status is
    decided by the recomputed KKT residual and the constraint violation, not
    by the backend's own flag. The returned point never has a higher
    objective than the feasible projected start.
    """
    opts = opts or SolverOptions()
    x_start = project_start(problem)
    f_start, kkt_start, viol_start, mult_start = _assess(problem, x_start, opts)

    def better(a, b):
        # a, b: (x, f, kkt, viol, mult); feasibility first, then objective
        if b is None:
            return True
        fa, fb = a[3] <= opts.feas_tol, b[3] <= opts.feas_tol
        if fa != fb:
            return fa
        if not fa:
            return a[3] < b[3]
        slack = 1e-12 * max(1.0, abs(b[1]))
        if a[1] < b[1] - slack:
            return True
        return a[1] <= b[1] + slack and a[2] < b[2]

    best = (x_start, f_start, kkt_start, viol_start, mult_start)
    x = x_start
    nit = 0
    message = ""
    if not (kkt_start <= opts.kkt_tol and viol_start <= opts.feas_tol):
        for _ in range(1 + opts.restarts):
            res = _slsqp(problem, x, opts)
            nit += int(res.nit)
            message = str(res.message)
            cand = np.clip(res.x, problem.lower, problem.upper)
            if not np.isfinite(problem.objective(cand)[0]):
                break
            entry = (cand,) + _assess(problem, cand, opts)
            if better(entry, best):
                best = entry
            try:
                pol, k = _polish(problem, cand, opts)
                nit += k
                entry = (pol,) + _assess(problem, pol, opts)
                if np.isfinite(entry[1]) and better(entry, best):
                    best = entry
            except np.linalg.LinAlgError:
                pass
            if best[2] <= opts.kkt_tol and best[3] <= opts.feas_tol:
                break
            if np.array_equal(best[0], x):
                break
            x = best[0]

    xb, f, kkt, viol, mult = best
    lam, mu, nu_lo, nu_hi, _, g_vals = mult
    if viol > opts.feas_tol:
        status = INFEASIBLE
    elif kkt <= opts.kkt_tol:
        status = CONVERGED
    elif nit >= opts.max_iter:
        status = MAX_ITER
    else:
        status = NOT_STATIONARY
    return NlpResult(x=xb, f=float(f), status=status, kkt=kkt, max_violation=viol, nit=nit,
                     lam_eq=lam, mu_ineq=mu, ineq_values=g_vals, mu_lower=nu_lo,
                     mu_upper=nu_hi, message=message)


@dataclass
class MultiplierReport:
    lam_eq: np.ndarray
    mu: np.ndarray
    g: np.ndarray
    labels: list[str]
    complementarity: float

    def active(self, tol: float = 1e-9) -> list[str]:
        return [lab for lab, gv in zip(self.labels, self.g) if gv >= -tol]


def multiplier_report(problem: NlpProblem, result: NlpResult) -> MultiplierReport:
    """Per-inequality multipliers with the worst complementarity product ``|mu g|``."""
    comp = float(np.max(np.abs(result.mu_ineq * result.ineq_values))) if result.mu_ineq.size else 0.0
    return MultiplierReport(result.lam_eq.copy(), result.mu_ineq.copy(), result.ineq_values.copy(),
                            problem.ineq_labels(result.x), comp)
