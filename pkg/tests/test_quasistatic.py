import functools
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from xmesh1d import analytic
from xmesh1d.mesh import PrevSnapshot, build_uniform, constraint_residuals
from xmesh1d.model import TABLE1, MaterialParams, ModelKind, derive
from xmesh1d.potential import evaluate
from xmesh1d.quasistatic import (History, LoadSchedule, StepState, basin_scan, cohesive_pairs,
                                 detect_reloading, dissipated_energy, l2_error, lip_ansatz, run,
                                 xmesh_residuals)

P = TABLE1
DP = derive(P)


@functools.lru_cache(maxsize=None)
def short_run(model, mode, steps=60):
    return run(model, mode, P, 5, LoadSchedule(steps=steps))


def test_schedule_values():
    s = LoadSchedule(steps=4, umax_factor=1.0)
    assert np.allclose(s.values(DP.wc), np.linspace(0, DP.wc, 5))
    z = LoadSchedule.default(zoom=True)
    v = z.values(DP.wc)
    assert v[0] == 0.0 and np.all(np.diff(v) > 0)
    assert v.size == 201 + 200 - np.intersect1d(np.linspace(0, 1.1 * DP.wc, 201),
                                                np.linspace(0.95 * DP.wc, 1.01 * DP.wc, 200)).size
    with pytest.raises(ValueError):
        LoadSchedule(steps=0)
    with pytest.raises(ValueError):
        LoadSchedule(zoom=(1.0, 0.5, 10))


@pytest.mark.parametrize("model", ["phase", "lip"])
@pytest.mark.parametrize("mode", ["fixed", "xmesh"])
def test_elastic_phase(model, mode):
    hist = run(model, mode, P, 5, LoadSchedule(steps=5, umax_factor=0.2))
    for s in hist.steps:
        assert np.all(s.d == 0.0)
        assert s.sigma == pytest.approx(P.E * s.U / P.L, rel=1e-12)
        assert s.err2 <= 1e-12
        assert s.Wd == pytest.approx(0.0, abs=1e-12 * P.Gc)


def test_invalid_configuration_rejected():
    with pytest.raises(ValueError):
        run("phase", "fixed", MaterialParams(L=0.05), 5)
    with pytest.raises(ValueError):
        run("phase", "moving", P, 5)


@pytest.mark.parametrize("model", ["phase", "lip"])
@pytest.mark.parametrize("mode", ["fixed", "xmesh"])
def test_run_invariants(model, mode):
    hist = short_run(model, mode)
    assert hist.all_converged
    steps = hist.steps
    for k, s in enumerate(steps):
        # symmetric damage, antisymmetric displacement on the mirrored bar
        x, u, d = s.full_fields()
        assert np.allclose(x, -x[::-1]) and np.allclose(u, -u[::-1]) and np.allclose(d, d[::-1])
        ev = evaluate(s.d, s.h, s.U, model, P, grad=False)
        assert s.sigma == pytest.approx(P.E * ev.K * s.U / P.L, rel=1e-12, abs=1e-9)
        if k == 0:
            continue
        p = steps[k - 1]
        if mode == "fixed":
            assert np.array_equal(s.h, p.h)
            assert np.all(s.d >= p.d - 1e-10)
        elif np.any(p.d > 0):
            rep = constraint_residuals(s.d, s.h, PrevSnapshot(p.x, p.d, p.h), model, P)
            assert rep.max_violation(P.L) <= 1e-8
    wd = hist.Wd
    assert np.all(np.diff(wd) >= -1e-10 * P.Gc)
    d0 = np.array([s.d0 for s in steps])
    assert np.all(np.diff(d0) >= -1e-10)


@pytest.mark.parametrize("model", ["phase", "lip"])
def test_xmesh_breaks_once(model):
    hist = short_run(model, "xmesh")
    flags = [s.broken for s in hist.steps]
    first = flags.index(True)
    assert all(flags[first:]) and not any(flags[:first])
    assert hist.U_star < DP.wc
    for s in hist.steps[first:]:
        assert s.d0 == 1.0 and s.sigma == 0.0
        assert s.h0 <= 1e-6 * P.L
        assert np.allclose(s.u, 0.5 * s.U)


def test_fixed_never_breaks():
    hist = short_run("phase", "fixed")
    assert not hist.broken and hist.U_star is None
    assert all(s.sigma > 0 for s in hist.steps[1:])


def test_energy_balance():
    hist = short_run("phase", "fixed")
    U = hist.U
    sig = hist.sigma
    bound = np.cumsum(np.concatenate(([0.0], 0.5 * np.abs(np.diff(U)) * np.abs(np.diff(sig)))))
    for s, b in zip(hist.steps, bound):
        # work - stored - dissipated, with dissipated = Gc W
        assert abs(s.Wd - P.Gc * s.W) <= b + 1e-9 * P.Gc


def synthetic(U, sigma, d0=None):
    hist = History(ModelKind.LIP, "fixed", P, 5)
    for k, (u, s) in enumerate(zip(U, sigma)):
        d = np.array([0.0 if d0 is None else d0[k], 0.0])
        hist.steps.append(StepState(k, u, d, np.array([0.1, 0.05]), np.zeros(2), s, 0.0, 1.0, 0.0,
                                    "converged", 0.0))
    wd = dissipated_energy(hist)
    for s, w in zip(hist.steps, wd):
        s.Wd = w
    return hist


def test_dissipated_energy_elastic_history():
    U = np.linspace(0, DP.Uc, 11)
    hist = synthetic(U, P.E * U / P.L)
    assert np.allclose(hist.Wd, 0.0, atol=1e-12 * P.Gc)
    with pytest.raises(ValueError):
        dissipated_energy(History(ModelKind.LIP, "fixed", P, 5))


def test_detect_reloading_synthetic():
    U = np.array([0, 1, 2, 3, 4, 5, 6], dtype=float) * 1e-5
    # load, soften, then reload elastically along a secant through the origin
    sig = np.array([0.0, 1.0, 1.5, 0.9, 0.6, 0.8, 0.5]) * 1e6
    d0 = np.array([0, 0, 0.1, 0.3, 0.5, 0.5, 0.6])
    hist = synthetic(U, sig, d0)
    # the step 4->5 rise is elastic only if no work is dissipated: force it
    s4, s5 = hist.steps[4], hist.steps[5]
    s5.sigma = s4.sigma * s5.U / s4.U
    for s, w in zip(hist.steps, dissipated_energy(hist)):
        s.Wd = w
    assert detect_reloading(hist) == [5]
    # elastic loading before onset does not count
    assert 1 not in detect_reloading(hist) and 2 not in detect_reloading(hist)


def test_l2_error_examples():
    hist = short_run("lip", "fixed")
    s = hist.steps[5]
    assert l2_error(s, "lip", P, u_exact=lambda x: np.interp(x, *s.full_fields()[:2])) <= 1e-15
    # uniform elastic state with u scaled by 1%
    m = build_uniform("lip", P, 5)
    U = 0.5 * DP.Uc
    st = StepState(1, U, np.zeros(m.n + 1), m.h.copy(), 1.01 * U * m.x / P.L, P.E * U / P.L, 0, 1, 0,
                   "converged", 0.0)
    assert l2_error(st, "lip", P) == pytest.approx(0.01, rel=1e-10)


def test_residuals_on_converged_steps():
    for model in ("phase", "lip"):
        hist = short_run(model, "xmesh")
        for k, s in enumerate(hist.steps):
            r = xmesh_residuals(s, model, P, prev=hist.previous(k))
            if s.d0 == 0.0:
                assert r.law == 0.0 and r.n_other == 0
            if model == "lip":
                assert r.n_other == 0
            finite = r.hopti[np.isfinite(r.hopti)]
            assert np.all(np.abs(finite) <= 1e-6)


def test_cohesive_pairs_shapes():
    hist = short_run("phase", "xmesh")
    cp = cohesive_pairs(hist)
    assert cp.w.shape == cp.sigma.shape == cp.gap.shape == (len(hist.steps),)
    assert cp.gap[0] == pytest.approx(-P.sigc)


def test_basin_scan():
    m = build_uniform("lip", P, 5)
    U = 0.7 * DP.wc
    assert basin_scan(m, U, P, [0.0])[0] == pytest.approx(0.5 * P.E * U * U / P.L)
    coarse = basin_scan(m, U, P, np.linspace(0, 1, 201))
    fine = basin_scan(m, U, P, np.linspace(0, 1, 1601))
    assert np.max(np.abs(np.diff(fine))) < np.max(np.abs(np.diff(coarse)))
    with pytest.raises(ValueError):
        basin_scan(m, U, P, [0.1], model="phase")


def test_basin_corners_at_node_entry():
    # the slope of F(d0) jumps where d0 lc crosses a node
    m = build_uniform("lip", P, 5)
    U = 0.7 * DP.wc
    x1 = m.x[1]
    t = x1 / P.lc
    eps = 1e-6
    f = basin_scan(m, U, P, [t - 2 * eps, t - eps, t, t + eps, t + 2 * eps])
    left = (f[1] - f[0]) / eps
    right = (f[4] - f[3]) / eps
    smooth = basin_scan(m, U, P, [0.5 * t - eps, 0.5 * t, 0.5 * t + eps])
    assert abs(right - left) > 1e3 * abs((smooth[2] - smooth[1]) - (smooth[1] - smooth[0])) / eps
    assert np.allclose(lip_ansatz(m.x, t, P.lc)[1:], 0.0)


def test_first_damaged_step_matches_analytic_stress():
    hist = short_run("lip", "xmesh")
    s = next(s for s in hist.steps if 0 < s.d0 < 1)
    assert s.sigma / P.sigc == pytest.approx(1 - s.d0 ** 2, abs=1e-9)
    assert np.all(s.d[1:] == 0.0)
    # reduced oracle: centre element (d0, h0) plus one ramp element of size h1
    U, lc = s.U, P.lc

    def omega(d):
        return (1 - d * d) ** 2 / ((1 - d * d) ** 2 + 2 * d / DP.gamma)

    def energy(v):
        d0, h0, h1 = v[0], math.exp(v[1]) * lc, (v[0] + v[2] ** 2) * lc
        rest = P.L - h0 - 2 * h1
        if not 0 <= d0 < 1 or rest <= 0:
            return np.inf
        comp = h0 / omega(d0) + 2 * h1 / omega(0.5 * d0) + rest
        return 0.5 * P.E * U * U / comp + P.Gc * (h0 * d0 + h1 * d0) / lc
    starts = [(a, b, 0.1) for a in (0.03, 0.08, 0.15) for b in (-4.0, -2.0)]
    best = min((minimize(energy, x0, method="Nelder-Mead",
                         options=dict(xatol=1e-12, fatol=1e-14, maxiter=20000)) for x0 in starts),
               key=lambda r: r.fun)
    assert s.F == pytest.approx(best.fun, rel=1e-9)
    assert s.d0 == pytest.approx(best.x[0], abs=1e-5)
    assert s.d0 < analytic.d0_of_U("lip", s.U, P)
