import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from xmesh1d.five_element import (FiveElemSetup, GeometryError, classify_stage, explicit_mesh,
                                  f5, f5_reduced, f_inf, f_inf_minima, h0_of, h0d0_of, k5,
                                  local_minima, profile, stage_sweep, transitions,
                                  unique_global_min, write_profiles, write_surface)
from xmesh1d.model import TABLE1, TABLE2
from xmesh1d.potential import f_potential

S = FiveElemSetup()
P = TABLE2
WC = S.wc


def om(d):
    # gamma = 1/2 written out by hand
    q = 1.0 - d * d
    return q * q / (q * q + 4.0 * d)


def test_setup_derived_values():
    assert S.gamma == pytest.approx(0.5)
    assert S.Uc == pytest.approx(2.2e-5)
    h1, h2 = S.sizes(0.3, 0.01)
    assert h1 == pytest.approx(0.06) and h2 == pytest.approx(0.11 - 0.005 - 0.06)


def test_f5_elastic_and_broken_ends():
    U = 0.6 * WC
    assert f5(0.0, 0.0, U) == pytest.approx(0.5 * P.E * U * U / P.L)
    assert k5(1.0, 0.05) == 0.0
    for h0 in (1e-4, 0.01, 0.02):
        assert f5(1.0, h0, U) == pytest.approx(P.Gc / P.lc * h0 + P.Gc)


@given(d0=st.floats(0.0, 0.5), h0=st.floats(0.0, 0.05), f=st.floats(0.0, 1.2))
def test_f5_matches_potential_on_explicit_mesh(d0, h0, f):
    U = f * WC
    d, h = explicit_mesh(d0, h0)
    if h[0] <= 0.0 or h[2] <= 0.0:
        return
    ref = f_potential(d, h, U, "lip", P).value
    assert f5(d0, h0, U) == pytest.approx(ref, rel=1e-10, abs=1e-12 * P.Gc)


def test_strict_geometry():
    with pytest.raises(GeometryError):
        f5(0.9, 0.1, 0.5 * WC, strict=True)
    # the default evaluates the closed form anyway
    assert np.isfinite(f5(0.9, 0.1, 0.5 * WC))
    with pytest.raises(ValueError):
        f5(1.5, 0.0, WC)
    with pytest.raises(ValueError):
        f5(0.5, -1e-3, WC)


def test_h0d0_vanishes_at_full_damage():
    for U in (0.3 * WC, WC):
        assert h0d0_of(1.0, U) == pytest.approx(0.0, abs=1e-18)
        assert abs(h0d0_of(1.0 - 1e-6, U)) < 1e-6


def test_h0d0_root_finding_oracle():
    # E U = sigc (1 - d0^2) L / K5(d0, h0), solved for h0
    d0, U = 0.5, 0.5 * WC

    def k5_hand(h0):
        comp = h0 / om(d0) + 2 * d0 * P.lc / om(0.5 * d0) + P.L - h0 - 2 * d0 * P.lc
        return P.L / comp

    h0 = brentq(lambda h: P.E * U - P.sigc * (1 - d0**2) * P.L / k5_hand(h), 0.0, P.L, xtol=1e-15)
    assert h0d0_of(d0, U) == pytest.approx(h0 * d0, rel=1e-9)


def test_h0d0_negative_below_the_branch():
    d = np.linspace(0.01, 0.99, 99)
    assert np.any(h0d0_of(d, 0.5 * S.Uc) < 0.0)
    assert np.all(h0_of(d, 0.5 * S.Uc) >= 0.0)
    with pytest.raises(ValueError):
        h0d0_of(0.5, 0.5 * WC, FiveElemSetup(TABLE1))


def test_reduced_limits():
    assert f5_reduced(1.0, 0.7 * WC) == pytest.approx(2 * P.sigc**2 / P.E * P.lc)
    assert 2 * P.sigc**2 / P.E * P.lc == pytest.approx(P.Gc)
    assert profile(0.0, 0.7 * WC) == pytest.approx(0.5 * P.E * (0.7 * WC) ** 2 / P.L)


@given(d0=st.floats(0.02, 0.98), f=st.floats(0.3, 1.2))
def test_reduced_equals_composition(d0, f):
    U = f * WC
    prod = h0d0_of(d0, U)
    if prod <= 0.0:
        return
    assert f5_reduced(d0, U) == pytest.approx(f5(d0, prod / d0, U), rel=1e-9)


def test_f_inf_ends():
    U = 0.8 * WC
    for rule in ("zero", "from_reduction"):
        assert f_inf(0.0, U, h0_rule=rule) == pytest.approx(0.5 * P.E * U * U / P.L)
        assert f_inf(1.0, U, h0_rule=rule) == pytest.approx(P.Gc)
    with pytest.raises(ValueError):
        f_inf(0.5, U, h0_rule="other")


@pytest.mark.parametrize("f", [0.1, 0.4, 0.7, 0.9, 1.1])
def test_f_inf_single_global_minimum(f):
    assert unique_global_min(f_inf_minima(f * WC))


def test_local_minima_simple():
    grid = np.linspace(0.0, 1.0, 2001)
    mins = local_minima(lambda t: (t - 0.3123) ** 2 * ((t - 0.9) ** 2 + 0.001), grid)
    assert len(mins) == 2
    assert mins[0].d0 == pytest.approx(0.3123, abs=1e-6)
    assert mins[1].value > mins[0].value and unique_global_min(mins)
    assert not unique_global_min([mins[0], type(mins[0])(0.5, mins[0].value)])


def test_stage_a_below_onset():
    rep = classify_stage(0.9 * S.Uc)
    assert rep.stage == "a"
    assert rep.global_min.at_zero
    with pytest.raises(ValueError):
        classify_stage(0.5 * WC, grid=np.linspace(0, 1, 101))


def test_stage_sequence_and_pins():
    U = np.linspace(0.0, 1.2 * WC, 121)
    tr = transitions(stage_sweep(U))
    assert [t[0] for t in tr] == list("abcde")
    # first load of each label, resolved by bisection (see below)
    pins = dict(b=0.2750001, c=0.5010247, d=0.7328295, e=0.7996979)
    for label, U_first in tr[1:]:
        assert U_first / WC >= pins[label] - 1e-6
        assert U_first / WC <= pins[label] + 0.01 + 1e-6


@pytest.mark.parametrize("label, pin", [("c", 0.5010247), ("d", 0.7328295), ("e", 0.7996979)])
def test_transition_pins(label, pin):
    order = "abcde"
    before = classify_stage((pin - 1e-5) * WC).stage
    after = classify_stage((pin + 1e-5) * WC).stage
    assert order.index(before) == order.index(label) - 1
    assert after == label


def test_stage_c_and_d_minima():
    c = classify_stage(0.6 * WC)
    assert c.stage == "c" and c.interior and not c.global_min.at_one
    d = classify_stage(0.77 * WC)
    assert d.stage == "d" and d.interior and d.global_min.at_one


def test_write_surface_and_profiles(tmp_path):
    path = tmp_path / "surface.csv"
    write_surface(path, 0.6 * WC, n_d=11, n_h=7)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["d0", "h0", "F5"]
    assert len(rows) == 1 + 11 * 7
    d0, h0, v = map(float, rows[1 + 3 * 7 + 2])
    assert v == pytest.approx(f5(d0, h0, 0.6 * WC), rel=1e-15)
    path = tmp_path / "profile.csv"
    write_profiles(path, 0.6 * WC, n=2001)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["d0", "h0", "F5", "Finf"] and len(rows) == 2002
