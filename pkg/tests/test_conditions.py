import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import EPS_FIRST_FAILING, EPS_LAST_PASSING, LUEROTH_SERIES, LUEROTH_SERIES_TAIL
from srblab import Baker, Lueroth, PerturbedLueroth
from srblab.conditions import (Grid, Samples, check_all, check_cone_properties,
                               check_derivative_ratios, check_distortion_D1, check_G3, check_geometry,
                               check_hyperbolicity, g3_series, max_expansion_constant, sample_posts,
                               tail_sum)
from srblab.families import ExpressionFamily
from srblab.geometry import ConeParams

CONE = ConeParams(0.5, 2.0)


def margin_values(rep):
    return {k: m.value for k, m in rep.margins.items()}


def single_branch(fm, key, grid=Grid(16, 1)):
    ys = grid.levels()
    xl, xr = fm.post_bounds(key, ys)
    fr = grid.fractions()
    X = (xl[:, None] + fr[None, :] * (xr - xl)[:, None]).ravel()
    Y = np.repeat(ys, fr.size)
    return Samples(np.full(X.size, key), X, Y, np.repeat(xr - xl, fr.size), "")


# -- post geometry ------------------------------------------------------------------

def doubling(x_left, x_right):
    exprs = {"f1": "2*x - (n-1)", "f2": "(y + n - 1)/2", "f1x": 2, "f1y": 0, "f2x": 0, "f2y": 0.5,
             "f1xx": 0, "f1xy": 0, "f1yy": 0, "f2xx": 0, "f2xy": 0, "f2yy": 0,
             "x_left": x_left, "x_right": x_right}
    return ExpressionFamily(exprs, 2)


@pytest.mark.parametrize("fm", [Baker(2), Baker(3), PerturbedLueroth(0.005)])
def test_built_in_posts_tile(fm):
    rep = check_geometry(fm, Grid(16, 40))
    assert rep.satisfied
    assert rep.margins["G1"].value == 0.0
    if fm.n_branches is not None:
        assert rep.margins["G2"].value == 0.0


@pytest.mark.parametrize("branches", [10, 100, 1000])
def test_lueroth_uncovered_length_is_tail(lueroth, branches):
    rep = check_geometry(lueroth, Grid(4, branches))
    assert rep.statistics["G2 uncovered"].value == pytest.approx(1 / (branches + 1), rel=1e-12)
    assert "G2" not in rep.margins and "truncated" in rep.tail_note


def test_overlapping_posts_fail_G1():
    rep = check_geometry(doubling("(n-1)*0.4", "n/2"), Grid(4, 2))
    assert rep.margins["G1"].value == pytest.approx(-0.1)
    assert rep.failing() == ["G1"]


def test_hole_between_posts_fails_G2():
    rep = check_geometry(doubling("(n-1)/2", "n/2 - 0.05*(2-n)"), Grid(4, 2))
    assert rep.margins["G2"].value == pytest.approx(-0.05)
    assert rep.failing() == ["G2"]


# -- hyperbolicity ------------------------------------------------------------------

def test_baker_margins(baker):
    m = margin_values(check_hyperbolicity(baker, CONE))
    assert m["H1"] == pytest.approx(0.75, abs=1e-15)
    assert m["H3"] == pytest.approx(0.75, abs=1e-15)
    assert m["H2"] == 0.0
    assert m["H4"] == 0.0


def test_lueroth_margins_zero_on_first_branch(lueroth):
    rep = check_hyperbolicity(lueroth, CONE)
    m = margin_values(rep)
    assert m["H2"] == 0.0 and m["H4"] == pytest.approx(0.0, abs=1e-15)
    assert m["H1"] > 0 and m["H3"] > 0
    assert rep.margins["H2"].branch == 1
    assert rep.satisfied
    assert "truncated" in rep.tail_note


def test_margins_fail_when_expansion_constant_too_large(baker):
    rep = check_hyperbolicity(baker, ConeParams(0.5, 2.5))
    assert not rep.satisfied
    assert set(rep.failing()) == {"H2", "H4"}


def test_epsilon_sweep_threshold_matches_oracle():
    grid = Grid(points_per_post=64, branches=50)
    ok = check_hyperbolicity(PerturbedLueroth(EPS_LAST_PASSING), grid=grid)
    bad = check_hyperbolicity(PerturbedLueroth(EPS_FIRST_FAILING), grid=grid)
    assert all(v > 0 for v in margin_values(ok).values())
    assert not all(v > 0 for v in margin_values(bad).values())


def test_max_expansion_constant(baker, lueroth):
    assert max_expansion_constant(baker) == 2.0
    assert max_expansion_constant(lueroth) == 2.0
    assert 1.0 < max_expansion_constant(PerturbedLueroth(0.02)) < 2.0


# -- cone properties -------------------------------------------------------------------

def test_baker_cone_slacks(baker):
    m = margin_values(check_cone_properties(baker, CONE))
    assert m["unstable_cone"] == pytest.approx(0.75, abs=1e-15)
    assert m["unstable_expansion"] == 0.0
    assert m["stable_expansion"] == 0.0


def test_lueroth_branch3_cone_slacks(lueroth):
    m = margin_values(check_cone_properties(lueroth, CONE, samples=single_branch(lueroth, 3)))
    # DF(1, -1/2) = (12, -1/24)
    assert m["unstable_cone"] == pytest.approx(0.5 * 12 - 1 / 24)
    assert m["unstable_expansion"] == pytest.approx(10.0)
    assert all(v > 0 for v in m.values())


@given(eps=st.floats(0.0, 0.09), alpha=st.floats(0.2, 0.8), K0=st.floats(1.05, 2.0))
def test_hyperbolicity_implies_cone_properties(eps, alpha, K0):
    fm = PerturbedLueroth(eps)
    cone = ConeParams(alpha, K0)
    s = sample_posts(fm, Grid(8, 12))
    h = check_hyperbolicity(fm, cone, samples=s)
    if all(m.value >= 0 for m in h.margins.values()):
        c = check_cone_properties(fm, cone, samples=s)
        assert all(m.value >= -1e-12 for m in c.margins.values())
        d = check_derivative_ratios(fm, cone, samples=s)
        assert all(m.value >= -1e-12 for m in d.margins.values())


# -- derivative ratios -----------------------------------------------------------------------

def test_baker_derivative_ratios(baker):
    rep = check_derivative_ratios(baker, CONE)
    stats = {k: m.value for k, m in rep.statistics.items()}
    assert stats == {"max f1y/f1x": 0.0, "max f2x/f1x": 0.0, "max f2y/f1x": 0.25}
    assert rep.margins["ratio f2y/f1x"].value == pytest.approx(0.25)


def test_lueroth_f2y_ratio(lueroth):
    for n in (1, 4, 9):
        rep = check_derivative_ratios(lueroth, CONE, samples=single_branch(lueroth, n))
        assert rep.statistics["max f2y/f1x"].value == pytest.approx(1 / (n * (n + 1)) ** 2)


def test_perturbed_derivative_ratios_hold(perturbed):
    rep = check_all(perturbed, grid=Grid(32, 30))
    assert rep.satisfied
    assert rep.sample_count == 32 * 32 * 30


# -- distortion D1 ------------------------------------------------------------------------------

@pytest.mark.parametrize("fm", [Baker(2), Baker(4), Lueroth()])
def test_affine_D1_is_zero(fm):
    assert check_distortion_D1(fm).statistics["D1 sup"].value == 0.0


def test_perturbed_D1_stable_under_truncation(perturbed):
    a = check_distortion_D1(perturbed, Grid(32, 50)).statistics["D1 sup"].value
    b = check_distortion_D1(perturbed, Grid(32, 100)).statistics["D1 sup"].value
    assert 0 < a < math.inf
    assert abs(b - a) <= 0.1 * a


def test_D1_margin_with_constant(perturbed):
    rep = check_distortion_D1(perturbed, Grid(16, 20), C0=1.0)
    assert rep.margins["D1"].value == pytest.approx(1.0 - rep.statistics["D1 sup"].value)


# -- G3 and tail sums ---------------------------------------------------------------------------

def test_G3_baker(baker):
    assert check_G3(baker).partial_sum == pytest.approx(math.log(2), abs=1e-12)


def test_G3_lueroth_series(lueroth):
    r = check_G3(lueroth, 10**6, levels=4)
    assert abs(r.partial_sum - LUEROTH_SERIES) < 1e-3
    assert abs(r.partial_sum - LUEROTH_SERIES) < 1e-9
    assert r.last_term < LUEROTH_SERIES_TAIL and not r.diverging
    assert "1..1000000" in r.tail_note


def test_G3_superexponential_widths_do_not_trigger_divergence():
    i = np.arange(1, 31)
    d = np.exp(-(2.0 ** i))
    r = g3_series(d, d)
    assert not r.diverging
    assert r.partial_sum == pytest.approx(float(np.sum(2.0 ** i * np.exp(-(2.0 ** i)))))


def test_G3_flags_divergent_terms():
    n = np.arange(1, 2001, dtype=float)
    assert g3_series(1 / n, np.exp(-1.0 / np.ones_like(n))).diverging


@given(a=st.integers(1, 300), b=st.integers(1, 300))
def test_G3_partial_sums_monotone(a, b):
    lo, hi = sorted((a, b))
    fm = PerturbedLueroth(0.01)
    assert check_G3(fm, lo, 8).partial_sum <= check_G3(fm, hi, 8).partial_sum


def test_tail_sum_geometric():
    i = np.arange(1, 51)
    x = y = 2.0 ** -i
    r = tail_sum(x, y, math.log(2))
    exact = float(np.sum(i * 2.0 ** -i))
    assert r.value == pytest.approx(exact, abs=1e-12)
    assert r.direct == pytest.approx(exact, abs=1e-12)
    assert abs(exact - 2.0) < 1e-13


def test_tail_sum_all_above_threshold():
    assert tail_sum([1.0, 2.0], [0.9996, 0.9999], 0.0005) == (0.0, 0.0)


def test_tail_sum_orders_agree_on_lueroth_widths(lueroth):
    keys = lueroth.branch_keys(5000)
    dmin, dmax = lueroth.width_ranges(keys)
    r = tail_sum(dmax, dmin, 0.5)
    assert r.value == pytest.approx(r.direct, rel=1e-12)


@given(st.lists(st.tuples(st.floats(1e-6, 1.0), st.floats(1e-9, 0.999)), min_size=1, max_size=40),
       st.floats(0.05, 2.0))
def test_tail_sum_orders_agree(pairs, eps):
    x, y = map(np.array, zip(*pairs))
    r = tail_sum(x, y, eps)
    assert r.value == pytest.approx(r.direct, rel=1e-12, abs=1e-300)
