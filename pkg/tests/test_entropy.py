import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import LUEROTH_SERIES
from srblab import Baker, Lueroth, PerturbedLueroth, power_map
from srblab.entropy import (block_entropy, bound_constant, directional_trace, entropy_cylinder,
                            entropy_derivative_growth, entropy_directional, entropy_integral,
                            partition_entropy)
from srblab.errors import AllSeedsEscaped, ConeEscape, StripsOverlap, UnderSampled
from srblab.families import ExpressionFamily
from srblab.measures import birkhoff_srb

LOG2 = math.log(2)


def seeds(k, seed=0):
    return np.random.default_rng(seed).random((k, 2))


# -- derivative growth -------------------------------------------------------------

def test_baker_derivative_growth_is_log2(baker):
    e = entropy_derivative_growth(baker, seeds(8), 2000)
    assert abs(e.value - LOG2) < 1e-12
    assert e.dropped == 0


def test_power_map_doubles_entropy(baker):
    e = entropy_derivative_growth(power_map(baker, 2), seeds(8), 2000)
    assert e.value == pytest.approx(2 * LOG2, abs=1e-12)


def test_perturbed_power_map_doubles_entropy(perturbed):
    one = entropy_derivative_growth(perturbed, seeds(16, 1), 4000)
    two = entropy_derivative_growth(power_map(perturbed, 2), seeds(16, 1), 2000)
    assert two.value == pytest.approx(2 * one.value, rel=0.02)


def test_lueroth_derivative_growth_matches_series(lueroth):
    e = entropy_derivative_growth(lueroth, seeds(32), 20000)
    assert abs(e.value - LUEROTH_SERIES) < 0.01 * LUEROTH_SERIES


def test_derivative_growth_needs_long_orbits(baker):
    with pytest.raises(ValueError):
        entropy_derivative_growth(baker, seeds(2), 999)


# -- directional route ---------------------------------------------------------------

def test_baker_directional_is_log2_at_every_step(baker):
    tr = directional_trace(baker, (0.3141, 0.27), (1.0, 0.0), 200, rng_seed=0)
    np.testing.assert_allclose(tr.log_vector / tr.steps, LOG2, rtol=1e-13)
    assert entropy_directional(baker, (0.3141, 0.27), (1.0, 0.0), 500, rng_seed=0).value == pytest.approx(LOG2)


def test_bound_constant():
    assert bound_constant(0.5) == pytest.approx(math.log(1.25 / 0.75))
    assert bound_constant(0.0) == 0.0


@settings(max_examples=25)
@given(st.sampled_from(["baker", "lueroth", "perturbed"]),
       st.tuples(st.floats(0.01, 0.99), st.floats(0.01, 0.99)),
       st.floats(-1.0, 1.0), st.integers(0, 1000))
def test_directional_bound_holds_at_every_step(family, z, s, rs):
    fm = {"baker": Baker(2), "lueroth": Lueroth(), "perturbed": PerturbedLueroth(0.005)}[family]
    v = (1.0, s * fm.cone.alpha)
    try:
        tr = directional_trace(fm, z, v, 300, rng_seed=rs)
    except AllSeedsEscaped:
        # orbits through a post boundary have no itinerary
        assume(False)
    assert np.all(tr.gap_vector_horizontal() <= tr.bound())
    # against the operator norm the first row can add |F1y| <= a|F1x|, so the gap is log(1/(1-a))
    a = fm.cone.alpha
    assert np.all(tr.gap_vector_operator() <= math.log((1 + a) / (1 - a * a)) / tr.steps)


@settings(max_examples=15)
@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.integers(0, 1000))
def test_two_cone_vectors_stay_close(s1, s2, rs):
    fm = PerturbedLueroth(0.005)
    z = (0.61, 0.37)
    a = directional_trace(fm, z, (1.0, s1 * fm.cone.alpha), 300, rng_seed=rs)
    b = directional_trace(fm, z, (1.0, s2 * fm.cone.alpha), 300, rng_seed=rs)
    gap = np.abs(a.log_vector - b.log_vector) / a.steps
    assert np.all(gap <= 2 * a.bound())


def test_directional_rejects_vectors_outside_cone(baker):
    with pytest.raises(ConeEscape):
        directional_trace(baker, (0.3, 0.3), (1.0, 0.9), 10)


# -- cylinder route --------------------------------------------------------------------

def test_baker_cylinder_frequencies():
    e = entropy_cylinder(Baker(2), (0.3141, 0.27), range(1, 13), 10**6)
    for d, value in e.details["per_depth"].items():
        visits = e.details["visits"][d]
        # binomial error of the visit frequency, carried through -(1/d) log
        assert abs(value - LOG2) <= 4 / (int(d) * math.sqrt(visits))


def test_lueroth_depth_one_cylinder_mass(lueroth):
    # x = 0.3141 lies in post 3 whose mass is 1/12
    e = entropy_cylinder(lueroth, (0.3141, 0.27), [1], 10**5)
    p = 1 / 12
    sigma = math.sqrt((1 - p) / (p * 10**5))
    assert abs(e.value - math.log(12)) <= 4 * sigma


def test_cylinder_undersampled(baker):
    with pytest.raises(UnderSampled):
        entropy_cylinder(baker, (0.3141, 0.27), [1, 12], 2000)


def test_block_entropy_baker(baker):
    for d in (1, 4):
        e = block_entropy(baker, seeds(8), d, 20000)
        assert e.value == pytest.approx(LOG2, abs=0.01)


def test_lueroth_partition_entropy_matches_series(lueroth):
    # depth-1 cylinder masses are 1/(n(n+1)), so -sum p log p is the same series
    h = partition_entropy(lueroth, seeds(32), 10000)
    assert math.isfinite(h)
    assert abs(h - LUEROTH_SERIES) < 0.01 * LUEROTH_SERIES


# -- integral route --------------------------------------------------------------------

def test_integral_route_baker(baker):
    srb = birkhoff_srb(baker, seeds(16), 500, burn_in=10, track_unstable=True)
    assert entropy_integral(baker, srb).value == pytest.approx(LOG2, abs=1e-12)


def test_integral_route_lueroth(lueroth):
    srb = birkhoff_srb(lueroth, seeds(64), 5000, burn_in=10, track_unstable=True)
    e = entropy_integral(lueroth, srb)
    assert abs(e.value - LUEROTH_SERIES) <= max(0.01 * LUEROTH_SERIES, 3 * e.stderr)


def test_integral_route_requires_samples(baker):
    srb = birkhoff_srb(baker, seeds(4), 10, burn_in=0)
    with pytest.raises(ValueError):
        entropy_integral(baker, srb)


def test_integral_route_requires_disjoint_strips():
    # the doubling baker written as expressions, without the strip declaration
    exprs = {"f1": "2*x - (n-1)", "f2": "(y + n - 1)/2", "f1x": 2, "f1y": 0, "f2x": 0, "f2y": 0.5,
             "f1xx": 0, "f1xy": 0, "f1yy": 0, "f2xx": 0, "f2xy": 0, "f2yy": 0,
             "x_left": "(n-1)/2", "x_right": "n/2"}
    fm = ExpressionFamily(exprs, 2)
    srb = birkhoff_srb(fm, seeds(4), 10, burn_in=0, track_unstable=True)
    with pytest.raises(StripsOverlap):
        entropy_integral(fm, srb)


def test_perturbed_depth_ten_cylinder_is_out_of_reach(perturbed):
    # mass of a depth-10 cylinder is about exp(-10 h) ~ 1e-9, so 30 visits need ~1e10 steps
    with pytest.raises(UnderSampled):
        entropy_cylinder(perturbed, (0.61, 0.37), [10], 20000)
