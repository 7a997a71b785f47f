import numpy as np
import pytest

from srblab import Baker, Lueroth, PerturbedLueroth
from srblab.errors import ContractionViolated, InvalidBranch, NotConverged, OutOfImage
from srblab.graph_transform import (CurveGraph, gamma, invert_base, manifold_continuity, r1, r2,
                                    stable_manifold, transform, unstable_manifold, unstable_tower)
from srblab.symbolic import point_from_itinerary


def random_past(seed, n=30):
    rng = np.random.default_rng(seed)
    return [int(s) for s in rng.choice([1, 2, 3, 4], n, p=[0.5, 0.25, 0.15, 0.1])]


@pytest.fixture(scope="module")
def perturbed_curve():
    fm = PerturbedLueroth(0.005)
    past = random_past(7)
    g, diag = unstable_manifold(fm, past)
    return fm, past, g, diag


def wavy(amp=0.05, base=0.4):
    return CurveGraph.from_function(lambda x: base + amp * np.sin(2 * np.pi * x),
                                    lambda x: 2 * np.pi * amp * np.cos(2 * np.pi * x),
                                    lambda x: -(2 * np.pi) ** 2 * amp * np.sin(2 * np.pi * x))


# -- CurveGraph ------------------------------------------------------------------

def test_curve_graph_is_read_only():
    c = CurveGraph.constant(0.3)
    with pytest.raises(ValueError):
        c.g[0] = 1.0


def test_curve_graph_interpolation_is_hermite():
    c = CurveGraph.from_function(lambda x: x**3, lambda x: 3 * x**2, lambda x: 6 * x, n=5)
    t = np.linspace(0, 1, 101)
    np.testing.assert_allclose(c(t), t**3, atol=1e-14)
    np.testing.assert_allclose(c.slope(t), 3 * t**2, atol=1e-13)
    np.testing.assert_allclose(c.curvature(t), 6 * t, atol=1e-13)


# -- invert_base -----------------------------------------------------------------

def test_invert_base_lueroth_branch3(lueroth):
    u = invert_base(lueroth, 3, CurveGraph.constant(0.2), 0.5)
    assert u[0] == pytest.approx(7 / 24, abs=1e-15)


def test_invert_base_baker_any_curve(baker):
    assert invert_base(baker, 1, wavy(), 0.8)[0] == pytest.approx(0.4, abs=1e-15)


def test_invert_base_perturbed_residual(perturbed):
    g = wavy(0.02)
    x = np.linspace(0.0, 1.0, 1001)
    for key in (1, 2, 7):
        u = invert_base(perturbed, key, g, x)
        X, _ = perturbed.forward(key, u, g(u))
        assert np.max(np.abs(X - x)) < 1e-12


def test_invert_base_outside_image(baker):
    with pytest.raises(OutOfImage):
        # the whole unit curve maps onto [0, 2] under branch 1
        invert_base(baker, 1, CurveGraph.constant(0.5), -0.1)


# -- gamma, r1, r2 ---------------------------------------------------------------

def test_gamma_baker(baker):
    out = gamma(baker, 1, CurveGraph.constant(0.3))
    np.testing.assert_allclose(out.g, 0.15, rtol=0, atol=1e-16)
    assert out.domain == (0.0, 1.0)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_gamma_lueroth(lueroth, n):
    c = 0.37
    out = gamma(lueroth, n, CurveGraph.constant(c))
    np.testing.assert_allclose(out.g, (1 - 1 / n) + c / (n * (n + 1)), atol=1e-15)


def test_gamma_nonlinear_against_forward_mapping(perturbed):
    g = wavy(0.03)
    out = gamma(perturbed, 2, g)
    # forward-map 10^3 graph points of post 2 and compare with the image curve
    u = invert_base(perturbed, 2, g, np.linspace(0, 1, 1000))
    X, Y = perturbed.forward(2, u, g(u))
    assert np.max(np.abs(out(X) - Y)) < 1e-8


def test_r1_affine_diagonal(lueroth):
    n, h = 3, 0.4
    out = r1(lueroth, n, CurveGraph.constant(0.5), H=lambda u: np.full_like(u, h))
    a, d = n * (n + 1.0), 1.0 / (n * (n + 1.0))
    np.testing.assert_allclose(out, d * h / a, rtol=1e-14)


def test_r1_baker(baker):
    out = r1(baker, 1, CurveGraph.constant(0.5), H=lambda u: np.full_like(u, 0.5))
    np.testing.assert_allclose(out, 0.125, rtol=1e-15)


def test_r2_affine(lueroth):
    n, j = 2, 0.8
    g = CurveGraph.constant(0.5)
    assert not np.any(r2(lueroth, n, g))
    out = r2(lueroth, n, g, J=lambda u: np.full_like(u, j))
    lam = n * (n + 1.0)
    np.testing.assert_allclose(out, (1 / lam) * j * (1 / lam) ** 2, rtol=1e-14)


def test_r1_r2_match_finite_differences_of_gamma(perturbed_curve):
    fm, past, g, _ = perturbed_curve
    x = np.linspace(0.05, 0.95, 37)
    h1, h2 = 1e-6, 1e-4
    key = past[-1]
    slope = r1(fm, key, g, grid=x)
    curv = r2(fm, key, g, grid=x)
    vals1 = [gamma(fm, key, g, grid=x + s).g for s in (h1, -h1)]
    vals2 = [gamma(fm, key, g, grid=x + s).g for s in (h2, 0.0, -h2)]
    assert np.max(np.abs(slope - (vals1[0] - vals1[1]) / (2 * h1))) < 1e-6
    assert np.max(np.abs(curv - (vals2[0] - 2 * vals2[1] + vals2[2]) / h2**2)) < 1e-4


def test_contraction_violation_is_reported():
    # a horizontal shear larger than the expansion pushes |R1| past 1
    from srblab.families import ExpressionFamily

    exprs = {"f1": "2*x - (n-1)", "f2": "(y + n - 1)/2 + 2.5*(x - (n-1)/2)", "f1x": 2, "f1y": 0,
             "f2x": 2.5, "f2y": 0.5, "f1xx": 0, "f1xy": 0, "f1yy": 0, "f2xx": 0, "f2xy": 0,
             "f2yy": 0, "x_left": "(n-1)/2", "x_right": "n/2"}
    fm = ExpressionFamily(exprs, 2)
    with pytest.raises(ContractionViolated):
        transform(fm, 1, CurveGraph.constant(0.5), grid=np.linspace(0, 1, 9))


# -- unstable manifolds ----------------------------------------------------------

@pytest.mark.parametrize("fm", [Baker(2), Lueroth()])
def test_affine_first_branch_gives_bottom_edge(fm):
    past = [1] * 45
    g, diag = unstable_manifold(fm, past)
    assert np.max(np.abs(g.g)) <= 2.0 ** -len(past)
    assert not np.any(g.dg) and not np.any(g.d2g)
    assert diag.converged and diag.iterations <= 2


def test_baker_manifold_is_horizontal_line_through_coded_height(baker):
    past = [1, 2, 2, 1, 2, 1, 1, 1, 2, 2] * 4
    g, diag = unstable_manifold(baker, past)
    # height has binary digits past[-1], past[-2], ... (symbol 2 -> digit 1)
    y = sum((s - 1) * 2.0 ** -(k + 1) for k, s in enumerate(reversed(past)))
    np.testing.assert_allclose(g.g, y, atol=2.0 ** -len(past))
    assert diag.d0[-1] <= 1e-12 and diag.iterations <= 3


def test_perturbed_manifold_cone_and_curvature(perturbed_curve):
    fm, _, g, diag = perturbed_curve
    assert diag.converged
    assert np.max(np.abs(g.dg)) <= fm.cone.alpha
    assert np.max(np.abs(g.d2g)) <= diag.K2
    assert diag.slope_slack > 0 and diag.lipschitz_slack > 0 and diag.curvature_slack > 0
    assert np.all((g.g >= 0) & (g.g <= 1))


def test_perturbed_manifold_graph_invariance(perturbed_curve):
    fm, past, g, _ = perturbed_curve
    shorter, _ = unstable_manifold(fm, past[:-1])
    u = invert_base(fm, past[-1], shorter, np.linspace(0, 1, 301))
    X, Y = fm.forward(past[-1], u, shorter(u))
    assert np.max(np.abs(g(X) - Y)) < 1e-6


def test_transform_contracts_vertical_distance(perturbed):
    a, b = CurveGraph.constant(0.2), CurveGraph.constant(0.8)
    for key in random_past(9, 12):
        before = a.sup_distance(b)[0]
        a, b = gamma(perturbed, key, a), gamma(perturbed, key, b)
        assert a.sup_distance(b)[0] <= before / perturbed.cone.K0


def test_not_converged_carries_diagnostics(perturbed):
    with pytest.raises(NotConverged) as err:
        unstable_manifold(perturbed, random_past(3), tol=1e-15, max_iter=3)
    assert err.value.diagnostics.iterations == 3
    assert not err.value.diagnostics.converged


def test_unknown_symbol_in_past(baker):
    with pytest.raises(InvalidBranch):
        unstable_manifold(baker, [1, 2, 3, 1])


def test_unstable_tower_levels(perturbed_curve):
    fm, past, g, _ = perturbed_curve
    tower = unstable_tower(fm, past)
    assert len(tower) == len(past) + 1
    assert tower[0].sup_distance(g)[0] < 1e-9


# -- stable manifolds ------------------------------------------------------------

def test_baker_stable_vertical_line(baker):
    g, _ = stable_manifold(baker, [1] * 45)
    assert np.max(np.abs(g.g)) <= 2.0 ** -45


def test_lueroth_stable_fixed_point_of_branch3(lueroth):
    # 12x - 3 = x
    g, _ = stable_manifold(lueroth, [3] * 40)
    np.testing.assert_allclose(g.g, 3 / 11, atol=1e-12)


def test_stable_and_unstable_meet_at_coded_point(perturbed):
    past, future = random_past(11, 20), random_past(12, 20)
    gu, _ = unstable_manifold(perturbed, past)
    gs, _ = stable_manifold(perturbed, future)
    p = point_from_itinerary(perturbed, past, future, 20)
    # fixed-point iteration x = gs(gu(x)) on the two graphs
    x = 0.5
    for _ in range(60):
        x = float(gs(np.array([gu(np.array([x]))[0]]))[0])
    y = float(gu(np.array([x]))[0])
    assert abs(x - p.x) <= p.residual + 1e-9
    assert abs(y - p.y) <= p.residual + 1e-9


# -- continuity --------------------------------------------------------------------

def test_identical_itineraries_have_zero_distance(baker):
    assert manifold_continuity(baker, [1, 2] * 20, [1, 2] * 20) == (0.0, 0.0, 0.0)


def test_baker_continuity_rate(baker):
    N = 12
    tail = [1, 2, 2, 1, 1, 2, 1, 2, 1, 1, 2, 2]
    p1 = [1] * 30 + tail
    p2 = [2] * 30 + tail
    d0, _, _ = manifold_continuity(baker, p1, p2)
    assert 0 < d0 <= 2.0 ** -N


def test_perturbed_continuity_decreases_with_shared_depth(perturbed):
    common = random_past(21, 15)
    rng = np.random.default_rng(5)
    out = []
    for N in (5, 10, 15):
        a = [int(s) for s in rng.choice([1, 2], 25)] + common[-N:]
        b = [int(s) for s in rng.choice([3, 4], 25)] + common[-N:]
        out.append(manifold_continuity(perturbed, a, b))
    for k in range(3):
        assert out[0][k] > out[1][k] > out[2][k]
