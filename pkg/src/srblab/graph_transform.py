"""Graph transform of curves with first and second derivative transport.

A curve is the graph of y = g(x) over [0, 1], stored on a grid with slope H = Dg
and curvature J = D^2 g. One transform step pushes (g, H, J) through a single
branch. Iterating along a backward itinerary from constant seeds converges to
the unstable manifold of that itinerary. Stable manifolds are obtained from the
same machinery applied to the swapped inverse family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import ContractionViolated, EmptyCylinder, NotConverged, OutOfImage
from .geometry import PiecewiseMap, SwappedInverse, _check_key, cylinder_section
from .symbolic import symbols_of

DEFAULT_GRID = 257
R1_SLACK = 1e-9
IMAGE_TOL = 1e-12


@dataclass(frozen=True)
class CurveGraph:
    """Sampled C^2 graph over a grid: values by cubic Hermite, curvature linearly."""

    x: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.x, self.g, self.dg, self.d2g)]
        if arrs[0].ndim != 1 or arrs[0].size < 2 or np.any(np.diff(arrs[0]) <= 0):
            raise ValueError("grid must be strictly increasing with at least two points")
        if any(a.shape != arrs[0].shape for a in arrs[1:]):
            raise ValueError("g, dg and d2g must match the grid")
        for name, a in zip(("x", "g", "dg", "d2g"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "_spline", CubicHermiteSpline(arrs[0], arrs[1], arrs[2]))

    @classmethod
    def constant(cls, c: float, n: int = DEFAULT_GRID, domain=(0.0, 1.0)):
        x = np.linspace(domain[0], domain[1], n)
        return cls(x, np.full(n, float(c)), np.zeros(n), np.zeros(n))

    @classmethod
    def from_function(cls, f, df, d2f, n: int = DEFAULT_GRID, domain=(0.0, 1.0)):
        x = np.linspace(domain[0], domain[1], n)
        return cls(x, f(x), df(x), d2f(x))

    @property
    def domain(self):
        return float(self.x[0]), float(self.x[-1])

    def _clip(self, t):
        return np.clip(np.asarray(t, dtype=float), self.x[0], self.x[-1])

    def __call__(self, t):
        return self._spline(self._clip(t))

    def slope(self, t):
        return self._spline(self._clip(t), 1)

    def curvature(self, t):
        return np.interp(self._clip(t), self.x, self.d2g)

    def tangent(self, t):
        """Unit tangent (max norm) at abscissae t."""
        h = self.slope(t)
        s = np.maximum(1.0, np.abs(h))
        return 1.0 / s, h / s

    def sup_distance(self, other: "CurveGraph"):
        """(d0, d1, d2) sup-differences on this curve's grid."""
        t = self.x
        return (float(np.max(np.abs(self.g - other(t)))),
                float(np.max(np.abs(self.dg - other.slope(t)))),
                float(np.max(np.abs(self.d2g - other.curvature(t)))))

    def to_rows(self):
        return np.column_stack([self.x, self.g, self.dg, self.d2g])


@dataclass
class StepStats:
    """Per-step contraction quantities sampled along the transformed curve."""

    r1_max: float
    r1_bound: float
    a1: float
    a2: float
    slope_slack: float
    lipschitz_slack: float
    curvature_slack: float

    @property
    def k2(self) -> float:
        return self.a1 / (1.0 - self.a2) if self.a2 < 1.0 else float("inf")


@dataclass
class TransformDiagnostics:
    d0: list = field(default_factory=list)
    d1: list = field(default_factory=list)
    d2: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    tol: float = 0.0
    K2: float = 0.0
    slope_slack: float = float("inf")
    lipschitz_slack: float = float("inf")
    curvature_slack: float = float("inf")
    max_dg: float = 0.0
    max_d2g: float = 0.0

    @staticmethod
    def _ratios(d):
        return [b / a if a > 0 else 0.0 for a, b in zip(d[:-1], d[1:])]

    @property
    def contraction(self):
        return {"d0": self._ratios(self.d0), "d1": self._ratios(self.d1), "d2": self._ratios(self.d2)}

    def absorb(self, st: StepStats):
        self.K2 = max(self.K2, st.k2)
        self.slope_slack = min(self.slope_slack, st.slope_slack)
        self.lipschitz_slack = min(self.lipschitz_slack, st.lipschitz_slack)
        self.curvature_slack = min(self.curvature_slack, st.curvature_slack)

    def to_dict(self):
        return {"d0": self.d0, "d1": self.d1, "d2": self.d2, "contraction": self.contraction,
                "iterations": self.iterations, "converged": self.converged, "tol": self.tol,
                "K2": self.K2, "slope_slack": self.slope_slack, "lipschitz_slack": self.lipschitz_slack,
                "curvature_slack": self.curvature_slack, "max_dg": self.max_dg, "max_d2g": self.max_d2g}


# -- single-branch operations --------------------------------------------------

def invert_base(fmap: PiecewiseMap, key, g: CurveGraph, x, iters: int = 100, tol: float = 1e-13):
    """Solve f_1(u, g(u)) = x for u by safeguarded Newton (vectorized in x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo_d, hi_d = g.domain
    ends = np.array([lo_d, hi_d])
    e1, _ = fmap.forward(key, ends, g(ends))
    sgn = 1.0 if e1[1] >= e1[0] else -1.0
    img_lo, img_hi = min(e1), max(e1)
    if np.any(x < img_lo - IMAGE_TOL) or np.any(x > img_hi + IMAGE_TOL):
        raise OutOfImage(f"x outside the base image [{img_lo}, {img_hi}] of branch {key}",
                         branch=str(key), image=[float(img_lo), float(img_hi)])
    # initial guess from the branch inverse at the curve's mid-height
    u0, _ = fmap.inverse(key, x, np.full(x.shape, float(np.clip(np.mean(g.g), 0.0, 1.0))))
    u = np.clip(np.nan_to_num(u0, nan=0.5 * (lo_d + hi_d)), lo_d, hi_d)
    lo, hi = np.full(x.shape, lo_d), np.full(x.shape, hi_d)
    for _ in range(iters):
        gu = g(u)
        jet = fmap.jet(key, u, gu)
        r = jet.value[0] - x
        if np.all(np.abs(r) < tol):
            break
        below = sgn * r < 0
        lo = np.where(below, u, lo)
        hi = np.where(below, hi, u)
        d = jet.f1x + jet.f1y * g.slope(u)
        step = u - r / d
        bad = (~np.isfinite(step) | (step < lo) | (step > hi)) & (np.abs(r) >= tol)
        u = np.where(bad, 0.5 * (lo + hi), step)
    return u


def _transport(fmap, key, g: CurveGraph, grid, H=None, J=None):
    u = invert_base(fmap, key, g, grid)
    gu = g(u)
    Hu = g.slope(u) if H is None else H(u)
    Ju = g.curvature(u) if J is None else J(u)
    jet = fmap.jet(key, u, gu)
    f1x, f1y, f2x, f2y = jet.f1x, jet.f1y, jet.f2x, jet.f2y
    d2 = jet.d2
    D1 = 1.0 / (f1x + f1y * Hu)
    R1 = (f2x + f2y * Hu) * D1
    A = d2[0, 0, 0] + 2.0 * d2[0, 0, 1] * Hu + d2[0, 1, 1] * Hu * Hu
    B = d2[1, 0, 0] + 2.0 * d2[1, 0, 1] * Hu + d2[1, 1, 1] * Hu * Hu
    D2 = -D1 * (A * D1 * D1 + f1y * Ju * D1 * D1)
    R2 = B * D1 * D1 + f2y * Ju * D1 * D1 + (f2x + f2y * Hu) * D2
    Gv = np.clip(jet.value[1], 0.0, 1.0)

    af = np.abs(f1x)
    e12, e21, e22 = np.abs(f1y) / af, np.abs(f2x) / af, np.abs(f2y) / af
    q = jet.d2_norm / af
    om = 1.0 - e12
    a1 = 4.0 * q / (af * om**2) + (e21 + e22) * 4.0 * q / (om**3 * af)
    a2 = (e21 + e22) * e12 / (om**3 * af) + e22 / (om**2 * af)
    stats = StepStats(
        r1_max=float(np.max(np.abs(R1))),
        r1_bound=float(np.max((e21 + e22) / om)),
        a1=float(np.max(a1)), a2=float(np.max(a2)),
        slope_slack=float(np.min(1.0 - (e21 + e22) / om)),
        lipschitz_slack=float(np.min(1.0 - (e22 / om + (e21 + e22) * e12 / om**2))),
        curvature_slack=float(np.min(1.0 - a2)),
    )
    if stats.r1_max > 1.0 + R1_SLACK:
        raise ContractionViolated(f"|R1| reached {stats.r1_max:.6g} on branch {key}",
                                  branch=str(key), r1=stats.r1_max)
    return Gv, R1, R2, stats


def transform(fmap: PiecewiseMap, key, g: CurveGraph, grid=None):
    """One graph-transform step through branch ``key``: returns (CurveGraph, StepStats)."""
    grid = g.x if grid is None else np.asarray(grid, dtype=float)
    Gv, R1, R2, stats = _transport(fmap, key, g, grid)
    return CurveGraph(grid, Gv, R1, R2), stats


def gamma(fmap: PiecewiseMap, key, g: CurveGraph, grid=None) -> CurveGraph:
    """Image curve f_2 o (1, g) o [f_1 o (1, g)]^{-1}, carrying R1 and R2 as derivative data."""
    return transform(fmap, key, g, grid)[0]


def r1(fmap: PiecewiseMap, key, g: CurveGraph, H=None, grid=None):
    """Slope transport; ``H`` (callable) overrides the curve's own slope."""
    grid = g.x if grid is None else np.asarray(grid, dtype=float)
    return _transport(fmap, key, g, grid, H=H)[1]


def r2(fmap: PiecewiseMap, key, g: CurveGraph, H=None, J=None, grid=None):
    """Curvature transport; ``H`` and ``J`` (callables) override the curve's own data."""
    grid = g.x if grid is None else np.asarray(grid, dtype=float)
    return _transport(fmap, key, g, grid, H=H, J=J)[2]


# -- manifolds -------------------------------------------------------------------

def _seed_heights(fmap: PiecewiseMap, past: tuple, count: int):
    """y-coordinates of the backward orbit of z0, the midpoint of S_past at x = 1/2."""
    for s in set(past):
        _check_key(fmap, s)
    # deep strips can be thinner than float spacing; back off to the longest resolvable suffix
    depth = len(past)
    while True:
        a, b, empty = cylinder_section(SwappedInverse(fmap), list(reversed(past[-depth:])), level=[0.5])
        if not empty[0]:
            break
        if depth == 1:
            raise EmptyCylinder("strip of the last symbol misses x = 1/2", symbols=list(past))
        depth = max(1, depth // 2)
    x, y = np.array([0.5]), np.array([0.5 * (a[0] + b[0])])
    ys = []
    for s in range(1, count + 1):
        x, y = fmap.inverse(past[-s], x, y)
        x, y = np.clip(x, 0.0, 1.0), np.clip(y, 0.0, 1.0)
        ys.append(float(y[0]))
    return ys


def unstable_manifold(fmap: PiecewiseMap, past, tol: float = 1e-10, max_iter: int | None = None,
                      n_grid: int = DEFAULT_GRID):
    """Unstable curve for a backward itinerary (oldest symbol first).

    Iterate n applies the last n symbols to the constant curve through the n-th
    backward image of z0. Iteration stops once successive iterates agree in
    value, slope and curvature to ``tol``.
    """
    syms = symbols_of(past)
    m = len(syms) if max_iter is None else min(int(max_iter), len(syms))
    ys = _seed_heights(fmap, syms, m)
    diag = TransformDiagnostics(tol=tol)
    prev = None
    for n in range(1, m + 1):
        cur = CurveGraph.constant(ys[n - 1], n_grid)
        for s in syms[-n:]:
            cur, st = transform(fmap, s, cur)
            diag.absorb(st)
        diag.iterations = n
        if prev is not None:
            d0, d1, d2 = cur.sup_distance(prev)
            diag.d0.append(d0)
            diag.d1.append(d1)
            diag.d2.append(d2)
            if max(d0, d1, d2) < tol:
                diag.converged = True
                prev = cur
                break
        prev = cur
    diag.max_dg = float(np.max(np.abs(prev.dg)))
    diag.max_d2g = float(np.max(np.abs(prev.d2g)))
    if not diag.converged:
        raise NotConverged(f"graph transform did not reach tol={tol} in {m} iterations",
                           diagnostics=diag)
    return prev, diag


def unstable_tower(fmap: PiecewiseMap, past, n_grid: int = DEFAULT_GRID) -> list:
    """Curves T[s] approximating the unstable curve of past[:len(past) - s], s = 0..len(past).

    A single transform pass from the deepest seed: T[s] has absorbed len(past) - s
    contraction steps, so shallow levels are accurate and the deepest ones coarse.
    Backward orbits of points on T[0] lie on T[s] after s inverse steps.
    """
    syms = symbols_of(past)
    ys = _seed_heights(fmap, syms, len(syms))
    cur = CurveGraph.constant(ys[-1], n_grid)
    tower = [cur]
    for s in syms:
        cur, _ = transform(fmap, s, cur)
        tower.append(cur)
    return tower[::-1]


def stable_manifold(fmap: PiecewiseMap, future, tol: float = 1e-10, max_iter: int | None = None,
                    n_grid: int = DEFAULT_GRID):
    """Stable curve x = g(y) for a forward itinerary, via the swapped inverse family."""
    syms = symbols_of(future)
    return unstable_manifold(SwappedInverse(fmap), tuple(reversed(syms)), tol, max_iter, n_grid)


def manifold_continuity(fmap: PiecewiseMap, past1, past2, tol: float = 1e-10,
                        max_iter: int | None = None, n_grid: int = DEFAULT_GRID):
    g1, _ = unstable_manifold(fmap, past1, tol, max_iter, n_grid)
    g2, _ = unstable_manifold(fmap, past2, tol, max_iter, n_grid)
    return g1.sup_distance(g2)
