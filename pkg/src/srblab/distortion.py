"""Scale-normalized distortion of branches and compositions, and derivative ratios along curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCylinder
from .geometry import PiecewiseMap, PowerMap, cylinder_section
from .graph_transform import CurveGraph
from .symbolic import Cylinder, symbols_of

DEGENERATE_WIDTH = 1e-14


@dataclass(frozen=True)
class DistortionReport:
    theta: float
    ratio_max: float
    ratio_min: float
    depth: int
    bound_rhs: float
    pairs: int = 0

    def to_dict(self):
        return {"theta": self.theta, "ratio_max": self.ratio_max, "ratio_min": self.ratio_min,
                "depth": self.depth, "bound_rhs": self.bound_rhs, "pairs": self.pairs}


def _composition(fmap: PiecewiseMap, symbols):
    """(map, key) pair evaluating f_{a(n-1)} o ... o f_{a0} as a single branch."""
    syms = symbols_of(symbols)
    if len(syms) == 1:
        return fmap, syms[0]
    return PowerMap(fmap, len(syms)), syms


def _cylinder_samples(fmap, syms, levels, fractions):
    """Grid of points in the post cylinder E_syms: rows are heights, columns fractions."""
    a, b, empty = cylinder_section(fmap, list(syms), level=levels)
    if np.any(empty):
        raise DegenerateCylinder(f"cylinder {list(syms)} misses some sampled heights", symbols=list(syms))
    X = a[:, None] + fractions[None, :] * (b - a)[:, None]
    Y = np.broadcast_to(levels[:, None], X.shape)
    return X.ravel(), Y.ravel(), a, b


def theta(fmap: PiecewiseMap, symbols, z, levels: int = 17, per_level: int = 16) -> float:
    """Sampled sup over E_symbols of |D^2 F| / |F_1x|, times the z-width of E_symbols.

    ``symbols`` is a single branch index or a string of branches (composition).
    """
    syms = (int(symbols),) if np.ndim(symbols) == 0 else symbols_of(symbols)
    cmap, key = _composition(fmap, syms)
    ys = np.linspace(0.0, 1.0, levels)
    fr = (np.arange(per_level) + 0.5) / per_level
    X, Y, _, _ = _cylinder_samples(fmap, syms, ys, fr)
    jet = cmap.jet(key, X, Y)
    q = float(np.max(jet.d2_norm / np.abs(jet.f1x)))
    za, zb, _ = cylinder_section(fmap, list(syms), level=[float(z[1])])
    return q * float(zb[0] - za[0])


def fluctuation_bound(C: float, theta_value: float, distance: float, width: float) -> float:
    return float(np.exp(C * np.exp(C * theta_value) * distance / width))


def fluctuation_check(fmap: PiecewiseMap, key, curve: CurveGraph, z, w, C: float = 1.0,
                      theta_value: float | None = None):
    """(actual, bound) for the one-step tangent derivative ratio between z and w on ``curve``.

    ``z`` and ``w`` are abscissae on the curve inside post ``key``. The bound uses the
    post's z-width as the scale and theta over the post.
    """
    z, w = float(z), float(w)
    xs = np.array([z, w])
    ys = curve(xs)
    v1, v2 = curve.tangent(xs)
    jet = fmap.jet(key, xs, ys)
    a, b = jet.apply(v1, v2)
    n = np.maximum(np.abs(a), np.abs(b))
    actual = float(n[0] / n[1])
    zl, zr = fmap.post_bounds(key, ys[:1])
    width = float(zr[0] - zl[0])
    th = theta(fmap, key, (z, ys[0])) if theta_value is None else theta_value
    dist = float(max(abs(z - w), abs(ys[0] - ys[1])))
    return actual, fluctuation_bound(C, th, dist, width)


def required_C(actual: float, theta_value: float, distance: float, width: float) -> float:
    """Smallest C with bound(C) >= actual (bisection; the bound increases with C)."""
    need = abs(np.log(actual))
    if need == 0.0 or distance == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while fluctuation_bound(hi, theta_value, distance, width) < np.exp(need):
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if np.log(fluctuation_bound(mid, theta_value, distance, width)) >= need:
            hi = mid
        else:
            lo = mid
    return hi


def calibrate_C(fmap: PiecewiseMap, key, curve: CurveGraph, pairs, theta_value: float | None = None) -> float:
    """Largest per-pair requirement over a training sample of (z, w) abscissae."""
    best = 0.0
    for z, w in pairs:
        actual, _ = fluctuation_check(fmap, key, curve, z, w, C=1.0, theta_value=0.0)
        y = float(curve(np.array([z]))[0])
        zl, zr = fmap.post_bounds(key, np.array([y]))
        th = theta(fmap, key, (z, y)) if theta_value is None else theta_value
        yw = float(curve(np.array([w]))[0])
        dist = max(abs(z - w), abs(y - yw))
        best = max(best, required_C(max(actual, 1.0 / actual), th, dist, float(zr[0] - zl[0])))
    return best


def tangent_log_growth(fmap: PiecewiseMap, symbols, x, curve: CurveGraph):
    """log |DF^n v| (max norm) at points (x, curve(x)) with v the unit curve tangent.

    Per-step factors are accumulated in log space and summed in a fixed order.
    """
    x = np.asarray(x, dtype=float)
    y = curve(x)
    v1, v2 = curve.tangent(x)
    logs = []
    for s in symbols_of(symbols):
        jet = fmap.jet(s, x, y)
        v1, v2 = jet.apply(v1, v2)
        nrm = np.maximum(np.abs(v1), np.abs(v2))
        logs.append(np.log(nrm))
        v1, v2 = v1 / nrm, v2 / nrm
        x, y = jet.value[0], jet.value[1]
    return np.sum(np.array(logs), axis=0) if logs else np.zeros_like(x)


def composition_distortion(fmap: PiecewiseMap, gamma: CurveGraph, cylinder, n: int | None = None,
                           points: int = 64, C: float = 1.0) -> DistortionReport:
    """Extreme ratios |DF^n_z v_z| / |DF^n_w v_w| over points of gamma inside the cylinder."""
    syms = cylinder.itinerary.symbols if isinstance(cylinder, Cylinder) else symbols_of(cylinder)
    n = len(syms) if n is None else int(n)
    syms = syms[:n]
    a, b, empty = cylinder_section(fmap, list(syms), curve=gamma)
    a, b = float(a[0]), float(b[0])
    if empty[0] or b - a < DEGENERATE_WIDTH:
        raise DegenerateCylinder(f"gamma meets cylinder {list(syms)} in width {max(b - a, 0.0):.3e}",
                                 symbols=list(syms), width=max(b - a, 0.0))
    xs = a + (np.arange(points) + 0.5) / points * (b - a)
    L = tangent_log_growth(fmap, syms, xs, gamma)
    spread = float(np.max(L) - np.min(L))
    zmid = (0.5 * (a + b), float(gamma(np.array([0.5 * (a + b)]))[0]))
    th = theta(fmap, syms, zmid)
    # widths of the horizontal slice at the curve height: the natural scale for |z - w|
    za, zb, _ = cylinder_section(fmap, list(syms), level=[zmid[1]])
    width = float(zb[0] - za[0])
    bound = fluctuation_bound(C, th, b - a, width) if width > 0 else float("inf")
    return DistortionReport(th, float(np.exp(spread)), float(np.exp(-spread)), n, bound, points)
