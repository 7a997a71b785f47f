"""Conditional densities on unstable curves, empirical SRB measures and stable holonomy tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from .errors import AllSeedsEscaped, InsufficientPast, MassLeak, OutOfDomain
from .geometry import PiecewiseMap, cylinder_section
from .graph_transform import DEFAULT_GRID, CurveGraph, unstable_tower
from .orbits import JITTER, GROUP_SIZE, Walker, make_rng, map_groups, seed_groups
from .symbolic import symbols_of

NORMS = ("max", "euclidean")
MEASURE_POINTS = 1025


def _norm(a, b, norm):
    if norm == "max":
        return np.maximum(np.abs(a), np.abs(b))
    return np.hypot(a, b)


def _unit_tangent(h, norm):
    n = _norm(np.ones_like(h), h, norm)
    return 1.0 / n, h / n


# -- unstable Jacobian --------------------------------------------------------

def unstable_jacobian(fmap: PiecewiseMap, curve: CurveGraph, x, norm: str = "max"):
    """|DF v| for v the unit tangent of ``curve`` at (x, g(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((x < 0.0) | (x > 1.0)):
        raise OutOfDomain("abscissa outside [0, 1]", x=x.tolist())
    y = curve(x)
    keys, _ = fmap.locate(x, y)
    if not np.all(fmap.key_valid(keys)):
        raise OutOfDomain("curve point lies on no enumerated branch", x=x.tolist())
    jet = fmap.jet(keys, x, y)
    v1, v2 = _unit_tangent(curve.slope(x), norm)
    a, b = jet.apply(v1, v2)
    return _norm(a, b, norm)


# -- Sinai densities ------------------------------------------------------------

def backward_log_jacobians(fmap: PiecewiseMap, past, x, tower, norm: str = "max"):
    """log D^uF at F^{-s}(x, g(x)) for s = 1..len(past), shape (len(past), P).

    ``tower`` comes from unstable_tower. Inverse branches expand the vertical
    direction, so each backward image is projected back onto the curve of its
    level; the tangent there is the curve's own slope.
    Also returns the backward orbits (xs, ys) of shape (len(past)+1, P).
    """
    syms = symbols_of(past)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = len(syms)
    xs = np.empty((m + 1,) + x.shape)
    ys = np.empty_like(xs)
    xs[0], ys[0] = x, tower[0](x)
    logs = np.empty((m,) + x.shape)
    for s in range(1, m + 1):
        X, _ = fmap.inverse(syms[-s], xs[s - 1], ys[s - 1])
        xs[s] = np.clip(X, 0.0, 1.0)
        ys[s] = tower[s](xs[s])
        v1, v2 = _unit_tangent(tower[s].slope(xs[s]), norm)
        a, b = fmap.jet(syms[-s], xs[s], ys[s]).apply(v1, v2)
        logs[s - 1] = np.log(_norm(a, b, norm))
    return logs, xs, ys


@lru_cache(maxsize=16)
def _cached_tower(fmap, syms, n_grid):
    return tuple(unstable_tower(fmap, syms, n_grid))


def tower_for(fmap: PiecewiseMap, past, n_grid: int = DEFAULT_GRID):
    return _cached_tower(fmap, symbols_of(past), n_grid)


@dataclass
class SinaiDensity:
    """Conditional density xi(x1, x) on the unstable curve of ``past``, basepoint x1."""

    fmap: PiecewiseMap
    past: tuple
    tower: tuple
    basepoint: float
    depth: int
    norm: str = "max"
    values: np.ndarray = field(default=None)
    tail_bound: float = 0.0
    K6: float = 1.0
    q: float = 0.5

    @property
    def curve(self) -> CurveGraph:
        return self.tower[0]

    def log_xi(self, x):
        """log xi(basepoint, x) truncated at ``depth``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pts = np.concatenate([[self.basepoint], x])
        logs, _, _ = backward_log_jacobians(self.fmap, self.past, pts, self.tower, self.norm)
        head = np.sum(logs[:self.depth], axis=0)
        return head[0] - head[1:]

    def xi(self, x):
        return np.exp(self.log_xi(x))

    def rho_weight(self, x):
        """Arclength density of the curve with respect to dx."""
        h = self.curve.slope(x)
        return _norm(np.ones_like(h), h, self.norm)


def _tail_terms(logs, depth, q):
    """Sum of |log-ratio terms| past ``depth`` plus a geometric extrapolation."""
    d = np.abs(logs[:, 1:] - logs[:, :1])
    avail = float(np.max(np.sum(d[depth:], axis=0))) if depth < d.shape[0] else 0.0
    last = float(np.max(d[-min(3, d.shape[0]):]))
    # rounding in the truncated sums of logs
    rounding = 4.0 * np.finfo(float).eps * float(np.max(np.sum(np.abs(logs[:depth]), axis=0)) + 1.0)
    return avail + last * q / (1.0 - q) + rounding


def _check_depth(syms, depth, norm):
    if depth > len(syms):
        raise InsufficientPast(f"depth {depth} exceeds the past length {len(syms)}",
                               depth=depth, past_length=len(syms))
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")


def sinai_density(fmap: PiecewiseMap, past, x1: float, x2: float, depth: int,
                  norm: str = "max", n_grid: int = DEFAULT_GRID):
    """(xi(x1, x2), tail_bound) from the first ``depth`` backward Jacobian ratios.

    The whole past is used to place backward images; terms beyond ``depth``
    feed the tail bound.
    """
    syms = symbols_of(past)
    _check_depth(syms, depth, norm)
    tower = tower_for(fmap, syms, n_grid)
    logs, _, _ = backward_log_jacobians(fmap, syms, np.array([x1, x2]), tower, norm)
    lx = float(np.sum(logs[:depth, 0]) - np.sum(logs[:depth, 1]))
    xi = float(np.exp(lx))
    T = _tail_terms(logs, depth, 1.0 / fmap.cone.K0)
    return xi, xi * float(np.expm1(T))


def sinai_density_on_curve(fmap: PiecewiseMap, past, x1: float = 0.5, depth: int | None = None,
                           norm: str = "max", n_grid: int = DEFAULT_GRID) -> SinaiDensity:
    """Density values on the curve grid with a tail bound and a sandwich constant K6."""
    syms = symbols_of(past)
    depth = len(syms) if depth is None else int(depth)
    _check_depth(syms, depth, norm)
    tower = tower_for(fmap, syms, n_grid)
    dens = SinaiDensity(fmap, syms, tower, float(x1), depth, norm, q=1.0 / fmap.cone.K0)
    pts = np.concatenate([[x1], tower[0].x])
    logs, _, _ = backward_log_jacobians(fmap, syms, pts, tower, norm)
    head = np.sum(logs[:depth], axis=0)
    lv = head[0] - head[1:]
    T = _tail_terms(logs, depth, dens.q)
    dens.values = np.exp(lv)
    dens.tail_bound = float(np.max(dens.values) * np.expm1(T))
    # xi(a, b) = exp(lv[b] - lv[a]); the sandwich covers all pairs plus the tail
    dens.K6 = float(np.exp(np.max(lv) - np.min(lv) + 2.0 * T) * (1.0 + 1e-12))
    return dens


def local_measure(density: SinaiDensity, A, points: int = MEASURE_POINTS) -> float:
    """Integral of xi(x1, .) against arclength over the sub-interval A of the curve domain."""
    a, b = float(A[0]), float(A[1])
    lo, hi = density.curve.domain
    if a < lo - 1e-15 or b > hi + 1e-15 or b < a:
        raise ValueError(f"interval {A} is not inside the curve domain {(lo, hi)}")
    t = np.linspace(a, b, points)
    return float(trapezoid(density.xi(t) * density.rho_weight(t), t))


def sample_curve_measure(density: SinaiDensity, count: int, points: int = MEASURE_POINTS,
                         rng: np.random.Generator | None = None):
    """Abscissae at stratified quantiles (k + u_k)/count of the normalized curve measure.

    Without ``rng`` u_k = 1/2. Midpoint quantiles are rational on affine curves, and
    rational points can have finite codings that run into a branch boundary.
    """
    lo, hi = density.curve.domain
    t = np.linspace(lo, hi, points)
    w = density.xi(t) * density.rho_weight(t)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(t))])
    cdf /= cdf[-1]
    off = 0.5 if rng is None else rng.random(count)
    u = (np.arange(count) + off) / count
    return np.interp(u, cdf, t)


# -- empirical measures -------------------------------------------------------

OBSERVABLES = {
    "x": lambda x, y: x,
    "y": lambda x, y: y,
    "x2": lambda x, y: x * x,
    "xy": lambda x, y: x * y,
    "y2": lambda x, y: y * y,
}


@dataclass
class EmpiricalMeasure:
    """Histogram on an m x m grid plus observable means with per-unit standard errors.

    The units are seeds (Birkhoff) or curve sample points (pushforward); their
    time averages are treated as independent replicates.
    """

    m: int
    counts: np.ndarray
    observables: dict
    errors: dict
    n_points: int
    units_used: int
    units_dropped: int
    per_unit: np.ndarray
    names: tuple
    log_ju: np.ndarray | None = None
    lost_mass: float = 0.0
    method: str = "birkhoff"

    @property
    def hist(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def vector(self):
        return np.array([self.observables[k] for k in self.names])

    def error_vector(self):
        return np.array([self.errors[k] for k in self.names])

    def to_dict(self):
        out = {"m": self.m, "observables": self.observables, "errors": self.errors,
               "n_points": self.n_points, "units_used": self.units_used,
               "units_dropped": self.units_dropped, "lost_mass": self.lost_mass,
               "method": self.method}
        if self.log_ju is not None:
            out["mean_log_unstable_jacobian"] = float(np.mean(self.log_ju))
        return out

    def hist_rows(self):
        """(row, col, mass) with row indexing y bins and col indexing x bins."""
        h = self.hist
        r, c = np.indices(h.shape)
        return np.column_stack([r.ravel(), c.ravel(), h.ravel()])


def _bin_index(x, y, m):
    i = np.minimum((y * m).astype(np.int64), m - 1)
    j = np.minimum((x * m).astype(np.int64), m - 1)
    return i * m + j


def _summarize(m, counts, per_unit, names, used, dropped, n_points, log_ju, method, lost=0.0):
    means = per_unit.mean(axis=0)
    err = per_unit.std(axis=0, ddof=1) / np.sqrt(per_unit.shape[0]) if per_unit.shape[0] > 1 \
        else np.full(len(names), np.inf)
    return EmpiricalMeasure(m, counts.reshape(m, m), {k: float(v) for k, v in zip(names, means)},
                            {k: float(v) for k, v in zip(names, err)}, int(n_points), int(used),
                            int(dropped), per_unit, tuple(names), log_ju, float(lost), method)


CHUNK = 256


class _Accumulator:
    """Histogram counts and per-unit observable sums, fed in blocks of time steps."""

    def __init__(self, units: int, m: int, names, obs):
        self.m, self.names, self.obs = m, names, obs
        self.counts = np.zeros((units, m * m), dtype=np.int64)
        self.sums = np.zeros((units, len(names)))
        self.bx = []
        self.by = []

    def push(self, x, y):
        self.bx.append(x.copy())
        self.by.append(y.copy())
        if len(self.bx) >= CHUNK:
            self.flush()

    def flush(self):
        if not self.bx:
            return
        X, Y = np.array(self.bx), np.array(self.by)  # (T, units)
        units = X.shape[1]
        flat = _bin_index(X, Y, self.m) + (np.arange(units) * self.m * self.m)[None, :]
        self.counts += np.bincount(flat.ravel(), minlength=units * self.m * self.m).reshape(units, -1)
        for c, name in enumerate(self.names):
            self.sums[:, c] += np.sum(self.obs[name](X, Y), axis=0)
        self.bx, self.by = [], []


def birkhoff_srb(fmap: PiecewiseMap, seeds, n: int, m: int = 64, burn_in: int = 1000,
                 observables=None, rng_seed: int = 0, jitter: float = JITTER,
                 track_unstable: bool = False, threads: int = 1,
                 group_size: int = GROUP_SIZE) -> EmpiricalMeasure:
    """Time averages along forward orbits of ``seeds``: burn_in steps, then n recorded points.

    The first recorded point is the state after ``burn_in`` steps, so n = 1 with
    burn_in = 0 records the seeds themselves. Seeds that touch a post boundary or
    leave the enumerated branches are dropped. With ``track_unstable`` the mean of
    log D^uF over the recorded points is kept per seed (tangent started at (1, 0)
    at the first burn-in step).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    obs = observables or OBSERVABLES
    names = tuple(obs)

    def run(gi, idx):
        rng = make_rng(rng_seed, 1, gi)
        w = Walker(fmap, seeds[idx, 0], seeds[idx, 1], rng, jitter, tangent=track_unstable)
        for _ in range(burn_in):
            w.step()
        acc = _Accumulator(idx.size, m, names, obs)
        lj = np.zeros(idx.size)
        for k in range(n):
            acc.push(w.x, w.y)
            if k < n - 1 or track_unstable:
                _, g = w.step()
                if track_unstable:
                    lj += np.nan_to_num(g)
        acc.flush()
        return acc.counts, acc.sums, lj, w.alive.copy()

    parts = map_groups(run, seed_groups(len(seeds), group_size), threads)
    counts = np.concatenate([p[0] for p in parts])
    sums = np.concatenate([p[1] for p in parts])
    lj = np.concatenate([p[2] for p in parts])
    alive = np.concatenate([p[3] for p in parts])
    if not np.any(alive):
        raise AllSeedsEscaped("every seed touched a post boundary or left the enumerated branches",
                              seeds=len(seeds))
    per_seed = sums[alive] / n
    return _summarize(m, counts[alive].sum(axis=0), per_seed, names, int(alive.sum()),
                      int((~alive).sum()), n * int(alive.sum()),
                      lj[alive] / n if track_unstable else None, "birkhoff")


def pushforward_srb(fmap: PiecewiseMap, past, n: int, m: int = 64, points: int = 1024,
                    observables=None, rng_seed: int = 0, jitter: float = JITTER, burn_in: int = 0,
                    depth: int | None = None, leak_threshold: float = 1e-3, threads: int = 1,
                    group_size: int = 256) -> EmpiricalMeasure:
    """Cesaro averages of F^k pushforwards of the conditional measure on an unstable curve.

    The initial measure is represented by ``points`` equal-weight points placed at
    quantiles of the curve's conditional density. Points that leave the enumerated
    branches carry their weight away; more than ``leak_threshold`` of lost weight
    raises MassLeak. ``burn_in`` skips the first pushforwards (0 gives the plain
    Cesaro average from the initial measure).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    syms = symbols_of(past)
    dens = sinai_density_on_curve(fmap, syms, 0.5, depth)
    xs = sample_curve_measure(dens, points, rng=make_rng(rng_seed, 7))
    ys = dens.curve(xs)
    obs = observables or OBSERVABLES
    names = tuple(obs)

    def run(gi, idx):
        rng = make_rng(rng_seed, 2, gi)
        w = Walker(fmap, xs[idx], ys[idx], rng, jitter, drop_boundary=False)
        for _ in range(burn_in):
            w.step()
        acc = _Accumulator(idx.size, m, names, obs)
        for k in range(n):
            acc.push(w.x, w.y)
            if k < n - 1:
                w.step()
        acc.flush()
        return acc.counts, acc.sums, w.alive.copy()

    parts = map_groups(run, seed_groups(points, group_size), threads)
    counts = np.concatenate([p[0] for p in parts])
    sums = np.concatenate([p[1] for p in parts])
    alive = np.concatenate([p[2] for p in parts])
    lost = 1.0 - alive.mean()
    if lost > leak_threshold:
        raise MassLeak(f"{lost:.3%} of the weight left the enumerated branches",
                       lost=float(lost), threshold=leak_threshold)
    per_point = sums[alive] / n
    return _summarize(m, counts[alive].sum(axis=0), per_point, names, int(alive.sum()),
                      int((~alive).sum()), n * int(alive.sum()), None, "pushforward", lost)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    cells: int

    def passes(self, significance: float = 1e-3) -> bool:
        return self.p_value > significance

    def to_dict(self):
        return {"statistic": self.statistic, "dof": self.dof, "p_value": self.p_value,
                "cells": self.cells}


def chi_square(counts, probs=None, min_expected: float = 20.0) -> ChiSquareResult:
    """Pearson test of counts against cell probabilities (uniform by default).

    Cells are merged in order of increasing expected count until each merged
    cell expects at least ``min_expected``.
    """
    c = np.asarray(counts, dtype=float).ravel()
    p = np.full(c.size, 1.0 / c.size) if probs is None else np.asarray(probs, dtype=float).ravel()
    e = p / p.sum() * c.sum()
    order = np.argsort(e, kind="stable")
    oc, oe = [], []
    acc_c = acc_e = 0.0
    for i in order:
        acc_c += c[i]
        acc_e += e[i]
        if acc_e >= min_expected:
            oc.append(acc_c)
            oe.append(acc_e)
            acc_c = acc_e = 0.0
    if acc_e > 0:
        if oe:
            oc[-1] += acc_c
            oe[-1] += acc_e
        else:
            oc.append(acc_c)
            oe.append(acc_e)
    oc, oe = np.array(oc), np.array(oe)
    stat = float(np.sum((oc - oe) ** 2 / oe))
    dof = max(oc.size - 1, 1)
    return ChiSquareResult(stat, dof, float(stats.chi2.sf(stat, dof)), int(oc.size))


def estimators_agree(a: EmpiricalMeasure, b: EmpiricalMeasure, sigmas: float = 3.0):
    """Per-observable |difference| / combined standard error, and whether all are within ``sigmas``."""
    diff = np.abs(a.vector() - b.vector())
    se = np.hypot(a.error_vector(), b.error_vector())
    z = diff / se
    return bool(np.all(z <= sigmas)), dict(zip(a.names, z.tolist()))


# -- stable holonomy ------------------------------------------------------------

@dataclass
class HolonomyReport:
    pairs_used: int
    pairs_dropped: int
    depth: int
    bin_edges: np.ndarray
    bin_density: np.ndarray
    bin_counts: np.ndarray
    density_min: float
    density_max: float
    ratio_min: float
    ratio_max: float
    z: np.ndarray = field(repr=False, default=None)
    w: np.ndarray = field(repr=False, default=None)
    density: np.ndarray = field(repr=False, default=None)
    derivative_ratio: np.ndarray = field(repr=False, default=None)

    @property
    def spread(self) -> float:
        return self.density_max / self.density_min

    def to_dict(self):
        return {"pairs_used": self.pairs_used, "pairs_dropped": self.pairs_dropped,
                "depth": self.depth, "bin_edges": self.bin_edges.tolist(),
                "bin_density": [None if not np.isfinite(v) else float(v) for v in self.bin_density],
                "bin_counts": self.bin_counts.tolist(), "density_min": self.density_min,
                "density_max": self.density_max, "spread": self.spread,
                "derivative_ratio_min": self.ratio_min, "derivative_ratio_max": self.ratio_max}


def _itineraries(fmap, x, y, n):
    syms = np.zeros((x.size, n), dtype=np.int64)
    ok = np.ones(x.size, dtype=bool)
    for k in range(n):
        X, Y, keys, flags = fmap.step(x, y)
        ok &= fmap.key_valid(keys) & ~flags
        syms[:, k] = np.where(ok, keys, 1)
        x, y = X, Y
    return syms, ok


def _log_growth_per_point(fmap, syms, x, curve):
    y = curve(x)
    v1, v2 = curve.tangent(x)
    total = np.zeros_like(x)
    for k in range(syms.shape[1]):
        jet = fmap.jet(syms[:, k], x, y)
        v1, v2 = jet.apply(v1, v2)
        nrm = np.maximum(np.abs(v1), np.abs(v2))
        total += np.log(nrm)
        v1, v2 = v1 / nrm, v2 / nrm
        x, y = jet.value[0], jet.value[1]
    return total


def holonomy_test(fmap: PiecewiseMap, gamma: CurveGraph, eta: CurveGraph, n: int,
                  pairs: int = 1000, bins: int = 8, rng_seed: int = 0,
                  boundary_tol: float = 1e-12) -> HolonomyReport:
    """Holonomy density between two unstable-cone curves by depth-n cylinder matching.

    A point z on gamma is matched with the midpoint w of eta's crossing of z's
    depth-n post cylinder. The density of the pushed-forward arclength at w is
    estimated by the ratio of the two crossing lengths.
    """
    if fmap.n_branches is None and fmap.n_max is None:
        raise ValueError("holonomy sampling needs an enumerable family")
    rng = make_rng(rng_seed, 3)
    x = np.sort(rng.random(pairs))
    y = gamma(x)
    syms, ok = _itineraries(fmap, x.copy(), y.copy(), n)
    ag, bg, eg = cylinder_section(fmap, syms, curve=gamma)
    ae, be, ee = cylinder_section(fmap, syms, curve=eta)
    near = (np.abs(x - ag) < boundary_tol) | (np.abs(bg - x) < boundary_tol)
    good = ok & ~eg & ~ee & ~near & (be > ae) & (bg > ag)
    used = int(good.sum())
    lg = bg - ag
    le = be - ae
    dens = np.where(good, lg / np.where(good, le, 1.0), np.nan)
    wx = 0.5 * (ae + be)
    ratio = np.full(pairs, np.nan)
    if used:
        gi = np.flatnonzero(good)
        ratio[gi] = np.exp(_log_growth_per_point(fmap, syms[gi], x[gi], gamma)
                           - _log_growth_per_point(fmap, syms[gi], wx[gi], eta))
    edges = np.linspace(0.0, 1.0, bins + 1)
    which = np.clip(np.searchsorted(edges, wx, side="right") - 1, 0, bins - 1)
    bd = np.full(bins, np.nan)
    bc = np.zeros(bins, dtype=np.int64)
    for b in range(bins):
        sel = good & (which == b)
        bc[b] = sel.sum()
        if bc[b]:
            bd[b] = float(np.mean(dens[sel]))
    occ = bc > 0
    dmin = float(np.min(bd[occ])) if occ.any() else float("nan")
    dmax = float(np.max(bd[occ])) if occ.any() else float("nan")
    rmin = float(np.nanmin(ratio)) if used else float("nan")
    rmax = float(np.nanmax(ratio)) if used else float("nan")
    w = np.column_stack([wx, eta(wx)])
    return HolonomyReport(used, pairs - used, n, edges, bd, bc, dmin, dmax, rmin, rmax,
                          np.column_stack([x, y]), w, dens, ratio)
