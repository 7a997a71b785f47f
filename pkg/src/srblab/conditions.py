"""Sampled verification of the geometric, hyperbolicity, cone, derivative and distortion conditions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import ConeParams, PiecewiseMap, PowerMap, inv2

SATISFIED_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    points_per_post: int = 32
    branches: int = 100

    def levels(self):
        return np.linspace(0.0, 1.0, self.points_per_post)

    def fractions(self):
        return (np.arange(self.points_per_post) + 0.5) / self.points_per_post


@dataclass(frozen=True)
class Margin:
    value: float
    point: tuple
    branch: object


@dataclass
class ConditionReport:
    margins: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    sample_count: int = 0
    tail_note: str = ""

    @property
    def satisfied(self) -> bool:
        return all(m.value >= -SATISFIED_TOL for m in self.margins.values())

    def failing(self) -> list:
        return [k for k, m in self.margins.items() if m.value < -SATISFIED_TOL]

    def merge(self, other: "ConditionReport") -> "ConditionReport":
        notes = "; ".join(n for n in (self.tail_note, other.tail_note) if n)
        notes = "; ".join(dict.fromkeys(notes.split("; "))) if notes else ""
        return ConditionReport({**self.margins, **other.margins},
                               {**self.statistics, **other.statistics},
                               max(self.sample_count, other.sample_count), notes)

    def to_dict(self) -> dict:
        def entry(m):
            return {"value": m.value, "point": list(m.point), "branch": m.branch}
        return {"margins": {k: entry(m) for k, m in self.margins.items()},
                "statistics": {k: entry(m) for k, m in self.statistics.items()},
                "sample_count": self.sample_count, "tail_note": self.tail_note,
                "satisfied": self.satisfied}


def _key_json(k):
    if isinstance(k, np.ndarray):
        return [int(v) for v in k] if k.ndim else int(k)
    if isinstance(k, tuple):
        return [int(v) for v in k]
    return int(k)


class Samples(NamedTuple):
    keys: np.ndarray
    x: np.ndarray
    y: np.ndarray
    width: np.ndarray
    note: str


def sample_posts(fmap: PiecewiseMap, grid: Grid) -> Samples:
    """Grid points inside each enumerated post: y-levels spanning [0, 1], x at interior fractions."""
    keys = fmap.branch_keys(grid.branches)
    note = ""
    if fmap.n_branches is None:
        note = f"countable family truncated at branch {len(keys)}"
    ys = grid.levels()
    fr = grid.fractions()
    karr = np.array(keys)
    if isinstance(fmap, PowerMap):
        kk = np.repeat(karr, ys.size, axis=0)
    else:
        kk = np.repeat(karr, ys.size)
    yy = np.tile(ys, len(keys))
    xl, xr = fmap.post_bounds(kk, yy)
    w = xr - xl
    X = (xl[:, None] + fr[None, :] * w[:, None]).ravel()
    Y = np.repeat(yy, fr.size)
    K = np.repeat(kk, fr.size, axis=0)
    W = np.repeat(w, fr.size)
    return Samples(K, X, Y, W, note)


def _argmin_margin(values, s: Samples) -> Margin:
    i = int(np.argmin(values))
    return Margin(float(values[i]), (float(s.x[i]), float(s.y[i])), _key_json(s.keys[i]))


def _argmax_stat(values, s: Samples) -> Margin:
    i = int(np.argmax(values))
    return Margin(float(values[i]), (float(s.x[i]), float(s.y[i])), _key_json(s.keys[i]))


def check_geometry(fmap: PiecewiseMap, grid: Grid = Grid()) -> ConditionReport:
    """Posts do not overlap (G1) and leave no holes at any sampled height (G2).

    Margins are minus the worst defect, so 0 means an exact tiling. A countable
    family cannot be covered by finitely many posts, so its G2 is reported as the
    uncovered length statistic, which should shrink as branches grow.
    """
    keys = fmap.branch_keys(grid.branches)
    ys = grid.levels()
    L = np.empty((len(keys), ys.size))
    R = np.empty_like(L)
    for i, k in enumerate(keys):
        L[i], R[i] = fmap.post_bounds(k, ys)
    order = np.argsort(L, axis=0, kind="stable")
    L, R = np.take_along_axis(L, order, 0), np.take_along_axis(R, order, 0)
    gap = L[1:] - R[:-1] if len(keys) > 1 else np.zeros((1, ys.size))
    holes = (np.sum(np.maximum(gap, 0.0), axis=0) + np.maximum(L[0], 0.0)
             + np.maximum(1.0 - R[-1], 0.0))
    i, j = np.unravel_index(int(np.argmin(gap)), gap.shape)
    overlap = max(0.0, -float(gap[i, j]))
    g1 = Margin(-overlap if overlap else 0.0, (float(R[i, j]), float(ys[j])),
                _key_json(np.asarray(keys[order[i, j]])))
    jh = int(np.argmax(holes))
    g2 = Margin(-float(holes[jh]) if holes[jh] else 0.0, (0.0, float(ys[jh])), None)
    if fmap.n_branches is None:
        return ConditionReport({"G1": g1}, {"G2 uncovered": Margin(-g2.value, g2.point, None)},
                               int(len(keys) * ys.size),
                               f"countable family truncated at branch {grid.branches}")
    return ConditionReport({"G1": g1, "G2": g2}, {}, int(len(keys) * ys.size))


def hyperbolicity_margins(jet, cone: ConeParams):
    a, K0 = cone.alpha, cone.K0
    F1x, F1y, F2x, F2y = (np.abs(jet.f1x), np.abs(jet.f1y), np.abs(jet.f2x), np.abs(jet.f2y))
    J = jet.jacobian
    return {
        "H1": a * F1x - (F2x + a * F2y + a * a * F1y),
        "H2": F1x - a * F1y - K0,
        "H3": a * F1x - (F1y + a * F2y + a * a * F2x),
        "H4": F1x - a * F2x - J * K0,
    }


def check_hyperbolicity(fmap: PiecewiseMap, cone: ConeParams | None = None,
                        grid: Grid = Grid(), samples: Samples | None = None) -> ConditionReport:
    cone = cone or fmap.cone
    s = samples or sample_posts(fmap, grid)
    jet = fmap.jet(s.keys, s.x, s.y)
    margins = {k: _argmin_margin(v, s) for k, v in hyperbolicity_margins(jet, cone).items()}
    return ConditionReport(margins, {}, int(s.x.size), s.note)


def check_cone_properties(fmap: PiecewiseMap, cone: ConeParams | None = None,
                          grid: Grid = Grid(), samples: Samples | None = None) -> ConditionReport:
    """Cone invariance and expansion on the boundary rays of both cones."""
    cone = cone or fmap.cone
    a, K0 = cone.alpha, cone.K0
    s = samples or sample_posts(fmap, grid)
    jet = fmap.jet(s.keys, s.x, s.y)
    inv = inv2(jet.d1)
    out = {"unstable_cone": [], "unstable_expansion": [], "stable_cone": [], "stable_expansion": []}
    for sgn in (1.0, -1.0):
        u1, u2 = jet.apply(1.0, sgn * a)
        out["unstable_cone"].append(a * np.abs(u1) - np.abs(u2))
        out["unstable_expansion"].append(np.maximum(np.abs(u1), np.abs(u2)) - K0)
        w1 = inv[0, 0] * sgn * a + inv[0, 1]
        w2 = inv[1, 0] * sgn * a + inv[1, 1]
        out["stable_cone"].append(a * np.abs(w2) - np.abs(w1))
        out["stable_expansion"].append(np.maximum(np.abs(w1), np.abs(w2)) - K0)
    margins = {k: _argmin_margin(np.minimum(*v), s) for k, v in out.items()}
    return ConditionReport(margins, {}, int(s.x.size), s.note)


def check_derivative_ratios(fmap: PiecewiseMap, cone: ConeParams | None = None, grid: Grid = Grid(),
                  samples: Samples | None = None) -> ConditionReport:
    """First-derivative ratio bounds implied by the hyperbolicity conditions."""
    cone = cone or fmap.cone
    a, K0 = cone.alpha, cone.K0
    s = samples or sample_posts(fmap, grid)
    jet = fmap.jet(s.keys, s.x, s.y)
    f1x = np.abs(jet.f1x)
    r = {"f1y/f1x": np.abs(jet.f1y) / f1x, "f2x/f1x": np.abs(jet.f2x) / f1x,
         "f2y/f1x": np.abs(jet.f2y) / f1x}
    bounds = {"f1y/f1x": a, "f2x/f1x": a, "f2y/f1x": 1.0 / K0**2 + a**2}
    margins = {f"ratio {k}": _argmin_margin(bounds[k] - v, s) for k, v in r.items()}
    stats = {f"max {k}": _argmax_stat(v, s) for k, v in r.items()}
    return ConditionReport(margins, stats, int(s.x.size), s.note)


def distortion_density(jet, width):
    """|D^2 f| * delta_z(E) / |f_1x| pointwise."""
    return jet.d2_norm * width / np.abs(jet.f1x)


def check_distortion_D1(fmap: PiecewiseMap, grid: Grid = Grid(), C0: float | None = None,
                        samples: Samples | None = None) -> ConditionReport:
    s = samples or sample_posts(fmap, grid)
    jet = fmap.jet(s.keys, s.x, s.y)
    d = distortion_density(jet, s.width)
    stat = _argmax_stat(d, s)
    C0 = fmap.C0 if C0 is None else C0
    margins = {}
    if C0 is not None:
        margins["D1"] = Margin(C0 - stat.value, stat.point, stat.branch)
    return ConditionReport(margins, {"D1 sup": stat}, int(s.x.size), s.note)


def check_all(fmap: PiecewiseMap, cone: ConeParams | None = None, grid: Grid = Grid()) -> ConditionReport:
    s = sample_posts(fmap, grid)
    rep = check_geometry(fmap, grid).merge(check_hyperbolicity(fmap, cone, samples=s))
    for fn in (check_cone_properties, check_derivative_ratios):
        rep = rep.merge(fn(fmap, cone, samples=s))
    return rep.merge(check_distortion_D1(fmap, samples=s))


def max_expansion_constant(fmap: PiecewiseMap, alpha: float | None = None, grid: Grid = Grid()) -> float:
    """Largest K0 for which the two expansion conditions hold at every sample."""
    a = fmap.cone.alpha if alpha is None else alpha
    s = sample_posts(fmap, grid)
    jet = fmap.jet(s.keys, s.x, s.y)
    F1x, F1y, F2x = np.abs(jet.f1x), np.abs(jet.f1y), np.abs(jet.f2x)
    return float(min(np.min(F1x - a * F1y), np.min((F1x - a * F2x) / jet.jacobian)))


# -- series conditions ------------------------------------------------------------

class G3Result(NamedTuple):
    partial_sum: float
    last_term: float
    diverging: bool
    n_terms: int
    tail_note: str


def g3_series(dmax, dmin) -> G3Result:
    """Partial sums of -sum delta_max log delta_min with a decade-based divergence flag."""
    dmax = np.asarray(dmax, dtype=float)
    dmin = np.asarray(dmin, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(dmax > 0, -dmax * np.log(dmin), 0.0)
    total = float(np.sum(terms))  # index order, deterministic
    n = terms.size
    diverging = False
    if n >= 100:
        last = terms[n // 10:].sum()
        prev = terms[n // 100:n // 10].sum()
        diverging = bool(last >= prev)
    return G3Result(total, float(terms[-1]) if n else 0.0, diverging, n, "")


def check_G3(fmap: PiecewiseMap, n_max: int | None = None, levels: int = 128) -> G3Result:
    keys = fmap.branch_keys(n_max)
    dmin, dmax = fmap.width_ranges(keys, levels)
    r = g3_series(dmax, dmin)
    note = ""
    if fmap.n_branches is None:
        note = f"partial sum over branches 1..{len(keys)}; last term {r.last_term:.3e}"
    return r._replace(tail_note=note)


class TailSum(NamedTuple):
    value: float
    direct: float


def tail_sum(x, y, eps: float) -> TailSum:
    """sum_{n>=1} sum_{i in D_n} x_i with D_n = {i : y_i <= exp(-eps n)}.

    ``value`` uses the regrouping sum_j j c_j over the level sets
    E_j = {exp(-eps (j+1)) < y_i <= exp(-eps j)}; ``direct`` is the double sum.
    Ties are decided with a relative tolerance of 1e-12 in both orders.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        return TailSum(0.0, 0.0)
    with np.errstate(divide="ignore"):
        top = int(np.ceil(np.max(-np.log(y)) / eps)) + 2
    thr = np.exp(-eps * np.arange(1, top + 1)) * (1.0 + 1e-12)
    # j_i = number of n >= 1 with y_i <= thr_n (thr is decreasing)
    j = np.searchsorted(-thr, -y, side="right")
    c = np.bincount(j, weights=x, minlength=top + 1)
    regrouped = float(np.sum(np.arange(c.size) * c))
    direct = 0.0
    for t in thr:
        direct += float(np.sum(x[y <= t]))
    return TailSum(regrouped, direct)
