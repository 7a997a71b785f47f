"""Entropy and Lyapunov estimates by derivative growth, cone vectors, cylinder frequencies and
integrals of the unstable Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllSeedsEscaped, ConeEscape, StripsOverlap, UnderSampled
from .geometry import PiecewiseMap
from .measures import EmpiricalMeasure
from .orbits import GROUP_SIZE, JITTER, Walker, make_rng, map_groups, seed_groups

MIN_STEPS = 1000
CONE_TOL = 1e-12


@dataclass
class EntropyEstimate:
    value: float
    route: str
    n: int
    spread: float = 0.0
    stderr: float = 0.0
    dropped: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"value": self.value, "route": self.route, "n": self.n, "spread": self.spread,
                "stderr": self.stderr, "dropped": self.dropped, **self.details}


def _seed_stats(values):
    values = np.asarray(values, dtype=float)
    if values.size > 1:
        sd = float(np.std(values, ddof=1))
        return float(np.mean(values)), sd, sd / np.sqrt(values.size)
    return float(values[0]), 0.0, 0.0


def bound_constant(alpha: float) -> float:
    """log((1 + a^2) / (1 - a^2)), the cone-vector versus horizontal-growth gap."""
    return float(np.log((1.0 + alpha**2) / (1.0 - alpha**2)))


def entropy_derivative_growth(fmap: PiecewiseMap, seeds, n: int, rng_seed: int = 0,
                              jitter: float = JITTER, threads: int = 1,
                              group_size: int = GROUP_SIZE) -> EntropyEstimate:
    """Mean over seeds of (1/n) log ||DF^n|| (operator norm induced by the max norm)."""
    if n < MIN_STEPS:
        raise ValueError(f"derivative growth needs n >= {MIN_STEPS}")
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))

    def run(gi, idx):
        w = Walker(fmap, seeds[idx, 0], seeds[idx, 1], make_rng(rng_seed, 4, gi), jitter, frame=True)
        for _ in range(n):
            w.step()
        return w.log_operator_norm() / n, w.alive.copy()

    parts = map_groups(run, seed_groups(len(seeds), group_size), threads)
    vals = np.concatenate([p[0] for p in parts])
    alive = np.concatenate([p[1] for p in parts])
    if not alive.any():
        raise AllSeedsEscaped("every seed touched a post boundary", seeds=len(seeds))
    mean, sd, se = _seed_stats(vals[alive])
    return EntropyEstimate(mean, "derivative_growth", n, sd, se, int((~alive).sum()),
                           {"seeds": int(alive.sum())})


@dataclass
class DirectionalTrace:
    """Per-step logs along one orbit: cone vector, horizontal entry and operator norm."""

    log_vector: np.ndarray
    log_f1x: np.ndarray
    log_operator: np.ndarray
    alpha: float

    @property
    def steps(self):
        return np.arange(1, self.log_vector.size + 1)

    def gap_vector_horizontal(self):
        return np.abs(self.log_vector - self.log_f1x) / self.steps

    def gap_vector_operator(self):
        return np.abs(self.log_vector - self.log_operator) / self.steps

    def bound(self):
        return bound_constant(self.alpha) / self.steps


def directional_trace(fmap: PiecewiseMap, z, v, n: int, rng_seed: int | None = None,
                      jitter: float = JITTER, alpha: float | None = None) -> DirectionalTrace:
    """Transport v in the unstable cone along the orbit of z for n steps."""
    alpha = fmap.cone.alpha if alpha is None else alpha
    v1, v2 = float(v[0]), float(v[1])
    if abs(v2) > alpha * abs(v1) * (1.0 + CONE_TOL):
        raise ConeEscape("initial vector is outside the unstable cone", v=[v1, v2], alpha=alpha)
    nv = max(abs(v1), abs(v2))
    v1, v2 = v1 / nv, v2 / nv
    rng = None if rng_seed is None else make_rng(rng_seed, 5)
    w = Walker(fmap, [float(z[0])], [float(z[1])], rng, jitter, frame=True)
    lv, lh, lo = np.empty(n), np.empty(n), np.empty(n)
    for k in range(n):
        w.step()
        if not w.alive[0]:
            raise AllSeedsEscaped(f"orbit touched a post boundary at step {k}", step=k)
        M = w.M[:, :, 0]
        a = M[0, 0] * v1 + M[0, 1] * v2
        b = M[1, 0] * v1 + M[1, 1] * v2
        if abs(b) > alpha * abs(a) * (1.0 + CONE_TOL):
            raise ConeEscape(f"transported vector left the unstable cone at step {k}",
                             step=k, slope=float(abs(b / a)), alpha=alpha)
        s = w.log_scale[0]
        lv[k] = np.log(max(abs(a), abs(b))) + s
        lh[k] = np.log(abs(M[0, 0])) + s
        lo[k] = w.log_operator_norm()[0]
    return DirectionalTrace(lv, lh, lo, alpha)


def entropy_directional(fmap: PiecewiseMap, z, v, n: int, rng_seed: int | None = None,
                        jitter: float = JITTER) -> EntropyEstimate:
    """(1/n) log |DF^n(z) v| for v in the unstable cone."""
    tr = directional_trace(fmap, z, v, n, rng_seed, jitter)
    gap = float(tr.gap_vector_horizontal()[-1])
    return EntropyEstimate(float(tr.log_vector[-1] / n), "directional", n,
                           details={"horizontal": float(tr.log_f1x[-1] / n),
                                    "operator": float(tr.log_operator[-1] / n),
                                    "gap_horizontal": gap,
                                    "bound": float(tr.bound()[-1])})


def _symbol_ids(keys):
    """Integer ids for branch keys; power-map keys (rows) are encoded jointly."""
    k = np.asarray(keys)
    if k.ndim == 1:
        return k.astype(np.int64)
    _, inv = np.unique(k, axis=0, return_inverse=True)
    return inv.ravel().astype(np.int64)


def orbit_symbols(fmap: PiecewiseMap, seeds, n: int, rng_seed: int = 0, jitter: float = JITTER):
    """(seeds, n) array of symbol ids along jittered orbits, plus the survival mask."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    w = Walker(fmap, seeds[:, 0], seeds[:, 1], make_rng(rng_seed, 6), jitter)
    rows = []
    for _ in range(n):
        keys, _ = w.step()
        rows.append(np.asarray(keys))
    if rows and np.asarray(rows[0]).ndim == 2:
        stacked = np.stack(rows, axis=1)  # (S, n, t)
        ids = _symbol_ids(stacked.reshape(-1, stacked.shape[-1])).reshape(stacked.shape[:2])
    else:
        ids = np.stack(rows, axis=1).astype(np.int64)
    return ids, w.alive.copy()


def _window_codes(seq, d):
    """Integer code per length-d window (exact, via unique over stacked columns)."""
    L = seq.size - d + 1
    cols = np.stack([seq[j:j + L] for j in range(d)], axis=1)
    _, inv = np.unique(cols, axis=0, return_inverse=True)
    return inv.ravel()


def entropy_cylinder(fmap: PiecewiseMap, z, depths, n: int, rng_seed: int = 0,
                     jitter: float = JITTER, min_visits: int = 30) -> EntropyEstimate:
    """-(1/d) log of the visit frequency of z's own depth-d cylinder along its orbit."""
    depths = sorted(int(d) for d in depths)
    dmax = depths[-1]
    ids, alive = orbit_symbols(fmap, [z], n + dmax - 1, rng_seed, jitter)
    if not alive[0]:
        raise AllSeedsEscaped("orbit touched a post boundary")
    seq = ids[0]
    per_depth, visits = {}, {}
    match = np.ones(n, dtype=bool)
    for d in range(1, dmax + 1):
        match &= seq[d - 1:d - 1 + n] == seq[d - 1]
        if d in depths:
            c = int(match.sum())
            visits[d] = c
            if c < min_visits:
                raise UnderSampled(f"depth {d} cylinder visited {c} times (< {min_visits})",
                                   depth=d, visits=c)
            per_depth[d] = float(-np.log(c / n) / d)
    ds = np.array(list(per_depth))
    vs = np.array(list(per_depth.values()))
    trend = float(np.polyfit(ds, vs, 1)[0]) if ds.size > 1 else 0.0
    return EntropyEstimate(per_depth[dmax], "cylinder", n,
                           details={"per_depth": {str(k): v for k, v in per_depth.items()},
                                    "visits": {str(k): v for k, v in visits.items()},
                                    "trend": trend})


def block_entropy(fmap: PiecewiseMap, seeds, d: int, n: int, rng_seed: int = 0,
                  jitter: float = JITTER) -> EntropyEstimate:
    """Plug-in entropy of length-d symbol blocks pooled over orbits, divided by d.

    This averages -(1/d) log mu(V) over cylinders V visited by typical points, the
    pooled form of the cylinder-frequency estimate.
    """
    ids, alive = orbit_symbols(fmap, seeds, n + d - 1, rng_seed, jitter)
    if not alive.any():
        raise AllSeedsEscaped("every seed touched a post boundary", seeds=len(ids))
    per_seed = []
    pooled = []
    for row in ids[alive]:
        codes = _window_codes(row, d)
        pooled.append(np.stack([row[j:j + codes.size] for j in range(d)], axis=1))
        _, c = np.unique(codes, return_counts=True)
        p = c / c.sum()
        per_seed.append(float(-np.sum(p * np.log(p)) / d))
    allw = np.concatenate(pooled)
    _, c = np.unique(allw, axis=0, return_counts=True)
    p = c / c.sum()
    value = float(-np.sum(p * np.log(p)) / d)
    _, sd, _ = _seed_stats(per_seed)
    return EntropyEstimate(value, "cylinder", n, sd, sd / np.sqrt(len(per_seed)),
                           int((~alive).sum()), {"depth": d, "distinct_blocks": int(c.size)})


def partition_entropy(fmap: PiecewiseMap, seeds, n: int, rng_seed: int = 0,
                      jitter: float = JITTER) -> float:
    """Plug-in -sum mu(V_i) log mu(V_i) over depth-1 cylinders."""
    return block_entropy(fmap, seeds, 1, n, rng_seed, jitter).value


def entropy_integral(fmap: PiecewiseMap, srb: EmpiricalMeasure) -> EntropyEstimate:
    """Sample mean of log D^uF over an empirical SRB measure (disjoint-strip families only)."""
    if not fmap.disjoint_strips:
        raise StripsOverlap(f"{fmap.name} does not declare disjoint strip interiors", family=fmap.name)
    if srb.log_ju is None:
        raise ValueError("the measure carries no unstable Jacobian samples; "
                         "build it with track_unstable=True")
    mean, sd, se = _seed_stats(srb.log_ju)
    return EntropyEstimate(mean, "integral", srb.n_points, sd, se, srb.units_dropped,
                           {"seeds": srb.units_used})
