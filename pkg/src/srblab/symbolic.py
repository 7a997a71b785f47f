"""Itineraries, post/strip cylinders and the coding map from symbol strings to points."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EmptyCylinder, TailTruncated
from .geometry import PiecewiseMap, SwappedInverse, as_xy, cylinder_section


@dataclass(frozen=True)
class Itinerary:
    """Finite symbol string. Backward itineraries list symbols oldest first, so the
    last symbol is the branch most recently applied."""

    symbols: tuple
    orientation: str = "forward"

    def __post_init__(self):
        syms = tuple(int(s) for s in self.symbols)
        if not syms:
            raise ValueError("itineraries are nonempty")
        if min(syms) < 1:
            raise ValueError("symbols are positive branch indices")
        if self.orientation not in ("forward", "backward"):
            raise ValueError("orientation is 'forward' or 'backward'")
        object.__setattr__(self, "symbols", syms)

    def __len__(self):
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)


def symbols_of(it) -> tuple:
    if isinstance(it, Itinerary):
        return it.symbols
    return tuple(int(s) for s in it)


class BoundaryHit(NamedTuple):
    step: int


def forward_itinerary(fmap: PiecewiseMap, z, n: int, strict: bool = True):
    """First n symbols of the forward orbit of z, or BoundaryHit(k) if the orbit touches a
    post boundary at step k (only reported when ``strict``)."""
    x, y = as_xy([float(z[0])], [float(z[1])])
    out = []
    for k in range(n):
        X, Y, keys, flags = fmap.step(x, y)
        if not fmap.key_valid(keys)[0]:
            raise TailTruncated(f"orbit left the enumerated branches at step {k}", step=k,
                                point=(float(x[0]), float(y[0])))
        if strict and flags[0]:
            return BoundaryHit(k)
        out.append(int(keys[0]))
        x, y = X, Y
    return Itinerary(tuple(out), "forward")


@dataclass(frozen=True)
class Cylinder:
    """Post cylinder E_{a0...a(n-1)} (cross-sections [lower, upper) in x at heights ``levels``)
    or strip cylinder S_{a(-n+1)...a0} (cross-sections in y at abscissae ``levels``)."""

    kind: str
    itinerary: Itinerary
    levels: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def widths(self):
        return self.upper - self.lower

    @property
    def width_min(self) -> float:
        return float(np.min(self.widths))

    @property
    def width_max(self) -> float:
        return float(np.max(self.widths))

    def section(self, level: float):
        return float(np.interp(level, self.levels, self.lower)), \
            float(np.interp(level, self.levels, self.upper))

    def to_dict(self):
        return {"kind": self.kind, "symbols": list(self.itinerary.symbols),
                "width_min": self.width_min, "width_max": self.width_max,
                "levels": self.levels.tolist(), "lower": self.lower.tolist(),
                "upper": self.upper.tolist()}


DEFAULT_LEVELS = np.linspace(0.0, 1.0, 17)


def post_cylinder(fmap: PiecewiseMap, symbols, levels=DEFAULT_LEVELS) -> Cylinder:
    syms = symbols_of(symbols)
    levels = np.asarray(levels, dtype=float)
    a, b, empty = cylinder_section(fmap, list(syms), level=levels)
    if np.any(empty):
        raise EmptyCylinder(f"post cylinder {syms} has an empty cross-section", symbols=list(syms))
    return Cylinder("post", Itinerary(syms, "forward"), levels, a, b)


def strip_cylinder(fmap: PiecewiseMap, past, levels=DEFAULT_LEVELS) -> Cylinder:
    """Strip cylinder for a backward itinerary (oldest symbol first)."""
    syms = symbols_of(past)
    levels = np.asarray(levels, dtype=float)
    a, b, empty = cylinder_section(SwappedInverse(fmap), list(reversed(syms)), level=levels)
    if np.any(empty):
        raise EmptyCylinder(f"strip cylinder {syms} has an empty cross-section", symbols=list(syms))
    return Cylinder("strip", Itinerary(syms, "backward"), levels, a, b)


def refine_cylinder(fmap: PiecewiseMap, c: Cylinder, symbol) -> Cylinder:
    """Post cylinder of the itinerary extended by one symbol."""
    if c.kind != "post":
        raise ValueError("refine_cylinder extends post-type cylinders")
    return post_cylinder(fmap, c.itinerary.symbols + (int(symbol),), c.levels)


class PointEstimate(NamedTuple):
    x: float
    y: float
    residual: float


def point_from_itinerary(fmap: PiecewiseMap, past, future, depth: int, sweeps: int = 6) -> PointEstimate:
    """Approximate the point coded by (past | future) as the intersection of the depth-n
    post cylinder and strip cylinder, using cross-section midpoints."""
    fut = symbols_of(future)[:depth]
    pst = symbols_of(past)[-depth:]
    if len(fut) < depth or len(pst) < depth:
        raise ValueError("depth exceeds the supplied itineraries")
    sw = SwappedInverse(fmap)
    rev = list(reversed(pst))
    x, y = 0.5, 0.5
    wx = wy = 1.0
    for _ in range(sweeps):
        a, b, e = cylinder_section(fmap, list(fut), level=[y])
        if e[0]:
            raise EmptyCylinder("post cylinder misses the current height", symbols=list(fut))
        x, wx = 0.5 * (a[0] + b[0]), b[0] - a[0]
        a, b, e = cylinder_section(sw, rev, level=[x])
        if e[0]:
            raise EmptyCylinder("strip cylinder misses the current abscissa", symbols=list(pst))
        y, wy = 0.5 * (a[0] + b[0]), b[0] - a[0]
    return PointEstimate(float(x), float(y), float(max(wx, wy)))
