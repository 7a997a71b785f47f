"""Points, cones, jets, the piecewise-map model and map powers.

Branch keys are positive integers for base families. Vectorized methods
accept either a scalar key or an integer array of keys aligned with the
point arrays. Power maps use tuples (or ``(N, t)`` arrays) of base keys.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidBranch, OutOfDomain, TailTruncated

# relative tolerance (in units of post width) for flagging boundary contacts
BOUNDARY_RTOL = 1e-12


@dataclass(frozen=True)
class ConeParams:
    alpha: float
    K0: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.K0 > 1.0:
            raise ValueError(f"K0 must exceed 1, got {self.K0}")

    def in_unstable(self, v1, v2, tol=0.0):
        return np.abs(v2) <= self.alpha * np.abs(v1) + tol

    def in_stable(self, v1, v2, tol=0.0):
        return np.abs(v1) <= self.alpha * np.abs(v2) + tol


def max_norm(v1, v2):
    return np.maximum(np.abs(v1), np.abs(v2))


class Point2(NamedTuple):
    x: float
    y: float


class BranchHit(NamedTuple):
    index: object
    boundary: bool


@dataclass(frozen=True)
class Jet:
    """Value, first derivatives and second derivatives of a planar map.

    ``d1[c, a]`` is the derivative of output ``c`` in direction ``a`` and
    ``d2[c, a, b]`` the mixed second partial. Trailing axes index points.
    """

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @property
    def f1x(self):
        return self.d1[0, 0]

    @property
    def f1y(self):
        return self.d1[0, 1]

    @property
    def f2x(self):
        return self.d1[1, 0]

    @property
    def f2y(self):
        return self.d1[1, 1]

    @property
    def jacobian(self):
        return np.abs(self.d1[0, 0] * self.d1[1, 1] - self.d1[0, 1] * self.d1[1, 0])

    @property
    def d2_norm(self):
        """max over components and (xx, xy, yy) of the second partials."""
        return np.max(np.abs(self.d2.reshape((8,) + self.d2.shape[3:])), axis=0)

    def apply(self, v1, v2):
        return (self.d1[0, 0] * v1 + self.d1[0, 1] * v2,
                self.d1[1, 0] * v1 + self.d1[1, 1] * v2)

    def take(self, idx):
        return Jet(self.value[:, idx], self.d1[:, :, idx], self.d2[:, :, :, idx])


def affine_jet(value, d1_const, shape):
    """Jet of an affine map with constant (possibly per-point) derivative."""
    d1c = np.asarray(d1_const, dtype=float)
    d1c = d1c.reshape(d1c.shape + (1,) * (len(shape) + 2 - d1c.ndim))
    d1 = np.broadcast_to(d1c, (2, 2) + shape).copy()
    return Jet(np.asarray(value, dtype=float), d1, np.zeros((2, 2, 2) + shape))


def compose_jets(outer: Jet, inner: Jet) -> Jet:
    """Jet of outer o inner; ``outer`` must be evaluated at ``inner.value``."""
    d1 = np.einsum("ca...,ab...->cb...", outer.d1, inner.d1)
    d2 = (np.einsum("cab...,ai...,bj...->cij...", outer.d2, inner.d1, inner.d1)
          + np.einsum("ca...,aij...->cij...", outer.d1, inner.d2))
    return Jet(outer.value, d1, d2)


def inv2(m):
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return np.stack([np.stack([m[1, 1], -m[0, 1]]), np.stack([-m[1, 0], m[0, 0]])]) / det


def invert_jet(jet: Jet, at) -> Jet:
    """Jet of h^{-1} at h(w), given the jet of h at w (``at`` is w)."""
    k1 = inv2(jet.d1)
    inner = np.einsum("aij...,ip...,jq...->apq...", jet.d2, k1, k1)
    k2 = -np.einsum("ca...,apq...->cpq...", k1, inner)
    return Jet(np.asarray(at, dtype=float), k1, k2)


def swap_jet(jet: Jet) -> Jet:
    """Conjugate a jet by the coordinate swap (x, y) -> (y, x)."""
    p = [1, 0]
    return Jet(jet.value[p], jet.d1[p][:, p], jet.d2[p][:, p][:, :, p])


def as_xy(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return x.copy(), y.copy()


class PiecewiseMap:
    """Countable family of branch charts with full-height posts and full-width strips."""

    name = "map"
    affine = False
    disjoint_strips = False
    # every branch preserves the orientation of both axes (f1x > 0, Jacobian > 0)
    orientation_preserving = False
    n_branches: int | None = None  # None for countable families
    n_max: int | None = None
    C0: float | None = None

    def __init__(self, cone: ConeParams):
        self.cone = cone

    # -- per-branch primitives -------------------------------------------------
    def forward(self, key, x, y):
        raise NotImplementedError

    def inverse(self, key, X, Y):
        raise NotImplementedError

    def jet(self, key, x, y) -> Jet:
        raise NotImplementedError

    def post_bounds(self, key, y):
        raise NotImplementedError

    def strip_bounds(self, key, X):
        return _strip_bounds_generic(self, key, X)

    def locate(self, x, y):
        """(keys, boundary_flags); key 0 marks points with no branch."""
        raise NotImplementedError

    def locate_strip(self, X, Y):
        raise NotImplementedError(f"{self.name} does not locate strips")

    # -- derived -----------------------------------------------------------------
    def key_valid(self, keys):
        return np.asarray(keys) > 0

    def orientation(self, key):
        if self.orientation_preserving:
            return np.ones(np.shape(key), dtype=int)
        xl, xr = self.post_bounds(key, 0.5)
        j = self.jet(key, 0.5 * (xl + xr), np.full(np.shape(xl), 0.5))
        return np.where(j.f1x >= 0, 1, -1)

    def branch_keys(self, limit: int | None = None) -> list:
        if self.n_branches is not None:
            n = self.n_branches if limit is None else min(limit, self.n_branches)
            return list(range(1, n + 1))
        if limit is None:
            raise TailTruncated(f"{self.name} is countable; an enumeration limit is required")
        if self.n_max is not None:
            limit = min(limit, self.n_max)
        return list(range(1, limit + 1))

    def post_width(self, key, y):
        xl, xr = self.post_bounds(key, y)
        return xr - xl

    def width_range(self, key, levels: int = 128):
        """(min, max) of the horizontal post width over sampled y plus endpoints."""
        ys = np.concatenate([[0.0], (np.arange(levels) + 0.5) / levels, [1.0]])
        w = self.post_width(key, ys)
        return float(np.min(w)), float(np.max(w))

    def width_ranges(self, keys, levels: int = 128, chunk: int = 2048):
        karr = np.asarray(keys)
        if type(self).width_range is not PiecewiseMap.width_range or karr.ndim != 1:
            out = np.array([self.width_range(k, levels) for k in keys])
            return out[:, 0], out[:, 1]
        ys = np.concatenate([[0.0], (np.arange(levels) + 0.5) / levels, [1.0]])
        lo, hi = np.empty(karr.size), np.empty(karr.size)
        for s in range(0, karr.size, chunk):
            part = karr[s:s + chunk]
            w = self.post_width(np.repeat(part, ys.size), np.tile(ys, part.size))
            w = w.reshape(part.size, ys.size)
            lo[s:s + part.size], hi[s:s + part.size] = w.min(axis=1), w.max(axis=1)
        return lo, hi

    def step(self, x, y):
        """One application of F: (X, Y, keys, boundary_flags); invalid keys leave points in place."""
        x, y = as_xy(x, y)
        keys, flags = self.locate(x, y)
        ok = self.key_valid(keys)
        X, Y = x.copy(), y.copy()
        if np.any(ok):
            k_ok = keys[ok]
            X[ok], Y[ok] = self.forward(k_ok, x[ok], y[ok])
        return np.clip(X, 0.0, 1.0), np.clip(Y, 0.0, 1.0), keys, flags

    def describe(self) -> dict:
        return {"name": self.name, "alpha": self.cone.alpha, "K0": self.cone.K0}


# -- public point-level operations --------------------------------------------

def branch_of(fmap: PiecewiseMap, z) -> BranchHit:
    """Branch containing z, with the half-open (right branch wins) convention."""
    x, y = float(z[0]), float(z[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise OutOfDomain(f"point {(x, y)} is outside the unit square", x=x, y=y)
    keys, flags = fmap.locate(np.array([x]), np.array([y]))
    key = keys[0]
    if not np.all(fmap.key_valid(key)):
        raise TailTruncated(f"point {(x, y)} lies beyond the enumerated branches of {fmap.name}; "
                            "raise N_max", x=x, y=y, n_max=fmap.n_max)
    key = tuple(int(k) for k in key) if np.ndim(key) else int(key)
    return BranchHit(key, bool(flags[0]))


def zwidth(fmap: PiecewiseMap, i, z) -> float:
    """Width of the horizontal slice of post i through z."""
    _check_key(fmap, i)
    return float(fmap.post_width(i, float(z[1])))


def jet_at(fmap: PiecewiseMap, z) -> Jet:
    """Jet of the branch that owns z, evaluated at z."""
    key = branch_of(fmap, z).index
    return fmap.jet(key, float(z[0]), float(z[1]))


def _check_key(fmap, key):
    if isinstance(fmap, PowerMap):
        if len(key) != fmap.t:
            raise InvalidBranch(f"power-map keys have length {fmap.t}", key=key)
        for k in key:
            _check_key(fmap.base, k)
        return
    k = int(key)
    if k < 1 or (fmap.n_branches is not None and k > fmap.n_branches) or \
            (fmap.n_max is not None and k > fmap.n_max):
        raise InvalidBranch(f"branch {key} does not exist in {fmap.name}", key=key)


# -- cylinder cross-sections ----------------------------------------------------

def classify(fmap: PiecewiseMap, symbols, x, y):
    """Position of points relative to the post cylinder E_{symbols}.

    Returns -1 (left of the cylinder along the horizontal direction), 0 (inside)
    or +1 (right). ``symbols`` is a sequence shared by all points or an array
    of shape (P, n) with one row per point.
    """
    x, y = as_xy(x, y)
    x, y = x.ravel(), y.ravel()
    sym = np.asarray(symbols)
    per_point = sym.ndim == 2 and not isinstance(fmap, PowerMap) or sym.ndim == 3
    n = sym.shape[1] if per_point else sym.shape[0]
    pos = np.zeros(x.shape, dtype=int)
    sign = np.ones(x.shape, dtype=int)
    idx = np.arange(x.size)
    for k in range(n):
        if idx.size == 0:
            break
        s = sym[idx, k] if per_point else sym[k]
        xa, ya = x[idx], y[idx]
        xl, xr = fmap.post_bounds(s, ya)
        left = xa < xl
        right = xa >= xr
        pos[idx[left]] = -sign[idx[left]]
        pos[idx[right]] = sign[idx[right]]
        inside = ~(left | right)
        s_in = s[inside] if per_point else s
        idx = idx[inside]
        if k < n - 1 and idx.size:
            x[idx], y[idx] = fmap.forward(s_in, xa[inside], ya[inside])
            sign[idx] *= fmap.orientation(s_in)
    return pos


def cylinder_section(fmap: PiecewiseMap, symbols, level=None, curve=None, iters: int = 80):
    """Cross-section [a, b) of the post cylinder E_{symbols} by horizontal lines or a curve.

    With ``level`` (array of heights) the section is taken along y = level;
    with ``curve`` (callable x -> y, vectorized) it is taken along the graph.
    ``symbols`` may carry one row per section. Returns (a, b, empty_mask).
    """
    if curve is None:
        level = np.atleast_1d(np.asarray(level, dtype=float))
        shape = level.shape

        def height(x):
            return level
    else:
        sym = np.asarray(symbols)
        rows = sym.shape[0] if sym.ndim == 2 and not isinstance(fmap, PowerMap) or sym.ndim == 3 else 1
        shape = (rows,)

        def height(x):
            return curve(x)

    def cls(x):
        return classify(fmap, symbols, x, height(x)).reshape(shape)

    zeros, ones = np.zeros(shape), np.ones(shape)
    c0, c1 = cls(zeros), cls(ones)
    empty = (c0 == 1) | (c1 == -1)
    # left endpoint: first x not strictly left of the cylinder
    lo, hi = zeros.copy(), ones.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        c = cls(mid)
        lo = np.where(c == -1, mid, lo)
        hi = np.where(c == -1, hi, mid)
    a = np.where(c0 != -1, 0.0, hi)
    lo, hi = zeros.copy(), ones.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        c = cls(mid)
        hi = np.where(c == 1, mid, hi)
        lo = np.where(c == 1, lo, mid)
    b = np.where(c1 != 1, 1.0, hi)
    empty = empty | (a >= b)
    return a, b, empty


# -- swapped inverse (stable-direction view) ---------------------------------

class SwappedInverse(PiecewiseMap):
    """The family S o f_i^{-1} o S with S(x, y) = (y, x).

    Its posts are the swapped strips of the base map, so unstable-side
    constructions applied to it produce stable-side objects of the base.
    """

    def __init__(self, base: PiecewiseMap):
        super().__init__(base.cone)
        self.base = base
        self.name = f"swapped_inverse({base.name})"
        self.n_branches = base.n_branches
        self.n_max = base.n_max
        self.affine = base.affine
        self.orientation_preserving = base.orientation_preserving
        self.disjoint_strips = True

    def forward(self, key, x, y):
        X, Y = self.base.inverse(key, y, x)
        return Y, X

    def inverse(self, key, X, Y):
        x, y = self.base.forward(key, Y, X)
        return y, x

    def jet(self, key, x, y):
        x, y = as_xy(x, y)
        w = self.base.inverse(key, y, x)
        jf = self.base.jet(key, w[0], w[1])
        return swap_jet(invert_jet(jf, np.stack(w)))

    def post_bounds(self, key, y):
        return self.base.strip_bounds(key, y)

    def strip_bounds(self, key, X):
        return self.base.post_bounds(key, X)

    def locate(self, x, y):
        return self.base.locate_strip(y, x)

    def locate_strip(self, X, Y):
        return self.base.locate(Y, X)

    def key_valid(self, keys):
        return self.base.key_valid(keys)

    def branch_keys(self, limit=None):
        return self.base.branch_keys(limit)


# -- map powers ----------------------------------------------------------------

class PowerMap(PiecewiseMap):
    """F^t with branches f_{i_{t-1}} o ... o f_{i_0} on posts E_{i_0 ... i_{t-1}}."""

    def __init__(self, base: PiecewiseMap, t: int, depth_limit: int = 10_000):
        if t < 1:
            raise ValueError("power must be >= 1")
        super().__init__(ConeParams(base.cone.alpha, base.cone.K0 ** t))
        self.base, self.t, self.depth_limit = base, t, depth_limit
        self.name = f"power({base.name}, {t})"
        self.affine = base.affine
        self.disjoint_strips = base.disjoint_strips
        self.orientation_preserving = base.orientation_preserving
        self.n_max = base.n_max
        self.n_branches = None if base.n_branches is None else base.n_branches ** t

    def _cols(self, key):
        k = np.asarray(key)
        if k.ndim == 1:
            return [int(c) for c in k]
        return [k[:, j] for j in range(self.t)]

    def key_valid(self, keys):
        k = np.asarray(keys)
        return np.all(k > 0, axis=-1)

    def forward(self, key, x, y):
        for c in self._cols(key):
            x, y = self.base.forward(c, x, y)
        return x, y

    def inverse(self, key, X, Y):
        for c in reversed(self._cols(key)):
            X, Y = self.base.inverse(c, X, Y)
        return X, Y

    def jet(self, key, x, y):
        cols = self._cols(key)
        x, y = as_xy(x, y)
        j = self.base.jet(cols[0], x, y)
        for c in cols[1:]:
            j = compose_jets(self.base.jet(c, j.value[0], j.value[1]), j)
        return j

    def orientation(self, key):
        out = None
        for c in self._cols(key):
            o = self.base.orientation(c)
            out = o if out is None else out * o
        return out

    def post_bounds(self, key, y):
        y = np.asarray(y, dtype=float)
        k = np.asarray(key)
        if k.ndim == 2:
            a, b, _ = cylinder_section(self.base, k, level=np.broadcast_to(y, (k.shape[0],)).copy())
            return a, b
        a, b, _ = cylinder_section(self.base, list(k), level=np.atleast_1d(y))
        return a.reshape(y.shape), b.reshape(y.shape)

    def strip_bounds(self, key, X):
        X = np.asarray(X, dtype=float)
        k = np.asarray(key)
        sw = SwappedInverse(self.base)
        if k.ndim == 2:
            a, b, _ = cylinder_section(sw, k[:, ::-1], level=np.broadcast_to(X, (k.shape[0],)).copy())
            return a, b
        a, b, _ = cylinder_section(sw, list(k[::-1]), level=np.atleast_1d(X))
        return a.reshape(X.shape), b.reshape(X.shape)

    def locate(self, x, y):
        x, y = as_xy(x, y)
        keys = np.zeros(x.shape + (self.t,), dtype=np.int64)
        flags = np.zeros(x.shape, dtype=bool)
        alive = np.ones(x.shape, dtype=bool)
        for j in range(self.t):
            X, Y, k, f = self.base.step(x, y)
            ok = self.base.key_valid(k) & alive
            keys[..., j] = np.where(ok, k, 0)
            flags |= f
            alive &= ok
            x, y = X, Y
        keys[~alive] = 0
        return keys, flags

    def step(self, x, y):
        x, y = as_xy(x, y)
        keys, flags = self.locate(x, y)
        ok = self.key_valid(keys)
        X, Y = x.copy(), y.copy()
        if np.any(ok):
            X[ok], Y[ok] = self.forward(keys[ok], x[ok], y[ok])
        return np.clip(X, 0, 1), np.clip(Y, 0, 1), keys, flags

    def branch_keys(self, limit=None):
        base_keys = self.base.branch_keys(limit)
        count = len(base_keys) ** self.t
        if count > self.depth_limit:
            raise TailTruncated(f"{count} cylinders exceed depth_limit={self.depth_limit}",
                                count=count, depth_limit=self.depth_limit)
        return [tuple(p) for p in itertools.product(base_keys, repeat=self.t)]

    def width_range(self, key, levels: int = 32):
        return super().width_range(key, levels)


def power_map(fmap: PiecewiseMap, t: int, depth_limit: int = 10_000) -> PowerMap:
    return PowerMap(fmap, t, depth_limit)


# -- generic helpers ------------------------------------------------------------

def _strip_bounds_generic(fmap: PiecewiseMap, key, X):
    """Strip boundaries Y_bottom(X), Y_top(X) as images of the post's bottom and top edges."""
    X = np.asarray(X, dtype=float)
    out = []
    for edge in (0.0, 1.0):
        xl, xr = fmap.post_bounds(key, np.full(X.shape, edge))
        lo, hi = np.broadcast_to(xl, X.shape).copy(), np.broadcast_to(xr, X.shape).copy()
        sgn = fmap.orientation(key)
        for _ in range(70):
            mid = 0.5 * (lo + hi)
            f1, _ = fmap.forward(key, mid, np.full(X.shape, edge))
            below = (f1 - X) * sgn < 0
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        mid = 0.5 * (lo + hi)
        out.append(fmap.forward(key, mid, np.full(X.shape, edge))[1])
    return np.minimum(out[0], out[1]), np.maximum(out[0], out[1])


def newton_monotone(fun, dfun, t0, target, iters: int = 60, tol: float = 1e-15):
    """Vectorized Newton for strictly increasing scalar equations fun(t) = target."""
    t = np.array(t0, dtype=float, copy=True)
    for _ in range(iters):
        r = fun(t) - target
        t = t - r / dfun(t)
        if np.all(np.abs(r) <= tol * (1.0 + np.abs(target))):
            break
    return t
