"""Built-in map families: generalized baker, Lueroth-baker, a smooth conjugate
of Lueroth-baker with curved posts and strips, and expression-defined families."""

from __future__ import annotations

import numpy as np

from .expr import compile_expr
from .geometry import (BOUNDARY_RTOL, ConeParams, Jet, PiecewiseMap, affine_jet, as_xy,
                       compose_jets, invert_jet, newton_monotone)

PI = np.pi


class Baker(PiecewiseMap):
    """N equal vertical posts; branch k maps [(k-1)/N, k/N) x I onto I x [(k-1)/N, k/N]."""

    affine = True
    disjoint_strips = True
    orientation_preserving = True

    def __init__(self, N: int = 2, cone: ConeParams | None = None):
        if N < 2:
            raise ValueError("baker needs N >= 2")
        super().__init__(cone or ConeParams(0.5, float(N)))
        self.N = int(N)
        self.n_branches = self.N
        self.name = f"baker({self.N})"

    def forward(self, key, x, y):
        k = np.asarray(key, dtype=float) - 1.0
        return self.N * np.asarray(x) - k, (np.asarray(y) + k) / self.N

    def inverse(self, key, X, Y):
        k = np.asarray(key, dtype=float) - 1.0
        return (np.asarray(X) + k) / self.N, self.N * np.asarray(Y) - k

    def jet(self, key, x, y):
        x, y = as_xy(x, y)
        shape = np.broadcast(np.asarray(key), x).shape
        X, Y = self.forward(key, x, y)
        value = np.stack(np.broadcast_arrays(X, Y))
        return affine_jet(value, [[self.N, 0.0], [0.0, 1.0 / self.N]], shape)

    def post_bounds(self, key, y):
        k = np.asarray(key, dtype=float)
        shape = np.broadcast(k, np.asarray(y)).shape
        return np.broadcast_to((k - 1) / self.N, shape), np.broadcast_to(k / self.N, shape)

    def strip_bounds(self, key, X):
        return self.post_bounds(key, X)

    def _locate_1d(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t <= 1.0)
        k = np.clip(np.floor(self.N * np.where(inside, t, 0.0)), 0, self.N - 1).astype(np.int64) + 1
        frac = self.N * t - (k - 1)
        flags = inside & ((frac <= BOUNDARY_RTOL) | (frac >= 1.0 - BOUNDARY_RTOL))
        return np.where(inside, k, 0), flags

    def locate(self, x, y):
        x, y = as_xy(x, y)
        k, f = self._locate_1d(x)
        bad = (y < 0) | (y > 1)
        return np.where(bad, 0, k), f & ~bad

    def locate_strip(self, X, Y):
        X, Y = as_xy(X, Y)
        k, f = self._locate_1d(Y)
        bad = (X < 0) | (X > 1)
        return np.where(bad, 0, k), f & ~bad

    def step(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        N = self.N
        inside = (x >= 0.0) & (x <= 1.0) & (y >= 0.0) & (y <= 1.0)
        s = N * x
        km = np.minimum(np.floor(s), N - 1.0)
        frac = s - km
        flags = inside & ((frac <= BOUNDARY_RTOL) | (frac >= 1.0 - BOUNDARY_RTOL))
        X = np.where(inside, np.clip(frac, 0.0, 1.0), x)
        Y = np.where(inside, (y + km) / N, y)
        keys = np.where(inside, km.astype(np.int64) + 1, 0)
        return X, Y, keys, flags

    def width_range(self, key, levels=128):
        return 1.0 / self.N, 1.0 / self.N

    def width_ranges(self, keys, levels=128):
        w = np.full(len(keys), 1.0 / self.N)
        return w, w.copy()

    def describe(self):
        return {**super().describe(), "family": "baker", "N": self.N}


class Lueroth(PiecewiseMap):
    """Lueroth-baker: branch n on the post [1/(n+1), 1/n) with slope n(n+1).

    f_n(x, y) = (n(n+1)x - n, (1 - 1/n) + y/(n(n+1))), strips stacked upward.
    """

    affine = True
    disjoint_strips = True
    orientation_preserving = True
    n_branches = None

    def __init__(self, n_max: int = 10**9, cone: ConeParams | None = None):
        super().__init__(cone or ConeParams(0.5, 2.0))
        self.n_max = int(n_max)
        self.name = "lueroth"

    @staticmethod
    def _lam(key):
        n = np.asarray(key, dtype=float)
        return n, n * (n + 1.0)

    def forward(self, key, x, y):
        n, lam = self._lam(key)
        return lam * np.asarray(x) - n, (1.0 - 1.0 / n) + np.asarray(y) / lam

    def inverse(self, key, X, Y):
        n, lam = self._lam(key)
        return (np.asarray(X) + n) / lam, (np.asarray(Y) - (1.0 - 1.0 / n)) * lam

    def jet(self, key, x, y):
        x, y = as_xy(x, y)
        n, lam = self._lam(key)
        shape = np.broadcast(n, x).shape
        X, Y = self.forward(key, x, y)
        value = np.stack(np.broadcast_arrays(X, Y))
        lam = np.broadcast_to(lam, shape)
        d1 = np.zeros((2, 2) + shape)
        d1[0, 0], d1[1, 1] = lam, 1.0 / lam
        return Jet(value, d1, np.zeros((2, 2, 2) + shape))

    def post_bounds(self, key, y):
        n = np.asarray(key, dtype=float)
        shape = np.broadcast(n, np.asarray(y)).shape
        return np.broadcast_to(1.0 / (n + 1.0), shape), np.broadcast_to(1.0 / n, shape)

    def strip_bounds(self, key, X):
        n = np.asarray(key, dtype=float)
        shape = np.broadcast(n, np.asarray(X)).shape
        return np.broadcast_to(1.0 - 1.0 / n, shape), np.broadcast_to(1.0 - 1.0 / (n + 1.0), shape)

    def _index(self, t):
        """Branch n with 1/(n+1) <= t < 1/n (t = 1 belongs to branch 1); 0 if none."""
        t = np.asarray(t, dtype=float)
        ok = (t > 0.0) & (t <= 1.0)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            nf = np.ceil(1.0 / np.where(ok, t, 1.0)) - 1.0
        nf = np.maximum(nf, 1.0)
        ok &= nf <= self.n_max
        n = np.where(ok, nf, 1.0)
        # correct the reciprocal's rounding against the exact half-open bounds
        n = np.where(t < 1.0 / (n + 1.0), n + 1.0, n)
        n = np.where((t >= 1.0 / n) & (n > 1.0), n - 1.0, n)
        ok &= n <= self.n_max
        lo, hi = 1.0 / (n + 1.0), 1.0 / n
        tol = BOUNDARY_RTOL * (hi - lo)
        flags = ok & ((t - lo <= tol) | (hi - t <= tol))
        return np.where(ok, n, 0).astype(np.int64), flags

    def locate(self, x, y):
        x, y = as_xy(x, y)
        k, f = self._index(x)
        bad = (y < 0) | (y > 1)
        return np.where(bad, 0, k), f & ~bad

    def locate_strip(self, X, Y):
        X, Y = as_xy(X, Y)
        # 1 - 1/n <= Y < 1 - 1/(n+1)  <=>  1/(n+1) < 1 - Y <= 1/n
        s = 1.0 - Y
        k, f = self._index(s)
        # the strip boundary Y = 1 - 1/(n+1) belongs to the upper strip n+1
        on_edge = (k > 0) & (s == 1.0 / (k + 1.0))
        k = np.where(on_edge, k + 1, k)
        bad = (X < 0) | (X > 1)
        return np.where(bad, 0, k), f & ~bad

    def step(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keys, flags = self._index(x)
        bad = (y < 0.0) | (y > 1.0)
        keys = np.where(bad, 0, keys)
        ok = keys > 0
        n = np.where(ok, keys, 1).astype(float)
        lam = n * (n + 1.0)
        X = np.where(ok, np.clip(lam * x - n, 0.0, 1.0), x)
        Y = np.where(ok, np.clip((1.0 - 1.0 / n) + y / lam, 0.0, 1.0), y)
        return X, Y, keys, flags & ~bad

    def width_range(self, key, levels=128):
        w = 1.0 / (key * (key + 1.0))
        return w, w

    def width_ranges(self, keys, levels=128):
        n = np.asarray(keys, dtype=float)
        w = 1.0 / (n * (n + 1.0))
        return w, w.copy()

    def describe(self):
        return {**super().describe(), "family": "lueroth", "N_max": self.n_max}


class PerturbedLueroth(PiecewiseMap):
    """Smooth conjugate h o L o h^{-1} of Lueroth-baker.

    h = h2 o h1 with h1(x, y) = (x + eps sin(pi x) cos(pi y), y) and
    h2(x, y) = (x, y + eps sin(pi y) cos(pi x)). Both fix the edges of the
    square, so posts stay full height and strips full width, but boundaries
    bend and all jets become genuinely nonlinear. The SRB measure is the
    image of Lebesgue measure under h and the entropy equals Lueroth's.
    """

    disjoint_strips = True
    orientation_preserving = True
    n_branches = None

    def __init__(self, epsilon: float = 0.005, n_max: int = 10**9, cone: ConeParams | None = None):
        if not 0.0 <= epsilon * PI < 1.0:
            raise ValueError("epsilon must satisfy 0 <= pi*epsilon < 1")
        super().__init__(cone or ConeParams(0.5, 1.5))
        self.eps = float(epsilon)
        self.n_max = int(n_max)
        self.L = Lueroth(n_max=n_max)
        self.name = f"perturbed_lueroth({self.eps:g})"

    # -- the conjugacy ----------------------------------------------------------
    def h(self, x, y):
        e = self.eps
        x1 = x + e * np.sin(PI * x) * np.cos(PI * y)
        return x1, y + e * np.sin(PI * y) * np.cos(PI * x1)

    def h_inv(self, X, Y):
        e = self.eps
        X = np.asarray(X, dtype=float)
        cx = np.cos(PI * X)
        y = newton_monotone(lambda t: t + e * np.sin(PI * t) * cx,
                            lambda t: 1.0 + e * PI * np.cos(PI * t) * cx, Y, Y)
        cy = np.cos(PI * y)
        x = newton_monotone(lambda t: t + e * np.sin(PI * t) * cy,
                            lambda t: 1.0 + e * PI * np.cos(PI * t) * cy, X, X)
        return x, y

    def h_jet(self, x, y) -> Jet:
        e, x, y = self.eps, *as_xy(x, y)
        sx, cx, sy, cy = np.sin(PI * x), np.cos(PI * x), np.sin(PI * y), np.cos(PI * y)
        shape = x.shape
        x1 = x + e * sx * cy
        d1 = np.zeros((2, 2) + shape)
        d2 = np.zeros((2, 2, 2) + shape)
        d1[0, 0], d1[0, 1], d1[1, 1] = 1 + e * PI * cx * cy, -e * PI * sx * sy, 1.0
        d2[0, 0, 0] = d2[0, 1, 1] = -e * PI**2 * sx * cy
        d2[0, 0, 1] = d2[0, 1, 0] = -e * PI**2 * cx * sy
        j1 = Jet(np.stack([x1, y]), d1, d2)
        su, cu = np.sin(PI * x1), np.cos(PI * x1)
        e1 = np.zeros((2, 2) + shape)
        e2 = np.zeros((2, 2, 2) + shape)
        e1[0, 0], e1[1, 0], e1[1, 1] = 1.0, -e * PI * sy * su, 1 + e * PI * cy * cu
        e2[1, 0, 0] = e2[1, 1, 1] = -e * PI**2 * sy * cu
        e2[1, 0, 1] = e2[1, 1, 0] = -e * PI**2 * cy * su
        j2 = Jet(np.stack([x1, y + e * sy * cu]), e1, e2)
        return compose_jets(j2, j1)

    def h_inv_jet(self, X, Y) -> Jet:
        w = self.h_inv(*as_xy(X, Y))
        return invert_jet(self.h_jet(*w), np.stack(w))

    # -- branch primitives --------------------------------------------------------
    def forward(self, key, x, y):
        return self.h(*self.L.forward(key, *self.h_inv(x, y)))

    def inverse(self, key, X, Y):
        return self.h(*self.L.inverse(key, *self.h_inv(X, Y)))

    def jet(self, key, x, y):
        jk = self.h_inv_jet(x, y)
        jl = self.L.jet(key, jk.value[0], jk.value[1])
        inner = compose_jets(jl, jk)
        return compose_jets(self.h_jet(inner.value[0], inner.value[1]), inner)

    def _vertical_image(self, a, Y):
        """x-coordinate of h({x = a}) at height Y."""
        e = self.eps
        a = np.broadcast_to(np.asarray(a, dtype=float), np.shape(Y))
        sa = np.sin(PI * a)

        def x1(s):
            return a + e * sa * np.cos(PI * s)

        def fun(s):
            return s + e * np.sin(PI * s) * np.cos(PI * x1(s))

        def dfun(s):
            u = x1(s)
            du = -e * PI * sa * np.sin(PI * s)
            return 1 + e * PI * np.cos(PI * s) * np.cos(PI * u) - e * PI * np.sin(PI * s) * np.sin(PI * u) * du

        s = newton_monotone(fun, dfun, np.asarray(Y, dtype=float), np.asarray(Y, dtype=float))
        return x1(s)

    def post_bounds(self, key, y):
        n = np.asarray(key, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(n, y).shape
        y = np.broadcast_to(y, shape)
        return self._vertical_image(1.0 / (n + 1.0), y), self._vertical_image(1.0 / n, y)

    def strip_bounds(self, key, X):
        n = np.asarray(key, dtype=float)
        X = np.asarray(X, dtype=float)
        e = self.eps

        def curve(b):
            return b + e * np.sin(PI * b) * np.cos(PI * X)

        return curve(1.0 - 1.0 / n), curve(1.0 - 1.0 / (n + 1.0))

    def locate(self, x, y):
        x, y = as_xy(x, y)
        bad = (x < 0) | (x > 1) | (y < 0) | (y > 1)
        w = self.h_inv(np.clip(x, 0, 1), np.clip(y, 0, 1))
        k, f = self.L.locate(*w)
        return np.where(bad, 0, k), f & ~bad

    def locate_strip(self, X, Y):
        X, Y = as_xy(X, Y)
        w = self.h_inv(np.clip(X, 0, 1), np.clip(Y, 0, 1))
        return self.L.locate_strip(*w)

    def step(self, x, y):
        x, y = as_xy(x, y)
        w = self.h_inv(x, y)
        keys, flags = self.L.locate(*w)
        ok = keys > 0
        wx, wy = self.L.forward(np.where(ok, keys, 1), *w)
        X, Y = self.h(np.clip(wx, 0, 1), np.clip(wy, 0, 1))
        X = np.where(ok, X, x)
        Y = np.where(ok, Y, y)
        return np.clip(X, 0, 1), np.clip(Y, 0, 1), keys, flags

    def width_ranges(self, keys, levels=128):
        keys = np.asarray(keys, dtype=float)
        ys = np.concatenate([[0.0], (np.arange(levels) + 0.5) / levels, [1.0]])
        w = self.post_width(keys[:, None], ys[None, :])
        return w.min(axis=1), w.max(axis=1)

    def describe(self):
        return {**super().describe(), "family": "perturbed_lueroth", "epsilon": self.eps,
                "N_max": self.n_max}


CUSTOM_FIELDS = ("f1", "f2", "f1x", "f1y", "f2x", "f2y",
                 "f1xx", "f1xy", "f1yy", "f2xx", "f2xy", "f2yy")


class ExpressionFamily(PiecewiseMap):
    """Family whose branches, partials and post boundaries are arithmetic expressions in x, y, n."""

    def __init__(self, exprs: dict, n_branches: int | None, n_max: int = 10**6,
                 cone: ConeParams | None = None, disjoint_strips: bool = False,
                 orientation_preserving: bool = False, name: str = "custom"):
        super().__init__(cone or ConeParams(0.5, 1.5))
        self.n_branches = n_branches
        self.n_max = n_max if n_branches is None else n_branches
        self.disjoint_strips = bool(disjoint_strips)
        self.orientation_preserving = bool(orientation_preserving)
        self.name = name
        self.exprs = dict(exprs)
        self._f = {k: compile_expr(exprs[k], ("x", "y", "n")) for k in CUSTOM_FIELDS}
        self._xl = compile_expr(exprs["x_left"], ("y", "n"))
        self._xr = compile_expr(exprs["x_right"], ("y", "n"))
        self._inv = None
        if "inv1" in exprs and "inv2" in exprs:
            self._inv = (compile_expr(exprs["inv1"], ("x", "y", "n")),
                         compile_expr(exprs["inv2"], ("x", "y", "n")))
        self._strip = None
        if "y_bottom" in exprs and "y_top" in exprs:
            self._strip = (compile_expr(exprs["y_bottom"], ("x", "n")),
                           compile_expr(exprs["y_top"], ("x", "n")))
        self.affine = all(str(exprs[k]).strip() in ("0", "0.0")
                          for k in CUSTOM_FIELDS if len(k) == 4)
        self._decreasing = None

    def _eval(self, name, key, x, y):
        x, y = as_xy(x, y)
        n = np.asarray(key, dtype=float)
        shape = np.broadcast(n, x).shape
        return np.broadcast_to(np.asarray(self._f[name](x, y, n), dtype=float), shape)

    def forward(self, key, x, y):
        return self._eval("f1", key, x, y), self._eval("f2", key, x, y)

    def jet(self, key, x, y):
        v = np.stack([self._eval("f1", key, x, y), self._eval("f2", key, x, y)])
        shape = v.shape[1:]
        d1 = np.zeros((2, 2) + shape)
        d2 = np.zeros((2, 2, 2) + shape)
        for c in range(2):
            p = f"f{c + 1}"
            d1[c, 0], d1[c, 1] = self._eval(p + "x", key, x, y), self._eval(p + "y", key, x, y)
            d2[c, 0, 0] = self._eval(p + "xx", key, x, y)
            d2[c, 0, 1] = d2[c, 1, 0] = self._eval(p + "xy", key, x, y)
            d2[c, 1, 1] = self._eval(p + "yy", key, x, y)
        return Jet(v, d1, d2)

    def inverse(self, key, X, Y):
        X, Y = as_xy(X, Y)
        n = np.asarray(key, dtype=float)
        if self._inv is not None:
            shape = np.broadcast(n, X).shape
            return (np.broadcast_to(self._inv[0](X, Y, n), shape).astype(float),
                    np.broadcast_to(self._inv[1](X, Y, n), shape).astype(float))
        shape = np.broadcast(n, X).shape
        xl, xr = self.post_bounds(key, np.full(shape, 0.5))
        x, y = 0.5 * (xl + xr), np.full(shape, 0.5)
        X, Y = np.broadcast_to(X, shape), np.broadcast_to(Y, shape)
        for _ in range(60):
            j = self.jet(key, x, y)
            r1, r2 = j.value[0] - X, j.value[1] - Y
            det = j.f1x * j.f2y - j.f1y * j.f2x
            dx = (j.f2y * r1 - j.f1y * r2) / det
            dy = (-j.f2x * r1 + j.f1x * r2) / det
            x, y = x - dx, y - dy
            if np.all(np.abs(r1) + np.abs(r2) < 1e-15):
                break
        return x, y

    def post_bounds(self, key, y):
        y = np.asarray(y, dtype=float)
        n = np.asarray(key, dtype=float)
        shape = np.broadcast(n, y).shape
        return (np.broadcast_to(self._xl(y, n), shape).astype(float),
                np.broadcast_to(self._xr(y, n), shape).astype(float))

    def strip_bounds(self, key, X):
        if self._strip is None:
            return super().strip_bounds(key, X)
        X = np.asarray(X, dtype=float)
        n = np.asarray(key, dtype=float)
        shape = np.broadcast(n, X).shape
        return (np.broadcast_to(self._strip[0](X, n), shape).astype(float),
                np.broadcast_to(self._strip[1](X, n), shape).astype(float))

    def locate(self, x, y):
        x, y = as_xy(x, y)
        shape = x.shape
        keys = np.zeros(shape, dtype=np.int64)
        flags = np.zeros(shape, dtype=bool)
        inside_q = (x >= 0) & (x <= 1) & (y >= 0) & (y <= 1)
        if self.n_branches is not None:
            for k in range(1, self.n_branches + 1):
                xl, xr = self.post_bounds(k, y)
                hit = (keys == 0) & inside_q & (x >= xl) & ((x < xr) | ((xr >= 1.0) & (x <= xr)))
                keys[hit] = k
                tol = BOUNDARY_RTOL * (xr - xl)
                flags |= hit & ((x - xl <= tol) | (xr - x <= tol))
            return keys, flags
        # countable: posts ordered monotonically in n, found by bisection on n
        if self._decreasing is None:
            self._decreasing = bool(self.post_bounds(2, 0.5)[0] < self.post_bounds(1, 0.5)[0])
        lo = np.ones(shape)
        hi = np.full(shape, float(self.n_max))
        for _ in range(int(np.ceil(np.log2(self.n_max))) + 2):
            if self._decreasing:
                # smallest n with x_left(n) <= x
                mid = np.floor(0.5 * (lo + hi))
                ok = self.post_bounds(mid, y)[0] <= x
                hi = np.where(ok, mid, hi)
                lo = np.where(ok, lo, np.minimum(mid + 1, hi))
            else:
                # largest n with x_left(n) <= x
                mid = np.ceil(0.5 * (lo + hi))
                ok = self.post_bounds(mid, y)[0] <= x
                lo = np.where(ok, mid, lo)
                hi = np.where(ok, hi, np.maximum(mid - 1, lo))
        k = lo
        xl, xr = self.post_bounds(k, y)
        hit = inside_q & (x >= xl) & ((x < xr) | ((xr >= 1.0) & (x <= xr)))
        tol = BOUNDARY_RTOL * (xr - xl)
        flags = hit & ((x - xl <= tol) | (xr - x <= tol))
        return np.where(hit, k, 0).astype(np.int64), flags

    def locate_strip(self, X, Y):
        if not self.disjoint_strips:
            return super().locate_strip(X, Y)
        X, Y = as_xy(X, Y)
        keys = np.zeros(X.shape, dtype=np.int64)
        flags = np.zeros(X.shape, dtype=bool)
        for k in self.branch_keys(self.n_branches or 1000):
            yb, yt = self.strip_bounds(k, X)
            hit = (keys == 0) & (Y >= yb) & (Y < yt)
            keys[hit] = k
        return keys, flags

    def describe(self):
        return {**super().describe(), "family": "custom", "branches": self.n_branches,
                "N_max": self.n_max}
