"""Vectorized orbit ensembles with seeded jitter and tangent or frame transport."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .geometry import PiecewiseMap

# Seeded perturbation added after every step. Expanding maps discard one low bit per
# doubling in floating point, so unperturbed orbits of the baker map collapse onto
# dyadic rationals within ~53 steps; the jitter keeps orbits generic.
JITTER = 1e-12
GROUP_SIZE = 64
JITTER_BLOCK = 1024


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by (seed, *stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def uniform_seeds(count: int, seed: int) -> np.ndarray:
    rng = make_rng(seed, 0xC0DE)
    return rng.random((int(count), 2))


def reflect_unit(v):
    v = np.abs(v)
    return 1.0 - np.abs(1.0 - v)


def jitter_points(x, y, rng: np.random.Generator, size: float):
    if size <= 0:
        return x, y
    x = reflect_unit(x + rng.uniform(-size, size, x.shape))
    y = reflect_unit(y + rng.uniform(-size, size, y.shape))
    return x, y


class Walker:
    """Orbits of many points advanced in lockstep.

    ``alive`` tracks points that have stayed on enumerated branches (and, when
    ``drop_boundary`` is set, away from post boundaries). With ``tangent`` a unit
    vector starting at (1, 0) is transported and the per-step log growth of its
    max norm is returned. With ``frame`` the full derivative DF^k is carried with
    a per-point log scale to avoid overflow.
    """

    def __init__(self, fmap: PiecewiseMap, x, y, rng: np.random.Generator | None = None,
                 jitter: float = JITTER, tangent: bool = False, frame: bool = False,
                 drop_boundary: bool = True):
        self.fmap = fmap
        self.x = np.array(x, dtype=float)
        self.y = np.array(y, dtype=float)
        self.rng = rng
        self.jitter = jitter if rng is not None else 0.0
        self.drop_boundary = drop_boundary
        self._buf, self._pos = None, 0
        self.alive = np.ones(self.x.shape, dtype=bool)
        self.escaped = np.zeros(self.x.shape, dtype=bool)
        self.v = (np.ones_like(self.x), np.zeros_like(self.x)) if tangent else None
        self.M = None
        if frame:
            self.M = np.zeros((2, 2) + self.x.shape)
            self.M[0, 0] = self.M[1, 1] = 1.0
            self.log_scale = np.zeros_like(self.x)

    def _noise(self):
        """Pre-drawn jitter, refilled in blocks to amortize generator calls."""
        if self._buf is None or self._pos >= self._buf.shape[0]:
            self._buf = self.rng.uniform(-self.jitter, self.jitter, (JITTER_BLOCK, 2) + self.x.shape)
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out

    def step(self):
        """Advance one step; returns (keys, log tangent growth or None)."""
        fmap = self.fmap
        growth = None
        if self.v is None and self.M is None:
            X, Y, keys, flags = fmap.step(self.x, self.y)
            ok = fmap.key_valid(keys)
            self.escaped |= self.alive & ~ok
            ok &= self.alive
            if self.drop_boundary:
                ok &= ~flags
            self.alive = ok
            self.x, self.y = X, Y
        else:
            keys, flags = fmap.locate(self.x, self.y)
            valid = fmap.key_valid(keys)
            self.escaped |= self.alive & ~valid
            ok = valid & self.alive
            if self.drop_boundary:
                ok &= ~flags
            self.alive = ok
            idx = np.flatnonzero(ok)
            if idx.size:
                jet = fmap.jet(keys[idx], self.x[idx], self.y[idx])
                X, Y = jet.value[0], jet.value[1]
                if self.v is not None:
                    growth = np.full(self.x.shape, np.nan)
                    a, b = jet.apply(self.v[0][idx], self.v[1][idx])
                    n = np.maximum(np.abs(a), np.abs(b))
                    growth[idx] = np.log(n)
                    self.v[0][idx], self.v[1][idx] = a / n, b / n
                if self.M is not None:
                    m = np.einsum("ca...,ab...->cb...", jet.d1, self.M[:, :, idx])
                    c = np.max(np.abs(m.reshape(4, -1)), axis=0)
                    self.M[:, :, idx] = m / c
                    self.log_scale[idx] += np.log(c)
                self.x[idx], self.y[idx] = np.clip(X, 0.0, 1.0), np.clip(Y, 0.0, 1.0)
        if self.jitter > 0:
            nz = self._noise()
            self.x = reflect_unit(self.x + nz[0])
            self.y = reflect_unit(self.y + nz[1])
        return keys, growth

    def log_operator_norm(self):
        """log of the max-row-sum norm of DF^k for each point."""
        rows = np.abs(self.M[:, 0]) + np.abs(self.M[:, 1])
        return np.log(np.max(rows, axis=0)) + self.log_scale

    def log_f1x(self):
        return np.log(np.abs(self.M[0, 0])) + self.log_scale


def seed_groups(count: int, group_size: int = GROUP_SIZE):
    """Fixed partition of seed indices; independent of the thread count."""
    return [np.arange(s, min(s + group_size, count)) for s in range(0, count, group_size)]


def map_groups(fn, groups, threads: int = 1):
    """Apply fn(group_index, indices) to every group, results in group order."""
    if threads <= 1 or len(groups) <= 1:
        return [fn(i, g) for i, g in enumerate(groups)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(len(groups)), groups))
