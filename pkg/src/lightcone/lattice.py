"""Finite lattice geometry, region algebra and the smooth cutoff class used by ASTLOs."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import sympy
from scipy import integrate, spatial


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Lattice:
    """Finite patch of Z^d embedded in R^d with spacing ``grid``.

    ``metric`` is ``"euclidean"`` (default) or ``"linf"``.
    """

    dim: int
    sites: tuple[tuple[int, ...], ...]
    grid: float = 1.0
    metric: str = "euclidean"

    def __post_init__(self):
        if self.dim < 1:
            raise GeometryError("dimension must be positive")
        if self.grid < 1:
            raise GeometryError("grid size must be >= 1")
        if self.metric not in ("euclidean", "linf"):
            raise GeometryError(f"unknown metric {self.metric!r}")
        if any(len(s) != self.dim for s in self.sites):
            raise GeometryError("site coordinates do not match dimension")
        if len(set(self.sites)) != len(self.sites):
            raise GeometryError("site coordinates must be distinct")

    @classmethod
    def chain(cls, length: int, grid: float = 1.0) -> "Lattice":
        return cls(1, tuple((i,) for i in range(length)), grid)

    @classmethod
    def box(cls, extent: Sequence[int], grid: float = 1.0, metric: str = "euclidean") -> "Lattice":
        coords = tuple(itertools.product(*(range(e) for e in extent)))
        return cls(len(extent), coords, grid, metric)

    def __len__(self) -> int:
        return len(self.sites)

    @functools.cached_property
    def coords(self) -> np.ndarray:
        return self.grid * np.asarray(self.sites, dtype=float).reshape(len(self.sites), self.dim)

    @functools.cached_property
    def distances(self) -> np.ndarray:
        name = "euclidean" if self.metric == "euclidean" else "chebyshev"
        d = spatial.distance.cdist(self.coords, self.coords, metric=name)
        d.setflags(write=False)
        return d

    @property
    def diameter(self) -> float:
        return float(self.distances.max()) if len(self) else 0.0

    def index(self, coord: Sequence[int]) -> int:
        return self.sites.index(tuple(coord))

    def region(self, members: Iterable[int]) -> "Region":
        return Region(self, members)

    def full(self) -> "Region":
        return Region(self, range(len(self)))


class Region:
    """Sorted set of site indices on a lattice."""

    __slots__ = ("lattice", "members", "_set")

    def __init__(self, lattice: Lattice, members: Iterable[int]):
        ms = sorted({int(m) for m in members})
        if ms and (ms[0] < 0 or ms[-1] >= len(lattice)):
            raise GeometryError(f"region members {ms} outside lattice of {len(lattice)} sites")
        self.lattice = lattice
        self.members = tuple(ms)
        self._set = frozenset(ms)

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, x) -> bool:
        return int(x) in self._set

    def __eq__(self, other) -> bool:
        return isinstance(other, Region) and other.lattice is self.lattice and other.members == self.members

    def __hash__(self) -> int:
        return hash((id(self.lattice), self.members))

    def __repr__(self) -> str:
        return f"Region({list(self.members)})"

    def __or__(self, other: "Region") -> "Region":
        return Region(self.lattice, self._set | other._set)

    def __and__(self, other: "Region") -> "Region":
        return Region(self.lattice, self._set & other._set)

    def __sub__(self, other: "Region") -> "Region":
        return Region(self.lattice, self._set - other._set)

    def issubset(self, other: "Region") -> bool:
        return self._set <= other._set

    def complement(self) -> "Region":
        return Region(self.lattice, set(range(len(self.lattice))) - self._set)

    def indicator(self) -> np.ndarray:
        f = np.zeros(len(self.lattice))
        f[list(self.members)] = 1.0
        return f

    def distance_function(self) -> np.ndarray:
        """d_X evaluated on every lattice site."""
        if not self.members:
            raise GeometryError("empty region has no distance function")
        return self.lattice.distances[:, list(self.members)].min(axis=1)


def distance_to_region(x: int, X: Region) -> float:
    return float(X.distance_function()[x])


def region_distance(X: Region, Y: Region) -> float:
    if not X.members or not Y.members:
        return float("inf")
    return float(X.lattice.distances[np.ix_(list(X.members), list(Y.members))].min())


def fatten(X: Region, xi: float) -> Region:
    """X_xi = {x : d_X(x) <= xi}."""
    if xi < 0:
        raise GeometryError("fattening radius must be nonnegative")
    d = X.distance_function()
    # tolerance guards against sqrt round-off on integer grids
    return Region(X.lattice, np.flatnonzero(d <= xi + 1e-12))


def annulus(X: Region, a: float, b: float) -> Region:
    """X_{a,b} = X_b minus X_a."""
    if not 0 <= a < b:
        raise GeometryError(f"annulus needs 0 <= a < b, got a={a}, b={b}")
    return fatten(X, b) - fatten(X, a)


# ---------------------------------------------------------------------------
# cutoff functions


def _bump_log_square(delta: float):
    """Symbolic log of w(s)^2 = exp(-2/(s(delta-s)))."""
    s = sympy.Symbol("s", real=True)
    return s, -2 / (s * (sympy.Float(delta) - s))


@functools.lru_cache(maxsize=32)
def _normalizer(delta: float) -> float:
    val, _ = integrate.quad(lambda x: np.exp(-2.0 / (x * (delta - x))), 0.0, delta,
                            epsabs=1e-14 * delta, epsrel=1e-13, limit=200)
    return val


@functools.lru_cache(maxsize=32)
def _square_derivative_factors(delta: float, order: int):
    """Polynomial prefactors P_k with (w^2)^{(k)} = P_k(s) w(s)^2, k = 0..order."""
    s, g = _bump_log_square(delta)
    gp = sympy.diff(g, s)
    polys = [sympy.Integer(1)]
    for _ in range(order):
        p = polys[-1]
        polys.append(sympy.together(sympy.diff(p, s) + p * gp))
    return [sympy.lambdify(s, p, modules="numpy") for p in polys]


@dataclass(frozen=True)
class CutoffFunction:
    """chi(mu) = int_{-inf}^mu w^2 / int w^2 with w(s) = exp(-1/(s(delta-s))) on (0, delta).

    chi' = w^2/Z so sqrt(chi') = w/sqrt(Z) is smooth. Higher derivatives come from
    closed-form symbolic differentiation of w^2.
    """

    delta: float
    max_order: int = 4
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise GeometryError("cutoff width delta must be positive")
        if self.max_order < 1:
            raise GeometryError("max_order must be >= 1")

    @property
    def norm(self) -> float:
        return _normalizer(float(self.delta))

    def _w2(self, mu: np.ndarray) -> np.ndarray:
        out = np.zeros_like(mu, dtype=float)
        inside = (mu > 0) & (mu < self.delta)
        m = mu[inside]
        out[inside] = np.exp(-2.0 / (m * (self.delta - m)))
        return out

    def _integral(self, mu: float) -> float:
        key = float(mu)
        hit = self._cache.get(key)
        if hit is None:
            d = self.delta
            if key <= 0:
                hit = 0.0
            elif key >= d:
                hit = 1.0
            elif key <= d / 2:
                val, _ = integrate.quad(lambda x: np.exp(-2.0 / (x * (d - x))), 0.0, key,
                                        epsabs=1e-15 * d, epsrel=1e-13, limit=200)
                hit = val / self.norm
            else:
                # integrate the short side; the bump is symmetric about delta/2
                val, _ = integrate.quad(lambda x: np.exp(-2.0 / (x * (d - x))), key, d,
                                        epsabs=1e-15 * d, epsrel=1e-13, limit=200)
                hit = 1.0 - val / self.norm
            self._cache[key] = hit
        return hit

    def __call__(self, mu):
        arr = np.asarray(mu, dtype=float)
        flat = np.array([self._integral(m) for m in arr.ravel()])
        return flat.reshape(arr.shape) if arr.ndim else float(flat[0])

    def derivative(self, mu, k: int = 1):
        """k-th derivative chi^(k); k = 0 returns chi itself."""
        if k == 0:
            return self(mu)
        if not 1 <= k <= self.max_order:
            raise GeometryError(f"derivative order {k} outside 1..{self.max_order}")
        arr = np.atleast_1d(np.asarray(mu, dtype=float))
        out = np.zeros_like(arr)
        d = self.delta
        inside = (arr > 0) & (arr < d)
        m = arr[inside]
        logw2 = -2.0 / (m * (d - m))
        # exp underflows long before the rational prefactor overflows
        live = logw2 > -700.0
        poly = _square_derivative_factors(float(d), self.max_order - 1)[k - 1]
        vals = np.zeros_like(m)
        if live.any():
            ml = m[live]
            vals[live] = np.asarray(poly(ml), dtype=float) * np.exp(logw2[live])
        out[inside] = vals / self.norm
        return out.reshape(np.shape(mu)) if np.ndim(mu) else float(out[0])

    def sqrt_derivative(self, mu):
        """sqrt(chi') computed as w / sqrt(Z)."""
        arr = np.atleast_1d(np.asarray(mu, dtype=float))
        out = np.sqrt(self._w2(arr)) / np.sqrt(self.norm)
        return out.reshape(np.shape(mu)) if np.ndim(mu) else float(out[0])


def make_cutoff(delta: float, max_order: int = 4) -> CutoffFunction:
    return CutoffFunction(float(delta), int(max_order))


def evaluate_spacetime_cutoff(chi: CutoffFunction, X: Region, v: float, t: float, s: float,
                              derivative: int = 0) -> np.ndarray:
    """Site vector chi((d_X - v t)/s), or its ``derivative``-th derivative in the argument."""
    if not s > 0:
        raise GeometryError("adiabatic scale s must be positive")
    mu = (X.distance_function() - v * t) / s
    return np.asarray(chi.derivative(mu, derivative), dtype=float)
