"""Probability laws for the (transmission interval, delay) pair.

The admissible support is the timing rectangle intersected with the
half-plane delay <= interval.  Probabilities of triangles are computed
exactly by polygon clipping, which both the partition builder and the
containment sampler rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .model import TimingRegion

__all__ = [
    "clip_halfplane",
    "polygon_area",
    "UniformTimingDistribution",
    "PiecewiseTimingDistribution",
    "make_distribution",
]


def clip_halfplane(poly: np.ndarray, a: float, b: float, c: float) -> np.ndarray:
    """Keep the part of a convex polygon with a*h + b*tau <= c.

    Sutherland-Hodgman step; returns an empty (0, 2) array when nothing
    survives.
    """
    poly = np.asarray(poly, dtype=float)
    if len(poly) == 0:
        return poly.reshape(0, 2)
    out: list[np.ndarray] = []
    n = len(poly)
    vals = poly[:, 0] * a + poly[:, 1] * b - c
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        vp, vq = vals[i], vals[(i + 1) % n]
        if vp <= 0.0:
            out.append(p)
        if (vp < 0.0 < vq) or (vq < 0.0 < vp):
            t = vp / (vp - vq)
            out.append(p + t * (q - p))
    return np.array(out).reshape(-1, 2)


def polygon_area(poly: np.ndarray) -> float:
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _clip_rect(poly: np.ndarray, h0: float, h1: float, t0: float, t1: float) -> np.ndarray:
    poly = clip_halfplane(poly, -1.0, 0.0, -h0)
    poly = clip_halfplane(poly, 1.0, 0.0, h1)
    poly = clip_halfplane(poly, 0.0, -1.0, -t0)
    return clip_halfplane(poly, 0.0, 1.0, t1)


def _clip_support(poly: np.ndarray, region: TimingRegion) -> np.ndarray:
    """Intersect a polygon with the admissible timing set."""
    poly = _clip_rect(poly, region.h_min, region.h_mati, region.tau_min, region.tau_mad)
    return clip_halfplane(poly, -1.0, 1.0, 0.0)  # tau <= h


def _region_rect(region: TimingRegion) -> np.ndarray:
    return np.array(
        [
            [region.h_min, region.tau_min],
            [region.h_mati, region.tau_min],
            [region.h_mati, region.tau_mad],
            [region.h_min, region.tau_mad],
        ]
    )


@dataclass(frozen=True)
class UniformTimingDistribution:
    """Uniform density over the admissible timing set."""

    region: TimingRegion

    def __post_init__(self):
        if self.support_area() <= 0.0:
            raise ConfigError("timing distribution support has zero area")

    def support_area(self) -> float:
        return polygon_area(_clip_support(_region_rect(self.region), self.region))

    def density(self, h: float, tau: float) -> float:
        if self.region.contains(h, tau) and tau <= h:
            return 1.0 / self.support_area()
        return 0.0

    def triangle_probability(self, verts: np.ndarray) -> float:
        clipped = _clip_support(np.asarray(verts, dtype=float), self.region)
        return polygon_area(clipped) / self.support_area()

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw (h, tau) pairs; rejection from the bounding rectangle."""
        r = self.region
        out = np.empty((count, 2))
        filled = 0
        while filled < count:
            m = max(count - filled, 16)
            h = rng.uniform(r.h_min, r.h_mati, size=m)
            tau = rng.uniform(r.tau_min, r.tau_mad, size=m)
            keep = tau < h
            take = min(int(np.sum(keep)), count - filled)
            out[filled : filled + take] = np.column_stack([h[keep], tau[keep]])[:take]
            filled += take
        return out


@dataclass(frozen=True)
class PiecewiseTimingDistribution:
    """Piecewise-constant density tabulated on a rectangular grid.

    ``weights[i, j]`` is the unnormalized density on cell
    (h_edges[i], h_edges[i+1]) x (tau_edges[j], tau_edges[j+1]); mass is
    normalized over the admissible set.
    """

    region: TimingRegion
    h_edges: np.ndarray
    tau_edges: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        he = np.asarray(self.h_edges, dtype=float)
        te = np.asarray(self.tau_edges, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "h_edges", he)
        object.__setattr__(self, "tau_edges", te)
        object.__setattr__(self, "weights", w)
        if w.shape != (len(he) - 1, len(te) - 1):
            raise ConfigError(
                f"weights must be {(len(he) - 1, len(te) - 1)} for the given edges, got {w.shape}"
            )
        if np.any(np.diff(he) <= 0.0) or np.any(np.diff(te) <= 0.0):
            raise ConfigError("density grid edges must be strictly increasing")
        if np.any(w < 0.0):
            raise ConfigError("density weights must be nonnegative")
        if self._total_mass() <= 0.0:
            raise ConfigError("tabulated density has zero mass on the admissible set")

    def _cell_masses(self) -> np.ndarray:
        he, te, w = self.h_edges, self.tau_edges, self.weights
        masses = np.zeros_like(w)
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                if w[i, j] == 0.0:
                    continue
                cell = np.array(
                    [
                        [he[i], te[j]],
                        [he[i + 1], te[j]],
                        [he[i + 1], te[j + 1]],
                        [he[i], te[j + 1]],
                    ]
                )
                masses[i, j] = w[i, j] * polygon_area(_clip_support(cell, self.region))
        return masses

    def _total_mass(self) -> float:
        return float(np.sum(self._cell_masses()))

    def density(self, h: float, tau: float) -> float:
        if not (self.region.contains(h, tau) and tau <= h):
            return 0.0
        i = int(np.searchsorted(self.h_edges, h, side="right") - 1)
        j = int(np.searchsorted(self.tau_edges, tau, side="right") - 1)
        i = min(max(i, 0), self.weights.shape[0] - 1)
        j = min(max(j, 0), self.weights.shape[1] - 1)
        return float(self.weights[i, j]) / self._total_mass()

    def triangle_probability(self, verts: np.ndarray) -> float:
        verts = np.asarray(verts, dtype=float)
        he, te, w = self.h_edges, self.tau_edges, self.weights
        total = 0.0
        for i in range(w.shape[0]):
            for j in range(w.shape[1]):
                if w[i, j] == 0.0:
                    continue
                piece = _clip_rect(verts, he[i], he[i + 1], te[j], te[j + 1])
                piece = _clip_support(piece, self.region)
                total += w[i, j] * polygon_area(piece)
        return total / self._total_mass()

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        masses = self._cell_masses().ravel()
        probs = masses / np.sum(masses)
        he, te = self.h_edges, self.tau_edges
        ncols = self.weights.shape[1]
        out = np.empty((count, 2))
        cells = rng.choice(len(probs), size=count, p=probs)
        for k, cell in enumerate(cells):
            i, j = divmod(int(cell), ncols)
            while True:
                h = rng.uniform(he[i], he[i + 1])
                tau = rng.uniform(te[j], te[j + 1])
                if tau < h and self.region.contains(h, tau):
                    out[k] = (h, tau)
                    break
        return out


def make_distribution(kind: str, region: TimingRegion, **kwargs):
    if kind == "uniform":
        return UniformTimingDistribution(region)
    if kind == "piecewise":
        return PiecewiseTimingDistribution(region, **kwargs)
    raise DomainError(f"unknown timing distribution kind {kind!r}")
