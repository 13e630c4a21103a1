"""Bounded domains: membership, volume, boundary distance, symmetrized ball.

The boundary counts as exterior everywhere (membership is strict interior),
matching the exit-time convention of the path simulator.  All shapes are
immutable and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import unit_ball_volume


def _as_points(x, d):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1 or (d == 1 and pts.ndim == 0)
    pts = np.atleast_2d(pts.reshape(-1, d) if pts.ndim != 2 else pts)
    if pts.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {pts.shape}")
    return pts, single


class Domain:
    """Common interface; concrete shapes implement the *_many methods."""

    dimension: int

    # scalar conveniences -------------------------------------------------

    def contains(self, x) -> bool:
        pts, _ = _as_points(x, self.dimension)
        return bool(self.contains_many(pts)[0])

    def boundary_distance(self, x) -> float:
        pts, _ = _as_points(x, self.dimension)
        return float(self.boundary_distance_many(pts)[0])

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        return self.boundary_distance_many(pts) > 0.0

    # defaults -------------------------------------------------------------

    @property
    def supports_bridge(self) -> bool:
        """Whether the diffusive-bridge exit correction applies (ball/box)."""
        return False

    @property
    def has_exterior_sphere(self) -> bool:
        """Uniform exterior sphere condition; False at box/polytope corners.

        Experiments on shapes without it are labelled hypothesis-extended
        rather than refused.
        """
        return False

    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def project_to_boundary_many(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(Domain):
    center: tuple
    radius: float

    def __init__(self, center, radius, dimension=None):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if dimension is not None and center.size == 1 and dimension > 1:
            center = np.full(dimension, float(center))
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(center))
        object.__setattr__(self, "radius", float(radius))

    @property
    def dimension(self):
        return len(self.center)

    def boundary_distance_many(self, pts):
        c = np.asarray(self.center)
        return self.radius - np.linalg.norm(pts - c, axis=1)

    def volume(self):
        return unit_ball_volume(self.dimension) * self.radius ** self.dimension

    def centroid(self):
        return np.asarray(self.center)

    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def diameter(self):
        return 2.0 * self.radius

    @property
    def supports_bridge(self):
        return True

    @property
    def has_exterior_sphere(self):
        return True

    def project_to_boundary_many(self, pts):
        c = np.asarray(self.center)
        v = pts - c
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        norms = np.where(norms == 0.0, 1.0, norms)
        return c + self.radius * v / norms

    def translate(self, shift):
        return Ball(np.asarray(self.center) + np.asarray(shift), self.radius)


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple
    hi: tuple

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        if not np.all(hi > lo):
            raise ValueError("box must have positive extent in every axis")
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @property
    def dimension(self):
        return len(self.lo)

    def boundary_distance_many(self, pts):
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        inside_gap = np.minimum(pts - lo, hi - pts).min(axis=1)
        outside = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        out_dist = np.linalg.norm(outside, axis=1)
        return np.where(out_dist > 0.0, -out_dist, inside_gap)

    def volume(self):
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))

    def centroid(self):
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    def bounding_box(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    @property
    def supports_bridge(self):
        return True

    @property
    def has_exterior_sphere(self):
        return self.dimension == 1  # corners break it in d >= 2

    def project_to_boundary_many(self, pts):
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        clipped = np.clip(pts, lo, hi)
        dist = self.boundary_distance_many(np.atleast_2d(clipped))
        out = clipped.copy()
        # for interior points, push the closest coordinate onto its face
        for i in np.nonzero(dist > 0)[0]:
            gaps_lo = clipped[i] - lo
            gaps_hi = hi - clipped[i]
            if gaps_lo.min() <= gaps_hi.min():
                j = int(np.argmin(gaps_lo))
                out[i, j] = lo[j]
            else:
                j = int(np.argmin(gaps_hi))
                out[i, j] = hi[j]
        return out

    def translate(self, shift):
        s = np.asarray(shift)
        return Box(np.asarray(self.lo) + s, np.asarray(self.hi) + s)


def Interval(a: float, b: float) -> Box:
    """One-dimensional domain (a, b)."""
    return Box([a], [b])


@dataclass(frozen=True)
class Ellipsoid(Domain):
    center: tuple
    semi_axes: tuple

    def __init__(self, center, semi_axes):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        axes = np.atleast_1d(np.asarray(semi_axes, dtype=float))
        if center.shape != axes.shape:
            raise ValueError("center and semi_axes must have the same length")
        if not np.all(axes > 0):
            raise ValueError("semi-axes must be positive")
        object.__setattr__(self, "center", tuple(center))
        object.__setattr__(self, "semi_axes", tuple(axes))

    @property
    def dimension(self):
        return len(self.center)

    def boundary_distance_many(self, pts):
        # first-order estimate (1 - rho) / |grad rho|; exact only for balls
        c = np.asarray(self.center)
        a = np.asarray(self.semi_axes)
        w = (pts - c) / a
        rho = np.linalg.norm(w, axis=1)
        grad = np.linalg.norm(w / a, axis=1)
        grad = np.where(grad == 0.0, 1.0 / a.min(), grad / np.where(rho == 0, 1, rho))
        return (1.0 - rho) / grad

    def volume(self):
        return unit_ball_volume(self.dimension) * float(np.prod(self.semi_axes))

    def centroid(self):
        return np.asarray(self.center)

    def bounding_box(self):
        c = np.asarray(self.center)
        a = np.asarray(self.semi_axes)
        return c - a, c + a

    @property
    def has_exterior_sphere(self):
        return True

    def translate(self, shift):
        return Ellipsoid(np.asarray(self.center) + np.asarray(shift), self.semi_axes)


class Polytope(Domain):
    """Convex polytope {x : A x <= b}; rows of A are normalized on entry.

    Volume and centroid come from rejection sampling in the bounding box
    (with reported standard error); the bounding box itself is solved by
    per-axis linear programs.
    """

    def __init__(self, normals, offsets, n_volume_samples: int = 1_000_000,
                 volume_seed: int = 0):
        A = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.atleast_1d(np.asarray(offsets, dtype=float))
        if A.shape[0] != b.size:
            raise ValueError("one offset per half-space required")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero normal vector")
        self.A = A / norms[:, None]
        self.b = b / norms
        self.dimension = A.shape[1]
        self._bbox = self._solve_bbox()
        self._volume, self._volume_se, self._centroid = \
            self._estimate_volume(n_volume_samples, volume_seed)
        if self._volume <= 0.0:
            raise ValueError("polytope has zero volume")

    def _solve_bbox(self):
        from scipy.optimize import linprog

        d = self.dimension
        lo = np.empty(d)
        hi = np.empty(d)
        for k in range(d):
            c = np.zeros(d)
            c[k] = 1.0
            for sign, target in ((1.0, lo), (-1.0, hi)):
                res = linprog(sign * c, A_ub=self.A, b_ub=self.b,
                              bounds=[(None, None)] * d, method="highs")
                if not res.success:
                    raise ValueError("polytope is empty or unbounded")
                target[k] = res.x[k]
        return lo, hi

    def _estimate_volume(self, n, seed):
        lo, hi = self._bbox
        box_vol = float(np.prod(hi - lo))
        rng = np.random.default_rng(np.random.Philox(key=[0x9E3779B97F4A7C15, seed]))
        accepted = 0
        centroid_sum = np.zeros(self.dimension)
        chunk = 200_000
        remaining = n
        while remaining > 0:
            m = min(chunk, remaining)
            pts = lo + (hi - lo) * rng.random((m, self.dimension))
            inside = self.contains_many(pts)
            accepted += int(inside.sum())
            centroid_sum += pts[inside].sum(axis=0)
            remaining -= m
        frac = accepted / n
        vol = box_vol * frac
        se = box_vol * math.sqrt(max(frac * (1 - frac), 0.0) / n)
        centroid = centroid_sum / max(accepted, 1)
        return vol, se, centroid

    def boundary_distance_many(self, pts):
        # supporting-hyperplane formula: exact inside, a lower bound outside
        slack = self.b[None, :] - pts @ self.A.T
        return slack.min(axis=1)

    def volume(self):
        return self._volume

    @property
    def volume_std_error(self):
        return self._volume_se

    def centroid(self):
        return self._centroid.copy()

    def bounding_box(self):
        lo, hi = self._bbox
        return lo.copy(), hi.copy()

    def translate(self, shift):
        s = np.asarray(shift)
        return Polytope(self.A, self.b + self.A @ s)


def equal_volume_ball(domain: Domain) -> Ball:
    """Ball centered at the origin with the same volume as the domain."""
    v = domain.volume()
    d = domain.dimension
    radius = (v / unit_ball_volume(d)) ** (1.0 / d)
    return Ball(np.zeros(d), radius)


def interior_lattice(domain: Domain, spacing: float | None = None,
                     margin: float = 0.0, target_count: int = 64) -> np.ndarray:
    """Regular grid of interior points with boundary_distance > margin.

    The lattice is centered on the domain centroid so symmetric domains get
    symmetric start points.  When spacing is omitted it is chosen to yield
    roughly target_count points.
    """
    d = domain.dimension
    if spacing is None:
        spacing = (domain.volume() / target_count) ** (1.0 / d)
    lo, hi = domain.bounding_box()
    c = domain.centroid()
    axes = []
    for k in range(d):
        n_lo = int(math.floor((c[k] - lo[k]) / spacing))
        n_hi = int(math.floor((hi[k] - c[k]) / spacing))
        axes.append(c[k] + spacing * np.arange(-n_lo, n_hi + 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    keep = domain.boundary_distance_many(pts) > margin
    pts = pts[keep]
    if pts.shape[0] == 0:
        raise ValueError("no lattice points clear the requested margin")
    return pts


def domain_from_spec(spec: dict) -> Domain:
    """Build a domain from a configuration mapping (see the cli module)."""
    shape = spec.get("shape")
    if shape is None:
        raise ValueError("domain spec needs 'shape'")
    if shape == "ball":
        return Ball(spec["center"], float(spec["radius"]))
    if shape == "box":
        return Box(spec["lo"], spec["hi"])
    if shape == "interval":
        return Interval(float(spec["a"]), float(spec["b"]))
    if shape == "ellipsoid":
        return Ellipsoid(spec["center"], spec["semi_axes"])
    if shape == "polytope":
        return Polytope(spec["normals"], spec["offsets"],
                        n_volume_samples=int(spec.get("n_volume_samples", 1_000_000)))
    raise ValueError(f"unknown domain shape {shape!r}")


DOMAIN_SHAPES = ("ball", "box", "interval", "ellipsoid", "polytope")
