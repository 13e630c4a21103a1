"""Domain geometry tests: membership, volumes, distances, symmetrized ball."""

import math

import numpy as np
import pytest

from jumplab.geometry import (
    Ball,
    Box,
    Ellipsoid,
    Interval,
    Polytope,
    equal_volume_ball,
    interior_lattice,
)


def test_contains_ball_strict_boundary():
    b = Ball((0.0, 0.0), 1.0)
    assert b.contains((0.0, 0.0))
    assert not b.contains((1.0, 0.0))  # boundary counts as exterior
    assert not b.contains((1.1, 0.0))


def test_contains_box():
    bx = Box((0.0, 0.0), (1.0, 1.0))
    assert bx.contains((0.5, 0.5))
    assert not bx.contains((0.5, 1.5))
    assert not bx.contains((0.5, 1.0))


def test_volumes_exact():
    assert Ball((0.0, 0.0), 1.0).volume() == pytest.approx(math.pi)
    assert Box((0.0, 0.0), (1.0, 2.0)).volume() == pytest.approx(2.0)
    assert Interval(-2.0, 2.0).volume() == pytest.approx(4.0)
    assert Ellipsoid((0.0, 0.0), (2.0, 0.5)).volume() == pytest.approx(math.pi)


def test_triangle_volume_rejection_sampling():
    # right triangle with legs 1: area 1/2
    tri = Polytope(normals=[[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]],
                   offsets=[0.0, 0.0, 1.0], n_volume_samples=400_000)
    assert tri.volume() == pytest.approx(0.5, abs=5 * tri.volume_std_error)
    assert tri.volume_std_error < 0.01


def test_degenerate_shapes_rejected():
    with pytest.raises(ValueError):
        Ball((0.0,), 0.0)
    with pytest.raises(ValueError):
        Box((0.0, 0.0), (1.0, 0.0))
    with pytest.raises(ValueError):
        # empty polytope: x <= -1 and x >= 1
        Polytope(normals=[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
                 offsets=[-1.0, -1.0, 1.0, 1.0], n_volume_samples=10_000)


def test_equal_volume_ball_cases():
    # square of side sqrt(pi) has area pi, matching the unit disk
    sq = Box((-math.sqrt(math.pi) / 2,) * 2, (math.sqrt(math.pi) / 2,) * 2)
    ball = equal_volume_ball(sq)
    assert ball.radius == pytest.approx(1.0, rel=1e-12)
    # idempotent on balls
    assert equal_volume_ball(Ball((3.0, 4.0), 2.0)).radius == pytest.approx(2.0)
    # interval (-2, 2) maps to the centered radius-2 interval
    assert equal_volume_ball(Interval(-2.0, 2.0)).radius == pytest.approx(2.0)


def test_boundary_distance_signed():
    b = Ball((0.0, 0.0), 1.0)
    assert b.boundary_distance((0.5, 0.0)) == pytest.approx(0.5)
    assert b.boundary_distance((2.0, 0.0)) == pytest.approx(-1.0)
    bx = Box((0.0, 0.0), (1.0, 1.0))
    assert bx.boundary_distance((0.3, 0.4)) == pytest.approx(0.3)
    assert bx.boundary_distance((1.5, 0.5)) == pytest.approx(-0.5)
    assert bx.boundary_distance((2.0, 2.0)) == pytest.approx(-math.sqrt(2.0))


def test_polytope_distance_supporting_hyperplane():
    tri = Polytope(normals=[[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]],
                   offsets=[0.0, 0.0, 1.0], n_volume_samples=50_000)
    # interior: exact min distance over faces (nearest leg here)
    assert tri.boundary_distance((0.25, 0.25)) == pytest.approx(0.25)
    # a point nearest to the hypotenuse
    assert tri.boundary_distance((0.45, 0.45)) == pytest.approx(0.1 / math.sqrt(2.0))
    assert tri.boundary_distance((-1.0, 0.5)) < 0


def test_contains_iff_positive_distance_random_points():
    rng = np.random.default_rng(5)
    shapes = [Ball((0.2, -0.3), 0.9), Box((-1.0, 0.0), (0.5, 2.0)),
              Ellipsoid((0.0, 0.0), (1.5, 0.6))]
    pts = rng.uniform(-2.5, 2.5, size=(400, 2))
    for s in shapes:
        inside = s.contains_many(pts)
        dist = s.boundary_distance_many(pts)
        assert np.array_equal(inside, dist > 0)


def test_centroid_inside_convex_shapes():
    tri = Polytope(normals=[[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]],
                   offsets=[0.0, 0.0, 1.0], n_volume_samples=50_000)
    for s in [Ball((1.0, 2.0), 0.5), Box((0.0, 0.0), (1.0, 3.0)),
              Ellipsoid((1.0, -1.0), (0.5, 0.25)), tri]:
        assert s.contains(s.centroid())


def test_equal_volume_ball_preserves_volume_for_polytope():
    tri = Polytope(normals=[[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]],
                   offsets=[0.0, 0.0, 1.0], n_volume_samples=400_000)
    ball = equal_volume_ball(tri)
    assert ball.volume() == pytest.approx(tri.volume(),
                                          abs=5 * tri.volume_std_error)


def test_volume_monte_carlo_rate():
    # RMS error of the rejection estimate should scale like n^(-1/2)
    truth = 0.5
    sizes = [1_000, 10_000, 100_000]
    rmse = []
    for n in sizes:
        errs = []
        for rep in range(10):
            tri = Polytope(normals=[[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]],
                           offsets=[0.0, 0.0, 1.0], n_volume_samples=n,
                           volume_seed=rep + 1)
            errs.append((tri.volume() - truth) ** 2)
        rmse.append(math.sqrt(np.mean(errs)))
    slope = np.polyfit(np.log(sizes), np.log(rmse), 1)[0]
    assert -0.75 <= slope <= -0.25


def test_projection_onto_ball_boundary():
    b = Ball((0.0, 0.0), 2.0)
    proj = b.project_to_boundary_many(np.array([[0.5, 0.0], [3.0, 4.0]]))
    assert np.allclose(np.linalg.norm(proj, axis=1), 2.0)


def test_interior_lattice_margin_and_symmetry():
    b = Ball((0.0, 0.0), 1.0)
    pts = interior_lattice(b, spacing=0.25, margin=0.1)
    assert np.all(b.boundary_distance_many(pts) > 0.1)
    # lattice is centered, so it is symmetric under point reflection
    as_set = {tuple(np.round(p, 12)) for p in pts}
    assert all(tuple(np.round(-p, 12)) in as_set for p in pts)
    # centroid itself is in the lattice
    assert (0.0, 0.0) in as_set


def test_translate():
    b = Ball((0.0, 1.0), 1.0).translate((1.0, -1.0))
    assert b.contains((1.0, 0.0))
    bx = Box((0.0,), (1.0,)).translate((-0.5,))
    assert bx.contains((0.4,)) and bx.contains((-0.4,))
