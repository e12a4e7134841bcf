import itertools

import numpy as np
import pytest

from vibroimpact.chaos import (AffineHorseshoe, BudgetError, InverseOf, LinearMap, ManifoldArc,
                               NoIntersectionError, NotSaddleError, TangencyError, build_boxes,
                               find_homoclinic, grow_manifold, hausdorff_distance,
                               orbit_clearance, polyline_distance, realize_itinerary,
                               run_pipeline, saddle_split, segment_intersections,
                               unit_shift_holds, verify_covering)

# ----------------------------------------------------------------- linear and synthetic


def test_saddle_split_orders_eigenpairs():
    lu, vu, ls, vs = saddle_split([[2.0, 1.0], [0.0, 0.5]])
    assert lu == pytest.approx(2.0) and ls == pytest.approx(0.5)
    np.testing.assert_allclose(abs(vu @ [1, 0]), 1.0)
    with pytest.raises(NotSaddleError):
        saddle_split([[0.0, -1.0], [1.0, 0.0]])


@pytest.mark.parametrize("branch", ["unstable", "stable"])
def test_linear_manifolds_stay_on_eigenlines(branch):
    A = np.array([[2.0, 1.0], [0.0, 0.5]])
    arc = grow_manifold(LinearMap(A, (0.3, -0.2)), (0.3, -0.2), branch, generations=8,
                        chord_tol=1e-3)
    lu, vu, ls, vs = saddle_split(A)
    v = vu if branch == "unstable" else vs
    rel = arc.points - [0.3, -0.2]
    off = np.abs(rel[:, 0] * v[1] - rel[:, 1] * v[0])
    assert off.max() < 1e-8
    assert arc.length() > 10 * arc.seeds[0] if branch == "unstable" else arc.length() > 0


def test_negative_eigenvalue_uses_second_iterate():
    arc = grow_manifold(LinearMap(np.diag([-3.0, 0.2])), (0, 0), "unstable", generations=4,
                        chord_tol=1e-2)
    assert arc.step_power == 2
    assert np.all(np.abs(arc.points[:, 1]) < 1e-12)


def test_rotation_is_rejected():
    c, s = np.cos(0.4), np.sin(0.4)
    with pytest.raises(NotSaddleError):
        grow_manifold(LinearMap([[c, -s], [s, c]]), (0, 0))


def test_point_budget():
    with pytest.raises(BudgetError):
        grow_manifold(LinearMap(np.diag([3.0, 0.2])), (0, 0), arc_budget=10, generations=30)


def _arc(points, branch="unstable"):
    points = np.asarray(points, dtype=float)
    n = len(points)
    return ManifoldArc(branch, points, np.linspace(1e-3, 1, n), np.zeros(n, int), np.zeros(n, int),
                       [], [], np.zeros(2), np.array([1.0, 0.0]), 2.0)


def test_polyline_crossing_is_exact():
    u = _arc([[0, 0], [1, 0.2], [2, 0.5], [3, 3.0]])
    s = _arc([[0, 0], [2.5, 0.0], [2.5, 4.0]], "stable")
    hp = find_homoclinic(u, s, exclude_radius=0.5)
    # segment (2, 0.5)-(3, 3) meets x = 2.5 at y = 1.75
    np.testing.assert_allclose(hp.location, [2.5, 1.75], atol=1e-9)
    # direction (1, 2.5) against the vertical
    assert hp.crossing_angle == pytest.approx(np.arctan2(1, 2.5))
    assert not hp.refined


def test_tangency_and_miss():
    u = _arc([[0, 0], [1, 0], [2, 1e-6]])
    s = _arc([[0, 0], [1.5, -1e-9], [3, 1e-5]], "stable")
    with pytest.raises(TangencyError):
        find_homoclinic(u, s, exclude_radius=0.5)
    with pytest.raises(NoIntersectionError):
        find_homoclinic(_arc([[0, 0], [1, 1]]), _arc([[0, 0], [1, -1]], "stable"),
                        exclude_radius=0.5)


def test_segment_geometry_helpers():
    hits = segment_intersections([[0, 0], [2, 2]], [[0, 2], [2, 0]])
    assert len(hits) == 1 and hits[0][2] == pytest.approx(0.5)
    assert polyline_distance([[0, 0], [1, 0]], [0.5, 0.3]) == pytest.approx(0.3)
    assert hausdorff_distance([[0, 0], [1, 0]], [[0, 0.1], [1, 0.1]]) == pytest.approx(0.1)


def test_inverse_of_undoes_the_map():
    F = AffineHorseshoe(3.0)
    G = InverseOf(F)
    for z in ([0.1, 0.1], [0.3, 0.8]):
        np.testing.assert_allclose(G.forward(F.forward(z)), z, atol=1e-14)
        np.testing.assert_allclose(G.jacobian(F.forward(z)) @ F.jacobian(z), np.eye(2), atol=1e-12)


# ----------------------------------------------------------------- horseshoe


HORSESHOE_GROWTH = dict(generations=8, chord_tol=0.05, seed_length=1e-3)


@pytest.fixture(scope="module")
def horseshoe():
    smap, z = AffineHorseshoe(3.0), np.zeros(2)
    bundle = run_pipeline(smap, z, 1.2, None, 1.0, 1.0, HORSESHOE_GROWTH, HORSESHOE_GROWTH, 0.9,
                          50, 0, ((0,), (1,), (0, 1)), True, 17)
    return bundle, smap, z


def test_horseshoe_homoclinic_point(horseshoe):
    hp = horseshoe[0].homoclinic
    np.testing.assert_allclose(hp.location, [0.0, 1.0], atol=1e-9)
    assert hp.crossing_angle == pytest.approx(np.pi / 2)


def test_horseshoe_boxes_and_covering(horseshoe):
    bundle, smap, z = horseshoe
    B = bundle.boxes
    assert (B.m_plus, B.m_minus) == (1, 1)
    assert bundle.covering.passed and bundle.covering.n_passed == 50
    assert B.m == 2
    # each strip contains its own anchor and not the other one
    for j in (0, 1):
        assert B.in_V(j, B.anchors[j]) and not B.in_V(1 - j, B.anchors[j])


def test_misplaced_boxes_fail_covering(horseshoe):
    bundle, smap, _ = horseshoe
    bad = bundle.boxes.shifted(1, 0.5)
    assert not verify_covering(smap, bad, n_arcs=20, seed=3).passed


def test_box_aspect_ratio_enforced(horseshoe):
    bundle, smap, z = horseshoe
    hp = bundle.homoclinic
    with pytest.raises(ValueError):
        build_boxes(smap, z, hp, 1.2, eps_s=2.0)
    assert build_boxes(smap, z, hp, 1.2, eps_s=2.4).eps_s == 2.4


def test_horseshoe_words(horseshoe):
    bundle, smap, z = horseshoe
    B = bundle.boxes
    orb = realize_itinerary(smap, B, (0, 0, 0), periodic=True)
    np.testing.assert_allclose(orb.point, z, atol=1e-12)
    orb1 = realize_itinerary(smap, B, (1,), periodic=True)
    # box map is S^2; word (1) is the 2-cycle (0.9, 0.3) <-> (0.3, 0.9) of the horseshoe
    np.testing.assert_allclose(orb1.point, [0.9, 0.3], atol=1e-10)
    np.testing.assert_allclose(smap.iterate(orb1.point, 2), orb1.point, atol=1e-10)
    assert unit_shift_holds(smap, B, orb1)


# ----------------------------------------------------------------- oscillator


def test_unstable_arc_has_a_kink(chaos_bundle):
    bundle, smap, z, _ = chaos_bundle
    W_u = bundle.unstable
    assert W_u.kinks
    assert W_u.impacts.max() >= 1 and W_u.impacts[0] == 0


def test_unstable_arc_is_invariant(chaos_bundle):
    bundle, smap, z, _ = chaos_bundle
    W_u = bundle.unstable
    inner = np.flatnonzero(W_u.generations < 2)[:: max(1, np.count_nonzero(W_u.generations < 2) // 15)]
    dist = [W_u.distance(smap.forward(W_u.points[i])) for i in inner]
    assert max(dist) < 1e-6


def test_homoclinic_orbit_returns_to_the_saddle(chaos_bundle):
    bundle, smap, z, _ = chaos_bundle
    hp = bundle.homoclinic
    assert hp.refined
    fwd = [hp.location]
    for _ in range(6):
        fwd.append(smap.forward(fwd[-1]))
    d = np.linalg.norm(np.array(fwd) - z, axis=1)
    assert d[-1] < 0.1 * d[1]
    db = [np.linalg.norm(hp.backward_orbit(smap, k) - z) for k in range(0, hp.unstable_steps + 1, 2)]
    assert np.all(np.diff(db[1:]) < 0)
    assert db[-1] < 1e-3


def test_all_length_three_words_are_distinct(chaos_bundle):
    bundle, smap, z, _ = chaos_bundle
    pts = {}
    for w in itertools.product((0, 1), repeat=3):
        orb = realize_itinerary(smap, bundle.boxes, w, periodic=True)
        assert orb.visits_ok
        pts[w] = orb.point
        assert unit_shift_holds(smap, bundle.boxes, orb)
    # rotations of one cycle are different points of the same orbit
    sep = min(np.linalg.norm(pts[a] - pts[b]) for a, b in itertools.combinations(pts, 2))
    assert sep > 1e-8


def test_realized_orbits_keep_clear_of_grazing(chaos_bundle):
    bundle, smap, z, _ = chaos_bundle
    for orb in bundle.orbits:
        assert unit_shift_holds(smap, bundle.boxes, orb)
        assert orbit_clearance(smap, orb.point, bundle.boxes.m * len(orb.symbols)) > 1e-6


def test_shifted_oscillator_boxes_fail(chaos_bundle):
    bundle, smap, z, _ = chaos_bundle
    assert not verify_covering(smap, bundle.boxes.shifted(1, 0.02), n_arcs=10).passed
