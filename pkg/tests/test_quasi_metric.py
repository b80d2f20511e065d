import numpy as np
import pytest
from numpy.testing import assert_allclose

from cflab import domain_geometry as dm
from cflab import measures_quadrature as mq
from cflab import quasi_metric as qm

DISK = dm.unit_ball(1)
BALL2 = dm.unit_ball(2)
ELL = dm.ellipsoid((1.0, 2.0))
PERT2 = dm.perturbed_ball(2, amplitude=0.15, frequency=3)


# ---------------------------------------------------------------------------
# distance pins

def test_circle_boundary_distance_is_root_chord():
    # on the unit circle |g(x, y)| = |1 - conj(x) y| = |x - y| exactly
    rng = np.random.default_rng(0)
    X = dm.random_boundary_points(DISK, 40, rng)
    Y = dm.random_boundary_points(DISK, 40, rng)
    D = qm.pairwise_dist(DISK, qm.BOUNDARY_TAG, X, Y)
    assert_allclose(D, np.sqrt(np.abs(X - Y.T)), rtol=1e-14)
    d = qm.dist(DISK, qm.BOUNDARY_TAG, X[0], Y[0])
    assert_allclose(d, abs(X[0, 0] - Y[0, 0]) ** 0.5, rtol=1e-14)


@pytest.mark.parametrize("dom", [ELL, PERT2], ids=lambda d: d.label())
def test_boundary_distance_symmetry_is_bitwise(dom):
    rng = np.random.default_rng(1)
    X = dm.random_boundary_points(dom, 60, rng)
    D = qm.pairwise_dist(dom, qm.BOUNDARY_TAG, X, X)
    assert_allclose(D, D.T, rtol=0, atol=0)
    assert_allclose(np.diagonal(D), 0.0, atol=0)


def test_boundary_carrier_is_checked():
    with pytest.raises(ValueError, match="carrier"):
        qm.dist(DISK, qm.BOUNDARY_TAG, [0.5 + 0j], [1.0 + 0j])


def test_unknown_tag_rejected():
    with pytest.raises(ValueError, match="tag"):
        qm.dist(DISK, "euclid", [1.0 + 0j], [1j])


def test_disk_interior_gauge_is_euclidean():
    # n=1 has no tangential complex directions, so the gauge collapses to
    # |P| / |d rho| = |x - y| on the shallow side and to the Euclidean
    # fallback on the deep side; both agree with plain distance.
    rng = np.random.default_rng(2)
    Z = (rng.uniform(0.05, 0.98, 50) *
         np.exp(2j * np.pi * rng.random(50)))[:, None]
    D = qm.pairwise_dist(DISK, qm.INTERIOR_TAG, Z, Z)
    assert_allclose(D, np.abs(Z - Z[:, 0][None, :]), rtol=1e-13, atol=1e-15)
    g = mq.build_boundary_grid(DISK, 256)
    assert_allclose(qm.dist_to_boundary(DISK, [0j], g), 1.0, rtol=1e-12)


def test_ball_interior_gauge_scalings():
    # one-sided gauge at x = (1-t, 0): tangential displacements enter
    # quadratically, rotations of x (the Reeb direction) linearly
    t = 0.05
    x = np.array([[1.0 - t, 0.0]], dtype=complex)
    for s in (0.01, 0.1, 0.3):
        y = x + np.array([[0.0, s]])
        m = qm._mcneal_oneside(BALL2, x, y)[0, 0]
        assert_allclose(m, s * s, rtol=1e-12)
    for th in (0.01, 0.1):
        y = np.exp(1j * th) * x
        m = qm._mcneal_oneside(BALL2, x, y)[0, 0]
        assert_allclose(m, abs(1 - np.exp(1j * th)) * (1.0 - t), rtol=1e-12)


def test_interior_gauge_symmetry_and_identity():
    rng = np.random.default_rng(3)
    W = dm.random_boundary_points(BALL2, 30, rng)
    Z = W * rng.uniform(0.55, 0.999, 30)[:, None]
    D = qm.pairwise_dist(BALL2, qm.INTERIOR_TAG, Z, Z)
    assert_allclose(D, D.T, rtol=0, atol=0)
    assert_allclose(np.diagonal(D), 0.0, atol=0)
    off = D[~np.eye(len(Z), dtype=bool)]
    assert off.min() > 0


def test_interior_gauge_deep_fallback_is_euclidean():
    x = np.array([[0.5, 0.0]], dtype=complex)      # -rho = 0.75 >= rho0
    rng = np.random.default_rng(4)
    Y = (rng.standard_normal((20, 4)) * 0.2).view(np.complex128) + x
    m = qm._mcneal_oneside(BALL2, x, Y)
    assert_allclose(m[0], np.sqrt((np.abs(Y - x) ** 2).sum(axis=1)),
                    rtol=1e-14)


# ---------------------------------------------------------------------------
# balls and volumes

def test_quasi_ball_volume_matches_arc_formula():
    # boundary ball on the circle is the arc of chord length delta^2;
    # its arclength is 4 asin(delta^2 / 2)
    g = mq.build_boundary_grid(DISK, 8192)
    c = g.nodes[17]
    for delta in (0.3, 0.6, 1.0):
        v = qm.ball_volume(g, qm.BOUNDARY_TAG, c, delta)
        assert_allclose(v, 4 * np.arcsin(delta ** 2 / 2), rtol=5e-3)


def test_quasi_ball_members_are_thresholded():
    g = mq.build_boundary_grid(BALL2, 12)
    c = g.nodes[100]
    idx = qm.quasi_ball(g, qm.BOUNDARY_TAG, c, 0.7)
    D = qm.pairwise_dist(g.domain, qm.BOUNDARY_TAG, c[None, :], g.nodes)[0]
    assert np.array_equal(idx, np.nonzero(D < 0.7)[0])
    assert_allclose(qm.ball_volume(g, qm.BOUNDARY_TAG, c, 0.7),
                    g.weights[idx].sum(), rtol=0)


def test_ball_volume_profile_matches_bruteforce_means():
    g = mq.build_boundary_grid(DISK, 512)
    rng = np.random.default_rng(5)
    C = dm.random_boundary_points(DISK, 5, rng)
    deltas = np.array([0.2, 0.5, 0.9, 1.3])
    _, mus = qm.ball_volume_profile(g, qm.BOUNDARY_TAG, deltas, centers=C)
    brute = np.array([[qm.ball_volume(g, qm.BOUNDARY_TAG, c, d) for d in deltas]
                      for c in C]).mean(axis=0)
    assert_allclose(mus, brute, rtol=1e-13)
    assert np.all(np.diff(mus) > 0)


def test_near_boundary_probes_are_shallow_interior_points():
    P = qm.near_boundary_probes(BALL2, 64, seed=6)
    r = dm.rho(BALL2, P)
    assert np.all(r < 0)
    assert np.all(-r < 0.02)
    assert_allclose(P, qm.near_boundary_probes(BALL2, 64, seed=6), rtol=0)


def test_volume_slope_raises_on_empty_balls():
    g = mq.build_boundary_grid(DISK, 128)
    C = dm.random_boundary_points(DISK, 10, np.random.default_rng(7))
    with pytest.raises(ValueError, match="empty"):
        qm.volume_slope(g, qm.BOUNDARY_TAG, 1e-9, 1e-8, centers=C)


# ---------------------------------------------------------------------------
# scaling exponents (n=1 at the production sizes; n=2 lives in acceptance)

def test_circle_boundary_volume_slope_is_2n():
    g = mq.build_boundary_grid(DISK, 32768)
    C = dm.random_boundary_points(DISK, 200, np.random.default_rng(0))
    s = qm.volume_slope(g, qm.BOUNDARY_TAG, 0.02, 0.2, centers=C)
    assert abs(s - 2.0) < 0.05


def test_disk_interior_volume_slope_is_n_plus_1():
    g = mq.build_interior_grid(DISK, 512, 24)
    C = qm.near_boundary_probes(DISK, 200, seed=0)
    s = qm.volume_slope(g, qm.INTERIOR_TAG, 0.02, 0.2, centers=C)
    assert abs(s - 2.0) < 0.15


# ---------------------------------------------------------------------------
# structure reports

def test_structure_constants_circle():
    g = mq.build_boundary_grid(DISK, 4096)
    rep = qm.structure_constants(g, qm.BOUNDARY_TAG, (0.15, 0.5),
                                 n_samples=2000, seed=0)
    # root-chord distance is an honest metric: A0 <= 1, attained ~1
    assert 0.8 < rep.A0 <= 1.0 + 1e-9
    # mu(B(delta)) ~ delta^2 so doubling sits near 4
    assert 3.0 < rep.doubling_C < 5.5
    assert abs(rep.volume_slope - 2.0) < 0.1
    assert qm.BOUNDARY_TAG in str(rep)


def test_structure_constants_sphere():
    g = mq.build_boundary_grid(BALL2, 64)
    rep = qm.structure_constants(g, qm.BOUNDARY_TAG, (0.25, 0.9),
                                 n_samples=2000, seed=0)
    assert 0.8 < rep.A0 <= 1.0 + 1e-9
    # mu(B(delta)) ~ delta^4 so doubling sits near 16
    assert 12.0 < rep.doubling_C < 22.0
    assert abs(rep.volume_slope - 4.0) < 0.2


def test_comparison_exponents_circle():
    g = mq.build_boundary_grid(DISK, 8192)
    ce = qm.comparison_exponents(g, n_pairs=4000, seed=0)
    # dist = |x - y|^(1/2) exactly, so both envelopes fit 1/2
    assert abs(ce["lower"] - 0.5) < 0.05
    assert abs(ce["upper"] - 0.5) < 0.05


def test_comparison_exponents_sphere():
    g = mq.build_boundary_grid(BALL2, 64)
    ce = qm.comparison_exponents(g, n_pairs=20000, seed=0)
    # pinched between the Euclidean scale and its square root
    assert 0.75 < ce["lower"] < 1.1
    assert 0.45 < ce["upper"] < 0.62


def test_metric_equivalence_ratio_circle_is_exact():
    g = mq.build_boundary_grid(DISK, 2048)
    lo, hi = qm.metric_equivalence_ratio(DISK, g, n_pairs=3000, seed=0)
    assert_allclose([lo, hi], [1.0, 1.0], rtol=1e-12)


def test_metric_equivalence_ratio_ball_is_two_sided():
    g = mq.build_boundary_grid(BALL2, 32)
    lo, hi = qm.metric_equivalence_ratio(BALL2, g, n_pairs=3000, seed=0)
    assert 0.9 < lo <= 1.05
    assert 2.0 < hi < 3.05
