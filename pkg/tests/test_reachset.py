import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zapp.oracles import coverage_instance, coverage_rate, sample_zonotope
from zapp.predictor import ModePrediction, process_noise_covariances
from zapp.reachset import (
    ReachSetError,
    continuous_reach,
    discrete_reach,
    interval_pieces,
    joint_continuous,
    joint_reach,
    line_segment_zonotope,
    position_set,
)
from zapp.zonotope import EPS_GEN, Zonotope, confidence_scale, project, to_hrep

EPS4 = confidence_scale(1.0, 4)


def inside(z, x, tol=1e-9):
    h = to_hrep(position_set(z) if z.dim > 2 else z)
    return np.max(h.A @ np.asarray(x)[:2] - h.b) <= tol


def prediction(means, covs=None):
    means = np.asarray(means, float)
    K, n = means.shape[:2]
    if covs is None:
        covs = np.zeros((K, n, 4, 4))
    return ModePrediction(0, 1.0, means, covs, np.zeros((K, n, 4, 2 * (K - 1))))


def test_zero_covariance_gives_point_sets():
    mu = np.array([[[1.0, 2.0, 0.5, 0.0]], [[1.05, 2.0, 0.5, 0.0]]])
    dr = discrete_reach(prediction(mu))
    z = dr.sets[0][0]
    np.testing.assert_array_equal(z.center, mu[0, 0])
    assert np.all(z.generators == 0.0)
    # degenerate columns collapse to the single tiny fallback generator
    assert np.linalg.norm(position_set(z).generators) == pytest.approx(EPS_GEN)


def test_isotropic_covariance_square_half_width():
    sigma = 0.3
    covs = np.broadcast_to(sigma**2 * np.eye(4), (2, 1, 4, 4)).copy()
    dr = discrete_reach(prediction(np.zeros((2, 1, 4)), covs))
    lo, hi = position_set(dr.sets[1][0]).interval_hull()
    np.testing.assert_allclose(hi, EPS4 * sigma, rtol=1e-12)
    np.testing.assert_allclose(lo, -EPS4 * sigma, rtol=1e-12)


def test_generator_count_equals_state_dimension():
    covs = process_noise_covariances(4, 0.1, 5, 0.02)
    covs = np.repeat(covs[:, None], 3, axis=1)
    dr = discrete_reach(prediction(np.zeros((5, 3, 4)), covs))
    assert dr.n_steps == 5 and dr.n_agents == 3
    assert all(z.n_generators == 4 for step in dr.sets for z in step)


def test_gaussian_containment_rate():
    rng = np.random.default_rng(0)
    cov = process_noise_covariances(16, 0.1, 5, 0.02)[16]
    dr = discrete_reach(prediction(np.zeros((1, 1, 4)), cov[None, None]))
    h = to_hrep_full(dr.sets[0][0])
    x = rng.multivariate_normal(np.zeros(4), cov, 10_000)
    rate = np.mean(np.max(x @ h[0].T - h[1], axis=1) <= 1e-12)
    assert rate >= 0.6827


def to_hrep_full(z):
    # box in the eigenbasis: |V^T (x - c)| <= half widths
    G = z.generators
    ell = np.linalg.norm(G, axis=0)
    U = G / ell
    return np.vstack([U.T, -U.T]), np.concatenate([ell + U.T @ z.center, ell - U.T @ z.center])


def test_means_override_keeps_covariance():
    covs = np.broadcast_to(0.01 * np.eye(4), (3, 1, 4, 4)).copy()
    pred = prediction(np.zeros((3, 1, 4)), covs)
    shifted = np.ones((3, 1, 4))
    dr = discrete_reach(pred, means=shifted)
    np.testing.assert_array_equal(dr.sets[2][0].center, np.ones(4))
    np.testing.assert_allclose(dr.sets[2][0].generators, discrete_reach(pred).sets[2][0].generators)


def test_line_segment_examples():
    z = line_segment_zonotope([0.0, 0.0], [2.0, 0.0])
    np.testing.assert_array_equal(z.center, [1.0, 0.0])
    np.testing.assert_array_equal(z.generators, [[1.0], [0.0]])
    assert inside(Zonotope(z.center, np.hstack([z.generators, 1e-6 * np.eye(2)])), [0.0, 0.0])
    p = line_segment_zonotope([1.0, 1.0], [1.0, 1.0])
    assert np.all(p.generators == 0.0)


def test_stationary_agent_pieces_equal_discrete_sets():
    z0 = Zonotope([1.0, 2.0], [[0.3, 0.1], [0.0, 0.2]])
    z1 = Zonotope([1.0, 2.0], [[0.4, 0.1], [0.0, 0.2]])
    a, b = interval_pieces(z0, z1)
    np.testing.assert_array_equal(a.center, z0.center)
    np.testing.assert_array_equal(b.center, z1.center)
    np.testing.assert_array_equal(position_set(a).generators, z0.generators)
    np.testing.assert_array_equal(position_set(b).generators, z1.generators)


def test_point_motion_pieces_are_half_segments():
    a, b = interval_pieces(Zonotope([0.0, 0.0], np.zeros((2, 0))), Zonotope([4.0, 0.0], np.zeros((2, 0))))
    np.testing.assert_allclose(a.center, [1.0, 0.0])
    np.testing.assert_allclose(a.generators, [[1.0], [0.0]])
    np.testing.assert_allclose(b.center, [3.0, 0.0])
    np.testing.assert_allclose(b.generators, [[1.0], [0.0]])


def random_interval(rng):
    g0 = rng.normal(0, 0.3, (2, 3))
    z0 = Zonotope(rng.uniform(-3, 3, 2), g0)
    z1 = Zonotope(z0.center + rng.normal(0, 0.5, 2), g0 * rng.uniform(1.0, 1.3))
    return z0, z1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_interval_piece_invariants(seed):
    rng = np.random.default_rng(seed)
    z0, z1 = random_interval(rng)
    a, b = interval_pieces(z0, z1)
    mid = 0.5 * (z0.center + z1.center)
    assert inside(a, mid) and inside(b, mid)
    assert inside(a, z0.center) and inside(b, z1.center)
    # a contains Z(k) shifted by a quarter of the mean displacement
    shift = 0.25 * (z1.center - z0.center)
    pts = sample_zonotope(z0, 200, rng, boundary=True) + shift
    ha = to_hrep(a)
    assert np.max(pts @ ha.A.T - ha.b) <= 1e-9


def test_continuous_reach_structure_and_errors():
    covs = np.repeat(process_noise_covariances(3, 0.1, 5, 0.02)[:, None], 2, axis=1)
    mu = np.zeros((4, 2, 4))
    mu[:, 1, 0] = np.arange(4) * 0.2
    cr = continuous_reach(discrete_reach(prediction(mu, covs)))
    assert cr.n_intervals == 3
    assert len(cr.pieces[0]) == 2
    J = joint_continuous(cr, 1, 0)
    assert J.dim == 8
    with pytest.raises(ReachSetError):
        joint_continuous(cr, 3, 0)
    with pytest.raises(ReachSetError):
        continuous_reach(discrete_reach(prediction(mu[:1], covs[:1])))


def test_continuous_degenerates_when_nothing_moves():
    covs = np.repeat(process_noise_covariances(2, 0.1, 5, 0.02)[:, None], 1, axis=1)
    dr = discrete_reach(prediction(np.zeros((3, 1, 4)), covs))
    cr = continuous_reach(dr)
    for k in range(2):
        a, b = cr.pieces[k][0]
        np.testing.assert_array_equal(position_set(a).generators, position_set(dr.sets[k][0]).generators)
        np.testing.assert_array_equal(position_set(b).generators, position_set(dr.sets[k + 1][0]).generators)


def test_joint_reach_block_diagonal_and_projection():
    z1 = Zonotope([1.0, 2.0], [[1.0, 0.5], [0.0, 1.0]])
    z2 = Zonotope([3.0, 4.0], [[0.2], [0.1]])
    J = joint_reach([z1, z2])
    assert J.dim == 4 and J.n_generators == 3
    np.testing.assert_array_equal(J.generators[:2, 2], 0.0)
    np.testing.assert_array_equal(J.generators[2:, :2], 0.0)
    back = project(J, [0, 1])
    np.testing.assert_array_equal(back.center, z1.center)
    np.testing.assert_array_equal(back.generators[:, :2], z1.generators)
    with pytest.raises(ReachSetError):
        joint_reach([])


def test_joint_membership_factorizes():
    rng = np.random.default_rng(3)
    z1 = Zonotope([0.0, 0.0], rng.normal(size=(2, 3)))
    z2 = Zonotope([5.0, 1.0], rng.normal(size=(2, 2)))
    J = joint_reach([z1, z2])
    x = sample_zonotope(J, 500, rng)
    h1, h2 = to_hrep(z1), to_hrep(z2)
    assert np.max(x[:, :2] @ h1.A.T - h1.b) <= 1e-9
    assert np.max(x[:, 2:] @ h2.A.T - h2.b) <= 1e-9


def test_coverage_rate_on_noisy_double_integrator():
    rng = np.random.default_rng(11)
    rates = [coverage_rate(*coverage_instance(rng), rng, 2000) for _ in range(5)]
    assert min(rates) >= 0.99
