from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zapp.constraints import (
    DEFAULT_MARGIN,
    PAD,
    ConstraintBatch,
    constraint_gradient,
    constraint_value,
    dynamic_constraint,
    static_constraint,
)
from zapp.oracles import (
    check_problem_gradients,
    fd_gradient,
    grid_overlap,
    random_pair,
    random_problem,
    random_zonotope,
)
from zapp.zonotope import Zonotope, are_disjoint

POINT = np.zeros((2, 0))


def test_point_to_point_along_axis():
    rec = dynamic_constraint(Zonotope([2.5, 0.0], POINT), Zonotope([0.0, 0.0], POINT))
    assert rec.value == pytest.approx(2.5, abs=1e-7)


def test_unit_box_agent_point_ego():
    rec = dynamic_constraint(Zonotope([3.0, 0.0], POINT), Zonotope([0.0, 0.0], np.eye(2)))
    assert rec.value == pytest.approx(2.0, abs=1e-7)
    assert rec.feasible
    assert rec.margin == DEFAULT_MARGIN


def test_wall_clearance():
    wall = Zonotope([0.0, 4.25], np.diag([30.0, 0.25]))
    ego = Zonotope([5.0, 3.0], 0.5 * np.eye(2))
    rec = static_constraint(ego, wall)
    # wall face at 4.0, ego top edge at 3.5
    assert rec.value == pytest.approx(0.5, abs=1e-7)
    assert rec.kind == "static"


def test_ego_inside_obstacle_is_negative():
    rec = static_constraint(Zonotope([0.2, 0.1], 0.3 * np.eye(2)), Zonotope([0.0, 0.0], np.eye(2)))
    assert rec.value < 0
    assert not rec.feasible


def test_far_obstacle_gradient_is_unit_normal_toward_ego():
    obstacle = Zonotope([0.0, 0.0], [[1.0, 0.3], [0.0, 0.8]])
    rec = static_constraint(Zonotope([40.0, 0.0], POINT), obstacle)
    rec = replace(rec, ego_center_jac=np.eye(2))
    g = constraint_gradient(rec)
    assert np.linalg.norm(g) == pytest.approx(1.0, abs=1e-12)
    assert g[0] > 0.9
    fd = fd_gradient(lambda z: constraint_value(rec, z), np.zeros(2))
    np.testing.assert_allclose(g, fd, atol=1e-6)


def test_static_gradient_is_active_row_times_ego_jacobian():
    rng = np.random.default_rng(0)
    obstacle = Zonotope([0.0, 0.0], rng.normal(size=(2, 3)))
    J = rng.normal(size=(2, 5))
    rec = replace(static_constraint(Zonotope([6.0, 1.0], POINT), obstacle), ego_center_jac=J)
    h = rec.hpoly
    row = np.argmax(h.A @ rec.ego_center - h.b)
    np.testing.assert_allclose(constraint_gradient(rec), h.A[row] @ J, atol=1e-12)


def test_zero_jacobians_give_zero_gradient():
    rec = dynamic_constraint(Zonotope([3.0, 0.0], np.eye(2)), Zonotope([0.0, 0.0], np.eye(2)))
    nz = 6
    rec = replace(rec, ego_center_jac=np.zeros((2, nz)), counter_center_jac=np.zeros((2, nz)),
                  generator_jac=np.zeros((2, rec.generators.shape[1], nz)))
    np.testing.assert_array_equal(constraint_gradient(rec), np.zeros(nz))


def with_random_jacobians(rec, rng, nz=6):
    nG = rec.generators.shape[1]
    gj = 0.1 * rng.normal(size=(2, nG, nz))
    gj[:, -2:] = 0.0  # pad columns stay fixed
    return replace(rec, ego_center_jac=rng.normal(size=(2, nz)),
                   counter_center_jac=rng.normal(size=(2, nz)), generator_jac=gj)


def test_full_chain_matches_finite_differences():
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 20:
        z1, z2 = random_zonotope(rng), random_zonotope(rng)
        rec = with_random_jacobians(dynamic_constraint(z1, z2), rng)
        z = 0.1 * rng.normal(size=6)
        batch = ConstraintBatch([rec], 6)
        if batch.tie_gaps(z)[0] < 1e-4:
            continue
        g = constraint_gradient(rec, z)
        fd = fd_gradient(lambda x: constraint_value(rec, x), z)
        assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-2)
        checked += 1


def test_problem_gradients_over_random_problems():
    rng = np.random.default_rng(2)
    for _ in range(5):
        problem, z = random_problem(rng)
        rep = check_problem_gradients(problem, z)
        assert rep.checked_records > 0
        assert rep.constraint_max_rel < 1e-4
        assert rep.cost_max_rel < 1e-6


def test_batch_matches_hrep_values():
    rng = np.random.default_rng(3)
    recs = [dynamic_constraint(random_zonotope(rng), random_zonotope(rng)) for _ in range(30)]
    vals = ConstraintBatch(recs, 0).values(np.zeros(0))
    np.testing.assert_allclose(vals, [r.value for r in recs], atol=1e-10)


def test_soundness_against_grid_oracle():
    rng = np.random.default_rng(4)
    feasible = 0
    for _ in range(100):
        z1, z2 = random_pair(rng)
        rec = dynamic_constraint(z1, z2, margin=0.0)
        if rec.value >= 1e-6:
            feasible += 1
            assert not grid_overlap(z1, z2)
    assert feasible > 10


def test_swapping_center_donor_keeps_verdict():
    rng = np.random.default_rng(5)
    for _ in range(50):
        z1, z2 = random_pair(rng)
        a = dynamic_constraint(z1, z2, margin=0.0).value > 0
        b = dynamic_constraint(z2, z1, margin=0.0).value > 0
        assert a == b == are_disjoint(z1, z2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-50, 50), st.floats(-50, 50))
def test_translation_equivariance(seed, tx, ty):
    rng = np.random.default_rng(seed)
    z1, z2 = random_zonotope(rng), random_zonotope(rng)
    t = np.array([tx, ty])
    g0 = dynamic_constraint(z1, z2).value
    g1 = dynamic_constraint(z1.translate(t), z2.translate(t)).value
    assert g1 == pytest.approx(g0, abs=1e-12 * max(1.0, abs(tx) + abs(ty)) * 10)


def test_pad_generators_appended():
    rec = dynamic_constraint(Zonotope([1.0, 0.0], np.eye(2)), Zonotope([0.0, 0.0], [[1.0], [1.0]]))
    assert rec.generators.shape == (2, 5)
    np.testing.assert_array_equal(rec.generators[:, -2:], PAD * np.eye(2))
    assert rec.n_ego_generators == 2


def test_log_sum_exp_smoothing_bounds_hard_max():
    rng = np.random.default_rng(6)
    recs = [dynamic_constraint(random_zonotope(rng), random_zonotope(rng)) for _ in range(10)]
    hard = ConstraintBatch(recs, 0).values(np.zeros(0))
    soft = ConstraintBatch(recs, 0, smoothing=50.0).values(np.zeros(0))
    rows = np.array([2 * r.generators.shape[1] for r in recs])
    assert np.all(soft >= hard - 1e-12)
    assert np.all(soft <= hard + np.log(rows) / 50.0 + 1e-12)


def test_smoothed_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    rec = with_random_jacobians(dynamic_constraint(random_zonotope(rng), random_zonotope(rng)), rng)
    z = 0.1 * rng.normal(size=6)
    g = constraint_gradient(rec, z, smoothing=50.0)
    fd = fd_gradient(lambda x: constraint_value(rec, x, smoothing=50.0), z)
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)


def test_tie_yields_one_of_the_tied_rows():
    # ego exactly on the diagonal of a square: rows 0 and 1 tie
    rec = static_constraint(Zonotope([3.0, 3.0], POINT), Zonotope([0.0, 0.0], np.eye(2)))
    rec = replace(rec, ego_center_jac=np.eye(2))
    h = rec.hpoly
    vals = h.A @ rec.ego_center - h.b
    top = np.flatnonzero(vals >= vals.max() - 1e-12)
    assert len(top) >= 2
    g = constraint_gradient(rec)
    assert min(np.linalg.norm(g - h.A[r]) for r in top) < 1e-12
