import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from se3vf.liegroup import (
    Pose,
    exp_so3,
    hat,
    is_rotation,
    orthogonality_error,
    principal_angle,
    project_so3,
    vex,
)

vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10, allow_nan=False))


@given(vec3)
def test_hat_vex_round_trip_is_exact(v):
    assert np.array_equal(vex(hat(v)), v)


@given(vec3, vec3)
def test_hat_is_cross_product(a, b):
    np.testing.assert_allclose(hat(a) @ b, np.cross(a, b), atol=1e-12)


def test_vex_discards_symmetric_part(rng):
    s = rng.normal(size=(3, 3))
    w = rng.normal(size=3)
    np.testing.assert_allclose(vex(hat(w) + s + s.T), w, atol=1e-14)


@given(arrays(np.float64, 3, elements=st.floats(-20, 20, allow_nan=False)))
@settings(max_examples=300)
def test_exp_matches_reference_rotation(v):
    r = exp_so3(v)
    np.testing.assert_allclose(r, Rotation.from_rotvec(v).as_matrix(), atol=1e-12)
    assert orthogonality_error(r) <= 1e-12
    assert abs(np.linalg.det(r) - 1) <= 1e-12


@pytest.mark.parametrize("theta", [0.0, 1e-9, 1e-6, 9.99e-5, 1e-4, 1.01e-4, 1e-3])
def test_exp_small_angle_branch_is_continuous(theta):
    v = theta * np.array([0.6, -0.8, 0.0])
    np.testing.assert_allclose(exp_so3(v), Rotation.from_rotvec(v).as_matrix(), atol=1e-15)


def test_exp_batches(rng):
    v = rng.normal(size=(4, 5, 3))
    r = exp_so3(v)
    assert r.shape == (4, 5, 3, 3)
    np.testing.assert_allclose(r[2, 3], exp_so3(v[2, 3]), atol=0)


def test_exp_of_antipodal_rotation_vectors_agree():
    axis = np.array([1.0, 2.0, -2.0]) / 3
    np.testing.assert_allclose(exp_so3(np.pi * axis), exp_so3(-np.pi * axis), atol=1e-15)


@pytest.mark.parametrize("angle", [0.0, 0.3, 1.5, np.pi - 1e-3, np.pi])
def test_principal_angle(angle):
    r = exp_so3(angle * np.array([0.0, 0.6, 0.8]))
    assert principal_angle(r) == pytest.approx(angle, abs=1e-7)


def test_principal_angle_clamps_roundoff():
    assert principal_angle(np.eye(3) * (1 + 1e-15)) == 0.0


def test_is_rotation_rejects_reflections_and_nan():
    assert is_rotation(np.eye(3))
    assert not is_rotation(np.diag([1.0, 1.0, -1.0]))
    assert not is_rotation(np.full((3, 3), np.nan))


def test_project_so3_recovers_rotation(rng):
    r = exp_so3(rng.normal(size=3))
    noisy = r + 1e-6 * rng.normal(size=(3, 3))
    p = project_so3(noisy)
    assert is_rotation(p, 1e-12)
    np.testing.assert_allclose(p, r, atol=1e-5)


def test_project_so3_rejects_bad_input():
    with pytest.raises(ValueError, match="det"):
        project_so3(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        project_so3(np.zeros((3, 3)))


def test_pose_group_laws(rng):
    a = Pose(exp_so3(rng.normal(size=3)), rng.normal(size=3))
    b = Pose(exp_so3(rng.normal(size=3)), rng.normal(size=3))
    c = Pose(exp_so3(rng.normal(size=3)), rng.normal(size=3))
    ab_c = a.compose(b).compose(c)
    a_bc = a.compose(b.compose(c))
    np.testing.assert_allclose(ab_c.as_matrix(), a_bc.as_matrix(), atol=1e-12)
    np.testing.assert_allclose(a.compose(a.inverse()).as_matrix(), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(a.compose(b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)


def test_pose_act_and_matrix_round_trip(rng):
    g = Pose(exp_so3(rng.normal(size=3)), rng.normal(size=3))
    p = rng.normal(size=3)
    np.testing.assert_allclose(g.act(p), (g.as_matrix() @ np.append(p, 1.0))[:3], atol=1e-12)
    g2 = Pose.from_matrix(g.as_matrix())
    assert np.array_equal(g2.rot, g.rot) and np.array_equal(g2.trans, g.trans)


def test_pose_identity_batch():
    g = Pose.identity((2, 3))
    assert g.rot.shape == (2, 3, 3, 3) and g.trans.shape == (2, 3, 3)
    assert np.array_equal(g.as_matrix()[1, 2], np.eye(4))
