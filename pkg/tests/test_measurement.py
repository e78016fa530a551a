import numpy as np
import pytest

from se3vf.dynamics import TrueState
from se3vf.liegroup import Pose, exp_so3
from se3vf.measurement import (
    MeasurementFrame,
    MeasurementTable,
    NoiseSpec,
    NoiseStreams,
    ObservabilityError,
    Scene,
    assemble_directions,
    body_frame_beacons,
    direction_count,
    make_measurement_frame,
    make_measurement_stream,
    mean_vectors,
    observability_check,
    perturb_directions,
    perturb_vectors,
    perturb_velocity,
    reference_directions,
    stack_streams,
    uniform_weights,
    weights_for,
)

DIR_BOUND = np.deg2rad(2.4)


def _random_pose(rng):
    return Pose(exp_so3(rng.normal(size=3)), 5 * rng.normal(size=3))


@pytest.mark.parametrize(
    "beacons,inertial,expected",
    [(2, 0, False), (1, 2, True), (0, 3, False), (3, 0, True), (1, 1, False), (8, 2, True)],
)
def test_observability(beacons, inertial, expected):
    assert observability_check(beacons, inertial) is expected


def test_direction_count():
    assert direction_count(3, 2) == 5
    assert direction_count(8, 2) == 30


def test_body_frame_beacons(scene, rng):
    np.testing.assert_array_equal(body_frame_beacons(Pose.identity(), scene), scene.beacons)
    b = rng.normal(size=3)
    np.testing.assert_allclose(body_frame_beacons(Pose(np.eye(3), b), scene), scene.beacons - b)
    g = _random_pose(rng)
    a = body_frame_beacons(g, scene)
    np.testing.assert_allclose(a @ g.rot.T + g.trans, scene.beacons, atol=1e-13)


def test_direction_columns_are_pairs_then_inertial(scene):
    d = reference_directions(scene, [0, 2, 5])
    p = scene.beacons
    expected = np.column_stack([p[0] - p[2], p[0] - p[5], p[2] - p[5], *scene.inertial_dirs])
    np.testing.assert_array_equal(d, expected)


def test_assemble_directions(scene, rng):
    d, ell = assemble_directions(Pose.identity(), scene, [1, 3, 4])
    assert d.shape == (3, 5)
    np.testing.assert_allclose(d, ell, atol=1e-15)
    g = _random_pose(rng)
    d, ell = assemble_directions(g, scene)
    assert d.shape == (3, 30)
    assert np.linalg.norm(d - g.rot @ ell) < 1e-13


def test_assemble_directions_unobservable_names_counts():
    scene = Scene(np.array([[0.0, 0, 0], [1, 0, 0]]), np.zeros((0, 3)))
    with pytest.raises(ObservabilityError, match="2 visible beacon"):
        assemble_directions(Pose.identity(), scene)


def test_mean_vectors(scene, rng):
    p_bar, a_bar = mean_vectors(scene, [4], scene.beacons[[4]])
    np.testing.assert_array_equal(p_bar, scene.beacons[4])
    np.testing.assert_array_equal(a_bar, scene.beacons[4])
    pair = Scene(np.array([[1.0, 2, 3], [-1.0, -2, -3]]), scene.inertial_dirs)
    p_bar, _ = mean_vectors(pair, None, pair.beacons)
    np.testing.assert_array_equal(p_bar, 0)
    g = _random_pose(rng)
    vis = [0, 3, 5, 6]
    p_bar, a_bar = mean_vectors(scene, vis, body_frame_beacons(g, scene, vis))
    assert np.linalg.norm(a_bar - g.rot.T @ (p_bar - g.trans)) < 1e-13
    with pytest.raises(ObservabilityError):
        mean_vectors(scene, [], np.zeros((0, 3)))


def test_scene_validation():
    with pytest.raises(ValueError):
        Scene(np.zeros((0, 3)), np.array([[0, 0, 1.0]]))
    with pytest.raises(ValueError, match="unit"):
        Scene(np.ones((2, 3)), np.array([[0, 0, 2.0]]))


def test_reference_scene(scene):
    assert scene.n_beacons == 8
    assert set(np.abs(scene.beacons).ravel()) == {10.0}
    np.testing.assert_allclose(np.linalg.norm(scene.inertial_dirs, axis=1), 1, atol=1e-12)
    np.testing.assert_array_equal(scene.inertial_dirs[0], [0, 0, -1])
    d2 = np.array([0.1, 0.975, -0.2])
    np.testing.assert_allclose(scene.inertial_dirs[1], d2 / np.linalg.norm(d2), atol=1e-15)


def test_perturb_directions_bounded_and_norm_preserving(rng):
    ell = rng.normal(size=(200, 3, 30))
    out = perturb_directions(ell, DIR_BOUND, rng)
    norms, norms_m = np.linalg.norm(ell, axis=-2), np.linalg.norm(out, axis=-2)
    np.testing.assert_allclose(norms_m, norms, rtol=1e-13)
    cos = np.sum(ell * out, axis=-2) / (norms * norms_m)
    assert np.all(np.arccos(np.clip(cos, -1, 1)) <= DIR_BOUND + 1e-12)
    np.testing.assert_array_equal(perturb_directions(ell, 0.0, rng), ell)


def test_direction_noise_is_unbiased_across_the_column(rng):
    """Tangential mean is zero; along the column there is the second-order
    shrink ``-(2/3)(1 - sin(b)/b)`` that any norm-preserving rotation has."""
    n = 100_000
    ell = np.array([0.0, 0.6, 0.8])
    out = perturb_directions(np.broadcast_to(ell[:, None], (n, 3, 1)), DIR_BOUND, rng)[..., 0]
    delta = out - ell
    radial = delta @ ell
    tangential = delta - radial[:, None] * ell
    sigma = tangential.std(axis=0)
    assert np.all(np.abs(tangential.mean(axis=0)) <= 3 * sigma / np.sqrt(n) + 1e-15)
    b = DIR_BOUND
    expected = -(2.0 / 3.0) * (1 - np.sin(b) / b)
    assert abs(radial.mean() - expected) <= 3 * radial.std() / np.sqrt(n)


def test_perturb_vectors_bounded(rng):
    a = rng.normal(size=(100, 8, 3)) * 10
    out = perturb_vectors(a, DIR_BOUND, rng)
    np.testing.assert_allclose(np.linalg.norm(out, axis=-1), np.linalg.norm(a, axis=-1), rtol=1e-13)
    cos = np.sum(a * out, -1) / np.linalg.norm(a, axis=-1) ** 2
    assert np.all(np.arccos(np.clip(cos, -1, 1)) <= DIR_BOUND + 1e-12)


def test_perturb_velocity(rng):
    noise_spec = NoiseSpec.reference()
    xi = rng.normal(size=(100_000, 6))
    streams = NoiseStreams(3)
    out = perturb_velocity(xi, noise_spec, streams["gyro"], streams["vel"])
    dw, dv = out[:, :3] - xi[:, :3], out[:, 3:] - xi[:, 3:]
    assert np.all(np.linalg.norm(dw, axis=-1) <= 0.97 * np.pi / 180 + 1e-15)
    assert np.all(np.linalg.norm(dv, axis=-1) <= 0.025 + 1e-15)
    n = len(xi)
    for d in (dw, dv):
        assert np.all(np.abs(d.mean(axis=0)) <= 3 * d.std(axis=0) / np.sqrt(n))
    silent = NoiseSpec()
    assert silent.silent
    np.testing.assert_array_equal(perturb_velocity(xi[:5], silent, streams["gyro"], streams["vel"]),
                                  xi[:5])


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(dir_bound=-1.0)
    p = NoiseSpec.reference(4)
    assert p.seed == 4 and p.vel_bound == 0.025
    assert p.gyro_bound == pytest.approx(0.97 * np.pi / 180)


def test_noise_free_frame_identities(scene, rng):
    g = _random_pose(rng)
    xi = rng.normal(size=6)
    f = make_measurement_frame(TrueState(g, xi, 1.5), scene, None, NoiseSpec(), None, NoiseStreams(0))
    assert f.n == 30 and f.t == 1.5
    assert np.linalg.norm(f.L_m - g.rot.T @ f.D) < 1e-13
    assert np.linalg.norm(f.a_bar_m - g.rot.T @ (f.p_bar - g.trans)) < 1e-13
    np.testing.assert_array_equal(f.xi_m, xi)
    np.testing.assert_allclose(f.W, 1 / 30)


def test_frame_is_deterministic_per_seed(scene, rng):
    state = TrueState(_random_pose(rng), rng.normal(size=6))
    noise_spec = NoiseSpec.reference(11)
    f1 = make_measurement_frame(state, scene, None, noise_spec, None, NoiseStreams(11))
    f2 = make_measurement_frame(state, scene, None, noise_spec, None, NoiseStreams(11))
    f3 = make_measurement_frame(state, scene, None, noise_spec, None, NoiseStreams(12))
    assert np.array_equal(f1.L_m, f2.L_m) and np.array_equal(f1.xi_m, f2.xi_m)
    assert not np.array_equal(f1.L_m, f3.L_m)


def test_channels_are_independent(scene, rng):
    """Turning velocity noise off leaves the direction draws untouched."""
    state = TrueState(_random_pose(rng), rng.normal(size=6))
    full = make_measurement_frame(state, scene, None, NoiseSpec.reference(5), None, NoiseStreams(5))
    dirs_only = NoiseSpec(DIR_BOUND, 0.0, 0.0, 5)
    part = make_measurement_frame(state, scene, None, dirs_only, None, NoiseStreams(5))
    assert np.array_equal(full.L_m, part.L_m) and np.array_equal(full.a_bar_m, part.a_bar_m)


def test_stream_equals_frame_by_frame(truth_short, scene):
    noise_spec = NoiseSpec.reference(9)
    stream = make_measurement_stream(truth_short, scene, noise_spec)
    streams = NoiseStreams(9)
    for i in range(20):
        f = make_measurement_frame(truth_short.state(i), scene, None, noise_spec, None, streams)
        assert np.array_equal(stream.frame(i).L_m, f.L_m)
        assert np.array_equal(stream.frame(i).xi_m, f.xi_m)
        assert np.array_equal(stream.frame(i).a_bar_m, f.a_bar_m)


def test_stack_streams(truth_short, scene):
    a = make_measurement_stream(truth_short, scene, NoiseSpec.reference(1))
    b = make_measurement_stream(truth_short, scene, NoiseSpec.reference(2))
    s = stack_streams([a, b])
    assert s.L_m.shape == (len(truth_short), 2, 3, 30)
    assert np.array_equal(s.frame(7).xi_m[1], b.frame(7).xi_m)


def test_frame_validation():
    d = np.eye(3)
    with pytest.raises(ValueError):
        MeasurementFrame(d, d[:, :2], np.zeros(3), np.zeros(3), np.zeros(6), np.ones(3))
    with pytest.raises(ObservabilityError):
        MeasurementFrame(d[:, :1], d[:, :1], np.zeros(3), np.zeros(3), np.zeros(6), np.ones(1))
    with pytest.raises(ValueError, match="positive"):
        MeasurementFrame(d, d, np.zeros(3), np.zeros(3), np.zeros(6), np.array([1.0, 0.0, 1.0]))


def test_weights(ref_dirs):
    d, w = ref_dirs
    np.testing.assert_allclose(w * np.sum(d**2, axis=0) * d.shape[1], 1.0)
    np.testing.assert_allclose(uniform_weights(4), 0.25)
    np.testing.assert_array_equal(weights_for("normalized", d), w)
    np.testing.assert_array_equal(weights_for([1.0, 2.0], d[:, :2]), [1.0, 2.0])
    with pytest.raises(ValueError):
        weights_for([1.0], d)
    with pytest.raises(ValueError):
        weights_for("bogus", d)


def test_measurement_table_csv_round_trip(tmp_path, truth_short, scene):
    stream = make_measurement_stream(truth_short, scene, NoiseSpec.reference(2))
    table = MeasurementTable.from_stream(stream)
    path = tmp_path / "m.csv"
    table.to_csv(path)
    header = path.read_text().split("\n", 1)[0].split(",")
    assert header[:4] == ["t", "n", "D1_1", "D1_2"]
    assert header[-6:] == ["Omegam1", "Omegam2", "Omegam3", "vm1", "vm2", "vm3"]
    back = MeasurementTable.from_csv(path)
    for name in ("t", "n", "D", "L_m", "p_bar", "a_bar_m", "xi_m"):
        assert np.array_equal(getattr(back, name), getattr(table, name))
    f0, f1 = table.frame(10), back.frame(10)
    assert np.array_equal(f0.W, f1.W) and np.array_equal(f0.L_m, f1.L_m)


def test_measurement_table_variable_visibility(tmp_path, truth_short, scene):
    streams = NoiseStreams(0)
    frames = [
        make_measurement_frame(truth_short.state(i), scene, vis, NoiseSpec.reference(), None, streams)
        for i, vis in enumerate([None, [0, 1, 2], [4, 7]])
    ]
    table = MeasurementTable.from_frames(frames)
    assert list(table.n) == [30, 5, 3] and table.n_max == 30
    assert np.isnan(table.D[1, :, 5:]).all()
    table.to_csv(tmp_path / "m.csv")
    back = MeasurementTable.from_csv(tmp_path / "m.csv")
    assert np.array_equal(back.frame(2).D, frames[2].D)
    assert back.frame(1).n == 5


def test_measurement_table_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="contract"):
        MeasurementTable.from_csv(p)
