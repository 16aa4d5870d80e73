import numpy as np
import pytest

from hetflow.errors import EmptyDataset, MalformedRow, NonMonotoneTime, TooShort
from hetflow.trajectories import (
    Dataset,
    SmoothingConfig,
    VehicleTrajectory,
    default_schema,
    derive_kinematics,
    ingest_trajectories,
    segment_trajectory,
    unwrap_positions,
    write_trajectories,
)


def make_traj(times, positions, **kw):
    return VehicleTrajectory(vehicle_id="v1", times=np.asarray(times),
                             positions=np.asarray(positions), **kw)


# ---------------------------------------------------------------------------
# ingestion

def test_ingest_three_rows(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("vehicle_id,t,x\na,0.0,0.0\na,0.1,1.5\na,0.2,3.0\n")
    ds = ingest_trajectories(path, {"vehicle_id": "vehicle_id", "time": "t", "position": "x"})
    assert len(ds) == 1
    assert len(ds.trajectories[0]) == 3
    assert ds.trajectories[0].length == 5.0  # default length


def test_ingest_non_monotone_time_raises(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("vehicle_id,t,x\na,0.2,0.0\na,0.1,1.0\n")
    with pytest.raises(NonMonotoneTime):
        ingest_trajectories(path, {"vehicle_id": "vehicle_id", "time": "t", "position": "x"})


def test_ingest_duplicate_time_raises(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("vehicle_id,t,x\na,0.1,0.0\na,0.1,1.0\n")
    with pytest.raises(NonMonotoneTime):
        ingest_trajectories(path, {"vehicle_id": "vehicle_id", "time": "t", "position": "x"})


def test_ingest_malformed_row(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("vehicle_id,t,x\na,0.0,zero\na,0.1,1.0\n")
    with pytest.raises(MalformedRow):
        ingest_trajectories(path, {"vehicle_id": "vehicle_id", "time": "t", "position": "x"})


def test_ingest_empty_raises(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("vehicle_id,t,x\n")
    with pytest.raises(EmptyDataset):
        ingest_trajectories(path, {"vehicle_id": "vehicle_id", "time": "t", "position": "x"})


def test_roundtrip_write_ingest(tmp_path):
    rng = np.random.default_rng(3)
    trajs = []
    for k in range(3):
        t = 0.1 * np.arange(50)
        x = np.cumsum(rng.uniform(0.5, 2.0, size=50))
        trajs.append(VehicleTrajectory(vehicle_id=f"veh{k}", times=t, positions=x,
                                       speeds=rng.uniform(0, 30, size=50),
                                       class_label="AV" if k == 0 else "HV",
                                       length=4.5 + k))
    ds = Dataset("orig", trajs, road_length=600.0, topology="RING")
    path = tmp_path / "out.csv"
    write_trajectories(ds, path)
    back = ingest_trajectories(path, default_schema(), dataset_id="orig",
                               topology="RING", road_length=600.0)
    assert len(back) == len(ds)
    for a, b in zip(ds, back):
        assert a.vehicle_id == b.vehicle_id
        assert a.class_label == b.class_label
        assert a.length == b.length
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.speeds, b.speeds)


# ---------------------------------------------------------------------------
# kinematics

def test_linear_motion_exact():
    t = 0.1 * np.arange(100)
    traj = make_traj(t, 10.0 * t)
    out = derive_kinematics(traj, SmoothingConfig(window=0.0, resample_dt=0.1))
    np.testing.assert_allclose(out.speeds, 10.0, atol=1e-9)
    np.testing.assert_allclose(out.accelerations, 0.0, atol=1e-9)
    np.testing.assert_allclose(out.jerks, 0.0, atol=1e-9)


def test_quadratic_acceleration_exact_interior():
    t = 0.1 * np.arange(100)
    traj = make_traj(t, t ** 2)
    out = derive_kinematics(traj, SmoothingConfig(window=0.0, resample_dt=0.1))
    np.testing.assert_allclose(out.accelerations[1:-1], 2.0, atol=1e-9)
    # second-order one-sided stencils are exact on quadratics too
    np.testing.assert_allclose(out.speeds, 2.0 * t, atol=1e-9)


def test_sine_jerk_against_analytic():
    t = 0.01 * np.arange(1001)  # 100 Hz, 10 s
    traj = make_traj(t, np.sin(t))
    out = derive_kinematics(traj, SmoothingConfig(window=0.0, resample_dt=0.01))
    interior = slice(3, -3)
    err = np.abs(out.jerks[interior] - (-np.cos(t[interior])))
    assert err.max() <= 1e-3


def test_derive_too_short():
    traj = make_traj([0.0, 1.0], [0.0, 1.0])
    with pytest.raises(TooShort):
        derive_kinematics(traj, SmoothingConfig(window=0.0, resample_dt=1.0))


def test_kinematics_idempotent_on_uniform_data():
    t = 0.1 * np.arange(200)
    x = 3.0 * t + 0.5 * np.sin(0.3 * t)
    cfg = SmoothingConfig(window=0.5, resample_dt=0.1)
    once = derive_kinematics(make_traj(t, x), cfg)
    twice = derive_kinematics(once, cfg)
    np.testing.assert_allclose(twice.times, once.times, rtol=1e-9)
    np.testing.assert_allclose(twice.positions, once.positions, rtol=1e-9)
    np.testing.assert_allclose(twice.speeds, once.speeds, rtol=1e-9)
    np.testing.assert_allclose(twice.jerks, once.jerks, rtol=1e-9, atol=1e-12)


def test_kinematics_time_translation_invariant():
    t = 0.1 * np.arange(150)
    x = 2.0 * t + np.cos(0.2 * t)
    cfg = SmoothingConfig(window=0.3, resample_dt=0.1)
    base = derive_kinematics(make_traj(t, x), cfg)
    shifted = derive_kinematics(make_traj(t + 1234.5, x), cfg)
    np.testing.assert_allclose(shifted.speeds, base.speeds, rtol=0, atol=1e-9)
    np.testing.assert_allclose(shifted.accelerations, base.accelerations, rtol=0, atol=1e-9)
    np.testing.assert_allclose(shifted.jerks, base.jerks, rtol=0, atol=1e-9)


def test_resampling_interpolates_linearly():
    t = np.array([0.0, 0.3, 0.45, 1.0, 1.7, 2.0])
    x = 4.0 * t  # linear, so any interpolation grid reproduces 4t
    out = derive_kinematics(make_traj(t, x), SmoothingConfig(window=0.0, resample_dt=0.25))
    np.testing.assert_allclose(out.positions, 4.0 * out.times, atol=1e-12)
    assert out.times[0] == 0.0
    np.testing.assert_allclose(np.diff(out.times), 0.25)


# ---------------------------------------------------------------------------
# segmentation

def seg_traj(duration, rate=10.0):
    n = int(duration * rate)
    t = np.arange(n) / rate
    tr = make_traj(t, t)
    tr.sample_rate = rate
    return tr


def test_segments_100s_into_30s():
    ranges = segment_trajectory(seg_traj(100.0), 30.0)
    assert ranges == [(0, 300), (300, 600), (600, 900)]


def test_segments_60s_two_full():
    assert segment_trajectory(seg_traj(60.0), 30.0) == [(0, 300), (300, 600)]


def test_segments_44s_drops_short_tail():
    ranges = segment_trajectory(seg_traj(44.0), 30.0)
    assert ranges == [(0, 300)]


def test_segments_partition_contiguously():
    tr = seg_traj(97.3)
    ranges = segment_trajectory(tr, 20.0)
    for (a0, a1), (b0, b1) in zip(ranges[:-1], ranges[1:]):
        assert a1 == b0
    assert ranges[0][0] == 0


def test_segments_empty_when_too_short():
    assert segment_trajectory(seg_traj(10.0), 30.0) == []


def test_unwrap_positions():
    wrapped = np.array([580.0, 595.0, 5.0, 20.0, 590.0, 3.0])
    unwrapped = unwrap_positions(wrapped, 600.0)
    assert np.all(np.diff(unwrapped) > 0)
    np.testing.assert_allclose(unwrapped % 600.0, wrapped)
