"""Trajectory ingestion, smoothed kinematics, and segment bookkeeping.

Trajectories are stored column-wise (numpy arrays per field) for speed;
`TrajectorySample` offers a per-row view where that reads better.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd

from .errors import EmptyDataset, MalformedRow, NonMonotoneTime, TooShort

log = logging.getLogger(__name__)

RING = "RING"
OPEN = "OPEN"

DEFAULT_VEHICLE_LENGTH = 5.0   # m, used when the source has no length column
REVERSE_SPEED_TOL = 0.5        # m/s, derived speeds below -tol get flagged

#: logical column names understood by the ingest schema
REQUIRED_COLUMNS = ("vehicle_id", "time", "position")
OPTIONAL_COLUMNS = ("speed", "acceleration", "lane", "class", "length")


@dataclass(frozen=True)
class TrajectorySample:
    """One time-stamped Lagrangian sample."""

    time: float
    position: float
    speed: Optional[float] = None
    acceleration: Optional[float] = None
    jerk: Optional[float] = None
    lane: Optional[int] = None


@dataclass
class VehicleTrajectory:
    """Ordered samples of one vehicle, column-wise.

    ``speeds``/``accelerations``/``jerks`` are None until either ingested
    or produced by :func:`derive_kinematics`.
    """

    vehicle_id: str
    times: np.ndarray
    positions: np.ndarray
    class_label: str = "UNKNOWN"
    length: float = DEFAULT_VEHICLE_LENGTH
    speeds: Optional[np.ndarray] = None
    accelerations: Optional[np.ndarray] = None
    jerks: Optional[np.ndarray] = None
    lanes: Optional[np.ndarray] = None
    sample_rate: Optional[float] = None   # Hz, set once the grid is uniform

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.times.size < 2:
            raise TooShort(f"vehicle {self.vehicle_id}: need at least 2 samples")
        if np.any(np.diff(self.times) <= 0):
            raise NonMonotoneTime(f"vehicle {self.vehicle_id}: non-increasing timestamps")
        if not np.all(np.isfinite(self.positions)):
            raise MalformedRow(f"vehicle {self.vehicle_id}: non-finite position")
        if self.length <= 0:
            raise ValueError(f"vehicle {self.vehicle_id}: non-positive length")

    def __len__(self):
        return self.times.size

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def samples(self):
        """Iterate row-wise as TrajectorySample objects."""
        for i in range(len(self)):
            yield TrajectorySample(
                time=float(self.times[i]),
                position=float(self.positions[i]),
                speed=None if self.speeds is None else float(self.speeds[i]),
                acceleration=None if self.accelerations is None else float(self.accelerations[i]),
                jerk=None if self.jerks is None else float(self.jerks[i]),
                lane=None if self.lanes is None else int(self.lanes[i]),
            )


@dataclass
class Dataset:
    """A collection of vehicle trajectories over one road."""

    dataset_id: str
    trajectories: list[VehicleTrajectory] = field(default_factory=list)
    road_length: Optional[float] = None
    topology: str = OPEN

    def __post_init__(self):
        ids = [t.vehicle_id for t in self.trajectories]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate vehicle_ids in dataset")
        if self.topology == RING and not self.road_length:
            raise ValueError("RING topology requires road_length")

    def __iter__(self):
        return iter(self.trajectories)

    def __len__(self):
        return len(self.trajectories)

    def get(self, vehicle_id: str) -> VehicleTrajectory:
        for t in self.trajectories:
            if t.vehicle_id == vehicle_id:
                return t
        raise KeyError(vehicle_id)


@dataclass(frozen=True)
class SmoothingConfig:
    """Resampling step and moving-average half-width for kinematics."""

    window: float = 0.5       # s, half-width; 0 disables smoothing
    resample_dt: float = 0.1  # s

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.resample_dt <= 0:
            raise ValueError("resample_dt must be > 0")


# ---------------------------------------------------------------------------
# ingestion

def ingest_trajectories(source_path, schema: dict, dataset_id: Optional[str] = None,
                        topology: str = OPEN, road_length: Optional[float] = None) -> Dataset:
    """Read a trajectory CSV into a Dataset.

    ``schema`` maps logical names (vehicle_id, time, position, and optionally
    speed, acceleration, lane, class, length) to column headers in the file.
    Rows are grouped per vehicle in file order; timestamps must already be
    strictly increasing per vehicle.
    """
    for name in REQUIRED_COLUMNS:
        if name not in schema:
            raise ValueError(f"schema missing required column mapping '{name}'")
    try:
        frame = pd.read_csv(source_path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise EmptyDataset(f"{source_path}: no rows")
    if frame.empty:
        raise EmptyDataset(f"{source_path}: no rows")

    for logical, column in schema.items():
        if column not in frame.columns:
            raise ValueError(f"column '{column}' (for '{logical}') not in {source_path}")

    def numeric(logical):
        col = frame[schema[logical]]
        values = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
        bad = np.isnan(values) & ~col.isna().to_numpy()
        if bad.any():
            row = int(np.argmax(bad))
            raise MalformedRow(f"row {row}: non-numeric value in column '{schema[logical]}'")
        if col.isna().any():
            row = int(col.isna().to_numpy().argmax())
            raise MalformedRow(f"row {row}: missing value in column '{schema[logical]}'")
        return values

    times = numeric("time")
    positions = numeric("position")
    vehicle_ids = frame[schema["vehicle_id"]].astype(str).to_numpy()

    speeds = numeric("speed") if "speed" in schema else None
    accels = numeric("acceleration") if "acceleration" in schema else None
    lanes = None
    if "lane" in schema:
        lanes = pd.to_numeric(frame[schema["lane"]], errors="coerce").to_numpy()
    classes = frame[schema["class"]].astype(str).to_numpy() if "class" in schema else None
    lengths = numeric("length") if "length" in schema else None

    trajectories = []
    # keep first-appearance order of vehicles, file order within a vehicle
    order = {}
    for i, vid in enumerate(vehicle_ids):
        order.setdefault(vid, []).append(i)
    for vid, idx in order.items():
        idx = np.asarray(idx)
        t = times[idx]
        if np.any(np.diff(t) <= 0):
            raise NonMonotoneTime(f"vehicle {vid}: duplicate or decreasing timestamps")
        traj = VehicleTrajectory(
            vehicle_id=vid,
            times=t,
            positions=positions[idx],
            class_label=str(classes[idx[0]]) if classes is not None else "UNKNOWN",
            length=float(lengths[idx[0]]) if lengths is not None else DEFAULT_VEHICLE_LENGTH,
            speeds=speeds[idx] if speeds is not None else None,
            accelerations=accels[idx] if accels is not None else None,
            lanes=lanes[idx] if lanes is not None else None,
        )
        trajectories.append(traj)

    return Dataset(
        dataset_id=dataset_id or str(source_path),
        trajectories=trajectories,
        road_length=road_length,
        topology=topology,
    )


def write_trajectories(ds: Dataset, path) -> None:
    """Write a Dataset in the ingest CSV schema (full float precision)."""
    rows = []
    for traj in ds:
        for i in range(len(traj)):
            rows.append({
                "vehicle_id": traj.vehicle_id,
                "t": repr(float(traj.times[i])),
                "x": repr(float(traj.positions[i])),
                "v": "" if traj.speeds is None else repr(float(traj.speeds[i])),
                "class": traj.class_label,
                "length": repr(float(traj.length)),
            })
    pd.DataFrame(rows).to_csv(path, index=False)


def default_schema() -> dict:
    """Column mapping matching :func:`write_trajectories` output."""
    return {"vehicle_id": "vehicle_id", "time": "t", "position": "x",
            "speed": "v", "class": "class", "length": "length"}


# ---------------------------------------------------------------------------
# kinematics

def _finite_difference(y: np.ndarray, dt: float) -> np.ndarray:
    """Central differences inside, second-order one-sided at the ends."""
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - y[:-2]) / (2.0 * dt)
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt)
    d[-1] = (3.0 * y[-1] - 4.0 * y[-2] + y[-3]) / (2.0 * dt)
    return d


def _moving_average(y: np.ndarray, half_width: int) -> np.ndarray:
    if half_width <= 0:
        return y
    n = y.size
    csum = np.concatenate(([0.0], np.cumsum(y)))
    idx = np.arange(n)
    lo = np.maximum(idx - half_width, 0)
    hi = np.minimum(idx + half_width + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def resample_uniform(traj: VehicleTrajectory, dt: float) -> VehicleTrajectory:
    """Linear-interpolate samples onto a uniform grid anchored at t0."""
    t0, t1 = traj.times[0], traj.times[-1]
    steps = (t1 - t0) / dt
    n = int(np.floor(steps + 1e-9)) + 1
    grid = t0 + dt * np.arange(n)
    already_uniform = (
        n == len(traj)
        and np.all(np.abs(traj.times - grid) <= 1e-6)
    )
    if already_uniform:
        grid = traj.times
        positions = traj.positions
    else:
        positions = np.interp(grid, traj.times, traj.positions)
    return replace(traj, times=grid, positions=positions,
                   speeds=None, accelerations=None, jerks=None,
                   lanes=None, sample_rate=1.0 / dt)


def derive_kinematics(traj: VehicleTrajectory, cfg: SmoothingConfig) -> VehicleTrajectory:
    """Resample and derive speed, acceleration, and jerk from position.

    Each quantity is the finite difference of the previous one, followed by
    a moving average of half-width ``cfg.window`` seconds. All three are
    recomputed from position, so repeated application is a no-op.

    Raises TooShort if fewer than 4 samples remain after resampling.
    """
    out = resample_uniform(traj, cfg.resample_dt)
    if len(out) < 4:
        raise TooShort(f"vehicle {traj.vehicle_id}: {len(out)} samples after resampling")
    dt = cfg.resample_dt
    half = int(round(cfg.window / dt))

    speed = _moving_average(_finite_difference(out.positions, dt), half)
    accel = _moving_average(_finite_difference(speed, dt), half)
    jerk = _moving_average(_finite_difference(accel, dt), half)

    if np.any(speed < -REVERSE_SPEED_TOL):
        log.warning("vehicle %s: reverse motion (min derived speed %.2f m/s)",
                    traj.vehicle_id, float(speed.min()))

    out.speeds = speed
    out.accelerations = accel
    out.jerks = jerk
    return out


def derive_dataset_kinematics(ds: Dataset, cfg: SmoothingConfig) -> Dataset:
    """derive_kinematics over a whole dataset; RING positions unwrapped first.

    RING trajectories keep the unwrapped (continuous) positions so that
    downstream differencing and gridding see monotone coordinates; the
    physical ring location is position modulo road_length.
    """
    out = []
    for traj in ds:
        if ds.topology == RING:
            traj = replace(traj, positions=unwrap_positions(traj.positions, ds.road_length))
        out.append(derive_kinematics(traj, cfg))
    return Dataset(ds.dataset_id, out, road_length=ds.road_length, topology=ds.topology)


def unwrap_positions(positions: np.ndarray, road_length: float) -> np.ndarray:
    """Undo modulo wrapping: backward jumps larger than L/2 add one lap."""
    positions = np.asarray(positions, dtype=float)
    jumps = np.diff(positions) < -0.5 * road_length
    laps = np.concatenate(([0], np.cumsum(jumps)))
    return positions + laps * road_length


# ---------------------------------------------------------------------------
# segmentation

def segment_trajectory(traj: VehicleTrajectory, segment_duration: float) -> list[tuple[int, int]]:
    """Split into contiguous sample-index ranges of fixed duration.

    Ranges are half-open ``(start, stop)``. The trailing partial segment is
    kept only when it holds at least half a full segment's samples.
    """
    if segment_duration <= 0:
        raise ValueError("segment_duration must be > 0")
    n = len(traj)
    if traj.sample_rate:
        per_segment = int(round(segment_duration * traj.sample_rate))
    else:
        dt = float(np.median(np.diff(traj.times)))
        per_segment = int(round(segment_duration / dt))
    per_segment = max(per_segment, 1)

    ranges = []
    start = 0
    while start + per_segment <= n:
        ranges.append((start, start + per_segment))
        start += per_segment
    leftover = n - start
    if leftover >= 0.5 * per_segment and leftover > 0:
        ranges.append((start, n))
    return ranges
