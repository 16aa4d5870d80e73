"""Jerk-based driver stochasticity attribute.

Per trajectory segment i we take the mean absolute jerk and the (population)
standard deviation of jerk. Across segments these are strongly collinear;
the intercept a of the least-squares line c_std = a + b * c_absave defines a
per-segment attribute

    omega_l(i) = (c_std(i) - a) / c_absave(i)

whose relative spread (the constancy error) is small for real drivers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRegression, NoValidSegments, TooShort, ZeroMeanAttribute
from .trajectories import VehicleTrajectory, segment_trajectory

JERK_FLOOR = 1e-6  # m/s^3; segments with c_absave below this are skipped


@dataclass(frozen=True)
class JerkSegmentStats:
    segment_index: int
    c_absave: float   # mean |j|
    c_std: float      # population std of j
    c_mean: float     # mean j
    n_samples: int


@dataclass
class DriverAttribute:
    """Regression coefficients and the resulting attribute series."""

    vehicle_id: str
    regression_a: float
    regression_b: float
    correlation: float
    omega_l_series: np.ndarray
    omega_l_mean: float
    constancy_error: float
    n_segments: int
    skipped_segments: list[int] = field(default_factory=list)


def jerk_segment_stats(jerk_series, segment_index: int = 0) -> JerkSegmentStats:
    """Mean-absolute, mean, and population-std jerk of one segment."""
    j = np.asarray(jerk_series, dtype=float)
    if j.size < 2:
        raise TooShort("segment needs at least 2 jerk samples")
    c_mean = float(j.mean())
    return JerkSegmentStats(
        segment_index=segment_index,
        c_absave=float(np.abs(j).mean()),
        c_std=float(np.sqrt(np.mean((j - c_mean) ** 2))),
        c_mean=c_mean,
        n_samples=int(j.size),
    )


def fit_jerk_regression(stats: list[JerkSegmentStats]) -> tuple[float, float, float]:
    """Least-squares line c_std = a + b * c_absave plus Pearson r."""
    if len(stats) < 2:
        raise DegenerateRegression("need at least 2 segments")
    x = np.array([s.c_absave for s in stats])
    y = np.array([s.c_std for s in stats])
    sxx = np.sum((x - x.mean()) ** 2)
    if sxx == 0.0:
        raise DegenerateRegression("all c_absave values identical")
    sxy = np.sum((x - x.mean()) * (y - y.mean()))
    b = sxy / sxx
    a = y.mean() - b * x.mean()
    syy = np.sum((y - y.mean()) ** 2)
    r = 1.0 if syy == 0.0 else float(sxy / np.sqrt(sxx * syy))
    return float(a), float(b), r


def omega_l(stats: list[JerkSegmentStats], a: float) -> tuple[np.ndarray, list[int]]:
    """Per-segment attribute values; returns (series, skipped segment indices)."""
    series = []
    skipped = []
    for s in stats:
        if s.c_absave <= JERK_FLOOR:
            skipped.append(s.segment_index)
            continue
        series.append((s.c_std - a) / s.c_absave)
    if not series:
        raise NoValidSegments("all segments below the jerk-magnitude floor")
    return np.asarray(series), skipped


def constancy_error(series) -> float:
    """Mean squared relative deviation around the series mean, in percent."""
    w = np.asarray(series, dtype=float)
    if w.size == 0:
        raise NoValidSegments("empty attribute series")
    mean = w.mean()
    if mean == 0.0:
        raise ZeroMeanAttribute("attribute series has zero mean")
    return float(np.mean(((w - mean) / mean) ** 2) * 100.0)


def driver_attribute(traj: VehicleTrajectory, segment_duration: float = 30.0) -> DriverAttribute:
    """Full per-vehicle extraction: segment, regress, evaluate, score.

    Requires derived jerk (see derive_kinematics). Raises DegenerateRegression
    when fewer than two usable segments exist; callers should report such
    vehicles as attribute-unavailable rather than defaulting.
    """
    if traj.jerks is None:
        raise ValueError(f"vehicle {traj.vehicle_id}: derive kinematics first")
    ranges = segment_trajectory(traj, segment_duration)
    stats = [jerk_segment_stats(traj.jerks[a:b], i) for i, (a, b) in enumerate(ranges)]
    if len(stats) < 2:
        raise DegenerateRegression(
            f"vehicle {traj.vehicle_id}: {len(stats)} segment(s); attribute unavailable")
    a, b, r = fit_jerk_regression(stats)
    series, skipped = omega_l(stats, a)
    return DriverAttribute(
        vehicle_id=traj.vehicle_id,
        regression_a=a,
        regression_b=b,
        correlation=r,
        omega_l_series=series,
        omega_l_mean=float(series.mean()),
        constancy_error=constancy_error(series),
        n_segments=len(series),
        skipped_segments=skipped,
    )
