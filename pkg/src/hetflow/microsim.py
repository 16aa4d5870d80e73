"""Optimal-velocity car following and the ring-road platoon simulator.

Acceleration model::

    dv/dt = (V_opt(gap) - v) / tau + beta * (v_leader - v)
    V_opt(gap) = max(0, min(v_free, (gap - min_gap) / time_gap))

The ring simulator places N vehicles on a loop of length L with a
sinusoidally perturbed gap profile and advances the coupled ODE with RK4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUp, InfeasibleScenario
from .trajectories import RING, Dataset, VehicleTrajectory

# Ring-experiment parameter sets (HV plus two flavors of AV controller).
HV_PARAMS = dict(tau=1.7, beta=0.9, v_free=40.0, time_gap=0.5, min_gap=15.0, length=5.0)
AV1_PARAMS = dict(tau=1.7, beta=0.9, v_free=50.0, time_gap=0.7, min_gap=5.0, length=5.0)
AV2_PARAMS = dict(tau=1.0, beta=0.6, v_free=30.0, time_gap=1.2, min_gap=5.0, length=5.0)


@dataclass(frozen=True)
class OvmParams:
    """Five car-following parameters plus vehicle length."""

    tau: float        # s, adaptation time
    beta: float       # 1/s, speed-difference sensitivity
    v_free: float     # m/s
    time_gap: float   # s
    min_gap: float    # m
    length: float = 5.0  # m
    label: str = "HV"

    def __post_init__(self):
        if self.tau <= 0 or self.v_free <= 0 or self.time_gap <= 0:
            raise ValueError("tau, v_free, time_gap must be positive")
        if self.beta < 0 or self.min_gap < 0 or self.length <= 0:
            raise ValueError("beta, min_gap must be >= 0 and length > 0")

    @classmethod
    def hv(cls):
        return cls(**HV_PARAMS, label="HV")

    @classmethod
    def av1(cls):
        return cls(**AV1_PARAMS, label="AV")

    @classmethod
    def av2(cls):
        return cls(**AV2_PARAMS, label="AV")


def ovm_desired_speed(p: OvmParams, gap):
    """Gap-dependent desired speed, clamped to [0, v_free]."""
    return np.clip((np.asarray(gap, dtype=float) - p.min_gap) / p.time_gap, 0.0, p.v_free)


def ovm_acceleration(p: OvmParams, v, gap, v_leader):
    """Relaxation toward the desired speed plus relative-speed feedback."""
    return (ovm_desired_speed(p, gap) - v) / p.tau + p.beta * (v_leader - v)


@dataclass
class RingScenario:
    """Closed-loop platoon scenario.

    ``vehicle_specs`` lists vehicles in placement order; vehicle i's leader
    is vehicle i+1 (the last one leads back to the first).
    """

    road_length: float
    vehicle_specs: list[OvmParams]
    sim_duration: float = 600.0
    dt: float = 0.05
    init_gap_amplitude: float = 0.5
    record_every: int = 2   # store every k-th step (output rate = 1/(k*dt))
    dataset_id: str = "ring-sim"

    def __post_init__(self):
        total_length = sum(p.length for p in self.vehicle_specs)
        if self.road_length <= total_length:
            raise InfeasibleScenario("road shorter than the parked platoon")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        tau_min = min(p.tau for p in self.vehicle_specs)
        if self.dt > tau_min / 10.0 + 1e-12:
            raise ValueError(f"dt={self.dt} too large; need dt <= tau_min/10 = {tau_min / 10:.3g}")

    @property
    def n_vehicles(self):
        return len(self.vehicle_specs)


def initial_gaps(s: RingScenario) -> np.ndarray:
    """Sinusoidal gap profile; the last gap closes the ring exactly."""
    n = s.n_vehicles
    total_length = sum(p.length for p in s.vehicle_specs)
    s_star = (s.road_length - total_length) / n
    if s_star <= 0:
        raise InfeasibleScenario("non-positive equilibrium gap")
    i = np.arange(1, n)
    gaps = np.empty(n)
    gaps[:-1] = s_star * (1.0 + s.init_gap_amplitude * np.sin(2.0 * np.pi * i / n))
    gaps[-1] = s.road_length - gaps[:-1].sum() - total_length
    if np.any(gaps <= 0):
        raise InfeasibleScenario("non-positive initial gap; reduce amplitude or N")
    return gaps


@dataclass
class RingRun:
    """Raw integrator output (unwrapped positions)."""

    times: np.ndarray        # (T,)
    positions: np.ndarray    # (T, N), continuous (not wrapped)
    speeds: np.ndarray       # (T, N)
    scenario: RingScenario = field(repr=False, default=None)


def _gaps(positions: np.ndarray, lengths: np.ndarray, road_length: float) -> np.ndarray:
    lead = np.roll(positions, -1)
    lead_len = np.roll(lengths, -1)
    return (lead - positions) % road_length - lead_len


def simulate_ring(s: RingScenario) -> Dataset:
    """Run the scenario and package trajectories as a RING dataset."""
    run = integrate_ring(s)
    return ring_run_to_dataset(run)


def integrate_ring(s: RingScenario) -> RingRun:
    """Advance the platoon ODE with classic RK4.

    Speeds are clamped at zero after each full step (no reversing); a
    BlowUp is raised on runaway speed or on any non-positive gap.
    """
    n = s.n_vehicles
    lengths = np.array([p.length for p in s.vehicle_specs])
    tau = np.array([p.tau for p in s.vehicle_specs])
    beta = np.array([p.beta for p in s.vehicle_specs])
    v_free = np.array([p.v_free for p in s.vehicle_specs])
    time_gap = np.array([p.time_gap for p in s.vehicle_specs])
    min_gap = np.array([p.min_gap for p in s.vehicle_specs])
    speed_cap = 10.0 * v_free.max()
    L = s.road_length

    gaps0 = initial_gaps(s)
    x = np.empty(n)
    x[0] = 0.0
    # front-bumper placement: x_{i+1} = x_i + gap_i + length_{i+1}
    for i in range(n - 1):
        x[i + 1] = x[i] + gaps0[i] + lengths[i + 1]
    v = np.clip((gaps0 - min_gap) / time_gap, 0.0, v_free)

    def rhs(x_, v_):
        gaps = _gaps(x_, lengths, L)
        v_lead = np.roll(v_, -1)
        v_opt = np.clip((gaps - min_gap) / time_gap, 0.0, v_free)
        return v_, (v_opt - v_) / tau + beta * (v_lead - v_)

    n_steps = int(round(s.sim_duration / s.dt))
    rec = range(0, n_steps + 1, s.record_every)
    times = np.array([k * s.dt for k in rec])
    pos_hist = np.empty((len(times), n))
    spd_hist = np.empty((len(times), n))
    pos_hist[0], spd_hist[0] = x, v
    write = 1

    dt = s.dt
    for k in range(1, n_steps + 1):
        k1x, k1v = rhs(x, v)
        k2x, k2v = rhs(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k3x, k3v = rhs(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k4x, k4v = rhs(x + dt * k3x, v + dt * k3v)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = np.maximum(v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v), 0.0)

        if np.abs(v).max() > speed_cap:
            raise BlowUp(f"speed exceeded {speed_cap:.0f} m/s at t={k * dt:.2f} s; reduce dt")
        if np.any(_gaps(x, lengths, L) <= 0):
            raise BlowUp(f"collision (gap <= 0) at t={k * dt:.2f} s")

        if k % s.record_every == 0:
            pos_hist[write], spd_hist[write] = x, v
            write += 1

    return RingRun(times=times, positions=pos_hist, speeds=spd_hist, scenario=s)


def ring_run_to_dataset(run: RingRun) -> Dataset:
    """Wrap positions modulo L and emit one trajectory per vehicle."""
    s = run.scenario
    trajectories = []
    for i, p in enumerate(s.vehicle_specs):
        trajectories.append(VehicleTrajectory(
            vehicle_id=f"veh{i:03d}",
            times=run.times.copy(),
            positions=run.positions[:, i] % s.road_length,
            speeds=run.speeds[:, i].copy(),
            class_label=p.label,
            length=p.length,
            sample_rate=1.0 / (s.dt * s.record_every),
        ))
    return Dataset(s.dataset_id, trajectories, road_length=s.road_length, topology=RING)


def mixed_scenario(kind: str, n_vehicles: int = 20, road_length: float = 600.0,
                   **kwargs) -> RingScenario:
    """The four reference ring scenarios by heterogeneity level.

    kind: 'hv' (homogeneous), 'av1' (homogeneous), 'mixed1' (HV/AV1
    alternating), 'mixed2' (HV-AV1-HV-AV2 repeating).
    """
    hv, av1, av2 = OvmParams.hv(), OvmParams.av1(), OvmParams.av2()
    patterns = {
        "hv": [hv],
        "av1": [av1],
        "mixed1": [hv, av1],
        "mixed2": [hv, av1, hv, av2],
    }
    if kind not in patterns:
        raise ValueError(f"unknown scenario kind '{kind}'")
    pattern = patterns[kind]
    specs = [pattern[i % len(pattern)] for i in range(n_vehicles)]
    return RingScenario(road_length=road_length, vehicle_specs=specs,
                        dataset_id=f"ring-{kind}", **kwargs)
