"""Generalized (Edie) macroscopic measurements on a space-time grid.

Each vehicle's piecewise-linear trajectory is clipped against the cell
lattice; the distance X and time T it spends in a cell give

    rho = sum_k T / (dx * dt),  q = sum_k X / (dx * dt),  v = sum X / sum T.

Ring datasets are measured in unwrapped coordinates and mapped back onto
[0, L) cell columns, so a vehicle passing the seam contributes to both
sides correctly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .trajectories import RING, Dataset, unwrap_positions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    """Space-time lattice: cell (i, j) covers [t0+i*dt, ...) x [x0+j*dx, ...)."""

    x0: float
    x1: float
    t0: float
    t1: float
    dx: float = 30.0
    dt: float = 30.0

    def __post_init__(self):
        if self.x1 <= self.x0 or self.t1 <= self.t0:
            raise ValueError("grid extents must be positive")
        if self.dx <= 0 or self.dt <= 0:
            raise ValueError("cell sizes must be positive")

    @property
    def n_x(self) -> int:
        return int(np.ceil((self.x1 - self.x0) / self.dx - 1e-9))

    @property
    def n_t(self) -> int:
        return int(np.ceil((self.t1 - self.t0) / self.dt - 1e-9))

    def t_centers(self) -> np.ndarray:
        return self.t0 + self.dt * (np.arange(self.n_t) + 0.5)

    def x_centers(self) -> np.ndarray:
        return self.x0 + self.dx * (np.arange(self.n_x) + 0.5)

    @classmethod
    def from_dataset(cls, ds: Dataset, dx: float = 30.0, dt: float = 30.0) -> "GridSpec":
        t_lo = min(tr.times[0] for tr in ds)
        t_hi = max(tr.times[-1] for tr in ds)
        if ds.topology == RING:
            x_lo, x_hi = 0.0, ds.road_length
        else:
            x_lo = min(tr.positions.min() for tr in ds)
            x_hi = max(tr.positions.max() for tr in ds)
        return cls(x0=x_lo, x1=x_hi, t0=t_lo, t1=t_hi, dx=dx, dt=dt)


@dataclass
class CellVehicleStats:
    """One vehicle's contribution to one cell."""

    i: int            # time index
    j: int            # space index
    vehicle_id: str
    distance: float   # m traveled inside the cell
    time: float       # s spent inside the cell
    speed_series: np.ndarray = field(default_factory=lambda: np.empty(0))
    accel_series: np.ndarray = field(default_factory=lambda: np.empty(0))
    jerk_series: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def mean_speed(self) -> float:
        return self.distance / self.time


@dataclass
class CellField:
    """Edie's density/speed/flow per occupied cell; arrays are (n_t, n_x)."""

    grid: GridSpec
    rho: np.ndarray
    speed: np.ndarray
    flow: np.ndarray
    n_vehicles: np.ndarray
    occupied: np.ndarray                      # bool mask
    omega: Optional[np.ndarray] = None        # filled by attribute reconstruction

    def occupied_cells(self):
        """(i, j) pairs of occupied cells in row-major order."""
        ii, jj = np.nonzero(self.occupied)
        return list(zip(ii.tolist(), jj.tolist()))

    def to_frame(self) -> pd.DataFrame:
        tc, xc = self.grid.t_centers(), self.grid.x_centers()
        rows = []
        for i, j in self.occupied_cells():
            row = {
                "i": i, "j": j, "t_center": tc[i], "x_center": xc[j],
                "rho": self.rho[i, j], "v": self.speed[i, j], "q": self.flow[i, j],
                "n_vehicles": int(self.n_vehicles[i, j]),
            }
            if self.omega is not None:
                row["omega"] = self.omega[i, j]
            rows.append(row)
        return pd.DataFrame(rows)


def _grid_line_hits(lo: float, hi: float, origin: float, step: float) -> np.ndarray:
    """Grid-line coordinates strictly inside (lo, hi)."""
    if hi <= lo:
        lo, hi = hi, lo
    k0 = int(np.floor((lo - origin) / step)) + 1
    k1 = int(np.ceil((hi - origin) / step)) - 1
    if k1 < k0:
        return np.empty(0)
    lines = origin + step * np.arange(k0, k1 + 1)
    return lines[(lines > lo) & (lines < hi)]


def cell_vehicle_stats(ds: Dataset, grid: GridSpec) -> list[CellVehicleStats]:
    """Clip every trajectory against the lattice and collect X, T, and
    in-cell kinematic sample slices.

    Trajectory support outside the grid is clipped away (logged, not fatal).
    Membership requires strictly positive in-cell time.
    """
    ring = ds.topology == RING
    if ring:
        laps = (grid.x1 - grid.x0) / grid.dx
        if abs(laps - round(laps)) > 1e-9:
            log.warning("ring road length %.1f not an integer number of cells", grid.x1 - grid.x0)
    out = []
    clipped_any = False
    for traj in ds:
        x = traj.positions
        if ring:
            x = unwrap_positions(x, ds.road_length)
        acc: dict[tuple[int, int], list[float]] = {}
        t = traj.times
        # bulk path: segments wholly inside one cell
        iw = np.floor((t - grid.t0) / grid.dt).astype(int)
        jw = np.floor((x - grid.x0) / grid.dx).astype(int)
        same = (iw[:-1] == iw[1:]) & (jw[:-1] == jw[1:])
        for k in np.nonzero(~same)[0]:
            for key, dT, dX in _clip_segment(t[k], x[k], t[k + 1], x[k + 1], grid, ring):
                cell = acc.setdefault(key, [0.0, 0.0])
                cell[0] += dT
                cell[1] += dX
        bulk = np.nonzero(same)[0]
        if bulk.size:
            ib, jb = iw[bulk], jw[bulk]
            inside = (ib >= 0) & (ib < grid.n_t)
            if ring:
                jb = jb % grid.n_x
            else:
                inside &= (jb >= 0) & (jb < grid.n_x)
            if not inside.all():
                clipped_any = True
            for k, i, j in zip(bulk[inside], ib[inside], jb[inside]):
                cell = acc.setdefault((int(i), int(j)), [0.0, 0.0])
                cell[0] += t[k + 1] - t[k]
                cell[1] += x[k + 1] - x[k]

        # sample membership for the kinematic slices
        si = np.floor((t - grid.t0) / grid.dt).astype(int)
        sj = np.floor((x - grid.x0) / grid.dx).astype(int)
        ok = (si >= 0) & (si < grid.n_t)
        if ring:
            sj = sj % grid.n_x
        else:
            ok &= (sj >= 0) & (sj < grid.n_x)

        for (i, j), (T, X) in sorted(acc.items()):
            if T <= 0.0:
                continue
            members = ok & (si == i) & (sj == j)
            out.append(CellVehicleStats(
                i=i, j=j, vehicle_id=traj.vehicle_id, distance=X, time=T,
                speed_series=traj.speeds[members] if traj.speeds is not None else np.empty(0),
                accel_series=traj.accelerations[members] if traj.accelerations is not None else np.empty(0),
                jerk_series=traj.jerks[members] if traj.jerks is not None else np.empty(0),
            ))
    if clipped_any:
        log.warning("dataset %s extends outside the grid; outside portions clipped", ds.dataset_id)
    return out


def _clip_segment(ta, xa, tb, xb, grid: GridSpec, ring: bool):
    """Split one linear motion segment at every grid-line crossing.

    Returns ((i, j), dT, dX) per piece; pieces outside the grid are dropped
    (or, for rings, the column index is reduced modulo n_x — the lattice is
    periodic in x).
    """
    dt_seg = tb - ta
    dx_seg = xb - xa
    breaks = [0.0, 1.0]
    for line in _grid_line_hits(ta, tb, grid.t0, grid.dt):
        breaks.append((line - ta) / dt_seg)
    if dx_seg != 0.0:
        for line in _grid_line_hits(min(xa, xb), max(xa, xb), grid.x0, grid.dx):
            breaks.append((line - xa) / dx_seg)
    s = np.unique(np.clip(np.asarray(breaks), 0.0, 1.0))
    pieces = []
    for sa, sb in zip(s[:-1], s[1:]):
        if sb <= sa:
            continue
        sm = 0.5 * (sa + sb)
        i = int(np.floor((ta + sm * dt_seg - grid.t0) / grid.dt))
        j = int(np.floor((xa + sm * dx_seg - grid.x0) / grid.dx))
        if i < 0 or i >= grid.n_t:
            continue
        if j < 0 or j >= grid.n_x:
            if not ring:
                continue
            j = j % grid.n_x
        pieces.append(((i, j), (sb - sa) * dt_seg, (sb - sa) * dx_seg))
    return pieces


def edie_macroscopic(stats: list[CellVehicleStats], grid: GridSpec) -> CellField:
    """Reduce per-vehicle cell stats to density, speed, and flow fields."""
    shape = (grid.n_t, grid.n_x)
    sum_t = np.zeros(shape)
    sum_x = np.zeros(shape)
    count = np.zeros(shape, dtype=int)
    for s in stats:
        sum_t[s.i, s.j] += s.time
        sum_x[s.i, s.j] += s.distance
        count[s.i, s.j] += 1

    occupied = sum_t > 0.0
    area = grid.dx * grid.dt
    rho = np.where(occupied, sum_t / area, np.nan)
    flow = np.where(occupied, sum_x / area, np.nan)
    speed = np.where(occupied, sum_x / np.where(occupied, sum_t, 1.0), np.nan)
    return CellField(grid=grid, rho=rho, speed=speed, flow=flow,
                     n_vehicles=count, occupied=occupied)


def group_by_cell(stats: list[CellVehicleStats]) -> dict[tuple[int, int], list[CellVehicleStats]]:
    grouped: dict[tuple[int, int], list[CellVehicleStats]] = {}
    for s in stats:
        grouped.setdefault((s.i, s.j), []).append(s)
    return grouped
