"""Constant-velocity Gaussian predictions and lane-following path predictions."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import Polyline, wrap_angle
from .scenario import Lane

VEHICLE_PATH_HORIZON = 2.0


class UnmatchedVehicleWarning(UserWarning):
    """A vehicle could not be matched to any lane."""


@dataclass(frozen=True)
class PredictionConfig:
    horizon: float = 4.0
    sigma0: float = 0.05                       # initial position stddev, m
    ped_q: tuple[float, float] = (0.15, 0.15)  # variance growth per second, m^2/s
    veh_q: tuple[float, float] = (0.5, 0.1)    # longitudinal, lateral
    ped_mass: float = 75.0
    perception_radius: float = 40.0


@dataclass(frozen=True, eq=False)
class GaussianState:
    t: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if cov[0, 0] < -1e-15 or cov[1, 1] < -1e-15 or np.linalg.det(cov) < -1e-12:
            raise ValueError("covariance must be positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def is_psd(cov: np.ndarray, tol: float = 1e-12) -> bool:
    cov = np.asarray(cov)
    return bool(cov[0, 0] >= -tol and cov[1, 1] >= -tol
                and cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0] >= -tol
                and abs(cov[0, 1] - cov[1, 0]) <= tol)


@dataclass(eq=False)
class PredictionSet:
    """Per-agent Gaussian tracks on a shared time grid ``times``.

    ``means`` is (O, K+1, 2), ``covs`` (O, K+1, 2, 2), ``velocities`` (O, K+1, 2).
    """

    times: np.ndarray
    ids: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    masses: np.ndarray = None
    means: np.ndarray = None
    covs: np.ndarray = None
    velocities: np.ndarray = None

    def __post_init__(self):
        k = len(self.times)
        if self.masses is None:
            self.masses = np.zeros(0)
            self.means = np.zeros((0, k, 2))
            self.covs = np.zeros((0, k, 2, 2))
            self.velocities = np.zeros((0, k, 2))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def __len__(self) -> int:
        return len(self.ids)

    def states(self, i: int) -> list[GaussianState]:
        return [GaussianState(float(t), self.means[i, k], self.covs[i, k]) for k, t in enumerate(self.times)]

    def subset(self, mask) -> "PredictionSet":
        mask = np.asarray(mask, dtype=bool)
        return PredictionSet(self.times, [i for i, m in zip(self.ids, mask) if m],
                             [k for k, m in zip(self.kinds, mask) if m], self.masses[mask],
                             self.means[mask], self.covs[mask], self.velocities[mask])

    def add(self, agent_id, kind: str, mass: float, means, covs, velocities) -> None:
        self.ids.append(agent_id)
        self.kinds.append(kind)
        self.masses = np.append(self.masses, mass)
        self.means = np.concatenate([self.means, np.asarray(means)[None]])
        self.covs = np.concatenate([self.covs, np.asarray(covs)[None]])
        self.velocities = np.concatenate([self.velocities, np.asarray(velocities)[None]])


def time_grid(horizon: float, dt: float) -> np.ndarray:
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    k = int(round(horizon / dt))
    return np.arange(k + 1) * dt


def cv_tracks(positions: np.ndarray, velocities: np.ndarray, times: np.ndarray,
              sigma0: float, q) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized constant-velocity means and linearly growing covariances."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    velocities = np.asarray(velocities, dtype=float).reshape(-1, 2)
    means = positions[:, None, :] + velocities[:, None, :] * times[None, :, None]
    Q = np.asarray(q, dtype=float)
    if Q.shape == (2,):
        Q = np.diag(Q)
    cov0 = np.eye(2) * sigma0 ** 2
    covs = cov0[None, None] + times[None, :, None, None] * Q[None, None]
    covs = np.broadcast_to(covs, (len(positions), len(times), 2, 2)).copy()
    return means, covs


def predict_pedestrian(ped, horizon: float, dt: float, q=(0.15, 0.15),
                       sigma0: float = 0.05) -> list[GaussianState]:
    """Constant-velocity forecast: mean p + v t, covariance Sigma0 + t Q."""
    times = time_grid(horizon, dt)
    means, covs = cv_tracks(ped.position, ped.velocity, times, sigma0, q)
    return [GaussianState(float(t), means[0, k], covs[0, k]) for k, t in enumerate(times)]


# ---------------------------------------------------------------------------
# vehicles


def match_lane(position, heading: float, lanes: list[Lane], max_heading_error: float = math.pi / 3):
    """Closest lane whose centerline is within half its width and roughly aligned.

    Returns ``(lane, polyline, s, d)`` or ``None``.
    """
    best = None
    for lane in lanes:
        pl = Polyline(lane.centerline)
        s, d = pl.project(position)
        if s < -1e-6 or s > pl.length + 1e-6 or abs(d) > lane.width / 2 + 1e-9:
            continue
        err = abs(float(wrap_angle(heading - pl.heading(s))))
        if err > max_heading_error:
            continue
        if best is None or abs(d) < abs(best[3]):
            best = (lane, pl, s, d)
    return best


def _lane_branches(lane: Lane, s0: float, length: float, lanes_by_id: dict) -> list[np.ndarray]:
    """Centerline pieces from arc length s0 covering ``length`` meters, one per
    successor branch."""
    pl = Polyline(lane.centerline)
    remaining = pl.length - s0
    if remaining >= length or not lane.successors:
        return [pl.cut(s0, length)]
    head = pl.cut(s0, max(remaining, 0.0))
    out = []
    for sid in lane.successors:
        for tail in _lane_branches(lanes_by_id[sid], 0.0, length - max(remaining, 0.0), lanes_by_id):
            out.append(np.concatenate([head, tail[1:]]) if len(tail) > 1 else head)
    return out


def predict_vehicle_paths(position, heading: float, speed: float, lanes: list[Lane],
                          horizon: float = VEHICLE_PATH_HORIZON) -> list[np.ndarray]:
    """Constant-velocity path polylines along every lane branch the vehicle can follow.

    Each polyline starts at the vehicle position and has arc length
    ``speed * horizon`` (measured along the lane). Unmatched vehicles get a
    single straight polyline along their heading and a warning.
    """
    position = np.asarray(position, dtype=float).reshape(2)
    length = max(speed, 0.0) * horizon
    if length <= 0:
        return [position.reshape(1, 2)]
    m = match_lane(position, heading, list(lanes))
    if m is None:
        warnings.warn("vehicle not matched to any lane; predicting straight ahead", UnmatchedVehicleWarning)
        end = position + length * np.array([math.cos(heading), math.sin(heading)])
        return [np.stack([position, end])]
    lane, pl, s, _ = m
    by_id = {ln.id: ln for ln in lanes}
    paths = []
    for branch in _lane_branches(lane, s, length, by_id):
        paths.append(np.concatenate([position.reshape(1, 2), branch[1:]]) if len(branch) > 1
                     else np.stack([position, branch[0]]))
    return paths


def predict_vehicle_gaussian(position, heading: float, speed: float, lanes: list[Lane],
                             horizon: float, dt: float, q=(0.5, 0.1), sigma0: float = 0.05,
                             ) -> tuple[list[GaussianState], np.ndarray]:
    """Gaussian track along the matched lane (first branch) at constant speed.

    Variance grows ``q[0]`` per second along the travel direction and ``q[1]``
    across it. Returns the states and the per-step velocity vectors.
    """
    times = time_grid(horizon, dt)
    position = np.asarray(position, dtype=float).reshape(2)
    m = match_lane(position, heading, list(lanes)) if speed > 0 else None
    if m is None:
        direction = np.array([math.cos(heading), math.sin(heading)])
        means = position + np.outer(times * speed, direction)
        headings = np.full(len(times), heading)
    else:
        lane, pl, s, d = m
        branch = _lane_branches(lane, s, speed * times[-1] + 1e-9, {ln.id: ln for ln in lanes})[0]
        bp = Polyline(np.concatenate([position.reshape(1, 2), branch[1:]])) if len(branch) > 1 else None
        if bp is None:
            means = np.repeat(position[None], len(times), axis=0)
            headings = np.full(len(times), heading)
        else:
            means = bp.position(times * speed)
            headings = bp.heading(times * speed)
    c, s_ = np.cos(headings), np.sin(headings)
    R = np.stack([np.stack([c, -s_], -1), np.stack([s_, c], -1)], -2)   # (K+1, 2, 2)
    growth = R @ np.diag(np.asarray(q, dtype=float)) @ np.transpose(R, (0, 2, 1))
    covs = np.eye(2) * sigma0 ** 2 + times[:, None, None] * growth
    covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
    vel = speed * np.stack([c, s_], -1)
    return [GaussianState(float(t), means[k], covs[k]) for k, t in enumerate(times)], vel
