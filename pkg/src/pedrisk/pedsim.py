"""Social-force pedestrian dynamics.

Attraction follows the walking policy, pedestrians repel each other through an
elliptical exponential potential (gradient by central differences), vehicles
repel through an exponential of the distance to their predicted paths, and
forces from behind are down-weighted by a field-of-view rule. Integration is
semi-implicit Euler.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .agents import Crowd, Pedestrian
from .geometry import closest_on_segments
from .policy import PolicyField

FD_STEP = 1e-3
ARRIVAL_RADIUS = 0.5


class SingularForceWarning(RuntimeWarning):
    """A force was evaluated at a singular configuration and capped."""


@dataclass(frozen=True)
class ForceParams:
    tau: float = 0.5
    ped_amplitude: float = 2.1       # V_ab^0
    ped_range: float = 0.3           # sigma_b
    veh_amplitude: float = 6.0       # V_g^0
    veh_range: float = 1.5           # sigma_g
    fov_half_angle: float = math.radians(100.0)
    fov_scale: float = 0.5
    max_speed_factor: float = 1.3
    max_speed: float | None = None
    cutoff_factor: float = 10.0

    def __post_init__(self):
        if self.tau <= 0 or self.ped_range <= 0 or self.veh_range <= 0:
            raise ValueError("tau and potential ranges must be positive")
        if not 0 < self.fov_half_angle <= math.pi:
            raise ValueError("fov_half_angle must lie in (0, pi]")
        if not 0 < self.fov_scale <= 1:
            raise ValueError("fov_scale must lie in (0, 1]")

    @property
    def ped_cutoff(self) -> float:
        return self.cutoff_factor * self.ped_range

    @property
    def veh_cutoff(self) -> float:
        return self.cutoff_factor * self.veh_range

    def speed_cap(self, desired_speed):
        if self.max_speed is not None:
            return np.full_like(np.asarray(desired_speed, dtype=float), self.max_speed)
        return self.max_speed_factor * np.asarray(desired_speed, dtype=float)


@dataclass(eq=False)
class VehicleFootprint:
    position: np.ndarray
    heading: float
    speed: float
    predicted_paths: list = field(default_factory=list)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        if not self.predicted_paths:
            raise ValueError("vehicle needs at least one predicted path")
        self.predicted_paths = [np.asarray(p, dtype=float).reshape(-1, 2) for p in self.predicted_paths]

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        starts, ends = [], []
        for p in self.predicted_paths:
            if len(p) == 1:
                starts.append(p)
                ends.append(p)
            else:
                starts.append(p[:-1])
                ends.append(p[1:])
        return np.concatenate(starts), np.concatenate(ends)


# ---------------------------------------------------------------------------
# pairwise potential


def ellipse_b(r: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Semi-minor axis b of the elliptical potential.

    ``r`` points from the other pedestrian to this one, ``vs`` is the other
    pedestrian's velocity times its step width.
    """
    nr = np.hypot(r[..., 0], r[..., 1])
    d = r - vs
    nd = np.hypot(d[..., 0], d[..., 1])
    nvs2 = vs[..., 0] ** 2 + vs[..., 1] ** 2
    return 0.5 * np.sqrt((nr + nd) ** 2 + nvs2)


def ped_potential(r: np.ndarray, vs: np.ndarray, params: ForceParams) -> np.ndarray:
    return params.ped_amplitude * np.exp(-ellipse_b(r, vs) / params.ped_range)


def _ped_force_fd(r: np.ndarray, vs: np.ndarray, params: ForceParams) -> np.ndarray:
    """-grad_r V by central differences, vectorized over leading axes."""
    h = FD_STEP
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    gx = (ped_potential(r + ex, vs, params) - ped_potential(r - ex, vs, params)) / (2 * h)
    gy = (ped_potential(r + ey, vs, params) - ped_potential(r - ey, vs, params)) / (2 * h)
    return -np.stack([gx, gy], axis=-1)


def _cap_magnitude(params: ForceParams, amplitude: float, rng: float) -> float:
    return params.cutoff_factor * amplitude / rng


def pedestrian_repulsion(a: Pedestrian, b: Pedestrian, params: ForceParams) -> np.ndarray:
    """Force that pedestrian ``b`` exerts on pedestrian ``a`` (unweighted)."""
    if a is b:
        raise ValueError("a pedestrian does not repel itself")
    r = a.position - b.position
    if np.hypot(*r) == 0.0:
        warnings.warn("coincident pedestrians; using capped +x force", SingularForceWarning)
        return np.array([_cap_magnitude(params, params.ped_amplitude, params.ped_range), 0.0])
    return _ped_force_fd(r, b.velocity * b.step_width, params)


def vehicle_potential(points, veh: VehicleFootprint, params: ForceParams) -> np.ndarray:
    a, b = veh.segments()
    dist, _, _ = closest_on_segments(points, a, b)
    return params.veh_amplitude * np.exp(-dist.min(axis=1) / params.veh_range)


def _vehicle_forces(points: np.ndarray, veh: VehicleFootprint, params: ForceParams) -> np.ndarray:
    a, b = veh.segments()
    out = np.zeros((len(points), 2))
    if len(points) == 0:
        return out
    dist, closest, _ = closest_on_segments(points, a, b)
    j = np.argmin(dist, axis=1)
    rows = np.arange(len(points))
    d = dist[rows, j]
    c = closest[rows, j]
    near = d <= params.veh_cutoff
    pos = near & (d > 1e-12)
    mag = params.veh_amplitude / params.veh_range * np.exp(-d[pos] / params.veh_range)
    out[pos] = mag[:, None] * (points[pos] - c[pos]) / d[pos][:, None]
    on = near & ~pos
    if on.any():
        seg = (b - a)[j[on]]
        n = np.hypot(seg[:, 0], seg[:, 1])
        fallback = np.tile([1.0, 0.0], (on.sum(), 1))
        h = veh.heading
        fallback[:] = [math.cos(h), math.sin(h)]
        tang = np.where((n > 0)[:, None], seg / np.where(n > 0, n, 1.0)[:, None], fallback)
        left = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
        out[on] = _cap_magnitude(params, params.veh_amplitude, params.veh_range) * left
    return out


def vehicle_repulsion(ped: Pedestrian, veh: VehicleFootprint, params: ForceParams) -> np.ndarray:
    """Analytic gradient force pushing the pedestrian away from the closest
    point of the vehicle's predicted paths; zero beyond the cutoff."""
    a, b = veh.segments()
    dist, _, _ = closest_on_segments(ped.position, a, b)
    if dist.min() <= 1e-12:
        warnings.warn("pedestrian on a predicted vehicle path; using capped force",
                      SingularForceWarning)
    return _vehicle_forces(ped.position.reshape(1, 2), veh, params)[0]


def fov_weight(e, f, params: ForceParams) -> float:
    """1 when the source of force ``f`` lies inside the field of view around
    ``e`` (boundary inclusive), ``fov_scale`` otherwise."""
    f = np.asarray(f, dtype=float)
    return float(_fov_weights(np.asarray(e, dtype=float).reshape(1, 2), f.reshape(1, 2), params)[0])


def _fov_weights(e: np.ndarray, f: np.ndarray, params: ForceParams) -> np.ndarray:
    nf = np.hypot(f[:, 0], f[:, 1])
    ne = np.hypot(e[:, 0], e[:, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = -(e[:, 0] * f[:, 0] + e[:, 1] * f[:, 1]) / (nf * np.where(ne > 0, ne, 1.0))
    inside = cosang >= math.cos(params.fov_half_angle) - 1e-12
    w = np.where(inside, 1.0, params.fov_scale)
    return np.where((nf == 0) | (ne == 0), 1.0, w)


def attractive_force(ped: Pedestrian, field_: PolicyField, params: ForceParams) -> np.ndarray:
    from .policy import desired_direction

    e = desired_direction(field_, ped.position)
    return (e * ped.desired_speed - ped.velocity) / params.tau


def total_force(ped: Pedestrian, others: Sequence[Pedestrian], vehicles: Sequence[VehicleFootprint],
                field_: PolicyField, params: ForceParams) -> np.ndarray:
    """Attraction plus field-of-view weighted pedestrian and vehicle repulsion."""
    from .policy import desired_direction

    if any(o is ped for o in others):
        raise ValueError("ped must not be among others")
    e = desired_direction(field_, ped.position)
    force = (e * ped.desired_speed - ped.velocity) / params.tau
    for o in others:
        if np.hypot(*(ped.position - o.position)) > params.ped_cutoff:
            continue
        f = pedestrian_repulsion(ped, o, params)
        force = force + fov_weight(e, f, params) * f
    for v in vehicles:
        f = vehicle_repulsion(ped, v, params)
        force = force + fov_weight(e, f, params) * f
    return force


# ---------------------------------------------------------------------------
# vectorized crowd stepping


def neighbor_pairs(positions: np.ndarray, radius: float) -> np.ndarray:
    """Unordered index pairs (i < j) within ``radius``, sorted."""
    if len(positions) < 2:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = cKDTree(positions).query_pairs(radius, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def crowd_forces(crowd: Crowd, vehicles: Sequence[VehicleFootprint], fields: Sequence[PolicyField],
                 params: ForceParams, active: np.ndarray | None = None) -> np.ndarray:
    """Total force on every pedestrian of the crowd.

    Only ``active`` pedestrians (default: not arrived) exert or receive forces.
    """
    n = len(crowd)
    forces = np.zeros((n, 2))
    if n == 0:
        return forces
    if active is None:
        active = ~crowd.arrived
    idx = np.flatnonzero(active)
    if len(idx) == 0:
        return forces
    pos = crowd.positions[idx]
    vel = crowd.velocities[idx]
    e = np.zeros((len(idx), 2))
    goals = crowd.goal_index[idx]
    for g in np.unique(goals):
        m = goals == g
        e[m] = fields[g].directions_at(pos[m])
    f = (e * crowd.desired_speed[idx][:, None] - vel) / params.tau

    pairs = neighbor_pairs(pos, params.ped_cutoff)
    if len(pairs):
        i = np.concatenate([pairs[:, 0], pairs[:, 1]])
        j = np.concatenate([pairs[:, 1], pairs[:, 0]])
        r = pos[i] - pos[j]
        vs = vel[j] * crowd.step_width[idx][j][:, None]
        fij = _ped_force_fd(r, vs, params)
        coincident = (r[:, 0] == 0) & (r[:, 1] == 0)
        if coincident.any():
            fij[coincident] = [_cap_magnitude(params, params.ped_amplitude, params.ped_range), 0.0]
        w = _fov_weights(e[i], fij, params)
        contrib = w[:, None] * fij
        # accumulate per receiver in a fixed (receiver, source) order
        order = np.lexsort((j, i))
        np.add.at(f, i[order], contrib[order])

    for v in vehicles:
        fv = _vehicle_forces(pos, v, params)
        w = _fov_weights(e, fv, params)
        f += w[:, None] * fv
    forces[idx] = f
    return forces


def step_crowd(crowd: Crowd, vehicles: Sequence[VehicleFootprint], fields: Sequence[PolicyField],
               params: ForceParams, dt: float) -> Crowd:
    """One semi-implicit Euler step; returns a new crowd."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = crowd.copy()
    if len(crowd) == 0:
        return out
    active = ~crowd.arrived
    F = crowd_forces(crowd, vehicles, fields, params, active)
    v = crowd.velocities + F * dt
    speed = np.hypot(v[:, 0], v[:, 1])
    cap = params.speed_cap(crowd.desired_speed)
    scale = np.where(speed > cap, cap / np.where(speed > 0, speed, 1.0), 1.0)
    v = v * scale[:, None]
    p = crowd.positions + v * dt
    out.velocities = np.where(active[:, None], v, crowd.velocities)
    out.positions = np.where(active[:, None], p, crowd.positions)
    goals = np.array([fields[g].goal for g in crowd.goal_index]).reshape(-1, 2)
    dist = np.hypot(*(out.positions - goals).T)
    done = active & (dist <= ARRIVAL_RADIUS)
    out.arrived = crowd.arrived | done
    out.velocities[out.arrived] = 0.0
    return out


def step_pedestrians(peds: Sequence[Pedestrian], vehicles: Sequence[VehicleFootprint],
                     fields: Sequence[PolicyField], params: ForceParams, dt: float) -> list[Pedestrian]:
    return step_crowd(Crowd.from_pedestrians(peds), vehicles, fields, params, dt).to_pedestrians()
