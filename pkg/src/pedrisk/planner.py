"""Frenet-frame sampling planner with a harm/risk validation funnel.

Candidates combine a lateral quintic d(t) with a longitudinal quartic s(t)
(velocity keeping), are checked against kinematic limits, ranked by a base
cost and then walked in cost order until one passes the Maximin risk rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Polyline, closest_on_segments, points_in_polygon
from .risk import BoxParams, HarmCoeffs, P_GATE, RiskReport, RiskThresholds, maximin, risk_arrays

PROFILES = ("risk_aware", "aggressive", "baseline")
KAPPA_SPEED_FLOOR = 1.0


@dataclass
class EgoState:
    x: float
    y: float
    heading: float
    speed: float
    accel: float = 0.0
    s: float = 0.0
    d: float = 0.0
    d_dot: float = 0.0
    d_ddot: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.heading, self.speed, self.accel, self.s, self.d, self.d_dot, self.d_ddot)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("ego state must be finite")
        if self.speed < 0:
            raise ValueError("ego speed must be nonnegative")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def on_reference(cls, x, y, heading, speed, reference: Polyline, accel: float = 0.0) -> "EgoState":
        s, d = reference.project((x, y))
        return cls(x, y, heading, speed, accel, s, d)


@dataclass(frozen=True)
class Limits:
    v_max: float = 14.0
    a_max: float = 3.0
    a_min: float = -8.0
    kappa_max: float = 0.2

    def __post_init__(self):
        if not (self.v_max > 0 and self.a_max > 0 and self.kappa_max > 0):
            raise ValueError("limits must be positive")
        if not self.a_min < 0:
            raise ValueError("a_min must be negative")


@dataclass(frozen=True)
class CostWeights:
    jerk: float = 0.05
    velocity: float = 1.0
    lateral: float = 2.0
    terminal: float = 0.1
    collision: float = 500.0      # baseline profile only

    def scaled(self, k: float) -> "CostWeights":
        return CostWeights(*(k * getattr(self, f) for f in ("jerk", "velocity", "lateral", "terminal", "collision")))


@dataclass(frozen=True)
class SamplingConfig:
    d_end: tuple[float, ...] = (-1.0, -0.5, 0.0, 0.5, 1.0)
    v_end_factors: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25)
    horizons: tuple[float, ...] = (2.0, 3.0, 4.0)
    dt: float = 0.1
    eval_horizon: float = 4.0

    def __post_init__(self):
        if not (self.d_end and self.v_end_factors and self.horizons):
            raise ValueError("sampling grids must be non-empty")
        if self.dt <= 0 or min(self.horizons) <= 0:
            raise ValueError("dt and horizons must be positive")
        if max(self.horizons) > self.eval_horizon + 1e-9:
            raise ValueError("horizons cannot exceed the evaluation horizon")

    @property
    def steps(self) -> int:
        return int(round(self.eval_horizon / self.dt))


@dataclass(frozen=True)
class PlannerConfig:
    profile: str = "risk_aware"
    sampling: SamplingConfig = SamplingConfig()
    limits: Limits = Limits()
    weights: CostWeights = CostWeights()
    thresholds: RiskThresholds = RiskThresholds()
    harm: HarmCoeffs = HarmCoeffs()
    box: BoxParams = BoxParams()
    p_gate: float = P_GATE
    desired_speed: float = 5.5
    lane_width: float = 3.5
    chunk: int = 10

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"profile: unknown profile {self.profile!r}")

    def effective_thresholds(self) -> RiskThresholds | None:
        if self.profile == "risk_aware":
            return self.thresholds
        if self.profile == "aggressive":
            return RiskThresholds(1.0, math.inf)
        return None


# ---------------------------------------------------------------------------
# polynomials


def quintic_coeffs(d0, dd0, ddd0, d1, dd1, ddd1, T):
    """Coefficients a0..a5 of the quintic matching position/velocity/accel at 0 and T.

    Broadcasts over all arguments; returns shape (..., 6).
    """
    d0, dd0, ddd0, d1, dd1, ddd1, T = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                           for v in (d0, dd0, ddd0, d1, dd1, ddd1, T)))
    a0, a1, a2 = d0, dd0, ddd0 / 2.0
    T2, T3 = T * T, T ** 3
    r0 = d1 - (a0 + a1 * T + a2 * T2)
    r1 = dd1 - (a1 + 2 * a2 * T)
    r2 = ddd1 - 2 * a2
    a3 = (10 * r0 - 4 * r1 * T + 0.5 * r2 * T2) / T3
    a4 = (-15 * r0 + 7 * r1 * T - r2 * T2) / (T3 * T)
    a5 = (6 * r0 - 3 * r1 * T + 0.5 * r2 * T2) / (T3 * T2)
    return np.stack([a0, a1, a2, a3, a4, a5], axis=-1)


def quartic_coeffs(s0, v0, a0, v1, a1, T):
    """Coefficients b0..b4 of the velocity-keeping quartic (free end position)."""
    s0, v0, a0, v1, a1, T = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s0, v0, a0, v1, a1, T)))
    r1 = v1 - v0 - a0 * T
    r2 = a1 - a0
    b3 = (3 * r1 - r2 * T) / (3 * T * T)
    b4 = (r2 * T - 2 * r1) / (4 * T ** 3)
    return np.stack([s0, v0, a0 / 2.0, b3, b4], axis=-1)


def poly_eval(coeffs: np.ndarray, t: np.ndarray, deriv: int = 0) -> np.ndarray:
    """Evaluate polynomials with coefficients (..., n) at times (..., K)."""
    c = np.asarray(coeffs, dtype=float)
    n = c.shape[-1]
    out = np.zeros(np.broadcast_shapes(c.shape[:-1] + (1,), np.shape(t)))
    for i in range(deriv, n):
        fac = math.factorial(i) / math.factorial(i - deriv)
        out = out + fac * c[..., i:i + 1] * np.asarray(t) ** (i - deriv)
    return out


# ---------------------------------------------------------------------------
# trajectories


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    v: np.ndarray
    a: np.ndarray
    kappa: np.ndarray
    s: np.ndarray
    d: np.ndarray
    d_dot: np.ndarray
    d_ddot: np.ndarray
    T: float
    d_end: float
    v_end: float
    jerk_sq: float = 0.0
    cost: float = 0.0
    feasible: bool = True
    violations: tuple[str, ...] = ()
    kind: str = "sample"
    report: RiskReport | None = None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def state_at(self, k: int, reference: Polyline) -> EgoState:
        return EgoState(float(self.x[k]), float(self.y[k]), float(self.heading[k]), max(float(self.v[k]), 0.0),
                        float(self.a[k]), float(self.s[k]), float(self.d[k]), float(self.d_dot[k]),
                        float(self.d_ddot[k]))


@dataclass(eq=False)
class CandidateBatch:
    """All sampled candidates as (C, K+1) arrays on a shared time grid."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    v: np.ndarray
    a: np.ndarray
    kappa: np.ndarray
    s: np.ndarray
    d: np.ndarray
    d_dot: np.ndarray
    d_ddot: np.ndarray
    T: np.ndarray
    d_end: np.ndarray
    v_end: np.ndarray
    jerk_sq: np.ndarray

    def __len__(self) -> int:
        return len(self.T)

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(self.t, self.x[i], self.y[i], self.heading[i], self.v[i], self.a[i], self.kappa[i],
                          self.s[i], self.d[i], self.d_dot[i], self.d_ddot[i], float(self.T[i]),
                          float(self.d_end[i]), float(self.v_end[i]), float(self.jerk_sq[i]))

    def trajectories(self) -> list[Trajectory]:
        return [self.trajectory(i) for i in range(len(self))]


def _integrate(values: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid rule along the last axis."""
    return dt * (values.sum(axis=-1) - 0.5 * (values[..., 0] + values[..., -1]))


def _cartesian(reference: Polyline, t, s, s_dot, d, d_dot):
    """Poses, signed speed, acceleration and curvature from Frenet samples."""
    pts, theta_r = reference.frenet_to_cartesian(s, d)
    k_r = reference.curvature(s)
    along = (1.0 - k_r * d) * s_dot
    heading = theta_r + np.arctan2(d_dot, np.abs(along)) * np.where(along < 0, -1.0, 1.0)
    speed = np.hypot(along, d_dot) * np.where(s_dot < -1e-9, -1.0, 1.0)
    dt = float(t[1] - t[0])
    accel = np.gradient(speed, dt, axis=-1)
    yaw_rate = np.gradient(np.unwrap(heading, axis=-1), dt, axis=-1)
    kappa = yaw_rate / np.maximum(np.abs(speed), KAPPA_SPEED_FLOOR)
    return pts[..., 0], pts[..., 1], heading, speed, accel, kappa


def sample_candidates(state: EgoState, reference: Polyline, cfg: PlannerConfig) -> CandidateBatch:
    """Vectorized Cartesian product of (d_end, v_end, T) in deterministic order."""
    sc = cfg.sampling
    half = max((cfg.lane_width - 2 * cfg.box.half_width) / 2.0, 0.0)
    # the current offset is always a target so the ego can hold its line
    # (and stand still) without a lateral manoeuvre
    d_grid = sorted(set(float(np.clip(d, -half, half)) for d in sc.d_end) | {float(state.d)})
    v_grid = [f * cfg.desired_speed for f in sc.v_end_factors]
    combos = np.array([(d, v, T) for d in d_grid for v in v_grid for T in sc.horizons], dtype=float)
    d_end, v_end, Tc = combos[:, 0], combos[:, 1], combos[:, 2]
    t = np.arange(sc.steps + 1) * sc.dt
    tt = np.minimum(t[None, :], Tc[:, None])
    after = np.maximum(t[None, :] - Tc[:, None], 0.0)
    inside = t[None, :] <= Tc[:, None] + 1e-12

    lat = quintic_coeffs(state.d, state.d_dot, state.d_ddot, d_end, 0.0, 0.0, Tc)
    lon = quartic_coeffs(state.s, state.speed, state.accel, v_end, 0.0, Tc)
    d = poly_eval(lat, tt)
    d_dot = np.where(inside, poly_eval(lat, tt, 1), 0.0)
    d_ddot = np.where(inside, poly_eval(lat, tt, 2), 0.0)
    d_jerk = np.where(inside, poly_eval(lat, tt, 3), 0.0)
    s = poly_eval(lon, tt) + v_end[:, None] * after
    s_dot = np.where(inside, poly_eval(lon, tt, 1), v_end[:, None])
    s_jerk = np.where(inside, poly_eval(lon, tt, 3), 0.0)
    jerk_sq = _integrate(d_jerk ** 2 + s_jerk ** 2, sc.dt)

    x, y, heading, v, a, kappa = _cartesian(reference, t, s, s_dot, d, d_dot)
    # pin the first sample to the measured state so replanning is continuous
    x[:, 0], y[:, 0], heading[:, 0] = state.x, state.y, state.heading
    v[:, 0], a[:, 0] = state.speed, state.accel
    d_ddot[:, 0] = state.d_ddot
    return CandidateBatch(t, x, y, heading, v, a, kappa, s, d, d_dot, d_ddot, Tc, d_end, v_end, jerk_sq)


def generate_candidates(state: EgoState, reference: Polyline, cfg: PlannerConfig | None = None) -> list[Trajectory]:
    if reference is None:
        raise ValueError("empty reference path")
    return sample_candidates(state, reference, cfg or PlannerConfig()).trajectories()


def feasibility_mask(v, a, kappa, limits: Limits, tol: float = 1e-9) -> tuple[np.ndarray, dict]:
    """Per-candidate feasibility over (C, K+1) arrays plus per-limit violation masks."""
    viol = {
        "v_min": (v < -tol).any(axis=-1),
        "v_max": (v > limits.v_max + tol).any(axis=-1),
        "a_max": (np.abs(a) > limits.a_max + tol).any(axis=-1),
        "kappa_max": (np.abs(kappa) > limits.kappa_max + tol).any(axis=-1),
    }
    bad = np.zeros(np.shape(v)[:-1], dtype=bool)
    for m in viol.values():
        bad |= m
    return ~bad, viol


def feasibility_check(traj: Trajectory, limits: Limits) -> tuple[bool, list[str]]:
    ok, viol = feasibility_mask(traj.v[None], traj.a[None], traj.kappa[None], limits)
    return bool(ok[0]), [name for name, m in viol.items() if m[0]]


def terminal_distance(x_end, y_end, goal) -> np.ndarray:
    """Distance from end points to the goal polygon (0 inside)."""
    pts = np.stack([np.ravel(x_end), np.ravel(y_end)], axis=1)
    poly = np.asarray(goal, dtype=float)
    dist, _, _ = closest_on_segments(pts, poly, np.roll(poly, -1, axis=0))
    out = np.where(points_in_polygon(pts, poly), 0.0, dist.min(axis=1))
    return out.reshape(np.shape(x_end))


def base_costs(v, d, jerk_sq, x_end, y_end, dt, weights: CostWeights, desired_speed: float, goal) -> np.ndarray:
    vel = _integrate((v - desired_speed) ** 2, dt)
    lat = _integrate(d ** 2, dt)
    term = terminal_distance(x_end, y_end, goal) if goal is not None else 0.0
    return weights.jerk * jerk_sq + weights.velocity * vel + weights.lateral * lat + weights.terminal * term


def base_cost(traj: Trajectory, weights: CostWeights, desired_speed: float, goal=None) -> float:
    return float(base_costs(traj.v, traj.d, traj.jerk_sq, traj.x[-1], traj.y[-1], traj.dt, weights,
                            desired_speed, goal))


def fallback_stop(state: EgoState, reference: Polyline, cfg: PlannerConfig) -> Trajectory:
    """Straight-path stop at a_min holding the current lateral offset."""
    sc = cfg.sampling
    a_min = cfg.limits.a_min
    t = np.arange(sc.steps + 1) * sc.dt
    t_stop = state.speed / -a_min
    tc = np.minimum(t, t_stop)
    s = state.s + state.speed * tc + 0.5 * a_min * tc ** 2
    v = np.maximum(state.speed + a_min * t, 0.0)
    d = np.full_like(t, state.d)
    pts, theta = reference.frenet_to_cartesian(s, d)
    a = np.where(t < t_stop, a_min, 0.0)
    heading = theta.copy()
    x, y = pts[:, 0].copy(), pts[:, 1].copy()
    x[0], y[0], heading[0] = state.x, state.y, state.heading
    a[0] = state.accel
    kappa = np.zeros_like(t)
    traj = Trajectory(t, x, y, heading, v, a, kappa, s, d, np.zeros_like(t), np.zeros_like(t),
                      float(sc.eval_horizon), state.d, 0.0, kind="fallback")
    traj.feasible, traj.violations = False, ("fallback",)
    return traj


@dataclass
class PlanResult:
    trajectory: Trajectory
    index: int            # position in the candidate list, -1 for the fallback
    n_candidates: int
    n_feasible: int
    n_assessed: int
    n_valid: int

    @property
    def stats(self) -> dict:
        return {"count": self.n_candidates, "feasible": self.n_feasible, "assessed": self.n_assessed,
                "valid": self.n_valid, "selected": self.index}


def _report(p, h, thresholds, times, ids, p_gate) -> RiskReport:
    th = thresholds or RiskThresholds(1.0, math.inf)
    h_star, r_star, valid = maximin(p, h, th, p_gate)
    return RiskReport(times, list(ids), p, h, p * h, float(h_star), float(r_star), bool(valid))


def plan(state: EgoState, reference: Polyline, preds, cfg: PlannerConfig, goal=None,
         exhaustive: bool = False) -> PlanResult:
    """Select the minimum-cost feasible candidate that passes the profile's safety rule.

    ``risk_aware`` walks feasible candidates in cost order and returns the first
    valid one; ``aggressive`` uses thresholds that never bind; ``baseline``
    adds the summed collision probability to the cost and applies no
    thresholds. ``exhaustive`` assesses every feasible candidate so the
    statistics count all valid ones.
    """
    batch = sample_candidates(state, reference, cfg)
    C = len(batch)
    ok, _ = feasibility_mask(batch.v, batch.a, batch.kappa, cfg.limits)
    J = base_costs(batch.v, batch.d, batch.jerk_sq, batch.x[:, -1], batch.y[:, -1], cfg.sampling.dt,
                   cfg.weights, cfg.desired_speed, goal)
    feasible = np.flatnonzero(ok)
    times = batch.t
    if len(preds) and len(preds.times) < len(times):
        raise ValueError("predictions shorter than the planning horizon")
    thresholds = cfg.effective_thresholds()
    n_feasible = len(feasible)

    def assess(idx, full_harm=False):
        return risk_arrays(batch.x[idx], batch.y[idx], batch.heading[idx], np.maximum(batch.v[idx], 0.0),
                           preds, cfg.box, cfg.harm, full_harm=full_harm)

    def finish(i, n_assessed, n_valid, cost):
        traj = batch.trajectory(i)
        traj.cost = float(cost)
        p, h = assess(np.array([i]), full_harm=True)
        traj.report = _report(p[0], h[0], thresholds, times, preds.ids, cfg.p_gate)
        return PlanResult(traj, int(i), C, n_feasible, n_assessed, n_valid)

    if n_feasible == 0:
        return _fallback_result(state, reference, preds, cfg, times, thresholds, C, 0, 0)

    order = feasible[np.argsort(J[feasible], kind="stable")]
    if cfg.profile == "baseline":
        # the probability term is nonnegative, so once J alone exceeds the
        # best augmented cost no later candidate can win
        best = None
        n_assessed = 0
        step = len(order) if exhaustive else max(cfg.chunk, 1)
        for lo in range(0, len(order), step):
            idx = order[lo:lo + step]
            if best is not None and J[idx[0]] > best[0]:
                break
            p, h = assess(idx)
            n_assessed += len(idx)
            Jb = J[idx] + cfg.weights.collision * p.sum(axis=(1, 2))
            j = int(np.argmin(Jb))
            if best is None or Jb[j] < best[0]:
                best = (Jb[j], idx[j])
        return finish(best[1], n_assessed, n_assessed, best[0])

    if cfg.profile == "aggressive" and not exhaustive:
        return finish(order[0], 1, 1, J[order[0]])

    chosen = None
    n_assessed = n_valid = 0
    # chunks double in size so a long walk costs few vectorized calls
    lo, step = 0, len(order) if exhaustive else max(cfg.chunk, 1)
    while lo < len(order):
        idx = order[lo:lo + step]
        p, h = assess(idx)
        _, _, valid = maximin(p, h, thresholds, cfg.p_gate)
        n_assessed += len(idx)
        n_valid += int(valid.sum())
        if chosen is None and valid.any():
            chosen = idx[int(np.argmax(valid))]
            if not exhaustive:
                break
        lo += step
        step *= 2
    if chosen is None:
        return _fallback_result(state, reference, preds, cfg, times, thresholds, C, n_feasible, n_assessed)
    return finish(chosen, n_assessed, n_valid, J[chosen])


def _fallback_result(state, reference, preds, cfg, times, thresholds, C, n_feasible, n_assessed) -> PlanResult:
    traj = fallback_stop(state, reference, cfg)
    p, h = risk_arrays(traj.x[None], traj.y[None], traj.heading[None], traj.v[None], preds, cfg.box, cfg.harm)
    traj.report = _report(p[0], h[0], thresholds, times, preds.ids, cfg.p_gate)
    return PlanResult(traj, -1, C, n_feasible, n_assessed, 0)
