"""Synchronous closed-loop simulation: crowd step, prediction, planning, ego update.

Each tick runs, in order: vehicle path prediction, the pedestrian step, the
Gaussian prediction set, planning, the ego/obstacle update, collision checks
and metric accumulation. A run is a pure function of (scenario, config).
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import Crowd
from .config import RunConfig, config_to_dict, with_profile
from .geometry import Polyline, box_disc_overlap, boxes_overlap, point_in_polygon
from .pedsim import VehicleFootprint, step_crowd
from .planner import EgoState, PlanResult, Trajectory, plan
from .policy import PolicyField, cached_policy
from .prediction import (PredictionSet, cv_tracks, match_lane, predict_vehicle_gaussian,
                         predict_vehicle_paths, time_grid)
from .risk import BoxParams
from .scenario import Scenario, rasterize, scenario_to_dict, scripted_pedestrians, spawn_pedestrians

FREEZE_SPEED = 0.1
TRACE_PRED_STEP = 1.0   # prediction time stamped into the trace for rendering, s


@dataclass
class Obstacle:
    id: str
    x: float
    y: float
    heading: float
    speed: float
    mass: float
    length: float
    width: float
    path: Polyline | None = None
    s: float = 0.0

    def advance(self, dt: float) -> None:
        if self.path is None:
            self.x += self.speed * dt * math.cos(self.heading)
            self.y += self.speed * dt * math.sin(self.heading)
            return
        self.s += self.speed * dt
        p = self.path.position(self.s)
        self.x, self.y = float(p[0]), float(p[1])
        self.heading = float(self.path.heading(self.s))


@dataclass
class WorldState:
    tick: int
    time: float
    ego: EgoState
    crowd: Crowd
    obstacles: list
    arrived: bool = False
    collided: bool = False


@dataclass
class Metrics:
    distance: float = 0.0
    v_mean: float = 0.0
    v_min: float = 0.0
    v_max: float = 0.0
    r_mean: float = 0.0
    r_min: float = 0.0
    r_max: float = 0.0
    h_max: float = 0.0
    collisions: int = 0
    freeze_time: float = 0.0
    fallbacks: int = 0
    ticks: int = 0

    COLUMNS = ("distance", "v_mean", "v_min", "v_max", "r_mean", "r_min", "r_max", "h_max",
               "collisions", "freeze_time", "fallbacks", "ticks")

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in self.COLUMNS}


@dataclass
class _Accumulator:
    dt: float
    distance: float = 0.0
    speeds: list = field(default_factory=list)
    risks: list = field(default_factory=list)
    harms: list = field(default_factory=list)
    collisions: int = 0
    fallbacks: int = 0

    def metrics(self) -> Metrics:
        if not self.speeds:
            return Metrics()
        v = np.asarray(self.speeds)
        r = np.asarray(self.risks)
        return Metrics(self.distance, float(v.mean()), float(v.min()), float(v.max()),
                       float(r.mean()), float(r.min()), float(r.max()), float(max(self.harms)),
                       self.collisions, float(np.count_nonzero(v < FREEZE_SPEED)) * self.dt,
                       self.fallbacks, len(v))


@dataclass(frozen=True)
class PlanSummary:
    """Risk summary of the trajectory selected at one tick."""

    r_star: float
    h_star: float
    valid: bool
    kind: str


@dataclass
class RunResult:
    trace: list
    metrics: Metrics
    termination: str
    plans: list = field(default_factory=list, repr=False)
    selected: list = field(default_factory=list, repr=False)

    def trace_text(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n" for rec in self.trace)


# ---------------------------------------------------------------------------
# setup


class Environment:
    """Static per-scenario data shared by every run: grid, policies, references."""

    def __init__(self, scenario: Scenario, cfg: RunConfig, cache_dir=None):
        self.scenario = scenario
        self.grid = rasterize(scenario, cfg.cell_size, cfg.region_costs)
        self.fields: list[PolicyField] = []
        self.cache_hits = 0
        for g in scenario.goals:
            f, hit = cached_policy(self.grid, g, cfg.policy_actions, None, cache_dir)
            self.fields.append(f)
            self.cache_hits += int(hit)
        ego = scenario.ego
        if ego.lane is not None:
            lane = scenario.lane(ego.lane)
        else:
            m = match_lane((ego.x, ego.y), ego.heading, list(scenario.lanes))
            if m is None:
                raise ValueError("ego: start pose not on any lane")
            lane = m[0]
        self.lane = lane
        self.reference = Polyline(lane.centerline)
        self.goal = np.asarray(ego.goal, dtype=float)


def initial_world(env: Environment, cfg: RunConfig) -> WorldState:
    sc = env.scenario
    e = sc.ego
    ego = EgoState.on_reference(e.x, e.y, e.heading, e.speed, env.reference)
    peds = scripted_pedestrians(sc, cfg.spawn.radius, cfg.spawn.step_time)
    if cfg.spawn_random:
        spawn = dataclasses.replace(cfg.spawn, seed=cfg.seed)
        peds += spawn_pedestrians(sc, spawn, first_id=len(peds))
    obstacles = []
    for o in sc.obstacles:
        path, s = None, 0.0
        lane = sc.lane(o.lane) if o.lane is not None else None
        if lane is None:
            m = match_lane((o.x, o.y), o.heading, list(sc.lanes))
            lane = m[0] if m else None
        if lane is not None:
            path = Polyline(lane.centerline)
            s, _ = path.project((o.x, o.y))
        obstacles.append(Obstacle(o.id, o.x, o.y, o.heading, o.speed, o.mass, o.length, o.width, path, s))
    return WorldState(0, 0.0, ego, Crowd.from_pedestrians(peds), obstacles)


def planner_config(env: Environment, cfg: RunConfig):
    e = env.scenario.ego
    box = dataclasses.replace(cfg.planner.box, half_length=e.length / 2, half_width=e.width / 2, mass=e.mass)
    return dataclasses.replace(cfg.planner, box=box, desired_speed=e.desired_speed, lane_width=env.lane.width,
                               profile=cfg.profile)


# ---------------------------------------------------------------------------
# per-tick pieces


def _body_paths(x, y, heading, speed, length, lanes) -> list[np.ndarray]:
    """Predicted paths prefixed by the vehicle body, rear bumper to front bumper.

    Pedestrians are repelled by the distance to these polylines, so a
    stopped vehicle still repels along its whole length.
    """
    c, s = math.cos(heading), math.sin(heading)
    rear = np.array([x - 0.5 * length * c, y - 0.5 * length * s])
    front = np.array([x + 0.5 * length * c, y + 0.5 * length * s])
    out = []
    for p in predict_vehicle_paths(front, heading, speed, lanes):
        out.append(np.concatenate([rear[None], p]) if np.hypot(*(p[0] - rear)) > 0 else p)
    return out


def vehicle_footprints(world: WorldState, env: Environment) -> list[VehicleFootprint]:
    lanes = list(env.scenario.lanes)
    e = world.ego
    out = [VehicleFootprint((e.x, e.y), e.heading, e.speed,
                            _body_paths(e.x, e.y, e.heading, e.speed, env.scenario.ego.length, lanes))]
    for o in world.obstacles:
        out.append(VehicleFootprint((o.x, o.y), o.heading, o.speed,
                                    _body_paths(o.x, o.y, o.heading, o.speed, o.length, lanes)))
    return out


def build_predictions(world: WorldState, env: Environment, cfg: RunConfig) -> PredictionSet:
    pc = cfg.prediction
    times = time_grid(pc.horizon, cfg.dt)
    preds = PredictionSet(times)
    crowd = world.crowd
    ego = np.array([world.ego.x, world.ego.y])
    if len(crowd):
        d = np.hypot(*(crowd.positions - ego).T)
        sel = np.flatnonzero(d <= pc.perception_radius)
        if len(sel):
            means, covs = cv_tracks(crowd.positions[sel], crowd.velocities[sel], times, pc.sigma0, pc.ped_q)
            vel = np.repeat(crowd.velocities[sel][:, None, :], len(times), axis=1)
            preds.ids = [int(i) for i in crowd.ids[sel]]
            preds.kinds = ["pedestrian"] * len(sel)
            preds.masses = np.full(len(sel), pc.ped_mass)
            preds.means, preds.covs, preds.velocities = means, covs, vel
    lanes = list(env.scenario.lanes)
    for o in world.obstacles:
        if math.hypot(o.x - ego[0], o.y - ego[1]) > pc.perception_radius:
            continue
        states, vel = predict_vehicle_gaussian((o.x, o.y), o.heading, o.speed, lanes, pc.horizon, cfg.dt,
                                               pc.veh_q, pc.sigma0)
        preds.add(o.id, "vehicle", o.mass, np.array([g.mean for g in states]),
                  np.array([g.cov for g in states]), vel)
    return preds


def check_collisions(world: WorldState, env: Environment) -> list:
    e = env.scenario.ego
    hits = []
    crowd = world.crowd
    if len(crowd):
        over = box_disc_overlap((world.ego.x, world.ego.y), world.ego.heading, e.length / 2, e.width / 2,
                                crowd.positions, crowd.radius)
        hits += [("pedestrian", int(i)) for i in crowd.ids[over]]
    for o in world.obstacles:
        if boxes_overlap((world.ego.x, world.ego.y), world.ego.heading, e.length / 2, e.width / 2,
                         (o.x, o.y), o.heading, o.length / 2, o.width / 2):
            hits.append(("vehicle", o.id))
    return hits


def _r(x: float) -> float:
    return float(x)


def tick_record(world: WorldState, result: PlanResult, preds: PredictionSet, hits: list) -> dict:
    traj = result.trajectory
    rep = traj.report
    k = min(int(round(TRACE_PRED_STEP / preds.dt)) if len(preds.times) > 1 else 0, len(preds.times) - 1)
    crowd = world.crowd
    return {
        "type": "tick",
        "tick": world.tick,
        "t": _r(world.time),
        "ego": {"x": _r(world.ego.x), "y": _r(world.ego.y), "heading": _r(world.ego.heading),
                "v": _r(world.ego.speed), "a": _r(world.ego.accel)},
        "peds": [[int(crowd.ids[i]), _r(crowd.positions[i, 0]), _r(crowd.positions[i, 1]),
                  _r(crowd.velocities[i, 0]), _r(crowd.velocities[i, 1]), bool(crowd.arrived[i])]
                 for i in range(len(crowd))],
        "obstacles": [[o.id, _r(o.x), _r(o.y), _r(o.heading), _r(o.speed)] for o in world.obstacles],
        "predictions": {"t": _r(preds.times[k]) if len(preds.times) else 0.0,
                        "agents": [[preds.ids[i], _r(preds.means[i, k, 0]), _r(preds.means[i, k, 1]),
                                    _r(preds.covs[i, k, 0, 0]), _r(preds.covs[i, k, 0, 1]),
                                    _r(preds.covs[i, k, 1, 1])] for i in range(len(preds))]},
        "plan": {"kind": traj.kind, "T": _r(traj.T), "d_end": _r(traj.d_end), "v_end": _r(traj.v_end),
                 "cost": _r(traj.cost), "r_star": _r(rep.max_risk), "h_star": _r(rep.max_harm),
                 "valid": bool(rep.valid),
                 "path": [[_r(x), _r(y)] for x, y in zip(traj.x[::5], traj.y[::5])]},
        "candidates": result.stats,
        "risk_rows": [[_r(t), oid, _r(p), _r(h), _r(r)] for t, oid, p, h, r in rep.rows(1e-6)],
        "collisions": [[kind, oid] for kind, oid in hits],
        "collided": bool(world.collided),
        "arrived": bool(world.arrived),
    }


def step(world: WorldState, env: Environment, cfg: RunConfig, pcfg=None):
    """Advance the world by one tick; returns ``(world, plan_result, preds, hits)``."""
    if world.collided or world.arrived:
        raise ValueError("world already terminated")
    pcfg = pcfg or planner_config(env, cfg)
    vehicles = vehicle_footprints(world, env)
    if cfg.peds_first:
        crowd = step_crowd(world.crowd, vehicles, env.fields, cfg.forces, cfg.dt)
        staged = dataclasses.replace(world, crowd=crowd)
    else:
        staged = world
    preds = build_predictions(staged, env, cfg)
    result = plan(world.ego, env.reference, preds, pcfg, goal=env.goal)
    nxt_ego = result.trajectory.state_at(1, env.reference)
    if not cfg.peds_first:
        crowd = step_crowd(world.crowd, vehicles, env.fields, cfg.forces, cfg.dt)
    obstacles = [dataclasses.replace(o) for o in world.obstacles]
    for o in obstacles:
        o.advance(cfg.dt)
    nxt = WorldState(world.tick + 1, (world.tick + 1) * cfg.dt, nxt_ego, crowd, obstacles,
                     world.arrived, world.collided)
    hits = check_collisions(nxt, env)
    if hits:
        nxt.collided = True
    if cfg.stop_at_goal and point_in_polygon((nxt_ego.x, nxt_ego.y), env.goal):
        nxt.arrived = True
    return nxt, result, preds, hits


def run(scenario: Scenario, cfg: RunConfig, env: Environment | None = None, cache_dir=None,
        record_trace: bool = True, keep_selected: bool = False) -> RunResult:
    """Run until the goal, a collision or ``max_ticks``.

    ``record_trace=False`` keeps only the header and summary records;
    ``keep_selected`` retains every selected trajectory with its full report.
    """
    env = env or Environment(scenario, cfg, cache_dir)
    pcfg = planner_config(env, cfg)
    world = initial_world(env, cfg)
    acc = _Accumulator(cfg.dt)
    header = {"type": "header", "scenario": scenario_to_dict(scenario), "config": config_to_dict(cfg),
              "seed": cfg.seed, "pedestrians": len(world.crowd)}
    trace = [header]
    selected, plans = [], []
    termination = "max_ticks"
    if cfg.max_ticks == 0:
        trace.append({"type": "summary", "termination": termination, "metrics": Metrics().as_dict()})
        return RunResult(trace, Metrics(), termination, plans, selected)
    for _ in range(cfg.max_ticks):
        prev = world.ego
        world, result, preds, hits = step(world, env, cfg, pcfg)
        acc.distance += math.hypot(world.ego.x - prev.x, world.ego.y - prev.y)
        acc.speeds.append(world.ego.speed)
        acc.risks.append(result.trajectory.report.max_risk)
        acc.harms.append(result.trajectory.report.max_harm)
        acc.collisions += len(hits)
        acc.fallbacks += int(result.index < 0)
        rep = result.trajectory.report
        plans.append(PlanSummary(rep.max_risk, rep.max_harm, rep.valid, result.trajectory.kind))
        if keep_selected:
            selected.append(result.trajectory)
        if record_trace:
            trace.append(tick_record(world, result, preds, hits))
        if world.collided:
            termination = "collision"
            break
        if world.arrived:
            termination = "goal"
            break
    metrics = acc.metrics()
    trace.append({"type": "summary", "termination": termination, "metrics": metrics.as_dict()})
    return RunResult(trace, metrics, termination, plans, selected)


# ---------------------------------------------------------------------------
# batches


def derive_seeds(master: int, n: int) -> list[int]:
    """Independent per-run seeds from a master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(n)]


def _run_one(args):
    scenario, cfg, cache_dir = args
    res = run(scenario, cfg, cache_dir=cache_dir, record_trace=False)
    return res.metrics, res.termination, res.plans


def _run_one_env(scenario, cfg, env):
    res = run(scenario, cfg, env=env, record_trace=False)
    return res.metrics, res.termination, res.plans


def batch(scenario: Scenario, cfg: RunConfig, n_seeds: int, profiles=None, jobs: int = 1,
          cache_dir=None) -> dict:
    """Per-profile lists of ``(seed, Metrics, termination, plans)`` over shared seeds.

    Every profile runs on the same derived seeds so results can be paired.
    """
    profiles = list(profiles or [cfg.profile])
    seeds = derive_seeds(cfg.seed, n_seeds) if n_seeds > 1 else [cfg.seed]
    out = {}
    env = Environment(scenario, cfg, cache_dir)
    for prof in profiles:
        pc = with_profile(cfg, prof)
        cfgs = [dataclasses.replace(pc, seed=s) for s in seeds]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                res = list(ex.map(_run_one, [(scenario, c, cache_dir) for c in cfgs]))
        else:
            res = [_run_one_env(scenario, c, env) for c in cfgs]
        out[prof] = [(s, m, t, p) for s, (m, t, p) in zip(seeds, res)]
    return out


SUMMARY_COLUMNS = ("profile", "runs", "distance", "risk_mean", "risk_min", "risk_max", "v_mean", "v_min",
                   "v_max", "collisions", "freeze_time")


def summarize(results: dict) -> list[dict]:
    """One row per profile with the aggregate metric columns."""
    rows = []
    for prof, runs in results.items():
        ms = [r[1] for r in runs]
        rows.append({
            "profile": prof,
            "runs": len(ms),
            "distance": float(np.mean([m.distance for m in ms])),
            "risk_mean": float(np.mean([m.r_mean for m in ms])),
            "risk_min": float(np.min([m.r_min for m in ms])),
            "risk_max": float(np.max([m.r_max for m in ms])),
            "v_mean": float(np.mean([m.v_mean for m in ms])),
            "v_min": float(np.min([m.v_min for m in ms])),
            "v_max": float(np.max([m.v_max for m in ms])),
            "collisions": int(sum(m.collisions for m in ms)),
            "freeze_time": float(np.mean([m.freeze_time for m in ms])),
        })
    return rows


def summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    buf.write(",".join(SUMMARY_COLUMNS) + "\n")
    for r in rows:
        buf.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in SUMMARY_COLUMNS) + "\n")
    return buf.getvalue()


def metrics_csv(runs: list) -> str:
    """Per-run metrics table: seed, termination and every Metrics column."""
    buf = io.StringIO()
    buf.write("seed,termination," + ",".join(Metrics.COLUMNS) + "\n")
    for seed, m, term, *_ in runs:
        d = m.as_dict()
        buf.write(f"{seed},{term}," + ",".join(repr(d[c]) if isinstance(d[c], float) else str(d[c])
                                               for c in Metrics.COLUMNS) + "\n")
    return buf.getvalue()


def atomic_write(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        data = data.encode()
    tmp.write_bytes(data)
    os.replace(tmp, path)
