"""World model: scenario documents, cost-grid rasterization and crowd spawning."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agents import Pedestrian
from .geometry import (is_simple, points_in_polygon, polygon_centroid, signed_area,
                       closest_on_segments)

REGION_KINDS = ("road", "sidewalk", "crosswalk", "goal")
TOP_LEVEL_KEYS = {"regions", "lanes", "goals", "ego", "obstacles", "bounds"}
OPTIONAL_KEYS = {"name", "pedestrians"}

Point = tuple[float, float]
PolygonT = tuple[Point, ...]


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario documents."""


@dataclass(frozen=True)
class Region:
    id: str
    kind: str
    polygon: PolygonT

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.polygon, dtype=float)


@dataclass(frozen=True)
class Lane:
    id: str
    centerline: tuple[Point, ...]
    width: float = 3.5
    successors: tuple[str, ...] = ()


@dataclass(frozen=True)
class EgoSpec:
    x: float
    y: float
    heading: float
    speed: float
    goal: PolygonT
    lane: str | None = None
    length: float = 4.5
    width: float = 1.8
    mass: float = 1500.0
    desired_speed: float = 5.5


@dataclass(frozen=True)
class ObstacleSpec:
    id: str
    x: float
    y: float
    heading: float
    speed: float
    mass: float = 1500.0
    length: float = 4.5
    width: float = 1.8
    lane: str | None = None


@dataclass(frozen=True)
class PedestrianSpec:
    """A scripted pedestrian placed explicitly by the document."""

    x: float
    y: float
    goal: int
    desired_speed: float = 1.3
    vx: float = 0.0
    vy: float = 0.0


@dataclass(frozen=True)
class Bounds:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def area(self) -> float:
        return max(self.xmax - self.xmin, 0.0) * max(self.ymax - self.ymin, 0.0)

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass(frozen=True)
class Scenario:
    regions: tuple[Region, ...]
    lanes: tuple[Lane, ...]
    goals: tuple[Point, ...]
    ego: EgoSpec
    obstacles: tuple[ObstacleSpec, ...]
    bounds: Bounds
    pedestrians: tuple[PedestrianSpec, ...] = ()
    name: str = "scenario"

    def regions_of(self, kind: str) -> list[Region]:
        return [r for r in self.regions if r.kind == kind]

    def lane(self, lane_id: str) -> Lane:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(lane_id)


# ---------------------------------------------------------------------------
# document I/O


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ScenarioError(f"{where}: value must be finite")
    return v


def _point(value, where: str) -> Point:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{where}: expected [x, y]")
    return (_num(value[0], f"{where}[0]"), _num(value[1], f"{where}[1]"))


def _polygon(value, where: str) -> PolygonT:
    if not isinstance(value, list):
        raise ScenarioError(f"{where}: expected a vertex list")
    pts = tuple(_point(v, f"{where}[{i}]") for i, v in enumerate(value))
    if len(pts) < 3:
        raise ScenarioError(f"{where}: polygon needs at least 3 vertices")
    if not is_simple(pts):
        raise ScenarioError(f"{where}: polygon not simple")
    if signed_area(pts) <= 0:
        raise ScenarioError(f"{where}: polygon not counter-clockwise")
    return pts


def _fields(obj, where: str, required: set[str], optional: set[str]) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    missing = required - obj.keys()
    if missing:
        raise ScenarioError(f"{where}: missing field(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")
    return obj


def scenario_from_dict(doc: dict) -> Scenario:
    _fields(doc, "scenario", TOP_LEVEL_KEYS, OPTIONAL_KEYS)

    b = doc["bounds"]
    if not isinstance(b, list) or len(b) != 4:
        raise ScenarioError("bounds: expected [xmin, ymin, xmax, ymax]")
    bounds = Bounds(*(_num(v, f"bounds[{i}]") for i, v in enumerate(b)))
    if bounds.xmax < bounds.xmin or bounds.ymax < bounds.ymin:
        raise ScenarioError("bounds: max below min")

    regions = []
    seen = set()
    for i, r in enumerate(doc["regions"]):
        w = f"regions[{i}]"
        _fields(r, w, {"id", "kind", "polygon"}, set())
        if r["kind"] not in REGION_KINDS:
            raise ScenarioError(f"{w}.kind: unknown region kind {r['kind']!r}")
        rid = str(r["id"])
        if rid in seen:
            raise ScenarioError(f"{w}.id: duplicate id {rid!r}")
        seen.add(rid)
        regions.append(Region(rid, r["kind"], _polygon(r["polygon"], f"{w}.polygon")))

    lanes = []
    for i, ln in enumerate(doc["lanes"]):
        w = f"lanes[{i}]"
        _fields(ln, w, {"id", "centerline"}, {"width", "successors"})
        cl = tuple(_point(v, f"{w}.centerline[{j}]") for j, v in enumerate(ln["centerline"]))
        if len(cl) < 2:
            raise ScenarioError(f"{w}.centerline: lane polyline needs at least 2 points")
        width = _num(ln.get("width", 3.5), f"{w}.width")
        if width <= 0:
            raise ScenarioError(f"{w}.width: must be positive")
        lanes.append(Lane(str(ln["id"]), cl, width, tuple(str(s) for s in ln.get("successors", []))))
    lane_ids = {ln.id for ln in lanes}
    for i, ln in enumerate(lanes):
        for s in ln.successors:
            if s not in lane_ids:
                raise ScenarioError(f"lanes[{i}].successors: unknown lane {s!r}")

    goals = tuple(_point(g, f"goals[{i}]") for i, g in enumerate(doc["goals"]))
    sidewalks = [r.array for r in regions if r.kind == "sidewalk"]
    for i, g in enumerate(goals):
        if not any(points_in_polygon(g, sw)[0] for sw in sidewalks):
            raise ScenarioError(f"goals[{i}]: goal not inside any sidewalk region")

    e = _fields(doc["ego"], "ego", {"x", "y", "heading", "speed", "goal"},
                {"lane", "length", "width", "mass", "desired_speed"})
    ego_kwargs = {k: _num(e[k], f"ego.{k}") for k in ("x", "y", "heading", "speed")}
    for k in ("length", "width", "mass", "desired_speed"):
        if k in e:
            ego_kwargs[k] = _num(e[k], f"ego.{k}")
            if ego_kwargs[k] <= 0:
                raise ScenarioError(f"ego.{k}: must be positive")
    if ego_kwargs["speed"] < 0:
        raise ScenarioError("ego.speed: must be nonnegative")
    lane = e.get("lane")
    if lane is not None and lane not in lane_ids:
        raise ScenarioError(f"ego.lane: unknown lane {lane!r}")
    ego = EgoSpec(goal=_polygon(e["goal"], "ego.goal"), lane=lane, **ego_kwargs)
    if not bounds.contains(ego.x, ego.y):
        raise ScenarioError("ego: start position outside bounds")

    obstacles = []
    for i, o in enumerate(doc["obstacles"]):
        w = f"obstacles[{i}]"
        _fields(o, w, {"id", "x", "y", "heading", "speed"}, {"mass", "length", "width", "lane"})
        kw = {k: _num(o[k], f"{w}.{k}") for k in ("x", "y", "heading", "speed")}
        for k in ("mass", "length", "width"):
            if k in o:
                kw[k] = _num(o[k], f"{w}.{k}")
                if kw[k] <= 0:
                    raise ScenarioError(f"{w}.{k}: must be positive")
        if o.get("lane") is not None and o["lane"] not in lane_ids:
            raise ScenarioError(f"{w}.lane: unknown lane {o['lane']!r}")
        obstacles.append(ObstacleSpec(id=str(o["id"]), lane=o.get("lane"), **kw))

    peds = []
    for i, p in enumerate(doc.get("pedestrians", [])):
        w = f"pedestrians[{i}]"
        _fields(p, w, {"x", "y", "goal"}, {"desired_speed", "vx", "vy"})
        goal = p["goal"]
        if not isinstance(goal, int) or not 0 <= goal < len(goals):
            raise ScenarioError(f"{w}.goal: not a valid goal index")
        kw = {k: _num(p[k], f"{w}.{k}") for k in ("x", "y", "desired_speed", "vx", "vy") if k in p}
        peds.append(PedestrianSpec(goal=goal, **kw))

    return Scenario(tuple(regions), tuple(lanes), goals, ego, tuple(obstacles), bounds,
                    tuple(peds), str(doc.get("name", "scenario")))


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document (JSON text)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def read_scenario(path) -> Scenario:
    return load_scenario(Path(path).read_text(encoding="utf-8"))


def scenario_to_dict(s: Scenario) -> dict:
    def poly(p):
        return [list(v) for v in p]

    ego = asdict(s.ego)
    ego["goal"] = poly(s.ego.goal)
    doc = {
        "name": s.name,
        "bounds": [s.bounds.xmin, s.bounds.ymin, s.bounds.xmax, s.bounds.ymax],
        "regions": [{"id": r.id, "kind": r.kind, "polygon": poly(r.polygon)} for r in s.regions],
        "lanes": [{"id": ln.id, "centerline": poly(ln.centerline), "width": ln.width,
                   "successors": list(ln.successors)} for ln in s.lanes],
        "goals": [list(g) for g in s.goals],
        "ego": ego,
        "obstacles": [asdict(o) for o in s.obstacles],
    }
    if s.pedestrians:
        doc["pedestrians"] = [asdict(p) for p in s.pedestrians]
    return doc


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=1)


def bundled_scenario(name: str) -> Scenario:
    """Load one of the fixtures shipped in ``pedrisk/data``."""
    path = Path(__file__).parent / "data" / f"{name}.json"
    return read_scenario(path)


# ---------------------------------------------------------------------------
# rasterization


@dataclass(frozen=True)
class RegionCosts:
    road: float = 50.0
    crosswalk: float = 20.0
    sidewalk: float = 10.0

    def __post_init__(self):
        if not self.road > self.crosswalk > self.sidewalk > 0:
            raise ValueError("region costs must satisfy road > crosswalk > sidewalk > 0")


# class codes stored in CostGrid.kind
OUTSIDE, ROAD, SIDEWALK, CROSSWALK = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class CostGrid:
    """Row-major grid: ``cost[iy, ix]`` covers the cell centered at
    ``origin + ((ix + 0.5) * cell_size, (iy + 0.5) * cell_size)``."""

    origin: tuple[float, float]
    cell_size: float
    width: int
    height: int
    cost: np.ndarray
    traversable: np.ndarray
    kind: np.ndarray

    def centers(self) -> np.ndarray:
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def cell_center(self, ix: int, iy: int) -> np.ndarray:
        return np.array([self.origin[0] + (ix + 0.5) * self.cell_size,
                         self.origin[1] + (iy + 0.5) * self.cell_size])

    def cell_of(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer cell indices ``(ix, iy)`` and an in-bounds mask."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        ix = np.floor((p[:, 0] - self.origin[0]) / self.cell_size).astype(np.int64)
        iy = np.floor((p[:, 1] - self.origin[1]) / self.cell_size).astype(np.int64)
        inside = (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)
        return ix, iy, inside

    def header(self) -> dict:
        return {"origin": list(self.origin), "cell_size": self.cell_size,
                "width": self.width, "height": self.height}

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True).encode()
        return (b"PEDRISK-GRID 1\n" + head + b"\n"
                + np.ascontiguousarray(self.cost, dtype="<f8").tobytes()
                + np.ascontiguousarray(self.kind, dtype="u1").tobytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "CostGrid":
        magic, rest = data.split(b"\n", 1)
        if magic != b"PEDRISK-GRID 1":
            raise ValueError("not a grid file")
        head, body = rest.split(b"\n", 1)
        h = json.loads(head)
        n = h["width"] * h["height"]
        cost = np.frombuffer(body[:8 * n], dtype="<f8").reshape(h["height"], h["width"]).copy()
        kind = np.frombuffer(body[8 * n:9 * n], dtype="u1").reshape(h["height"], h["width"]).copy()
        return cls(tuple(h["origin"]), h["cell_size"], h["width"], h["height"], cost,
                   kind != OUTSIDE, kind)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def grid_from_kinds(kind: np.ndarray, cell_size: float = 1.0, origin=(0.0, 0.0),
                    costs: RegionCosts = RegionCosts()) -> CostGrid:
    """Build a grid directly from a class-code array (used by tests and tools)."""
    kind = np.asarray(kind, dtype=np.uint8)
    table = np.array([np.inf, costs.road, costs.sidewalk, costs.crosswalk])
    cost = table[kind]
    return CostGrid(tuple(float(v) for v in origin), float(cell_size), kind.shape[1], kind.shape[0],
                    cost, kind != OUTSIDE, kind)


def rasterize(scenario: Scenario, cell_size: float = 1.0,
              costs: RegionCosts = RegionCosts()) -> CostGrid:
    """Classify each cell by the region covering its center.

    Overlaps resolve as crosswalk over sidewalk over road; uncovered cells
    are non-traversable and carry infinite cost.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    b = scenario.bounds
    if b.area <= 0:
        raise ValueError("degenerate scenario: zero-area bounds")
    width = max(1, int(math.ceil((b.xmax - b.xmin) / cell_size - 1e-9)))
    height = max(1, int(math.ceil((b.ymax - b.ymin) / cell_size - 1e-9)))
    xs = b.xmin + (np.arange(width) + 0.5) * cell_size
    ys = b.ymin + (np.arange(height) + 0.5) * cell_size
    gx, gy = np.meshgrid(xs, ys)
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    kind = np.zeros(width * height, dtype=np.uint8)
    for code, name in ((ROAD, "road"), (SIDEWALK, "sidewalk"), (CROSSWALK, "crosswalk")):
        for region in scenario.regions_of(name):
            kind[points_in_polygon(centers, region.array)] = code
    return grid_from_kinds(kind.reshape(height, width), cell_size, (b.xmin, b.ymin), costs)


def write_grid(grid: CostGrid, path) -> None:
    Path(path).write_bytes(grid.to_bytes())


# ---------------------------------------------------------------------------
# spawning


@dataclass(frozen=True)
class SpawnConfig:
    mean_cluster_spacing: float = 6.0
    mean_cluster_size: float = 2.0
    position_stddev: float = 0.8
    desired_speed_mean: float = 1.3
    desired_speed_stddev: float = 0.2
    seed: int = 0
    radius: float = 0.25
    step_time: float = 0.1

    def __post_init__(self):
        for name in ("mean_cluster_spacing", "position_stddev", "desired_speed_mean",
                     "desired_speed_stddev", "radius", "step_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mean_cluster_size < 1:
            raise ValueError("mean_cluster_size must be at least 1")


MIN_DESIRED_SPEED, MAX_DESIRED_SPEED = 0.3, 3.0


def sidewalk_centerline(poly) -> tuple[np.ndarray, np.ndarray]:
    """Midline of an elongated polygon: through the centroid along its longest edge."""
    p = np.asarray(poly, dtype=float)
    edges = np.roll(p, -1, axis=0) - p
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    axis = edges[int(np.argmax(lengths))] / lengths.max()
    c = polygon_centroid(p)
    proj = (p - c) @ axis
    return c + proj.min() * axis, c + proj.max() * axis


@dataclass
class SpawnDraw:
    """Raw cluster draws before sidewalk rejection."""

    anchors: np.ndarray          # (C, 2)
    sizes: np.ndarray            # (C,)
    positions: np.ndarray        # (P, 2) candidate member positions
    polygon_index: np.ndarray    # (P,) sidewalk each candidate belongs to
    kept: np.ndarray             # (P,) inside its sidewalk polygon
    speeds: np.ndarray           # (P,) clamped desired speeds

    @property
    def rejection_rate(self) -> float:
        return float(1.0 - self.kept.mean()) if len(self.kept) else 0.0


def draw_population(scenario: Scenario, cfg: SpawnConfig) -> SpawnDraw:
    sidewalks = scenario.regions_of("sidewalk")
    rng = np.random.default_rng(cfg.seed)
    if not sidewalks:
        z = np.zeros((0, 2))
        return SpawnDraw(z, np.zeros(0, int), z, np.zeros(0, int), np.zeros(0, bool), np.zeros(0))
    lines = [sidewalk_centerline(r.array) for r in sidewalks]
    lengths = np.array([np.hypot(*(b - a)) for a, b in lines])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    total = cum[-1]

    offsets = []
    s = rng.exponential(cfg.mean_cluster_spacing)
    while s < total:
        offsets.append(s)
        s += rng.exponential(cfg.mean_cluster_spacing)
    offsets = np.array(offsets)
    which = np.clip(np.searchsorted(cum, offsets, side="right") - 1, 0, len(lines) - 1)
    anchors = np.zeros((len(offsets), 2))
    for k, (o, w) in enumerate(zip(offsets, which)):
        a, b = lines[w]
        frac = (o - cum[w]) / lengths[w] if lengths[w] > 0 else 0.0
        anchors[k] = a + frac * (b - a)

    sizes = rng.geometric(1.0 / cfg.mean_cluster_size, size=len(anchors))
    member_anchor = np.repeat(np.arange(len(anchors)), sizes)
    positions = anchors[member_anchor] + rng.normal(0.0, cfg.position_stddev, size=(len(member_anchor), 2))
    speeds = np.clip(rng.normal(cfg.desired_speed_mean, cfg.desired_speed_stddev, size=len(member_anchor)),
                     MIN_DESIRED_SPEED, MAX_DESIRED_SPEED)
    poly_index = which[member_anchor]
    kept = np.zeros(len(positions), dtype=bool)
    for w, region in enumerate(sidewalks):
        m = poly_index == w
        if m.any():
            poly = region.array
            inside = points_in_polygon(positions[m], poly)
            # strict interior: drop points sitting on the boundary
            dist, _, _ = closest_on_segments(positions[m], poly, np.roll(poly, -1, axis=0))
            kept[m] = inside & (dist.min(axis=1) > 1e-9)
    return SpawnDraw(anchors, sizes, positions, poly_index, kept, speeds)


def spawn_pedestrians(scenario: Scenario, cfg: SpawnConfig, first_id: int = 0) -> list[Pedestrian]:
    """Stochastic cluster population along the sidewalks, reproducible by seed."""
    if not scenario.goals:
        return []
    draw = draw_population(scenario, cfg)
    goals = np.asarray(scenario.goals, dtype=float)
    peds = []
    for k, i in enumerate(np.flatnonzero(draw.kept)):
        g = k % len(goals)
        pos = draw.positions[i]
        to_goal = goals[g] - pos
        norm = np.hypot(*to_goal)
        heading = to_goal / norm if norm > 0 else np.zeros(2)
        speed = float(draw.speeds[i])
        peds.append(Pedestrian(first_id + k, pos.copy(), heading * speed, speed, g,
                               step_width=cfg.step_time * speed, radius=cfg.radius))
    return peds


def scripted_pedestrians(scenario: Scenario, radius: float = 0.25, step_time: float = 0.1,
                         first_id: int = 0) -> list[Pedestrian]:
    return [Pedestrian(first_id + i, np.array([p.x, p.y]), np.array([p.vx, p.vy]), p.desired_speed,
                       p.goal, step_width=step_time * p.desired_speed, radius=radius)
            for i, p in enumerate(scenario.pedestrians)]
