"""Offline walking policies: value iteration over a cost grid toward one goal."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .scenario import CostGrid


@dataclass(frozen=True)
class ActionSet:
    offsets: tuple[tuple[int, int], ...]

    @property
    def n(self) -> int:
        return len(self.offsets)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.offsets, dtype=np.int64)

    @property
    def lengths(self) -> np.ndarray:
        a = self.array
        return np.hypot(a[:, 0], a[:, 1])

    @property
    def units(self) -> np.ndarray:
        return self.array / self.lengths[:, None]


def _angle(dx: int, dy: int) -> float:
    return math.atan2(dy, dx) % (2 * math.pi)


def build_action_set(n: int = 16) -> ActionSet:
    """The ``n`` offsets closest to the origin with pairwise distinct angles.

    Offsets are ordered by length, then counter-clockwise angle from +x. Only
    the shortest offset along each direction is eligible.
    """
    if n < 4:
        raise ValueError("need at least 4 actions")
    radius = 1
    while True:
        cands = [(dx, dy) for dx in range(-radius, radius + 1) for dy in range(-radius, radius + 1)
                 if (dx, dy) != (0, 0) and math.gcd(abs(dx), abs(dy)) == 1]
        cands.sort(key=lambda o: (o[0] ** 2 + o[1] ** 2, _angle(*o)))
        # the first n are final once the n-th is no farther than the search radius
        if len(cands) >= n and cands[n - 1][0] ** 2 + cands[n - 1][1] ** 2 <= radius ** 2:
            return ActionSet(tuple(cands[:n]))
        radius += 1


def action_footprint(dx: int, dy: int, samples: int = 257) -> list[tuple[int, int]]:
    """Cells (relative to the source) whose interior the segment to (dx, dy) crosses.

    Sampling never lands exactly on a cell corner, so diagonal moves do not
    count the two corner-touching cells.
    """
    t = (np.arange(1, samples) - 0.5) / (samples - 1)
    t = np.concatenate([t, [1.0]])
    cx = np.floor(t * dx + 0.5).astype(int)
    cy = np.floor(t * dy + 0.5).astype(int)
    cells = []
    for c in zip(cx.tolist(), cy.tolist()):
        if c != (0, 0) and c not in cells:
            cells.append(c)
    return cells


@dataclass(eq=False)
class PolicyField:
    goal: tuple[float, float]
    goal_cell: tuple[int, int]           # (ix, iy)
    cost_to_go: np.ndarray               # (H, W), inf where unreachable
    best_action: np.ndarray              # (H, W) int16, -1 where none
    actions: ActionSet
    grid: CostGrid
    iterations: int = 0
    directions: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.directions is None:
            self.directions = _direction_table(self)

    def directions_at(self, points) -> np.ndarray:
        """Vectorized :func:`desired_direction`; out-of-bounds points clamp to the edge."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        ix, iy, _ = self.grid.cell_of(p)
        ix = np.clip(ix, 0, self.grid.width - 1)
        iy = np.clip(iy, 0, self.grid.height - 1)
        out = self.directions[iy, ix].copy()
        at_goal = (ix == self.goal_cell[0]) & (iy == self.goal_cell[1])
        if at_goal.any():
            v = np.asarray(self.goal) - p[at_goal]
            n = np.hypot(v[:, 0], v[:, 1])
            safe = np.where(n > 0, n, 1.0)
            out[at_goal] = np.where((n > 0)[:, None], v / safe[:, None], 0.0)
        return out


def _direction_table(field_: PolicyField) -> np.ndarray:
    units = field_.actions.units
    ba = field_.best_action
    dirs = np.zeros(ba.shape + (2,))
    has = ba >= 0
    dirs[has] = units[ba[has]]
    trav = field_.grid.traversable
    if trav.any() and not trav.all():
        # non-traversable cells point at the nearest traversable cell center
        _, (ny, nx) = ndimage.distance_transform_edt(~trav, return_indices=True)
        yy, xx = np.indices(trav.shape)
        v = np.stack([nx - xx, ny - yy], axis=-1).astype(float)
        n = np.hypot(v[..., 0], v[..., 1])
        blocked = ~trav & (n > 0)
        dirs[blocked] = v[blocked] / n[blocked][:, None]
    return dirs


def _transition_tables(grid: CostGrid, actions: ActionSet):
    """Flat target index and step cost for every (action, cell); invalid moves
    point at a sentinel slot and cost inf."""
    H, W = grid.height, grid.width
    trav = grid.traversable
    yy, xx = np.indices((H, W))
    n_cells = H * W
    targets = np.full((actions.n, n_cells), n_cells, dtype=np.int64)
    costs = np.full((actions.n, n_cells), np.inf)
    lengths = actions.lengths * grid.cell_size
    for a, (dx, dy) in enumerate(actions.offsets):
        ok = trav.copy()
        for cx, cy in action_footprint(dx, dy):
            tx, ty = xx + cx, yy + cy
            inb = (tx >= 0) & (tx < W) & (ty >= 0) & (ty < H)
            cell_ok = np.zeros((H, W), dtype=bool)
            cell_ok[inb] = trav[ty[inb], tx[inb]]
            ok &= cell_ok
        flat_target = ((yy + dy) * W + (xx + dx)).ravel()
        okf = ok.ravel()
        targets[a, okf] = flat_target[okf]
        costs[a, okf] = (grid.cost.ravel() * lengths[a])[okf]
    return targets, costs


def value_iteration(grid: CostGrid, goal, actions: ActionSet | None = None,
                    tol: float | None = None, max_iter: int | None = None) -> PolicyField:
    """Cost-to-go and greedy action for every cell, deterministic transitions.

    Step cost is the metric transition length times the state cost of the
    source cell. Moves landing in, or passing through, a non-traversable cell
    are forbidden. Updates are synchronous Bellman sweeps over all cells; the
    sweep stops once the largest value decrease is below ``tol`` (default
    ``1e-6 * min state cost``) or after ``max_iter`` sweeps (default
    ``10 * (width + height)``).
    """
    actions = actions or build_action_set(16)
    goal = (float(goal[0]), float(goal[1]))
    ix, iy, inside = grid.cell_of(goal)
    if not inside[0]:
        raise ValueError("goal outside grid")
    gx, gy = int(ix[0]), int(iy[0])
    if not grid.traversable[gy, gx]:
        raise ValueError("goal cell is not traversable")
    finite = grid.cost[grid.traversable]
    if tol is None:
        tol = 1e-6 * float(finite.min())
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 10 * (grid.width + grid.height)

    H, W = grid.height, grid.width
    targets, step_cost = _transition_tables(grid, actions)
    goal_flat = gy * W + gx
    V = np.full(H * W + 1, np.inf)
    V[goal_flat] = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        Q = step_cost + V[targets]
        Vnew = Q.min(axis=0)
        Vnew[goal_flat] = 0.0
        old = V[:-1]
        newly = np.isfinite(Vnew) & ~np.isfinite(old)
        both = np.isfinite(Vnew) & np.isfinite(old)
        delta = float(np.max(old[both] - Vnew[both], initial=0.0))
        V[:-1] = np.minimum(old, Vnew)
        if not newly.any() and delta < tol:
            break

    Q = step_cost + V[targets]
    best = _tie_broken_argmin(Q, grid, goal, actions)
    best[goal_flat] = -1
    cost = V[:-1].reshape(H, W).copy()
    best = best.reshape(H, W).astype(np.int16)
    best[~np.isfinite(cost)] = -1
    return PolicyField(goal, (gx, gy), cost, best, actions, grid, it)


def _tie_broken_argmin(Q: np.ndarray, grid: CostGrid, goal, actions: ActionSet) -> np.ndarray:
    """Argmin over actions; near-equal values go to the action most aligned
    with the straight line to the goal."""
    qmin = Q.min(axis=0)
    tie = Q <= qmin + 1e-9 * np.maximum(np.abs(qmin), 1.0)
    centers = grid.centers().reshape(-1, 2)
    to_goal = np.asarray(goal) - centers
    norm = np.hypot(to_goal[:, 0], to_goal[:, 1])
    to_goal = to_goal / np.where(norm > 0, norm, 1.0)[:, None]
    align = actions.units @ to_goal.T          # (A, cells)
    score = np.where(tie & np.isfinite(Q), -align, np.inf)
    best = np.argmin(score, axis=0)
    best[~np.isfinite(qmin)] = -1
    return best


def desired_direction(field_: PolicyField, position) -> np.ndarray:
    """Unit walking direction at a position.

    Inside the goal cell this is the exact direction to the goal point (zero
    when coincident). Non-traversable cells point toward the nearest
    traversable cell; unreachable cells yield zero.
    """
    p = np.asarray(position, dtype=float).reshape(2)
    _, _, inside = field_.grid.cell_of(p)
    if not inside[0]:
        raise ValueError(f"position {p.tolist()} outside the grid")
    return field_.directions_at(p)[0]


def greedy_path(field_: PolicyField, ix: int, iy: int) -> list[tuple[int, int]]:
    """Cell chain obtained by following best actions until the goal cell."""
    path = [(ix, iy)]
    offs = field_.actions.offsets
    limit = field_.grid.width * field_.grid.height
    while (ix, iy) != field_.goal_cell and len(path) <= limit:
        a = int(field_.best_action[iy, ix])
        if a < 0:
            break
        ix, iy = ix + offs[a][0], iy + offs[a][1]
        path.append((ix, iy))
    return path


# ---------------------------------------------------------------------------
# cache

_MAGIC = b"PEDRISK-POLICY 1\n"


def cache_key(grid: CostGrid, goal, n: int, tol: float | None) -> str:
    text = json.dumps({"grid": grid.digest(), "goal": [float(goal[0]), float(goal[1])],
                       "n": n, "tol": tol}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def save_policy(field_: PolicyField, path, tol: float | None = None) -> None:
    header = {"grid_hash": field_.grid.digest(), "goal": list(field_.goal), "n": field_.actions.n,
              "tol": tol, "offsets": [list(o) for o in field_.actions.offsets],
              "goal_cell": list(field_.goal_cell), "iterations": field_.iterations,
              "width": field_.grid.width, "height": field_.grid.height}
    body = (_MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n"
            + np.ascontiguousarray(field_.cost_to_go, dtype="<f8").tobytes()
            + np.ascontiguousarray(field_.best_action, dtype="<i2").tobytes())
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(body)
    tmp.replace(path)


def load_policy(path, grid: CostGrid) -> PolicyField:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path}: not a policy cache file")
    head, body = data[len(_MAGIC):].split(b"\n", 1)
    h = json.loads(head)
    if h["grid_hash"] != grid.digest():
        raise ValueError(f"{path}: cache was built for a different grid")
    n = h["width"] * h["height"]
    cost = np.frombuffer(body[:8 * n], dtype="<f8").reshape(h["height"], h["width"]).copy()
    best = np.frombuffer(body[8 * n:10 * n], dtype="<i2").reshape(h["height"], h["width"]).copy()
    actions = ActionSet(tuple(tuple(o) for o in h["offsets"]))
    return PolicyField(tuple(h["goal"]), tuple(h["goal_cell"]), cost, best, actions, grid,
                       h["iterations"])


def cached_policy(grid: CostGrid, goal, n: int = 16, tol: float | None = None,
                  cache_dir=None) -> tuple[PolicyField, bool]:
    """Return ``(field, hit)``; computes and stores the field on a miss."""
    if cache_dir is not None:
        path = Path(cache_dir) / f"policy_{cache_key(grid, goal, n, tol)}.bin"
        if path.exists():
            return load_policy(path, grid), True
    field_ = value_iteration(grid, goal, build_action_set(n), tol=tol)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_policy(field_, path, tol)
    return field_, False
