"""Pedestrian records, as single agents and as a struct-of-arrays crowd."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class Pedestrian:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    desired_speed: float
    goal_index: int
    step_width: float
    radius: float = 0.25
    arrived: bool = False

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(2)
        if not 0.3 <= self.desired_speed <= 3.0:
            raise ValueError(f"desired_speed {self.desired_speed} outside [0.3, 3.0]")
        if not 0.0 < self.radius <= 0.5:
            raise ValueError(f"radius {self.radius} outside (0, 0.5]")
        if self.step_width <= 0:
            raise ValueError("step_width must be positive")

    def same_state(self, other: "Pedestrian") -> bool:
        return (self.id == other.id and self.goal_index == other.goal_index
                and self.arrived == other.arrived
                and self.position.tobytes() == other.position.tobytes()
                and self.velocity.tobytes() == other.velocity.tobytes()
                and self.desired_speed == other.desired_speed
                and self.step_width == other.step_width
                and self.radius == other.radius)


@dataclass(eq=False)
class Crowd:
    """All pedestrians of a world as parallel arrays (row i is one agent)."""

    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    desired_speed: np.ndarray
    goal_index: np.ndarray
    step_width: np.ndarray
    radius: np.ndarray
    arrived: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.arrived is None:
            self.arrived = np.zeros(len(self.ids), dtype=bool)

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def empty(cls) -> "Crowd":
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 2)), np.zeros((0, 2)),
                   np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))

    @classmethod
    def from_pedestrians(cls, peds) -> "Crowd":
        peds = list(peds)
        if not peds:
            return cls.empty()
        return cls(
            ids=np.array([p.id for p in peds], dtype=np.int64),
            positions=np.array([p.position for p in peds], dtype=float),
            velocities=np.array([p.velocity for p in peds], dtype=float),
            desired_speed=np.array([p.desired_speed for p in peds], dtype=float),
            goal_index=np.array([p.goal_index for p in peds], dtype=np.int64),
            step_width=np.array([p.step_width for p in peds], dtype=float),
            radius=np.array([p.radius for p in peds], dtype=float),
            arrived=np.array([p.arrived for p in peds], dtype=bool),
        )

    def to_pedestrians(self) -> list[Pedestrian]:
        return [
            Pedestrian(int(self.ids[i]), self.positions[i].copy(), self.velocities[i].copy(),
                       float(self.desired_speed[i]), int(self.goal_index[i]),
                       float(self.step_width[i]), float(self.radius[i]), bool(self.arrived[i]))
            for i in range(len(self))
        ]

    def copy(self) -> "Crowd":
        return Crowd(self.ids.copy(), self.positions.copy(), self.velocities.copy(),
                     self.desired_speed.copy(), self.goal_index.copy(), self.step_width.copy(),
                     self.radius.copy(), self.arrived.copy())

    def extend(self, other: "Crowd") -> "Crowd":
        return Crowd(*(np.concatenate([getattr(self, f), getattr(other, f)])
                       for f in ("ids", "positions", "velocities", "desired_speed", "goal_index",
                                 "step_width", "radius", "arrived")))
