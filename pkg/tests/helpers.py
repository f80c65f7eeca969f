"""Small constructors shared by planner, risk and simloop tests."""

import numpy as np

from pedrisk.planner import Trajectory
from pedrisk.prediction import PredictionSet


def straight_trajectory(speed=5.0, steps=40, dt=0.1, y=0.0):
    t = np.arange(steps + 1) * dt
    z = np.zeros_like(t)
    return Trajectory(t, speed * t, z + y, z.copy(), z + speed, z.copy(), z.copy(), speed * t, z + y,
                      z.copy(), z.copy(), steps * dt, y, speed)


def static_predictions(points, sigma=0.05, steps=40, dt=0.1, mass=75.0, velocity=(0.0, 0.0)):
    times = np.arange(steps + 1) * dt
    preds = PredictionSet(times)
    for i, p in enumerate(points):
        means = np.tile(np.asarray(p, dtype=float), (len(times), 1))
        covs = np.tile(np.eye(2) * sigma ** 2, (len(times), 1, 1))
        vel = np.tile(np.asarray(velocity, dtype=float), (len(times), 1))
        preds.add(i, "pedestrian", mass, means, covs, vel)
    return preds
