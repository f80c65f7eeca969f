"""Independent reference implementations used by the tests."""

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from pedrisk.policy import action_footprint


def dijkstra_cost_to_go(grid, goal_cell, offsets):
    """Cost-to-go by single-source shortest paths on the reversed move graph.

    A move from cell c by (dx, dy) is allowed when every cell it crosses is
    traversable; it costs the source cell's cost times the metric length.
    """
    H, W = grid.height, grid.width
    trav = grid.traversable
    src, dst, w = [], [], []
    for dx, dy in offsets:
        foot = action_footprint(dx, dy)
        length = math.hypot(dx, dy) * grid.cell_size
        for iy in range(H):
            for ix in range(W):
                if not trav[iy, ix]:
                    continue
                ok = True
                for cx, cy in foot:
                    tx, ty = ix + cx, iy + cy
                    if not (0 <= tx < W and 0 <= ty < H and trav[ty, tx]):
                        ok = False
                        break
                if ok:
                    # reversed edge: target -> source
                    src.append((iy + dy) * W + ix + dx)
                    dst.append(iy * W + ix)
                    w.append(grid.cost[iy, ix] * length)
    n = H * W
    g = coo_matrix((w, (src, dst)), shape=(n, n)).tocsr()
    gx, gy = goal_cell
    d = dijkstra(g, directed=True, indices=gy * W + gx)
    return d.reshape(H, W)
