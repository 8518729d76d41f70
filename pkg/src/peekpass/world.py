"""Static occupancy grid, cost inflation, raycast visibility and frontiers.

Grid convention: ``cells[row, col]`` with rows along +y and columns along +x;
``origin`` is the world position of the lower-left corner of cell (0, 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import InvalidGridError, InvalidInputError, InvalidPoseError

FREE_CHAR = "."
OCCUPIED_CHAR = "#"


class Cell(IntEnum):
    FREE = 0
    OCCUPIED = 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    resolution: float
    width: int
    height: int
    origin: tuple[float, float]
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.resolution > 0:
            raise InvalidGridError(f"resolution must be positive, got {self.resolution}")
        cells = np.asarray(self.cells, dtype=np.uint8)
        if cells.shape != (self.height, self.width):
            raise InvalidGridError(
                f"cells shape {cells.shape} does not match height x width = {(self.height, self.width)}")
        if np.any(cells > 1):
            raise InvalidGridError("cell values must be 0 (free) or 1 (occupied)")
        object.__setattr__(self, "cells", _frozen(cells))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def empty(cls, width, height, resolution=0.1, origin=(0.0, 0.0)):
        return cls(resolution, width, height, origin, np.zeros((height, width), np.uint8))

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def occupied(self) -> np.ndarray:
        return self.cells == Cell.OCCUPIED

    def same_geometry(self, other) -> bool:
        return (self.resolution == other.resolution and self.width == other.width
                and self.height == other.height and tuple(self.origin) == tuple(other.origin))

    def world_to_cell(self, x, y):
        j = math.floor((x - self.origin[0]) / self.resolution)
        i = math.floor((y - self.origin[1]) / self.resolution)
        return i, j

    def cell_center(self, i, j):
        return (self.origin[0] + (j + 0.5) * self.resolution,
                self.origin[1] + (i + 0.5) * self.resolution)

    def in_bounds(self, i, j) -> bool:
        return 0 <= i < self.height and 0 <= j < self.width

    def is_free_at(self, x, y) -> bool:
        i, j = self.world_to_cell(x, y)
        return self.in_bounds(i, j) and self.cells[i, j] == Cell.FREE

    # -- text serialization -------------------------------------------------

    def to_text(self) -> str:
        head = f"{self.resolution!r} {self.width} {self.height} {self.origin[0]!r} {self.origin[1]!r}"
        chars = np.where(self.cells == Cell.OCCUPIED, OCCUPIED_CHAR, FREE_CHAR)
        # top line of the file is the highest row so the map reads like a picture
        rows = ["".join(chars[i]) for i in range(self.height - 1, -1, -1)]
        return "\n".join([head, *rows]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OccupancyGrid":
        lines = text.splitlines()
        if not lines:
            raise InvalidGridError("empty map file")
        parts = lines[0].split()
        if len(parts) != 5:
            raise InvalidGridError("header must be: resolution width height origin_x origin_y")
        try:
            res = float(parts[0])
            width, height = int(parts[1]), int(parts[2])
            origin = (float(parts[3]), float(parts[4]))
        except ValueError as exc:
            raise InvalidGridError(f"bad map header: {lines[0]!r}") from exc
        body = lines[1:]
        if len(body) != height:
            raise InvalidGridError(f"expected {height} rows, found {len(body)}")
        cells = np.zeros((height, width), np.uint8)
        for k, row in enumerate(body):
            if len(row) != width:
                raise InvalidGridError(f"row {k} has {len(row)} characters, expected {width}")
            if set(row) - {FREE_CHAR, OCCUPIED_CHAR}:
                raise InvalidGridError(f"row {k} contains characters other than '.' and '#'")
            cells[height - 1 - k] = [c == OCCUPIED_CHAR for c in row]
        return cls(res, width, height, origin, cells)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "OccupancyGrid":
        with open(path) as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True, eq=False)
class Costmap:
    grid: OccupancyGrid
    cost: np.ndarray = field(repr=False)
    robot_radius: float = 0.0
    inflation_radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "cost", _frozen(np.asarray(self.cost, dtype=np.float64)))

    @property
    def resolution(self):
        return self.grid.resolution

    @property
    def width(self):
        return self.grid.width

    @property
    def height(self):
        return self.grid.height

    def cost_at(self, x, y) -> np.ndarray:
        """Cost at world points; points outside the map are lethal."""
        shape = np.shape(x)
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        g = self.grid
        j = np.floor((x - g.origin[0]) / g.resolution).astype(np.int64)
        i = np.floor((y - g.origin[1]) / g.resolution).astype(np.int64)
        inb = (i >= 0) & (i < g.height) & (j >= 0) & (j < g.width)
        out = np.ones(x.shape)
        out[inb] = self.cost[i[inb], j[inb]]
        return out.reshape(shape)


def obstacle_distance(grid: OccupancyGrid) -> np.ndarray:
    """Distance in metres from every cell centre to the nearest occupied cell centre."""
    occ = grid.occupied
    if not occ.any():
        return np.full(grid.shape, np.inf)
    return ndimage.distance_transform_edt(~occ) * grid.resolution


def inflate(grid: OccupancyGrid, robot_radius: float, inflation_radius: float,
            decay: str = "linear") -> Costmap:
    """Lethal band out to ``robot_radius``, linear falloff to zero at ``inflation_radius``."""
    if not grid.resolution > 0:
        raise InvalidGridError("non-positive resolution")
    if not inflation_radius >= robot_radius >= 0:
        raise InvalidInputError("need inflation_radius >= robot_radius >= 0")
    if decay != "linear":
        raise InvalidInputError(f"unsupported decay profile {decay!r}")
    d = obstacle_distance(grid)
    cost = np.zeros(grid.shape)
    band = inflation_radius - robot_radius
    if band > 0:
        mid = (d > robot_radius) & (d < inflation_radius)
        cost[mid] = (inflation_radius - d[mid]) / band
    cost[d <= robot_radius] = 1.0
    return Costmap(grid, cost, robot_radius, inflation_radius)


class Visibility(IntEnum):
    UNKNOWN = 0
    VISIBLE = 1


@dataclass(frozen=True, eq=False)
class VisibilityMask:
    grid: OccupancyGrid
    visible: np.ndarray = field(repr=False)
    sensor_pose: object
    sensor_range: float

    def __post_init__(self):
        object.__setattr__(self, "visible", _frozen(np.asarray(self.visible, dtype=bool)))

    @property
    def unknown(self) -> np.ndarray:
        return ~self.visible

    def count(self) -> int:
        return int(self.visible.sum())


def _agent_array(agents) -> np.ndarray:
    rows = [(float(p[0]), float(p[1]), float(r)) for p, r in agents]
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def visible_region(grid: OccupancyGrid, pose, sensor_range: float = 10.0, agents=()) -> VisibilityMask:
    """Cells whose centre has an unobstructed line of sight from ``pose``.

    ``agents`` is a sequence of ``((x, y), radius)``; they occlude as opaque discs.
    """
    x, y = float(pose.x), float(pose.y)
    if not grid.is_free_at(x, y):
        raise InvalidPoseError(f"sensor pose ({x:.3f}, {y:.3f}) is not in a free cell")
    vis = _kernels.visibility(grid.cells, grid.resolution, grid.origin[0], grid.origin[1],
                              x, y, float(sensor_range), _agent_array(agents))
    return VisibilityMask(grid, vis, pose, float(sensor_range))


def line_of_sight(grid: OccupancyGrid, start, target, discs=()) -> bool:
    """True if the segment ``start -> target`` crosses no occupied cell and no disc.

    Uses the same marching rule as :func:`visible_region`; the cell containing
    ``target`` is not tested.
    """
    px, py = float(start[0]), float(start[1])
    tx, ty = float(target[0]), float(target[1])
    dx, dy = tx - px, ty - py
    d2 = dx * dx + dy * dy
    for (ax, ay), ar in discs:
        u = ((ax - px) * dx + (ay - py) * dy) / d2 if d2 > 0 else 0.0
        u = min(max(u, 0.0), 1.0)
        ex, ey = px + u * dx - ax, py + u * dy - ay
        if ex * ex + ey * ey < ar * ar:
            return False
    ti, tj = grid.world_to_cell(tx, ty)
    n = math.ceil(math.sqrt(d2) / (0.5 * grid.resolution))
    for k in range(1, n):
        f = k / n
        i, j = grid.world_to_cell(px + f * dx, py + f * dy)
        if (i, j) == (ti, tj):
            continue
        if not grid.in_bounds(i, j) or grid.cells[i, j]:
            return False
    return True


def frontier_cells(mask: VisibilityMask, grid: OccupancyGrid) -> np.ndarray:
    """Unknown free cells with a visible free 4-neighbour, as an (N, 2) array of (row, col)."""
    if not mask.grid.same_geometry(grid) or mask.visible.shape != grid.shape:
        raise InvalidInputError("mask and grid geometry differ")
    free = grid.cells == Cell.FREE
    seen = mask.visible & free
    pad = np.pad(seen, 1, constant_values=False)
    near = pad[:-2, 1:-1] | pad[2:, 1:-1] | pad[1:-1, :-2] | pad[1:-1, 2:]
    front = free & ~mask.visible & near
    return np.argwhere(front)
