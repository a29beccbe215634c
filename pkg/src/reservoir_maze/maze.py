"""Geometry of the closed 8-maze: walls, ray sensors, bot kinematics, regions.

The maze is a flat 2-D world made of straight wall segments. The default
maze is two rectangular loops sharing a vertical central corridor; a point
robot moves at constant speed 2 and senses distance to the nearest wall
along 8 fixed rays. Temporary "forcing" walls can seal one side of the
corridor junctions to steer a reactive controller into a chosen loop;
they are never part of the real maze.

All geometry uses an absolute epsilon of ``GEOM_EPS`` world units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPEED = 2.0           # displacement per step, fixed for every bot
GEOM_EPS = 1e-9       # absolute tolerance for intersection tests

CORRIDOR = "CORRIDOR"
LEFT_LOOP = "LEFT_LOOP"
RIGHT_LOOP = "RIGHT_LOOP"
OTHER = "OTHER"

LEFT = "LEFT"
RIGHT = "RIGHT"


class OutOfBoundsError(ValueError):
    """Raised when a pose used for sensing is not in free space."""


@dataclass(frozen=True)
class BotPose:
    """Position, heading and (constant) speed of the point robot."""

    x: float
    y: float
    theta: float

    speed: float = SPEED

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class SensorRig:
    """Ray layout of the distance sensors.

    Offsets are relative to the heading, positive counterclockwise.
    A reading is the distance to the nearest wall along the ray, clamped
    to ``max_range``; ``max_range`` is returned when nothing is hit.
    """

    offsets_deg: tuple[float, ...] = (0.0, 30.0, -30.0, 65.0, -65.0, 90.0, -90.0, 180.0)
    max_range: float = 60.0

    @property
    def n_rays(self) -> int:
        return len(self.offsets_deg)

    @property
    def offsets_rad(self) -> np.ndarray:
        return np.deg2rad(np.asarray(self.offsets_deg, dtype=float))


DEFAULT_RIG = SensorRig()


@dataclass(frozen=True)
class SensorReading:
    """Distances (one per ray, world units) plus the rig that produced them."""

    distances: np.ndarray
    rig: SensorRig = DEFAULT_RIG


Rect = tuple[float, float, float, float]  # xmin, ymin, xmax, ymax


def _as_segments(obj) -> np.ndarray:
    seg = np.asarray(obj, dtype=float)
    if seg.size == 0:
        return seg.reshape(0, 2, 2)
    if seg.ndim != 3 or seg.shape[1:] != (2, 2):
        raise ValueError(f"segments must have shape (n, 2, 2), got {seg.shape}")
    return seg


@dataclass
class MazeMap:
    """Wall segments plus the named regions used for labelling and cues.

    ``walls`` is an (n, 2, 2) array of segment endpoints. ``forcing_walls``
    maps a loop side ("LEFT"/"RIGHT") to the removable segments that force
    the tutor into that loop. Regions are axis-aligned rectangles; the
    corridor takes priority wherever rectangles overlap.
    """

    walls: np.ndarray
    forcing_walls: dict[str, np.ndarray]
    corridor_region: Rect
    intersection_point: tuple[float, float]
    loop_regions: dict[str, Rect]
    start_pose: BotPose
    cue_region: Rect | None = None  # where contextual cues are raised; defaults to the corridor

    _segment_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.walls = _as_segments(self.walls)
        self.walls.flags.writeable = False
        self.forcing_walls = {k: _as_segments(v) for k, v in self.forcing_walls.items()}
        for seg in self.forcing_walls.values():
            seg.flags.writeable = False
        if self.cue_region is None:
            self.cue_region = self.corridor_region

    def in_cue_region(self, x: float, y: float) -> bool:
        return _in_rect(self.cue_region, x, y)

    def segments(self, forcing: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Return (P1, D) endpoint/direction arrays for the active wall set."""
        key = forcing
        cached = self._segment_cache.get(key)
        if cached is None:
            segs = self.walls
            if forcing is not None:
                segs = np.concatenate([segs, self.forcing_walls[forcing]], axis=0)
            p1 = np.ascontiguousarray(segs[:, 0, :])
            d = np.ascontiguousarray(segs[:, 1, :] - segs[:, 0, :])
            cached = (p1, d)
            self._segment_cache[key] = cached
        return cached


# ---------------------------------------------------------------------------
# Default maze
#
# Channel width 20; each island is 150 wide x 160 tall, so the centerline of
# one circuit (corridor + one loop) is 2*(170 + 180) = 700 world units, i.e.
# about 350 steps at speed 2 and about 700 steps for a complete figure eight.
# ---------------------------------------------------------------------------

CHANNEL_WIDTH = 20.0

_OUTER_X, _OUTER_Y = 180.0, 100.0
_ISLAND_X_IN, _ISLAND_X_OUT = 10.0, 160.0
_ISLAND_Y = 80.0


def _rect_walls(xmin, ymin, xmax, ymax) -> list:
    return [
        [[xmin, ymin], [xmax, ymin]],
        [[xmax, ymin], [xmax, ymax]],
        [[xmax, ymax], [xmin, ymax]],
        [[xmin, ymax], [xmin, ymin]],
    ]


def ascent_config(side: str) -> str:
    """Forcing key used while the bot climbs the corridor toward ``side``."""
    return f"ASCENT_{side}"


def loop_config(side: str) -> str:
    """Forcing key used while the bot circles the ``side`` loop."""
    return f"LOOP_{side}"


def build_default_maze() -> MazeMap:
    """The canonical 8-maze: outer boundary plus two island rectangles.

    The central corridor (width 20) runs vertically between the islands and
    is traversed northbound once per circuit; the decision point is the top
    junction. Forcing walls come in per-phase configurations: during the
    corridor ascent both bottom-junction branches are sealed (a one-sided
    seal would steer the reactive tutor into the junction corner) and the
    top branch away from the target loop is sealed; while circling a loop
    only the far bottom branch stays sealed so the bot can re-enter the
    corridor.
    """
    walls = (
        _rect_walls(-_OUTER_X, -_OUTER_Y, _OUTER_X, _OUTER_Y)
        + _rect_walls(-_ISLAND_X_OUT, -_ISLAND_Y, -_ISLAND_X_IN, _ISLAND_Y)
        + _rect_walls(_ISLAND_X_IN, -_ISLAND_Y, _ISLAND_X_OUT, _ISLAND_Y)
    )
    xi, yo, yi = _ISLAND_X_IN, _OUTER_Y, _ISLAND_Y
    bottom_east = [[xi, -yo], [xi, -yi]]
    bottom_west = [[-xi, -yo], [-xi, -yi]]
    top_east = [[xi, yi], [xi, yo]]
    top_west = [[-xi, yi], [-xi, yo]]
    forcing = {
        ascent_config(LEFT): [bottom_east, bottom_west, top_east],
        ascent_config(RIGHT): [bottom_east, bottom_west, top_west],
        loop_config(LEFT): [bottom_east, top_east],
        loop_config(RIGHT): [bottom_west, top_west],
    }
    entrance_y = -(yo + yi) / 2.0  # bottom junction center
    return MazeMap(
        walls=np.array(walls),
        forcing_walls={k: np.array(v) for k, v in forcing.items()},
        corridor_region=(-xi, -yo, xi, yo),
        intersection_point=(0.0, (yo + yi) / 2.0),
        loop_regions={
            LEFT: (-_OUTER_X, -yo, -xi, yo),
            RIGHT: (xi, -yo, _OUTER_X, yo),
        },
        start_pose=BotPose(0.0, entrance_y, np.pi / 2.0),
        # Cues are raised only between the junctions, and one channel width
        # above the bottom one, so the junction turns (including the arrival
        # turn's settling) are always driven cue-free.
        cue_region=(-xi, -yi + CHANNEL_WIDTH, xi, yi),
    )


# ---------------------------------------------------------------------------
# Ray casting and collision
# ---------------------------------------------------------------------------


def ray_distances(maze: MazeMap, x: float, y: float, theta: float,
                  rig: SensorRig = DEFAULT_RIG, forcing: str | None = None) -> np.ndarray:
    """Distances to the nearest wall along each of the rig's rays.

    Vectorized over (rays x segments); no free-space check, see ``sense``.
    """
    p1, d = maze.segments(forcing)
    ang = theta + rig.offsets_rad
    ux = np.cos(ang)[:, None]
    uy = np.sin(ang)[:, None]
    qx = p1[:, 0] - x
    qy = p1[:, 1] - y
    denom = ux * d[:, 1] - uy * d[:, 0]          # cross(u, d), (rays, segs)
    qxd = qx * d[:, 1] - qy * d[:, 0]            # cross(q, d), (segs,)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = qxd / denom                           # distance along ray
        s = (uy * qx - ux * qy) / denom           # cross(q, u): param along segment
    hit = (np.abs(denom) > GEOM_EPS) & (t > GEOM_EPS) & (s >= -GEOM_EPS) & (s <= 1.0 + GEOM_EPS)
    t = np.where(hit, t, np.inf)
    return np.minimum(t.min(axis=1), rig.max_range)


def in_free_space(maze: MazeMap, x: float, y: float) -> bool:
    """Crossing-parity test against all walls (odd = inside the maze)."""
    p1, d = maze.segments(None)
    # Slightly irrational direction avoids passing exactly through vertices.
    ux, uy = 0.8790371061216309, 0.4767312946227962
    qx = p1[:, 0] - x
    qy = p1[:, 1] - y
    denom = ux * d[:, 1] - uy * d[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qx * d[:, 1] - qy * d[:, 0]) / denom
        s = (ux * qy - uy * qx) / denom
    crossings = (np.abs(denom) > GEOM_EPS) & (t > 0) & (s >= 0) & (s < 1.0)
    return bool(np.count_nonzero(crossings) % 2 == 1)


def sense(maze: MazeMap, pose: BotPose, rig: SensorRig = DEFAULT_RIG,
          forcing: str | None = None) -> SensorReading:
    """Sensor reading at ``pose``; forcing walls included only when named.

    Raises ``OutOfBoundsError`` when the pose is not in free space.
    """
    if not in_free_space(maze, pose.x, pose.y):
        raise OutOfBoundsError(f"pose ({pose.x:.3f}, {pose.y:.3f}) is outside the maze free space")
    return SensorReading(ray_distances(maze, pose.x, pose.y, pose.theta, rig, forcing), rig)


def step_pose(pose: BotPose, dtheta: float) -> BotPose:
    """Turn by ``dtheta`` then advance 2 world units along the new heading."""
    theta = pose.theta + dtheta
    return BotPose(pose.x + SPEED * np.cos(theta), pose.y + SPEED * np.sin(theta), theta)


def _segments_cross(ax, ay, bx, by, p1: np.ndarray, d: np.ndarray) -> bool:
    """True iff segment a->b intersects any segment in (p1, p1+d)."""
    mx, my = bx - ax, by - ay
    qx = p1[:, 0] - ax
    qy = p1[:, 1] - ay
    denom = mx * d[:, 1] - my * d[:, 0]           # cross(m, d)
    cross_q = qx * my - qy * mx                   # cross(q, m)
    cross_qd = qx * d[:, 1] - qy * d[:, 0]        # cross(q, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_qd / denom                      # parameter along the move
        s = cross_q / denom                       # parameter along the wall
    hit = (np.abs(denom) > GEOM_EPS) & (t >= -GEOM_EPS) & (t <= 1.0 + GEOM_EPS) \
        & (s >= -GEOM_EPS) & (s <= 1.0 + GEOM_EPS)
    if bool(np.any(hit)):
        return True
    # Parallel overlap: collinear segments that touch.
    par = np.abs(denom) <= GEOM_EPS
    if np.any(par & (np.abs(cross_q) <= GEOM_EPS)):
        idx = np.nonzero(par & (np.abs(cross_q) <= GEOM_EPS))[0]
        for i in idx:
            # Project wall endpoints on the move direction.
            mlen2 = mx * mx + my * my
            if mlen2 <= GEOM_EPS * GEOM_EPS:
                if min(np.hypot(qx[i], qy[i]),
                       np.hypot(qx[i] + d[i, 0], qy[i] + d[i, 1])) <= GEOM_EPS:
                    return True
                continue
            t0 = (qx[i] * mx + qy[i] * my) / mlen2
            t1 = ((qx[i] + d[i, 0]) * mx + (qy[i] + d[i, 1]) * my) / mlen2
            if max(min(t0, t1), 0.0) <= min(max(t0, t1), 1.0) + GEOM_EPS:
                return True
    return False


def check_collision(maze: MazeMap, p_from, p_to, forcing: str | None = None) -> bool:
    """True iff the straight move from ``p_from`` to ``p_to`` crosses a wall."""
    p1, d = maze.segments(forcing)
    return _segments_cross(float(p_from[0]), float(p_from[1]),
                           float(p_to[0]), float(p_to[1]), p1, d)


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


def _in_rect(rect: Rect, x: float, y: float) -> bool:
    return rect[0] <= x <= rect[2] and rect[1] <= y <= rect[3]


def region_of(maze: MazeMap, p) -> str:
    """Region label of a point; the corridor wins any overlap."""
    x, y = float(p[0]), float(p[1])
    if _in_rect(maze.corridor_region, x, y):
        return CORRIDOR
    if _in_rect(maze.loop_regions[LEFT], x, y):
        return LEFT_LOOP
    if _in_rect(maze.loop_regions[RIGHT], x, y):
        return RIGHT_LOOP
    return OTHER


# ---------------------------------------------------------------------------
# Maze file format (JSON, format version 1):
# {
#   "format": 1,
#   "walls": [[[x1, y1], [x2, y2]], ...],
#   "forcing_walls": {"LEFT": [...], "RIGHT": [...]},
#   "corridor_region": [xmin, ymin, xmax, ymax],
#   "intersection_point": [x, y],
#   "loop_regions": {"LEFT": [...], "RIGHT": [...]},
#   "start_pose": [x, y, theta]
# }
# ---------------------------------------------------------------------------

MAZE_FORMAT_VERSION = 1


def save_maze(maze: MazeMap, path) -> None:
    doc = {
        "format": MAZE_FORMAT_VERSION,
        "walls": maze.walls.tolist(),
        "forcing_walls": {k: v.tolist() for k, v in maze.forcing_walls.items()},
        "corridor_region": list(maze.corridor_region),
        "intersection_point": list(maze.intersection_point),
        "loop_regions": {k: list(v) for k, v in maze.loop_regions.items()},
        "start_pose": [maze.start_pose.x, maze.start_pose.y, maze.start_pose.theta],
        "cue_region": list(maze.cue_region),
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_maze(path) -> MazeMap:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MAZE_FORMAT_VERSION:
        raise ValueError(f"unsupported maze format: {doc.get('format')!r}")
    sx, sy, st = doc["start_pose"]
    return MazeMap(
        walls=np.array(doc["walls"], dtype=float),
        forcing_walls={k: np.array(v, dtype=float) for k, v in doc["forcing_walls"].items()},
        corridor_region=tuple(doc["corridor_region"]),
        intersection_point=tuple(doc["intersection_point"]),
        loop_regions={k: tuple(v) for k, v in doc["loop_regions"].items()},
        start_pose=BotPose(sx, sy, st),
        cue_region=tuple(doc["cue_region"]) if "cue_region" in doc else None,
    )
