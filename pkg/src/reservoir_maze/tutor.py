"""Braitenberg tutor and supervised trajectory generation in the 8-maze.

The tutor turns by a weighted sum of the raw sensor distances,

    dtheta = 0.01 * sum_i(alpha_i * s_i)

and is forced onto the wanted loop sequence by temporary walls sealing one
branch of each corridor junction. Recorded sensor values never include the
forcing walls; the recorded target is the turn command the tutor applied.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .maze import (
    CORRIDOR,
    LEFT,
    LEFT_LOOP,
    RIGHT,
    RIGHT_LOOP,
    SPEED,
    DEFAULT_RIG,
    BotPose,
    MazeMap,
    SensorReading,
    SensorRig,
    _segments_cross,
    ascent_config,
    loop_config,
    ray_distances,
    region_of,
)

NONE_LABEL = "NONE"

#: Per-ray turn gains for the default rig order (0, +30, -30, +65, -65, +90, -90, 180).
#: Mirrored pairs carry opposite signs; the forward and rear rays are unweighted.
#: Tuned so turns stay under ~0.2 rad/step, which a slow reservoir can track.
DEFAULT_TUTOR_WEIGHTS = (0.0, 0.15, -0.15, 0.3, -0.3, 0.5, -0.5, 0.0)


class GenerationError(RuntimeError):
    """The tutor collided or failed to follow the forcing walls (tuning bug)."""


@dataclass(frozen=True)
class BraitenbergController:
    """Reactive wall-avoidance steering: one gain per sensor ray."""

    weights: tuple[float, ...] = DEFAULT_TUTOR_WEIGHTS
    gain: float = 0.01


def tutor_step(ctrl: BraitenbergController, reading) -> float:
    """Turn command for one sensor reading (raw distances, world units)."""
    distances = reading.distances if isinstance(reading, SensorReading) else reading
    return float(ctrl.gain * np.dot(ctrl.weights, distances))


@dataclass
class TrajectoryDataset:
    """Time-indexed supervised records of one tutor run.

    ``sensors`` are true (forcing-free) distances normalized by the sensor
    range; ``target`` is the applied turn command; ``loop_labels`` name the
    circuit each record belongs to (its corridor stretch included), NONE for
    trailing records whose loop was never entered.
    """

    sensors: np.ndarray      # (T, n_rays) in [0, 1]
    cues: np.ndarray         # (T, 2) binary (left, right)
    target: np.ndarray       # (T,)
    positions: np.ndarray    # (T, 2) noise-free positions
    headings: np.ndarray     # (T,)
    regions: np.ndarray      # (T,) region labels
    loop_labels: np.ndarray  # (T,) LEFT / RIGHT / NONE
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.target.shape[0]

    @property
    def inputs_uncued(self) -> np.ndarray:
        return self.sensors

    @property
    def inputs_cued(self) -> np.ndarray:
        return np.hstack([self.sensors, self.cues])

    def loop_visits(self) -> list[str]:
        """Ordered labels of the loops actually entered."""
        return list(self.meta.get("entered", []))

    def split(self, fraction: float) -> tuple["TrajectoryDataset", "TrajectoryDataset"]:
        """Contiguous head/tail split preserving temporal structure."""
        cut = int(round(len(self) * fraction))
        parts = []
        for lo, hi in ((0, cut), (cut, len(self))):
            parts.append(TrajectoryDataset(
                sensors=self.sensors[lo:hi], cues=self.cues[lo:hi],
                target=self.target[lo:hi], positions=self.positions[lo:hi],
                headings=self.headings[lo:hi], regions=self.regions[lo:hi],
                loop_labels=self.loop_labels[lo:hi],
                meta={**self.meta, "split": [lo, hi]}))
        return parts[0], parts[1]


def _alternating(first: str):
    side = first
    while True:
        yield side
        side = RIGHT if side == LEFT else LEFT


def _simulate(maze: MazeMap, ctrl: BraitenbergController, rig: SensorRig,
              sequence, n_steps: int | None, noise_std: float, seed: int,
              max_steps: int | None = None) -> TrajectoryDataset:
    """Run the forced tutor; ``sequence`` is an iterator of loop sides.

    Stops after ``n_steps`` records, or once the final circuit of a finite
    sequence completes (the bot re-enters the corridor).
    """
    rng = np.random.default_rng(seed)
    sides = list(sequence) if n_steps is None else None
    seq_iter = iter(sides) if sides is not None else sequence
    try:
        current_side = next(seq_iter)
    except StopIteration:
        raise ValueError("loop sequence must be non-empty") from None

    if max_steps is None:
        max_steps = n_steps if n_steps is not None else 600 * (len(sides) + 2)

    x, y, theta = maze.start_pose.x, maze.start_pose.y, maze.start_pose.theta
    prev_region = region_of(maze, (x, y))
    forcing_p1, forcing_d = {}, {}
    for key, segs in maze.forcing_walls.items():
        forcing_p1[key] = np.ascontiguousarray(segs[:, 0, :])
        forcing_d[key] = np.ascontiguousarray(segs[:, 1, :] - segs[:, 0, :])
    walls_p1, walls_d = maze.segments(None)
    config = ascent_config(current_side)

    sensors, cues, target, positions, headings = [], [], [], [], []
    regions, circuit_idx = [], []
    entered: list[str] = []
    circuit = 0
    done = False
    t = 0
    while not done and t < max_steps:
        if noise_std > 0.0:
            nx = x + rng.normal(0.0, noise_std)
            ny = y + rng.normal(0.0, noise_std)
        else:
            nx, ny = x, y
        control = ray_distances(maze, nx, ny, theta, rig, forcing=config)
        # Forcing walls are cheap to test: reuse the reading when none is in range.
        if _any_segment_within(forcing_p1[config], forcing_d[config],
                               nx, ny, rig.max_range):
            true_dist = ray_distances(maze, nx, ny, theta, rig, forcing=None)
        else:
            true_dist = control
        dtheta = tutor_step(ctrl, control)

        region = region_of(maze, (x, y))
        sensors.append(true_dist / rig.max_range)
        cue = [0.0, 0.0]
        if region == CORRIDOR and maze.in_cue_region(x, y):
            cue[0 if current_side == LEFT else 1] = 1.0
        cues.append(cue)
        target.append(dtheta)
        positions.append((x, y))
        headings.append(theta)
        regions.append(region)
        circuit_idx.append(circuit)

        theta = theta + dtheta
        x2 = x + SPEED * np.cos(theta)
        y2 = y + SPEED * np.sin(theta)
        if _segments_cross(x, y, x2, y2, walls_p1, walls_d) or _segments_cross(
                x, y, x2, y2, forcing_p1[config], forcing_d[config]):
            raise GenerationError(
                f"tutor collided at step {t} near ({x:.1f}, {y:.1f}); "
                "retune controller weights or maze geometry")
        x, y = x2, y2
        new_region = region_of(maze, (x, y))
        if new_region in (LEFT_LOOP, RIGHT_LOOP) and prev_region == CORRIDOR:
            side = LEFT if new_region == LEFT_LOOP else RIGHT
            if side != current_side:
                raise GenerationError(
                    f"tutor entered {side} while forced {current_side} at step {t}")
            entered.append(side)
            config = loop_config(side)
        elif new_region == CORRIDOR and prev_region in (LEFT_LOOP, RIGHT_LOOP):
            circuit += 1
            try:
                current_side = next(seq_iter)
                config = ascent_config(current_side)
            except StopIteration:
                done = True
        prev_region = new_region
        t += 1
        if n_steps is not None and t >= n_steps:
            done = True
    if n_steps is None and not done:
        raise GenerationError(f"sequence did not complete within {max_steps} steps")

    circuit_idx = np.asarray(circuit_idx)
    labels = np.full(len(target), NONE_LABEL, dtype="<U5")
    for i, side in enumerate(entered):
        labels[circuit_idx == i] = side
    # A trailing circuit whose loop was reached keeps its label even if the
    # run stopped mid-loop; one that never left the corridor stays NONE.
    dataset = TrajectoryDataset(
        sensors=np.asarray(sensors),
        cues=np.asarray(cues),
        target=np.asarray(target),
        positions=np.asarray(positions),
        headings=np.asarray(headings),
        regions=np.asarray(regions),
        loop_labels=labels,
        meta={
            "seed": seed,
            "noise_std": noise_std,
            "n_loops": len(entered),
            "n_eight_loops": len(entered) // 2,
            "entered": entered,
            "rig_offsets_deg": list(rig.offsets_deg),
            "rig_max_range": rig.max_range,
            "tutor_weights": list(ctrl.weights),
            "tutor_gain": ctrl.gain,
        },
    )
    return dataset


def _any_segment_within(p1: np.ndarray, d: np.ndarray, x: float, y: float,
                        radius: float) -> bool:
    """True iff any segment comes within ``radius`` of point (x, y)."""
    qx = x - p1[:, 0]
    qy = y - p1[:, 1]
    dd = d[:, 0] ** 2 + d[:, 1] ** 2
    tt = np.clip((qx * d[:, 0] + qy * d[:, 1]) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
    ex = qx - tt * d[:, 0]
    ey = qy - tt * d[:, 1]
    return bool(np.any(ex * ex + ey * ey <= radius * radius))


def generate_standard8(maze: MazeMap, ctrl: BraitenbergController,
                       n_steps: int = 50_000, noise_std: float = 0.5,
                       seed: int = 0, rig: SensorRig = DEFAULT_RIG,
                       first: str = LEFT) -> TrajectoryDataset:
    """Alternating figure-eight dataset: LEFT, RIGHT, LEFT, ... for ``n_steps``."""
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    ds = _simulate(maze, ctrl, rig, _alternating(first), n_steps, noise_std, seed)
    ds.meta["mode"] = "standard8"
    return ds


def generate_cued(maze: MazeMap, ctrl: BraitenbergController, loop_sequence,
                  noise_std: float = 0.5, seed: int = 0,
                  rig: SensorRig = DEFAULT_RIG) -> TrajectoryDataset:
    """Dataset following an explicit loop sequence; runs until it completes."""
    loop_sequence = [normalize_side(s) for s in loop_sequence]
    ds = _simulate(maze, ctrl, rig, loop_sequence, None, noise_std, seed)
    ds.meta["mode"] = "cued"
    ds.meta["sequence"] = loop_sequence
    return ds


def normalize_side(s: str) -> str:
    """Accept LEFT/RIGHT, L/R and the A/B aliases (A = left loop)."""
    key = str(s).strip().upper()
    aliases = {"L": LEFT, "A": LEFT, LEFT: LEFT, "R": RIGHT, "B": RIGHT, RIGHT: RIGHT}
    if key not in aliases:
        raise ValueError(f"unknown loop side {s!r}")
    return aliases[key]


def next_loop_labels(dataset: TrajectoryDataset) -> np.ndarray:
    """For every record, the label of the next loop region entered (NONE at tail)."""
    regions = dataset.regions
    T = len(dataset)
    out = np.full(T, NONE_LABEL, dtype="<U5")
    upcoming = NONE_LABEL
    prev = None  # region at t+1 while scanning backwards
    for t in range(T - 1, -1, -1):
        r = regions[t]
        if prev is not None and prev in (LEFT_LOOP, RIGHT_LOOP) and r != prev:
            upcoming = LEFT if prev == LEFT_LOOP else RIGHT
        out[t] = upcoming
        prev = r
    return out


def label_decisions(dataset: TrajectoryDataset, all_records: bool = False,
                    ) -> tuple[np.ndarray, np.ndarray, int]:
    """Decision labels: which loop comes next, for corridor records.

    Returns ``(indices, labels, n_dropped)`` where ``n_dropped`` counts
    trailing corridor records whose next loop never appears in the data.
    With ``all_records`` every labelable record is returned, not only the
    corridor ones.
    """
    upcoming = next_loop_labels(dataset)
    mask = np.ones(len(dataset), dtype=bool) if all_records \
        else dataset.regions == CORRIDOR
    labeled = mask & (upcoming != NONE_LABEL)
    n_dropped = int(np.count_nonzero(mask & (upcoming == NONE_LABEL)))
    idx = np.nonzero(labeled)[0]
    return idx, upcoming[idx], n_dropped


# ---------------------------------------------------------------------------
# CSV persistence: one record per row with the documented column order,
# plus a JSON metadata sidecar at <path>.meta.json.
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("t", "s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8",
               "cueL", "cueR", "target", "x", "y", "region", "loop_label")


def save_dataset(dataset: TrajectoryDataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS + ("heading",))
        for t in range(len(dataset)):
            writer.writerow(
                [t, *(f"{v:.12g}" for v in dataset.sensors[t]),
                 int(dataset.cues[t, 0]), int(dataset.cues[t, 1]),
                 f"{dataset.target[t]:.17g}",
                 f"{dataset.positions[t, 0]:.12g}", f"{dataset.positions[t, 1]:.12g}",
                 dataset.regions[t], dataset.loop_labels[t],
                 f"{dataset.headings[t]:.12g}"])
    meta_path = path.with_name(path.name + ".meta.json")
    meta_path.write_text(json.dumps(dataset.meta, indent=2))


def load_dataset(path) -> TrajectoryDataset:
    path = Path(path)
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    ncol = len(header)
    has_heading = ncol > len(CSV_COLUMNS)
    sensors = np.array([[float(v) for v in r[1:9]] for r in rows])
    cues = np.array([[float(r[9]), float(r[10])] for r in rows])
    target = np.array([float(r[11]) for r in rows])
    positions = np.array([[float(r[12]), float(r[13])] for r in rows])
    regions = np.array([r[14] for r in rows], dtype="<U10")
    loop_labels = np.array([r[15] for r in rows], dtype="<U5")
    headings = np.array([float(r[16]) for r in rows]) if has_heading \
        else np.zeros(len(rows))
    meta_path = path.with_name(path.name + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return TrajectoryDataset(sensors=sensors, cues=cues, target=target,
                             positions=positions, headings=headings,
                             regions=regions, loop_labels=loop_labels, meta=meta)
