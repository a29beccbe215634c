"""End-to-end experiments: data generation, training, evaluation, rollouts.

Two experiment modes mirror the two network configurations:

* ``UNCUED`` (8 sensor inputs): the network learns the alternating
  figure-eight from tutor data and must reproduce the alternation in closed
  loop from its own reservoir dynamics. The regression target is the next
  absolute orientation, which is a bounded sawtooth for the alternating
  eight (left and right circuits wind +/- one turn each).

* ``CUED`` (8 sensors + 2 binary cue inputs): the network is trained on a
  seeded random loop sequence so the cues, not the reservoir memory, carry
  the decision, and must execute arbitrary commanded sequences in closed
  loop. The target is the heading vector (cos, sin of the next
  orientation); a 1-D orientation target cannot represent the unbounded
  winding of non-alternating sequences.

Evaluation is one continuous teacher-forced pass: training states are
collected with the regularizing state noise, the reservoir state is carried
into the test split, and test states are noise-free.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from . import analysis as ana
from .esn import (EsnConfig, EsnModel, build_esn, compute_metrics, load_model,
                  run_open_loop, save_model, train_readout, update_state)
from .maze import (CORRIDOR, DEFAULT_RIG, LEFT, LEFT_LOOP, RIGHT, RIGHT_LOOP, SPEED,
                   BotPose, MazeMap, SensorRig, _segments_cross, ascent_config,
                   build_default_maze, load_maze, loop_config, ray_distances, region_of)
from .tutor import (DEFAULT_TUTOR_WEIGHTS, BraitenbergController, TrajectoryDataset,
                    generate_cued, generate_standard8, next_loop_labels, normalize_side,
                    save_dataset, tutor_step)

UNCUED = "UNCUED"
CUED = "CUED"

#: Table-style hyperparameters for the two configurations.
TABLE_UNCUED = dict(n_units=1400, n_inputs=8, n_outputs=1,
                    input_connectivity=0.2, reservoir_connectivity=0.19,
                    spectral_radius=1.4, leak_rate=0.0181, state_noise=1e-2,
                    input_scaling=(1.0,) * 8, regularization=4.1e-8)
TABLE_CUED = dict(n_units=1400, n_inputs=10, n_outputs=2,
                  input_connectivity=0.2, reservoir_connectivity=0.19,
                  spectral_radius=1.505, leak_rate=0.06455, state_noise=1e-2,
                  input_scaling=(1.0,) * 8 + (10.4695,) * 2, regularization=1e-3)

DEFAULT_ROLLOUT_SEQUENCE = (LEFT, RIGHT) * 6


class ExperimentError(RuntimeError):
    """A pipeline stage failed; the message is prefixed with the stage name."""


@dataclass
class ExperimentConfig:
    mode: str = UNCUED
    esn: EsnConfig | None = None
    maze_path: str | None = None
    tutor_weights: tuple[float, ...] = DEFAULT_TUTOR_WEIGHTS
    tutor_gain: float = 0.01
    n_steps: int = 50_000
    noise_std: float = 0.25
    train_fraction: float = 0.8
    washout: int = 100
    loop_sequence: tuple[str, ...] | None = None  # commanded rollout sequence (CUED)
    rollout_loops: int = 12                       # circuits per uncued rollout
    warmup_steps: int = 100
    n_runs: int = 50
    seed: int = 0
    n_jobs: int | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.mode not in (UNCUED, CUED):
            raise ValueError(f"mode must be {UNCUED} or {CUED}, got {self.mode!r}")
        if self.esn is None:
            self.esn = default_esn_config(self.mode)
        expected = 10 if self.mode == CUED else 8
        if self.esn.n_inputs != expected:
            raise ValueError(f"{self.mode} mode requires n_inputs={expected}, "
                             f"got {self.esn.n_inputs}")
        if self.loop_sequence is not None:
            self.loop_sequence = tuple(normalize_side(s) for s in self.loop_sequence)
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")


def default_esn_config(mode: str, seed: int = 0, **overrides) -> EsnConfig:
    base = dict(TABLE_CUED if mode == CUED else TABLE_UNCUED)
    base.update(overrides)
    return EsnConfig(seed=seed, **base)


def run_seed(master_seed: int, run_index: int, stream: int) -> int:
    """Per-run substream seed; stable in ``run_index`` regardless of n_runs."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(run_index, stream))
    return int(ss.generate_state(1)[0])


def load_experiment_maze(config: ExperimentConfig) -> MazeMap:
    return load_maze(config.maze_path) if config.maze_path else build_default_maze()


def make_controller(config: ExperimentConfig) -> BraitenbergController:
    return BraitenbergController(weights=tuple(config.tutor_weights),
                                 gain=config.tutor_gain)


# ---------------------------------------------------------------------------
# Regression targets
# ---------------------------------------------------------------------------


def orientation_target(dataset: TrajectoryDataset) -> np.ndarray:
    """Next absolute orientation at each step (heading after the commanded turn)."""
    return (dataset.headings + dataset.target)[:, None]


def heading_vector_target(dataset: TrajectoryDataset) -> np.ndarray:
    """(cos, sin) of the next orientation; bounded for arbitrary sequences."""
    theta = dataset.headings + dataset.target
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def regression_target(dataset: TrajectoryDataset, mode: str) -> np.ndarray:
    return heading_vector_target(dataset) if mode == CUED else orientation_target(dataset)


def model_inputs(dataset: TrajectoryDataset, mode: str) -> np.ndarray:
    return dataset.inputs_cued if mode == CUED else dataset.inputs_uncued


def multioutput_metrics(y: np.ndarray, y_hat: np.ndarray):
    """Per-channel metrics averaged; equals compute_metrics for one output."""
    y = np.atleast_2d(np.asarray(y, dtype=float).T).T
    y_hat = np.atleast_2d(np.asarray(y_hat, dtype=float).T).T
    per = [compute_metrics(y[:, c], y_hat[:, c]) for c in range(y.shape[1])]
    from .esn import RegressionMetrics
    return RegressionMetrics(nrmse=float(np.mean([m.nrmse for m in per])),
                             r2=float(np.mean([m.r2 for m in per])))


def random_loop_sequence(n: int, seed: int) -> list[str]:
    """Seeded uniform loop sequence used for cued training data."""
    rng = np.random.default_rng(seed)
    return [LEFT if v < 0.5 else RIGHT for v in rng.random(n)]


def generate_training_data(config: ExperimentConfig, maze: MazeMap,
                           ctrl: BraitenbergController, data_seed: int,
                           rig: SensorRig = DEFAULT_RIG) -> TrajectoryDataset:
    if config.mode == CUED:
        n_circuits = max(4, round(config.n_steps / 340))
        seq = random_loop_sequence(n_circuits, data_seed)
        return generate_cued(maze, ctrl, seq, noise_std=config.noise_std,
                             seed=data_seed, rig=rig)
    return generate_standard8(maze, ctrl, n_steps=config.n_steps,
                              noise_std=config.noise_std, seed=data_seed, rig=rig)


# ---------------------------------------------------------------------------
# Closed-loop rollout
# ---------------------------------------------------------------------------


@dataclass
class RolloutResult:
    executed: list[str]            # loop labels in completion order
    entry_steps: list[int]         # step index of each corridor re-entry
    periods: list[int]             # steps between consecutive re-entries
    collided: bool
    collision_step: int | None
    steps: int
    handover_step: int
    trajectory: np.ndarray         # (T, 5): t, x, y, theta, dtheta
    states: np.ndarray | None = None   # (T, n_units) when recorded
    sensors: np.ndarray | None = None  # (T, n_rays) normalized, when recorded
    regions: np.ndarray | None = None  # (T,) region labels, when recorded

    @property
    def alternating(self) -> bool:
        ex = self.executed
        return len(ex) > 1 and all(ex[i] != ex[i + 1] for i in range(len(ex) - 1))

    def matches(self, sequence) -> bool:
        return list(self.executed) == [normalize_side(s) for s in sequence]


def closed_loop_rollout(model: EsnModel, maze: MazeMap, ctrl: BraitenbergController,
                        mode: str, sequence=None, n_loops: int | None = None,
                        warmup: int = 100, rig: SensorRig = DEFAULT_RIG,
                        max_steps: int | None = None,
                        record_states: bool = False) -> RolloutResult:
    """Drive the bot with the trained readout; the tutor steers the warm-up.

    For ``CUED`` mode the harness raises the cue for the commanded next loop
    while the bot is inside the cue window. The rollout ends when the
    commanded sequence (or ``n_loops`` circuits) completes, a wall is hit,
    or ``max_steps`` elapses.
    """
    if model.W_out is None:
        raise ExperimentError("rollout: model is untrained")
    cfg = model.config
    cued = mode == CUED
    if cued:
        if not sequence:
            raise ValueError("CUED rollout needs a loop sequence")
        sequence = [normalize_side(s) for s in sequence]
        total = len(sequence)
    else:
        total = n_loops if n_loops is not None else 12
        sequence = [LEFT, RIGHT] * (total // 2 + 1)
    if max_steps is None:
        max_steps = 600 * (total + 2)

    x, y, theta = maze.start_pose.x, maze.start_pose.y, maze.start_pose.theta
    state = model.zero_state()
    walls_p1, walls_d = maze.segments(None)
    prev_region = region_of(maze, (x, y))
    w = model.W_out
    n_in = cfg.n_inputs
    circuit = 0
    executed: list[str] = []
    entry_steps: list[int] = []
    collided = False
    collision_step = None
    traj = np.empty((max_steps, 5))
    rec_states = np.empty((max_steps, cfg.n_units)) if record_states else None
    rec_sensors = np.empty((max_steps, rig.n_rays)) if record_states else None
    rec_regions = np.empty(max_steps, dtype="<U10") if record_states else None
    t = 0
    while t < max_steps:
        region_now = region_of(maze, (x, y))
        distances = ray_distances(maze, x, y, theta, rig) / rig.max_range
        if cued:
            cue = np.zeros(2)
            if region_now == CORRIDOR and maze.in_cue_region(x, y) and circuit < len(sequence):
                cue[0 if sequence[circuit] == LEFT else 1] = 1.0
            u = np.concatenate([distances, cue])
        else:
            u = distances
        state = update_state(model, state, u)
        if record_states:
            rec_states[t] = state
            rec_sensors[t] = distances
            rec_regions[t] = region_now
        if t < warmup:
            # Teacher forcing: the tutor (with its forcing walls) drives the bot
            # while the reservoir is fed the true sensor stream.
            config_key = _warmup_forcing(circuit, region_now, sequence)
            control = ray_distances(maze, x, y, theta, rig, forcing=config_key)
            dtheta = tutor_step(ctrl, control)
        else:
            out = w @ np.concatenate(([1.0], u, state))
            if cued:
                theta_cmd = np.arctan2(out[1], out[0])
            else:
                theta_cmd = out[0]
            dtheta = (theta_cmd - theta + np.pi) % (2.0 * np.pi) - np.pi
        theta = theta + dtheta
        x2 = x + SPEED * np.cos(theta)
        y2 = y + SPEED * np.sin(theta)
        traj[t] = (t, x, y, theta, dtheta)
        if _segments_cross(x, y, x2, y2, walls_p1, walls_d):
            collided = True
            collision_step = t
            t += 1
            break
        x, y = x2, y2
        region = region_of(maze, (x, y))
        if region in (LEFT_LOOP, RIGHT_LOOP) and prev_region == CORRIDOR:
            executed.append(LEFT if region == LEFT_LOOP else RIGHT)
        elif region == CORRIDOR and prev_region in (LEFT_LOOP, RIGHT_LOOP):
            entry_steps.append(t)
            circuit += 1
            if circuit >= total:
                t += 1
                break
        prev_region = region
        t += 1
    return RolloutResult(executed=executed, entry_steps=entry_steps,
                         periods=list(np.diff(entry_steps).astype(int)),
                         collided=collided, collision_step=collision_step,
                         steps=t, handover_step=warmup, trajectory=traj[:t].copy(),
                         states=rec_states[:t].copy() if record_states else None,
                         sensors=rec_sensors[:t].copy() if record_states else None,
                         regions=rec_regions[:t].copy() if record_states else None)


def _warmup_forcing(circuit: int, region: str, sequence) -> str | None:
    if circuit != 0:
        return None
    if region == CORRIDOR:
        return ascent_config(sequence[0])
    return loop_config(sequence[0])


# ---------------------------------------------------------------------------
# Single run and multi-seed experiments
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    run_id: int
    esn_seed: int
    data_seed: int
    nrmse: float | None = None
    r2: float | None = None
    loops_completed: int = 0
    collisions: int = 0
    executed: str = ""
    periods: tuple[int, ...] = ()
    behavior_ok: bool | None = None
    error: str | None = None


def run_single(config: ExperimentConfig, run_index: int,
               include_rollout: bool = True, keep_artifacts: bool = False):
    """One seeded end-to-end run; returns a RunResult (plus artifacts if asked)."""
    esn_seed = run_seed(config.seed, run_index, 0)
    data_seed = run_seed(config.seed, run_index, 1)
    noise_seed = run_seed(config.seed, run_index, 2)
    result = RunResult(run_id=run_index, esn_seed=esn_seed, data_seed=data_seed)
    artifacts: dict = {}
    stage = "setup"
    try:
        maze = load_experiment_maze(config)
        ctrl = make_controller(config)
        stage = "generate"
        dataset = generate_training_data(config, maze, ctrl, data_seed)
        train, test = dataset.split(config.train_fraction)
        stage = "train"
        model = build_esn(replace(config.esn, seed=esn_seed))
        rng = np.random.default_rng(noise_seed)
        _, carry = train_readout(model, model_inputs(train, config.mode),
                                 regression_target(train, config.mode),
                                 washout=config.washout, rng=rng, return_state=True)
        stage = "eval"
        _, y_hat = run_open_loop(model, model_inputs(test, config.mode),
                                 washout=0, initial_state=carry)
        metrics = multioutput_metrics(regression_target(test, config.mode), y_hat)
        result.nrmse, result.r2 = metrics.nrmse, metrics.r2
        rollout = None
        if include_rollout:
            stage = "rollout"
            sequence = config.loop_sequence or DEFAULT_ROLLOUT_SEQUENCE
            rollout = closed_loop_rollout(
                model, maze, ctrl, config.mode,
                sequence=sequence if config.mode == CUED else None,
                n_loops=config.rollout_loops, warmup=config.warmup_steps)
            result.loops_completed = len(rollout.entry_steps)
            result.collisions = int(rollout.collided)
            result.executed = "".join(s[0] for s in rollout.executed)
            result.periods = tuple(rollout.periods)
            if config.mode == CUED:
                result.behavior_ok = (not rollout.collided) and rollout.matches(sequence)
            else:
                result.behavior_ok = (not rollout.collided) and rollout.alternating \
                    and len(rollout.executed) >= config.rollout_loops
        if keep_artifacts:
            artifacts = {"maze": maze, "ctrl": ctrl, "dataset": dataset,
                         "train": train, "test": test, "model": model,
                         "rollout": rollout}
    except Exception as exc:  # noqa: BLE001 - per-run isolation is the contract
        result.error = f"{stage}: {exc}"
    if keep_artifacts:
        return result, artifacts
    return result


def _run_single_star(args) -> RunResult:
    config, run_index = args
    return run_single(config, run_index)


@dataclass
class RunReport:
    mode: str
    rows: list[RunResult]
    config: ExperimentConfig
    manifest: list[str] = field(default_factory=list)

    @property
    def successful(self) -> list[RunResult]:
        return [r for r in self.rows if r.error is None]

    def aggregate(self) -> dict:
        ok = self.successful
        nrmse = np.array([r.nrmse for r in ok], dtype=float)
        r2 = np.array([r.r2 for r in ok], dtype=float)
        behaved = [r for r in ok if r.behavior_ok]
        return {
            "mode": self.mode,
            "n_runs": len(self.rows),
            "n_failed": len(self.rows) - len(ok),
            "nrmse_mean": float(nrmse.mean()) if len(ok) else None,
            "nrmse_variance": float(nrmse.var()) if len(ok) else None,
            "r2_mean": float(r2.mean()) if len(ok) else None,
            "r2_variance": float(r2.var()) if len(ok) else None,
            "behavior_ok_runs": len(behaved),
            "total_collisions": int(sum(r.collisions for r in ok)),
        }


def _write_report(report: RunReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_csv = out_dir / "runs.csv"
    with runs_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "seed", "nrmse", "r2", "loops_completed",
                         "collisions", "executed", "periods", "behavior_ok", "error"])
        for r in report.rows:
            writer.writerow([r.run_id, r.esn_seed,
                             "" if r.nrmse is None else f"{r.nrmse:.8g}",
                             "" if r.r2 is None else f"{r.r2:.8g}",
                             r.loops_completed, r.collisions, r.executed,
                             " ".join(map(str, r.periods)), r.behavior_ok,
                             r.error or ""])
    report.manifest.append(str(runs_csv))
    report_json = out_dir / "report.json"
    payload = report.aggregate()
    payload["config"] = _config_dict(report.config)
    report_json.write_text(json.dumps(payload, indent=2))
    report.manifest.append(str(report_json))


def _config_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["esn"] = asdict(config.esn)
    return d


def _run_experiment(config: ExperimentConfig) -> RunReport:
    indices = list(range(config.n_runs))
    n_jobs = config.n_jobs or min(os.cpu_count() or 1, config.n_runs)
    if n_jobs > 1 and config.n_runs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_run_single_star, [(config, i) for i in indices]))
    else:
        rows = [run_single(config, i) for i in indices]
    report = RunReport(mode=config.mode, rows=rows, config=config)
    if config.output_dir:
        _write_report(report, Path(config.output_dir))
    return report


def run_experiment1(config: ExperimentConfig) -> RunReport:
    """Uncued alternation: open-loop metrics plus closed-loop alternation per seed."""
    if config.mode != UNCUED:
        raise ValueError("experiment 1 runs in UNCUED mode")
    return _run_experiment(config)


def run_experiment2(config: ExperimentConfig) -> RunReport:
    """Cued sequences: open-loop metrics plus commanded-sequence execution per seed."""
    if config.mode != CUED:
        raise ValueError("experiment 2 runs in CUED mode")
    return _run_experiment(config)


# ---------------------------------------------------------------------------
# Reservoir-state analysis on experiment-1 artifacts
# ---------------------------------------------------------------------------


@dataclass
class AnalysisResult:
    reservoir_report: dict
    sensor_report: dict
    separability: dict
    pca_window: tuple[int, int]
    stream: dict
    pca_rows: np.ndarray        # (n, 6): t, pc1, pc2, label code, x, y
    stream_rows: np.ndarray     # (n, 4): t, truth, knn, svm label codes


def run_analysis(config: ExperimentConfig, model: EsnModel, test: TrajectoryDataset,
                 n_corridor_points: int = 900, knn_k: int = 5, svm_c: float = 1.0,
                 pca_steps: int = 5000, stream_steps: int = 2000) -> AnalysisResult:
    """Classifier and PCA analysis over the teacher-forced test trajectory.

    Decision labels are the next loop entered. The corridor snapshot sets
    (reservoir states vs raw sensor vectors, same records) train KNN and
    linear SVM decision predictors; the PCA/separability check runs on a
    contiguous state window.
    """
    if model.W_out is None:
        raise ExperimentError("analysis: experiment-1 artifacts missing (untrained model)")
    sample_seed = run_seed(config.seed, 0, 3)
    states, _ = run_open_loop(model, model_inputs(test, config.mode), washout=0)
    labels = next_loop_labels(test)
    labeled = labels != "NONE"
    w = config.washout

    corridor = (test.regions == CORRIDOR) & labeled
    corridor[:w] = False
    candidates = np.nonzero(corridor)[0]
    reservoir_set = ana.sample_corridor_set(states, labels, candidates,
                                            n_points=n_corridor_points,
                                            seed=sample_seed, source=ana.RESERVOIR)
    sensor_set = ana.sample_corridor_set(test.sensors, labels, candidates,
                                         n_points=n_corridor_points,
                                         seed=sample_seed, source=ana.SENSORS)

    def classifier_report(state_set):
        tr, te = ana.train_test_split_set(state_set, 0.8, seed=sample_seed)
        knn = ana.train_knn(tr, k=knn_k)
        svm = ana.train_linear_svm(tr, C=svm_c)
        rep = {"source": state_set.source, "n_points": len(state_set.labels)}
        for name, clf in (("knn", knn), ("svm", svm)):
            pred = clf.predict(te.points)
            rep[name] = {
                "train_accuracy": ana.accuracy(clf, tr.points, tr.labels),
                "test_accuracy": float(np.mean(pred == te.labels)),
                "confusion": _confusion(te.labels, pred),
            }
        return rep, knn, svm

    reservoir_report, knn, svm = classifier_report(reservoir_set)
    sensor_report, _, _ = classifier_report(sensor_set)

    # PCA + separability on a contiguous window of states.
    lo = w
    hi = min(lo + pca_steps, len(states))
    window = slice(lo, hi)
    win_ok = labeled[window]
    sep = ana.linear_separability(states[window][win_ok], labels[window][win_ok])
    label_codes = (labels == LEFT).astype(int)  # LEFT=1, RIGHT/NONE=0
    pca_rows = np.column_stack([
        np.arange(lo, hi)[win_ok],
        sep["projection"][:, 0], sep["projection"][:, 1],
        label_codes[window][win_ok],
        test.positions[window][win_ok],
    ])

    # Classifier predictions along a trajectory stretch.
    s_hi = min(lo + stream_steps, len(states))
    stream_slice = slice(lo, s_hi)
    knn_labels, knn_switches = ana.predict_stream(knn, states[stream_slice])
    svm_labels, svm_switches = ana.predict_stream(svm, states[stream_slice])
    truth = labels[stream_slice]
    stream = {
        "start": lo, "stop": s_hi,
        "knn_switches": knn_switches.tolist(),
        "svm_switches": svm_switches.tolist(),
        "knn_accuracy_vs_truth": float(np.mean((knn_labels == truth)[truth != "NONE"])),
        "svm_accuracy_vs_truth": float(np.mean((svm_labels == truth)[truth != "NONE"])),
    }
    stream_rows = np.column_stack([
        np.arange(lo, s_hi),
        (truth == LEFT).astype(int),
        (knn_labels == LEFT).astype(int),
        (svm_labels == LEFT).astype(int),
    ])
    return AnalysisResult(reservoir_report=reservoir_report,
                          sensor_report=sensor_report,
                          separability={"accuracy": sep["accuracy"],
                                        "margin": sep["margin"]},
                          pca_window=(lo, hi), stream=stream,
                          pca_rows=pca_rows, stream_rows=stream_rows)


def _confusion(truth: np.ndarray, pred: np.ndarray) -> dict:
    out = {}
    for t in (LEFT, RIGHT):
        for p in (LEFT, RIGHT):
            out[f"true_{t}_pred_{p}"] = int(np.sum((truth == t) & (pred == p)))
    return out


def write_analysis(result: AnalysisResult, out_dir) -> list[str]:
    """Emit pca.csv, stream.csv and classifier_report.json; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    pca_csv = out_dir / "pca.csv"
    with pca_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "pc1", "pc2", "label", "x", "y"])
        for t, p1, p2, code, px, py in result.pca_rows:
            writer.writerow([int(t), f"{p1:.8g}", f"{p2:.8g}",
                             LEFT if code else RIGHT, f"{px:.6g}", f"{py:.6g}"])
    paths.append(str(pca_csv))
    stream_csv = out_dir / "stream.csv"
    with stream_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "truth", "knn", "svm"])
        for t, tr, kn, sv in result.stream_rows:
            writer.writerow([int(t)] + [LEFT if v else RIGHT for v in (tr, kn, sv)])
    paths.append(str(stream_csv))
    report_json = out_dir / "classifier_report.json"
    report_json.write_text(json.dumps({
        "reservoir": result.reservoir_report,
        "sensors": result.sensor_report,
        "separability": result.separability,
        "pca_window": list(result.pca_window),
        "stream": result.stream,
    }, indent=2))
    paths.append(str(report_json))
    return paths


# ---------------------------------------------------------------------------
# Manual grid sweep (experiment-1 metrics per cell)
# ---------------------------------------------------------------------------


def sweep(config: ExperimentConfig, grid: dict[str, list]) -> list[dict]:
    """Cartesian sweep over EsnConfig fields; rows sorted by NRMSE."""
    names = list(grid)
    for name in names:
        if not hasattr(config.esn, name):
            raise ValueError(f"unknown ESN parameter {name!r}")
    rows = []
    shape = [len(grid[n]) for n in names]
    for flat in range(int(np.prod(shape))):
        idx = np.unravel_index(flat, shape)
        overrides = {n: grid[n][i] for n, i in zip(names, idx)}
        cell_esn = replace(config.esn, **overrides)
        cell = replace(config, esn=cell_esn)
        result = run_single(cell, 0, include_rollout=False)
        row = dict(overrides)
        row["nrmse"] = result.nrmse
        row["r2"] = result.r2
        row["error"] = result.error
        rows.append(row)
    rows.sort(key=lambda r: np.inf if r["nrmse"] is None else r["nrmse"])
    return rows


def write_sweep(rows: list[dict], path) -> None:
    if not rows:
        return
    keys = list(rows[0])
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


def write_trajectory(rollout: RolloutResult, path) -> None:
    """Rollout trajectory as CSV: t, x, y, theta, dtheta."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "theta", "dtheta"])
        for t, x, y, theta, dtheta in rollout.trajectory:
            writer.writerow([int(t), f"{x:.8g}", f"{y:.8g}",
                             f"{theta:.8g}", f"{dtheta:.8g}"])


def write_metrics_csv(rows: list[RunResult], path) -> None:
    """Metrics CSV rows: run_id, seed, nrmse, r2."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "seed", "nrmse", "r2"])
        for r in rows:
            writer.writerow([r.run_id, r.esn_seed,
                             "" if r.nrmse is None else f"{r.nrmse:.8g}",
                             "" if r.r2 is None else f"{r.r2:.8g}"])
