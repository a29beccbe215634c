"""Echo State Network: construction, state updates, ridge readout, metrics.

The reservoir follows the leaky-integrator dynamics

    x[n] = (1 - a) * x[n-1] + a * tanh(W x[n-1] + W_in [1; u[n]] + noise)

with fixed sparse recurrent weights W and fixed input weights W_in; only the
linear readout W_out is trained, by ridge regression on the feature vector
[1; u[n]; x[n]].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as splinalg


class DegenerateDrawError(RuntimeError):
    """The sampled reservoir matrix has zero spectral radius; rebuild with a perturbed seed."""


class UntrainedModelError(RuntimeError):
    """Readout requested before the output weights were trained."""


class SingularSystemError(np.linalg.LinAlgError):
    """The regularized normal equations are singular; use a regularization > 0."""


class UndefinedNormalizationError(ValueError):
    """NRMSE is undefined for a constant target (sigma = 0)."""


_CHUNK = 2048  # time steps per vectorized block in the state loops


@dataclass(frozen=True)
class EsnConfig:
    """Hyperparameters of one network; ``input_scaling`` has one entry per input channel."""

    n_units: int
    n_inputs: int
    n_outputs: int = 1
    input_connectivity: float = 0.2
    reservoir_connectivity: float = 0.19
    spectral_radius: float = 1.4
    leak_rate: float = 0.0181
    state_noise: float = 1e-2
    input_scaling: tuple[float, ...] = ()
    regularization: float = 4.1e-8
    seed: int = 0

    def __post_init__(self):
        scaling = self.input_scaling
        if np.isscalar(scaling):
            scaling = (float(scaling),) * self.n_inputs
        elif len(scaling) == 0:
            scaling = (1.0,) * self.n_inputs
        else:
            scaling = tuple(float(s) for s in scaling)
        object.__setattr__(self, "input_scaling", scaling)
        if self.n_units < 1 or self.n_inputs < 1 or self.n_outputs < 1:
            raise ValueError("n_units, n_inputs, n_outputs must be positive")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ValueError(f"leak_rate must be in (0, 1], got {self.leak_rate}")
        for name in ("input_connectivity", "reservoir_connectivity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.spectral_radius <= 0.0:
            raise ValueError("spectral_radius must be positive")
        if self.state_noise < 0.0 or self.regularization < 0.0:
            raise ValueError("state_noise and regularization must be nonnegative")
        if len(self.input_scaling) != self.n_inputs:
            raise ValueError("input_scaling needs exactly n_inputs entries")
        if any(s <= 0 for s in self.input_scaling):
            raise ValueError("input_scaling entries must be positive")

    @property
    def n_features(self) -> int:
        """Length of the readout feature vector [1; u; x]."""
        return 1 + self.n_inputs + self.n_units


@dataclass
class EsnModel:
    """Weight matrices of one network; W and W_in are frozen after construction."""

    config: EsnConfig
    W: sp.csr_matrix
    W_in: np.ndarray
    W_out: np.ndarray | None = None

    @property
    def trained(self) -> bool:
        return self.W_out is not None

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.config.n_units)


def spectral_radius(W, max_iter: int = 1000, tol: float = 1e-9) -> float:
    """Largest eigenvalue magnitude of a (sparse) square matrix.

    Uses ARPACK's Arnoldi iteration with a fixed start vector; random
    reservoir matrices usually have a complex dominant pair, which plain
    single-vector power iteration cannot track. Small or awkward cases
    fall back to the dense eigenvalue solver.
    """
    n = W.shape[0]
    dense = not sp.issparse(W)
    if n <= 200:
        Wd = W.toarray() if not dense else np.asarray(W)
        return float(np.max(np.abs(np.linalg.eigvals(Wd))))
    try:
        v0 = np.full(n, 1.0 / np.sqrt(n))
        vals = splinalg.eigs(W, k=1, which="LM", maxiter=max_iter, tol=tol,
                             v0=v0, return_eigenvectors=False)
        return float(np.abs(vals[0]))
    except (splinalg.ArpackNoConvergence, splinalg.ArpackError):
        Wd = W.toarray() if sp.issparse(W) else np.asarray(W)
        return float(np.max(np.abs(np.linalg.eigvals(Wd))))


def build_esn(config: EsnConfig) -> EsnModel:
    """Sample the fixed weights and rescale W to the configured spectral radius.

    Reservoir and input weights are uniform on [-1, 1]; sparsity masks are
    Bernoulli draws at the configured connectivities. The same seed always
    yields a bit-identical model. A degenerate draw (zero spectral radius,
    e.g. zero connectivity) raises ``DegenerateDrawError``.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_units
    w = rng.uniform(-1.0, 1.0, (n, n))
    w *= rng.random((n, n)) < config.reservoir_connectivity
    W = sp.csr_matrix(w)
    rho = spectral_radius(W) if W.nnz else 0.0
    if rho <= 0.0:
        raise DegenerateDrawError(
            "sampled reservoir has spectral radius 0; rebuild with a perturbed seed")
    W = W * (config.spectral_radius / rho)

    w_in = rng.uniform(-1.0, 1.0, (n, 1 + config.n_inputs))
    w_in *= rng.random(w_in.shape) < config.input_connectivity
    w_in[:, 1:] *= np.asarray(config.input_scaling)

    W.data.flags.writeable = False
    W.indices.flags.writeable = False
    W.indptr.flags.writeable = False
    w_in.flags.writeable = False
    return EsnModel(config=config, W=W, W_in=w_in)


def update_state(model: EsnModel, state: np.ndarray, u: np.ndarray,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """One leaky-integrator step.

    When ``rng`` is given and the configured noise amplitude is nonzero,
    uniform noise is added to the pre-tanh activation (the regularizing
    noise used while collecting training states; evaluation runs without it).
    """
    cfg = model.config
    state = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape != (cfg.n_inputs,):
        raise ValueError(f"expected input of shape ({cfg.n_inputs},), got {u.shape}")
    if state.shape != (cfg.n_units,):
        raise ValueError(f"expected state of shape ({cfg.n_units},), got {state.shape}")
    pre = model.W @ state + model.W_in[:, 0] + model.W_in[:, 1:] @ u
    if rng is not None and cfg.state_noise > 0.0:
        pre = pre + rng.uniform(-cfg.state_noise, cfg.state_noise, cfg.n_units)
    return (1.0 - cfg.leak_rate) * state + cfg.leak_rate * np.tanh(pre)


def readout(model: EsnModel, u: np.ndarray, state: np.ndarray) -> np.ndarray:
    """Linear readout from [1; u; x]; identity output nonlinearity."""
    if model.W_out is None:
        raise UntrainedModelError("W_out is not trained yet")
    z = np.concatenate(([1.0], np.asarray(u, dtype=float), np.asarray(state, dtype=float)))
    if z.shape[0] != model.W_out.shape[1]:
        raise ValueError(f"feature length {z.shape[0]} does not match W_out columns "
                         f"{model.W_out.shape[1]}")
    return model.W_out @ z


def ridge_regression(X: np.ndarray, Y: np.ndarray, beta: float) -> np.ndarray:
    """Solve W = Y X^T (X X^T + beta I)^{-1} for column-stacked X (features x time).

    The symmetric system is solved by Cholesky factorization, never by an
    explicit inverse. A singular system (typically beta = 0 with rank-deficient
    X) raises ``SingularSystemError``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ValueError("X and Y must be 2-D with the same number of time columns")
    G = X @ X.T
    G[np.diag_indices_from(G)] += beta
    return _solve_gram(G, X @ Y.T).T


def _solve_gram(G: np.ndarray, B: np.ndarray) -> np.ndarray:
    try:
        c, low = scipy.linalg.cho_factor(G, lower=True, check_finite=False)
        return scipy.linalg.cho_solve((c, low), B, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "X X^T + beta I is singular; use a regularization beta > 0") from exc


def _iterate_chunks(model: EsnModel, inputs: np.ndarray,
                    rng: np.random.Generator | None, state: np.ndarray):
    """Yield (start, U_chunk, X_chunk) blocks of the teacher-forced state sequence."""
    cfg = model.config
    W, w_bias, w_u = model.W, model.W_in[:, 0], model.W_in[:, 1:]
    a = cfg.leak_rate
    noisy = rng is not None and cfg.state_noise > 0.0
    for start in range(0, inputs.shape[0], _CHUNK):
        u_chunk = inputs[start:start + _CHUNK]
        drive = u_chunk @ w_u.T + w_bias
        if noisy:
            drive = drive + rng.uniform(-cfg.state_noise, cfg.state_noise, drive.shape)
        x_chunk = np.empty((u_chunk.shape[0], cfg.n_units))
        for i in range(u_chunk.shape[0]):
            state = (1.0 - a) * state + a * np.tanh(W @ state + drive[i])
            x_chunk[i] = state
        yield start, u_chunk, x_chunk


def run_open_loop(model: EsnModel, inputs: np.ndarray, washout: int = 0,
                  rng: np.random.Generator | None = None,
                  initial_state: np.ndarray | None = None,
                  ) -> tuple[np.ndarray, np.ndarray | None]:
    """Drive the reservoir over a time-major input sequence from the zero state.

    Returns ``(states, outputs)`` with the first ``washout`` steps dropped;
    ``outputs`` is None when the readout is untrained.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[0] == 0:
        raise ValueError("inputs must be non-empty")
    if inputs.shape[1] != model.config.n_inputs:
        raise ValueError(f"expected {model.config.n_inputs} input channels, "
                         f"got {inputs.shape[1]}")
    state = model.zero_state() if initial_state is None else np.asarray(initial_state, float)
    states = np.empty((inputs.shape[0], model.config.n_units))
    for start, _, x_chunk in _iterate_chunks(model, inputs, rng, state):
        states[start:start + x_chunk.shape[0]] = x_chunk
        state = x_chunk[-1]
    states = states[washout:]
    outputs = None
    if model.trained:
        w = model.W_out
        u_part = inputs[washout:]
        outputs = (w[:, 0] + u_part @ w[:, 1:1 + model.config.n_inputs].T
                   + states @ w[:, 1 + model.config.n_inputs:].T)
    return states, outputs


def train_readout(model: EsnModel, inputs: np.ndarray, targets: np.ndarray,
                  washout: int = 100, rng: np.random.Generator | None = None,
                  beta: float | None = None, return_state: bool = False):
    """Fit W_out by ridge regression over a teacher-forced run.

    ``inputs`` is (T, n_inputs) and ``targets`` (T, n_outputs) or (T,);
    the first ``washout`` steps are excluded from the regression. The Gram
    matrix is accumulated in blocks so the full state history is never
    materialized. Returns the trained W_out (also stored on the model), or
    ``(W_out, final_state)`` with ``return_state`` so evaluation can continue
    the run instead of restarting from the zero state.
    """
    cfg = model.config
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if inputs.shape[0] != targets.shape[0]:
        raise ValueError("inputs and targets must have the same time length")
    if inputs.shape[0] <= washout:
        raise ValueError(f"time length {inputs.shape[0]} must exceed washout {washout}")
    if beta is None:
        beta = cfg.regularization

    nf = cfg.n_features
    G = np.zeros((nf, nf))
    B = np.zeros((nf, cfg.n_outputs))
    state = model.zero_state()
    for start, u_chunk, x_chunk in _iterate_chunks(model, inputs, rng, state):
        state = x_chunk[-1]
        lo = max(washout - start, 0)
        if lo >= u_chunk.shape[0]:
            continue
        block = np.empty((u_chunk.shape[0] - lo, nf))
        block[:, 0] = 1.0
        block[:, 1:1 + cfg.n_inputs] = u_chunk[lo:]
        block[:, 1 + cfg.n_inputs:] = x_chunk[lo:]
        G += block.T @ block
        B += block.T @ targets[start + lo:start + u_chunk.shape[0]]
    G[np.diag_indices_from(G)] += beta
    model.W_out = _solve_gram(G, B).T
    if return_state:
        return model.W_out, state
    return model.W_out


@dataclass(frozen=True)
class RegressionMetrics:
    nrmse: float
    r2: float


def compute_metrics(y: np.ndarray, y_hat: np.ndarray) -> RegressionMetrics:
    """NRMSE (RMSE over the population standard deviation of y) and R^2."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size == 0 or y.shape != y_hat.shape:
        raise ValueError("y and y_hat must be non-empty and of equal length")
    resid = y - y_hat
    ss_res = float(resid @ resid)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    sigma = np.sqrt(ss_tot / y.size)
    if sigma == 0.0:
        raise UndefinedNormalizationError("target is constant; NRMSE normalization undefined")
    nrmse = np.sqrt(ss_res / y.size) / sigma
    r2 = 1.0 - ss_res / ss_tot
    return RegressionMetrics(nrmse=float(nrmse), r2=float(r2))


# ---------------------------------------------------------------------------
# Model container (numpy .npz, format version 1): config as JSON, W as COO
# triplets (row, col, val), plus W_in and, when trained, W_out.
# ---------------------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def save_model(model: EsnModel, path) -> None:
    coo = model.W.tocoo()
    payload = {
        "format_version": np.array(MODEL_FORMAT_VERSION),
        "config_json": np.array(json.dumps(model.config.__dict__)),
        "w_row": coo.row.astype(np.int64),
        "w_col": coo.col.astype(np.int64),
        "w_val": coo.data,
        "w_in": model.W_in,
    }
    if model.W_out is not None:
        payload["w_out"] = model.W_out
    np.savez(path, **payload)


def load_model(path) -> EsnModel:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        cfg_dict = json.loads(str(z["config_json"]))
        cfg_dict["input_scaling"] = tuple(cfg_dict["input_scaling"])
        config = EsnConfig(**cfg_dict)
        n = config.n_units
        W = sp.coo_matrix((z["w_val"], (z["w_row"], z["w_col"])), shape=(n, n)).tocsr()
        w_in = z["w_in"]
        w_out = z["w_out"] if "w_out" in z.files else None
    W.data.flags.writeable = False
    W.indices.flags.writeable = False
    W.indptr.flags.writeable = False
    w_in.flags.writeable = False
    return EsnModel(config=config, W=W, W_in=w_in, W_out=w_out)
