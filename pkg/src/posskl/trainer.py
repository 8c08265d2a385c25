"""Linear softmax classifier trained against possibilistic labels.

Two objectives share the model ``s(x) = W x + b``:

* ``projection`` (Model A): the target is the KL projection of the current
  prediction onto the record's feasible set, recomputed every step and held
  constant for differentiation.
* ``fixed`` (Model B): the target is the antipignistic reverse image of the
  record's possibility vector.

Both minimize ``KL(p || q)`` so the score gradient is ``q - p``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from posskl.antipignistic import poss_to_prob
from posskl.dykstra import kl_project
from posskl.feasible import FeasibleSet, build_feasible_set
from posskl.synth import Dataset

PROJECTION = "projection"
FIXED = "fixed"
OBJECTIVES = (PROJECTION, FIXED)

HISTORY_COLUMNS = ("epoch", "mean_loss", "train_accuracy", "mean_projection_cycles")

# floor applied to q before projecting; only bites when softmax underflows
_Q_FLOOR = 1e-300


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class LinearModel:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64)
        self.b = np.array(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"shape mismatch: W {self.W.shape}, b {self.b.shape}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("model parameters must be finite")

    @classmethod
    def zeros(cls, n: int, d: int) -> LinearModel:
        return cls(np.zeros((n, d)), np.zeros(n))

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.d:
            raise ValueError(f"input dimension {X.shape[-1]} does not match model d={self.d}")
        return X @ self.W.T + self.b

    def copy(self) -> LinearModel:
        return LinearModel(self.W.copy(), self.b.copy())

    def to_dict(self, config_hash: str = "") -> dict:
        return {"n": self.n, "d": self.d, "W": self.W.tolist(), "b": self.b.tolist(),
                "config_hash": config_hash}

    @classmethod
    def from_dict(cls, obj: dict) -> LinearModel:
        W = np.asarray(obj["W"], dtype=np.float64).reshape(int(obj["n"]), int(obj["d"]))
        return cls(W, np.asarray(obj["b"], dtype=np.float64))


@dataclass(frozen=True)
class TrainConfig:
    objective: str = PROJECTION
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int | None = None
    epochs: int | None = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    proj_tol: float = 1e-8
    proj_max_cycles: int = 2000
    # a feasible Dykstra iterate can still be far from the projection; targets
    # must also stop moving (max-norm change per cycle) before they are used
    proj_stationary_tol: float | None = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning_rate must be positive and weight_decay nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs is not None and self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValueError("invalid Adam constants")
        if not 0 < self.proj_tol <= 1 or self.proj_max_cycles < 1:
            raise ValueError("invalid projection settings")
        if self.proj_stationary_tol is not None and self.proj_stationary_tol <= 0:
            raise ValueError("proj_stationary_tol must be positive")

    def resolved(self, n_train: int) -> tuple[int, int]:
        """Batch size and epoch count, falling back to the size-dependent defaults."""
        small = n_train <= 200
        batch = self.batch_size or (64 if small else 128)
        epochs = self.epochs if self.epochs is not None else (80 if small else 60)
        return batch, epochs

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _log_softmax(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def predict(model: LinearModel, x: np.ndarray) -> np.ndarray:
    """Max-shifted softmax of the scores; works on one input or a batch."""
    s = model.scores(x)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _kl_rows(p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    log_p = np.log(np.where(p > 0, p, 1.0))
    return np.sum(np.where(p > 0, p * (log_p - log_q), 0.0), axis=-1)


class TargetCache:
    """Feasible set and antipignistic target per record, built on first use."""

    def __init__(self, pi: np.ndarray):
        self.pi = np.asarray(pi, dtype=np.float64)
        self._sets: dict[int, FeasibleSet] = {}
        self._p_dot: dict[int, np.ndarray] = {}

    def feasible_set(self, k: int) -> FeasibleSet:
        fs = self._sets.get(k)
        if fs is None:
            fs = self._sets[k] = build_feasible_set(self.pi[k])
        return fs

    def p_dot(self, k: int) -> np.ndarray:
        p = self._p_dot.get(k)
        if p is None:
            p = self._p_dot[k] = poss_to_prob(self.pi[k])
        return p


@dataclass
class BatchResult:
    loss: float
    grad_W: np.ndarray
    grad_b: np.ndarray
    targets: np.ndarray
    q: np.ndarray
    losses: np.ndarray
    fixed_losses: np.ndarray
    cycles: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    unconverged: int = 0


def batch_loss_and_gradient(model: LinearModel, X: np.ndarray, idx: np.ndarray,
                            cache: TargetCache, config: TrainConfig) -> BatchResult:
    """Mean KL loss over the batch and its gradient, weight decay included.

    The returned loss excludes the L2 term; the gradient includes
    ``weight_decay * theta`` (so it is the gradient of
    ``loss + weight_decay / 2 * ||theta||^2``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    log_q = _log_softmax(model.scores(X))
    q = np.exp(log_q)
    p_dot = np.stack([cache.p_dot(int(k)) for k in idx])
    cycles = np.zeros(len(idx), dtype=np.int64)
    unconverged = 0
    if config.objective == PROJECTION:
        targets = np.empty_like(q)
        for row, k in enumerate(idx):
            qk = np.maximum(q[row], _Q_FLOOR)
            rep = kl_project(qk / qk.sum(), cache.feasible_set(int(k)),
                             tol=config.proj_tol, max_cycles=config.proj_max_cycles,
                             stationary_tol=config.proj_stationary_tol)
            targets[row] = rep.p_star
            cycles[row] = rep.cycles_used
            unconverged += not rep.converged
    else:
        targets = p_dot
    losses = _kl_rows(targets, log_q)
    fixed_losses = _kl_rows(p_dot, log_q)
    g = (q - targets) / len(idx)
    grad_W = g.T @ X + config.weight_decay * model.W
    grad_b = g.sum(axis=0) + config.weight_decay * model.b
    return BatchResult(float(losses.mean()), grad_W, grad_b, targets, q, losses,
                       fixed_losses, cycles, unconverged)


def loss_and_gradient(model: LinearModel, x: np.ndarray, pi: np.ndarray,
                      config: TrainConfig, cache: TargetCache | None = None,
                      index: int = 0) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Per-instance loss and ``(grad_W, grad_b)``; see ``batch_loss_and_gradient``."""
    if cache is None:
        cache, index = TargetCache(np.atleast_2d(pi)), 0
    res = batch_loss_and_gradient(model, np.atleast_2d(x), np.array([index]), cache, config)
    return res.loss, (res.grad_W, res.grad_b)


@dataclass
class TrainHistory:
    rows: list[dict] = field(default_factory=list)
    ordering_violations: int = 0
    unconverged_projections: int = 0
    meta: dict = field(default_factory=dict)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
            w = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
            w.writeheader()
            for row in self.rows:
                w.writerow({k: row[k] for k in HISTORY_COLUMNS})


def train(data: Dataset, config: TrainConfig,
          model: LinearModel | None = None) -> tuple[LinearModel, TrainHistory]:
    """Mini-batch Adam; returns the final model and per-epoch history.

    Each batch also checks ``loss_A <= KL(p_dot || q) + 1e-10`` per instance;
    failures are counted in ``history.ordering_violations``.
    """
    N = len(data)
    if N == 0:
        raise ValueError("cannot train on an empty dataset")
    model = LinearModel.zeros(data.n_classes, data.X.shape[1]) if model is None else model.copy()
    batch, epochs = config.resolved(N)
    cache = TargetCache(data.pi)
    rng = np.random.default_rng(config.seed)
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_eps, config.learning_rate
    mW, vW = np.zeros_like(model.W), np.zeros_like(model.W)
    mb, vb = np.zeros_like(model.b), np.zeros_like(model.b)
    history = TrainHistory(meta={
        "objective": config.objective, "adam": [b1, b2, eps], "weight_decay": config.weight_decay,
        "weight_decay_mode": "coupled", "batch_size": batch, "epochs": epochs,
        "learning_rate": lr, "init": "zeros", "config_hash": config.digest(),
    })
    step = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(N)
        loss_sum = correct = cyc_sum = 0.0
        for start in range(0, N, batch):
            idx = order[start:start + batch]
            res = batch_loss_and_gradient(model, data.X[idx], idx, cache, config)
            if not math.isfinite(res.loss):
                raise TrainingDiverged(json.dumps({
                    "event": "non-finite loss", "epoch": epoch, "step": step,
                    "objective": config.objective}))
            if config.objective == PROJECTION:
                history.ordering_violations += int(np.sum(res.losses > res.fixed_losses + 1e-10))
            history.unconverged_projections += res.unconverged
            loss_sum += res.losses.sum()
            correct += np.sum(np.argmax(res.q, axis=1) == data.labels[idx])
            cyc_sum += res.cycles.sum()

            step += 1
            mW = b1 * mW + (1 - b1) * res.grad_W
            vW = b2 * vW + (1 - b2) * res.grad_W ** 2
            mb = b1 * mb + (1 - b1) * res.grad_b
            vb = b2 * vb + (1 - b2) * res.grad_b ** 2
            c1, c2 = 1 - b1 ** step, 1 - b2 ** step
            model.W -= lr * (mW / c1) / (np.sqrt(vW / c2) + eps)
            model.b -= lr * (mb / c1) / (np.sqrt(vb / c2) + eps)
        history.rows.append({
            "epoch": epoch,
            "mean_loss": float(loss_sum / N),
            "train_accuracy": float(correct / N),
            "mean_projection_cycles": float(cyc_sum / N),
        })
    return model, history


def evaluate(model: LinearModel, data: Dataset) -> float:
    """Top-1 accuracy; ``argmax`` breaks ties toward the lowest index."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    pred = np.argmax(predict(model, data.X), axis=1)
    return float(np.mean(pred == data.labels))


def save_checkpoint(path: str | Path, model: LinearModel, config: TrainConfig) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(config.digest()), fh)


def load_checkpoint(path: str | Path) -> LinearModel:
    with open(path) as fh:
        return LinearModel.from_dict(json.load(fh))
