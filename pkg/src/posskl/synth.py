"""Synthetic classification data with distance-ranked possibilistic labels.

Each class ``c`` gets a prototype ``mu_c = beta * Z_c`` with ``Z_c`` standard
normal. A sample draws ``c`` uniformly, sets ``x = mu_c + s * noise`` and
annotates it with ``pi_c = 1`` and, for the other classes ranked by squared
distance of their prototype to ``x`` (ties by index),
``pi_j(r) = min(1 - rho, rho + max(0, alpha(x) - (r - 1) * step))`` where
``alpha(x) = min(1 - rho, max(0, alpha + s_alpha * eta))``, ``eta ~ N(0, 1)``.

Random streams come from ``numpy.random.SeedSequence(seed).spawn(5)``:
prototypes, train labels/noise, test labels/noise, train eta, test eta.
Each stream feeds a PCG64 ``Generator``; normals use numpy's ziggurat
sampler. Changing ``alpha`` therefore leaves prototypes and inputs intact.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

GENERATOR_ID = "numpy.SeedSequence.spawn(5)/PCG64/standard_normal(ziggurat)"

# prototype scale used with each input dimension in the reference experiments
BETA_FOR_DIM = {30: 1.5, 80: 0.9, 150: 0.6}


@dataclass(frozen=True)
class SynthConfig:
    n: int = 20
    d: int = 30
    beta: float = 1.5
    s: float = 2.0
    alpha: float = 0.95
    s_alpha: float = 0.15
    delta_pi: float = 0.01
    rho_pi: float = 1e-6
    n_train: int = 200
    n_test: int = 3000
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.d < 1:
            raise ValueError("need n >= 2 classes and d >= 1")
        for name in ("beta", "s", "s_alpha", "delta_pi"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.rho_pi < 0.5:
            raise ValueError("rho_pi must lie in (0, 0.5)")
        if self.n_train < 0 or self.n_test < 0:
            raise ValueError("dataset sizes must be nonnegative")

    @classmethod
    def for_dimension(cls, d: int, **kw) -> SynthConfig:
        return cls(d=d, beta=BETA_FOR_DIM[d], **kw)


class DatasetRecord(NamedTuple):
    x: np.ndarray
    c: int  # 0-based class index
    pi: np.ndarray


@dataclass
class Dataset:
    """Column-stored records: ``X`` (N, d), ``labels`` (N,) 0-based, ``pi`` (N, n)."""

    X: np.ndarray
    labels: np.ndarray
    pi: np.ndarray

    def __len__(self) -> int:
        return self.labels.size

    def __iter__(self) -> Iterator[DatasetRecord]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> DatasetRecord:
        return DatasetRecord(self.X[k], int(self.labels[k]), self.pi[k])

    @property
    def n_classes(self) -> int:
        return self.pi.shape[1]


def annotate(x: np.ndarray, c: int, prototypes: np.ndarray, config: SynthConfig,
             eta: float) -> np.ndarray:
    """Possibility vector for one labeled input; ``eta`` is its standard normal draw."""
    rho = config.rho_pi
    dist = np.sum((prototypes - x) ** 2, axis=1)
    order = np.lexsort((np.arange(dist.size), dist))
    others = order[order != c]
    level = min(1.0 - rho, max(0.0, config.alpha + config.s_alpha * eta))
    ranks = np.arange(others.size)
    alpha_r = np.maximum(0.0, level - ranks * config.delta_pi)
    pi = np.empty(dist.size)
    pi[c] = 1.0
    pi[others] = np.minimum(1.0 - rho, rho + alpha_r)
    return pi


def _split(config: SynthConfig, prototypes: np.ndarray, size: int,
           draw_rng: np.random.Generator, eta_rng: np.random.Generator) -> Dataset:
    labels = draw_rng.integers(0, config.n, size=size)
    noise = draw_rng.standard_normal((size, config.d))
    X = prototypes[labels] + config.s * noise
    etas = eta_rng.standard_normal(size)
    pi = np.empty((size, config.n))
    for k in range(size):
        pi[k] = annotate(X[k], labels[k], prototypes, config, etas[k])
    return Dataset(X, labels, pi)


def generate(config: SynthConfig) -> tuple[Dataset, Dataset, np.ndarray]:
    """Return ``(train, test, prototypes)``; fully determined by ``config.seed``."""
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(5)]
    proto_rng, train_rng, test_rng, eta_train, eta_test = streams
    prototypes = config.beta * proto_rng.standard_normal((config.n, config.d))
    train = _split(config, prototypes, config.n_train, train_rng, eta_train)
    test = _split(config, prototypes, config.n_test, test_rng, eta_test)
    return train, test, prototypes


def write_jsonl(path: str | Path, data: Dataset, config: SynthConfig, split: str) -> None:
    """One header line ``{"meta": ...}`` then one record per line; labels are 1-based."""
    meta = {"config": asdict(config), "split": split, "generator": GENERATOR_ID,
            "label_base": 1}
    with open(path, "w") as fh:
        fh.write(json.dumps({"meta": meta}) + "\n")
        for rec in data:
            fh.write(json.dumps({"x": rec.x.tolist(), "c": rec.c + 1, "pi": rec.pi.tolist()}) + "\n")


def read_jsonl(path: str | Path) -> tuple[Dataset, dict]:
    xs, cs, pis = [], [], []
    meta: dict = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "meta" in obj:
                meta = obj["meta"]
                continue
            xs.append(obj["x"])
            cs.append(int(obj["c"]) - 1)
            pis.append(obj["pi"])
    if not cs:
        raise ValueError(f"{path}: no records")
    return Dataset(np.asarray(xs, dtype=np.float64), np.asarray(cs, dtype=np.int64),
                   np.asarray(pis, dtype=np.float64)), meta
