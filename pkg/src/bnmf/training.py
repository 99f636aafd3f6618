"""Minibatch training loop and trainability sweeps for the surrogate network."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .data import Dataset
from .ensemble import DegenerateInputError
from .network import SurrogateNetwork, cross_entropy, forward, init_network, loss_and_grad
from .optim import make_optimizer
from .theory import MfParams, depth_scales


@dataclass(frozen=True)
class TrainConfig:
    depth: int
    width: int
    sigma_m2: float
    sigma_b2: float = 1e-3
    optimizer: str = "adam"
    lr: float = 2e-4
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    mean_init: str = "symmetric_bernoulli"
    gain: float = 1.0
    dtype: str = "float64"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class TrainResult:
    history: list[dict]
    net: SurrogateNetwork
    config: TrainConfig


def accuracy(net: SurrogateNetwork, dataset: Dataset, batch: int = 1024) -> float:
    hits = 0
    for start in range(0, len(dataset), batch):
        x = dataset.inputs[start:start + batch]
        logits, _ = forward(net, x)
        hits += int(np.sum(np.argmax(logits, axis=1)
                           == dataset.labels[start:start + batch]))
    return hits / len(dataset)


def mean_loss(net: SurrogateNetwork, dataset: Dataset, batch: int = 1024) -> float:
    total = 0.0
    for start in range(0, len(dataset), batch):
        x = dataset.inputs[start:start + batch]
        y = dataset.labels[start:start + batch]
        total += cross_entropy(forward(net, x)[0], y) * len(y)
    return total / len(dataset)


def train(config: TrainConfig, train_set: Dataset,
          test_set: Dataset | None = None) -> TrainResult:
    """Train a fresh network; deterministic given config and data.

    Batches follow a per-epoch shuffle drawn from a stream derived from
    (seed, epoch). History rows carry per-epoch mean batch loss and
    end-of-epoch train/test accuracy (test NaN when no test set given).
    """
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    dtype = np.dtype(config.dtype)
    widths = ([train_set.inputs.shape[1]]
              + [config.width] * (config.depth - 1)
              + [train_set.n_classes])
    net = init_network(widths, config.sigma_m2, config.sigma_b2,
                       mean_init=config.mean_init, seed=config.seed,
                       gain=config.gain)
    if dtype != np.float64:
        net = net.astype(dtype)
    opt = make_optimizer(config.optimizer, config.lr)

    x_all = train_set.inputs.astype(dtype)
    y_all = train_set.labels
    history = []
    for epoch in range(config.epochs):
        perm = rng.stream(config.seed, epoch, rng.ROLE_SHUFFLE).permutation(len(train_set))
        loss_sum = 0.0
        for start in range(0, len(train_set), config.batch_size):
            take = perm[start:start + config.batch_size]
            try:
                loss, grads = loss_and_grad(net, x_all[take], y_all[take])
            except DegenerateInputError as exc:
                raise DegenerateInputError(
                    f"epoch {epoch}, batch {start // config.batch_size}: {exc}") from exc
            opt.step(net, grads)
            loss_sum += loss * len(take)
        row = {
            "epoch": epoch,
            "train_loss": loss_sum / len(train_set),
            "train_acc": accuracy(net, train_set),
            "test_acc": accuracy(net, test_set) if test_set is not None else math.nan,
        }
        history.append(row)
    if dtype != np.float64:
        net = net.astype(np.float64)
    return TrainResult(history=history, net=net, config=config)


def trainability_grid(base: TrainConfig, depths, sigma_m2s, train_set: Dataset,
                      test_set: Dataset | None = None,
                      progress=None) -> list[dict]:
    """Train one network per (depth, sigma_m2) cell; summary rows in grid order.

    Each row carries the final train/test accuracy together with the
    correlation depth scale of the matching theory point, the overlay
    against which trainability is read. Failed cells are recorded with an
    error message and the grid continues.
    """
    xi_c_cache: dict[float, float] = {}
    rows = []
    for depth in depths:
        for sigma_m2 in sigma_m2s:
            if sigma_m2 not in xi_c_cache:
                params = MfParams(sigma_m2=sigma_m2, sigma_b2=base.sigma_b2,
                                  kappa=base.gain)
                xi_c_cache[sigma_m2] = depth_scales(params).xi_c
            config = replace(base, depth=depth, sigma_m2=sigma_m2)
            row = {"depth": depth, "sigma_m2": sigma_m2,
                   "xi_c_theory": xi_c_cache[sigma_m2]}
            try:
                result = train(config, train_set, test_set)
                last = result.history[-1] if result.history else {}
                row["final_train_acc"] = last.get("train_acc", math.nan)
                row["final_test_acc"] = last.get("test_acc", math.nan)
                row["error"] = ""
                row["history"] = result.history
            except Exception as exc:  # record and continue the sweep
                row["final_train_acc"] = math.nan
                row["final_test_acc"] = math.nan
                row["error"] = str(exc)
                row["history"] = []
            rows.append(row)
            if progress is not None:
                progress(row)
    return rows
