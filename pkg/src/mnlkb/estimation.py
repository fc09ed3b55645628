"""Epoch-based utility estimates and their confidence bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mnl import Assortment, Instance

CONFIDENCE_SCALE = 48.0


@dataclass
class EpochOutcome:
    assortment: Assortment
    purchase_counts: dict[int, int]
    length: int

    def __post_init__(self):
        extra = set(self.purchase_counts) - set(self.assortment)
        if extra:
            raise ValueError(f"purchase counts for products outside the assortment: {sorted(extra)}")
        if any(c < 0 for c in self.purchase_counts.values()):
            raise ValueError("purchase counts must be nonnegative")
        if sum(self.purchase_counts.values()) != self.length - 1:
            raise ValueError("an epoch is its purchases plus one terminating no-purchase")


@dataclass
class EstimatorState:
    """Per-product epoch statistics.  Arrays are indexed by label - 1."""

    n_products: int
    v_max: float
    epoch_index: int = 0
    offered_epochs: np.ndarray = field(default=None)
    count_sum: np.ndarray = field(default=None)
    ucb: np.ndarray = field(default=None)
    lcb: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.n_products
        if self.offered_epochs is None:
            self.offered_epochs = np.zeros(n, dtype=np.int64)
        if self.count_sum is None:
            self.count_sum = np.zeros(n, dtype=np.int64)
        if self.ucb is None:
            self.ucb = np.full(n, float(self.v_max))
        if self.lcb is None:
            self.lcb = np.zeros(n)

    @property
    def mean(self) -> np.ndarray:
        """Sample mean of per-epoch purchase counts; NaN where never offered."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.offered_epochs > 0, self.count_sum / np.maximum(self.offered_epochs, 1), np.nan)

    def snapshot(self) -> dict:
        return {
            "epoch": self.epoch_index,
            "lcb": self.lcb.tolist(),
            "ucb": self.ucb.tolist(),
            "offered_epochs": self.offered_epochs.tolist(),
        }


def init_state(inst: Instance) -> EstimatorState:
    return EstimatorState(n_products=inst.n_products, v_max=inst.v_max)


def confidence_radius(mean: float, t_i: int, ell: int, n: int) -> float:
    """sqrt(mean * A) + A with A = 48 log(sqrt(n) ell^4 + 1) / t_i."""
    if t_i < 1:
        raise ValueError("radius needs at least one observed epoch")
    if ell < 1 or n < 1:
        raise ValueError("epoch index and product count must be positive")
    a = CONFIDENCE_SCALE * math.log(math.sqrt(n) * float(ell) ** 4 + 1.0) / t_i
    return math.sqrt(max(mean, 0.0) * a) + a


def record_epoch(state: EstimatorState, outcome: EpochOutcome, n: int, multiplier: float = 1.0) -> EstimatorState:
    """Fold one completed epoch into ``state`` (in place) and return it.

    ``multiplier`` scales the observed counts; values other than 1 corrupt
    the estimator and exist only for fault-injection diagnostics.
    """
    ell = state.epoch_index + 1
    for i in outcome.assortment:
        k = i - 1
        state.offered_epochs[k] += 1
        state.count_sum[k] += outcome.purchase_counts.get(i, 0)
        t_i = int(state.offered_epochs[k])
        mean = multiplier * state.count_sum[k] / t_i
        rad = confidence_radius(mean, t_i, ell, n)
        state.ucb[k] = min(mean + rad, state.v_max)
        # v_i <= v_max is known, so the lower bound never needs to exceed it
        state.lcb[k] = min(max(mean - rad, 0.0), state.v_max)
    state.epoch_index = ell
    return state
