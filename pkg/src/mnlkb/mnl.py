"""Ground-truth multinomial logit market.

Products are labelled 1..N throughout the public API and 0 denotes the
no-purchase option.  An assortment is a strictly increasing tuple of labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Assortment = tuple[int, ...]

OUTSIDE_UTILITY = 1.0


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Instance:
    """One market: N products, cardinality cap K, horizon T."""

    revenues: np.ndarray
    inventories: np.ndarray
    true_utilities: np.ndarray
    cardinality_cap: int
    horizon: int
    v_max: float = 1.0
    # index 0 holds the outside option so that weights[i] is v_i for label i
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    prices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r = _frozen(self.revenues, float)
        q = _frozen(self.inventories, np.int64)
        v = _frozen(self.true_utilities, float)
        object.__setattr__(self, "revenues", r)
        object.__setattr__(self, "inventories", q)
        object.__setattr__(self, "true_utilities", v)
        n = len(r)
        if n == 0 or len(q) != n or len(v) != n:
            raise ValueError("revenues, inventories and utilities must have the same positive length")
        if not 1 <= self.cardinality_cap <= n:
            raise ValueError(f"cardinality cap must lie in [1, {n}], got {self.cardinality_cap}")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise ValueError("revenues must be positive and finite")
        if np.any(q < 1):
            raise ValueError("inventories must be at least 1")
        if not 0 < self.v_max <= OUTSIDE_UTILITY:
            raise ValueError("v_max must lie in (0, 1]")
        if np.any(v < 0) or np.any(v > self.v_max):
            raise ValueError("true utilities must lie in [0, v_max]")
        object.__setattr__(self, "weights", _frozen(np.concatenate([[OUTSIDE_UTILITY], v]), float))
        object.__setattr__(self, "prices", _frozen(np.concatenate([[0.0], r]), float))

    @property
    def n_products(self) -> int:
        return len(self.revenues)

    @property
    def q_min(self) -> int:
        return int(self.inventories.min())

    def with_horizon(self, horizon: int, inventories=None) -> "Instance":
        return Instance(
            revenues=self.revenues,
            inventories=self.inventories if inventories is None else inventories,
            true_utilities=self.true_utilities,
            cardinality_cap=self.cardinality_cap,
            horizon=horizon,
            v_max=self.v_max,
        )

    def to_dict(self) -> dict:
        return {
            "n_products": self.n_products,
            "cardinality_cap": self.cardinality_cap,
            "horizon": self.horizon,
            "v_max": self.v_max,
            "revenues": self.revenues.tolist(),
            "inventories": self.inventories.tolist(),
            "utilities": self.true_utilities.tolist(),
        }


def make_assortment(items: Iterable[int], n_products: int, cap: int | None = None) -> Assortment:
    """Validate and canonicalise a collection of product labels."""
    s = tuple(sorted(int(i) for i in items))
    if len(set(s)) != len(s):
        raise ValueError(f"duplicate products in assortment {s}")
    if s and (s[0] < 1 or s[-1] > n_products):
        raise ValueError(f"product labels must lie in [1, {n_products}], got {s}")
    if cap is not None and len(s) > cap:
        raise ValueError(f"assortment {s} exceeds cardinality cap {cap}")
    return s


def _check(inst: Instance, s: Sequence[int]) -> np.ndarray:
    if tuple(s) != make_assortment(s, inst.n_products, inst.cardinality_cap):
        raise ValueError(f"assortment must be strictly increasing, got {tuple(s)}")
    return np.asarray(s, dtype=np.int64)


def mnl_probability(i: int, s: Sequence[int], utilities: Sequence[float], outside: float = OUTSIDE_UTILITY) -> float:
    """MNL choice probability with an explicit outside utility.

    ``utilities`` is indexed by label - 1.
    """
    if i != 0 and i not in s:
        return 0.0
    denom = outside + sum(utilities[j - 1] for j in s)
    num = outside if i == 0 else utilities[i - 1]
    return num / denom


def choice_prob(inst: Instance, s: Sequence[int], i: int) -> float:
    idx = _check(inst, s)
    if not 0 <= i <= inst.n_products:
        raise ValueError(f"product index must lie in [0, {inst.n_products}], got {i}")
    if i != 0 and i not in s:
        return 0.0
    w = inst.weights
    return float(w[i] / (1.0 + w[idx].sum()))


def choice_probs(inst: Instance, s: Sequence[int]) -> np.ndarray:
    """Probabilities of (no purchase, s[0], s[1], ...)."""
    idx = _check(inst, s)
    w = np.concatenate([[1.0], inst.weights[idx]])
    return w / w.sum()


def revenue(inst: Instance, s: Sequence[int]) -> float:
    """Expected single-period revenue R(S)."""
    idx = _check(inst, s)
    if len(idx) == 0:
        return 0.0
    w = inst.weights[idx]
    return float(inst.prices[idx] @ w / (1.0 + w.sum()))


def sample_choice(inst: Instance, s: Sequence[int], rng: np.random.Generator) -> int:
    """Draw one customer decision from S ∪ {0}."""
    p = choice_probs(inst, s)
    k = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    k = min(k, len(p) - 1)
    return 0 if k == 0 else int(s[k - 1])


def all_assortments(n: int, cap: int) -> list[Assortment]:
    """Every assortment of size <= cap, in lexicographic order of item lists."""
    from itertools import combinations

    out: list[Assortment] = []
    for k in range(cap + 1):
        out.extend(tuple(i + 1 for i in c) for c in combinations(range(n), k))
    out.sort()
    return out


def incidence(sets: Sequence[Assortment], n: int) -> np.ndarray:
    """0/1 matrix with one row per assortment."""
    m = np.zeros((len(sets), n))
    for row, s in enumerate(sets):
        if s:
            m[row, np.asarray(s) - 1] = 1.0
    return m


def max_revenue(inst: Instance) -> tuple[Assortment, float]:
    """Brute-force unconstrained optimum over |S| <= K (small N only)."""
    sets = all_assortments(inst.n_products, inst.cardinality_cap)
    vals = [revenue(inst, s) for s in sets]
    k = int(np.argmax(vals))
    return sets[k], float(vals[k])
