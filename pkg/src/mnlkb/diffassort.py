"""Assortment maximization for a difference of two MNL revenues.

    R~(S) = sum_{i in S} a_i / (1 + sum_{j in S} b_j)
          - sum_{i in S} theta_i d_i / (1 + sum_{j in S} d_j),   |S| <= K

``a`` carries the reward numerators directly (reward times utility) so that
products whose first-model utility ``b_i`` is zero can still carry reward.
Assortments use 1-based labels as in :mod:`mnlkb.mnl`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import CapabilityError
from .mnl import Assortment, all_assortments, incidence

ENUMERATION_CAP = 14
MAX_DP_STATES = 2_000_000
MAX_GUESSES = 20_000
_ROUND_TOL = 1e-9


@dataclass(frozen=True)
class DiffAssortInstance:
    pos_weight: np.ndarray
    pos_utility: np.ndarray
    penalty: np.ndarray
    neg_utility: np.ndarray
    cap: int

    def __post_init__(self):
        arrs = [np.array(x, dtype=float) for x in (self.pos_weight, self.pos_utility, self.penalty, self.neg_utility)]
        n = len(arrs[0])
        if any(len(x) != n for x in arrs):
            raise ValueError("all per-product arrays must share one length")
        for name, x in zip(("pos_weight", "pos_utility", "penalty", "neg_utility"), arrs):
            if np.any(x < 0) or not np.all(np.isfinite(x)):
                raise ValueError(f"{name} must be finite and nonnegative")
        if np.any(arrs[1] > arrs[3] + 1e-12):
            raise ValueError("pos_utility must not exceed neg_utility")
        if not 1 <= self.cap:
            raise ValueError("cap must be positive")
        for name, x in zip(("pos_weight", "pos_utility", "penalty", "neg_utility"), arrs):
            x.setflags(write=False)
            object.__setattr__(self, name, x)
        object.__setattr__(self, "cap", min(int(self.cap), n) if n else int(self.cap))

    @classmethod
    def from_rewards(cls, pos_reward, pos_utility, penalty, neg_utility, cap) -> "DiffAssortInstance":
        r = np.asarray(pos_reward, dtype=float)
        b = np.asarray(pos_utility, dtype=float)
        return cls(r * b, b, penalty, neg_utility, cap)

    @property
    def n(self) -> int:
        return len(self.pos_weight)

    @property
    def penalty_weight(self) -> np.ndarray:
        return self.penalty * self.neg_utility


def _sums(inst: DiffAssortInstance, s: Sequence[int]) -> tuple[float, float, float, float]:
    idx = np.asarray(s, dtype=np.int64) - 1
    return (
        float(inst.pos_weight[idx].sum()),
        1.0 + float(inst.pos_utility[idx].sum()),
        float(inst.penalty_weight[idx].sum()),
        1.0 + float(inst.neg_utility[idx].sum()),
    )


def objective(inst: DiffAssortInstance, s: Sequence[int]) -> float:
    if len(s) > inst.cap:
        raise ValueError(f"assortment of size {len(s)} exceeds cap {inst.cap}")
    if len(s) == 0:
        return 0.0
    a, b, c, d = _sums(inst, s)
    return a / b - c / d


def penalty_term(inst: DiffAssortInstance, s: Sequence[int]) -> float:
    """sum_{i in S} theta_i d_i / (1 + sum_S d): the slack in the weak guarantee."""
    if len(s) == 0:
        return 0.0
    _, _, c, d = _sums(inst, s)
    return c / d


@lru_cache(maxsize=64)
def _enumeration(n: int, cap: int) -> tuple[list[Assortment], np.ndarray]:
    sets = all_assortments(n, cap)
    return sets, incidence(sets, n)


def _evaluate(inst: DiffAssortInstance, m: np.ndarray) -> np.ndarray:
    return m @ inst.pos_weight / (1.0 + m @ inst.pos_utility) - m @ inst.penalty_weight / (1.0 + m @ inst.neg_utility)


def _pick(sets: Sequence[Assortment], vals: np.ndarray) -> tuple[Assortment, float]:
    # sets are in lexicographic order, so the first near-maximal entry wins ties
    best = float(vals.max())
    k = int(np.flatnonzero(vals >= best - 1e-12 * max(1.0, abs(best)))[0])
    return sets[k], float(vals[k])


def exact_solve(inst: DiffAssortInstance, max_n: int = ENUMERATION_CAP) -> tuple[Assortment, float]:
    """Brute-force argmax over every |S| <= K."""
    if inst.n > max_n:
        raise CapabilityError(f"exact enumeration is capped at N={max_n}, got N={inst.n}")
    sets, m = _enumeration(inst.n, inst.cap)
    return _pick(sets, _evaluate(inst, m))


def best_of(inst: DiffAssortInstance, candidates) -> tuple[Assortment, float]:
    sets = sorted(set(tuple(s) for s in candidates) | {()})
    vals = _evaluate(inst, incidence(sets, inst.n))
    return _pick(sets, vals)


def mnl_ratio_max(weights, utilities, cap: int) -> tuple[Assortment, float]:
    """Exact max of sum_S w_i / (1 + sum_S u_i) over |S| <= cap.

    Dinkelbach iteration: at ratio z the best set is the top-``cap`` positive
    entries of w - z u, and z strictly increases until it is optimal.
    """
    w = np.asarray(weights, dtype=float)
    u = np.asarray(utilities, dtype=float)
    z = 0.0
    best: Assortment = ()
    for _ in range(4 * len(w) + 10):
        score = w - z * u
        order = np.argsort(-score, kind="stable")[:cap]
        chosen = order[score[order] > 0]
        if len(chosen) == 0:
            break
        gain = float(score[chosen].sum()) - z
        if gain <= 1e-14 * max(1.0, z):
            break
        best = tuple(sorted(int(i) + 1 for i in chosen))
        z = float(w[chosen].sum() / (1.0 + u[chosen].sum()))
    return best, z


# ---------------------------------------------------------------------------
# guess grids and the per-guess dynamic program


def _check_eps(eps: float) -> None:
    if not 0.0 < eps < 0.25:
        raise ValueError(f"eps must lie in (0, 1/4), got {eps}")


@dataclass(frozen=True)
class GuessGrids:
    gamma: np.ndarray
    delta: np.ndarray
    eps: float


def _geometric(start: float, stop: float, eps: float) -> np.ndarray:
    if start <= 0 or stop <= 0:
        return np.zeros(0)
    count = max(0, math.ceil(math.log(stop / start) / math.log1p(eps)))
    pts = np.empty(count + 1)
    pts[0] = start
    for k in range(1, count + 1):
        pts[k] = pts[k - 1] * (1.0 + eps)
    return pts


def build_grids(inst: DiffAssortInstance, eps: float) -> GuessGrids:
    """Geometric guesses for the numerators (gamma) and denominators (delta)."""
    _check_eps(eps)
    nums = np.concatenate([inst.pos_weight, inst.penalty_weight])
    nums = nums[nums > 0]
    utils = np.concatenate([inst.pos_utility, inst.neg_utility])
    pos_utils = utils[utils > 0]
    n = inst.n
    if len(nums):
        gamma = _geometric(float(nums.min()), n * float(nums.max()) * (1 + eps), eps)
    else:
        gamma = np.zeros(0)
    u = min(float(pos_utils.min()), 1.0) if len(pos_utils) else 1.0
    big_u = float(utils.max()) if len(utils) else 0.0
    delta = _geometric(u, (1.0 + n * big_u) * (1 + eps), eps)
    return GuessGrids(gamma=gamma, delta=delta, eps=eps)


def _floor(x):
    return np.floor(np.asarray(x, dtype=float) + _ROUND_TOL).astype(np.int64)


def _ceil(x):
    return np.ceil(np.asarray(x, dtype=float) - _ROUND_TOL).astype(np.int64)


@dataclass
class DpTable:
    """Forward form of the minimum-cardinality table for one guess.

    ``slices[p]`` maps reachable discretized sums after deciding products
    1..p to (minimum cardinality, witness).  Sums that only need to reach a
    lower target are saturated at it; sums with an upper target are pruned
    once they exceed it.
    """

    guess: tuple[float, float, float, float]
    eps: float
    r_bar: np.ndarray
    vl_bar: np.ndarray
    theta_bar: np.ndarray
    vu_bar: np.ndarray
    allowed: np.ndarray
    vl0: int
    vu0: int
    target_r: int
    target_vu: int
    limit_vl: int
    limit_theta: int
    slices: list[dict] = field(default_factory=list)

    def F(self, i1: int, i2: int, j1: int, j2: int, p: int) -> float:
        """Min |S|, S within products 1..p, with sum r >= i1, sum vu >= i2,
        sum vl <= j1, sum theta <= j2 (the +1 terms of the outside option
        included in the vl/vu sums)."""
        best = math.inf
        for (sr, svl, sth, svu), (card, _) in self.slices[p].items():
            if sr >= i1 and svu >= i2 and svl <= j1 and sth <= j2:
                best = min(best, card)
        return best

    def witness(self, i1: int, i2: int, j1: int, j2: int, p: int) -> Assortment | None:
        best, out = math.inf, None
        for (sr, svl, sth, svu), (card, items) in self.slices[p].items():
            if sr >= i1 and svu >= i2 and svl <= j1 and sth <= j2 and card < best:
                best, out = card, items
        return out

    def discretized_sums(self, s: Sequence[int]) -> tuple[int, int, int, int]:
        idx = np.asarray(s, dtype=np.int64) - 1
        return (
            int(self.r_bar[idx].sum()),
            self.vl0 + int(self.vl_bar[idx].sum()),
            int(self.theta_bar[idx].sum()),
            self.vu0 + int(self.vu_bar[idx].sum()),
        )


def dp_table(inst: DiffAssortInstance, guess, eps: float, keep_slices: bool = False,
             max_states: int = MAX_DP_STATES) -> DpTable:
    _check_eps(eps)
    h1, h2, g1, g2 = (float(x) for x in guess)
    if g1 <= 0 or g2 <= 0 or h1 < 0 or h2 < 0:
        raise ValueError("denominator guesses must be positive and numerator guesses nonnegative")
    n = inst.n
    a, b, c, d = inst.pos_weight, inst.pos_utility, inst.penalty_weight, inst.neg_utility
    allowed = np.ones(n, dtype=bool)

    if h1 > 0:
        r_bar = _floor(a / (eps * h1 / n))
        target_r = math.floor(n / eps) - n
    else:
        r_bar = np.zeros(n, dtype=np.int64)
        target_r = 0
    step_l = eps * g1 / (n + 1)
    vl_bar = _ceil(b / step_l)
    vl0 = int(_ceil(1.0 / step_l))
    limit_vl = math.floor((n + 1) / eps) + n + 1
    if h2 > 0:
        theta_bar = _ceil(c / (eps * h2 / (n + 1)))
    else:
        theta_bar = np.zeros(n, dtype=np.int64)
        allowed &= c == 0
    limit_theta = math.floor((n + 1) / eps) + n + 1
    step_u = eps * g2 / n
    vu_bar = _floor(d / step_u)
    # the outside option is floored like every other term, so the lower
    # target loses one extra unit relative to the products-only count
    vu0 = int(_floor(1.0 / step_u))
    target_vu = math.ceil(n / eps) - n - 1

    table = DpTable(
        guess=(h1, h2, g1, g2), eps=eps, r_bar=r_bar, vl_bar=vl_bar, theta_bar=theta_bar, vu_bar=vu_bar,
        allowed=allowed, vl0=vl0, vu0=vu0, target_r=target_r, target_vu=target_vu,
        limit_vl=limit_vl, limit_theta=limit_theta,
    )
    tr, tu = max(target_r, 0), max(target_vu, 0)
    start = (0, vl0, 0, min(vu0, tu))
    cur: dict = {} if vl0 > limit_vl else {start: (0, ())}
    if keep_slices:
        table.slices.append(dict(cur))
    for p in range(n):
        nxt = dict(cur)
        if allowed[p]:
            dr, dl, dt, du = int(r_bar[p]), int(vl_bar[p]), int(theta_bar[p]), int(vu_bar[p])
            for (sr, sl, st, su), (card, items) in cur.items():
                nl, nt = sl + dl, st + dt
                if nl > limit_vl or nt > limit_theta:
                    continue
                key = (min(sr + dr, tr), nl, nt, min(su + du, tu))
                old = nxt.get(key)
                if old is None or card + 1 < old[0]:
                    nxt[key] = (card + 1, items + (p + 1,))
        if len(nxt) > max_states:
            raise CapabilityError(f"DP state count {len(nxt)} exceeds cap {max_states}")
        cur = nxt
        if keep_slices:
            table.slices.append(dict(cur))
    if not keep_slices:
        table.slices = [dict() for _ in range(n)] + [cur]
    return table


def dp_solve(inst: DiffAssortInstance, guess, eps: float, max_states: int = MAX_DP_STATES) -> Assortment | None:
    """Smallest set meeting the four discretized guess constraints, if <= K."""
    table = dp_table(inst, guess, eps, max_states=max_states)
    tr, tu = max(table.target_r, 0), max(table.target_vu, 0)
    items = table.witness(tr, tu, table.limit_vl, table.limit_theta, inst.n)
    if items is None or len(items) > inst.cap:
        return None
    return items


def _bracket(points: np.ndarray, lo: float, hi: float) -> list[float]:
    return [float(g) for g in points if lo <= g <= hi]


def grid_search_solve(inst: DiffAssortInstance, eps: float, max_guesses: int = 200_000) -> tuple[Assortment, float]:
    """Run the per-guess DP over every relevant guess quadruple.

    Faithful to the guess-everything procedure and therefore slow: the guess
    count grows like (log range / eps)^4.  Meant for small cross-checks.
    """
    grids = build_grids(inst, eps)
    k = inst.cap
    a, b, c, d = inst.pos_weight, inst.pos_utility, inst.penalty_weight, inst.neg_utility
    top = lambda x: float(np.sort(x)[::-1][:k].sum())
    a_pos, c_pos = a[a > 0], c[c > 0]
    h1s = [0.0] + (_bracket(grids.gamma, float(a_pos.min()) / (1 + eps), top(a)) if len(a_pos) else [])
    h2s = [0.0] + (_bracket(grids.gamma, float(c_pos.min()), top(c) * (1 + eps)) if len(c_pos) else [])
    g1s = _bracket(grids.delta, 1.0, (1.0 + top(b)) * (1 + eps))
    g2s = _bracket(grids.delta, 1.0 / (1 + eps), 1.0 + top(d))
    total = len(h1s) * len(h2s) * len(g1s) * len(g2s)
    if total > max_guesses:
        raise CapabilityError(f"{total} guesses exceed the cap of {max_guesses}")
    found = set()
    for h1 in h1s:
        for h2 in h2s:
            for g1 in g1s:
                for g2 in g2s:
                    s = dp_solve(inst, (h1, h2, g1, g2), eps)
                    if s is not None:
                        found.add(s)
    return best_of(inst, found)


def approx_solve(inst: DiffAssortInstance, eps: float, max_states: int = MAX_DP_STATES,
                 max_guesses: int = MAX_GUESSES) -> tuple[Assortment, float]:
    """Weak-guarantee maximizer of the difference of two MNL revenues.

    Only the penalty numerator is guessed (over the gamma grid, plus zero).
    For each guess one DP pass keys partial sets by cardinality, the two
    denominators rounded at the finest useful delta resolution eps/(N+1)
    (denominators are at least 1) and the rounded penalty numerator, and
    keeps the largest exact reward numerator per key.  Every surviving
    witness is scored exactly and the best one returned.
    """
    _check_eps(eps)
    n, k = inst.n, inst.cap
    a, b, c, d = inst.pos_weight, inst.pos_utility, inst.penalty_weight, inst.neg_utility
    if n == 0 or not np.any(a > 0):
        return (), 0.0
    grids = build_grids(inst, eps)
    step = eps / (n + 1)
    b_units = _ceil(b / step)
    d_units = _floor(d / step)
    limit = math.floor((n + 1) / eps) + n + 1
    c_pos = c[c > 0]
    guesses = [0.0]
    if len(c_pos):
        guesses += _bracket(grids.gamma, float(c_pos.min()), float(np.sort(c)[::-1][:k].sum()) * (1 + eps))
    if len(guesses) > max_guesses:
        raise CapabilityError(f"{len(guesses)} penalty guesses exceed the cap of {max_guesses}; raise eps")

    candidates: set[Assortment] = set()
    for h2 in guesses:
        if h2 > 0:
            c_units = _ceil(c / (eps * h2 / (n + 1)))
            allowed = np.ones(n, dtype=bool)
        else:
            c_units = np.zeros(n, dtype=np.int64)
            allowed = c == 0
        cur = {(0, 0, 0, 0): (0.0, ())}
        for p in range(n):
            if not allowed[p]:
                continue
            nxt = dict(cur)
            db, dd, dc, da = int(b_units[p]), int(d_units[p]), int(c_units[p]), float(a[p])
            for (card, sb, sd, sc), (val, items) in cur.items():
                if card == k or sc + dc > limit:
                    continue
                key = (card + 1, sb + db, sd + dd, sc + dc)
                old = nxt.get(key)
                if old is None or val + da > old[0]:
                    nxt[key] = (val + da, items + (p + 1,))
            if len(nxt) > max_states:
                raise CapabilityError(f"DP state count {len(nxt)} exceeds cap {max_states}")
            cur = nxt
        candidates.update(items for _, items in cur.values())
    return best_of(inst, candidates)
