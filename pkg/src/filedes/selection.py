"""Weighted random storage-miner selection.

Each eligible miner gets a weight mixing its share of consensus power with
how long it has gone without a deal::

    W_i = w * POW_i / sum(POW) + (1 - w) * dH_i / H
    P_i = W_i / sum(W)

where ``dH_i`` is the height distance to the miner's last confirmed deal and
``H`` the current height. Penalized miners get ``P = 0`` and are left out of
both sums.
"""

from __future__ import annotations

import bisect
import json
import random
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

from .errors import BadWeight, NoEligibleMiner

DEFAULT_W = 0.5
DEFAULT_RETRY_CAP = 5


@dataclass
class MinerProfile:
    miner_id: str
    pow: float = 1.0
    last_deal_height: int = 0
    penalized: bool = False


@dataclass(frozen=True)
class SelectionDistribution:
    weights: Tuple[Tuple[str, float], ...]
    probabilities: Tuple[Tuple[str, float], ...]

    def as_dict(self) -> dict:
        return dict(self.probabilities)

    def cumulative(self) -> List[float]:
        total, out = 0.0, []
        for _, p in self.probabilities:
            total += p
            out.append(total)
        return out

    def to_json(self) -> str:
        w = dict(self.weights)
        return json.dumps([[m, w[m], p] for m, p in self.probabilities])


def compute_weights(miners: Sequence[MinerProfile], current_height: int,
                    w: float = DEFAULT_W) -> SelectionDistribution:
    if not 0.0 < w < 1.0:
        raise BadWeight(f"w must lie strictly between 0 and 1, got {w}")
    ordered = sorted(miners, key=lambda m: m.miner_id)
    eligible = [m for m in ordered if not m.penalized]
    if not eligible:
        raise NoEligibleMiner("every miner is penalized")
    for m in eligible:
        if m.last_deal_height > current_height:
            raise ValueError(f"{m.miner_id}: last deal height {m.last_deal_height} is in the future")
        if m.pow < 0:
            raise ValueError(f"{m.miner_id}: negative consensus power")

    pow_total = sum(m.pow for m in eligible)
    raw = {}
    for m in eligible:
        share = m.pow / pow_total if pow_total > 0 else 0.0
        # at height 0 the freshness term would be 0/0; define it as 0
        fresh = (current_height - m.last_deal_height) / current_height if current_height > 0 else 0.0
        raw[m.miner_id] = w * share + (1.0 - w) * fresh
    w_total = sum(raw.values())
    if w_total <= 0:
        raise NoEligibleMiner("all selection weights are zero")

    weights = tuple((m.miner_id, raw.get(m.miner_id, 0.0)) for m in ordered)
    probs = tuple((m.miner_id, raw[m.miner_id] / w_total if m.miner_id in raw else 0.0) for m in ordered)
    return SelectionDistribution(weights, probs)


def rand_select(dist: SelectionDistribution, rng: random.Random) -> str:
    """Inverse-CDF draw over ``dist`` using a 64-bit uniform variate."""
    cum = dist.cumulative()
    u = rng.getrandbits(64) / 2.0**64
    i = bisect.bisect_right(cum, u)
    if i >= len(cum):
        # u landed in the rounding gap above the final cumulative value
        i = max(k for k, (_, p) in enumerate(dist.probabilities) if p > 0)
    return dist.probabilities[i][0]


def select_with_retry(dist: SelectionDistribution, rng: random.Random,
                      try_deal: Callable[[str], bool], retry_cap: int = DEFAULT_RETRY_CAP) -> str:
    """Draw miners until one accepts the deal, at most ``retry_cap`` draws."""
    for _ in range(max(1, retry_cap)):
        miner = rand_select(dist, rng)
        if try_deal(miner):
            return miner
    raise NoEligibleMiner(f"no miner accepted the deal in {retry_cap} attempts")
