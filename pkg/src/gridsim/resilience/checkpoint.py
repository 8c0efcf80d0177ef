"""Checkpoint interval policy.

Intervals follow a two-term smoothing recurrence whose seeds come from
Young's approximation ``sqrt(2 * cost * MTBF)``, so machines with a worse
failure history checkpoint more often.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from gridsim.errors import InvalidSpecError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckpointPolicy:
    W: float = 0.5
    I0: float | None = None  # None: seed from the node's failure history
    I1: float | None = None
    export_every: int = 5
    checkpoint_cost: float = 1.0
    min_interval: float = 1.0
    max_interval: float = 1e5
    prior_mtbf: float = 1e4
    export_bytes: int = 10**6
    history_weight: float = 0.5

    def violations(self) -> list[str]:
        out = []
        if not 0 < self.W < 2:
            out.append(f"CheckpointPolicy: W={self.W} outside (0,2) convergence domain")
        for name in ("I0", "I1"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                out.append(f"CheckpointPolicy: {name} must be > 0, got {v}")
        if (self.I0 is None) != (self.I1 is None):
            out.append("CheckpointPolicy: I0 and I1 must be given together")
        if not isinstance(self.export_every, int) or self.export_every < 1:
            out.append(f"CheckpointPolicy: export_every must be an integer >= 1, got {self.export_every}")
        if not self.checkpoint_cost > 0:
            out.append("CheckpointPolicy: checkpoint_cost must be > 0")
        if not 0 < self.min_interval <= self.max_interval:
            out.append("CheckpointPolicy: need 0 < min_interval <= max_interval")
        if not self.prior_mtbf > 0:
            out.append("CheckpointPolicy: prior_mtbf must be > 0")
        if self.export_bytes < 0:
            out.append("CheckpointPolicy: export_bytes must be >= 0")
        if not 0 < self.history_weight <= 1:
            out.append("CheckpointPolicy: history_weight must be in (0, 1]")
        return out

    def warnings(self) -> list[str]:
        if 1 < self.W < 2:
            return [f"CheckpointPolicy: W={self.W} > 1 over-weights the latest interval; results clamp at min_interval"]
        return []

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise InvalidSpecError(problems)
        for w in self.warnings():
            log.warning(w)


def next_interval(policy: CheckpointPolicy, i_prev: float, i_prev2: float) -> float:
    value = policy.W * i_prev + (1.0 - policy.W) * i_prev2
    if value <= 0:
        log.warning("checkpoint interval %.6g <= 0 with W=%s; clamping to %s", value, policy.W, policy.min_interval)
    return max(value, policy.min_interval)


def recurrence_term(W: float, i0: float, i1: float, n: int) -> float:
    """I_n of the unclamped recurrence, by iteration."""
    if n == 0:
        return i0
    prev2, prev = i0, i1
    for _ in range(n - 1):
        prev2, prev = prev, W * prev + (1.0 - W) * prev2
    return prev


def recurrence_limit(W: float, i0: float, i1: float) -> float:
    """Fixed point of the recurrence for 0 < W < 2 (roots 1 and W - 1)."""
    return ((1.0 - W) * i0 + i1) / (2.0 - W)


@dataclass
class FailureHistory:
    """Per-node failure record with an exponentially weighted failure rate.

    Each failure contributes ``1 / gap`` (gap measured from the previous
    failure, or from t=0 for the first) blended with weight ``alpha``
    into a rate that starts at ``1 / prior_mtbf``.
    """

    prior_mtbf: float = 1e4
    alpha: float = 0.5
    timestamps: list[float] = field(default_factory=list)
    _rate: float = field(default=0.0, init=False)

    def record(self, t: float) -> None:
        last = self.timestamps[-1] if self.timestamps else 0.0
        gap = max(t - last, 1e-9)
        prev = self._rate if self.timestamps else 1.0 / self.prior_mtbf
        self._rate = self.alpha / gap + (1.0 - self.alpha) * prev
        self.timestamps.append(t)

    @property
    def ew_failure_rate(self) -> float:
        return self._rate

    @property
    def mtbf_estimate(self) -> float:
        if self._rate > 0:
            return 1.0 / self._rate
        return self.prior_mtbf


def young_interval(checkpoint_cost: float, mtbf: float) -> float:
    return math.sqrt(2.0 * checkpoint_cost * mtbf)


def seed_intervals(
    history: FailureHistory | None,
    checkpoint_cost: float,
    policy: CheckpointPolicy | None = None,
) -> tuple[float, float]:
    if not checkpoint_cost > 0:
        raise InvalidSpecError(["checkpoint_cost must be > 0"])
    policy = policy or CheckpointPolicy(checkpoint_cost=checkpoint_cost)
    mtbf = history.mtbf_estimate if history is not None else policy.prior_mtbf
    t = young_interval(checkpoint_cost, mtbf)
    t = min(max(t, policy.min_interval), policy.max_interval)
    return t, t


class IntervalSeries:
    """Stateful walk through the recurrence for one job placement."""

    def __init__(self, policy: CheckpointPolicy, i0: float, i1: float):
        self.policy = policy
        self.prev2, self.prev = i0, i1
        self._emitted = 0

    def next(self) -> float:
        if self._emitted == 0:
            value = self.prev2
        elif self._emitted == 1:
            value = self.prev
        else:
            value = next_interval(self.policy, self.prev, self.prev2)
            self.prev2, self.prev = self.prev, value
        self._emitted += 1
        return value
