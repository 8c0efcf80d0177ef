"""Brokering policies: NCDA, FLOPS-rank and round-robin.

All three choose among bids gathered by polling a sub-grid.  NCDA minimises
predicted completion time (rtt + input transfer + processor-shared compute);
FLOPS-rank maximises the load-adjusted compute rate and ignores the
network; round-robin cycles through members in node_id order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from gridsim.errors import NoCandidateError
from gridsim.model import Job

NCDA = "ncda"
FLOPS = "flops"
ROUND_ROBIN = "rr"
POLICIES = (NCDA, FLOPS, ROUND_ROBIN)


@dataclass(frozen=True)
class ResourceDescription:
    node_id: int
    capability: float
    owner_share: float
    running_jobs: int
    free_storage: float
    timestamp: float

    @property
    def effective_rate(self) -> float:
        return self.capability * self.owner_share / (1 + self.running_jobs)

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "capability": self.capability,
            "owner_share": self.owner_share,
            "running_jobs": self.running_jobs,
            "free_storage": self.free_storage,
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class Bid:
    description: ResourceDescription
    measured_bandwidth: float  # bit/s; inf for the requester itself
    measured_rtt: float

    @property
    def node_id(self) -> int:
        return self.description.node_id


@dataclass
class PolicyState:
    kind: str = ROUND_ROBIN
    rr_cursor: int = 0


def estimate_completion(job: Job, bid: Bid) -> float:
    d = bid.description
    transfer = 0.0
    if job.byte_demand:
        transfer = job.byte_demand * 8.0 / bid.measured_bandwidth
    compute = 0.0
    if job.flop_demand:
        compute = job.flop_demand / d.effective_rate
    return bid.measured_rtt + transfer + compute


def _require(bids: Sequence[Bid]) -> None:
    if not bids:
        raise NoCandidateError("no bids to choose from")


def ncda_select(job: Job, bids: Sequence[Bid]) -> int:
    _require(bids)
    return min(bids, key=lambda b: (estimate_completion(job, b), b.node_id)).node_id


def flops_select(job: Job, bids: Sequence[Bid]) -> int:
    _require(bids)
    return min(bids, key=lambda b: (-b.description.effective_rate, b.node_id)).node_id


def round_robin_select(state: PolicyState, bids: Sequence[Bid]) -> int:
    _require(bids)
    ordered = sorted(bids, key=lambda b: b.node_id)
    choice = ordered[state.rr_cursor % len(ordered)]
    state.rr_cursor = (state.rr_cursor + 1) % len(ordered)
    return choice.node_id


def select(policy: str, job: Job, bids: Sequence[Bid], state: PolicyState | None = None) -> int:
    if policy == NCDA:
        return ncda_select(job, bids)
    if policy == FLOPS:
        return flops_select(job, bids)
    if policy == ROUND_ROBIN:
        if state is None:
            raise ValueError("round-robin needs a PolicyState")
        return round_robin_select(state, bids)
    raise ValueError(f"unknown policy {policy!r}")


def needs_bandwidth_probe(policy: str) -> bool:
    """Only NCDA consumes measured bandwidth, so only it pays for probes."""
    return policy == NCDA


@dataclass
class PollOutcome:
    bids: list[Bid]
    requests: list[int]
    responses: list[int]

    @property
    def message_count(self) -> int:
        return len(self.requests) + len(self.responses)

    @property
    def unanswered(self) -> list[int]:
        answered = set(self.responses)
        return [m for m in self.requests if m not in answered]


def poll_subgrid(
    requester: int,
    members: Iterable[int],
    describe: Callable[[int], ResourceDescription | None],
    measure: Callable[[int, int], tuple[float, float]],
) -> PollOutcome:
    """Send one request to every member; live members (``describe`` returns a
    description) answer with one response.  Dead members stay unanswered.

    ``measure(requester, member)`` returns ``(bandwidth, rtt)``.
    """
    requests, responses, bids = [], [], []
    for member in sorted(members):
        requests.append(member)
        desc = describe(member)
        if desc is None:
            continue
        responses.append(member)
        if member == requester:
            bw, rtt = math.inf, 0.0
        else:
            bw, rtt = measure(requester, member)
        bids.append(Bid(desc, bw, rtt))
    return PollOutcome(bids, requests, responses)
