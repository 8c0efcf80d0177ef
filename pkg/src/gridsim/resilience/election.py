"""Bully-style leader election keyed on (availability, node_id)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from gridsim.model import NodeSpec

ELECTION = "election"
OK = "ok"
COORDINATOR = "coordinator"


@dataclass(frozen=True)
class ElectionMessage:
    kind: str
    src: int
    dst: int


@dataclass
class ElectionResult:
    leader: int | None
    messages: list[ElectionMessage] = field(default_factory=list)
    epoch: int = 0

    @property
    def dissolved(self) -> bool:
        return self.leader is None


def bully(live_members: Iterable[NodeSpec], epoch: int = 0) -> ElectionResult:
    """Run one bully round in which every live member detected the failure.

    Each member sends ELECTION to every higher-keyed member, each receiver
    answers OK, and the top member (which hears no OK) broadcasts
    COORDINATOR.  Message count is m(m-1) + (m-1) for m members.
    """
    members = sorted(live_members, key=lambda n: n.election_key)
    if not members:
        return ElectionResult(None, [], epoch)
    msgs = []
    for i, low in enumerate(members):
        for high in members[i + 1:]:
            msgs.append(ElectionMessage(ELECTION, low.node_id, high.node_id))
    for i, low in enumerate(members):
        for high in members[i + 1:]:
            msgs.append(ElectionMessage(OK, high.node_id, low.node_id))
    leader = members[-1]
    for other in members[:-1]:
        msgs.append(ElectionMessage(COORDINATOR, leader.node_id, other.node_id))
    return ElectionResult(leader.node_id, msgs, epoch)


def elect_superpeer(live_members: Iterable[NodeSpec], epoch: int = 0) -> ElectionResult:
    return bully(live_members, epoch)


def elect_regionpeer(live_superpeers: Iterable[NodeSpec], epoch: int = 0) -> ElectionResult:
    return bully(live_superpeers, epoch)
