"""Domain types and seeded generation of grid platforms and workloads.

Everything here is an immutable value.  Generation is a pure function of
its spec: the same spec (seed included) yields an equal topology on every
run and every machine.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from gridsim.errors import InvalidSpecError

JOB_CLASSES = ("compute", "network", "hybrid")
GIGA = 10**9

# Stream ids mixed into the seed so platform, workload and failure draws
# never share random state.
STREAM_PLATFORM = 1
STREAM_WORKLOAD = 2
STREAM_FAILURES = 3


def rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream])


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    capability: float  # FLOP/s
    storage: float  # free bytes
    availability: float
    owner_share: float = 1.0

    @property
    def effective_rate(self) -> float:
        return self.capability * self.owner_share

    @property
    def election_key(self) -> tuple[float, int]:
        return (self.availability, self.node_id)


@dataclass(frozen=True)
class LinkSpec:
    endpoints: tuple[int, int]
    bandwidth: float  # bit/s
    latency: float  # s, one way

    @property
    def rtt(self) -> float:
        return 2.0 * self.latency


@dataclass(frozen=True)
class SubGrid:
    subgrid_id: int
    members: tuple[int, ...]
    super_peer: int


@dataclass(frozen=True)
class Region:
    region_id: int
    subgrids: tuple[int, ...]
    region_peer: int


@dataclass(frozen=True)
class PlatformSpec:
    node_count: int
    capability_range: tuple[float, float] = (1e4, 1e8)
    bandwidth_range: tuple[float, float] = (5.6e4, 8e7)
    latency_range: tuple[float, float] = (1e-3, 2e-2)
    storage_range: tuple[float, float] = (1e10, 1e12)
    rtt_threshold: float = 1.0
    region_proximity_threshold: float = 1.0
    rng_seed: int = 0
    availability_range: tuple[float, float] = (0.5, 1.0)
    owner_share_range: tuple[float, float] = (1.0, 1.0)
    mean_degree: float = 4.0

    def violations(self) -> list[str]:
        out = []
        if not isinstance(self.node_count, int) or self.node_count < 1:
            out.append(f"PlatformSpec.node_count must be >= 1, got {self.node_count!r}")
        positive = ("capability_range", "bandwidth_range", "latency_range")
        for name in positive + ("storage_range", "availability_range", "owner_share_range"):
            rng = getattr(self, name)
            try:
                lo, hi = (float(v) for v in rng)
            except (TypeError, ValueError):
                out.append(f"PlatformSpec.{name} must be a [lo, hi] pair, got {rng!r}")
                continue
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                out.append(f"PlatformSpec.{name} is empty or inverted: [{lo}, {hi}]")
            elif name in positive and lo <= 0:
                out.append(f"PlatformSpec.{name} lower bound must be > 0, got {lo}")
            elif lo < 0:
                out.append(f"PlatformSpec.{name} lower bound must be >= 0, got {lo}")
        lo, hi = self.availability_range
        if not 0 <= lo <= hi <= 1:
            out.append("PlatformSpec.availability_range must lie within [0, 1]")
        lo, hi = self.owner_share_range
        if not 0 < lo <= hi <= 1:
            out.append("PlatformSpec.owner_share_range must lie within (0, 1]")
        if self.rtt_threshold < 0:
            out.append("PlatformSpec.rtt_threshold must be >= 0")
        if self.region_proximity_threshold < 0:
            out.append("PlatformSpec.region_proximity_threshold must be >= 0")
        if self.mean_degree < 0:
            out.append("PlatformSpec.mean_degree must be >= 0")
        return out

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise InvalidSpecError(problems)

    @classmethod
    def from_dict(cls, raw: dict) -> "PlatformSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise InvalidSpecError([f"PlatformSpec: unknown field(s) {sorted(unknown)}"])
        kwargs = dict(raw)
        for name, value in kwargs.items():
            if name.endswith("_range") and isinstance(value, list):
                kwargs[name] = tuple(value)
        return cls(**kwargs)


@dataclass(frozen=True)
class Job:
    job_id: int
    job_class: str
    flop_demand: int
    byte_demand: int
    submit_time: float
    origin_node: int

    def __post_init__(self):
        if self.flop_demand < 0 or self.byte_demand < 0:
            raise InvalidSpecError([f"job {self.job_id}: negative demand"])
        if self.flop_demand + self.byte_demand <= 0:
            raise InvalidSpecError([f"job {self.job_id}: demand must be positive"])


@dataclass(frozen=True)
class QueryConstraint:
    min_capability: float = 0.0
    min_storage: float = 0.0
    count: int = 1

    def __post_init__(self):
        if self.count < 1 or self.min_capability < 0 or self.min_storage < 0:
            raise InvalidSpecError([f"invalid QueryConstraint {self}"])

    def admits(self, capability: float, storage: float) -> bool:
        return capability >= self.min_capability and storage >= self.min_storage


@dataclass(frozen=True)
class GridTopology:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]
    subgrids: tuple[SubGrid, ...] = ()
    regions: tuple[Region, ...] = ()
    _node_index: dict = field(default=None, init=False, repr=False, compare=False)
    _link_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = {n.node_id: n for n in self.nodes}
        if len(nodes) != len(self.nodes):
            raise InvalidSpecError(["duplicate node_id in topology"])
        links = {}
        for link in self.links:
            a, b = link.endpoints
            key = (min(a, b), max(a, b))
            if a == b or a not in nodes or b not in nodes:
                raise InvalidSpecError([f"link {link.endpoints} references unknown or equal endpoints"])
            if key in links:
                raise InvalidSpecError([f"duplicate link between {key}"])
            links[key] = link
        object.__setattr__(self, "_node_index", nodes)
        object.__setattr__(self, "_link_index", links)

    def node(self, node_id: int) -> NodeSpec:
        return self._node_index[node_id]

    def link(self, a: int, b: int) -> LinkSpec | None:
        return self._link_index.get((min(a, b), max(a, b)))

    @property
    def node_ids(self) -> list[int]:
        return [n.node_id for n in self.nodes]

    def neighbours(self) -> dict[int, list[tuple[int, LinkSpec]]]:
        adj: dict[int, list[tuple[int, LinkSpec]]] = {n.node_id: [] for n in self.nodes}
        for link in self.links:
            a, b = link.endpoints
            adj[a].append((b, link))
            adj[b].append((a, link))
        for lst in adj.values():
            lst.sort(key=lambda item: item[0])
        return adj

    def subgrid_of(self, node_id: int) -> SubGrid:
        for sg in self.subgrids:
            if node_id in sg.members:
                return sg
        raise KeyError(node_id)

    def region_of_subgrid(self, subgrid_id: int) -> Region:
        for region in self.regions:
            if subgrid_id in region.subgrids:
                return region
        raise KeyError(subgrid_id)

    def with_partitions(self, subgrids, regions=()) -> "GridTopology":
        return GridTopology(self.nodes, self.links, tuple(subgrids), tuple(regions))

    def to_dict(self) -> dict:
        return {
            "nodes": [asdict(n) for n in self.nodes],
            "links": [
                {"endpoints": list(l.endpoints), "bandwidth": l.bandwidth, "latency": l.latency}
                for l in self.links
            ],
            "subgrids": [
                {"subgrid_id": s.subgrid_id, "members": list(s.members), "super_peer": s.super_peer}
                for s in self.subgrids
            ],
            "regions": [
                {"region_id": r.region_id, "subgrids": list(r.subgrids), "region_peer": r.region_peer}
                for r in self.regions
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict) -> "GridTopology":
        return cls(
            nodes=tuple(NodeSpec(**n) for n in raw["nodes"]),
            links=tuple(
                LinkSpec(tuple(l["endpoints"]), l["bandwidth"], l["latency"]) for l in raw["links"]
            ),
            subgrids=tuple(
                SubGrid(s["subgrid_id"], tuple(s["members"]), s["super_peer"])
                for s in raw.get("subgrids", ())
            ),
            regions=tuple(
                Region(r["region_id"], tuple(r["subgrids"]), r["region_peer"])
                for r in raw.get("regions", ())
            ),
        )


def _uniform(rng: np.random.Generator, bounds, size: int) -> list[float]:
    lo, hi = float(bounds[0]), float(bounds[1])
    if lo == hi:
        return [lo] * size
    return [float(v) for v in rng.uniform(lo, hi, size)]


def generate_platform(spec: PlatformSpec) -> GridTopology:
    """Random connected platform: a random spanning tree plus extra edges
    up to ``spec.mean_degree``, then RTT sub-grids and proximity regions."""
    spec.validate()
    rng = rng_for(spec.rng_seed, STREAM_PLATFORM)
    n = spec.node_count

    caps = _uniform(rng, spec.capability_range, n)
    storage = _uniform(rng, spec.storage_range, n)
    avail = _uniform(rng, spec.availability_range, n)
    shares = _uniform(rng, spec.owner_share_range, n)
    nodes = tuple(
        NodeSpec(i, caps[i], storage[i], avail[i], shares[i]) for i in range(n)
    )

    # Spanning tree over a random permutation: each new node attaches to a
    # uniformly chosen earlier one.
    order = [int(v) for v in rng.permutation(n)]
    pairs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for pos in range(1, n):
        other = order[int(rng.integers(0, pos))]
        key = (min(order[pos], other), max(order[pos], other))
        pairs.append(key)
        seen.add(key)

    max_edges = n * (n - 1) // 2
    target = min(max_edges, max(n - 1, int(round(spec.mean_degree * n / 2))))
    while len(pairs) < target:
        a, b = (int(v) for v in rng.integers(0, n, 2))
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        pairs.append(key)
    pairs.sort()

    bws = _uniform(rng, spec.bandwidth_range, len(pairs))
    lats = _uniform(rng, spec.latency_range, len(pairs))
    links = tuple(LinkSpec(p, bw, lat) for p, bw, lat in zip(pairs, bws, lats))

    topo = GridTopology(nodes, links)
    subgrids = form_subgrids(topo, spec.rtt_threshold)
    topo = topo.with_partitions(subgrids)
    regions = form_regions(topo, spec.region_proximity_threshold)
    return topo.with_partitions(subgrids, regions)


def generate_workload(
    job_class: str,
    count: int,
    node_ids: Sequence[int],
    submit_policy: str | dict = "all-at-t0",
    rng_seed: int = 0,
) -> list[Job]:
    """``submit_policy`` is ``"all-at-t0"`` or ``{"poisson": rate_per_s}``."""
    if job_class not in JOB_CLASSES:
        raise InvalidSpecError([f"unknown job class {job_class!r}"])
    if count < 1:
        raise InvalidSpecError([f"workload count must be >= 1, got {count}"])
    if not node_ids:
        raise InvalidSpecError(["workload needs at least one origin node"])
    rng = rng_for(rng_seed, STREAM_WORKLOAD)
    flop = GIGA if job_class in ("compute", "hybrid") else 0
    nbytes = GIGA if job_class in ("network", "hybrid") else 0
    ids = sorted(node_ids)
    origins = [ids[int(i)] for i in rng.integers(0, len(ids), count)]

    if submit_policy == "all-at-t0":
        times = [0.0] * count
    elif isinstance(submit_policy, dict) and "poisson" in submit_policy:
        rate = float(submit_policy["poisson"])
        if rate <= 0:
            raise InvalidSpecError(["poisson arrival rate must be > 0"])
        times = [float(t) for t in np.cumsum(rng.exponential(1.0 / rate, count))]
    else:
        raise InvalidSpecError([f"unknown submit_policy {submit_policy!r}"])
    return [Job(i, job_class, flop, nbytes, times[i], origins[i]) for i in range(count)]


def _components(ids: Iterable[int], edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    parent = {i: i for i in ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for i in parent:
        groups.setdefault(find(i), []).append(i)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def form_subgrids(topology: GridTopology, rtt_threshold: float) -> list[SubGrid]:
    """Connected components of the graph keeping only links with rtt <= threshold."""
    edges = [l.endpoints for l in topology.links if l.rtt <= rtt_threshold]
    out = []
    for sid, members in enumerate(_components(topology.node_ids, edges)):
        leader = max(members, key=lambda i: topology.node(i).election_key)
        out.append(SubGrid(sid, tuple(members), leader))
    return out


def path_latencies(topology: GridTopology, source: int) -> dict[int, float]:
    """One-way shortest-path latency from ``source`` to every reachable node."""
    adj = topology.neighbours()
    dist = {source: 0.0}
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, link in adj[u]:
            nd = d + link.latency
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def form_regions(
    topology: GridTopology,
    proximity_threshold: float,
    rtt: Callable[[int, int], float] | None = None,
) -> list[Region]:
    """Group sub-grids whose super-peers are within ``proximity_threshold``
    round-trip time of each other (transitively)."""
    subgrids = topology.subgrids
    if not subgrids:
        raise InvalidSpecError(["form_regions needs sub-grids"])
    peers = [sg.super_peer for sg in subgrids]
    if rtt is None:
        cache = {p: path_latencies(topology, p) for p in peers}

        def rtt(a, b):
            return 2.0 * cache[a].get(b, math.inf)

    edges = []
    for i, a in enumerate(subgrids):
        for b in subgrids[i + 1:]:
            if rtt(a.super_peer, b.super_peer) <= proximity_threshold:
                edges.append((a.subgrid_id, b.subgrid_id))
    by_id = {sg.subgrid_id: sg for sg in subgrids}
    out = []
    for rid, members in enumerate(_components(by_id, edges)):
        leader = max(
            (by_id[s].super_peer for s in members),
            key=lambda p: topology.node(p).election_key,
        )
        out.append(Region(rid, tuple(members), leader))
    return out
