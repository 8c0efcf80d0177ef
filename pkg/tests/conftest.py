import pytest

from gridsim.model import GridTopology, LinkSpec, NodeSpec, form_regions, form_subgrids


def make_topology(nodes, links, rtt_threshold=1.0, proximity=1.0):
    """``nodes``: iterable of (id, capability, availability) or NodeSpec;
    ``links``: iterable of (a, b, bandwidth, latency)."""
    specs = []
    for n in nodes:
        if isinstance(n, NodeSpec):
            specs.append(n)
        else:
            nid, cap, avail = n
            specs.append(NodeSpec(nid, cap, 1e12, avail))
    topo = GridTopology(tuple(specs), tuple(LinkSpec((a, b), bw, lat) for a, b, bw, lat in links))
    topo = topo.with_partitions(form_subgrids(topo, rtt_threshold))
    return topo.with_partitions(topo.subgrids, form_regions(topo, proximity))


def star(n_members, cap=1e8, bw=8e7, lat=1e-3, hub_avail=0.99):
    """Node 0 is the hub (and super-peer); members 1..n-1 hang off it."""
    nodes = [(0, cap, hub_avail)] + [(i, cap, 0.5 + 0.4 * i / max(n_members, 1)) for i in range(1, n_members)]
    links = [(0, i, bw, lat) for i in range(1, n_members)]
    return make_topology(nodes, links)


@pytest.fixture
def topo_factory():
    return make_topology


# One PASS/FAIL line per acceptance criterion, echoed in the terminal summary
# so the lines survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    print(ACCEPTANCE_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
