from collections import namedtuple

import pytest

from leosim.constellation import ConstellationGeometry
from leosim.topology import (
    Link,
    LinkKind,
    LinkState,
    NodeResources,
    TopologyBuilder,
    TopologySnapshot,
)

FlowSpec = namedtuple("FlowSpec", "flow_id src_gs dst_gs")


@pytest.fixture(scope="session")
def geometry():
    return ConstellationGeometry()


@pytest.fixture(scope="session")
def builder(geometry):
    return TopologyBuilder(geometry)


@pytest.fixture(scope="session")
def snapshot0(builder):
    return builder.build_snapshot(0.0, None, {})


def make_snapshot(edges, cpu=None, t=0.0, ground_assoc=None):
    """Synthetic snapshot from (a, b[, kind[, state]]) edge tuples.

    Node ids starting with ``G-`` are ground stations; everything else is
    a satellite. Link kind defaults from the endpoint types.
    """
    cpu = cpu or {}
    links = []
    nodes = set()
    for e in edges:
        a, b = e[0], e[1]
        kind = e[2] if len(e) > 2 and e[2] is not None else (
            LinkKind.GROUND if a.startswith("G-") or b.startswith("G-")
            else LinkKind.ISL)
        state = e[3] if len(e) > 3 else LinkState.ACTIVE
        links.append(Link(min(a, b), max(a, b), kind, 20_000_000, state))
        nodes.update((a, b))
    resources = {n: NodeResources(n, cpu_pct=float(cpu.get(n, 0.0)))
                 for n in sorted(nodes)}
    return TopologySnapshot(
        t_s=t, nodes=tuple(sorted(nodes)), links=tuple(links),
        resources=resources, ground_assoc=ground_assoc or {})
