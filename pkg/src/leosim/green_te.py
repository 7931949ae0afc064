"""Energy-aware link weighting and low-power transitions.

Link weights derive from endpoint CPU readings: busier (but not
overloaded) links get lower weights and are preferred, concentrating
traffic so persistently idle satellites can be switched to low-power
mode. Links with an endpoint above the utilization cap are pruned
outright (weight zero means removed, never free).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .routing import (
    NoRouteError,
    ProtocolKind,
    RouteSet,
    RoutingContext,
    _build_adjacency,
    _dijkstra,
    compute_routeset,
)
from .topology import LinkState, NodeResources, TopologySnapshot, edge_key


@dataclass(frozen=True)
class GreenParams:
    cpu_th_pct: float = 80.0
    idle_cpu_pct: float = 10.0
    idle_time_s: float = 600.0
    baseline: float = 100.0

    def __post_init__(self) -> None:
        if not (0.0 < self.idle_cpu_pct < self.cpu_th_pct <= 100.0):
            raise ValueError("need 0 < idle_cpu_pct < cpu_th_pct <= 100")
        if self.baseline < 100.0:
            raise ValueError("baseline must be >= 100")


@dataclass
class WeightedLinks:
    weights: dict[tuple[str, str], float] = field(default_factory=dict)
    overloaded: set[str] = field(default_factory=set)


@dataclass
class IdleTracker:
    """First instant of each node's current run of below-idle CPU samples."""
    below_since: dict[str, float] = field(default_factory=dict)


def calculate_weights(snapshot: TopologySnapshot, params: GreenParams,
                      stats: dict | None = None) -> WeightedLinks:
    """Energy-aware weight for every Active link.

    weight = baseline - max(endpoint CPU); a link whose busier endpoint
    strictly exceeds the cap gets the pruned sentinel (zero) and its
    overloaded endpoints are reported.
    """
    wl = WeightedLinks()
    ops = 0
    res = snapshot.resources
    for link in snapshot.links:
        if link.state is not LinkState.ACTIVE:
            continue
        ops += 1
        cpu_a = res[link.endpoint_a].cpu_pct
        cpu_b = res[link.endpoint_b].cpu_pct
        worst = max(cpu_a, cpu_b)
        k = edge_key(link.endpoint_a, link.endpoint_b)
        if worst > params.cpu_th_pct:
            wl.weights[k] = 0.0
            if cpu_a > params.cpu_th_pct:
                wl.overloaded.add(link.endpoint_a)
            if cpu_b > params.cpu_th_pct:
                wl.overloaded.add(link.endpoint_b)
        else:
            wl.weights[k] = params.baseline - worst
    if stats is not None:
        stats["ops"] = stats.get("ops", 0) + ops
    return wl


def update_idle(tracker: IdleTracker, resources: Mapping[str, NodeResources],
                t: float, params: GreenParams,
                never_idle: frozenset[str] | set[str] = frozenset()) -> set[str]:
    """Nodes whose CPU has stayed below the idle threshold long enough.

    Called once per snapshot. A sample at or above the threshold resets
    the node's timer. Ground stations and controller sites are passed in
    ``never_idle`` and are never returned; neither are nodes already in
    low-power mode.
    """
    out: set[str] = set()
    for node_id, res in resources.items():
        if node_id in never_idle or node_id.startswith("G-"):
            tracker.below_since.pop(node_id, None)
            continue
        if res.low_power:
            continue
        if res.cpu_pct < params.idle_cpu_pct:
            since = tracker.below_since.setdefault(node_id, t)
            if t - since >= params.idle_time_s:
                out.add(node_id)
        else:
            tracker.below_since.pop(node_id, None)
    return out


def green_routes(snapshot: TopologySnapshot, flows: Sequence,
                 params: GreenParams,
                 ctx: RoutingContext | None = None,
                 strict: bool = True) -> RouteSet:
    """Green-weighted segment routes with per-flow availability fallback.

    Runs the weight calculation, prunes zero-weight links (low-power
    nodes are already absent from the Active graph), and computes
    primary + backup segment lists. A flow the pruned graph disconnects
    falls back to the unit-weight path over all Active links; only a
    flow disconnected even there raises NoRouteError (when ``strict``).
    """
    wl = calculate_weights(snapshot, params)
    rs = compute_routeset(snapshot, ProtocolKind.SRV6_GREEN, flows,
                          weights=wl.weights, ctx=ctx,
                          pin_egress_sat=True, strict=strict)
    return rs


def wake_candidates(snapshot: TopologySnapshot, flows: Sequence) -> set[str]:
    """Low-power nodes that must rejoin for stranded flows to route.

    Considers the graph of Active plus low-power links (unit weights);
    returns the low-power nodes on the resulting paths. Empty when every
    stranded flow is disconnected for geometric reasons.
    """
    usable = [l for l in snapshot.links
              if l.state in (LinkState.ACTIVE, LinkState.LOW_POWER)]
    adj = _build_adjacency(usable)
    low_power = {nid for nid, r in snapshot.resources.items() if r.low_power}
    wake: set[str] = set()
    trees: dict[str, dict] = {}
    for f in flows:
        tree = trees.get(f.dst_gs)
        if tree is None:
            tree = _dijkstra(adj, None, f.dst_gs)
            trees[f.dst_gs] = tree
        hit = tree.get(f.src_gs)
        if hit is None:
            continue
        wake.update(n for n in hit[1] if n in low_power)
    return wake
