"""Per-protocol route computation and forwarding semantics.

All protocols share one shortest-path core with deterministic
tie-breaking (lexicographically smallest hop sequence among equal-cost
paths), so hop-by-hop FIBs, label-switched paths and segment lists are
mutually consistent by construction.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .topology import Link, LinkKind, LinkState, TopologySnapshot, edge_key

FIRST_LABEL = 16

IPV4_HEADER_BYTES = 20
IPV6_HEADER_BYTES = 40
MPLS_LABEL_BYTES = 4
SRH_BASE_BYTES = 8
SID_BYTES = 16

# Penalty weights for backup computation: minimizing total weight then
# minimizes (shared primary ISLs, shared primary ground links, hop count)
# lexicographically, because each tier dwarfs everything below it.
_PENALTY_ISL = 1_000_000.0
_PENALTY_GROUND = 1_000.0


class ProtocolKind(str, Enum):
    IPV4 = "ipv4"
    IPV6 = "ipv6"
    MPLS = "mpls"
    SRV6 = "srv6"
    SRV6_GREEN = "srv6-green"


class NoRouteError(Exception):
    """A flow's endpoints are disconnected in the routing graph."""

    def __init__(self, flow_id: str, src: str = "", dst: str = ""):
        super().__init__(f"no route for flow {flow_id} ({src} -> {dst})")
        self.flow_id = flow_id


class MalformedHeaderError(Exception):
    pass


class NoLabelEntryError(Exception):
    """No label-map entry for the incoming label (stale LSP)."""


class _Pop:
    def __repr__(self) -> str:  # pragma: no cover
        return "POP"


POP = _Pop()


@dataclass(frozen=True)
class Path:
    hops: tuple[str, ...]
    cost: float

    def edges(self) -> list[tuple[str, str]]:
        return [edge_key(self.hops[i], self.hops[i + 1])
                for i in range(len(self.hops) - 1)]


@dataclass
class Fib:
    owner: str
    entries: dict[str, str] = field(default_factory=dict)


@dataclass
class LabelMap:
    owner: str
    entries: dict[int, tuple[int, str] | _Pop] = field(default_factory=dict)


@dataclass(frozen=True)
class SegmentList:
    sids: tuple[str, ...]
    segments_left: int

    def __post_init__(self) -> None:
        if not (0 <= self.segments_left <= len(self.sids)):
            raise MalformedHeaderError(
                f"segments_left {self.segments_left} out of range for "
                f"{len(self.sids)} sids")
        if len(self.sids) < 1:
            raise MalformedHeaderError("empty segment list")

    @property
    def active_sid(self) -> str:
        return self.sids[len(self.sids) - self.segments_left - 1]


@dataclass
class RouteSet:
    protocol: ProtocolKind
    fibs: dict[str, Fib] | None = None
    label_maps: dict[str, LabelMap] | None = None
    ingress_stacks: dict[str, tuple[int, str]] | None = None
    primary_segments: dict[str, SegmentList] | None = None
    backup_segments: dict[str, SegmentList] | None = None
    # Derived view for audits and accounting, not forwarding state.
    paths: dict[str, Path] = field(default_factory=dict)
    fallback_flows: set[str] = field(default_factory=set)


def srv6_process(seglist: SegmentList, current_node: str) -> tuple[str, SegmentList]:
    """Segment endpoint processing.

    Decrements segments-left and returns the next destination (the new
    active SID); with no segments left the packet is delivered locally.
    """
    if seglist.segments_left > len(seglist.sids):
        raise MalformedHeaderError("segments_left exceeds sid count")
    if seglist.segments_left == 0:
        return current_node, seglist
    updated = SegmentList(seglist.sids, seglist.segments_left - 1)
    return updated.active_sid, updated


def mpls_forward(label_map: LabelMap, in_label: int):
    """Label lookup: swap entry ``(out_label, next_hop)`` or POP at egress."""
    try:
        return label_map.entries[in_label]
    except KeyError:
        raise NoLabelEntryError(f"{label_map.owner}: no entry for label {in_label}")


@dataclass(frozen=True)
class Encapsulation:
    header_bytes: int
    payload_bytes: int

    @property
    def overhead_pct(self) -> float:
        return 100.0 * self.header_bytes / (self.header_bytes + self.payload_bytes)


def header_bytes_for(protocol: ProtocolKind, sid_count: int = 1,
                     label_depth: int = 1) -> int:
    if protocol is ProtocolKind.IPV4:
        return IPV4_HEADER_BYTES
    if protocol is ProtocolKind.IPV6:
        return IPV6_HEADER_BYTES
    if protocol is ProtocolKind.MPLS:
        return IPV6_HEADER_BYTES + MPLS_LABEL_BYTES * max(1, label_depth)
    return IPV6_HEADER_BYTES + SRH_BASE_BYTES + SID_BYTES * max(1, sid_count)


def encapsulate(protocol: ProtocolKind, payload_bytes: int, route=None,
                backup_engaged: bool = False) -> Encapsulation:
    """Header model for one packet of the given protocol.

    ``route`` is the protocol's routing artifact: an ingress label stack
    for MPLS, a SegmentList (or (primary, backup) pair) for the SRv6
    variants; ignored for plain IPv4/IPv6.
    """
    if payload_bytes <= 0:
        raise ValueError("payload_bytes must be positive")
    if protocol in (ProtocolKind.IPV4, ProtocolKind.IPV6):
        h = header_bytes_for(protocol)
    elif protocol is ProtocolKind.MPLS:
        depth = len(route) if isinstance(route, (tuple, list)) else 1
        h = header_bytes_for(protocol, label_depth=depth)
    else:
        seglist = route
        if isinstance(route, tuple) and len(route) == 2 and isinstance(route[0], SegmentList):
            seglist = route[1] if backup_engaged else route[0]
        elif backup_engaged and isinstance(route, SegmentList):
            # A bare primary with the backup engaged gains one detour SID.
            return Encapsulation(header_bytes_for(protocol, len(route.sids) + 1),
                                 payload_bytes)
        n = len(seglist.sids) if isinstance(seglist, SegmentList) else 1
        h = header_bytes_for(protocol, sid_count=n)
    return Encapsulation(h, payload_bytes)


# ---------------------------------------------------------------------------
# Shortest-path core


def _build_adjacency(links: Iterable[Link]) -> dict[str, list[tuple[str, tuple[str, str]]]]:
    adj: dict[str, list[tuple[str, tuple[str, str]]]] = {}
    for l in links:
        k = edge_key(l.endpoint_a, l.endpoint_b)
        adj.setdefault(l.endpoint_a, []).append((l.endpoint_b, k))
        adj.setdefault(l.endpoint_b, []).append((l.endpoint_a, k))
    for v in adj.values():
        v.sort()
    return adj


def _dijkstra(adj: Mapping[str, list[tuple[str, tuple[str, str]]]],
              weights: Mapping[tuple[str, str], float] | None,
              src: str,
              stats: dict | None = None) -> dict[str, tuple[float, tuple[str, ...]]]:
    """Settled (cost, hop sequence) per reachable node.

    Zero-weight links are pruned before the search (sentinel for
    "removed", never "free"). Equal-cost ties settle on the
    lexicographically smallest hop sequence.
    """
    ops = 0
    best: dict[str, tuple[float, tuple[str, ...]]] = {}
    heap: list[tuple[float, tuple[str, ...]]] = [(0.0, (src,))]
    while heap:
        cost, path = heapq.heappop(heap)
        ops += 1
        node = path[-1]
        if node in best:
            continue
        best[node] = (cost, path)
        for nb, ek in adj.get(node, ()):
            ops += 1
            if nb in best:
                continue
            w = 1.0 if weights is None else weights.get(ek, 0.0)
            if w <= 0.0:
                continue
            heapq.heappush(heap, (cost + w, path + (nb,)))
            ops += 1
    if stats is not None:
        stats["ops"] = stats.get("ops", 0) + ops
        stats["nodes"] = len(adj)
        stats["runs"] = stats.get("runs", 0) + 1
    return best


def spf(snapshot: TopologySnapshot,
        weights: Mapping[tuple[str, str], float] | None,
        src: str,
        stats: dict | None = None) -> dict[str, Path]:
    """Minimum-weight paths from src to every reachable node.

    Searches the snapshot's Active links; link weights default to one.
    Unreachable destinations are simply absent.
    """
    adj = _build_adjacency(snapshot.active_links())
    best = _dijkstra(adj, weights, src, stats)
    return {dst: Path(hops, cost) for dst, (cost, hops) in best.items() if dst != src}


class RoutingContext:
    """Per-snapshot routing machinery shared by the protocol builders.

    Holds the Active-link graph, a cache of unit-weight trees (the
    hop-by-hop forwarding basis), and the extra visible-but-unassociated
    ground links that backup paths may use.
    """

    def __init__(self, snapshot: TopologySnapshot):
        self.snapshot = snapshot
        active = snapshot.active_links()
        self.adj = _build_adjacency(active)
        self.active_edges = {edge_key(l.endpoint_a, l.endpoint_b) for l in active}
        self.edge_kind: dict[tuple[str, str], LinkKind] = {}
        extra = []
        for l in snapshot.links:
            k = edge_key(l.endpoint_a, l.endpoint_b)
            self.edge_kind[k] = l.kind
            if (l.kind is LinkKind.GROUND and l.state is LinkState.INACTIVE):
                extra.append(l)
        # Visible ground pairs outside the association: transmittable on
        # demand, available to backup paths only.
        self.extra_ground_edges = {edge_key(l.endpoint_a, l.endpoint_b) for l in extra}
        self.backup_adj = _build_adjacency(active + extra)
        self.transmittable = self.active_edges | self.extra_ground_edges
        self._unit_trees: dict[str, dict[str, tuple[float, tuple[str, ...]]]] = {}
        self.stats: dict = {}

    def unit_tree(self, root: str) -> dict[str, tuple[float, tuple[str, ...]]]:
        tree = self._unit_trees.get(root)
        if tree is None:
            tree = _dijkstra(self.adj, None, root, self.stats)
            self._unit_trees[root] = tree
        return tree

    def unit_path(self, src: str, dst: str) -> Path | None:
        """Unit-weight path src -> dst, consistent with the dst-rooted tree."""
        tree = self.unit_tree(dst)
        hit = tree.get(src)
        if hit is None:
            return None
        cost, hops = hit
        return Path(tuple(reversed(hops)), cost)

    def next_hop_toward(self, node: str, root: str) -> str | None:
        """Hop-by-hop forwarding decision toward ``root``.

        An Active direct edge wins (it is also unit-optimal). A ground
        station may additionally transmit straight onto a visible but
        unassociated satellite (its standby terminal) when that satellite
        is the target; satellites never bypass the ground association.
        Otherwise the unit tree rooted at the target decides.
        """
        if node == root:
            return None
        k = edge_key(node, root)
        if k in self.active_edges:
            return root
        if node.startswith("G-") and k in self.extra_ground_edges:
            return root
        hit = self.unit_tree(root).get(node)
        if hit is None or len(hit[1]) < 2:
            return None
        return hit[1][-2]

    def weighted_path(self, src: str, dst: str,
                      weights: Mapping[tuple[str, str], float],
                      trees: dict[str, dict] | None = None) -> Path | None:
        cache = trees if trees is not None else {}
        tree = cache.get(dst)
        if tree is None:
            tree = _dijkstra(self.adj, weights, dst, self.stats)
            cache[dst] = tree
        hit = tree.get(src)
        if hit is None:
            return None
        cost, hops = hit
        return Path(tuple(reversed(hops)), cost)

    def encode_segments(self, path: Path) -> SegmentList:
        """Compress an explicit path into the shortest SID list that the
        hop-by-hop walk (``next_hop_toward`` between consecutive SIDs)
        reproduces exactly."""
        hops = path.hops
        if len(hops) < 2:
            return SegmentList((hops[-1],), 0)
        sids: list[str] = []
        end = len(hops) - 1
        while end > 0:
            target = hops[end]
            j = end - 1
            while j >= 0 and self.next_hop_toward(hops[j], target) == hops[j + 1]:
                j -= 1
            start = j + 1
            if start == end:
                # Even the single hop onto the target is unwalkable: the
                # edge is neither Active nor a station's standby uplink.
                raise NoRouteError("<encode>", hops[end - 1], target)
            sids.insert(0, target)
            end = start
        return SegmentList(tuple(sids), len(sids) - 1)

    def backup_path(self, primary: Path, src: str, dst: str) -> Path | None:
        """Alternate path maximizing ISL-disjointness from the primary.

        Shared primary ISLs are penalized hardest, then shared primary
        ground links, then hop count, so the minimum-weight path shares
        as few primary ISL edges as possible. The source station's
        standby uplinks (visible, unassociated satellites) are available;
        everywhere else only Active links are, so shared association
        links at the far end count as forced sharing, not a defect.
        """
        primary_edges = set(primary.edges())
        weights: dict[tuple[str, str], float] = {}
        for node, nbrs in self.backup_adj.items():
            for _nb, ek in nbrs:
                if ek in weights:
                    continue
                if ek in self.extra_ground_edges and src not in ek:
                    continue
                w = 1.0
                if ek in primary_edges:
                    w += (_PENALTY_ISL if self.edge_kind.get(ek) is LinkKind.ISL
                          else _PENALTY_GROUND)
                weights[ek] = w
        best = _dijkstra(self.backup_adj, weights, dst, self.stats)
        hit = best.get(src)
        if hit is None:
            return None
        cost, hops = hit
        real_hops = tuple(reversed(hops))
        return Path(real_hops, float(len(real_hops) - 1))


def compute_routeset(snapshot: TopologySnapshot,
                     protocol: ProtocolKind,
                     flows: Sequence,
                     weights: Mapping[tuple[str, str], float] | None = None,
                     ctx: RoutingContext | None = None,
                     pin_egress_sat: bool = False,
                     strict: bool = True,
                     fib_dests: Sequence[str] | None = None) -> RouteSet:
    """Routing artifacts for one protocol over one snapshot.

    Unit weights for IPv4/IPv6/MPLS/SRv6 (identical hop sequences by
    construction); the green variant passes its own weight map and falls
    back to the unit-weight path for flows its pruned graph disconnects.
    With ``strict`` a flow disconnected even on the unit graph raises
    NoRouteError; otherwise it is silently left out (the engine counts
    the drops). ``fib_dests`` restricts FIB columns to the given
    destinations (default: every ground station).
    """
    if ctx is None:
        ctx = RoutingContext(snapshot)
    rs = RouteSet(protocol=protocol)
    flow_list = sorted(flows, key=lambda f: f.flow_id)

    weighted_trees: dict[str, dict] = {}
    for f in flow_list:
        path = None
        if protocol is ProtocolKind.SRV6_GREEN and weights is not None:
            path = ctx.weighted_path(f.src_gs, f.dst_gs, weights, weighted_trees)
        if path is None:
            path = ctx.unit_path(f.src_gs, f.dst_gs)
            if protocol is ProtocolKind.SRV6_GREEN and path is not None:
                rs.fallback_flows.add(f.flow_id)
        if path is None:
            if strict:
                raise NoRouteError(f.flow_id, f.src_gs, f.dst_gs)
            continue
        rs.paths[f.flow_id] = path

    if protocol in (ProtocolKind.IPV4, ProtocolKind.IPV6):
        gs_nodes = (list(fib_dests) if fib_dests is not None
                    else [n for n in snapshot.nodes if n.startswith("G-")])
        rs.fibs = {n: Fib(n) for n in snapshot.nodes}
        for dst in gs_nodes:
            tree = ctx.unit_tree(dst)
            for node, (_c, hops) in tree.items():
                if node == dst or len(hops) < 2:
                    continue
                rs.fibs[node].entries[dst] = hops[-2]
    elif protocol is ProtocolKind.MPLS:
        rs.label_maps = {}
        rs.ingress_stacks = {}
        next_label: dict[str, int] = {}

        def allocate(node: str) -> int:
            lbl = next_label.get(node, FIRST_LABEL)
            next_label[node] = lbl + 1
            return lbl

        for f in flow_list:
            path = rs.paths.get(f.flow_id)
            if path is None:
                continue
            hops = path.hops
            labels = [allocate(n) for n in hops[1:]]
            rs.ingress_stacks[f.flow_id] = (labels[0], hops[1])
            for i, node in enumerate(hops[1:]):
                lm = rs.label_maps.setdefault(node, LabelMap(node))
                if node == hops[-1]:
                    lm.entries[labels[i]] = POP
                else:
                    lm.entries[labels[i]] = (labels[i + 1], hops[i + 2])
    else:
        rs.primary_segments = {}
        rs.backup_segments = {}
        # Flows sharing endpoints share paths, so encode per pair once.
        pair_cache: dict[tuple[str, str, tuple[str, ...]],
                         tuple[SegmentList, SegmentList | None]] = {}
        for f in flow_list:
            path = rs.paths.get(f.flow_id)
            if path is None:
                continue
            key = (f.src_gs, f.dst_gs, path.hops)
            hit = pair_cache.get(key)
            if hit is None:
                if pin_egress_sat and len(path.hops) >= 3:
                    head = ctx.encode_segments(Path(path.hops[:-1], path.cost))
                    sids = head.sids + (path.hops[-1],)
                    primary = SegmentList(sids, len(sids) - 1)
                else:
                    primary = ctx.encode_segments(path)
                bpath = ctx.backup_path(path, f.src_gs, f.dst_gs)
                backup = None
                if bpath is not None and bpath.hops != path.hops:
                    backup = ctx.encode_segments(bpath)
                hit = (primary, backup)
                pair_cache[key] = hit
            rs.primary_segments[f.flow_id] = hit[0]
            if hit[1] is not None:
                rs.backup_segments[f.flow_id] = hit[1]
    return rs


def routeset_to_text(rs: RouteSet) -> str:
    """Debug dump mirroring the snapshot text format."""
    lines = [f"protocol {rs.protocol.value}"]
    if rs.fibs:
        for node in sorted(rs.fibs):
            for dst, nh in sorted(rs.fibs[node].entries.items()):
                lines.append(f"fib {node} {dst} {nh}")
    if rs.label_maps:
        for node in sorted(rs.label_maps):
            for in_l, action in sorted(rs.label_maps[node].entries.items()):
                if isinstance(action, _Pop):
                    lines.append(f"label {node} {in_l} pop")
                else:
                    lines.append(f"label {node} {in_l} {action[0]} {action[1]}")
    if rs.primary_segments:
        for fid, seg in sorted(rs.primary_segments.items()):
            lines.append(f"segments {fid} primary {','.join(seg.sids)}")
    if rs.backup_segments:
        for fid, seg in sorted(rs.backup_segments.items()):
            lines.append(f"segments {fid} backup {','.join(seg.sids)}")
    return "\n".join(lines) + "\n"
