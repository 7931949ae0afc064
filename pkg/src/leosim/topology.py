"""Time-evolving network graph.

Snapshots taken every refresh period carry every node, the grid ISLs and
ground links with their states, and per-node resource readings. Completed
snapshots are immutable values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .constellation import (
    ConstellationGeometry,
    OrbitalShell,
    SatelliteEphemeris,
    ShellId,
    sat_node_id,
    visible,
)

DEFAULT_CAPACITY_BPS = 20_000_000
REFRESH_PERIOD_S = 10.0


class LinkKind(str, Enum):
    ISL = "isl"
    GROUND = "ground"


class LinkState(str, Enum):
    ACTIVE = "active"
    # Geometrically invisible, or a visible ground pair the station's
    # terminal is not currently pointed at.
    INACTIVE = "inactive"
    LOW_POWER = "low_power"


@dataclass(frozen=True)
class Link:
    endpoint_a: str
    endpoint_b: str
    kind: LinkKind
    capacity_bps: int = DEFAULT_CAPACITY_BPS
    state: LinkState = LinkState.ACTIVE

    @property
    def key(self) -> tuple[str, str]:
        return (self.endpoint_a, self.endpoint_b)


def edge_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


@dataclass
class NodeResources:
    node_id: str
    cpu_pct: float = 0.0
    mem_bytes: int = 0
    low_power: bool = False
    idle_since_s: float | None = None


@dataclass(frozen=True)
class TopologySnapshot:
    t_s: float
    nodes: tuple[str, ...]
    links: tuple[Link, ...]
    resources: dict[str, NodeResources] = field(repr=False)
    # Ground association: gs_id -> {shell -> serving satellite}. Only the
    # associated pair per (station, shell) is an Active ground link.
    ground_assoc: dict[str, dict[ShellId, str]] = field(default_factory=dict, repr=False)

    def active_links(self) -> list[Link]:
        return [l for l in self.links if l.state is LinkState.ACTIVE]

    def link_state(self, a: str, b: str) -> LinkState | None:
        k = edge_key(a, b)
        for l in self.links:
            if edge_key(l.endpoint_a, l.endpoint_b) == k:
                return l.state
        return None


def grid_isl_neighbors(sat: SatelliteEphemeris, shell: OrbitalShell,
                       positions: Mapping[str, np.ndarray],
                       visible_fn) -> list[str]:
    """Same-shell grid neighbours of one satellite.

    Next/previous slot in the plane always; the same slot in adjacent
    planes when the pair is visible and the planes are not counter-rotating
    (RAAN gap above 90 degrees). Cross-shell ISLs are never created.
    """
    out: list[str] = []
    s = shell.sats_per_plane
    for ds in (1, -1):
        nb = sat_node_id(shell.shell_id, sat.plane_index, (sat.slot_index + ds) % s)
        if nb != sat.node_id and nb not in out:
            out.append(nb)
    raan_step = shell.raan_spread_deg / shell.plane_count
    for dp in (1, -1):
        plane = (sat.plane_index + dp) % shell.plane_count
        if plane == sat.plane_index:
            continue
        gap = abs(plane * raan_step - sat.plane_index * raan_step) % 360.0
        if min(gap, 360.0 - gap) > 90.0:
            continue
        nb = sat_node_id(shell.shell_id, plane, sat.slot_index)
        if nb in out:
            continue
        if visible_fn(positions[sat.node_id], positions[nb]):
            out.append(nb)
    return out


class TopologyBuilder:
    """Builds snapshots from constellation geometry and resource readings."""

    def __init__(self, geometry: ConstellationGeometry,
                 capacity_bps: int = DEFAULT_CAPACITY_BPS,
                 refresh_s: float = REFRESH_PERIOD_S):
        self.geometry = geometry
        self.capacity_bps = capacity_bps
        self.refresh_s = refresh_s
        self._isl_pairs = geometry.isl_candidate_pairs()

    def _ground_visibility(self, positions: np.ndarray) -> dict[str, list[tuple[float, str]]]:
        """Per station: visible satellites as (elevation, sat_id), best first."""
        geo = self.geometry
        n_sat = geo.sat_count
        sat_pos = positions[:n_sat]
        out: dict[str, list[tuple[float, str]]] = {}
        for gi, gs_id in enumerate(geo.gs_ids):
            gp = positions[n_sat + gi]
            d = sat_pos - gp
            dist = np.linalg.norm(d, axis=1)
            sin_el = (d @ gp) / (np.linalg.norm(gp) * np.maximum(dist, 1e-12))
            el = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
            mask = el >= geo.elevation_mask_deg
            vis = [(float(el[i]), geo.sat_ids[i]) for i in np.nonzero(mask)[0]]
            vis.sort(key=lambda p: (-p[0], p[1]))
            out[gs_id] = vis
        return out

    def build_snapshot(self, t: float,
                       prior: TopologySnapshot | None,
                       resources: Mapping[str, NodeResources]) -> TopologySnapshot:
        """Snapshot of the network at time t (a multiple of the refresh).

        ISL grid candidates appear with their current state; ground links
        appear for every visible (station, satellite) pair, Active only
        for the per-shell associated pair. Link state is a pure function
        of visibility, association and low-power flags at t, so states
        carried over unchanged endpoints match the prior snapshot.
        """
        if t < 0 or abs(t / self.refresh_s - round(t / self.refresh_s)) > 1e-9:
            raise ValueError(f"snapshot time {t} is not a refresh instant")
        geo = self.geometry
        positions = geo.positions_at(t)
        low_power = {nid for nid, r in resources.items() if r.low_power}

        links: list[Link] = []
        isl_vis = geo.visibility_bulk(np.array([t]), self._isl_pairs)[0]
        for (a, b), vis_ok in zip(self._isl_pairs, isl_vis):
            if not vis_ok:
                state = LinkState.INACTIVE
            elif a in low_power or b in low_power:
                state = LinkState.LOW_POWER
            else:
                state = LinkState.ACTIVE
            links.append(Link(a, b, LinkKind.ISL, self.capacity_bps, state))

        ground_vis = self._ground_visibility(positions)
        ground_assoc: dict[str, dict[ShellId, str]] = {}
        shell_of = {nid: geo.sat_meta(nid)[0].shell_id for nid in geo.sat_ids}
        for gs_id in geo.gs_ids:
            assoc: dict[ShellId, str] = {}
            for _el, sat_id in ground_vis[gs_id]:
                sid = shell_of[sat_id]
                if sid not in assoc and sat_id not in low_power:
                    assoc[sid] = sat_id
            ground_assoc[gs_id] = assoc
            assoc_sats = set(assoc.values())
            for _el, sat_id in ground_vis[gs_id]:
                if sat_id in low_power:
                    state = LinkState.LOW_POWER
                elif sat_id in assoc_sats:
                    state = LinkState.ACTIVE
                else:
                    state = LinkState.INACTIVE
                a, b = (gs_id, sat_id) if gs_id < sat_id else (sat_id, gs_id)
                links.append(Link(a, b, LinkKind.GROUND, self.capacity_bps, state))

        res = {nid: resources.get(nid, NodeResources(nid)) for nid in geo.node_ids}
        return TopologySnapshot(
            t_s=float(t),
            nodes=tuple(geo.node_ids),
            links=tuple(links),
            resources=res,
            ground_assoc=ground_assoc)


def snapshot_to_text(snapshot: TopologySnapshot) -> str:
    """Debug export: one link per line, ``t a b kind state``."""
    lines = [f"{snapshot.t_s:.0f} {l.endpoint_a} {l.endpoint_b} "
             f"{l.kind.value} {l.state.value}" for l in snapshot.links]
    return "\n".join(lines) + "\n"
