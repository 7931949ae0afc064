"""Two-shell LEO constellation geometry.

Walker-style shells on circular orbits, ground stations rotating with the
Earth, line-of-sight visibility and access-interval computation. Positions
are Earth-centered inertial (ECI), kilometres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

EARTH_RADIUS_KM = 6378.137
MU_KM3_S2 = 398600.4418
EARTH_ROTATION_RAD_S = 7.2921159e-5

ISL_CLEARANCE_KM = 80.0
ELEVATION_MASK_DEG = 10.0

# A position closer to the geocentre than this is a ground site, not a
# satellite (lowest shell sits at 1015 km).
_GROUND_RADIUS_CUTOFF_KM = EARTH_RADIUS_KM + 200.0


class ShellId(str, Enum):
    POLAR = "polar"
    INCLINED = "inclined"


@dataclass(frozen=True)
class OrbitalShell:
    """One Walker shell: planes evenly spread over ``raan_spread_deg``."""

    shell_id: ShellId
    sat_count: int
    altitude_km: float
    inclination_deg: float
    plane_count: int
    sats_per_plane: int
    phasing_offset_deg: float
    raan_spread_deg: float = 360.0

    def __post_init__(self) -> None:
        if self.plane_count * self.sats_per_plane != self.sat_count:
            raise ValueError(
                f"shell {self.shell_id}: {self.plane_count} planes x "
                f"{self.sats_per_plane} slots != {self.sat_count} satellites")

    @property
    def radius_km(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km

    @property
    def mean_motion_rad_s(self) -> float:
        return math.sqrt(MU_KM3_S2 / self.radius_km**3)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi / self.mean_motion_rad_s


# Shell sizing is fixed (78 at 1015 km, 120 at 1325 km); the plane split,
# inclinations and phasing are configurable defaults.
POLAR_SHELL = OrbitalShell(
    shell_id=ShellId.POLAR, sat_count=78, altitude_km=1015.0,
    inclination_deg=99.5, plane_count=6, sats_per_plane=13,
    phasing_offset_deg=360.0 / 78.0)
INCLINED_SHELL = OrbitalShell(
    shell_id=ShellId.INCLINED, sat_count=120, altitude_km=1325.0,
    inclination_deg=50.88, plane_count=20, sats_per_plane=6,
    phasing_offset_deg=360.0 / 120.0)


@dataclass(frozen=True)
class SatelliteEphemeris:
    node_id: str
    shell_id: ShellId
    plane_index: int
    slot_index: int
    position_eci: tuple[float, float, float]
    epoch_s: float


@dataclass(frozen=True)
class GroundStation:
    node_id: str
    latitude_deg: float
    longitude_deg: float
    is_controller_site: bool = False


# Ten fixed sites spread across latitudes, one polar (Svalbard), two
# controller sites (one per hemisphere). Overridable in the scenario file.
DEFAULT_GROUND_STATIONS: tuple[GroundStation, ...] = (
    GroundStation("G-SVALBARD", 78.23, 15.39),
    GroundStation("G-INUVIK", 68.36, -133.72),
    GroundStation("G-OTTAWA", 45.42, -75.70, is_controller_site=True),
    GroundStation("G-LONDON", 51.51, -0.13),
    GroundStation("G-TOKYO", 35.68, 139.69),
    GroundStation("G-SINGAPORE", 1.35, 103.82),
    GroundStation("G-NAIROBI", -1.29, 36.82),
    GroundStation("G-SAOPAULO", -23.55, -46.63),
    GroundStation("G-SYDNEY", -33.87, 151.21, is_controller_site=True),
    GroundStation("G-PUNTAARENAS", -53.16, -70.91),
)


@dataclass(frozen=True)
class AccessInterval:
    endpoint_a: str
    endpoint_b: str
    start_s: float
    end_s: float


def sat_node_id(shell_id: ShellId, plane: int, slot: int) -> str:
    prefix = "P" if shell_id is ShellId.POLAR else "I"
    return f"{prefix}{plane:02d}-{slot:02d}"


def _shell_angles(shell: OrbitalShell) -> tuple[np.ndarray, np.ndarray]:
    """Per-satellite RAAN and initial argument of latitude, radians."""
    planes = np.repeat(np.arange(shell.plane_count), shell.sats_per_plane)
    slots = np.tile(np.arange(shell.sats_per_plane), shell.plane_count)
    raan = np.radians(planes * shell.raan_spread_deg / shell.plane_count)
    u0 = np.radians(slots * 360.0 / shell.sats_per_plane
                    + planes * shell.phasing_offset_deg)
    return raan, u0


def shell_positions(shell: OrbitalShell, t: float) -> np.ndarray:
    """ECI positions of every satellite in the shell at time t, km.

    Circular two-body motion: each satellite advances along its orbit at
    the shell's mean motion. Returned in (plane, slot) row-major order.
    """
    raan, u0 = _shell_angles(shell)
    u = u0 + shell.mean_motion_rad_s * t
    inc = math.radians(shell.inclination_deg)
    r = shell.radius_km
    cos_u, sin_u = np.cos(u), np.sin(u)
    cos_o, sin_o = np.cos(raan), np.sin(raan)
    x = r * (cos_o * cos_u - sin_o * sin_u * math.cos(inc))
    y = r * (sin_o * cos_u + cos_o * sin_u * math.cos(inc))
    z = r * sin_u * math.sin(inc)
    return np.stack([x, y, z], axis=1)


def propagate(shell: OrbitalShell, t: float) -> list[SatelliteEphemeris]:
    """Ephemerides for every satellite of the shell at time t >= 0."""
    pos = shell_positions(shell, t)
    out = []
    k = 0
    for plane in range(shell.plane_count):
        for slot in range(shell.sats_per_plane):
            out.append(SatelliteEphemeris(
                node_id=sat_node_id(shell.shell_id, plane, slot),
                shell_id=shell.shell_id,
                plane_index=plane,
                slot_index=slot,
                position_eci=(float(pos[k, 0]), float(pos[k, 1]), float(pos[k, 2])),
                epoch_s=t))
            k += 1
    return out


def ground_station_eci(gs: GroundStation, t: float) -> np.ndarray:
    """ECI position of a ground site at time t (spherical Earth, km)."""
    lat = math.radians(gs.latitude_deg)
    lon = math.radians(gs.longitude_deg) + EARTH_ROTATION_RAD_S * t
    return np.array([
        EARTH_RADIUS_KM * math.cos(lat) * math.cos(lon),
        EARTH_RADIUS_KM * math.cos(lat) * math.sin(lon),
        EARTH_RADIUS_KM * math.sin(lat),
    ])


def _segment_min_radius(a: np.ndarray, b: np.ndarray) -> float:
    """Closest approach of segment a-b to the geocentre, km."""
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom == 0.0:
        return float(np.linalg.norm(a))
    s = -float(np.dot(a, ab)) / denom
    s = min(1.0, max(0.0, s))
    return float(np.linalg.norm(a + s * ab))


def elevation_deg(gs_pos: np.ndarray, sat_pos: np.ndarray) -> float:
    """Elevation of a satellite above a ground site's local horizon."""
    d = sat_pos - gs_pos
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        return 90.0
    sin_el = float(np.dot(gs_pos, d)) / (float(np.linalg.norm(gs_pos)) * dist)
    return math.degrees(math.asin(max(-1.0, min(1.0, sin_el))))


def visible(a, b, *, isl_clearance_km: float = ISL_CLEARANCE_KM,
            elevation_mask_deg: float = ELEVATION_MASK_DEG) -> bool:
    """Line-of-sight test between two ECI positions.

    Satellite pairs must clear the Earth sphere plus an atmosphere margin;
    ground-satellite pairs must satisfy the elevation mask. Endpoints are
    classified by radius (ground sites sit on the Earth sphere).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a_ground = float(np.linalg.norm(a)) < _GROUND_RADIUS_CUTOFF_KM
    b_ground = float(np.linalg.norm(b)) < _GROUND_RADIUS_CUTOFF_KM
    if a_ground and b_ground:
        return False
    if a_ground:
        return elevation_deg(a, b) >= elevation_mask_deg
    if b_ground:
        return elevation_deg(b, a) >= elevation_mask_deg
    return _segment_min_radius(a, b) >= EARTH_RADIUS_KM + isl_clearance_km


def grid_candidate_pairs(shell: OrbitalShell) -> list[tuple[str, str]]:
    """Static ISL candidate pairs for one shell under the grid policy.

    Ring neighbours within each plane plus the same slot in adjacent
    planes. An adjacent-plane pair is skipped when the RAAN gap between
    the planes exceeds 90 degrees (counter-rotating seam).
    """
    pairs: set[tuple[str, str]] = set()
    raan_step = shell.raan_spread_deg / shell.plane_count
    for plane in range(shell.plane_count):
        for slot in range(shell.sats_per_plane):
            me = sat_node_id(shell.shell_id, plane, slot)
            nxt = sat_node_id(shell.shell_id, plane,
                              (slot + 1) % shell.sats_per_plane)
            if me != nxt:
                pairs.add((min(me, nxt), max(me, nxt)))
        next_plane = (plane + 1) % shell.plane_count
        if next_plane == plane:
            continue
        gap = abs(next_plane * raan_step - plane * raan_step) % 360.0
        gap = min(gap, 360.0 - gap)
        if gap > 90.0:
            continue
        for slot in range(shell.sats_per_plane):
            a = sat_node_id(shell.shell_id, plane, slot)
            b = sat_node_id(shell.shell_id, next_plane, slot)
            pairs.add((min(a, b), max(a, b)))
    return sorted(pairs)


class ConstellationGeometry:
    """Positions and visibility for a full system (shells + ground sites)."""

    def __init__(self, shells: tuple[OrbitalShell, ...] = (POLAR_SHELL, INCLINED_SHELL),
                 ground_stations: tuple[GroundStation, ...] = DEFAULT_GROUND_STATIONS,
                 isl_clearance_km: float = ISL_CLEARANCE_KM,
                 elevation_mask_deg: float = ELEVATION_MASK_DEG):
        self.shells = shells
        self.ground_stations = tuple(ground_stations)
        self.isl_clearance_km = isl_clearance_km
        self.elevation_mask_deg = elevation_mask_deg

        self.sat_ids: list[str] = []
        self._sat_meta: dict[str, tuple[OrbitalShell, int, int]] = {}
        raans, u0s, motions, radii, incs = [], [], [], [], []
        for shell in shells:
            raan, u0 = _shell_angles(shell)
            raans.append(raan)
            u0s.append(u0)
            motions.append(np.full(shell.sat_count, shell.mean_motion_rad_s))
            radii.append(np.full(shell.sat_count, shell.radius_km))
            incs.append(np.full(shell.sat_count, math.radians(shell.inclination_deg)))
            for plane in range(shell.plane_count):
                for slot in range(shell.sats_per_plane):
                    nid = sat_node_id(shell.shell_id, plane, slot)
                    self.sat_ids.append(nid)
                    self._sat_meta[nid] = (shell, plane, slot)
        self._raan = np.concatenate(raans)
        self._u0 = np.concatenate(u0s)
        self._n = np.concatenate(motions)
        self._r = np.concatenate(radii)
        self._inc = np.concatenate(incs)

        self.gs_ids = [gs.node_id for gs in self.ground_stations]
        self._gs_lat = np.radians([gs.latitude_deg for gs in self.ground_stations])
        self._gs_lon = np.radians([gs.longitude_deg for gs in self.ground_stations])

        self.node_ids: list[str] = self.sat_ids + self.gs_ids
        self.index = {nid: i for i, nid in enumerate(self.node_ids)}
        self.controller_ids = [gs.node_id for gs in self.ground_stations
                               if gs.is_controller_site]

    @property
    def sat_count(self) -> int:
        return len(self.sat_ids)

    def sat_meta(self, node_id: str) -> tuple[OrbitalShell, int, int]:
        return self._sat_meta[node_id]

    def positions_at(self, t) -> np.ndarray:
        """Positions of every node at time(s) t.

        Scalar t gives an (N, 3) array in ``node_ids`` order; an array of
        T times gives (T, N, 3).
        """
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        u = self._u0[None, :] + self._n[None, :] * t_arr
        cos_u, sin_u = np.cos(u), np.sin(u)
        cos_o, sin_o = np.cos(self._raan), np.sin(self._raan)
        cos_i, sin_i = np.cos(self._inc), np.sin(self._inc)
        sx = self._r * (cos_o * cos_u - sin_o * sin_u * cos_i)
        sy = self._r * (sin_o * cos_u + cos_o * sin_u * cos_i)
        sz = self._r * sin_u * sin_i

        lon = self._gs_lon[None, :] + EARTH_ROTATION_RAD_S * t_arr
        gx = EARTH_RADIUS_KM * np.cos(self._gs_lat) * np.cos(lon)
        gy = EARTH_RADIUS_KM * np.cos(self._gs_lat) * np.sin(lon)
        gz = EARTH_RADIUS_KM * np.sin(self._gs_lat) * np.ones_like(lon)

        x = np.concatenate([sx, gx], axis=1)
        y = np.concatenate([sy, gy], axis=1)
        z = np.concatenate([sz, gz], axis=1)
        out = np.stack([x, y, z], axis=2)
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return out[0]
        return out

    def isl_candidate_pairs(self) -> list[tuple[str, str]]:
        pairs: list[tuple[str, str]] = []
        for shell in self.shells:
            pairs.extend(grid_candidate_pairs(shell))
        return pairs

    def ground_candidate_pairs(self) -> list[tuple[str, str]]:
        return [(g, s) for g in self.gs_ids for s in self.sat_ids]

    def _pair_visibility(self, positions: np.ndarray, ia: int, ib: int) -> np.ndarray:
        """Visibility of one node pair over all rows of a (T, N, 3) array."""
        a = positions[:, ia, :]
        b = positions[:, ib, :]
        a_ground = ia >= self.sat_count
        b_ground = ib >= self.sat_count
        if a_ground and b_ground:
            return np.zeros(positions.shape[0], dtype=bool)
        if a_ground or b_ground:
            gs, sat = (a, b) if a_ground else (b, a)
            d = sat - gs
            dist = np.linalg.norm(d, axis=1)
            sin_el = np.einsum("ij,ij->i", gs, d) / (
                np.linalg.norm(gs, axis=1) * np.maximum(dist, 1e-12))
            return sin_el >= math.sin(math.radians(self.elevation_mask_deg))
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        s = np.clip(-np.einsum("ij,ij->i", a, ab) / np.maximum(denom, 1e-12), 0.0, 1.0)
        closest = a + s[:, None] * ab
        return np.linalg.norm(closest, axis=1) >= EARTH_RADIUS_KM + self.isl_clearance_km

    def visible_ids(self, node_a: str, node_b: str, t: float) -> bool:
        pos = self.positions_at(np.array([t]))
        return bool(self._pair_visibility(pos, self.index[node_a], self.index[node_b])[0])

    def visibility_over(self, pairs: list[tuple[str, str]], times: np.ndarray
                        ) -> dict[tuple[str, str], np.ndarray]:
        """Boolean visibility series for each pair over the given times."""
        positions = self.positions_at(times)
        return {(a, b): self._pair_visibility(positions, self.index[a], self.index[b])
                for a, b in pairs}

    def visibility_bulk(self, times: np.ndarray,
                        pairs: list[tuple[str, str]]) -> np.ndarray:
        """Visibility of many pairs at many times in one pass, (T, E) bool."""
        positions = self.positions_at(np.asarray(times, dtype=float))
        if positions.ndim == 2:
            positions = positions[None, :, :]
        ia = np.array([self.index[a] for a, _ in pairs])
        ib = np.array([self.index[b] for _, b in pairs])
        A = positions[:, ia, :]
        B = positions[:, ib, :]
        a_ground = ia >= self.sat_count
        b_ground = ib >= self.sat_count
        either_ground = a_ground | b_ground
        both_ground = a_ground & b_ground

        ab = B - A
        denom = np.einsum("tej,tej->te", ab, ab)
        s = np.clip(-np.einsum("tej,tej->te", A, ab) / np.maximum(denom, 1e-12),
                    0.0, 1.0)
        closest = A + s[..., None] * ab
        isl_ok = np.linalg.norm(closest, axis=2) >= EARTH_RADIUS_KM + self.isl_clearance_km

        gs = np.where(a_ground[None, :, None], A, B)
        sat = np.where(a_ground[None, :, None], B, A)
        d = sat - gs
        dist = np.linalg.norm(d, axis=2)
        sin_el = np.einsum("tej,tej->te", gs, d) / (
            np.linalg.norm(gs, axis=2) * np.maximum(dist, 1e-12))
        ground_ok = sin_el >= math.sin(math.radians(self.elevation_mask_deg))

        out = np.where(either_ground[None, :], ground_ok, isl_ok)
        out[:, both_ground] = False
        return out

    def compute_access_intervals(self, duration_s: float, step_s: float,
                                 pairs: list[tuple[str, str]] | None = None
                                 ) -> list[AccessInterval]:
        """Maximal visibility intervals on the sampling grid.

        Samples every candidate pair (grid ISLs and all ground-satellite
        pairs) at t = 0, step, 2*step, ... <= duration. A run of visible
        samples t_i..t_j becomes the interval [t_i, min(t_j + step,
        duration)]; degenerate intervals are dropped.
        """
        if duration_s <= 0 or step_s <= 0:
            raise ValueError("duration_s and step_s must be positive")
        if pairs is None:
            pairs = self.isl_candidate_pairs() + self.ground_candidate_pairs()
        times = np.arange(0.0, duration_s + step_s / 2, step_s)
        vis = self.visibility_over(pairs, times)
        intervals: list[AccessInterval] = []
        for (a, b), series in vis.items():
            start = None
            for k, ok in enumerate(series):
                if ok and start is None:
                    start = times[k]
                elif not ok and start is not None:
                    end = min(times[k - 1] + step_s, duration_s)
                    if end > start:
                        intervals.append(AccessInterval(a, b, float(start), float(end)))
                    start = None
            if start is not None:
                end = min(float(times[-1]) + step_s, duration_s)
                if end > start:
                    intervals.append(AccessInterval(a, b, float(start), float(end)))
        intervals.sort(key=lambda iv: (iv.endpoint_a, iv.endpoint_b, iv.start_s))
        return intervals
