"""Scenario files: flat, line-oriented ``key = value`` text.

Dotted keys group related tunables, ``#`` starts a comment, and the two
repeatable keys (``ground_station``, ``flow``) accumulate. Every tunable
has a default mirroring the reference parameter set, so an empty file is
a valid scenario. Validation collects all violations instead of failing
fast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .constellation import (
    DEFAULT_GROUND_STATIONS,
    ConstellationGeometry,
    GroundStation,
    OrbitalShell,
    ShellId,
)
from .green_te import GreenParams


class ScenarioError(Exception):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


_BOOL_TRUE = {"true", "yes", "1", "on"}
_BOOL_FALSE = {"false", "no", "0", "off"}

# key -> (type tag, default)
DEFAULTS: dict[str, tuple[str, object]] = {
    "duration_s": ("float", 3600.0),
    "refresh_s": ("float", 10.0),
    "queue_ms": ("float", 250.0),
    "payload_bytes": ("int", 512),
    "capacity_bps": ("int", 20_000_000),
    "timeout_s": ("float", 1.0),
    "allow_nonstandard": ("bool", False),
    "sim.target_pps": ("float", 60.0),
    "sim.liveness_step_s": ("float", 1.0),
    "isl.clearance_km": ("float", 80.0),
    "ground.elevation_mask_deg": ("float", 10.0),
    "constellation.polar.plane_count": ("int", 6),
    "constellation.polar.sats_per_plane": ("int", 13),
    "constellation.polar.altitude_km": ("float", 1015.0),
    "constellation.polar.inclination_deg": ("float", 99.5),
    "constellation.polar.phasing_offset_deg": ("float", 360.0 / 78.0),
    "constellation.polar.raan_spread_deg": ("float", 360.0),
    "constellation.inclined.plane_count": ("int", 20),
    "constellation.inclined.sats_per_plane": ("int", 6),
    "constellation.inclined.altitude_km": ("float", 1325.0),
    "constellation.inclined.inclination_deg": ("float", 50.88),
    "constellation.inclined.phasing_offset_deg": ("float", 3.0),
    "constellation.inclined.raan_spread_deg": ("float", 360.0),
    "traffic.matrix": ("str", "hub"),
    "traffic.hub": ("str", "auto"),
    "traffic.flows_at_full": ("int", 120),
    "green.cpu_th_pct": ("float", 80.0),
    "green.idle_cpu_pct": ("float", 10.0),
    "green.idle_time_s": ("float", 600.0),
    "green.baseline": ("float", 100.0),
    "cost.lookup_v4": ("float", 1.6),
    "cost.lookup_v6": ("float", 1.6),
    "cost.mpls_swap": ("float", 0.7),
    "cost.srv6_transit": ("float", 0.6),
    "cost.srv6_end": ("float", 0.8),
    "cost.encap": ("float", 2.0),
    "cost.spf_per_unit": ("float", 0.02),
    "cost.idle_per_s": ("float", 50.0),
    "cost.capacity_units_per_s": ("float", 5000.0),
}

# flows_at_full == 0 is the legal no-traffic boundary.
_POSITIVE_KEYS = [k for k in DEFAULTS
                  if DEFAULTS[k][0] in ("int", "float")
                  and k not in ("sim.target_pps", "traffic.flows_at_full")]


@dataclass
class Scenario:
    values: dict[str, object] = field(default_factory=dict)
    ground_stations: list[GroundStation] = field(default_factory=list)
    explicit_flows: list[tuple[str, str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        for key, (_t, default) in DEFAULTS.items():
            self.values.setdefault(key, default)
        if not self.ground_stations:
            self.ground_stations = list(DEFAULT_GROUND_STATIONS)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def duration_s(self) -> float:
        return float(self.values["duration_s"])

    @property
    def refresh_s(self) -> float:
        return float(self.values["refresh_s"])

    @property
    def payload_bytes(self) -> int:
        return int(self.values["payload_bytes"])

    @property
    def capacity_bps(self) -> int:
        return int(self.values["capacity_bps"])

    @property
    def timeout_s(self) -> float:
        return float(self.values["timeout_s"])

    @property
    def queue_capacity_bytes(self) -> int:
        return int(float(self.values["queue_ms"]) / 1000.0 * self.capacity_bps / 8.0)

    def shells(self) -> tuple[OrbitalShell, OrbitalShell]:
        v = self.values
        polar = OrbitalShell(
            shell_id=ShellId.POLAR,
            sat_count=int(v["constellation.polar.plane_count"])
            * int(v["constellation.polar.sats_per_plane"]),
            altitude_km=float(v["constellation.polar.altitude_km"]),
            inclination_deg=float(v["constellation.polar.inclination_deg"]),
            plane_count=int(v["constellation.polar.plane_count"]),
            sats_per_plane=int(v["constellation.polar.sats_per_plane"]),
            phasing_offset_deg=float(v["constellation.polar.phasing_offset_deg"]),
            raan_spread_deg=float(v["constellation.polar.raan_spread_deg"]))
        inclined = OrbitalShell(
            shell_id=ShellId.INCLINED,
            sat_count=int(v["constellation.inclined.plane_count"])
            * int(v["constellation.inclined.sats_per_plane"]),
            altitude_km=float(v["constellation.inclined.altitude_km"]),
            inclination_deg=float(v["constellation.inclined.inclination_deg"]),
            plane_count=int(v["constellation.inclined.plane_count"]),
            sats_per_plane=int(v["constellation.inclined.sats_per_plane"]),
            phasing_offset_deg=float(v["constellation.inclined.phasing_offset_deg"]),
            raan_spread_deg=float(v["constellation.inclined.raan_spread_deg"]))
        return polar, inclined

    def geometry(self) -> ConstellationGeometry:
        return ConstellationGeometry(
            shells=self.shells(),
            ground_stations=tuple(self.ground_stations),
            isl_clearance_km=float(self.values["isl.clearance_km"]),
            elevation_mask_deg=float(self.values["ground.elevation_mask_deg"]))

    def green_params(self) -> GreenParams:
        return GreenParams(
            cpu_th_pct=float(self.values["green.cpu_th_pct"]),
            idle_cpu_pct=float(self.values["green.idle_cpu_pct"]),
            idle_time_s=float(self.values["green.idle_time_s"]),
            baseline=float(self.values["green.baseline"]))

    def hub_station(self) -> str:
        hub = str(self.values["traffic.hub"])
        if hub != "auto":
            return hub if hub.startswith("G-") else f"G-{hub}"
        # Deterministic default: the northernmost non-controller site, so
        # the sink is covered by a single shell where possible.
        candidates = [g for g in self.ground_stations if not g.is_controller_site]
        candidates.sort(key=lambda g: (-g.latitude_deg, g.node_id))
        return candidates[0].node_id if candidates else self.ground_stations[0].node_id

    def validate(self) -> list[str]:
        v = self.values
        out: list[str] = []
        for key in _POSITIVE_KEYS:
            try:
                if float(v[key]) <= 0:
                    out.append(f"{key}: must be positive, got {v[key]}")
            except (TypeError, ValueError):
                out.append(f"{key}: not a number: {v[key]!r}")
        if float(v["sim.target_pps"]) < 0:
            out.append("sim.target_pps: must be >= 0")
        if int(v["traffic.flows_at_full"]) < 0:
            out.append("traffic.flows_at_full: must be >= 0")
        th = float(v["green.cpu_th_pct"])
        idle = float(v["green.idle_cpu_pct"])
        if not (0.0 < th <= 100.0):
            out.append(f"green.cpu_th_pct: must be in (0, 100], got {th}")
        if not (0.0 < idle < th):
            out.append(f"green.idle_cpu_pct: must be in (0, cpu_th_pct), got {idle}")
        if float(v["green.baseline"]) < 100.0:
            out.append(f"green.baseline: must be >= 100, got {v['green.baseline']}")
        allow = bool(v["allow_nonstandard"])
        if not allow:
            for shell, count, alt in (("polar", 78, 1015.0), ("inclined", 120, 1325.0)):
                planes = int(v[f"constellation.{shell}.plane_count"])
                spp = int(v[f"constellation.{shell}.sats_per_plane"])
                if planes * spp != count:
                    out.append(f"constellation.{shell}: plane_count x sats_per_plane "
                               f"must equal {count}, got {planes * spp}")
                if float(v[f"constellation.{shell}.altitude_km"]) != alt:
                    out.append(f"constellation.{shell}.altitude_km: must be {alt}")
            if len(self.ground_stations) != 10:
                out.append(f"ground station count != 10 "
                           f"(got {len(self.ground_stations)})")
            n_ctrl = sum(1 for g in self.ground_stations if g.is_controller_site)
            if n_ctrl != 2:
                out.append(f"controller site count != 2 (got {n_ctrl})")
        names = [g.node_id for g in self.ground_stations]
        if len(set(names)) != len(names):
            out.append("ground_station: duplicate names")
        for g in self.ground_stations:
            if not (-90.0 <= g.latitude_deg <= 90.0):
                out.append(f"ground_station {g.node_id}: latitude out of range")
            if not (-180.0 <= g.longitude_deg <= 180.0):
                out.append(f"ground_station {g.node_id}: longitude out of range")
        matrix = str(v["traffic.matrix"])
        if matrix not in ("hub", "random_pairs"):
            out.append(f"traffic.matrix: unknown value {matrix!r}")
        hub = str(v["traffic.hub"])
        if hub != "auto":
            want = hub if hub.startswith("G-") else f"G-{hub}"
            if want not in names:
                out.append(f"traffic.hub: no such ground station {hub!r}")
        for src, dst, rate in self.explicit_flows:
            for end in (src, dst):
                if end not in names:
                    out.append(f"flow: no such ground station {end!r}")
            if rate <= 0:
                out.append(f"flow {src}->{dst}: rate must be positive")
        if math.fmod(self.duration_s, self.refresh_s) not in (0.0,):
            # Not an error: the engine floors to whole refresh periods.
            pass
        return out

    def effective_text(self) -> str:
        """Complete resolved configuration, one key per line."""
        lines = [f"{k} = {_fmt(self.values[k])}" for k in sorted(DEFAULTS)]
        for g in self.ground_stations:
            ctrl = ", controller" if g.is_controller_site else ""
            lines.append(f"ground_station = {g.node_id[2:] if g.node_id.startswith('G-') else g.node_id}, "
                         f"{g.latitude_deg}, {g.longitude_deg}{ctrl}")
        for src, dst, rate in self.explicit_flows:
            lines.append(f"flow = {src}, {dst}, {rate:.0f}")
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        # Exact round trip: repr is shortest-precise, whole floats shorten.
        return str(int(value)) if value == int(value) else repr(value)
    return str(value)


def _parse_value(key: str, raw: str, errors: list[str]):
    tag, _default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        errors.append(f"{key}: cannot parse {raw!r} as {tag}")
        return _default


def parse_scenario(text: str) -> tuple[Scenario, list[str]]:
    """Parse scenario text; returns the scenario and parse-level errors."""
    errors: list[str] = []
    values: dict[str, object] = {}
    stations: list[GroundStation] = []
    flows: list[tuple[str, str, float]] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value")
            continue
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key == "ground_station":
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) not in (3, 4):
                errors.append(f"line {lineno}: ground_station needs "
                              f"NAME, LAT, LON[, controller]")
                continue
            try:
                name = parts[0] if parts[0].startswith("G-") else f"G-{parts[0]}"
                stations.append(GroundStation(
                    node_id=name,
                    latitude_deg=float(parts[1]),
                    longitude_deg=float(parts[2]),
                    is_controller_site=len(parts) == 4
                    and parts[3].lower() == "controller"))
            except ValueError:
                errors.append(f"line {lineno}: bad ground_station coordinates")
        elif key == "flow":
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) != 3:
                errors.append(f"line {lineno}: flow needs SRC, DST, RATE_BPS")
                continue
            try:
                src = parts[0] if parts[0].startswith("G-") else f"G-{parts[0]}"
                dst = parts[1] if parts[1].startswith("G-") else f"G-{parts[1]}"
                flows.append((src, dst, float(parts[2])))
            except ValueError:
                errors.append(f"line {lineno}: bad flow rate")
        elif key in DEFAULTS:
            values[key] = _parse_value(key, raw, errors)
        else:
            errors.append(f"line {lineno}: unknown key {key!r}")
    return Scenario(values=values, ground_stations=stations,
                    explicit_flows=flows), errors


def load_scenario(path: str) -> Scenario:
    """Load and fully validate a scenario file; raises ScenarioError."""
    with open(path) as f:
        text = f.read()
    scenario, errors = parse_scenario(text)
    errors.extend(scenario.validate())
    if errors:
        raise ScenarioError(errors)
    return scenario
