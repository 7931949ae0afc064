"""Per-window samples, headline metrics and file export (schema v1)."""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Mapping

SCHEMA_VERSION = "v1"
SERIES_HEADER = "t_s,node_id,cpu_pct,mem_bytes"


class EmptyStreamError(Exception):
    pass


class IoFailure(Exception):
    pass


@dataclass(frozen=True)
class Sample:
    t_s: float
    node_id: str
    cpu_pct: float
    mem_bytes: int


@dataclass
class RunSummary:
    protocol: str
    load_fraction: float
    seed: int
    pdr_pct: float
    peak_cpu_pct: float
    avg_cpu_pct: float
    avg_mem_bytes: float
    overhead_pct: float
    drops_by_reason: dict[str, float] = field(default_factory=dict)
    low_power_node_seconds: float = 0.0
    controller_cpu_pct: float = 0.0


@dataclass(frozen=True)
class PacketRecord:
    """Per-packet trace row (one row per simulated batch, ``weight`` wire
    packets each)."""
    flow_id: str
    created_s: float
    header_bytes: int
    payload_bytes: int
    weight: float
    outcome: str  # delivered | in_flight | drop reason


def pdr(sent: float, delivered: float) -> float:
    """Delivery rate percentage; vacuously 100 when nothing was sent."""
    if sent < delivered or delivered < 0:
        raise ValueError("need sent >= delivered >= 0")
    if sent == 0:
        return 100.0
    return 100.0 * delivered / sent


def overhead_pct(packets: Iterable) -> float:
    """Mean per-packet header share over all sent packets, percent.

    A weighted per-packet mean, not a ratio of byte totals, so mixed
    payload sizes contribute per packet.
    """
    total_w = 0.0
    acc = 0.0
    for p in packets:
        w = getattr(p, "weight", 1.0)
        total_w += w
        acc += w * (100.0 * p.header_bytes / (p.header_bytes + p.payload_bytes))
    if total_w == 0:
        raise EmptyStreamError("no packets")
    return acc / total_w


def aggregate(samples: Iterable[Sample], packets: Iterable[PacketRecord],
              events: Mapping) -> RunSummary:
    """Recompute the run summary from an exported trace.

    ``events`` carries the run metadata and counters that are not
    derivable from samples/packets alone: protocol, load_fraction, seed,
    satellite_ids, controller_ids, low_power_node_seconds.
    """
    sat_ids = set(events["satellite_ids"])
    controller_ids = set(events["controller_ids"])
    peak = 0.0
    cpu_acc = mem_acc = ctrl_acc = 0.0
    cpu_n = ctrl_n = 0
    for s in samples:
        if s.node_id in sat_ids:
            peak = max(peak, s.cpu_pct)
            cpu_acc += s.cpu_pct
            mem_acc += s.mem_bytes
            cpu_n += 1
        if s.node_id in controller_ids:
            ctrl_acc += s.cpu_pct
            ctrl_n += 1
    sent = delivered = 0.0
    drops: dict[str, float] = {}
    oh_acc = 0.0
    for p in packets:
        sent += p.weight
        oh_acc += p.weight * (100.0 * p.header_bytes /
                              (p.header_bytes + p.payload_bytes))
        if p.outcome == "delivered":
            delivered += p.weight
        elif p.outcome != "in_flight":
            drops[p.outcome] = drops.get(p.outcome, 0.0) + p.weight
    return RunSummary(
        protocol=events["protocol"],
        load_fraction=events["load_fraction"],
        seed=events["seed"],
        pdr_pct=pdr(sent, delivered),
        peak_cpu_pct=peak,
        avg_cpu_pct=cpu_acc / cpu_n if cpu_n else 0.0,
        avg_mem_bytes=mem_acc / cpu_n if cpu_n else 0.0,
        overhead_pct=oh_acc / sent if sent else 0.0,
        drops_by_reason={k: drops[k] for k in sorted(drops)},
        low_power_node_seconds=events.get("low_power_node_seconds", 0.0),
        controller_cpu_pct=ctrl_acc / ctrl_n if ctrl_n else 0.0,
    )


def _atomic_write(path: str, data: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
        with os.fdopen(fd, "w", newline="\n") as f:
            f.write(data)
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(str(e)) from e


def summary_to_text(summary: RunSummary) -> str:
    """Flat key = value form, LF line endings, stable key order."""
    lines = [f"schema = {SCHEMA_VERSION}",
             f"protocol = {summary.protocol}",
             f"load_fraction = {summary.load_fraction:.4f}",
             f"seed = {summary.seed}",
             f"pdr_pct = {summary.pdr_pct:.2f}",
             f"peak_cpu_pct = {summary.peak_cpu_pct:.2f}",
             f"avg_cpu_pct = {summary.avg_cpu_pct:.2f}",
             f"avg_mem_bytes = {summary.avg_mem_bytes:.2f}",
             f"overhead_pct = {summary.overhead_pct:.2f}",
             f"low_power_node_seconds = {summary.low_power_node_seconds:.2f}",
             f"controller_cpu_pct = {summary.controller_cpu_pct:.2f}"]
    for reason in sorted(summary.drops_by_reason):
        lines.append(f"drops.{reason} = {summary.drops_by_reason[reason]:.0f}")
    return "\n".join(lines) + "\n"


def summary_from_text(text: str) -> RunSummary:
    kv: dict[str, str] = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    if kv.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema {kv.get('schema')!r}")
    drops = {k.split(".", 1)[1]: float(v) for k, v in kv.items()
             if k.startswith("drops.")}
    return RunSummary(
        protocol=kv["protocol"],
        load_fraction=float(kv["load_fraction"]),
        seed=int(kv["seed"]),
        pdr_pct=float(kv["pdr_pct"]),
        peak_cpu_pct=float(kv["peak_cpu_pct"]),
        avg_cpu_pct=float(kv["avg_cpu_pct"]),
        avg_mem_bytes=float(kv["avg_mem_bytes"]),
        overhead_pct=float(kv["overhead_pct"]),
        drops_by_reason=drops,
        low_power_node_seconds=float(kv["low_power_node_seconds"]),
        controller_cpu_pct=float(kv["controller_cpu_pct"]),
    )


def export_summary(summary: RunSummary, path: str) -> None:
    _atomic_write(path, summary_to_text(summary))


def load_summary(path: str) -> RunSummary:
    with open(path) as f:
        return summary_from_text(f.read())


def series_to_text(samples: Iterable[Sample]) -> str:
    lines = [SERIES_HEADER]
    for s in samples:
        lines.append(f"{s.t_s:.0f},{s.node_id},{s.cpu_pct:.2f},{s.mem_bytes:d}")
    return "\n".join(lines) + "\n"


def export_series(samples: Iterable[Sample], path: str) -> None:
    _atomic_write(path, series_to_text(samples))
