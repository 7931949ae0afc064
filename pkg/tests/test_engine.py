import pytest

from leosim import engine, metrics
from leosim.engine import (
    BASE_HEADER_BYTES,
    DropReason,
    Flow,
    LinkQueue,
    NodeCostModel,
    Packet,
    build_flows,
    forward,
    generate_traffic,
    queue_admit,
)
from leosim.routing import ProtocolKind, RoutingContext, compute_routeset
from leosim.scenario import Scenario, ScenarioError
from leosim.topology import edge_key

from conftest import FlowSpec


def short_scenario(duration=120.0, **overrides):
    sc = Scenario()
    sc.values["duration_s"] = duration
    for k, v in overrides.items():
        sc.values[k] = v
    return sc


# -- traffic generation -------------------------------------------------------

def test_cbr_gap_matches_rate():
    flows = [Flow("f00", "G-A", "G-B", 1.0)]
    sched = generate_traffic(flows, 0.5, 1, capacity_bps=20e6,
                             base_header_bytes=20)
    pkt_bits = (20 + 512) * 8
    assert sched.intervals["f00"] == pytest.approx(pkt_bits / (0.5 * 20e6))
    assert sched.flows[0].rate_bps == pytest.approx(0.5 * 20e6)


def test_two_flows_sharing_link_split_the_rate():
    flows = [Flow("f00", "G-A", "G-H", 1.0), Flow("f01", "G-B", "G-H", 1.0)]
    sched = generate_traffic(flows, 1.0, 1, capacity_bps=20e6,
                             base_header_bytes=20)
    for f in sched.flows:
        assert f.rate_bps == pytest.approx(10e6)


def test_traffic_phases_are_seed_deterministic():
    flows = [Flow(f"f{i:02d}", "G-A", "G-B", 1.0) for i in range(5)]
    a = generate_traffic(flows, 0.5, 42, capacity_bps=20e6, base_header_bytes=20)
    b = generate_traffic(flows, 0.5, 42, capacity_bps=20e6, base_header_bytes=20)
    c = generate_traffic(flows, 0.5, 43, capacity_bps=20e6, base_header_bytes=20)
    assert a.phases == b.phases
    assert a.phases != c.phases


def test_batching_targets_aggregate_rate():
    flows = [Flow("f00", "G-A", "G-B", 1.0)]
    sched = generate_traffic(flows, 1.0, 1, capacity_bps=20e6,
                             base_header_bytes=20, target_pps=100.0)
    wire_pps = 20e6 / ((20 + 512) * 8)
    assert sched.batch == round(wire_pps / 100.0)


def test_build_flows_hub_matrix_counts_and_rates():
    sc = Scenario()
    flows = build_flows(sc, 1.0, 1)
    assert len(flows) == 120
    hub = sc.hub_station()
    assert all(f.dst_gs == hub for f in flows)
    assert sum(f.rate_bps for f in flows) == pytest.approx(20e6)
    assert len(build_flows(sc, 0.1, 1)) == 12


# -- link queue ---------------------------------------------------------------

def test_empty_queue_admits():
    q = LinkQueue(20e6, 625_000)
    depart = queue_admit(q, 0.0, 532)
    assert depart == pytest.approx(532 * 8 / 20e6)


def test_full_queue_drops_arrival():
    q = LinkQueue(20e6, 1000)
    assert q.admit(0.0, 900)[0]
    assert queue_admit(q, 0.0, 200) is DropReason.QUEUE_OVERFLOW


def test_sustained_overload_drops_one_sixth():
    # Fluid oracle: offered 1.2x service, steady-state drop fraction 1/6.
    q = LinkQueue(20e6, 625_000)
    nbytes = 1500.0
    interval = nbytes * 8 / (1.2 * 20e6)
    sent = dropped = 0
    t = 0.0
    while t < 60.0:
        sent += 1
        if not q.admit(t, nbytes)[0]:
            dropped += 1
        t += interval
    assert dropped / sent == pytest.approx(1.0 / 6.0, abs=0.01)


# -- single-hop forwarding ----------------------------------------------------

def _mk_packet(flow, protocol, created=0.0):
    return Packet(1, flow, created, BASE_HEADER_BYTES[protocol], 1.0, 1.0)


def test_forward_walks_fib_to_delivery(snapshot0):
    flows = [FlowSpec("f00", "G-LONDON", "G-SVALBARD")]
    rs = compute_routeset(snapshot0, ProtocolKind.IPV4, flows)
    ctx = RoutingContext(snapshot0)
    pk = _mk_packet(Flow("f00", "G-LONDON", "G-SVALBARD", 1.0), ProtocolKind.IPV4)
    visited = [pk.current_node]
    while True:
        out = forward(pk, rs, snapshot0, ctx=ctx)
        if out.kind != "progressed":
            break
        visited.append(out.next_node)
    assert out.kind == "delivered"
    assert tuple(visited) == rs.paths["f00"].hops


def test_forward_deadline_drop(snapshot0):
    flows = [FlowSpec("f00", "G-LONDON", "G-SVALBARD")]
    rs = compute_routeset(snapshot0, ProtocolKind.IPV4, flows)
    pk = _mk_packet(Flow("f00", "G-LONDON", "G-SVALBARD", 1.0),
                    ProtocolKind.IPV4, created=0.0)
    out = forward(pk, rs, snapshot0, t=1.5)
    assert out.kind == "dropped" and out.reason is DropReason.DEADLINE


def test_forward_no_route_drop(snapshot0):
    flows = [FlowSpec("f00", "G-LONDON", "G-SVALBARD")]
    rs = compute_routeset(snapshot0, ProtocolKind.IPV4, flows)
    pk = _mk_packet(Flow("f00", "G-LONDON", "G-SVALBARD", 1.0), ProtocolKind.IPV4)
    pk.dst_gs = "G-NOWHERE"
    out = forward(pk, rs, snapshot0)
    assert out.kind == "dropped" and out.reason is DropReason.NO_ROUTE


# -- stale links and the source-side backup switch ---------------------------

def _prepared_run(protocol, load=0.3, seed=4):
    r = engine._Run(short_scenario(), protocol, load, seed, False, False)
    r._close_window(0.0)
    r._recompute(0.0)
    return r


def test_stale_uplink_drops_hop_by_hop_packet():
    r = _prepared_run(ProtocolKind.IPV4)
    flow = r.flows[0]
    first_hop = r.routeset.paths[flow.flow_id].hops[1]
    r.death[edge_key(flow.src_gs, first_hop)] = 0.0
    r._emit(1.0, 0)
    assert r.drops[DropReason.STALE_LINK.value] > 0


def test_stale_uplink_engages_srv6_backup():
    r = _prepared_run(ProtocolKind.SRV6)
    flow = r.flows[0]
    first_hop = r.routeset.paths[flow.flow_id].hops[1]
    backup = r.routeset.backup_segments[flow.flow_id]
    r.death[edge_key(flow.src_gs, first_hop)] = 0.0
    r._emit(1.0, 0)
    assert r.drops[DropReason.STALE_LINK.value] == 0
    # The packet left the source over the backup's first segment.
    assert any(item[2] == 1 and item[3].backup_engaged for item in r.heap)
    engaged = [item[3] for item in r.heap if item[2] == 1][0]
    assert engaged.seglist.sids == backup.sids
    assert engaged.header_bytes == 48 + 16 * len(backup.sids)


def test_mid_path_stale_drops_srv6_packet():
    r = _prepared_run(ProtocolKind.SRV6)
    flow = r.flows[0]
    hops = r.routeset.paths[flow.flow_id].hops
    r.death[edge_key(hops[-2], hops[-1])] = 0.0
    r._emit(1.0, 0)
    while r.heap and not r.drops[DropReason.STALE_LINK.value]:
        t, _seq, kind, payload = engine.heapq.heappop(r.heap)
        if kind == 1:
            r._arrive(t, payload)
    assert r.drops[DropReason.STALE_LINK.value] > 0


# -- whole runs ---------------------------------------------------------------

@pytest.mark.parametrize("protocol", list(ProtocolKind))
def test_conservation_and_reasons(protocol):
    res = engine.run(short_scenario(), protocol, 0.6, 2)
    assert res.conservation_ok()
    assert set(res.drops_by_reason) <= {r.value for r in DropReason}
    for fid, c in res.per_flow.items():
        assert c["sent"] >= c["delivered"] + 0.0


def test_identical_runs_are_byte_identical():
    a = engine.run(short_scenario(), ProtocolKind.MPLS, 0.7, 9)
    b = engine.run(short_scenario(), ProtocolKind.MPLS, 0.7, 9)
    assert metrics.summary_to_text(a.summary) == metrics.summary_to_text(b.summary)
    assert metrics.series_to_text(a.samples) == metrics.series_to_text(b.samples)


def test_no_flows_boundary_reports_pure_floor():
    sc = short_scenario(duration=60.0)
    sc.values["traffic.flows_at_full"] = 0
    res = engine.run(sc, ProtocolKind.SRV6, 0.5, 1)
    assert res.summary.pdr_pct == 100.0
    assert res.sent == 0
    # Awake satellites charge exactly the housekeeping floor each window.
    cost = NodeCostModel.from_scenario(sc)
    floor = 100.0 * cost.c_idle_per_s / cost.capacity_units_per_s
    sat_samples = [s for s in res.samples
                   if not s.node_id.startswith("G-") and s.t_s > 0]
    assert all(s.cpu_pct == pytest.approx(floor) for s in sat_samples)
    # Hop-by-hop OSPF adds a uniform recomputation term on every satellite.
    res4 = engine.run(sc, ProtocolKind.IPV4, 0.5, 1)
    sat4 = [s for s in res4.samples
            if not s.node_id.startswith("G-") and s.t_s > 0]
    per_window = {s.t_s for s in sat4}
    for t in per_window:
        vals = {round(s.cpu_pct, 9) for s in sat4 if s.t_s == t}
        assert len(vals) == 1
        assert vals.pop() > floor


def test_snapshot_cadence_short_run():
    res = engine.run(short_scenario(duration=60.0), ProtocolKind.IPV6, 0.2, 1)
    assert res.n_snapshots == 7
    assert len(res.samples) == 208 * 7


def test_load_out_of_range_rejected():
    with pytest.raises(ScenarioError):
        engine.run(short_scenario(), ProtocolKind.IPV4, 1.5, 1)
    with pytest.raises(ScenarioError):
        engine.run(short_scenario(), ProtocolKind.IPV4, 0.0, 1)
