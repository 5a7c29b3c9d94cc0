import pytest

from conftest import Recorder, drain, quiet_sim
from ipble.adv import AdvEvent, QueueOverflow, aux_layout, first_event_latency, pointer_train
from ipble.core import MS
from ipble.medium import FrameKind, RadioFrame

PAYLOAD = bytes(110)  # a 100-byte PUT plus 10 bytes of link overhead


def spy_receptions(sim, mac):
    """Times at which ``mac`` got a complete aux chain, duplicates included."""
    times = []
    orig = mac.on_chain

    def on_chain(ev, frames):
        if all(f is not None for f in frames):
            times.append(sim.now)
        orig(ev, frames)

    mac.on_chain = on_chain
    return times


def test_pointer_train_and_aux_layout():
    assert pointer_train(0) == [(37, 0), (38, 302), (39, 604)]
    # aux starts 300 us after the last 152 us pointer; aux PDU = data + 10 header bytes
    assert aux_layout(0, [115]) == [(1056, 1080)]
    assert aux_layout(0, [245, 80]) == [(1056, 2120), (1056 + 2120 + 300, 800)]


def test_latency_floor_closed_form():
    # setup 1 ms + pointer train 3*152 + 2*150 + 300 us offset + aux air time (10+125)*8
    assert first_event_latency(1 * MS, [115]) == 1000 + 756 + 300 + 1080


def test_first_event_delivery_hits_the_floor():
    latencies = []
    for seed in range(1, 11):
        sim = quiet_sim(nodes=2, seed=seed)
        rec = Recorder(sim)
        sim.macs[0].net = rec
        sim.at(10 * MS, sim.macs[1].enqueue_ip, PAYLOAD, sim.addresses[0])
        drain(sim)
        latencies.append(rec.got[0][0] - 10 * MS)
    floor = first_event_latency(1 * MS, [115])
    assert min(latencies) == floor
    assert all(lat >= floor for lat in latencies)


def test_retransmissions_give_three_events_one_delivery():
    sim = quiet_sim(nodes=2, retransmissions=2)
    rec = Recorder(sim)
    sim.macs[0].net = rec
    times = spy_receptions(sim, sim.macs[0])
    sim.macs[1].enqueue_ip(PAYLOAD, sim.addresses[0])
    drain(sim)
    st = sim.log.node(1)
    assert st.adv_events + st.dropped_adv_events == 3
    assert st.frames_tx == 4 * st.adv_events
    assert len(rec.got) == 1
    assert sim.log.node(0).duplicates == len(times) - 1 >= 1


def test_idle_radio_one_frame_aux_sends_four_frames():
    sim = quiet_sim(nodes=2, retransmissions=0)
    sim.macs[1].enqueue_ip(PAYLOAD, sim.addresses[0])
    drain(sim)
    st = sim.log.node(1)
    assert st.frames_tx == 4
    assert st.tx_by_kind == {"ext_ind": 3, "aux_adv": 1}
    assert sorted(st.tx_by_channel)[-3:] == [37, 38, 39]


def test_large_datagram_uses_a_chain():
    sim = quiet_sim(nodes=2, retransmissions=0)
    rec = Recorder(sim)
    sim.macs[0].net = rec
    sim.macs[1].enqueue_ip(bytes(1280), sim.addresses[0])
    drain(sim)
    assert sim.log.node(1).tx_by_kind == {"ext_ind": 3, "aux_adv": 1, "aux_chain": 5}
    assert rec.got[0][1] == bytes(1280)


def test_stair_bands():
    r, interval = 2, 50 * MS
    floor = first_event_latency(1 * MS, [115])
    offsets = []
    for seed in range(1, 9):
        sim = quiet_sim(nodes=2, retransmissions=r, seed=seed)
        times = spy_receptions(sim, sim.macs[0])
        sim.macs[1].enqueue_ip(PAYLOAD, sim.addresses[0])
        drain(sim)
        offsets += [t - floor for t in times]
    for off in offsets:
        assert any(k * interval <= off <= k * interval + k * 10 * MS for k in range(r + 1)), off


def test_busy_receiver_drops_its_own_event():
    sim = quiet_sim(nodes=2)
    mac = sim.macs[0]
    mac.enqueue_ip(PAYLOAD, sim.addresses[1])
    inst = mac.instances[0]
    mac.committed_until = sim.now + 5 * MS
    assert mac.run_adv_event(inst) == "dropped"
    assert sim.log.node(0).dropped_adv_events == 1
    assert inst.remaining == 2 and inst.next_event_at >= sim.now + 50 * MS


def test_instance_cap_then_queue_then_overflow():
    sim = quiet_sim(nodes=15)
    mac = sim.macs[0]
    for i in range(1, 11):
        mac.enqueue_ip(PAYLOAD, sim.addresses[i])
    assert len(mac.instances) == 10 and not mac.queue
    mac.enqueue_ip(PAYLOAD, sim.addresses[11])
    assert len(mac.queue) == 1 and sim.log.node(0).queue_drops == 0
    for i in (12, 13, 14):
        mac.enqueue_ip(PAYLOAD, sim.addresses[i])
    with pytest.raises(QueueOverflow):
        mac.enqueue_ip(PAYLOAD, sim.addresses[1])
    assert sim.log.node(0).queue_drops == 1


def test_finished_instance_promotes_queued_datagram():
    sim = quiet_sim(nodes=3, retransmissions=1)
    mac = sim.macs[1]
    got = Recorder(sim)
    sim.macs[0].net = got
    mac.enqueue_ip(b"A" * 20, sim.addresses[0])
    mac.enqueue_ip(b"B" * 20, sim.addresses[0])
    # same neighbor: the second waits for the first instance to finish
    assert len(mac.instances) == 1 and len(mac.queue) == 1
    drain(sim)
    assert [d for _, d, _ in got.got] == [b"A" * 20, b"B" * 20]
    assert not mac.instances and not mac.queue
    assert sim.log.node(1).adv_events + sim.log.node(1).dropped_adv_events == 4


def test_directed_event_filtered_for_others():
    sim = quiet_sim(nodes=3, retransmissions=0)
    recs = [Recorder(sim) for _ in range(3)]
    for mac, rec in zip(sim.macs, recs):
        mac.net = rec
    sim.macs[1].enqueue_ip(PAYLOAD, sim.addresses[2])
    drain(sim)
    assert len(recs[2].got) == 1 and not recs[0].got
    assert sim.log.node(0).frames_rx == 0


def test_undirected_event_reaches_everyone():
    sim = quiet_sim(nodes=3, retransmissions=2)
    recs = [Recorder(sim) for _ in range(3)]
    for mac, rec in zip(sim.macs, recs):
        mac.net = rec
    sim.macs[1].enqueue_ip(PAYLOAD, None)
    drain(sim)
    assert len(recs[0].got) == 1 and len(recs[2].got) == 1 and not recs[1].got


def test_simultaneous_instances_serialize_in_order():
    sim = quiet_sim(nodes=3, retransmissions=0)
    mac = sim.macs[0]
    starts = []
    orig = mac.run_adv_event

    def run_adv_event(inst):
        starts.append((sim.now, inst.serial))
        return orig(inst)

    mac.run_adv_event = run_adv_event
    mac.enqueue_ip(PAYLOAD, sim.addresses[2])
    mac.enqueue_ip(PAYLOAD, sim.addresses[1])
    drain(sim)
    (t0, s0), (t1, s1) = starts
    assert (s0, s1) == (0, 1)
    # the second waits for the first train to leave the air, it is not dropped
    assert t0 == 1 * MS and t1 == t0 + 1056 + 1080
    assert sim.log.node(0).dropped_adv_events == 0


def test_pointer_while_committed_is_missed():
    sim = quiet_sim(nodes=3)
    rx, a, b = sim.macs
    evs = []
    for sender in (a, b):
        ev = AdvEvent(sender, 5, None)
        ev.aux_start, ev.chain_end = 2000, 3000
        evs.append(ev)
    f1 = RadioFrame(a.address, 37, 0, 152, FrameKind.EXT_IND, payload=evs[0])
    f2 = RadioFrame(b.address, 37, 500, 152, FrameKind.EXT_IND, payload=evs[1])
    rx.on_pointer(f1)
    rx.on_pointer(f2)
    assert rx.committed_event is evs[0]
    assert sim.log.node(0).missed_pointers == 1
    assert evs[0].receivers == [rx] and evs[1].receivers == []


def test_scanner_rotates_over_primary_channels():
    sim = quiet_sim(nodes=2)
    mac = sim.macs[0]
    period = mac.params.scan_rotation
    t = period * 3 - mac.phase + 1000  # well inside a slot
    heard = [ch for ch in (37, 38, 39) if mac.hears(ch, t, t + 152)]
    nxt = [ch for ch in (37, 38, 39) if mac.hears(ch, t + period, t + period + 152)]
    assert len(heard) == 1 and len(nxt) == 1
    assert nxt[0] == {37: 38, 38: 39, 39: 37}[heard[0]]
    # switching dead time at the slot boundary
    b = period * 4 - mac.phase
    assert not any(mac.hears(ch, b + 10, b + 100) for ch in (37, 38, 39))


def test_rx_fraction_accounts_for_switching():
    sim = quiet_sim(nodes=2, duration_s=3.0)
    drain(sim)
    log = sim.finalize()
    rotations = sim.end // (30 * MS)
    assert log.node(0).rx_us == sim.end - rotations * 150
    assert log.node(0).tx_us == 0
