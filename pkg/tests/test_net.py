import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmslam.net import (BROADCAST, F_SCAN, MAX_PAYLOAD, ChannelModel, HeaderError, Message,
                           Network, Packet, PacketHeader, Tag, decode_header, encode_header,
                           required_bandwidth)


def test_header_example_bits():
    h = PacketHeader(src=0, dst=0xF, ack=False, end=True, tag=0, seq=0)
    assert encode_header(h) == bytes([0x0F, 0x40])
    h = PacketHeader(src=0xA, dst=0x3, ack=True, end=False, tag=2, seq=0x9)
    # 1010 0011 1 0 10 1001
    assert encode_header(h) == bytes([0b10100011, 0b10101001])


def test_header_is_a_bijection_over_all_words():
    seen = 0
    for word in range(1 << 16):
        raw = word.to_bytes(2, "big")
        if word >> 12 == BROADCAST:
            with pytest.raises(HeaderError):
                decode_header(raw)
            continue
        assert encode_header(decode_header(raw)) == raw
        seen += 1
    assert seen == 15 * 4096


def test_header_range_checks():
    with pytest.raises(HeaderError):
        PacketHeader(src=BROADCAST, dst=0)
    with pytest.raises(HeaderError):
        PacketHeader(src=0, dst=16)
    with pytest.raises(HeaderError):
        PacketHeader(src=0, dst=1, tag=4)
    with pytest.raises(HeaderError):
        decode_header(b"\x01")


def test_ack_is_two_bytes():
    ack = Packet(PacketHeader(1, 0, ack=True, seq=3))
    assert len(ack) == 2 and len(ack.to_bytes()) == 2


def test_packet_payload_limit():
    Packet(PacketHeader(0, 1), b"x" * MAX_PAYLOAD)
    with pytest.raises(ValueError):
        Packet(PacketHeader(0, 1), b"x" * (MAX_PAYLOAD + 1))
    p = Packet(PacketHeader(2, 5, end=True, tag=1, seq=7), b"abcd")
    assert Packet.from_bytes(p.to_bytes()) == p


def test_message_sizes():
    Message(Tag.POSE_UPDATE, bytes(16))
    Message(Tag.TOF_SCAN_REQUEST, bytes(4))
    Message(Tag.CONTROL, bytes(16))
    assert len(Message(Tag.TOF_SCAN_RESPONSE, bytes(1146)).fragments()) == F_SCAN == 20
    for tag, n in ((Tag.POSE_UPDATE, 15), (Tag.TOF_SCAN_REQUEST, 5), (Tag.TOF_SCAN_RESPONSE, 1147)):
        with pytest.raises(ValueError):
            Message(tag, bytes(n))


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelModel(loss_prob=1.0)
    assert ChannelModel().airtime(2) == pytest.approx(16 / 64100)


def pum(k=0):
    return Message(Tag.POSE_UPDATE, k.to_bytes(4, "little") + bytes(12))


def test_broadcast_pum_bytes_on_air():
    got = []
    net = Network([0, 1, 2, 3], on_message=lambda a, s, m: got.append((a, s, m)))
    net.send(0, pum())
    net.run_until_idle()
    assert net.payload_bytes + net.ack_bytes == 16 + 3 * 2 == 22
    assert net.header_bytes == 2
    assert sorted(a for a, _, _ in got) == [1, 2, 3]
    assert net.reports[-1].ok and net.reports[-1].delivered_to == {1, 2, 3}


def test_sr_unicast_uses_20_fragments():
    body = bytes(range(256)) * 4 + bytes(122)
    got = []
    net = Network([0, 1, 2], on_message=lambda a, s, m: got.append((a, m)))
    net.send(1, Message(Tag.TOF_SCAN_RESPONSE, body), dst=0)
    net.run_until_idle()
    data = [r for r in net.log if not r[3]]
    assert len(data) == 20 and data[-1][4] == 1 and all(r[4] == 0 for r in data[:-1])
    assert got == [(0, Message(Tag.TOF_SCAN_RESPONSE, body))]  # node 2 ignores unicast


def raw(src, dst, seq, end, payload, tag=Tag.POSE_UPDATE):
    return Packet(PacketHeader(src, dst, False, end, int(tag), seq), payload).to_bytes()


def test_duplicate_packet_is_acked_twice_delivered_once():
    got = []
    net = Network([0, 1], on_message=lambda a, s, m: got.append(m))
    pkt = raw(0, 1, 5, True, bytes(16))
    net._ev_arrive(1, pkt)
    net._ev_arrive(1, pkt)
    acks = [r for r in net.log if r[3]]
    assert len(acks) == 2 and all(r[1] == 1 and r[2] == 0 and r[6] == 5 for r in acks)
    assert len(got) == 1


def test_reassembly_with_repeated_fragment():
    got = []
    net = Network([0, 1], on_message=lambda a, s, m: got.append(m))
    parts = [b"a" * 60, b"b" * 60, b"c" * 10]
    for seq, end, part in ((1, False, parts[0]), (2, False, parts[1]), (2, False, parts[1]),
                           (3, True, parts[2])):
        net._ev_arrive(1, raw(0, 1, seq, end, part, Tag.TOF_SCAN_RESPONSE))
    assert got == [Message(Tag.TOF_SCAN_RESPONSE, b"".join(parts))]


def test_reassembly_overflow_resets():
    got = []
    net = Network([0, 1], on_message=lambda a, s, m: got.append(m))
    for seq in range(20):
        net._ev_arrive(1, raw(0, 1, seq % 16, False, b"z" * 60, Tag.TOF_SCAN_RESPONSE))
    assert net.nodes[1].buffers[(0, 1)] == bytearray()  # 1200 > 1146 bytes
    net._ev_arrive(1, raw(0, 1, 4, True, bytes(16)))
    assert got == [Message(Tag.POSE_UPDATE, bytes(16))]


class MonitoredNetwork(Network):
    """Asserts stop-and-wait: a new data packet only once every recipient acknowledged."""

    def _send_fragment(self, node):
        assert not node.pending, f"node {node.address} started a packet with ACKs outstanding"
        super()._send_fragment(node)

    def _transmit(self, pkt, data):
        assert all(v <= 1 for v in self.unacked_in_flight().values())
        if data:
            assert self.nodes[pkt.header.src].in_flight == pkt
        super()._transmit(pkt, data)


@pytest.mark.parametrize("loss", [0.0, 0.1, 0.3])
def test_lossy_exactly_once(loss):
    got = {a: [] for a in range(4)}
    net = MonitoredNetwork(range(4), ChannelModel(loss, seed=7),
                           on_message=lambda a, s, m: got[a].append((s, m)))
    sent = {a: [] for a in range(4)}
    for k in range(40):
        src = k % 4
        m = pum(k)
        sent[src].append(m)
        net.send(src, m)
    sr = Message(Tag.TOF_SCAN_RESPONSE, np.random.default_rng(1).bytes(1146))
    net.send(2, sr, dst=1)
    net.run_until_idle()
    for a in range(4):
        expect = sorted((s, m.body) for s in range(4) if s != a for m in sent[s])
        if a == 1:
            expect.append((2, sr.body))
            expect.sort()
        assert sorted((s, m.body) for s, m in got[a]) == expect
    assert all(r.ok for r in net.reports)
    if loss > 0:
        assert net.on_air_bytes > 40 * (18 + 6)  # retransmissions happened


def test_sender_is_stop_and_wait_across_messages():
    net = Network([0, 1])
    for k in range(3):
        net.send(0, pum(k))
    assert len(net.nodes[0].queue) == 2  # one in flight, rest queued
    net.run_until_idle()
    data = [r for r in net.log if r[1] == 0 and not r[3]]
    assert [r[6] for r in data] == [0, 1, 2]


def test_failed_recipient_times_out_and_others_continue():
    got = []
    reports = []
    net = Network([0, 1, 2], on_message=lambda a, s, m: got.append((a, m)),
                  on_report=lambda a, r: reports.append(r))
    net.fail(2)
    net.send(0, Message(Tag.TOF_SCAN_RESPONSE, bytes(200)))
    net.run_until_idle()
    assert reports[0].failed == {2} and reports[0].delivered_to == {1}
    assert [a for a, _ in got] == [1]
    data = [r for r in net.log if not r[3]]
    assert len(data) == 1 + 20 + 3  # first fragment with 20 retries, then 3 more fragments
    assert 21 * 0.05 < net.now < 21 * 0.05 + 0.1  # plus airtime of the later fragments


def test_failed_node_is_silent():
    net = Network([0, 1])
    net.fail(1)
    net.send(1, pum())
    net.run_until_idle()
    assert net.log == []


def test_packet_log_csv_columns():
    net = Network([0, 1])
    net.send(0, pum())
    net.run_until_idle()
    lines = net.packet_log_csv().splitlines()
    assert lines[0] == "t,src,dst,ack,end,tag,seq,len"
    assert lines[1].split(",")[1:] == ["0", "15", "0", "1", "0", "0", "18"]
    assert lines[2].split(",")[1:] == ["1", "0", "1", "0", "0", "0", "2"]


def test_required_bandwidth_examples():
    b = required_bandwidth(2, 1.0, 0.0)
    assert b["bytes_per_m"] == 36 and b["bits_per_m"] == 288
    b = required_bandwidth(4, 1.0, 0.0, velocity=0.5)
    assert b["bytes_per_m"] == 88 and b["bits_per_m"] == 704 and b["bits_per_s"] == 352
    b = required_bandwidth(3, 2.0, 0.5)
    assert b["bytes_per_m"] == pytest.approx(1.5 * 20 + 3 * 0.5 * (4 + 1146 + 40))
    with pytest.raises(ValueError):
        required_bandwidth(0, 1.0, 0.0)
    with pytest.raises(ValueError):
        required_bandwidth(2, 1.0, 1.5)


@given(st.integers(1, 14), st.integers(1, 30))
def test_pose_only_traffic_matches_model(n_drones, n_pums):
    net = Network(range(n_drones))
    for k in range(n_pums):
        net.send(k % n_drones, pum(k))
    net.run_until_idle()
    per_pose = required_bandwidth(n_drones, 1.0, 0.0)["bytes_per_m"] / n_drones
    assert net.model_bytes == n_pums * per_pose
