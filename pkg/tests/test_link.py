import random

import pytest

from nocsim import link, wire
from nocsim.errors import CreditProtocolError


def pkt(size, pid=1):
    rng = random.Random(size * 1000 + pid)
    return wire.build_packet((1, 0, 0), (0, 0, 0), 0, rng.randbytes(size), pid, 0)


# --- framing -----------------------------------------------------------------

@pytest.mark.parametrize("size,words", [(512, 36), (0, 4), (256, 20)])
def test_frame_length(size, words):
    assert len(link.frame(pkt(size))) == words


def test_frame_starts_with_magic_start():
    ws = link.frame(pkt(16))
    assert ws[0] == link.MAGIC and ws[1] == link.START
    assert all(w.kind == link.KIND_DATA for w in ws[2:])


def test_deframe_roundtrip():
    p = pkt(256)
    packets, stats = link.deframe(link.frame(p))
    assert len(packets) == 1
    assert packets[0].header == p.header and packets[0].payload == p.payload
    assert stats.resync_count == 0 and stats.framing_drops == 0


def test_deframe_resyncs_after_junk():
    rng = random.Random(1)
    junk = [link.LineWord(link.KIND_DATA, rng.getrandbits(128)) for _ in range(5)]
    p = pkt(64)
    packets, stats = link.deframe(junk + link.frame(p))
    assert len(packets) == 1 and packets[0].payload == p.payload
    assert stats.resync_count == 1


def test_deframe_recovers_from_truncated_frame():
    p, q = pkt(48, pid=1), pkt(32, pid=2)
    words = link.frame(p)[:-1] + link.frame(q)  # footer word of p deleted
    packets, stats = link.deframe(words)
    assert [x.header.packet_id for x in packets] == [2]
    assert stats.framing_drops == 1


def test_deframe_drops_corrupt_payload():
    p = pkt(128)
    words = link.frame(p)
    bad = words[4]._replace(bits=words[4].bits ^ 1)
    packets, stats = link.deframe(words[:4] + [bad] + words[5:])
    assert packets == []
    assert stats.crc_drops == 1


def test_deframe_drops_uncorrectable_header():
    p = pkt(16)
    words = link.frame(p)
    bad = words[2]._replace(bits=words[2].bits ^ 0b11)
    packets, stats = link.deframe([words[0], words[1], bad] + words[3:])
    assert packets == []
    assert stats.header_drops == 1


def test_deframe_ignores_credit_words():
    p = pkt(80)
    words = link.frame(p)
    words.insert(4, link.make_credit_word(3, 5))
    packets, stats = link.deframe(words)
    assert len(packets) == 1 and packets[0].payload == p.payload
    assert stats.credit_words == 1


# --- credits -------------------------------------------------------------------

def test_consume_restore_arithmetic():
    s = link.CreditState(initial=100)
    s2 = link.credit_consume(s, 34)
    assert s2.credit == 66 and s.credit == 100
    s3 = link.credit_restore(s2, 34)
    assert s3.credit == 100


def test_consume_below_zero_is_protocol_violation():
    s = link.CreditState(initial=10)
    with pytest.raises(CreditProtocolError):
        link.credit_consume(s, 11)


def test_restore_past_initial_is_protocol_violation():
    s = link.CreditState(initial=10)
    with pytest.raises(CreditProtocolError):
        link.credit_restore(s, 1)


@pytest.mark.parametrize(
    "credit,tred,n,expect",
    [(40, 4, 34, True), (38, 4, 34, False), (34, 0, 34, False), (35, 0, 34, True)],
)
def test_can_transmit_threshold(credit, tred, n, expect):
    s = link.CreditState(initial=512, tred=tred, credit=credit)
    assert link.can_transmit(s, n) is expect


def test_random_consume_restore_never_negative():
    rng = random.Random(2)
    s = link.CreditState(initial=64, tred=4)
    outstanding = []
    for _ in range(5000):
        n = rng.randrange(1, 40)
        if rng.random() < 0.5 and s.can_transmit(n):
            s.consume(n)
            outstanding.append(n)
        elif outstanding:
            s.restore(outstanding.pop(rng.randrange(len(outstanding))))
        assert 0 <= s.credit <= s.initial
        assert s.credit + sum(outstanding) == s.initial


# --- health ---------------------------------------------------------------------

def test_health_roundtrip():
    h = link.HealthWord(status=0xAB, seq=7)
    w = link.embed_health((12, 3), h)
    assert link.extract_health(w) == h
    assert link.extract_credits(w) == (12, 3)


def test_health_does_not_disturb_credits():
    for h in (link.HealthWord(0, 0), link.HealthWord(255, 255)):
        assert link.extract_credits(link.embed_health((7, 9), h)) == (7, 9)


def test_extract_on_non_credit_word_rejected():
    with pytest.raises(ValueError):
        link.extract_health(link.MAGIC)
    with pytest.raises(ValueError):
        link.extract_credits(link.LineWord(link.KIND_DATA, 0))


# --- serializer timing ------------------------------------------------------------

def test_serial_cycles_defaults():
    assert link.serial_cycles(36) == 72
    assert link.serial_cycles(0) == 0


def test_serial_cycles_faster_line():
    m = link.SerialModel(line_rate=20e9)
    assert link.serial_cycles(36, m) == 36


def test_serial_cycles_with_coding_tax():
    m = link.SerialModel(charge_coding=True)
    assert m.word_cycles() == 3
