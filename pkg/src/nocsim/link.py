"""Serial link transmission control.

A packet travels over the serial channel as a frame of 128-bit line words:
Magic, Start, then the packet's flits.  Credit words ride the reverse
channel (and may interleave anywhere, including mid-frame); they return
drained-buffer space to the transmitter and optionally piggyback a node
health word.  There is no acknowledgement or retransmission: the credit
protocol alone guarantees the receiver FIFO never overflows.

Line words are ``LineWord(kind, bits, ref)`` named tuples; ``ref`` is an
optional simulator-side handle used by the live endpoints and ignored by
the codec functions.
"""

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from . import wire
from .errors import CreditProtocolError, NocsimError

KIND_MAGIC = 0
KIND_START = 1
KIND_DATA = 2
KIND_CREDIT = 3

_KIND_NAMES = {KIND_MAGIC: "magic", KIND_START: "start", KIND_DATA: "data", KIND_CREDIT: "credit"}

MAGIC_WORD = int("a55af00d" * 4, 16)
START_WORD = int("f00da55a" * 4, 16)

VC_UPPER = 0
VC_LOWER = 1


class LineWord(NamedTuple):
    kind: int
    bits: int
    ref: object = None


MAGIC = LineWord(KIND_MAGIC, MAGIC_WORD)
START = LineWord(KIND_START, START_WORD)


def frame(packet_or_flits):
    """Packet (or flit list) -> [Magic, Start, flits...]."""
    flits = packet_or_flits
    if isinstance(packet_or_flits, wire.Packet):
        flits = wire.to_flits(packet_or_flits)
    return [MAGIC, START, *(LineWord(KIND_DATA, f) for f in flits)]


# --- credit words and health ------------------------------------------------

@dataclass(frozen=True)
class HealthWord:
    status: int = 0  # 8-bit node-health code
    seq: int = 0     # 8-bit monotonic stamp


def make_credit_word(restore_upper, restore_lower=0, health=None):
    """Pack per-VC credit restore counts (and optional health) into a line word."""
    h = health or HealthWord()
    bits = (
        (restore_upper & 0xFFFF)
        | (restore_lower & 0xFFFF) << 16
        | (h.status & 0xFF) << 32
        | (h.seq & 0xFF) << 40
    )
    return LineWord(KIND_CREDIT, bits)


def embed_health(credits, health):
    """Credit count(s) + HealthWord -> Credit line word."""
    if isinstance(credits, tuple):
        upper, lower = credits
    else:
        upper, lower = credits, 0
    return make_credit_word(upper, lower, health)


def extract_credits(word):
    if word.kind != KIND_CREDIT:
        raise ValueError(f"not a credit word: kind={_KIND_NAMES.get(word.kind, word.kind)}")
    return word.bits & 0xFFFF, word.bits >> 16 & 0xFFFF


def extract_health(word):
    if word.kind != KIND_CREDIT:
        raise ValueError(f"not a credit word: kind={_KIND_NAMES.get(word.kind, word.kind)}")
    return HealthWord(status=word.bits >> 32 & 0xFF, seq=word.bits >> 40 & 0xFF)


# --- credit state -------------------------------------------------------------

@dataclass
class CreditState:
    """Transmitter-side view of free receiver buffer space, in flits."""

    initial: int
    tred: int = 4
    credit: int = -1  # -1 -> start full

    def __post_init__(self):
        if self.credit < 0:
            self.credit = self.initial

    def can_transmit(self, n):
        """Whole-packet gate: start only if n flits fit strictly above TRED."""
        return self.credit - n > self.tred

    def consume(self, n):
        if n > self.credit:
            raise CreditProtocolError(f"consume {n} with only {self.credit} credits")
        self.credit -= n

    def restore(self, n):
        if self.credit + n > self.initial:
            raise CreditProtocolError(
                f"restore {n} overflows {self.credit}/{self.initial} credits"
            )
        self.credit += n


def credit_consume(s, n):
    """Functional form: new CreditState with n flits consumed."""
    out = replace(s)
    out.consume(n)
    return out


def credit_restore(s, n):
    """Functional form: new CreditState with n flits restored."""
    out = replace(s)
    out.restore(n)
    return out


def can_transmit(s, n):
    return s.can_transmit(n)


# --- serializer timing ---------------------------------------------------------

@dataclass(frozen=True)
class SerialModel:
    """Timing of the serial side of one channel.

    The default line rate is treated as the usable post-coding rate (the
    64B/66B overhead lives inside the transceiver's baud rate), so no
    coding tax is charged unless ``charge_coding`` is set.
    ``latency_cycles`` is the fixed transceiver pipeline delay from the end
    of serialization to availability at the receiver; the default is a
    calibration constant chosen to reproduce reference per-hop latency,
    not a measured hardware value.
    """

    line_rate: float = 10e9
    coding_num: int = 64
    coding_den: int = 66
    charge_coding: bool = False
    clock_hz: float = 156.25e6
    latency_cycles: int = 22

    def word_cycles(self):
        rate = self.line_rate
        if self.charge_coding:
            rate = rate * self.coding_num / self.coding_den
        return math.ceil(wire.FLIT_BYTES * 8 * self.clock_hz / rate)


def serial_cycles(words, model=None):
    """Clock cycles to serialize `words` 128-bit line words."""
    m = model or SerialModel()
    return words * m.word_cycles()


# --- stream decoding ------------------------------------------------------------

_HUNT = 0
_EXPECT_START = 1
_EXPECT_HEADER = 2
_COLLECT = 3


@dataclass
class DeframeStats:
    resync_count: int = 0
    framing_drops: int = 0
    header_drops: int = 0
    crc_drops: int = 0
    credit_words: int = 0
    packets: int = 0


class Deframer:
    """Word-stream decoder with resynchronization.

    May start mid-stream: words are skipped (one resync event per episode)
    until a Magic/Start pair is seen.  ECC or CRC failures drop the packet
    and count it; the stream itself is never aborted.
    """

    def __init__(self):
        self.stats = DeframeStats()
        self._state = _HUNT
        self._hunting_run = False
        self._flits = []
        self._remaining = 0

    def feed(self, word):
        """Consume one line word; returns a Packet when one completes."""
        kind = word.kind
        if kind == KIND_CREDIT:
            self.stats.credit_words += 1
            return None

        if self._state == _HUNT:
            if kind == KIND_MAGIC:
                self._state = _EXPECT_START
                self._hunting_run = False
            else:
                if not self._hunting_run:
                    self.stats.resync_count += 1
                    self._hunting_run = True
            return None

        if self._state == _EXPECT_START:
            if kind == KIND_START:
                self._state = _EXPECT_HEADER
            elif kind == KIND_MAGIC:
                pass  # repeated Magic, keep waiting for Start
            else:
                self._lose_sync()
            return None

        if self._state == _EXPECT_HEADER:
            if kind != KIND_DATA:
                return self._frame_abort(kind)
            try:
                header, _ = wire.decode_header(word.bits)
            except NocsimError:
                self.stats.header_drops += 1
                self._state = _HUNT
                self._hunting_run = False
                return None
            self._flits = [word.bits]
            self._remaining = wire.payload_flits(header.payload_len) + 1
            self._state = _COLLECT
            return None

        # _COLLECT
        if kind != KIND_DATA:
            return self._frame_abort(kind)
        self._flits.append(word.bits)
        self._remaining -= 1
        if self._remaining:
            return None
        flits, self._flits = self._flits, []
        self._state = _HUNT
        self._hunting_run = False
        try:
            packet = wire.from_flits(flits)
        except NocsimError:
            self.stats.crc_drops += 1
            return None
        self.stats.packets += 1
        return packet

    def _frame_abort(self, kind):
        self.stats.framing_drops += 1
        self._flits = []
        if kind == KIND_MAGIC:
            self._state = _EXPECT_START
        else:
            self._state = _HUNT
            self._hunting_run = False
        return None

    def _lose_sync(self):
        self._state = _HUNT
        self._hunting_run = True
        self.stats.resync_count += 1


def deframe(words):
    """Decode a word iterable -> (packets, DeframeStats)."""
    d = Deframer()
    packets = []
    for w in words:
        p = d.feed(w)
        if p is not None:
            packets.append(p)
    return packets, d.stats
