"""Packet representation and bit-exact codec.

A packet is one 128-bit header flit, zero or more 128-bit payload flits
(byte-aligned payload up to 512 bytes, last flit zero-padded) and one
128-bit footer flit.  Header integrity is protected by SECDED check bits,
payload integrity by a CRC-32 carried in the footer.

Header layout (bit 0 = LSB of the flit):
    0-7 dest.x   8-15 dest.y  16-23 dest.z
   24-31 src.x  32-39 src.y   40-47 src.z
   48-55 packet type          56-71 payload length (bytes)
   72-103 packet id           104-111 destination port
   112 vc                     113-118 reserved (zero)
   119-127 SECDED check bits (8 Hamming + overall parity)

Footer layout:
    0-31 payload CRC-32   32-63 echo of packet id
   64-95 injection timestamp (low 32 bits of the cycle)   96-127 reserved
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

from . import kernels
from .errors import FramingError, HeaderCorruptError, InvalidHeaderError, PayloadCorruptError

MAX_PAYLOAD = 512
FLIT_BYTES = 16

Coord = tuple  # (x, y, z)


class EccStatus(Enum):
    CLEAN = "clean"
    CORRECTED = "corrected"
    UNCORRECTABLE = "uncorrectable"


_STATUS_FROM_CODE = {
    kernels.ECC_CLEAN: EccStatus.CLEAN,
    kernels.ECC_CORRECTED: EccStatus.CORRECTED,
    kernels.ECC_UNCORRECTABLE: EccStatus.UNCORRECTABLE,
}


@dataclass(frozen=True)
class EccVerdict:
    status: EccStatus
    bit_index: int = -1  # stored-bit position that was corrected

    @property
    def ok(self):
        return self.status is not EccStatus.UNCORRECTABLE


@dataclass(frozen=True)
class Header:
    dest: Coord
    src: Coord
    ptype: int = 0
    payload_len: int = 0
    packet_id: int = 0
    dest_port: int = 0
    vc: int = 0

    def validate(self):
        for name, coord in (("dest", self.dest), ("src", self.src)):
            if len(coord) != 3 or any(not 0 <= c <= 255 for c in coord):
                raise InvalidHeaderError(f"{name} coordinates out of range: {coord}")
        if not 0 <= self.payload_len <= MAX_PAYLOAD:
            raise InvalidHeaderError(f"payload_len {self.payload_len} outside 0..{MAX_PAYLOAD}")
        if not 0 <= self.ptype <= 255:
            raise InvalidHeaderError(f"ptype {self.ptype} outside 0..255")
        if not 0 <= self.dest_port <= 255:
            raise InvalidHeaderError(f"dest_port {self.dest_port} outside 0..255")
        if self.vc not in (0, 1):
            raise InvalidHeaderError(f"vc {self.vc} not a single bit")


@dataclass(frozen=True)
class Footer:
    crc32: int
    echo_id: int
    timestamp: int
    reserved: int = 0


@dataclass
class Packet:
    header: Header
    payload: bytes = b""
    footer: Optional[Footer] = None

    def __post_init__(self):
        if self.footer is None:
            self.footer = Footer(
                crc32=crc32(self.payload),
                echo_id=self.header.packet_id,
                timestamp=0,
            )

    @property
    def flit_count(self):
        return 2 + payload_flits(len(self.payload))


def payload_flits(length):
    return (length + FLIT_BYTES - 1) // FLIT_BYTES


def crc32(payload):
    """CRC-32 of the payload bytes (poly 0x04C11DB7, reflected, init/xorout all-ones)."""
    if len(payload) > MAX_PAYLOAD:
        raise InvalidHeaderError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return kernels.crc32(payload)


def encode_header(h):
    """Header -> 128-bit flit with freshly computed check bits."""
    h.validate()
    return kernels.pack_header(
        h.dest, h.src, h.ptype, h.payload_len, h.packet_id & 0xFFFFFFFF, h.dest_port, h.vc
    )


def decode_header(flit):
    """Flit -> (Header, EccVerdict); raises HeaderCorruptError when uncorrectable."""
    fields, code, bit = kernels.unpack_header(flit)
    verdict = EccVerdict(_STATUS_FROM_CODE[code], bit)
    if fields is None:
        raise HeaderCorruptError(f"uncorrectable header flit {flit:032x}")
    dest, src, ptype, plen, pid, dport, vc = fields
    return Header(tuple(dest), tuple(src), ptype, plen, pid, dport, vc), verdict


def encode_footer(f):
    return (
        (f.crc32 & 0xFFFFFFFF)
        | (f.echo_id & 0xFFFFFFFF) << 32
        | (f.timestamp & 0xFFFFFFFF) << 64
        | (f.reserved & 0xFFFFFFFF) << 96
    )


def decode_footer(flit):
    return Footer(
        crc32=flit & 0xFFFFFFFF,
        echo_id=flit >> 32 & 0xFFFFFFFF,
        timestamp=flit >> 64 & 0xFFFFFFFF,
        reserved=flit >> 96 & 0xFFFFFFFF,
    )


def build_packet(dest, src, ptype, payload, packet_id, cycle, dest_port=0, vc=0):
    """Assemble a packet: header fields, payload, CRC/echo/timestamp footer."""
    if len(payload) > MAX_PAYLOAD:
        raise InvalidHeaderError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    header = Header(
        dest=tuple(dest),
        src=tuple(src),
        ptype=ptype,
        payload_len=len(payload),
        packet_id=packet_id & 0xFFFFFFFF,
        dest_port=dest_port,
        vc=vc,
    )
    header.validate()
    footer = Footer(crc32=crc32(payload), echo_id=packet_id & 0xFFFFFFFF, timestamp=cycle & 0xFFFFFFFF)
    return Packet(header, bytes(payload), footer)


def to_flits(p):
    """Packet -> [header flit, payload flits..., footer flit]."""
    return [encode_header(p.header), *kernels.payload_to_flits(p.payload), encode_footer(p.footer)]


def from_flits(flits):
    """Flit sequence -> Packet, validating ECC, length, and CRC."""
    if len(flits) < 2:
        raise FramingError(f"sequence of {len(flits)} flits cannot hold header and footer")
    header, _ = decode_header(flits[0])
    nflits = payload_flits(header.payload_len)
    if len(flits) != 2 + nflits:
        raise FramingError(
            f"expected {2 + nflits} flits for a {header.payload_len}-byte payload, got {len(flits)}"
        )
    payload = kernels.flits_to_payload(flits[1:-1], header.payload_len)
    footer = decode_footer(flits[-1])
    if footer.crc32 != crc32(payload):
        raise PayloadCorruptError(
            f"crc mismatch: footer {footer.crc32:08x} vs computed {crc32(payload):08x}"
        )
    return Packet(header, payload, footer)


def dump_packet(p):
    """One-line trace form: hex flits, most-significant nibble first."""
    return " ".join(f"{f:032x}" for f in to_flits(p))


def parse_dump(line):
    return from_flits([int(tok, 16) for tok in line.split()])
