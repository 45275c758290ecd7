"""Pure-Python flit codec kernels.

This is the fallback lane for the compiled extension in ``_core``; both
expose the same functions with identical semantics and are selected in
``nocsim.kernels.__init__``.

A flit is a 128-bit word carried as a Python int.  Headers hold 119 data
bits (bits 0..118) protected by a SECDED code: 8 Hamming check bits at
bits 119..126 plus an overall parity bit at 127.  The Hamming code places
data bit i at virtual codeword position ``_VPOS[i]`` (the i-th integer >= 3
that is not a power of two) and check bit k at position 2**k, so a nonzero
syndrome names the erroneous position directly.
"""

import zlib

FLIT_BITS = 128
DATA_BITS = 119
FLIT_MASK = (1 << FLIT_BITS) - 1
DATA_MASK = (1 << DATA_BITS) - 1

ECC_CLEAN = 0
ECC_CORRECTED = 1
ECC_UNCORRECTABLE = 2

# Header field layout inside the 119 data bits.
_SHIFT_DEST_X = 0
_SHIFT_DEST_Y = 8
_SHIFT_DEST_Z = 16
_SHIFT_SRC_X = 24
_SHIFT_SRC_Y = 32
_SHIFT_SRC_Z = 40
_SHIFT_PTYPE = 48
_SHIFT_PLEN = 56
_SHIFT_PKTID = 72
_SHIFT_DPORT = 104
_SHIFT_VC = 112


def _virtual_positions():
    pos = []
    v = 3
    while len(pos) < DATA_BITS:
        if v & (v - 1):
            pos.append(v)
        v += 1
    return pos


_VPOS = _virtual_positions()

# Parity masks: bit i of _CHECK_MASK[k] is set iff data bit i contributes
# to Hamming check bit k.
_CHECK_MASK = [0] * 8
for _i, _v in enumerate(_VPOS):
    for _k in range(8):
        if _v >> _k & 1:
            _CHECK_MASK[_k] |= 1 << _i

# Syndrome value -> stored bit index (data 0..118, check bits 119..126).
_SYNDROME_TO_BIT = {}
for _i, _v in enumerate(_VPOS):
    _SYNDROME_TO_BIT[_v] = _i
for _k in range(8):
    _SYNDROME_TO_BIT[1 << _k] = DATA_BITS + _k


def crc32(data):
    """IEEE CRC-32 (reflected, init and xorout all-ones) of a byte string."""
    return zlib.crc32(data) & 0xFFFFFFFF


def secded_encode(data):
    """Return the 9 check bits for a 119-bit data word."""
    checks = 0
    for k in range(8):
        if (data & _CHECK_MASK[k]).bit_count() & 1:
            checks |= 1 << k
    parity = (data.bit_count() + checks.bit_count()) & 1
    return checks | parity << 8


def secded_pack(data):
    """Attach check bits: 119-bit data word -> 128-bit stored flit."""
    return data | secded_encode(data) << DATA_BITS


def secded_decode(flit):
    """Decode a stored flit.

    Returns ``(data, status, bit_index)`` where status is one of the
    ``ECC_*`` codes and bit_index is the corrected stored-bit position
    (-1 unless status is ECC_CORRECTED).  Any single-bit error in the 128
    stored bits is corrected; double-bit errors are flagged uncorrectable.
    """
    data = flit & DATA_MASK
    stored_checks = flit >> DATA_BITS & 0xFF
    syndrome = 0
    for k in range(8):
        if (data & _CHECK_MASK[k]).bit_count() & 1:
            syndrome |= 1 << k
    syndrome ^= stored_checks
    parity = flit.bit_count() & 1

    if syndrome == 0:
        if parity == 0:
            return data, ECC_CLEAN, -1
        # Error in the overall parity bit itself.
        return data, ECC_CORRECTED, 127
    if parity == 0:
        return data, ECC_UNCORRECTABLE, -1
    bit = _SYNDROME_TO_BIT.get(syndrome, -1)
    if bit < 0:
        return data, ECC_UNCORRECTABLE, -1
    if bit < DATA_BITS:
        data ^= 1 << bit
    return data, ECC_CORRECTED, bit


def pack_header(dest, src, ptype, payload_len, packet_id, dest_port, vc):
    """Build the 128-bit header flit (fields + fresh SECDED bits)."""
    dx, dy, dz = dest
    sx, sy, sz = src
    data = (
        dx
        | dy << _SHIFT_DEST_Y
        | dz << _SHIFT_DEST_Z
        | sx << _SHIFT_SRC_X
        | sy << _SHIFT_SRC_Y
        | sz << _SHIFT_SRC_Z
        | ptype << _SHIFT_PTYPE
        | payload_len << _SHIFT_PLEN
        | packet_id << _SHIFT_PKTID
        | dest_port << _SHIFT_DPORT
        | vc << _SHIFT_VC
    )
    return secded_pack(data)


def unpack_header(flit):
    """Decode a header flit after ECC correction.

    Returns ``(fields, status, bit_index)`` with fields =
    (dest, src, ptype, payload_len, packet_id, dest_port, vc); fields is
    None when the flit is uncorrectable.
    """
    data, status, bit = secded_decode(flit)
    if status == ECC_UNCORRECTABLE:
        return None, status, bit
    fields = (
        (data & 0xFF, data >> _SHIFT_DEST_Y & 0xFF, data >> _SHIFT_DEST_Z & 0xFF),
        (data >> _SHIFT_SRC_X & 0xFF, data >> _SHIFT_SRC_Y & 0xFF, data >> _SHIFT_SRC_Z & 0xFF),
        data >> _SHIFT_PTYPE & 0xFF,
        data >> _SHIFT_PLEN & 0xFFFF,
        data >> _SHIFT_PKTID & 0xFFFFFFFF,
        data >> _SHIFT_DPORT & 0xFF,
        data >> _SHIFT_VC & 1,
    )
    return fields, status, bit


def header_dest(flit):
    """Fast path: destination coordinates from an already-clean header."""
    return flit & 0xFF, flit >> _SHIFT_DEST_Y & 0xFF, flit >> _SHIFT_DEST_Z & 0xFF


def set_header_vc(flit, vc):
    """Rewrite the header's vc bit, recomputing the check bits."""
    data = flit & DATA_MASK
    data = (data & ~(1 << _SHIFT_VC)) | (vc & 1) << _SHIFT_VC
    return secded_pack(data)


def payload_to_flits(data):
    """Split payload bytes into 128-bit flits, zero-padding the last one."""
    flits = []
    for off in range(0, len(data), 16):
        chunk = data[off : off + 16]
        if len(chunk) < 16:
            chunk = chunk + b"\x00" * (16 - len(chunk))
        flits.append(int.from_bytes(chunk, "big"))
    return flits


def flits_to_payload(flits, length):
    """Inverse of payload_to_flits: reassemble `length` payload bytes."""
    raw = b"".join(f.to_bytes(16, "big") for f in flits)
    return raw[:length]
