# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled flit codec kernels (hot lane of nocsim.kernels).

Semantics match nocsim.kernels._pure exactly; 128-bit flits cross the
boundary as Python ints and are split into two 64-bit halves internally.
"""

from zlib import crc32 as _zlib_crc32

cdef extern from *:
    """
    #define nocsim_popcountll __builtin_popcountll
    """
    int nocsim_popcountll(unsigned long long x) nogil

FLIT_BITS = 128
DATA_BITS = 119
FLIT_MASK = (1 << 128) - 1
DATA_MASK = (1 << 119) - 1

ECC_CLEAN = 0
ECC_CORRECTED = 1
ECC_UNCORRECTABLE = 2

cdef unsigned long long U64_MASK = 0xFFFFFFFFFFFFFFFFULL
cdef unsigned long long DATA_HI_MASK = (1ULL << 55) - 1  # data bits 64..118

cdef unsigned long long CHECK_LO[8]
cdef unsigned long long CHECK_HI[8]
cdef int SYNDROME_BIT[256]

cdef void _init_tables():
    cdef int i, k, v, count
    for k in range(8):
        CHECK_LO[k] = 0
        CHECK_HI[k] = 0
    for i in range(256):
        SYNDROME_BIT[i] = -1
    v = 3
    count = 0
    while count < 119:
        if v & (v - 1):
            for k in range(8):
                if v >> k & 1:
                    if count < 64:
                        CHECK_LO[k] |= 1ULL << count
                    else:
                        CHECK_HI[k] |= 1ULL << (count - 64)
            SYNDROME_BIT[v] = count
            count += 1
        v += 1
    for k in range(8):
        SYNDROME_BIT[1 << k] = 119 + k

_init_tables()


def crc32(data):
    """IEEE CRC-32 (reflected, init and xorout all-ones) of a byte string."""
    return _zlib_crc32(data) & 0xFFFFFFFF


cdef inline int _checks_of(unsigned long long lo, unsigned long long hi) nogil:
    cdef int k, checks = 0
    for k in range(8):
        if (nocsim_popcountll(lo & CHECK_LO[k]) + nocsim_popcountll(hi & CHECK_HI[k])) & 1:
            checks |= 1 << k
    return checks


def secded_encode(data):
    """Return the 9 check bits for a 119-bit data word."""
    cdef unsigned long long lo = data & U64_MASK
    cdef unsigned long long hi = (data >> 64) & DATA_HI_MASK
    cdef int checks = _checks_of(lo, hi)
    cdef int parity = (nocsim_popcountll(lo) + nocsim_popcountll(hi) + nocsim_popcountll(<unsigned long long>checks)) & 1
    return checks | parity << 8


def secded_pack(data):
    """Attach check bits: 119-bit data word -> 128-bit stored flit."""
    return data | secded_encode(data) << 119


def secded_decode(flit):
    """Decode a stored flit -> (data, status, corrected_bit_index)."""
    cdef unsigned long long lo = flit & U64_MASK
    cdef unsigned long long hi = (flit >> 64) & U64_MASK
    cdef unsigned long long data_hi = hi & DATA_HI_MASK
    cdef int stored = <int>((hi >> 55) & 0xFF)
    cdef int syndrome = _checks_of(lo, data_hi) ^ stored
    cdef int parity = (nocsim_popcountll(lo) + nocsim_popcountll(hi)) & 1
    cdef int bit

    if syndrome == 0:
        if parity == 0:
            return ((<object>data_hi << 64) | lo), ECC_CLEAN, -1
        return ((<object>data_hi << 64) | lo), ECC_CORRECTED, 127
    if parity == 0:
        return ((<object>data_hi << 64) | lo), ECC_UNCORRECTABLE, -1
    bit = SYNDROME_BIT[syndrome]
    if bit < 0:
        return ((<object>data_hi << 64) | lo), ECC_UNCORRECTABLE, -1
    if bit < 64:
        lo ^= 1ULL << bit
    elif bit < 119:
        data_hi ^= 1ULL << (bit - 64)
    return ((<object>data_hi << 64) | lo), ECC_CORRECTED, bit


def pack_header(dest, src, ptype, payload_len, packet_id, dest_port, vc):
    """Build the 128-bit header flit (fields + fresh SECDED bits)."""
    cdef unsigned long long dx = dest[0], dy = dest[1], dz = dest[2]
    cdef unsigned long long sx = src[0], sy = src[1], sz = src[2]
    cdef unsigned long long pt = ptype, plen = payload_len
    cdef unsigned long long pid = packet_id, dport = dest_port, v = vc
    cdef unsigned long long lo = (dx | dy << 8 | dz << 16 | sx << 24 | sy << 32
                                  | sz << 40 | pt << 48 | (plen & 0xFF) << 56)
    cdef unsigned long long hi = (plen >> 8) | pid << 8 | dport << 40 | v << 48
    cdef int checks = _checks_of(lo, hi)
    cdef int parity = (nocsim_popcountll(lo) + nocsim_popcountll(hi) + nocsim_popcountll(<unsigned long long>checks)) & 1
    hi |= (<unsigned long long>(checks | parity << 8)) << 55
    return (<object>hi << 64) | lo


def unpack_header(flit):
    """Decode a header flit -> ((dest, src, ptype, plen, pid, dport, vc), status, bit)."""
    data, status, bit = secded_decode(flit)
    if status == ECC_UNCORRECTABLE:
        return None, status, bit
    cdef unsigned long long lo = data & U64_MASK
    cdef unsigned long long hi = (data >> 64) & U64_MASK
    fields = (
        (lo & 0xFF, lo >> 8 & 0xFF, lo >> 16 & 0xFF),
        (lo >> 24 & 0xFF, lo >> 32 & 0xFF, lo >> 40 & 0xFF),
        lo >> 48 & 0xFF,
        (lo >> 56 & 0xFF) | ((hi & 0xFF) << 8),
        hi >> 8 & 0xFFFFFFFF,
        hi >> 40 & 0xFF,
        hi >> 48 & 1,
    )
    return fields, status, bit


def header_dest(flit):
    """Fast path: destination coordinates from an already-clean header."""
    cdef unsigned long long lo = flit & U64_MASK
    return lo & 0xFF, lo >> 8 & 0xFF, lo >> 16 & 0xFF


def set_header_vc(flit, vc):
    """Rewrite the header's vc bit, recomputing the check bits."""
    cdef unsigned long long lo = flit & U64_MASK
    cdef unsigned long long hi = (flit >> 64) & DATA_HI_MASK
    hi = (hi & ~(1ULL << 48)) | (<unsigned long long>(vc & 1)) << 48
    cdef int checks = _checks_of(lo, hi)
    cdef int parity = (nocsim_popcountll(lo) + nocsim_popcountll(hi) + nocsim_popcountll(<unsigned long long>checks)) & 1
    hi |= (<unsigned long long>(checks | parity << 8)) << 55
    return (<object>hi << 64) | lo


def payload_to_flits(data):
    """Split payload bytes into 128-bit flits, zero-padding the last one."""
    cdef const unsigned char[:] view = data
    cdef Py_ssize_t n = view.shape[0]
    cdef Py_ssize_t off = 0, j
    cdef unsigned long long hi, lo
    flits = []
    while off < n:
        hi = 0
        lo = 0
        for j in range(8):
            hi <<= 8
            if off + j < n:
                hi |= view[off + j]
        for j in range(8, 16):
            lo <<= 8
            if off + j < n:
                lo |= view[off + j]
        flits.append((<object>hi << 64) | lo)
        off += 16
    return flits


def flits_to_payload(flits, length):
    """Inverse of payload_to_flits: reassemble `length` payload bytes."""
    cdef Py_ssize_t n = length
    out = bytearray(len(flits) * 16)
    cdef unsigned char[:] view = out
    cdef Py_ssize_t base = 0
    cdef int j
    cdef unsigned long long hi, lo
    for f in flits:
        lo = f & U64_MASK
        hi = (f >> 64) & U64_MASK
        for j in range(8):
            view[base + j] = <unsigned char>(hi >> (56 - 8 * j))
            view[base + 8 + j] = <unsigned char>(lo >> (56 - 8 * j))
        base += 16
    return bytes(out[:n])
