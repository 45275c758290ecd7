"""Flit codec kernels with a compiled fast lane and a pure-Python fallback.

The Cython extension ``nocsim.kernels._core`` is used when it was built;
otherwise (or when ``NOCSIM_PURE_PYTHON=1`` is set) the pure-Python
implementation in ``_pure`` takes over.  Both lanes are bit-identical;
``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

from . import _pure

if os.environ.get("NOCSIM_PURE_PYTHON") == "1":
    _impl = _pure
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _pure

LANE = "compiled" if _impl is not _pure else "pure"

FLIT_BITS = _pure.FLIT_BITS
DATA_BITS = _pure.DATA_BITS
FLIT_MASK = _pure.FLIT_MASK
ECC_CLEAN = _pure.ECC_CLEAN
ECC_CORRECTED = _pure.ECC_CORRECTED
ECC_UNCORRECTABLE = _pure.ECC_UNCORRECTABLE

crc32 = _impl.crc32
secded_encode = _impl.secded_encode
secded_pack = _impl.secded_pack
secded_decode = _impl.secded_decode
pack_header = _impl.pack_header
unpack_header = _impl.unpack_header
header_dest = _impl.header_dest
set_header_vc = _impl.set_header_vc
payload_to_flits = _impl.payload_to_flits
flits_to_payload = _impl.flits_to_payload


def available_lanes():
    """Importable kernel lanes, for tests and benchmarks."""
    lanes = {"pure": _pure}
    try:
        from . import _core

        lanes["compiled"] = _core
    except ImportError:
        pass
    return lanes
