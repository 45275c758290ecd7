"""Switch, routing and arbitration.

Routing is deterministic dimension-ordered (DOR): the coordinate offset is
driven to zero one dimension at a time in a configurable order, choosing
the minimal-path direction (wrap-aware on torus dimensions).  Switching is
virtual cut-through: an output port is granted to a whole packet only when
the downstream buffer (local ejection FIFO, or link credits for an
inter-tile port) can hold all of it, and the packet then streams without
interleaving on its virtual channel.

Two VC policies are provided: ``offset_sign`` (upper VC for positive
remaining offset, lower otherwise) and ``dateline`` (packets switch from
upper to lower when crossing the configured dateline edge of a wrapped
dimension, which breaks the wraparound cycle offset_sign leaves intact).

Timing: a new header spends ``pipeline_cycles`` (default 8) in the routing
pipeline before it can request an output; an output pays
``turnaround_cycles`` (default 2) between back-to-back packets.  Both
defaults are calibration constants (they reproduce reference single-flow
and two-flow port efficiencies), not hardware ground truth.
"""

from collections import deque
from dataclasses import dataclass

from .errors import InvalidRegisterError, InvariantViolation, UnroutableError
from .link import VC_LOWER, VC_UPPER

DIRS = ("x+", "x-", "y+", "y-", "z+", "z-")
DIM_OF = {"x+": 0, "x-": 0, "y+": 1, "y-": 1, "z+": 2, "z-": 2}
SIGN_OF = {"x+": 1, "x-": -1, "y+": 1, "y-": -1, "z+": 1, "z-": -1}
OPPOSITE = {"x+": "x-", "x-": "x+", "y+": "y-", "y-": "y+", "z+": "z-", "z-": "z+"}
_DIM_NAMES = "xyz"


def intra_port(i):
    return f"intra{i}"


def is_intra(port):
    return port.startswith("intra")


def port_for(dim, sign):
    return _DIM_NAMES[dim] + ("+" if sign > 0 else "-")


@dataclass
class RouterConfig:
    coord: tuple
    extents: tuple = (1, 1, 1)
    wrap: tuple = (False, False, False)
    dim_order: str = "xyz"
    vc_policy: str = "offset_sign"  # or "dateline"
    arb_policy: str = "round_robin"  # or "fixed"
    arb_priority: tuple = ()  # input keys, highest first (fixed policy)
    disabled_ports: frozenset = frozenset()
    intra_ports: int = 2
    pipeline_cycles: int = 8    # calibration: header decode + route + arbitration
    turnaround_cycles: int = 2  # calibration: back-to-back packet gap per output
    fifo_intra: int = 4096
    fifo_inter_per_vc: int = 512
    hdr_fifo: int = 128
    dateline: tuple = None  # per-dim dateline coordinate; default extent-1
    diagonal_port: str = None  # qfdb4: port carrying the cross link

    def __post_init__(self):
        if sorted(self.dim_order) != ["x", "y", "z"]:
            raise InvariantViolation(f"dim_order {self.dim_order!r} is not a permutation of xyz")
        if self.dateline is None:
            self.dateline = tuple(e - 1 for e in self.extents)


def signed_offset(my, dest, extent, wrap):
    """Minimal-path signed offset along one dimension; ties prefer +."""
    d = dest - my
    if not wrap or extent <= 1:
        return d
    d %= extent
    return d if 2 * d <= extent else d - extent


def route(cfg, dest, dest_port=0):
    """Output port for a packet headed to `dest` (DOR, minimal, deterministic)."""
    if tuple(dest) == tuple(cfg.coord):
        return intra_port(dest_port)
    offsets = [
        signed_offset(cfg.coord[i], dest[i], cfg.extents[i], cfg.wrap[i]) for i in range(3)
    ]
    if cfg.diagonal_port and offsets[0] and offsets[1]:
        port = cfg.diagonal_port
        if port in cfg.disabled_ports:
            raise UnroutableError(f"diagonal port {port} disabled at {cfg.coord}")
        return port
    for ch in cfg.dim_order:
        dim = _DIM_NAMES.index(ch)
        if offsets[dim]:
            port = port_for(dim, offsets[dim])
            if port in cfg.disabled_ports:
                raise UnroutableError(
                    f"route {cfg.coord}->{tuple(dest)} needs disabled port {port}"
                )
            return port
    raise UnroutableError(f"no nonzero offset from {cfg.coord} to {tuple(dest)}")


def crosses_dateline(cfg, dim, sign):
    """Does a hop from cfg.coord along (dim, sign) cross the dateline edge?"""
    if not cfg.wrap[dim]:
        return False
    d = cfg.dateline[dim]
    if sign > 0:
        return cfg.coord[dim] == d
    return cfg.coord[dim] == (d + 1) % cfg.extents[dim]


def select_vc(cfg, dest, dim, arrived_dim=None, current_vc=VC_UPPER):
    """Virtual channel for the next hop along `dim`.

    offset_sign: upper iff the remaining signed offset is positive.
    dateline: inherit lower once crossed within a dimension; switch to
    lower on the hop that crosses the dateline edge.
    """
    off = signed_offset(cfg.coord[dim], dest[dim], cfg.extents[dim], cfg.wrap[dim])
    if cfg.vc_policy == "offset_sign":
        return VC_UPPER if off > 0 else VC_LOWER
    sign = 1 if off > 0 else -1
    if arrived_dim == dim and current_vc == VC_LOWER:
        return VC_LOWER
    if crosses_dateline(cfg, dim, sign):
        return VC_LOWER
    return VC_UPPER


def gate_admit(space, n):
    """Whole-packet admission: free space (int) or CreditState vs n flits."""
    if hasattr(space, "can_transmit"):
        return space.can_transmit(n)
    return space >= n


class Arbiter:
    """Grants one requester per packet boundary for a single output port."""

    def __init__(self, order, policy="round_robin", priority=()):
        self.order = list(order)  # fixed ring of possible requesters
        self.policy = policy
        self.priority = list(priority)
        self._last = len(self.order) - 1  # so the first grant starts at ring[0]

    def pick(self, candidates):
        """Grant among `candidates` (subset of the ring); None if empty."""
        if not candidates:
            return None
        cset = set(candidates)
        if self.policy == "fixed":
            for key in self.priority:
                if key in cset:
                    return key
            for key in self.order:  # unlisted requesters, stable order
                if key in cset:
                    return key
            return None
        n = len(self.order)
        for i in range(1, n + 1):
            key = self.order[(self._last + i) % n]
            if key in cset:
                self._last = (self._last + i) % n
                return key
        return None


def arbitrate(requests, policy="round_robin", state=None, order=None, priority=()):
    """Functional form of the arbiter: returns (grant, state)."""
    arb = state or Arbiter(order or sorted(requests), policy, priority)
    return arb.pick(list(requests)), arb


class _Entry:
    """One packet resident in an input queue (may be partially arrived)."""

    __slots__ = ("record", "delivered", "forwarded")

    def __init__(self, record, delivered=0):
        self.record = record
        self.delivered = delivered
        self.forwarded = 0


class InputQueue:
    __slots__ = ("key", "capacity", "occupancy", "entries", "head_state", "ready_at",
                 "out_port", "out_vc", "rx")

    IDLE, PIPELINE, REQUESTED, STREAMING = range(4)

    def __init__(self, key, capacity):
        self.key = key              # (port, vc)
        self.capacity = capacity
        self.occupancy = 0          # flits currently stored
        self.entries = deque()
        self.head_state = InputQueue.IDLE
        self.ready_at = 0
        self.out_port = None
        self.out_vc = 0
        self.rx = None              # LinkRx feeding this queue (inter-tile only)

    @property
    def free(self):
        return self.capacity - self.occupancy


class EjectBuffer:
    """Intra-tile RX FIFO: holds ejected packets until the consumer drains them."""

    __slots__ = ("capacity", "committed", "completed", "partial_got", "partial_record")

    def __init__(self, capacity):
        self.capacity = capacity
        self.committed = 0  # flits reserved by granted packets (VCT whole-packet)
        self.completed = deque()
        self.partial_got = 0
        self.partial_record = None

    @property
    def free(self):
        return self.capacity - self.committed

    def push_flit(self, record):
        if self.partial_record is None:
            self.partial_record = record
            self.partial_got = 0
        self.partial_got += 1
        if self.partial_got == record.flit_count:
            self.completed.append(record)
            self.partial_record = None
            return True
        return False

    def pop(self):
        record = self.completed.popleft()
        self.committed -= record.flit_count
        return record


class OutputPort:
    __slots__ = ("key", "kind", "state", "free_at", "cur_inq", "cur_entry", "remaining",
                 "out_vc", "pending", "arbiter", "tx", "eject", "disabled",
                 "first_busy", "last_busy", "payload_flits", "total_flits",
                 "stall_cycles", "packets")

    IDLE, STREAM = range(2)

    def __init__(self, key, kind, arbiter):
        self.key = key
        self.kind = kind  # "intra" | "inter"
        self.state = OutputPort.IDLE
        self.free_at = 0
        self.cur_inq = None
        self.cur_entry = None
        self.remaining = 0
        self.out_vc = 0
        self.pending = {}  # input key -> InputQueue, insertion ordered
        self.arbiter = arbiter
        self.tx = None      # LinkTx for inter-tile outputs
        self.eject = None   # EjectBuffer for intra-tile outputs
        self.disabled = False
        self.first_busy = -1
        self.last_busy = -1
        self.payload_flits = 0
        self.total_flits = 0
        self.stall_cycles = 0
        self.packets = 0


# --- register file -------------------------------------------------------------

REG_COORD_X, REG_COORD_Y, REG_COORD_Z = 0, 1, 2
REG_EXT_X, REG_EXT_Y, REG_EXT_Z = 3, 4, 5
REG_DIM_ORDER = 6
REG_ARB_POLICY = 7      # 0=round_robin 1=fixed
REG_ARB_PRIORITY = 8    # packed ring indices, 8 bits per slot, highest first
REG_PORT_DISABLE = 9    # bitmask over sorted output ports
REG_VC_POLICY = 10      # 0=offset_sign 1=dateline
REG_TRED = 11
REG_HEALTH = 12
REG_CYCLE = 15          # read-only
REG_FIFO_BASE = 16      # read-only: input queue occupancy, queue order
REG_CREDIT_BASE = 64    # read-only: tx credit per (port, vc), output order
REG_INJECTED, REG_EJECTED, REG_DROPPED = 48, 49, 50

_WRITABLE = {REG_COORD_X, REG_COORD_Y, REG_COORD_Z, REG_EXT_X, REG_EXT_Y, REG_EXT_Z,
             REG_DIM_ORDER, REG_ARB_POLICY, REG_ARB_PRIORITY, REG_PORT_DISABLE,
             REG_VC_POLICY, REG_TRED, REG_HEALTH}


def encode_dim_order(order):
    v = 0
    for ch in order:
        v = v << 2 | _DIM_NAMES.index(ch)
    return v


def decode_dim_order(value):
    return "".join(_DIM_NAMES[value >> s & 3] for s in (4, 2, 0))


class Router:
    """One node's switch: input queues, outputs, arbitration, DOR pipeline."""

    def __init__(self, cfg, sim=None):
        self.cfg = cfg
        self.sim = sim
        self.inter_ports = []  # set by the fabric as links are wired
        self.inqs = {}
        self.outputs = {}
        self.input_order = []
        self.output_order = []
        self.dropped_unroutable = 0
        self.header_ecc_corrected = 0
        self.pending_writes = []
        self.health_status = 0
        self.health_seq = 0
        self.work_inqs = {}      # queues needing route/request work
        self.busy_outputs = {}   # outputs streaming or with pending requests
        for i in range(cfg.intra_ports):
            self._add_input((intra_port(i), 0), cfg.fifo_intra)
            out = OutputPort(intra_port(i), "intra", None)
            out.eject = EjectBuffer(cfg.fifo_intra)
            self.outputs[intra_port(i)] = out
            self.output_order.append(intra_port(i))
        self._rebuild_arbiters()

    def _add_input(self, key, capacity):
        q = InputQueue(key, capacity)
        self.inqs[key] = q
        self.input_order.append(key)
        return q

    def add_inter_port(self, port, tx):
        """Wire one inter-tile port: two VC input queues plus the link TX."""
        self.inter_ports.append(port)
        for vc in (VC_UPPER, VC_LOWER):
            self._add_input((port, vc), self.cfg.fifo_inter_per_vc)
        out = OutputPort(port, "inter", None)
        out.tx = tx
        self.outputs[port] = out
        self.output_order.append(port)
        self._rebuild_arbiters()

    def _rebuild_arbiters(self):
        for out in self.outputs.values():
            old_last = out.arbiter._last if out.arbiter else None
            out.arbiter = Arbiter(list(self.inqs), self.cfg.arb_policy, self.cfg.arb_priority)
            if old_last is not None and old_last < len(out.arbiter.order):
                out.arbiter._last = old_last

    # --- routing pipeline -----------------------------------------------------

    def _route_head(self, inq, now):
        """Start the routing pipeline for the packet at an input queue head."""
        while inq.entries:
            record = inq.entries[0].record
            try:
                port = route(self.cfg, record.dest, record.dest_port)
                if port not in self.outputs:
                    raise UnroutableError(
                        f"{self.cfg.coord} has no {port} port toward {record.dest}")
            except UnroutableError:
                self._drop_head(inq, now)
                continue
            if is_intra(port):
                vc = 0
            else:
                dim = DIM_OF[port]
                arrived_dim = None if is_intra(inq.key[0]) else DIM_OF[inq.key[0]]
                vc = select_vc(self.cfg, record.dest, dim, arrived_dim, inq.key[1])
            inq.out_port = port
            inq.out_vc = vc
            inq.ready_at = now + self.cfg.pipeline_cycles
            inq.head_state = InputQueue.PIPELINE
            return
        inq.head_state = InputQueue.IDLE

    def _trace_stall(self, pkey, now):
        sim = self.sim
        if sim is not None and sim.trace is not None:
            c = self.cfg.coord
            sim.trace.append((now, f"{c[0]},{c[1]},{c[2]}:{pkey}", "stall", 0))

    def _drop_head(self, inq, now):
        entry = inq.entries.popleft()
        entry.record.dropped = True
        stored = entry.delivered - entry.forwarded
        inq.occupancy -= stored
        if inq.rx is not None and stored:
            inq.rx.on_drained(inq.key[1], stored, now)
        self.dropped_unroutable += 1
        if self.sim is not None:
            self.sim.on_packet_dropped(entry.record, now)

    def accept_flit(self, key, bits, record, now):
        """A flit arrived from the link into input queue `key`.

        Returns True when stored; False when it belongs to a dropped packet
        (the caller must treat it as immediately drained).
        """
        if record.dropped:
            return False
        inq = self.inqs[key]
        entries = inq.entries
        if entries and entries[-1].record is record:
            entries[-1].delivered += 1
        else:
            entries.append(_Entry(record, delivered=1))
            if inq.head_state == InputQueue.IDLE:
                self.work_inqs.setdefault(key, inq)
        inq.occupancy += 1
        if inq.occupancy > inq.capacity:
            raise InvariantViolation(
                f"input FIFO {self.cfg.coord}/{key} overflow: "
                f"{inq.occupancy}/{inq.capacity}"
            )
        return True

    def inject_entry(self, port_index, record):
        """Whole packet placed in an intra-tile TX FIFO (host injection)."""
        key = (intra_port(port_index), 0)
        inq = self.inqs[key]
        inq.entries.append(_Entry(record, delivered=record.flit_count))
        inq.occupancy += record.flit_count
        if inq.head_state == InputQueue.IDLE:
            self.work_inqs.setdefault(key, inq)

    def injection_free(self, port_index):
        return self.inqs[(intra_port(port_index), 0)].free

    # --- cycle ------------------------------------------------------------------

    def cycle(self, now):
        """Advance one clock. Returns (still_active, flits_moved)."""
        moved = 0
        # A: routing pipelines and request registration
        for key in list(self.work_inqs):
            inq = self.work_inqs[key]
            state = inq.head_state
            if state == InputQueue.IDLE:
                if not inq.entries:
                    del self.work_inqs[key]
                    continue
                self._route_head(inq, now)
                state = inq.head_state
                if state == InputQueue.IDLE:  # everything at the head was dropped
                    del self.work_inqs[key]
                    continue
            if state == InputQueue.PIPELINE and now >= inq.ready_at:
                out = self.outputs[inq.out_port]
                out.pending[key] = inq
                inq.head_state = InputQueue.REQUESTED
                self.busy_outputs.setdefault(inq.out_port, out)
                del self.work_inqs[key]

        # B: grants
        for pkey in list(self.busy_outputs):
            out = self.busy_outputs[pkey]
            if out.state == OutputPort.STREAM:
                continue
            if not out.pending:
                del self.busy_outputs[pkey]
                continue
            if out.disabled or out.free_at > now:
                out.stall_cycles += 1
                self._trace_stall(pkey, now)
                continue
            candidates = []
            for key, inq in out.pending.items():
                n = inq.entries[0].record.flit_count
                if out.kind == "intra":
                    ok = out.eject.free >= n
                else:
                    ok = out.tx.credits[inq.out_vc].can_transmit(n)
                if ok:
                    candidates.append(key)
            if not candidates:
                out.stall_cycles += 1
                self._trace_stall(pkey, now)
                continue
            key = out.arbiter.pick(candidates)
            inq = out.pending.pop(key)
            entry = inq.entries[0]
            n = entry.record.flit_count
            if out.kind == "intra":
                out.eject.committed += n
            else:
                out.tx.credits[inq.out_vc].consume(n)
                out.tx.begin_frame()
            out.state = OutputPort.STREAM
            out.cur_inq = inq
            out.cur_entry = entry
            out.remaining = n
            out.out_vc = inq.out_vc
            inq.head_state = InputQueue.STREAMING

        # C: stream one flit per busy output
        for pkey in list(self.busy_outputs):
            out = self.busy_outputs[pkey]
            if out.state != OutputPort.STREAM or out.disabled:
                continue
            entry = out.cur_entry
            if entry.delivered <= entry.forwarded:
                continue  # cut-through: next flit not here yet
            record = entry.record
            idx = entry.forwarded
            if idx == 0 and out.kind == "inter" and record.vc != out.out_vc:
                record.rewrite_vc(out.out_vc)
            bits = record.flits[idx]
            entry.forwarded += 1
            inq = out.cur_inq
            inq.occupancy -= 1
            if inq.rx is not None:
                inq.rx.on_drained(inq.key[1], 1, now)
            if out.kind == "inter":
                out.tx.enqueue_data(bits, record)
            else:
                if out.eject.push_flit(record) and self.sim is not None:
                    self.sim.on_packet_ejected(self.cfg.coord, pkey, record, now)
            moved += 1
            out.total_flits += 1
            if 0 < idx < record.flit_count - 1:
                out.payload_flits += 1
            if out.first_busy < 0:
                out.first_busy = now
            out.last_busy = now
            out.remaining -= 1
            if out.remaining == 0:
                inq.entries.popleft()
                inq.head_state = InputQueue.IDLE
                if inq.entries:
                    self.work_inqs.setdefault(inq.key, inq)
                out.state = OutputPort.IDLE
                out.cur_inq = out.cur_entry = None
                out.free_at = now + self.cfg.turnaround_cycles + 1
                out.packets += 1
                if not out.pending:
                    del self.busy_outputs[pkey]
                if out.kind == "inter":
                    record.vc = out.out_vc

        if self.busy_outputs:
            return True, moved
        if not self.work_inqs:
            return False, moved
        # only routing pipelines are elapsing: sleep until the first is due
        # (arrivals, injections and register writes re-wake the router)
        wake_at = min(q.ready_at for q in self.work_inqs.values())
        if self.sim is not None and wake_at > now + 1:
            self.sim.schedule_router_wake(wake_at, self)
            return False, moved
        return True, moved

    # --- registers -----------------------------------------------------------------

    def reg_read(self, reg, now=0):
        cfg = self.cfg
        if reg == REG_CYCLE:
            return now & 0xFFFFFFFF
        if reg in (REG_COORD_X, REG_COORD_Y, REG_COORD_Z):
            return cfg.coord[reg]
        if reg in (REG_EXT_X, REG_EXT_Y, REG_EXT_Z):
            return cfg.extents[reg - REG_EXT_X]
        if reg == REG_DIM_ORDER:
            return encode_dim_order(cfg.dim_order)
        if reg == REG_ARB_POLICY:
            return 0 if cfg.arb_policy == "round_robin" else 1
        if reg == REG_ARB_PRIORITY:
            # 8-bit slots of ring-index + 1, highest priority in the low byte
            v = 0
            ring = sorted(self.inqs)
            for key in reversed(cfg.arb_priority):
                v = v << 8 | ring.index(key) + 1
            return v
        if reg == REG_PORT_DISABLE:
            return sum(1 << i for i, p in enumerate(sorted(self.outputs))
                       if p in cfg.disabled_ports or self.outputs[p].disabled)
        if reg == REG_VC_POLICY:
            return 0 if cfg.vc_policy == "offset_sign" else 1
        if reg == REG_TRED:
            for out in self.outputs.values():
                if out.tx is not None:
                    return out.tx.credits[0].tred
            return 0
        if reg == REG_HEALTH:
            return self.health_status
        if reg == REG_INJECTED:
            return self.sim.counters.injected if self.sim else 0
        if reg == REG_EJECTED:
            return self.sim.counters.ejected if self.sim else 0
        if reg == REG_DROPPED:
            return self.sim.counters.dropped if self.sim else 0
        if REG_FIFO_BASE <= reg < REG_FIFO_BASE + len(self.input_order):
            return self.inqs[self.input_order[reg - REG_FIFO_BASE]].occupancy
        if REG_CREDIT_BASE <= reg < REG_CREDIT_BASE + 2 * len(self.output_order):
            i, vc = divmod(reg - REG_CREDIT_BASE, 2)
            out = self.outputs[self.output_order[i]]
            if out.tx is None:
                return 0
            return out.tx.credits[vc].credit
        raise InvalidRegisterError(f"unknown register {reg}")

    def reg_write(self, reg, value):
        if reg not in _WRITABLE:
            try:
                self.reg_read(reg)
            except InvalidRegisterError:
                raise
            raise InvalidRegisterError(f"register {reg} is read-only")
        self.pending_writes.append((reg, value))

    def apply_pending_writes(self):
        from dataclasses import replace

        for reg, value in self.pending_writes:
            cfg = self.cfg
            if reg in (REG_COORD_X, REG_COORD_Y, REG_COORD_Z):
                coord = list(cfg.coord)
                coord[reg] = value
                self.cfg = replace(cfg, coord=tuple(coord))
            elif reg in (REG_EXT_X, REG_EXT_Y, REG_EXT_Z):
                ext = list(cfg.extents)
                ext[reg - REG_EXT_X] = value
                self.cfg = replace(cfg, extents=tuple(ext), dateline=None)
            elif reg == REG_DIM_ORDER:
                self.cfg = replace(cfg, dim_order=decode_dim_order(value))
            elif reg == REG_ARB_POLICY:
                self.cfg = replace(cfg, arb_policy="fixed" if value else "round_robin")
                self._rebuild_arbiters()
            elif reg == REG_ARB_PRIORITY:
                ring = sorted(self.inqs)
                keys = []
                v = value
                while v:
                    keys.append(ring[(v & 0xFF) - 1])
                    v >>= 8
                self.cfg = replace(cfg, arb_priority=tuple(keys))
                self._rebuild_arbiters()
            elif reg == REG_PORT_DISABLE:
                ports = sorted(self.outputs)
                disabled = frozenset(p for i, p in enumerate(ports) if value >> i & 1)
                self.cfg = replace(cfg, disabled_ports=disabled)
                for p, out in self.outputs.items():
                    out.disabled = p in disabled
            elif reg == REG_VC_POLICY:
                self.cfg = replace(cfg, vc_policy="dateline" if value else "offset_sign")
            elif reg == REG_TRED:
                for out in self.outputs.values():
                    if out.tx is not None:
                        for cs in out.tx.credits:
                            cs.tred = value
            elif reg == REG_HEALTH:
                if value != self.health_status:
                    self.health_status = value & 0xFF
                    self.health_seq = (self.health_seq + 1) & 0xFF
        self.pending_writes.clear()
