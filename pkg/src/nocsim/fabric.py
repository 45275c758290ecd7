"""Topology construction and the synchronous cycle engine.

The engine is cycle-driven with a fixed phase order per clock:
rx-deframe -> injection -> router -> tx-serialize -> consume -> credit
update.  All state is advanced deterministically; traces are a pure
function of (config, seed).  Idle components drop out of the active sets,
so quiet cycles are cheap.
"""

import heapq
from collections import deque
from dataclasses import dataclass

from . import kernels, wire
from .errors import ConfigError, InvariantViolation
from .link import (
    KIND_CREDIT,
    KIND_DATA,
    KIND_MAGIC,
    KIND_START,
    MAGIC_WORD,
    START_WORD,
    VC_LOWER,
    VC_UPPER,
    CreditState,
    HealthWord,
    SerialModel,
)
from .router import Router, RouterConfig, port_for

PTYPE_DATA = 0
PTYPE_PING = 1
PTYPE_PONG = 2


class TransitRecord:
    """One packet in flight: its flits plus bookkeeping for the monitors."""

    __slots__ = ("packet", "flits", "flit_count", "payload", "dest", "dest_port",
                 "src", "src_port", "ptype", "pid", "vc", "dropped",
                 "inject_cycle", "eject_cycle", "flow", "flow_seq")

    def __init__(self, packet, src_port=0):
        self.packet = packet
        self.flits = wire.to_flits(packet)
        self.flit_count = len(self.flits)
        self.payload = packet.payload
        self.dest = packet.header.dest
        self.dest_port = packet.header.dest_port
        self.src = packet.header.src
        self.src_port = src_port
        self.ptype = packet.header.ptype
        self.pid = packet.header.packet_id
        self.vc = packet.header.vc
        self.dropped = False
        self.inject_cycle = -1
        self.eject_cycle = -1
        self.flow = (self.src, src_port, self.dest, self.dest_port)
        self.flow_seq = -1

    def rewrite_vc(self, vc):
        self.flits[0] = kernels.set_header_vc(self.flits[0], vc)
        self.vc = vc


@dataclass(frozen=True)
class LinkParams:
    model: SerialModel = SerialModel()
    tred: int = 4
    credit_batch: int = 16   # emit a credit word every 16 drained flits...
    credit_timer: int = 64   # ...or 64 cycles after the first pending one


class LinkTx:
    """Serializer side of one unidirectional channel (single-owner state)."""

    __slots__ = ("name", "sim", "word_cycles", "latency", "credits", "queue",
                 "credit_queue", "free_at", "enabled", "peer_rx",
                 "data_inflight", "restore_inflight", "queued_data",
                 "words_sent", "data_words_sent", "first_word", "last_word")

    def __init__(self, name, sim, params, init_credits):
        self.name = name
        self.sim = sim
        self.word_cycles = params.model.word_cycles()
        self.latency = params.model.latency_cycles
        self.credits = [CreditState(initial=init_credits, tred=params.tred),
                        CreditState(initial=init_credits, tred=params.tred)]
        self.queue = deque()
        self.credit_queue = deque()
        self.free_at = 0
        self.enabled = True
        self.peer_rx = None
        self.data_inflight = 0    # data words serialized, not yet delivered
        self.restore_inflight = 0  # credits drained at the peer, not yet restored here
        self.queued_data = 0      # data words waiting in the serializer queue
        self.words_sent = 0
        self.data_words_sent = 0
        self.first_word = -1
        self.last_word = -1

    def begin_frame(self):
        self.queue.append((KIND_MAGIC, MAGIC_WORD, None))
        self.queue.append((KIND_START, START_WORD, None))
        self.sim.wake_tx(self)

    def enqueue_data(self, bits, record):
        self.queue.append((KIND_DATA, bits, record))
        self.queued_data += 1
        self.sim.wake_tx(self)

    def enqueue_credit(self, bits):
        self.credit_queue.append((KIND_CREDIT, bits, None))
        self.sim.wake_tx(self)

    def cycle(self, now):
        """Start serializing at most one word; returns False when drained."""
        if not self.enabled:
            return True
        if self.free_at > now:
            return True
        if self.credit_queue:
            word = self.credit_queue.popleft()
        elif self.queue:
            word = self.queue.popleft()
        else:
            return False
        self.free_at = now + self.word_cycles
        if self.first_word < 0:
            self.first_word = now
        self.last_word = self.free_at
        self.words_sent += 1
        if word[0] == KIND_DATA:
            self.data_words_sent += 1
            self.data_inflight += 1
            self.queued_data -= 1
        self.sim.schedule_arrival(self.peer_rx, word, now + self.word_cycles + self.latency)
        if self.sim.trace is not None:
            self.sim.trace.append((now, f"{self.name}:tx", "tx", 1))
        return True


_RX_HUNT, _RX_START, _RX_HEADER, _RX_COLLECT = range(4)


class LinkRx:
    """Receive side: live deframe feeding the router's per-VC input queues."""

    __slots__ = ("name", "sim", "router", "port", "reverse_tx", "peer_tx", "state",
                 "remaining", "cur_record", "cur_vc", "drained", "pending_since",
                 "credit_batch", "credit_timer", "received_total",
                 "ecc_corrected", "drops", "peer_health", "health_updates",
                 "_last_health_seq")

    def __init__(self, name, sim, router, port, params):
        self.name = name
        self.sim = sim
        self.router = router
        self.port = port
        self.reverse_tx = None
        self.peer_tx = None
        self.state = _RX_HUNT
        self.remaining = 0
        self.cur_record = None
        self.cur_vc = 0
        self.drained = [0, 0]
        self.pending_since = -1
        self.credit_batch = params.credit_batch
        self.credit_timer = params.credit_timer
        self.received_total = [0, 0]
        self.ecc_corrected = 0
        self.drops = 0
        self.peer_health = HealthWord()
        self.health_updates = 0
        self._last_health_seq = -1

    def deliver(self, word, now):
        kind, bits, record = word
        if kind == KIND_CREDIT:
            upper = bits & 0xFFFF
            lower = bits >> 16 & 0xFFFF
            tx = self.reverse_tx  # the co-located data tx these credits belong to
            if upper:
                tx.credits[VC_UPPER].restore(upper)
            if lower:
                tx.credits[VC_LOWER].restore(lower)
            tx.restore_inflight -= upper + lower
            seq = bits >> 40 & 0xFF
            if seq != self._last_health_seq:
                self._last_health_seq = seq
                self.peer_health = HealthWord(status=bits >> 32 & 0xFF, seq=seq)
                self.health_updates += 1
            if self.sim.trace is not None:
                self.sim.trace.append((now, f"{self.name}:rx", "credit", 1))
            return 0

        if kind != KIND_DATA:
            if kind == KIND_MAGIC:
                if self.state not in (_RX_HUNT, _RX_START):
                    self._abort()
                self.state = _RX_START
            elif kind == KIND_START:
                self.state = _RX_HEADER if self.state == _RX_START else self._resync()
            return 0

        # data word
        self.peer_tx.data_inflight -= 1
        if self.state == _RX_HEADER:
            fields, status, _bit = kernels.unpack_header(bits)
            if fields is None:
                self.drops += 1
                self.state = _RX_HUNT
                return 0
            if status == kernels.ECC_CORRECTED:
                self.ecc_corrected += 1
                self.router.header_ecc_corrected += 1
            vc = fields[6]
            self.cur_vc = vc
            self.cur_record = record
            self.remaining = record.flit_count - 1
            self.state = _RX_COLLECT
            self._store(vc, bits, record, now)
            return 1
        if self.state == _RX_COLLECT:
            self.remaining -= 1
            if self.remaining == 0:
                self.state = _RX_HUNT
                if record.packet.footer.crc32 != kernels.crc32(record.payload):
                    self.drops += 1
            self._store(self.cur_vc, bits, record, now)
            return 1
        # data word while hunting: out-of-frame, drop it
        self.drops += 1
        return 0

    def _resync(self):
        return _RX_HUNT

    def _abort(self):
        self.drops += 1
        self.remaining = 0
        self.cur_record = None

    def _store(self, vc, bits, record, now):
        self.received_total[vc] += 1
        stored = self.router.accept_flit((self.port, vc), bits, record, now)
        self.sim.wake_router(self.router)
        if not stored:
            self.on_drained(vc, 1, now)
        if self.sim.trace is not None:
            self.sim.trace.append((now, f"{self.name}:rx", "rx", 1))

    def on_drained(self, vc, n, now):
        """Router pulled n flits out of this port's vc queue."""
        if self.pending_since < 0:
            self.pending_since = now
            self.sim.schedule_timer(now + self.credit_timer, self)
        self.drained[vc] += n
        if self.drained[0] + self.drained[1] >= self.credit_batch:
            self.sim.wake_credit(self)

    def credit_phase(self, now):
        """Emit a credit word when the batch or timer threshold is hit."""
        total = self.drained[0] + self.drained[1]
        if total == 0:
            self.pending_since = -1
            return
        if total >= self.credit_batch or now - self.pending_since >= self.credit_timer:
            r = self.router
            bits = (
                (self.drained[VC_UPPER] & 0xFFFF)
                | (self.drained[VC_LOWER] & 0xFFFF) << 16
                | (r.health_status & 0xFF) << 32
                | (r.health_seq & 0xFF) << 40
            )
            self.peer_tx.restore_inflight += total
            self.reverse_tx.enqueue_credit(bits)
            if self.sim.trace is not None:
                self.sim.trace.append((now, f"{self.name}:rx", "credit", 1))
            self.drained = [0, 0]
            self.pending_since = -1
        else:
            # a stale timer fired after an emission; re-arm for this batch
            self.sim.schedule_timer(self.pending_since + self.credit_timer, self)


@dataclass
class GlobalCounters:
    injected: int = 0
    ejected: int = 0
    dropped: int = 0
    flits_moved: int = 0

    @property
    def in_flight(self):
        return self.injected - self.ejected - self.dropped

    def snapshot(self):
        return GlobalCounters(self.injected, self.ejected, self.dropped, self.flits_moved)


@dataclass
class Topology:
    extents: tuple
    wrap: tuple
    preset: str = "custom"
    diagonals: tuple = ()  # ((coordA, portA, coordB, portB), ...)

    @property
    def coords(self):
        nx, ny, nz = self.extents
        return [(x, y, z) for z in range(nz) for y in range(ny) for x in range(nx)]

    def links(self):
        """Bidirectional neighbor pairs: (coordA, portA, coordB, portB)."""
        out = []
        nx, ny, nz = self.extents
        for coord in self.coords:
            for dim in range(3):
                if self.extents[dim] <= 1:
                    continue
                nb = list(coord)
                nb[dim] += 1
                if nb[dim] >= self.extents[dim]:
                    if not self.wrap[dim]:
                        continue
                    nb[dim] = 0
                out.append((coord, port_for(dim, 1), tuple(nb), port_for(dim, -1)))
        out.extend(self.diagonals)
        return out


def build_topology(preset=None, extents=None, wrap=None):
    """Topology from a preset name or explicit extents/wrap."""
    if preset == "mesh2x2":
        return Topology((2, 2, 1), (False, False, False), "mesh2x2")
    if preset == "qfdb4":
        diag = (((0, 0, 0), "z+", (1, 1, 0), "z+"),
                ((1, 0, 0), "z+", (0, 1, 0), "z+"))
        return Topology((2, 2, 1), (False, False, False), "qfdb4", diag)
    if extents is None:
        raise ConfigError(f"unknown preset {preset!r} and no extents given")
    extents = tuple(extents)
    if len(extents) != 3 or any(e < 1 for e in extents):
        raise ConfigError(f"extents must be three sizes >= 1, got {extents}")
    if wrap is None:
        wrap = (False, False, False)
    if isinstance(wrap, bool):
        wrap = tuple(wrap and e > 1 for e in extents)
    name = preset or ("torus" if any(wrap) else "mesh")
    return Topology(extents, tuple(wrap), name)


class Sim:
    """A wired fabric plus the cycle loop and monitors."""

    CLOCK_HZ = 156.25e6

    def __init__(self, topology, router_cfg=None, link_params=None, seed=0,
                 strict=False, trace=False, dump_packets=None):
        import random

        self.topology = topology
        self.link_params = link_params or LinkParams()
        self.cycle = 0
        self.rng = random.Random(seed)
        self.seed = seed
        self.counters = GlobalCounters()
        self.strict = strict
        # trace/dump sinks may be shared lists (several sims feeding one file)
        self.trace = trace if isinstance(trace, list) else ([] if trace else None)
        self.dump_packets = dump_packets  # list-like sink for hex dump lines
        self.heap = []
        self.timers = []         # (cycle, seq, rx) credit-timer deadlines
        self.sources = []        # (cycle, seq, source) scheduled injectors
        self.router_timers = []  # (cycle, seq, router) pipeline wake-ups
        self._seq = 0
        self.active_routers = {}
        self.active_tx = {}
        self.active_credit = {}
        self.last_movement = 0
        self.live_records = {}
        self.flow_counters = {}
        self.flow_expected = {}
        self.check_ordering = True
        self.routers = {}
        self.rx_endpoints = {}
        self.tx_endpoints = {}
        self.delivered = {}
        self.consumer_enabled = {}
        self.on_delivery = {}  # coord -> callback(record, now), set by the harness
        self.validate_at_ejection = True
        self._dirty_regs = set()
        self._eject_pending = {}  # (coord, port) -> True, insertion ordered

        base = router_cfg or RouterConfig(coord=(0, 0, 0))
        from dataclasses import replace

        diag_by_coord = {}
        for a, pa, b, pb in topology.diagonals:
            diag_by_coord[a] = pa
            diag_by_coord[b] = pb
        for coord in topology.coords:
            cfg = replace(base, coord=coord, extents=topology.extents,
                          wrap=topology.wrap, dateline=None,
                          diagonal_port=diag_by_coord.get(coord))
            self.routers[coord] = Router(cfg, sim=self)
            self.delivered[coord] = deque()
            self.consumer_enabled[coord] = True

        init_credits = base.fifo_inter_per_vc
        for a, pa, b, pb in topology.links():
            self._wire_channel(a, pa, b, pb, init_credits)
            self._wire_channel(b, pb, a, pa, init_credits)
        # second pass: input queues exist for both directions now
        for (end, port), rx in self.rx_endpoints.items():
            rx.reverse_tx = self.tx_endpoints[(end, port)]
            for vc in (VC_UPPER, VC_LOWER):
                self.routers[end].inqs[(port, vc)].rx = rx

    def _wire_channel(self, a, pa, b, pb, init_credits):
        name = f"{a[0]},{a[1]},{a[2]}:{pa}"
        tx = LinkTx(name, self, self.link_params, init_credits)
        rx = LinkRx(f"{b[0]},{b[1]},{b[2]}:{pb}", self, self.routers[b], pb, self.link_params)
        tx.peer_rx = rx
        rx.peer_tx = tx
        self.tx_endpoints[(a, pa)] = tx
        self.rx_endpoints[(b, pb)] = rx
        self.routers[a].add_inter_port(pa, tx)

    # --- wake / schedule hooks ---------------------------------------------------

    def wake_router(self, router):
        self.active_routers.setdefault(router.cfg.coord, router)

    def wake_tx(self, tx):
        self.active_tx.setdefault(tx.name, tx)

    def wake_credit(self, rx):
        self.active_credit.setdefault(rx.name, rx)

    def schedule_arrival(self, rx, word, cycle):
        self._seq += 1
        heapq.heappush(self.heap, (cycle, self._seq, rx, word))

    def schedule_timer(self, cycle, rx):
        self._seq += 1
        heapq.heappush(self.timers, (cycle, self._seq, rx))

    def schedule_router_wake(self, cycle, router):
        self._seq += 1
        heapq.heappush(self.router_timers, (cycle, self._seq, router))

    def add_source(self, name, source):
        self._seq += 1
        heapq.heappush(self.sources, (self.cycle, self._seq, source))

    # --- packet lifecycle ----------------------------------------------------------

    def inject(self, coord, packet, port=0):
        """Host injection; False when the TX FIFO lacks space (backpressure)."""
        router = self.routers[coord]
        record = TransitRecord(packet, src_port=port)
        if router.injection_free(port) < record.flit_count:
            return False
        record.inject_cycle = self.cycle
        seq = self.flow_counters.get(record.flow, 0)
        self.flow_counters[record.flow] = seq + 1
        record.flow_seq = seq
        router.inject_entry(port, record)
        self.wake_router(router)
        self.counters.injected += 1
        self.live_records[id(record)] = record
        if self.dump_packets is not None:
            self.dump_packets.append(" ".join(f"{f:032x}" for f in record.flits))
        return True

    def eject(self, coord):
        """Pop one delivered packet record, oldest first (None when empty)."""
        q = self.delivered[coord]
        return q.popleft() if q else None

    def on_packet_ejected(self, coord, port, record, now):
        # called mid router phase when a footer lands in an ejection buffer;
        # actual consumption happens in the consume phase below
        self._eject_pending.setdefault((coord, port), True)

    def on_packet_dropped(self, record, now):
        self.counters.dropped += 1
        self.live_records.pop(id(record), None)

    # --- the clock ---------------------------------------------------------------------

    def step(self):
        now = self.cycle
        moved = 0
        if self._dirty_regs:
            for coord in sorted(self._dirty_regs):
                self.routers[coord].apply_pending_writes()
            self._dirty_regs.clear()

        # rx phase
        heap = self.heap
        while heap and heap[0][0] <= now:
            entry = heapq.heappop(heap)
            if entry[0] < now:
                raise InvariantViolation(f"missed arrival scheduled for {entry[0]} at {now}")
            moved += entry[2].deliver(entry[3], now)

        # injection phase: sources report the next cycle they need to run
        sources = self.sources
        while sources and sources[0][0] <= now:
            _, _, src = heapq.heappop(sources)
            nxt = src.cycle(self, now)
            if nxt is not None:
                self._seq += 1
                heapq.heappush(sources, (max(nxt, now + 1), self._seq, src))

        # router phase
        rtimers = self.router_timers
        while rtimers and rtimers[0][0] <= now:
            _, _, router = heapq.heappop(rtimers)
            self.active_routers.setdefault(router.cfg.coord, router)
        if self.active_routers:
            for coord in list(self.active_routers):
                active, m = self.active_routers[coord].cycle(now)
                moved += m
                if not active:
                    del self.active_routers[coord]

        # tx phase
        if self.active_tx:
            for name in list(self.active_tx):
                if not self.active_tx[name].cycle(now):
                    del self.active_tx[name]

        # consume phase
        if self._eject_pending:
            self._consume(now)

        # credit phase: batch-triggered emissions, then due timers
        if self.active_credit:
            for name in list(self.active_credit):
                rx = self.active_credit.pop(name)
                rx.credit_phase(now)
        timers = self.timers
        while timers and timers[0][0] <= now:
            _, _, rx = heapq.heappop(timers)
            rx.credit_phase(now)

        if moved:
            self.counters.flits_moved += moved
            self.last_movement = now
        if self.strict:
            self.audit()
        self.cycle = now + 1

    def _consume(self, now):
        moved = 0
        for coord, port in list(self._eject_pending):
            if not self.consumer_enabled[coord]:
                continue
            del self._eject_pending[(coord, port)]
            eject_buf = self.routers[coord].outputs[port].eject
            while eject_buf.completed:
                record = eject_buf.pop()
                if self.validate_at_ejection:
                    try:
                        wire.from_flits(record.flits)
                    except Exception as exc:
                        raise InvariantViolation(
                            f"cycle {now}: packet {record.pid} corrupt at ejection: {exc}"
                        ) from exc
                record.eject_cycle = now
                self.counters.ejected += 1
                moved += 1
                self.live_records.pop(id(record), None)
                if self.check_ordering:
                    key = record.flow
                    expect = self.flow_expected.get(key, 0)
                    if record.flow_seq != expect:
                        raise InvariantViolation(
                            f"flow {key} delivered seq {record.flow_seq}, expected {expect}"
                        )
                    self.flow_expected[key] = expect + 1
                cb = self.on_delivery.get(coord)
                if cb is not None:
                    cb(record, now)
                else:
                    self.delivered[coord].append(record)
        if moved:
            self.counters.flits_moved += moved
            self.last_movement = now

    def detect_stall(self, window):
        """True iff nothing moved for `window` cycles while packets are in flight."""
        return self.counters.in_flight > 0 and self.cycle - self.last_movement >= window

    def run_until(self, predicate=None, max_cycles=None, watchdog=10_000):
        """Step until the predicate holds or the cap is reached.

        Returns (counters snapshot, possible_deadlock flag).
        """
        limit = None if max_cycles is None else self.cycle + max_cycles
        deadlock = False
        while True:
            if predicate is not None and predicate(self):
                break
            if limit is not None and self.cycle >= limit:
                deadlock = self.detect_stall(watchdog or 10_000)
                break
            if watchdog and self.detect_stall(watchdog):
                deadlock = True
                break
            self.step()
        return self.counters.snapshot(), deadlock

    def audit(self):
        """Structural consistency: counters vs live records, FIFO bounds."""
        if len(self.live_records) != self.counters.in_flight:
            raise InvariantViolation(
                f"cycle {self.cycle}: {len(self.live_records)} live records "
                f"vs in_flight {self.counters.in_flight}"
            )
        for coord, router in self.routers.items():
            for key, inq in router.inqs.items():
                if not 0 <= inq.occupancy <= inq.capacity:
                    raise InvariantViolation(f"{coord}/{key} occupancy {inq.occupancy}")

    # --- register front door -------------------------------------------------------------

    def reg_read(self, coord, reg):
        return self.routers[coord].reg_read(reg, self.cycle)

    def reg_write(self, coord, reg, value):
        self.routers[coord].reg_write(reg, value)
        self._dirty_regs.add(coord)
        self.wake_router(self.routers[coord])

    def disable_port(self, coord, port):
        """Administrative freeze of an output port (fault injection)."""
        self.routers[coord].outputs[port].disabled = True

    def seconds(self, cycles):
        return cycles / self.CLOCK_HZ
