"""Experiment layer: traffic generation, consumers, latency and bandwidth
measurement, and the register-file control plane.

The host cost model mirrors a software network interface that writes one
word at a time into the header/data FIFOs at injection and reads them back
at ejection.  Only the header and payload words cross the host interface;
the CRC footer is produced and checked by the link hardware.  Costs are
charged in host-clock cycles (the embedded CPU clock, 1.5 GHz by default)
and are independent of hop count.
"""

import math
from dataclasses import dataclass, field

from . import wire
from .errors import ConfigError
from .fabric import PTYPE_DATA, PTYPE_PING, PTYPE_PONG, Sim
from .router import intra_port

ROUTER_PEAK_GBPS = 20.0  # 128-bit port at 156.25 MHz
LINK_PEAK_GBPS = 10.0


@dataclass(frozen=True)
class HostModel:
    write_cycles_per_word: int = 4
    read_cycles_per_word: int = 20
    clock_hz: float = 1.5e9  # embedded CPU clock; the paper-facing knob

    def words(self, payload_len):
        """Words the host touches per packet: header + payload flits."""
        return 1 + wire.payload_flits(payload_len)

    def write_seconds(self, payload_len):
        return self.words(payload_len) * self.write_cycles_per_word / self.clock_hz

    def read_seconds(self, payload_len):
        return self.words(payload_len) * self.read_cycles_per_word / self.clock_hz


@dataclass
class TrafficSpec:
    pattern: str = "saturate"       # saturate | uniform | pingpong
    payload_size: int = 512
    ptype: int = PTYPE_DATA
    count: int = 0                  # packets per sender (saturate)
    rate: float = 0.0               # packets/node/cycle (uniform)
    duration: int = 0               # cycles of injection (uniform)
    src: tuple = (0, 0, 0)
    dest: tuple = None
    dest_port: int = 0
    ports: int = 1                  # concurrent intra-tile sender ports

    def validate(self, topology):
        coords = set(topology.coords)
        if self.payload_size > wire.MAX_PAYLOAD:
            raise ConfigError(f"payload_size {self.payload_size} above {wire.MAX_PAYLOAD}")
        if self.pattern in ("saturate", "pingpong"):
            for name, node in (("src", self.src), ("dest", self.dest)):
                if node is not None and tuple(node) not in coords:
                    raise ConfigError(f"{name} node {node} not in topology")
        if self.pattern == "uniform" and self.rate < 0:
            raise ConfigError(f"negative rate {self.rate}")


_ZEROS = {}


def zero_payload(size):
    pay = _ZEROS.get(size)
    if pay is None:
        pay = _ZEROS[size] = bytes(size)
    return pay


class SaturateSource:
    """Keeps a sender's TX FIFO topped up until `count` packets are in.

    Sources run in the injection phase and report the next cycle they need
    to run (None once finished).
    """

    def __init__(self, spec, port, start_id=0):
        self.spec = spec
        self.port = port
        self.remaining = spec.count
        self.next_id = start_id

    def cycle(self, sim, now):
        spec = self.spec
        while self.remaining:
            pkt = wire.build_packet(spec.dest, spec.src, spec.ptype,
                                    zero_payload(spec.payload_size), self.next_id, now,
                                    dest_port=spec.dest_port)
            if not sim.inject(tuple(spec.src), pkt, port=self.port):
                return now + 1  # backpressure: retry next cycle
            self.next_id += 1
            self.remaining -= 1
        return None


class UniformRandomSource:
    """Seeded Bernoulli injector: geometric gaps, uniform destinations."""

    def __init__(self, spec, node, coords, seed):
        import random

        self.spec = spec
        self.node = node
        self.targets = [c for c in coords if c != node]
        self.rng = random.Random(f"{seed}/{node}")
        self.next_id = 0
        self.until = spec.duration
        self.next_at = self._gap(0)

    def _gap(self, now):
        p = self.spec.rate
        if p <= 0:
            return None
        if p >= 1:
            return now + 1
        u = self.rng.random()
        return now + max(1, math.ceil(math.log(1 - u) / math.log(1 - p)))

    def cycle(self, sim, now):
        while self.next_at is not None and self.next_at <= now:
            if self.next_at >= self.until:
                return None
            dest = self.targets[self.rng.randrange(len(self.targets))]
            pkt = wire.build_packet(dest, self.node, self.spec.ptype,
                                    zero_payload(self.spec.payload_size), self.next_id,
                                    now, dest_port=self.spec.dest_port)
            sim.inject(self.node, pkt, port=0)  # a full FIFO drops the attempt
            self.next_id += 1
            self.next_at = self._gap(self.next_at)
        if self.next_at is None or self.next_at >= self.until:
            return None
        return self.next_at


def traffic_generate(spec, topology, seed=0):
    """Spec -> list of source machines ready to attach to a Sim."""
    spec.validate(topology)
    if spec.pattern == "saturate":
        if spec.dest is None:
            raise ConfigError("saturate pattern needs a dest node")
        return [SaturateSource(spec, port, start_id=port * 1_000_000)
                for port in range(spec.ports)]
    if spec.pattern == "uniform":
        if spec.rate == 0:
            return []
        return [UniformRandomSource(spec, node, topology.coords, seed)
                for node in topology.coords]
    raise ConfigError(f"unknown traffic pattern {spec.pattern!r}")


def attach_sources(sim, sources):
    for i, src in enumerate(sources):
        sim.add_source(f"src{i}", src)


def consume(sim, node):
    """Drain every delivered packet record at a node (the Consumer surface)."""
    out = []
    while (rec := sim.eject(tuple(node))) is not None:
        out.append(rec)
    return out


def reg_read(sim, node, reg):
    return sim.reg_read(tuple(node), reg)


def reg_write(sim, node, reg, value):
    sim.reg_write(tuple(node), reg, value)


# --- latency ------------------------------------------------------------------------

@dataclass
class PingStats:
    hops: int
    payload_size: int
    iterations: int
    net_cycles: list = field(default_factory=list)
    host: HostModel = HostModel()

    def roundtrip_seconds(self, cycles):
        host = 2 * (self.host.write_seconds(self.payload_size)
                    + self.host.read_seconds(self.payload_size))
        return cycles / Sim.CLOCK_HZ + host

    @property
    def seconds(self):
        return [self.roundtrip_seconds(c) for c in self.net_cycles]

    @property
    def min_s(self):
        return min(self.seconds)

    @property
    def avg_s(self):
        return sum(self.seconds) / len(self.seconds)

    @property
    def max_s(self):
        return max(self.seconds)

    @property
    def avg_cycles(self):
        return sum(self.net_cycles) / len(self.net_cycles)


class _PingPongApp:
    """Drives one ping/pong pair: a injects, b's consumer reflects.

    Pings leave during the injection phase (one per completed round trip),
    so every iteration sees an identical pipeline and identical timing.
    """

    def __init__(self, sim, a, b, payload_size, iterations):
        self.sim = sim
        self.a = tuple(a)
        self.b = tuple(b)
        self.size = payload_size
        self.iterations = iterations
        self.cycles = []
        self.inject_cycle = -1
        self.next_id = 0
        self._armed = True
        sim.on_delivery[self.b] = self._at_b
        if self.a != self.b:
            sim.on_delivery[self.a] = self._at_a

    def cycle(self, sim, now):
        if self._armed and not self.done:
            pkt = wire.build_packet(self.b, self.a, PTYPE_PING, bytes(self.size),
                                    self.next_id, now)
            self.next_id += 1
            ok = sim.inject(self.a, pkt, port=0)
            assert ok, "ping injection must never hit backpressure"
            self.inject_cycle = now
            self._armed = False
        return None if self.done else now + 1

    def _reflect(self, record, now):
        pkt = wire.build_packet(self.a, self.b, PTYPE_PONG, bytes(self.size),
                                0x80000000 | record.pid, now)
        ok = self.sim.inject(self.b, pkt, port=0)
        assert ok, "pong injection must never hit backpressure"

    def _at_b(self, record, now):
        if record.ptype == PTYPE_PING:
            self._reflect(record, now)
        elif self.a == self.b:
            self._finish(record, now)

    def _at_a(self, record, now):
        if record.ptype == PTYPE_PONG:
            self._finish(record, now)

    def _finish(self, record, now):
        self.cycles.append(now - self.inject_cycle)
        self._armed = True

    @property
    def done(self):
        return len(self.cycles) >= self.iterations


def pingpong_latency(sim, a, b, payload_size, iterations=5, host=None, hops=0):
    """Round-trip stats between nodes a and b over a quiet fabric."""
    app = _PingPongApp(sim, a, b, payload_size, iterations)
    sim.add_source("pingpong", app)
    try:
        counters, deadlock = sim.run_until(lambda s: app.done,
                                           max_cycles=200_000 * max(1, iterations))
        if deadlock or not app.done:
            raise ConfigError(f"pingpong {a}->{b} did not complete")
    finally:
        sim.on_delivery.pop(app.a, None)
        sim.on_delivery.pop(app.b, None)
    stats = PingStats(hops=hops, payload_size=payload_size, iterations=iterations,
                      net_cycles=app.cycles, host=host or HostModel())
    return stats


# --- bandwidth -----------------------------------------------------------------------

@dataclass
class BandwidthPoint:
    size: int
    gbps: float
    efficiency: float
    overhead: float  # header+footer flits over payload flits

    @staticmethod
    def overhead_for(size):
        return 2 / wire.payload_flits(size) if size else math.inf


def measure_router_port(sim_factory, size, senders, count=150):
    """Saturated intra-node flow(s) into one output port; efficiency vs 20 Gbps."""
    sim = sim_factory()
    spec = TrafficSpec(pattern="saturate", payload_size=size, count=count,
                       src=(0, 0, 0), dest=(0, 0, 0), dest_port=0, ports=senders)
    attach_sources(sim, traffic_generate(spec, sim.topology))
    total = count * senders
    counters, deadlock = sim.run_until(lambda s: s.counters.ejected >= total,
                                       max_cycles=5_000_000)
    assert not deadlock, "router bandwidth run stalled"
    out = sim.routers[(0, 0, 0)].outputs[intra_port(0)]
    window = out.last_busy - out.first_busy + 1
    payload_bits = total * size * 8
    seconds = window / Sim.CLOCK_HZ
    gbps = payload_bits / seconds / 1e9
    return BandwidthPoint(size, gbps, gbps / ROUTER_PEAK_GBPS,
                          BandwidthPoint.overhead_for(size))


def measure_link(sim_factory, size, senders=2, count=150):
    """Saturated single-link flow; efficiency vs the 10 Gbps serial peak."""
    sim = sim_factory()
    spec = TrafficSpec(pattern="saturate", payload_size=size, count=count,
                       src=(0, 0, 0), dest=(1, 0, 0), dest_port=0, ports=senders)
    attach_sources(sim, traffic_generate(spec, sim.topology))
    total = count * senders
    counters, deadlock = sim.run_until(lambda s: s.counters.ejected >= total,
                                       max_cycles=5_000_000)
    assert not deadlock, "link bandwidth run stalled"
    tx = sim.tx_endpoints[((0, 0, 0), "x+")]
    window = tx.last_word - tx.first_word  # start of first word to end of last
    payload_bits = total * size * 8
    seconds = window / Sim.CLOCK_HZ
    gbps = payload_bits / seconds / 1e9
    return BandwidthPoint(size, gbps, gbps / LINK_PEAK_GBPS,
                          BandwidthPoint.overhead_for(size))


def analytic_link_efficiency(size):
    """Frame accounting: payload flits over payload + Magic/Start/header/footer."""
    f = wire.payload_flits(size)
    return f / (f + 4)


def bandwidth_sweep(kind, sizes, sim_factory, senders=None, count=150):
    """Sweep payload sizes; returns BandwidthPoint rows in size order."""
    rows = []
    for size in sizes:
        if kind == "router":
            rows.append(measure_router_port(sim_factory, size, senders or 1, count))
        elif kind == "link":
            rows.append(measure_link(sim_factory, size, senders or 2, count))
        else:
            raise ConfigError(f"unknown bandwidth kind {kind!r}")
    return rows
