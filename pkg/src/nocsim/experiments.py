"""The five canned experiments behind the CLI.

Each runner returns (rows, summary, exit_code); the CLI turns rows into
results.csv and the summary (with the resolved config embedded) into
summary.json.
"""

from concurrent.futures import ProcessPoolExecutor

from .config import (
    calibration_note,
    config_from_dict,
    make_host_model,
    make_sim,
    make_topology,
)
from .errors import ConfigError
from .fabric import build_topology
from .harness import (
    LINK_PEAK_GBPS,
    ROUTER_PEAK_GBPS,
    TrafficSpec,
    analytic_link_efficiency,
    attach_sources,
    measure_link,
    measure_router_port,
    pingpong_latency,
    traffic_generate,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_DEADLOCK = 4

US = 1e-6
DEFAULT_SWEEP = list(range(16, 513, 16))


def hop_target(topology, hops):
    """Endpoint with a DOR distance of exactly `hops` from the origin."""
    pos = [0, 0, 0]
    left = hops
    for dim in range(3):
        step = min(left, topology.extents[dim] - 1)
        pos[dim] += step
        left -= step
    if left:
        raise ConfigError(f"hops={hops} exceeds the topology diameter")
    return tuple(pos)


def _sinks(cfg):
    trace = [] if cfg.trace_link else None
    dump = [] if cfg.dump_packets else None
    return trace, dump


def run_pingpong(cfg):
    topo = make_topology(cfg)
    sizes = cfg.workload.sizes or [0, 16, 32, 64, 128]
    host = make_host_model(cfg)
    trace, dump = _sinks(cfg)
    rows = []
    by_size = {}
    for hops in cfg.workload.hops:
        b = hop_target(topo, hops)
        for size in sizes:
            sim = make_sim(cfg, topology=topo, trace=trace, dump=dump)
            stats = pingpong_latency(sim, (0, 0, 0), b, size,
                                     iterations=cfg.workload.iterations,
                                     host=host, hops=hops)
            rows.append({
                "hops": hops,
                "size_bytes": size,
                "iterations": stats.iterations,
                "min_us": stats.min_s / US,
                "avg_us": stats.avg_s / US,
                "max_us": stats.max_s / US,
                "avg_net_cycles": stats.avg_cycles,
            })
            by_size.setdefault(size, {})[hops] = stats.avg_cycles
    deltas = {}
    for size, per_hop in by_size.items():
        hops_sorted = sorted(per_hop)
        deltas[str(size)] = [per_hop[b] - per_hop[a]
                             for a, b in zip(hops_sorted, hops_sorted[1:])]
    summary = {
        "hop_delta_cycles": deltas,
        "host_model": {
            "write_cycles_per_word": host.write_cycles_per_word,
            "read_cycles_per_word": host.read_cycles_per_word,
            "clock_hz": host.clock_hz,
        },
        "calibration": calibration_note(cfg),
    }
    return rows, summary, EXIT_OK, trace, dump


def _bandwidth_row(point):
    return {
        "size_bytes": point.size,
        "gbps": point.gbps,
        "efficiency": point.efficiency,
        "overhead_ratio": point.overhead,
    }


def _bw_worker(args):
    cfg_dict, kind, size = args
    cfg = config_from_dict(cfg_dict)
    return _bandwidth_row(_measure_one(cfg, kind, size))


def _measure_one(cfg, kind, size, trace=None, dump=None):
    count = cfg.workload.count
    if kind == "router":
        senders = cfg.workload.senders or 1
        ports = max(cfg.router.intra_ports, senders)

        def factory():
            return make_sim(cfg, topology=build_topology(extents=(1, 1, 1)),
                            trace=trace, dump=dump, intra_ports=ports)

        return measure_router_port(factory, size, senders, count)
    senders = cfg.workload.senders or 2

    def factory():
        return make_sim(cfg, topology=build_topology(extents=(2, 1, 1)),
                        trace=trace, dump=dump,
                        intra_ports=max(cfg.router.intra_ports, senders))

    return measure_link(factory, size, senders, count)


def run_bandwidth(cfg, kind):
    sizes = cfg.workload.sizes or DEFAULT_SWEEP
    trace, dump = _sinks(cfg)
    if cfg.jobs > 1:
        if trace is not None or dump is not None:
            raise ConfigError("trace/dump output requires jobs=1")
        jobs = [(cfg.to_dict(), kind, size) for size in sizes]
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_bw_worker, jobs))
    else:
        rows = [_bandwidth_row(_measure_one(cfg, kind, size, trace, dump))
                for size in sizes]
    peak = ROUTER_PEAK_GBPS if kind == "router" else LINK_PEAK_GBPS
    summary = {
        "kind": kind,
        "peak_gbps": peak,
        "senders": cfg.workload.senders or (1 if kind == "router" else 2),
        "calibration": calibration_note(cfg),
    }
    if kind == "link":
        summary["analytic_efficiency"] = {
            str(s): analytic_link_efficiency(s) for s in sizes
        }
    return rows, summary, EXIT_OK, trace, dump


def run_soak(cfg):
    topo = make_topology(cfg)
    trace, dump = _sinks(cfg)
    sim = make_sim(cfg, topology=topo, trace=trace, dump=dump)
    spec = TrafficSpec(pattern="uniform", payload_size=cfg.workload.size,
                       rate=cfg.workload.rate, duration=cfg.workload.cycles)
    attach_sources(sim, traffic_generate(spec, topo, seed=cfg.seed))
    watchdog = cfg.workload.watchdog
    deadlock = False
    target = cfg.workload.cycles
    while sim.cycle < target and not deadlock:
        chunk = min(1000, target - sim.cycle)
        _, deadlock = sim.run_until(max_cycles=chunk, watchdog=watchdog)
        sim.audit()
    if not deadlock:
        _, deadlock = sim.run_until(lambda s: s.counters.in_flight == 0,
                                    max_cycles=500_000, watchdog=watchdog)
    sim.audit()
    c = sim.counters
    rows = [{
        "cycles": sim.cycle,
        "injected": c.injected,
        "ejected": c.ejected,
        "dropped": c.dropped,
        "in_flight": c.in_flight,
        "flits_moved": c.flits_moved,
        "watchdog_triggered": int(deadlock),
    }]
    summary = {
        "watchdog_window": watchdog,
        "possible_deadlock": deadlock,
        "conservation_ok": c.injected == c.ejected + c.dropped + c.in_flight,
        "last_movement_cycle": sim.last_movement,
    }
    return rows, summary, (EXIT_DEADLOCK if deadlock else EXIT_OK), trace, dump


def run_deadlock_demo(cfg):
    """Wrapped 4-ring, every node pushes large packets two hops around.

    Buffers are demo-sized (one packet per VC queue) so the wraparound
    buffer-wait cycle forms immediately under the offset-sign policy; the
    dateline policy drains the identical workload.
    """
    topo = build_topology(extents=(4, 1, 1), wrap=(True, False, False))
    demo_fifo = 40
    trace, dump = _sinks(cfg)
    sim = make_sim(cfg, topology=topo, trace=trace, dump=dump,
                   fifo_inter_per_vc=demo_fifo)
    count = cfg.workload.count if cfg.workload.count <= 10 else 3
    sources = []
    for x in range(4):
        spec = TrafficSpec(pattern="saturate", payload_size=512, count=count,
                           src=(x, 0, 0), dest=((x + 2) % 4, 0, 0))
        sources.extend(traffic_generate(spec, topo))
    attach_sources(sim, sources)
    watchdog = min(cfg.workload.watchdog, 2_000)
    counters, deadlock = sim.run_until(
        lambda s: s.counters.injected > 0 and s.counters.in_flight == 0,
        max_cycles=50_000, watchdog=watchdog)
    rows = [{
        "vc_policy": cfg.router.vc_policy,
        "injected": counters.injected,
        "ejected": counters.ejected,
        "in_flight": counters.in_flight,
        "watchdog_triggered": int(deadlock),
        "last_movement_cycle": sim.last_movement,
        "detected_at_cycle": sim.cycle,
    }]
    summary = {
        "vc_policy": cfg.router.vc_policy,
        "demo_fifo_per_vc": demo_fifo,
        "watchdog_window": watchdog,
        "possible_deadlock": deadlock,
        "report": (
            f"no forward progress since cycle {sim.last_movement}, "
            f"{counters.in_flight} packets in flight at cycle {sim.cycle}"
            if deadlock else "workload drained; no deadlock under this vc policy"
        ),
    }
    return rows, summary, (EXIT_DEADLOCK if deadlock else EXIT_OK), trace, dump


FIELD_ORDER = {
    "pingpong": ["hops", "size_bytes", "iterations", "min_us", "avg_us", "max_us",
                 "avg_net_cycles"],
    "bandwidth-router": ["size_bytes", "gbps", "efficiency", "overhead_ratio"],
    "bandwidth-link": ["size_bytes", "gbps", "efficiency", "overhead_ratio"],
    "soak": ["cycles", "injected", "ejected", "dropped", "in_flight", "flits_moved",
             "watchdog_triggered"],
    "deadlock-demo": ["vc_policy", "injected", "ejected", "in_flight",
                      "watchdog_triggered", "last_movement_cycle", "detected_at_cycle"],
}


def run(cfg):
    """Dispatch an experiment.

    Returns (rows, summary, exit_code, trace_rows_or_None, dump_lines_or_None).
    """
    if cfg.experiment == "pingpong":
        return run_pingpong(cfg)
    if cfg.experiment == "bandwidth-router":
        return run_bandwidth(cfg, "router")
    if cfg.experiment == "bandwidth-link":
        return run_bandwidth(cfg, "link")
    if cfg.experiment == "soak":
        return run_soak(cfg)
    if cfg.experiment == "deadlock-demo":
        return run_deadlock_demo(cfg)
    raise ConfigError(f"unknown experiment {cfg.experiment!r}")
