#!/usr/bin/env python3
"""Benchmark the compiled kernel lane against the pure-Python fallback.

Measures the per-flit codec primitives and the end-to-end packet codec,
then a short fabric run under each lane (the lane is chosen at import via
NOCSIM_PURE_PYTHON, so the fabric comparison re-executes this script in a
subprocess).

Usage: python3 benchmarks/bench_kernels.py [--fast]
"""

import argparse
import os
import random
import subprocess
import sys
import time

from nocsim import kernels, wire


def bench(fn, args_iter, repeat):
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for a in args_iter:
            fn(*a)
        dt = (time.perf_counter() - t0) / len(args_iter)
        best = min(best, dt)
    return best * 1e9  # ns/op


def kernel_rows(repeat):
    rng = random.Random(0)
    datas = [(rng.getrandbits(119),) for _ in range(repeat)]
    flits = [(kernels.secded_pack(d[0]),) for d in datas]
    flipped = [(f[0] ^ (1 << rng.randrange(128)),) for f in flits]
    headers = [((1, 2, 3), (4, 5, 6), 7, rng.randrange(513), rng.getrandbits(32), 1, 0)
               for _ in range(repeat)]
    hdr_flits = [(kernels.pack_header(*h),) for h in headers]
    payloads = [(rng.randbytes(512),) for _ in range(repeat // 4 or 1)]
    flit_lists = [(kernels.payload_to_flits(p[0]), 512) for p in payloads]

    lanes = kernels.available_lanes()
    rows = []
    ops = [
        ("secded_encode", datas),
        ("secded_decode (clean)", flits),
        ("secded_decode (1-bit fix)", flipped),
        ("pack_header", headers),
        ("unpack_header", hdr_flits),
        ("payload_to_flits 512B", payloads),
        ("flits_to_payload 512B", flit_lists),
    ]
    for name, args in ops:
        row = {"op": name}
        for lane_name, lane in sorted(lanes.items()):
            row[lane_name] = bench(getattr(lane, name.split()[0]), args, repeat)
        rows.append(row)
    return rows


def packet_codec_row(repeat):
    rng = random.Random(1)
    packets = [wire.build_packet((1, 0, 0), (0, 0, 0), 0, rng.randbytes(512), i, 0)
               for i in range(repeat // 4 or 1)]
    flit_seqs = [(wire.to_flits(p),) for p in packets]
    enc = bench(wire.to_flits, [(p,) for p in packets], repeat)
    dec = bench(wire.from_flits, flit_seqs, repeat)
    return enc, dec


def fabric_packets_per_second(cycles=60_000):
    from nocsim.fabric import Sim, build_topology
    from nocsim.harness import TrafficSpec, attach_sources, traffic_generate
    from nocsim.router import RouterConfig

    topo = build_topology(extents=(4, 4, 1))
    sim = Sim(topo, router_cfg=RouterConfig(coord=(0, 0, 0)), seed=1)
    spec = TrafficSpec(pattern="uniform", payload_size=16, rate=0.01, duration=10**9)
    attach_sources(sim, traffic_generate(spec, topo, seed=1))
    t0 = time.perf_counter()
    sim.run_until(max_cycles=cycles)
    dt = time.perf_counter() - t0
    return sim.counters.ejected / dt, cycles / dt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--fast", action="store_true", help="fewer iterations")
    ap.add_argument("--fabric-only", action="store_true")
    args = ap.parse_args()
    repeat = 2_000 if args.fast else 20_000

    if args.fabric_only:
        pps, cps = fabric_packets_per_second()
        print(f"lane={kernels.LANE}: {pps:,.0f} packets/s, {cps:,.0f} cycles/s")
        return

    lanes = kernels.available_lanes()
    print(f"active lane: {kernels.LANE}; available: {', '.join(sorted(lanes))}")
    if "compiled" not in lanes:
        print("compiled lane not built; showing pure lane only")

    rows = kernel_rows(repeat)
    names = sorted(lanes)
    width = max(len(r["op"]) for r in rows)
    header = f"{'kernel':<{width}}  " + "  ".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"  {'speedup':>8}"
    print("\n" + header)
    print("-" * len(header))
    for r in rows:
        line = f"{r['op']:<{width}}  " + "  ".join(f"{r[n]:>10.0f}ns" for n in names)
        if len(names) == 2:
            line += f"  {r['pure'] / r['compiled']:>7.1f}x"
        print(line)

    enc, dec = packet_codec_row(repeat)
    print(f"\npacket codec (512B, active lane): to_flits {enc:.0f}ns, from_flits {dec:.0f}ns")

    print("\nfabric throughput (4x4 mesh, uniform 16B traffic):")
    for env_val, label in (("0", "compiled"), ("1", "pure")):
        if label == "compiled" and "compiled" not in lanes:
            continue
        env = dict(os.environ, NOCSIM_PURE_PYTHON=env_val)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--fabric-only"],
            env=env, capture_output=True, text=True, check=True)
        print(f"  {out.stdout.strip()}")


if __name__ == "__main__":
    main()
