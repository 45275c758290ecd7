import json
import os
import subprocess
import sys

import jsonschema
import pytest

from nocsim import cli, wire
from nocsim.cli import emit_results, main, parse_config
from nocsim.errors import ConfigError

HERE = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCHEMA = json.load(open(os.path.join(HERE, "docs", "summary.schema.json")))
CONFIG_SCHEMA = json.load(open(os.path.join(HERE, "docs", "config.schema.json")))


def test_defaults_without_args():
    cfg = parse_config([])
    assert cfg.experiment == "pingpong"
    assert cfg.topology.preset == "mesh2x2"
    assert cfg.seed == 0


def test_flag_overrides():
    cfg = parse_config(["--experiment", "bandwidth-link", "--size", "512"])
    assert cfg.experiment == "bandwidth-link"
    assert cfg.workload.sizes == [512]


def test_file_then_flags_precedence(tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"seed": 5, "experiment": "soak",
                             "workload": {"cycles": 123}}))
    cfg = parse_config(["--seed", "9"], config_file=str(f))
    assert cfg.seed == 9
    assert cfg.experiment == "soak"
    assert cfg.workload.cycles == 123


def test_unknown_key_names_the_key(tmp_path):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"router": {"pipeline_cycels": 9}}))
    with pytest.raises(ConfigError, match="router.pipeline_cycels"):
        parse_config([], config_file=str(f))


def test_unknown_key_exit_code(tmp_path, capsys):
    f = tmp_path / "cfg.json"
    f.write_text(json.dumps({"bogus_key": 1}))
    assert main(["--config", str(f)]) == 2
    assert "bogus_key" in capsys.readouterr().err


def test_topology_strings():
    assert parse_config(["--topology", "qfdb4"]).topology.preset == "qfdb4"
    cfg = parse_config(["--topology", "torus:4x4"])
    assert cfg.topology.preset == "torus"
    assert cfg.topology.extents == [4, 4, 1]
    with pytest.raises(ConfigError):
        parse_config(["--topology", "hypercube:8"])


def test_sizes_and_hops_parsing():
    assert cli._parse_sizes("16..64:16") == [16, 32, 48, 64]
    assert cli._parse_sizes("100,200") == [100, 200]
    assert cli._parse_hops("1..3") == [1, 2, 3]


def test_show_config_round_trips(capsys):
    assert main(["--show-config", "--experiment", "soak"]) == 0
    out = capsys.readouterr().out
    assert json.loads(out)["experiment"] == "soak"


def test_emit_results_empty_is_header_only(tmp_path):
    path = tmp_path / "r.csv"
    emit_results([], str(path), ["a", "b"])
    assert path.read_text() == "a,b\n"


def test_emit_results_six_significant_digits(tmp_path):
    path = tmp_path / "r.csv"
    emit_results([{"a": 0.8888888888, "b": 1}], str(path), ["a", "b"])
    assert path.read_text() == "a,b\n0.888889,1\n"


def run_cli(tmp_path, name, args):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out


def test_deterministic_artifacts(tmp_path, capsys):
    args = ["--experiment", "bandwidth-link", "--sizes", "496..512:16",
            "--count", "30", "--trace-link", "--seed", "3"]
    code1, out1 = run_cli(tmp_path, "a", args)
    code2, out2 = run_cli(tmp_path, "b", args)
    assert code1 == code2 == 0
    for name in ("results.csv", "summary.json", "trace.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
    assert (out1 / "trace.csv").read_text().startswith("cycle,endpoint,event,words\n")


def test_summary_validates_against_schema(tmp_path, capsys):
    code, out = run_cli(tmp_path, "s", ["--experiment", "pingpong", "--hops", "1",
                                        "--sizes", "16", "--iterations", "2"])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, SCHEMA)


def test_rerun_from_summary_is_identical(tmp_path, capsys):
    args = ["--experiment", "pingpong", "--hops", "1,2", "--sizes", "32",
            "--iterations", "2"]
    code, out1 = run_cli(tmp_path, "one", args)
    assert code == 0
    out2 = tmp_path / "two"
    code2 = main(["--config", str(out1 / "summary.json"), "--out", str(out2)])
    assert code2 == 0
    assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()


def test_deadlock_demo_exit_code(tmp_path, capsys):
    code, out = run_cli(tmp_path, "d", ["--experiment", "deadlock-demo"])
    assert code == 4
    summary = json.loads((out / "summary.json").read_text())
    assert summary["possible_deadlock"] is True
    assert "cycle" in summary["report"]


def test_dump_packets_lines_parse(tmp_path, capsys):
    code, out = run_cli(tmp_path, "p", ["--experiment", "pingpong", "--hops", "1",
                                        "--sizes", "48", "--iterations", "2",
                                        "--dump-packets"])
    assert code == 0
    lines = (out / "packets.txt").read_text().splitlines()
    assert len(lines) == 4  # 2 pings + 2 pongs
    for line in lines:
        pkt = wire.parse_dump(line)
        assert pkt.header.payload_len == 48


def test_resolved_config_is_echoed(tmp_path, capsys):
    run_cli(tmp_path, "e", ["--experiment", "pingpong", "--hops", "1",
                            "--sizes", "16", "--iterations", "1"])
    out = capsys.readouterr().out
    assert '"experiment": "pingpong"' in out


def test_resolved_config_matches_documented_schema():
    cfg = parse_config(["--experiment", "soak", "--topology", "torus:4x4"])
    full = cfg.to_dict()
    jsonschema.validate(full, CONFIG_SCHEMA)
    # the summary-embedded echo (without out/jobs) validates too
    full.pop("out")
    full.pop("jobs")
    jsonschema.validate(full, CONFIG_SCHEMA)


def test_kernel_lanes_produce_identical_results(tmp_path):
    # the pure-Python fallback must be bit- and cycle-identical to the
    # compiled lane; compare artifacts from a run under each
    args = ["-m", "nocsim.cli", "--experiment", "pingpong", "--hops", "1,2",
            "--sizes", "64", "--iterations", "2", "--seed", "5"]
    outs = {}
    for lane, flag in (("compiled", "0"), ("pure", "1")):
        out = tmp_path / lane
        env = dict(os.environ, NOCSIM_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, *args, "--out", str(out)],
                             env=env, capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outs[lane] = out
    for name in ("results.csv", "summary.json"):
        assert (outs["compiled"] / name).read_bytes() == \
            (outs["pure"] / name).read_bytes(), name
