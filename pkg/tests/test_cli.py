import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from bosonlc.cli import main
from bosonlc.config import ConfigError, apply_overrides, load_config

BASE_CONFIG = """
model:
  graph: {kind: path, length: 5}
  hopping: 1.0
  interactions:
    - {kind: onsite, strength: 1.0}
  range: 0
ensemble: {mu: 1.0, per_site_cap: 2}
experiment:
  kind: scan
  evolve: {zeta: {0: 1}}
  probe: {eta: {0: 1}}
  r_values: [2, 3, 4]
  cone_fractions: [0.5, 0.9]
  extra_times: [0.01]
output: {dir: OUTDIR}
seed: 11
"""


@pytest.fixture
def config_file(tmp_path):
    def write(kind=None, **tweaks):
        text = BASE_CONFIG.replace("OUTDIR", str(tmp_path / "out"))
        data = yaml.safe_load(text)
        if kind:
            data["experiment"]["kind"] = kind
        for key, value in tweaks.items():
            node = data
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump(data))
        return path
    return write


# -- config validation -------------------------------------------------------------

def test_load_config_roundtrip(config_file):
    cfg = load_config(config_file())
    assert cfg.mu == 1.0
    assert cfg.kind == "scan"
    assert cfg.model.graph.num_vertices == 5
    assert cfg.constants["C3"] == 1.0


def test_config_error_paths():
    with pytest.raises(ConfigError, match="model.graph"):
        load_config("model: {graph: {kind: moebius}}\nensemble: {}\n"
                    "experiment: {kind: scan}", is_text=True)
    with pytest.raises(ConfigError, match="ensemble.mu"):
        load_config(BASE_CONFIG.replace("mu: 1.0", "mu: -3"), is_text=True)
    with pytest.raises(ConfigError, match="experiment.kind"):
        load_config(BASE_CONFIG.replace("kind: scan", "kind: dance"), is_text=True)
    with pytest.raises(ConfigError, match="hopping"):
        load_config(BASE_CONFIG.replace("hopping: 1.0", "hopping: 1.7"), is_text=True)
    with pytest.raises(ConfigError, match="constants"):
        load_config(BASE_CONFIG + "\nconstants: {C9: 1.0}\n", is_text=True)


def test_apply_overrides():
    text = apply_overrides(BASE_CONFIG, ["ensemble.mu=2.5", "experiment.kind=bounds"])
    cfg = load_config(text, is_text=True)
    assert cfg.mu == 2.5
    assert cfg.kind == "bounds"


def test_schedule_config_segments():
    text = BASE_CONFIG.replace(
        "hopping: 1.0",
        "hopping: {segments: [{until: 0.5, value: 1.0}, {value: 0.5}]}")
    cfg = load_config(text, is_text=True)
    sched = next(iter(cfg.model.hopping.values()))
    assert sched.at(0.2) == 1.0
    assert sched.at(0.7) == 0.5


# -- subcommands --------------------------------------------------------------------

def test_bounds_subcommand(config_file, tmp_path):
    rc = main(["bounds", str(config_file())])
    assert rc == 0
    report = json.loads((tmp_path / "out" / "bounds.json").read_text())
    names = {e["name"]: e["value"] for e in report["trace"]}
    assert names["velocity"] == 880.0
    assert "resolved_config" in report


def test_scan_subcommand_and_outputs(config_file, tmp_path):
    rc = main(["scan", str(config_file())])
    assert rc == 0
    csv_text = (tmp_path / "out" / "scan.csv").read_text()
    header_lines = [l for l in csv_text.splitlines() if l.startswith("#")]
    assert header_lines, "resolved config must be embedded"
    embedded = json.loads("\n".join(l[2:] for l in header_lines))
    assert embedded["resolved_config"]["seed"] == 11
    assert "provenance" in embedded
    data = json.loads((tmp_path / "out" / "scan.json").read_text())
    assert len(data["cells"]) == 9  # 3 r * (2 fractions + 1 extra time)


def test_certify_subcommand(config_file, tmp_path):
    path = config_file(kind="certify", **{
        "model.graph.length": 9,
        "ensemble.per_site_cap": 3,
        "experiment.time": 0.3,
        "experiment.window_radius": 2,
    })
    rc = main(["certify", str(path)])
    assert rc == 0
    cert = json.loads((tmp_path / "out" / "certificate.json").read_text())
    assert cert["radius"] == 2
    assert cert["assumption_status"].startswith("validated")
    assert "constants_ledger" in cert


def test_cluster_subcommand(config_file, tmp_path):
    path = config_file(kind="cluster", **{
        "model.graph.length": 6,
        "model.interactions": [{"kind": "onsite", "strength": 15.0}],
        "experiment.r_values": [1, 2, 3],
    })
    rc = main(["cluster", str(path)])
    assert rc == 0
    csv_text = (tmp_path / "out" / "cluster.csv").read_text()
    assert "r,exact,bound,ratio,observable" in csv_text


def test_selftest_subcommand(config_file, tmp_path):
    path = config_file(kind="selftest", **{"experiment.samples": 2000})
    rc = main(["selftest", str(path)])
    assert rc == 0
    report = json.loads((tmp_path / "out" / "selftest.json").read_text())
    assert all(c["passed"] for c in report["checks"])


# -- exit codes ------------------------------------------------------------------------

def test_exit_code_config_error(config_file):
    path = config_file()
    assert main(["scan", str(path), "--set", "ensemble.mu=-2"]) == 2


def test_exit_code_missing_file(tmp_path):
    assert main(["scan", str(tmp_path / "nope.yaml")]) == 2


def test_exit_code_capacity(config_file):
    path = config_file(**{"ensemble.per_site_cap": 40, "model.graph.length": 12})
    assert main(["scan", str(path)]) == 3


def test_exit_code_gapless(config_file):
    path = config_file(kind="cluster", **{
        "model.graph.length": 6,
        "model.hopping": 0.0,
        "model.interactions": [],
    })
    assert main(["cluster", str(path)]) == 4


# -- determinism -------------------------------------------------------------------------

def test_byte_identical_reruns(config_file, tmp_path):
    path = config_file()
    main(["scan", str(path)])
    first_csv = (tmp_path / "out" / "scan.csv").read_bytes()
    first_json = (tmp_path / "out" / "scan.json").read_bytes()
    main(["scan", str(path)])
    assert (tmp_path / "out" / "scan.csv").read_bytes() == first_csv
    assert (tmp_path / "out" / "scan.json").read_bytes() == first_json


def test_module_invocation_smoke(config_file, tmp_path):
    """The CLI is reachable as python -m bosonlc.cli."""
    path = config_file(kind="bounds")
    src = str(Path(__file__).resolve().parents[1] / "src")
    proc = subprocess.run(
        [sys.executable, "-m", "bosonlc.cli", "bounds", str(path)],
        capture_output=True, text=True,
        env={"PYTHONPATH": src, "PATH": "/usr/bin:/bin:/usr/local/bin"})
    assert proc.returncode == 0, proc.stderr
