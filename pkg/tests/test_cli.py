import json
import subprocess
import sys

import pytest

from filmqec.cli import DEFAULTS, EXIT_CONFIG, EXIT_DATA, EXIT_MODEL, load_config, run
from filmqec.decoder import ModelParams, init_params


def write_config(tmp_path, **over):
    cfg = {
        "chains": 2,
        "holdout_chains": 1,
        "grid": {"d": [3], "r": [1, 3], "bases": ["Z", "X"], "logical_states": [0, 1]},
        "shots": 64,
        "dataset_dir": str(tmp_path / "data"),
        "checkpoint_dir": str(tmp_path / "ckpt"),
        "report_dir": str(tmp_path / "reports"),
        "train": {"epochs": 1, "batch_size": 64, "micro_batch": 64, "channels": [4, 4, 4], "latent": 4},
        "bench": {"iterations": 3, "warmup": 1},
    }
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_generate_grid_and_reproducible_hashes(tmp_path):
    cfg = write_config(tmp_path, chains=1, holdout_chains=0)
    assert run(["generate", "--config", cfg]) == 0
    manifest = json.loads((tmp_path / "data" / "manifest.json").read_text())
    files = sorted(e["file"] for e in manifest["datasets"])
    assert len(files) == 8 and len(list((tmp_path / "data").glob("*.qrs"))) == 8
    assert {(e["r"], e["basis"], e["logical_state"]) for e in manifest["datasets"]} == {
        (r, b, q) for r in (1, 3) for b in "ZX" for q in (0, 1)
    }
    assert run(["generate", "--config", cfg, "--out", str(tmp_path / "again")]) == 0
    again = json.loads((tmp_path / "again" / "manifest.json").read_text())
    assert [e["sha256"] for e in again["datasets"]] == [e["sha256"] for e in manifest["datasets"]]
    assert run(["generate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "other")]) == 0
    other = json.loads((tmp_path / "other" / "manifest.json").read_text())
    assert [e["sha256"] for e in other["datasets"]] != [e["sha256"] for e in manifest["datasets"]]


def test_full_workflow(tmp_path):
    cfg = write_config(tmp_path, grid={"d": [3], "r": [2], "bases": ["Z"], "logical_states": [0, 1]})
    assert run(["generate", "--config", cfg]) == 0
    assert run(["train", "--config", cfg]) == 0
    ck = tmp_path / "ckpt"
    assert (ck / "film_d3_r2_Z.qnn").is_file() and (ck / "cnn_d3_r2_Z.qnn").is_file()
    assert ModelParams.load(ck / "film_d3_r2_Z.qnn").film_enabled
    assert run(["eval", "--config", cfg]) == 0
    lines = (tmp_path / "reports" / "eval.csv").read_text().splitlines()
    assert lines[0].startswith("tag,decoder") and [x.split(",")[1] for x in lines[1:]] == [
        "film_cnn", "cnn", "mwpm", "majority"
    ]
    assert (tmp_path / "reports" / "ratios.csv").is_file()
    assert run(["bench", "--config", cfg]) == 0
    bench = (tmp_path / "reports" / "latency.csv").read_text().splitlines()
    assert [x.split(",")[2] for x in bench[1:]] == ["dynamic", "folded", "no_film"]
    assert run(["analyze", "--config", cfg]) == 0
    assert (tmp_path / "reports" / "svd_d3_r2_Z.csv").is_file()


def test_tampered_dataset_is_a_data_error(tmp_path):
    cfg = write_config(tmp_path, grid={"d": [3], "r": [1], "bases": ["Z"], "logical_states": [0]})
    assert run(["generate", "--config", cfg]) == 0
    victim = next((tmp_path / "data").glob("*_c0_*.qrs"))  # a training-role file
    raw = bytearray(victim.read_bytes())
    raw[-1] ^= 1
    victim.write_bytes(bytes(raw))
    assert run(["train", "--config", cfg]) == EXIT_DATA


def test_missing_snapshot_is_a_config_error(tmp_path):
    cfg = write_config(tmp_path, snapshots=[str(tmp_path / "nope.json")])
    assert run(["generate", "--config", cfg]) == EXIT_CONFIG


def test_mismatched_checkpoint_is_a_model_error(tmp_path):
    cfg = write_config(tmp_path, grid={"d": [3], "r": [2], "bases": ["Z"], "logical_states": [0]})
    assert run(["generate", "--config", cfg]) == 0
    wrong = tmp_path / "wrong.qnn"
    init_params(5, 2, channels=(4, 4, 4), latent=4).save(wrong)
    assert run(["eval", "--config", cfg, "--film-checkpoint", str(wrong)]) == EXIT_MODEL


def test_untrained_checkpoint_analysis_is_a_model_error(tmp_path):
    cfg = write_config(tmp_path, grid={"d": [3], "r": [2], "bases": ["Z"], "logical_states": [0]})
    assert run(["generate", "--config", cfg]) == 0
    fresh = tmp_path / "fresh.qnn"
    init_params(3, 2, channels=(4, 4, 4), latent=4).save(fresh)
    assert run(["analyze", "--config", cfg, "--film-checkpoint", str(fresh)]) == EXIT_MODEL


def test_bad_config_values(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"shots": 10, "mystery": 1}))
    assert run(["generate", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text("{not json")
    assert run(["generate", "--config", str(bad)]) == EXIT_CONFIG
    assert run(["generate", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG


def test_config_defaults_and_seed_override():
    cfg = load_config(None, 7)
    assert cfg["seed"] == 7 and cfg["shots"] == DEFAULTS["shots"]
    assert cfg["train"]["channels"] == [128, 256, 512]


def test_unknown_flag_and_help():
    with pytest.raises(SystemExit) as exc:
        run(["generate", "--bogus"])
    assert exc.value.code == 2
    out = subprocess.run([sys.executable, "-m", "filmqec", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("generate", "train", "eval", "bench", "analyze"):
        assert cmd in out.stdout
