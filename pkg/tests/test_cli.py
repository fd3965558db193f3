import json
import subprocess
import sys

import pytest

from vpx.cli import main

FAST = ["--set", "iterations=2", "--set", "log_every=1", "--set", "eval_every=1"]


def run(*argv):
    return main([str(a) for a in argv])


def same_tree(a, b):
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name != "config.json")
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file() and p.name != "config.json")
    return all((a / f).read_bytes() == (b / f).read_bytes() for f in files)


def test_synth_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--frames", 16, "--seed", 7, "--out", tmp_path / name) == 0
    assert same_tree(tmp_path / "a", tmp_path / "b")
    snap = json.loads((tmp_path / "a" / "config.json").read_text())
    assert snap["train"]["seed"] == 7 and snap["profile"]["name"] == "tiny"


def test_unknown_flag_exits_2(capsys):
    assert run("synth", "--frames", 2, "--out", "x", "--bogus") == 2
    assert "--bogus" in capsys.readouterr().err


def test_bad_override_names_the_flag(tmp_path, capsys):
    assert run("synth", "--frames", 1, "--out", tmp_path / "d", "--set", "nope=1") == 2
    assert "--set" in capsys.readouterr().err
    cfg = tmp_path / "c.json"
    cfg.write_text("[1]")
    assert run("synth", "--frames", 1, "--out", tmp_path / "d", "--config", cfg) == 2


def test_missing_input_is_config_error(tmp_path, capsys):
    assert run("train-pnet", "--data", tmp_path / "none", "--out", tmp_path / "o") == 2
    assert "--data" in capsys.readouterr().err


def test_runtime_failure_exits_1(tmp_path):
    run("synth", "--frames", 2, "--out", tmp_path / "d")
    (tmp_path / "p.jsonl").write_text("")
    assert run("eval", "--data", tmp_path / "d", "--pred", tmp_path / "p.jsonl") == 1


def test_bad_thread_env_exits_2(tmp_path, monkeypatch):
    monkeypatch.setenv("VPX_THREADS", "zero")
    assert run("synth", "--frames", 1, "--out", tmp_path / "d") == 2


def test_tiny_pipeline_end_to_end(tmp_path):
    d = tmp_path
    assert run("synth", "--frames", 6, "--seed", 1, "--out", d / "train") == 0
    assert run("synth", "--frames", 3, "--seed", 2, "--out", d / "test") == 0
    assert run("train-pnet", "--data", d / "train", "--out", d / "pnet", *FAST) == 0
    assert (d / "pnet" / "best.ckpt").exists() and (d / "pnet" / "config.json").exists()
    events = [json.loads(l) for l in (d / "pnet" / "log.jsonl").read_text().splitlines()]
    assert any(e["event"] == "iter" and {"loss", "lr", "wall"} <= set(e) for e in events)
    assert run("gen-crops", "--data", d / "train", "--pnet", d / "pnet" / "best.ckpt", "--out", d / "crops.tdf") == 0
    assert run("train-vnet", "--crops", d / "crops.tdf", "--out", d / "vnet", *FAST) == 0
    for name in ("p1", "p2"):
        assert run("infer", "--data", d / "test", "--pnet", d / "pnet" / "best.ckpt",
                   "--vnet", d / "vnet" / "best.ckpt", "--out", d / f"{name}.jsonl") == 0
    assert (d / "p1.jsonl").read_bytes() == (d / "p2.jsonl").read_bytes()
    assert run("eval", "--data", d / "test", "--pred", d / "p1.jsonl", "--json", d / "r.json",
               "--csv", d / "r.csv") == 0
    rep = json.loads((d / "r.json").read_text())
    assert 0 <= rep["map"] <= 1 and rep["frames"] == 3
    assert (d / "r.csv").read_text().startswith("joint,map_10cm,pckh")
    assert run("export-heatmaps", "--data", d / "test", "--pnet", d / "pnet" / "best.ckpt", "--out", d / "hm") == 0
    assert len(list((d / "hm").glob("*.pgm"))) == 15
    assert run("voxelize", "--data", d / "test", "--joint", 8, "--out", d / "g.tdf") == 0
    assert (d / "g.pgm").exists()
    assert run("ablate", "2d-co", "--data", d / "train", "--test", d / "test", "--pnet", d / "pnet" / "best.ckpt",
               "--out", d / "co", *FAST) == 0
    assert json.loads((d / "co" / "report.json").read_text())["variant"] == "2d-co"
    assert run("export-plots", "--report", f"2D_CO={d / 'co' / 'report.json'}", "--report", f"3D_VL={d / 'r.json'}",
               "--out", d / "plot.csv") == 0
    lines = (d / "plot.csv").read_text().splitlines()
    assert lines[0] == "series,label,part,map_percent" and any(l.startswith("component,3D_VL,Full Body") for l in lines)


@pytest.mark.parametrize("variant", ["2d-vl", "holistic"])
def test_other_ablations_run(tmp_path, variant):
    d = tmp_path
    run("synth", "--frames", 3, "--seed", 1, "--out", d / "train")
    run("train-pnet", "--data", d / "train", "--out", d / "pnet", *FAST)
    assert run("ablate", variant, "--data", d / "train", "--test", d / "train", "--pnet", d / "pnet" / "best.ckpt",
               "--out", d / "ab", *FAST) == 0


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "vpx.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
