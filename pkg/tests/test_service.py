from __future__ import annotations

import json
import shutil
import socket
import threading
import time
import warnings
from pathlib import Path

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from conftest import tiny
from poolplay.checkpoint import Checkpoint, ObsConfig, write_checkpoint
from poolplay.cli import main
from poolplay.football.replay import read_replay
from poolplay.league import build_net
from poolplay.service import create_app

FIXTURES = Path(__file__).parent / "fixtures"


def make_checkpoint(path: Path, seed: int = 0) -> Path:
    cfg = tiny()
    net = build_net(cfg.agent("main"), cfg, seed)
    ckpt = Checkpoint(f"main-{seed:06d}", "main", "main", "ppo", 0, seed, net.spec, ObsConfig())
    write_checkpoint(path, ckpt, net)
    return path


@pytest.fixture
def client():
    with TestClient(create_app(), raise_server_exceptions=False) as c:
        yield c


def test_play_twice_gives_identical_replays(tmp_path, capsys):
    x = make_checkpoint(tmp_path / "x.ckpt")
    for name in ("r1.jsonl", "r2.jsonl"):
        assert main(["play", "--a", str(x), "--b", str(x), "--seed", "7", "--replay", str(tmp_path / name)]) == 0
    a, b = (tmp_path / "r1.jsonl").read_bytes(), (tmp_path / "r2.jsonl").read_bytes()
    assert a == b
    records = read_replay(tmp_path / "r1.jsonl")
    assert records[0]["step"] == 0 and records[-1]["step"] == len(records) - 1
    assert {"positions", "ball", "actions", "events", "score"} <= set(records[1])


def test_play_seed_changes_match(tmp_path):
    for seed in (1, 2):
        assert main(["play", "--a", "scripted", "--b", "uniform", "--seed", str(seed),
                     "--replay", str(tmp_path / f"{seed}.jsonl")]) == 0
    assert (tmp_path / "1.jsonl").read_bytes() != (tmp_path / "2.jsonl").read_bytes()


def test_train_writes_manifest_and_resumes(tmp_path, tiny_toml, capsys):
    run = tmp_path / "run"
    assert main(["train", "--config", str(tiny_toml), "--run", str(run), "--steps", "3"]) == 0
    manifest = json.loads((run / "run.json").read_text())
    assert manifest["step"] == 3
    assert main(["train", "--resume", str(run), "--steps", "2"]) == 0
    assert json.loads((run / "run.json").read_text())["step"] == 5
    assert len((run / "metrics.csv").read_text().splitlines()) == 6


def test_eval_report_and_gc_on_a_run(tmp_path, tiny_toml, capsys):
    run = tmp_path / "run"
    assert main(["train", "--config", str(tiny_toml), "--run", str(run), "--steps", "8"]) == 0
    assert main(["eval", "--run", str(run), "--pool", "main/SHMP", "--games", "1"]) == 0
    assert (run / "eval" / "outcomes.jsonl").exists()
    assert (run / "eval" / "heatmaps" / "scripted.csv").exists()
    capsys.readouterr()
    assert main(["report", "--run", str(run)]) == 0
    text = capsys.readouterr().out
    assert "scripted" in text and (run / "report" / "report.csv").exists()
    assert main(["gc", "--run", str(run)]) == 0


def test_report_matches_golden(tmp_path, capsys):
    run = tmp_path / "run"
    shutil.copytree(FIXTURES / "report_run", run)
    assert main(["report", "--run", str(run)]) == 0
    golden = (FIXTURES / "report_golden.txt").read_text()
    assert capsys.readouterr().out == golden
    assert (run / "report" / "report.txt").read_text() == golden
    assert (run / "report" / "report.csv").read_text() == (FIXTURES / "report_golden.csv").read_text()


def test_bad_config_field_is_reported(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('profile = "desk"\n[ppo]\nlr = "fast"\n')
    assert main(["train", "--config", str(cfg), "--run", str(tmp_path / "r"), "--steps", "1"]) == 1
    assert "ppo.lr: expected a number" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["play", "--a", "scripted"])
    assert e.value.code == 2
    assert main(["train", "--steps", "1"]) == 2
    assert "--config is required" in capsys.readouterr().err
    assert main(["play", "--a", str(tmp_path / "missing.ckpt"), "--b", "scripted", "--seed", "1"]) == 1
    assert "not a checkpoint file" in capsys.readouterr().err
    assert main(["report", "--run", str(tmp_path)]) == 1
    assert main(["ablate", "--config", str(tmp_path / "x.toml"), "--arms", "bogus", "--out", str(tmp_path),
                 "--main-iterations", "1"]) == 1
    assert "unknown" in capsys.readouterr().err


def test_api_validation(client):
    assert client.get("/health").json() == {"status": "ok"}
    r = client.post("/eval", json={"run_dir": "/nowhere", "pool": "main/SHMP", "games": 0})
    assert r.status_code == 422
    r = client.post("/gc", json={"run_dir": "/nowhere"})
    assert r.status_code == 400 and "no run manifest" in r.json()["detail"]
    r = client.post("/play", json={"a": "scripted", "b": "uniform", "seed": 3})
    assert r.status_code == 200 and r.json()["length"] > 0


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_cli_against_running_server(tmp_path, capsys):
    import uvicorn

    port = _free_port()
    server = uvicorn.Server(uvicorn.Config(create_app(), host="127.0.0.1", port=port, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        for _ in range(100):
            if server.started:
                break
            time.sleep(0.05)
        url = f"http://127.0.0.1:{port}"
        replay = tmp_path / "remote.jsonl"
        assert main(["--server", url, "play", "--a", "scripted", "--b", "uniform", "--seed", "4",
                     "--replay", str(replay)]) == 0
        assert main(["play", "--a", "scripted", "--b", "uniform", "--seed", "4",
                     "--replay", str(tmp_path / "local.jsonl")]) == 0
        assert replay.read_bytes() == (tmp_path / "local.jsonl").read_bytes()
    finally:
        server.should_exit = True
        thread.join(timeout=10)


def test_unreachable_server(capsys):
    assert main(["--server", f"http://127.0.0.1:{_free_port()}", "play", "--a", "scripted", "--b", "scripted",
                 "--seed", "1"]) == 1
    assert "cannot reach" in capsys.readouterr().err
