import json
import shutil
import socket

import numpy as np
import pytest
from PIL import Image

from colorfool import toy
from colorfool.cli import FALLBACK_WARNING, main
from colorfool.server import OracleServer


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / "data"
    root.mkdir()
    lines = []
    for i, (rgb, labels) in enumerate(toy.scenes(24, seed=21)):
        Image.fromarray(rgb).save(root / f"s{i:02d}.png")
        Image.fromarray(labels.astype(np.uint8)).save(root / f"s{i:02d}.mask.png")
        lines.append(json.dumps({"image_path": f"s{i:02d}.png", "label_map_path": f"s{i:02d}.mask.png", "class_id": 0}))
    (root / "all.jsonl").write_text("\n".join(lines) + "\n")
    (root / "two.jsonl").write_text("\n".join(lines[:2]) + "\n")
    (root / "nomask.jsonl").write_text(json.dumps({"image_path": "s00.png"}) + "\n")
    weights = root / "template.txt"
    toy.template_classifier().save(weights)
    return root, f"ref:{weights}"


def run(*argv):
    return main([str(a) for a in argv])


def test_attack_writes_pngs_and_records(dataset, tmp_path):
    root, oracle = dataset
    out = tmp_path / "adv"
    assert run("attack", "--manifest", root / "two.jsonl", "--oracle", oracle, "--out", out, "--trials", 300) == 0
    assert sorted(p.name for p in out.iterdir()) == [
        "s00.adv.png", "s00.record.json", "s01.adv.png", "s01.record.json",
    ]
    rec = json.loads((out / "s01.record.json").read_text())
    assert rec["seed"] == 0 ^ 1
    assert rec["success"] and rec["final_class"] != rec["original_class"]
    assert set(rec["reproducibility"]) == {"seed", "config_hash", "codec", "version"}
    with Image.open(out / "s00.adv.png") as im:
        assert im.size == (32, 32)


def test_attack_replay_is_byte_identical(dataset, tmp_path):
    root, oracle = dataset
    for name, workers in (("a", 1), ("b", 3)):
        assert run("attack", "--manifest", root / "all.jsonl", "--oracle", oracle,
                   "--out", tmp_path / name, "--trials", 200, "--seed", 7, "--workers", workers) == 0
    for path in (tmp_path / "a").iterdir():
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()


def test_attack_without_label_map_warns(dataset, tmp_path):
    root, oracle = dataset
    out = tmp_path / "adv"
    assert run("attack", "--manifest", root / "nomask.jsonl", "--oracle", oracle, "--out", out, "--trials", 50) == 0
    rec = json.loads((out / "s00.record.json").read_text())
    assert rec["warnings"] == [FALLBACK_WARNING]


@pytest.mark.parametrize("variant", ["colorfool-r", "semanticadv"])
def test_other_variants(dataset, tmp_path, variant):
    root, oracle = dataset
    out = tmp_path / variant
    assert run("attack", "--manifest", root / "two.jsonl", "--oracle", oracle, "--out", out,
               "--trials", 300, "--variant", variant) == 0
    rec = json.loads((out / "s00.record.json").read_text())
    assert rec["variant"] == variant and rec["warnings"] == []


def test_calibrate_and_evaluate_clean_copies(dataset, tmp_path):
    root, oracle = dataset
    cal = tmp_path / "cal"
    assert run("calibrate", "--manifest", root / "all.jsonl", "--oracle", oracle, "--out", cal,
               "--filters", "median:3") == 0
    doc = json.loads((cal / "thresholds.json").read_text())
    assert list(doc["thresholds"]) == ["median:3"] and doc["n_images"] == 24

    copies = tmp_path / "copies"
    copies.mkdir()
    for p in root.glob("s??.png"):
        shutil.copy(p, copies / f"{p.stem}.adv.png")
    rep = tmp_path / "rep"
    assert run("evaluate", "--manifest", root / "all.jsonl", "--adv-dir", copies, "--thresholds",
               cal / "thresholds.json", "--oracle", oracle, "--out", rep, "--filters", "median:3") == 0
    summary = json.loads((rep / "summary.json").read_text())
    assert summary["success_rate"] == 0.0
    assert summary["undetectability"]["any_filter"] >= 0.95
    assert summary["robustness"]["worst_case_sr"] == summary["robustness"]["per_filter"]["median:3"]
    assert (rep / "report.csv").read_text().count("\n") == 25


def test_evaluate_after_attack_with_transfer(dataset, tmp_path):
    root, oracle = dataset
    adv = tmp_path / "adv"
    run("attack", "--manifest", root / "all.jsonl", "--oracle", oracle, "--out", adv, "--trials", 300)
    other = root / "other.txt"
    from colorfool.oracle import ReferenceClassifier

    ReferenceClassifier(np.random.default_rng(0).normal(size=(4, 24)), name="x").save(other)
    rep = tmp_path / "rep"
    args = ["evaluate", "--manifest", root / "all.jsonl", "--adv-dir", adv, "--oracle", oracle,
            "--out", rep, "--test-oracle", f"ref:{other}", "--filters", "median:3,jpeg:75"]
    assert run(*args) == 0
    summary = json.loads((rep / "summary.json").read_text())
    assert summary["success_rate"] == 1.0
    assert list(summary["transferability"]) == [f"ref:{other}"]
    assert set(summary["robustness"]["per_filter"]) == {"median:3", "jpeg:75"}
    first = (rep / "summary.json").read_bytes(), (rep / "report.csv").read_bytes()
    assert run(*args) == 0
    assert first == ((rep / "summary.json").read_bytes(), (rep / "report.csv").read_bytes())


def test_randomness_command(dataset, tmp_path):
    root, oracle = dataset
    out = tmp_path / "rand"
    assert run("randomness", "--image", root / "s03.png", "--label-map", root / "s03.mask.png",
               "--runs", 12, "--trials", 300, "--oracle", oracle, "--out", out) == 0
    doc = json.loads((out / "randomness.json").read_text())
    assert doc["n_runs"] == 12 and len(doc["runs"]) == 12
    assert set(doc["trials"]) == {"min", "q25", "median", "q75", "max"}
    assert doc["distinct_final_classes"] <= 1


def test_remote_oracle_via_cli(dataset, tmp_path):
    root, _ = dataset
    model = toy.template_classifier()
    out = tmp_path / "adv"
    with OracleServer(model.predict) as server:
        assert run("attack", "--manifest", root / "two.jsonl", "--oracle", f"remote:{server.address}",
                   "--out", out, "--trials", 300, "--workers", 2) == 0
    local = tmp_path / "local"
    weights = root / "template.txt"
    run("attack", "--manifest", root / "two.jsonl", "--oracle", f"ref:{weights}", "--out", local, "--trials", 300)
    for name in ("s00.adv.png", "s01.adv.png"):
        assert (out / name).read_bytes() == (local / name).read_bytes()


def test_exit_codes(dataset, tmp_path):
    root, oracle = dataset
    out = tmp_path / "o"
    assert run("attack", "--manifest", root / "missing.jsonl", "--oracle", oracle, "--out", out) == 2
    assert run("attack", "--manifest", root / "two.jsonl", "--oracle", "bogus", "--out", out) == 1
    assert run("calibrate", "--manifest", root / "two.jsonl", "--oracle", oracle, "--out", out) == 1
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    assert run("attack", "--manifest", root / "two.jsonl", "--oracle", f"remote:127.0.0.1:{port}",
               "--out", out, "--trials", 5) == 3
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("evaluate", "--manifest", root / "two.jsonl", "--adv-dir", empty, "--oracle", oracle,
               "--out", out) == 2
    with pytest.raises(SystemExit) as info:
        main(["attack", "--filters", "median:4"])
    assert info.value.code == 1
