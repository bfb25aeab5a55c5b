import json
import subprocess
import sys

import numpy as np
import pytest

from earsym import io
from earsym.cli import main

SMALL = ["--n-subjects", "6", "--imgs-per-side", "2", "--dim", "16", "--seed", "5"]


def run(*argv):
    return main([str(a) for a in argv])


def _outputs(directory):
    """Every output file except run.json (which records its own directory)."""
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file() and p.name != "run.json"}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(root), "--with-masks", "--canvas", "96", *SMALL]) == 0
    return root


def test_synth_outputs(dataset):
    names = {p.name for p in dataset.iterdir()}
    assert {"manifest.csv", "embeddings.earb", "index.csv", "ground_truth.csv", "masks",
            "images", "run.json"} <= names
    assert len(list((dataset / "masks").glob("*.pgm"))) == 24
    truth = (dataset / "ground_truth.csv").read_text().splitlines()
    assert truth[0] == "id,subject,side,rotation_deg" and len(truth) == 25
    run_cfg = io.read_json(dataset / "run.json")
    assert run_cfg["args"]["command"] == "synth" and run_cfg["args"]["seed"] == 5


def test_align(dataset, tmp_path):
    assert run("align", "--images", dataset / "images", "--masks", dataset / "masks",
               "--out", tmp_path) == 0
    lines = (tmp_path / "alignment.jsonl").read_text().splitlines()
    assert len(lines) == 24
    rec = json.loads(lines[0])
    assert set(rec) == {"id", "angle_deg", "axis_top", "axis_bot", "crop"}
    img = io.read_pgm(tmp_path / "images" / f"{rec['id']}.pgm")
    assert img.shape == tuple(rec["crop"][2:])


def test_side_geometric_and_conflicts(dataset, tmp_path):
    assert run("side", "--masks", dataset / "masks", "--manifest", dataset / "manifest.csv",
               "--out", tmp_path) == 0
    rows = (tmp_path / "sides.csv").read_text().splitlines()
    assert rows[0] == "id,side,source" and all(r.endswith("METADATA") for r in rows[1:])
    conflicts = json.loads((tmp_path / "conflicts.json").read_text())
    assert len(conflicts) <= 2  # generated masks agree with the manifest
    assert run("side", "--masks", dataset / "masks", "--out", tmp_path / "g") == 0
    rows = (tmp_path / "g" / "sides.csv").read_text().splitlines()[1:]
    hits = sum(r.split(",")[1] == r.split("_")[1] for r in rows)
    assert hits >= 23


def test_embed_toy_and_file(dataset, tmp_path):
    assert run("embed", "--images", dataset / "images", "--dim", 32,
               "--out", tmp_path / "toy") == 0
    store = io.load_embeddings(tmp_path / "toy")
    assert len(store) == 24 and store.dim == 32
    np.testing.assert_allclose(np.linalg.norm(store.vectors, axis=1), 1.0, atol=1e-6)
    assert run("embed", "--images", dataset / "images", "--masks", dataset / "masks", "--align",
               "--dim", 32, "--out", tmp_path / "aligned") == 0
    assert run("embed", "--embedder", "file", "--source-store", dataset,
               "--manifest", dataset / "manifest.csv", "--out", tmp_path / "copy") == 0
    copy = io.load_embeddings(tmp_path / "copy")
    assert copy.vectors.tobytes() == io.load_embeddings(dataset).vectors.tobytes()


def test_pairs_score_metrics(dataset, tmp_path):
    assert run("pairs", "--manifest", dataset / "manifest.csv", "--protocol", "opposite-side",
               "--out", tmp_path / "p") == 0
    summary = json.loads((tmp_path / "p" / "pairs.json").read_text())
    assert summary == {"n_genuine": 24, "n_impostor": 120, "n_pairs": 144,
                       "protocol": "opposite-side"}
    assert run("score", "--pairs", tmp_path / "p" / "pairs.csv", "--store", dataset,
               "--out", tmp_path / "s") == 0
    assert run("metrics", "--scores", tmp_path / "s" / "scores.csv", "--bootstrap", 100,
               "--svg", "--out", tmp_path / "m") == 0
    rep = json.loads((tmp_path / "m" / "metrics.json").read_text())
    assert rep["n_genuine"] == 24 and rep["protocol"] == "opposite-side"
    assert set(rep["ci"]) == {"auc", "dprime", "eer", "fnmr_at_fmr"}
    assert (tmp_path / "m" / "hist.svg").exists()


def test_arrange(dataset, tmp_path):
    manifest = tmp_path / "train.csv"
    text = (dataset / "manifest.csv").read_text().replace(",TEST,", ",TRAIN,")
    manifest.write_text(text)
    assert run("arrange", "--manifest", manifest, "--mode", "split", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "classes.json").read_text()) == {"mode": "split",
                                                                   "num_classes": 12}
    assert run("arrange", "--manifest", manifest, "--out", tmp_path / "single") == 0
    assert json.loads((tmp_path / "single" / "classes.json").read_text())["num_classes"] == 6


def test_identify(dataset, tmp_path):
    rows = (dataset / "manifest.csv").read_text().splitlines()
    header, body = rows[0], rows[1:]
    (tmp_path / "g.csv").write_text("\n".join([header] + [r for r in body if "_00," in r]) + "\n")
    (tmp_path / "p.csv").write_text("\n".join([header] + [r for r in body if "_01," in r]) + "\n")
    assert run("identify", "--store", dataset, "--gallery", tmp_path / "g.csv",
               "--probes", tmp_path / "p.csv", "--k", 3, "--out", tmp_path / "r") == 0
    rank = json.loads((tmp_path / "r" / "rank.json").read_text())
    assert rank["n_gallery"] == 12 and len(rank["curve"]) == 3
    assert rank["curve"] == sorted(rank["curve"])


def test_composition_equals_experiment(tmp_path):
    args = ["--n-subjects", "30", "--imgs-per-side", "3", "--dim", "16", "--seed", "11"]
    assert run("synth", "--out", tmp_path / "d", *args) == 0
    assert run("pairs", "--manifest", tmp_path / "d" / "manifest.csv", "--seed", 11,
               "--out", tmp_path / "p") == 0
    assert run("score", "--pairs", tmp_path / "p" / "pairs.csv", "--store", tmp_path / "d",
               "--seed", 11, "--out", tmp_path / "s") == 0
    assert run("metrics", "--scores", tmp_path / "s" / "scores.csv", "--seed", 11,
               "--bootstrap", 100, "--out", tmp_path / "m") == 0
    assert run("experiment", "symmetry", "--bootstrap", 100, "--out", tmp_path / "e", *args) == 0
    assert _outputs(tmp_path / "m") == _outputs(tmp_path / "e")


@pytest.mark.parametrize("command", ["synth", "pairs", "score", "metrics", "experiment"])
def test_replay_is_byte_identical(dataset, tmp_path, command):
    first = tmp_path / "first"
    if command == "synth":
        argv = ["synth", "--with-masks", "--canvas", "64", *SMALL]
    elif command == "experiment":
        argv = ["experiment", "symmetry", "--svg", *SMALL]
    else:
        run("pairs", "--manifest", dataset / "manifest.csv", "--out", tmp_path / "p")
        run("score", "--pairs", tmp_path / "p" / "pairs.csv", "--store", dataset,
            "--out", tmp_path / "s")
        argv = {"pairs": ["pairs", "--manifest", dataset / "manifest.csv",
                          "--max-impostors", 50, "--seed", 3],
                "score": ["score", "--pairs", tmp_path / "p" / "pairs.csv", "--store", dataset],
                "metrics": ["metrics", "--scores", tmp_path / "s" / "scores.csv",
                            "--bootstrap", 100, "--seed", 9]}[command]
    assert run(*argv, "--out", first) == 0
    assert run("replay", first / "run.json", "--out", tmp_path / "second") == 0
    assert _outputs(first) == _outputs(tmp_path / "second")
    a = io.read_json(first / "run.json")["args"]
    b = io.read_json(tmp_path / "second" / "run.json")["args"]
    a.pop("out"), b.pop("out")
    assert a == b


def test_replay_in_place(tmp_path):
    assert run("experiment", "symmetry", "--out", tmp_path, *SMALL) == 0
    before = _outputs(tmp_path)
    assert run("replay", tmp_path / "run.json") == 0
    assert _outputs(tmp_path) == before


def test_exit_code_input_errors(tmp_path, capsys):
    assert run("pairs", "--manifest", tmp_path / "nope.csv", "--out", tmp_path / "o") == 2
    assert "does not exist" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    bad = tmp_path / "m.csv"
    bad.write_text("id,subject,side,split,pose_deg\na,s,L,TEST,\na,s,R,TEST,\n")
    assert run("pairs", "--manifest", bad, "--out", tmp_path / "o") == 2
    assert "lines 2 and 3" in capsys.readouterr().err
    assert run("synth", "--n-subjects", 1, "--out", tmp_path / "o") == 2


def test_exit_code_computation_error(tmp_path, capsys):
    scores = tmp_path / "s.csv"
    scores.write_text("score,genuine,side_relation\n0.5,1,SAME\n")
    assert run("metrics", "--scores", scores, "--out", tmp_path / "o") == 3
    assert "impostor" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "earsym", "--version"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
