import csv
import json

import pytest

from digraph_flow.cli import EXIT_CONFIG, EXIT_OK, main
from digraph_flow.io import read_graphs

MODEL = {"n_layers": 1, "d_x": 8, "d_e": 4, "d_y": 4, "n_heads": 2, "ff_x": 8, "ff_e": 8, "ff_y": 8,
         "hidden_x": 8, "hidden_e": 8, "hidden_y": 8}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def dataset(tmp_path):
    spec = write_json(tmp_path / "spec.json", {"family": "ER_DAG", "params": {"n_min": 4, "n_max": 6, "p": 0.3},
                                               "counts": {"train": 6, "val": 2, "test": 4}, "seed": 1})
    assert main(["dataset", "--spec", spec, "--out", str(tmp_path / "data")]) == EXIT_OK
    return tmp_path / "data" / "manifest.json"


@pytest.fixture
def checkpoint(tmp_path, dataset):
    cfg = write_json(tmp_path / "run.json", {"manifest": "data/manifest.json", "model": MODEL,
                                             "pe": {"kind": "rrwp", "K_walk": 3},
                                             "train": {"epochs": 2, "batch_size": 3, "lr": 1e-3}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "run")]) == EXIT_OK
    return tmp_path / "run" / "model.ckpt"


class TestDataset:
    def test_summary_and_snapshot(self, tmp_path, capsys):
        spec = write_json(tmp_path / "spec.json", {"family": "ER_DAG", "seed": 0})
        assert main(["dataset", "--spec", spec, "--out", str(tmp_path / "d")]) == EXIT_OK
        out = capsys.readouterr().out
        avg = float(out.split("nodes min/max/avg: ")[1].split()[0].split("/")[2])
        # Reported ER (DAG) average node count: 49.
        assert abs(avg - 49) < 2.5
        assert (tmp_path / "d" / "resolved_config.json").exists()

    def test_overwrite_guard(self, tmp_path, dataset):
        spec = str(tmp_path / "spec.json")
        assert main(["dataset", "--spec", spec, "--out", str(dataset.parent)]) == EXIT_CONFIG
        assert main(["dataset", "--spec", spec, "--out", str(dataset.parent), "--force"]) == EXIT_OK

    def test_invalid_json(self, tmp_path, capsys):
        (tmp_path / "bad.json").write_text('{"family": "ER",\n  oops}')
        assert main(["dataset", "--spec", str(tmp_path / "bad.json"), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
        assert "line 2" in capsys.readouterr().err
        assert not (tmp_path / "x").exists()

    def test_bad_family(self, tmp_path):
        spec = write_json(tmp_path / "s.json", {"family": "TREE"})
        assert main(["dataset", "--spec", spec, "--out", str(tmp_path / "x")]) == EXIT_CONFIG


class TestTrain:
    def test_outputs(self, checkpoint):
        run = checkpoint.parent
        rows = list(csv.DictReader(open(run / "loss_trace.csv")))
        assert [r["epoch"] for r in rows] == ["0", "1"]
        assert all(r["val_loss"] for r in rows)
        assert json.loads((run / "resolved_config.json").read_text())["model"]["d_x"] == 8

    def test_resume_continues(self, tmp_path, checkpoint):
        cfg = str(tmp_path / "run.json")
        out = str(tmp_path / "resumed")
        assert main(["train", "--config", cfg, "--out", out, "--resume", str(checkpoint), "--epochs", "3"]) == EXIT_OK
        rows = list(csv.DictReader(open(tmp_path / "resumed" / "loss_trace.csv")))
        first = list(csv.DictReader(open(checkpoint.parent / "loss_trace.csv")))
        assert [r["epoch"] for r in rows] == ["0", "1", "2"]
        assert rows[:2] == first
        assert int(rows[2]["step"]) == int(first[-1]["step"]) + 2

    def test_missing_manifest(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"manifest": "nowhere/manifest.json"})
        assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == EXIT_CONFIG
        assert not (tmp_path / "r").exists()

    def test_refuses_overwrite(self, tmp_path, checkpoint):
        assert main(["train", "--config", str(tmp_path / "run.json"), "--out", str(checkpoint.parent)]) == EXIT_CONFIG


class TestSample:
    def test_default_count_and_sidecar(self, tmp_path, checkpoint):
        out = tmp_path / "gen.jsonl"
        args = ["sample", "--checkpoint", str(checkpoint), "--out", str(out), "--steps", "3",
                "--distortion", "polydec"]
        assert main(args) == EXIT_OK
        assert len(read_graphs(out)) == 40
        meta = json.loads((tmp_path / "gen.jsonl.meta.json").read_text())
        assert meta["knobs"]["distortion"] == "polydec" and meta["seed"] == 0

    def test_same_seed_identical(self, tmp_path, checkpoint):
        for name in ("a", "b"):
            assert main(["sample", "--checkpoint", str(checkpoint), "--out", str(tmp_path / f"{name}.jsonl"),
                         "--count", "5", "--steps", "4", "--seed", "3"]) == EXIT_OK
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_mle_baseline(self, tmp_path, dataset):
        out = tmp_path / "mle.jsonl"
        assert main(["sample", "--baseline", "mle", "--manifest", str(dataset), "--out", str(out),
                     "--count", "7"]) == EXIT_OK
        assert len(read_graphs(out)) == 7

    def test_bad_checkpoint(self, tmp_path):
        (tmp_path / "junk.ckpt").write_bytes(b"nope")
        assert main(["sample", "--checkpoint", str(tmp_path / "junk.ckpt"), "--out", str(tmp_path / "g")]) == EXIT_CONFIG

    def test_bad_knob(self, tmp_path, checkpoint):
        assert main(["sample", "--checkpoint", str(checkpoint), "--out", str(tmp_path / "g.jsonl"),
                     "--steps", "0"]) == EXIT_CONFIG
        assert not (tmp_path / "g.jsonl").exists()


class TestEval:
    def test_gen_equals_train(self, tmp_path, dataset):
        train = str(dataset.parent / "train.jsonl")
        prefix = str(tmp_path / "rep")
        assert main(["eval", "--gen", train, "--manifest", str(dataset), "--metrics", "mmd,vun",
                     "--out", prefix]) == EXIT_OK
        rep = json.loads((tmp_path / "rep.json").read_text())
        assert rep["ratio"] == pytest.approx(1.0) and rep["novelty"] == 0
        assert (tmp_path / "rep.csv").exists()

    def test_vun_only(self, tmp_path, dataset):
        d = dataset.parent
        assert main(["eval", "--gen", str(d / "test.jsonl"), "--test", str(d / "test.jsonl"),
                     "--train", str(d / "train.jsonl"), "--family", "DAG", "--metrics", "vun",
                     "--out", str(tmp_path / "r")]) == EXIT_OK
        rep = json.loads((tmp_path / "r.json").read_text())
        assert "mmd" not in rep and "ratio" not in rep and "vun" in rep

    def test_missing_file(self, tmp_path, dataset):
        assert main(["eval", "--gen", str(tmp_path / "none.jsonl"), "--manifest", str(dataset),
                     "--out", str(tmp_path / "r")]) == EXIT_CONFIG

    def test_unknown_metric(self, tmp_path, dataset):
        assert main(["eval", "--gen", str(dataset.parent / "test.jsonl"), "--manifest", str(dataset),
                     "--metrics", "orbit", "--out", str(tmp_path / "r")]) == EXIT_CONFIG


class TestPosenc:
    def test_maglap_json(self, tmp_path, dataset, capsys):
        graphs = str(dataset.parent / "train.jsonl")
        assert main(["posenc", "--graphs", graphs, "--kind", "maglap", "--q", "0.1"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["config"]["kind"] == "maglap" and len(payload["graph"]) == 10

    def test_index_out_of_range(self, dataset):
        assert main(["posenc", "--graphs", str(dataset.parent / "train.jsonl"), "--index", "99"]) == EXIT_CONFIG


def test_threads_flag(tmp_path, dataset, monkeypatch):
    args = ["posenc", "--graphs", str(dataset.parent / "train.jsonl"), "--kind", "lap"]
    assert main(["--threads", "1"] + args) == EXIT_OK
    assert main(["--threads", "0"] + args) == EXIT_CONFIG
    monkeypatch.setenv("DIGRAPH_FLOW_THREADS", "two")
    assert main(args) == EXIT_CONFIG
