import json

import numpy as np
import pytest

from eeg_gmacn.cli import main
from eeg_gmacn.dataset import load_epochs
from eeg_gmacn.model import load_checkpoint
from eeg_gmacn.montage import builtin_64

SMALL = ["--layers", "2", "--gcn-width", "4", "--attention-width", "3", "--head-hidden", "8"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    assert run("graph", "--builtin-64", "--threshold", 20, "--out", "g.csv") == 0
    assert run("synth", "--builtin-64", "--epochs-per-class", 6, "--seed", 7,
               "--out", "e.jsonl") == 0
    return tmp_path


def train_args(out, *extra):
    return ["train", "--epochs-file", "e.jsonl", "--graph-file", "g.csv", "--epochs", 15,
            *SMALL, "--out", out, *extra]


class TestGraph:
    @pytest.mark.parametrize("flag, value, tag", [("--threshold", 20, "threshold{20}"),
                                                  ("--topk", 5, "topk{5}")])
    def test_strategies(self, tmp_path, flag, value, tag):
        assert run("graph", "--builtin-64", flag, value, "--out", tmp_path / "g.csv") == 0
        side = json.loads((tmp_path / "g.json").read_text())
        assert side["tag"] == tag and side["nodes"] == 64
        assert (tmp_path / "g.csv.manifest.json").exists()

    def test_missing_strategy(self, tmp_path, capsys):
        assert run("graph", "--builtin-64", "--out", tmp_path / "g.csv") == 2
        assert "usage error" in capsys.readouterr().err

    def test_both_strategies(self, tmp_path):
        assert run("graph", "--builtin-64", "--threshold", 20, "--topk", 5,
                   "--out", tmp_path / "g.csv") == 2

    def test_bad_flag_value(self, tmp_path):
        assert run("graph", "--builtin-64", "--topk", "many", "--out", tmp_path / "g") == 2

    def test_invalid_parameter_is_runtime_error(self, tmp_path):
        assert run("graph", "--builtin-64", "--threshold", 0, "--out", tmp_path / "g.csv") == 1

    def test_missing_montage_file(self, tmp_path):
        assert run("graph", "--montage", tmp_path / "nope.csv", "--topk", 3,
                   "--out", tmp_path / "g.csv") == 1

    def test_no_command(self):
        assert run() == 2


class TestSynth:
    def test_every_spec_field_is_a_flag(self, tmp_path):
        assert run("synth", "--builtin-64", "--classes", 2, "--epochs-per-class", 3,
                   "--planted", "0:1,2;1:3,4", "--signal-gain", 2.5, "--noise-sigma", 0.5,
                   "--seed", 11, "--features", 5, "--out", tmp_path / "e.jsonl") == 0
        data = load_epochs(tmp_path / "e.jsonl")
        assert len(data) == 6 and data.shape == (64, 5)
        assert data.meta["planted"] == {"0": [1, 2], "1": [3, 4]}
        assert data.meta["signal_gain"] == 2.5 and data.meta["seed"] == 11

    def test_bad_planted_syntax(self, tmp_path):
        assert run("synth", "--planted", "zero", "--out", tmp_path / "e.jsonl") == 2


class TestPipeline:
    def test_train_eval_explain(self, workspace, capsys):
        assert run(*train_args("m.json")) == 0
        assert (workspace / "m.losses.csv").read_text().startswith("epoch,loss,train_accuracy")
        assert len((workspace / "m.losses.csv").read_text().splitlines()) == 17
        assert run("eval", "--checkpoint", "m.json", "--epochs-file", "e.jsonl",
                   "--out", "ev.json") == 0
        assert "Acc" in capsys.readouterr().out
        assert json.loads((workspace / "ev.json").read_text())["count"] == 24
        assert run("explain", "--checkpoint", "m.json", "--epochs-file", "e.jsonl",
                   "--out", "x.json") == 0
        doc = json.loads((workspace / "x.json").read_text())
        assert len(doc["mean"]["electrodes"]) == 64
        assert (workspace / "x.svg").read_text().count('class="electrode"') == 64

    def test_same_seed_identical_checkpoints(self, workspace):
        assert run(*train_args("a.json", "--seed", 7)) == 0
        assert run(*train_args("b.json", "--seed", 7)) == 0
        assert (workspace / "a.json").read_bytes() == (workspace / "b.json").read_bytes()
        assert run(*train_args("c.json", "--seed", 8)) == 0
        assert (workspace / "a.json").read_bytes() != (workspace / "c.json").read_bytes()

    def test_explain_twice_identical(self, workspace):
        assert run(*train_args("m.json")) == 0
        for out in ("x1.json", "x2.json"):
            assert run("explain", "--checkpoint", "m.json", "--epochs-file", "e.jsonl",
                       "--out", out) == 0
        assert (workspace / "x1.json").read_bytes() == (workspace / "x2.json").read_bytes()
        assert (workspace / "x1.svg").read_bytes() == (workspace / "x2.svg").read_bytes()

    def test_ablated_checkpoint_refuses_explain(self, workspace, capsys):
        assert run(*train_args("m.json", "--no-attention")) == 0
        assert load_checkpoint(workspace / "m.json").ablated
        assert json.loads((workspace / "m.json").read_text())["ablated"] is True
        code = run("explain", "--checkpoint", "m.json", "--epochs-file", "e.jsonl",
                   "--out", "x.json")
        assert code == 1
        assert "GWI unavailable for ablated model" in capsys.readouterr().err

    def test_memorization_prints_full_accuracy(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        run("graph", "--builtin-64", "--topk", 3, "--out", "g.csv")
        run("synth", "--classes", 2, "--epochs-per-class", 2, "--out", "e.jsonl")
        assert run(*train_args("m.json"), "--epochs", 300) == 0
        capsys.readouterr()
        assert run("eval", "--checkpoint", "m.json", "--epochs-file", "e.jsonl") == 0
        assert capsys.readouterr().out.splitlines()[1].split()[0] == "1.000"

    def test_montage_mismatch(self, workspace, capsys):
        (workspace / "m.csv").write_text(
            "name,x,y,z\n" + "".join(f"e{i},{i},0,0\n" for i in range(64)))
        assert run("graph", "--montage", "m.csv", "--topk", 3, "--out", "other.csv") == 0
        code = run("train", "--epochs-file", "e.jsonl", "--graph-file", "other.csv",
                   "--out", "m.json")
        assert code == 1 and "montage" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_aborts(self, workspace, capsys):
        code = run(*train_args("m.json", "--learning-rate", 1e300, "--grad-clip", 0))
        assert code == 1 and "non-finite loss" in capsys.readouterr().err


class TestConfigAndManifest:
    def test_config_file_and_flag_precedence(self, workspace):
        (workspace / "cfg.json").write_text(json.dumps(
            {"epochs": 3, "gcn_width": 5, "no_attention": True, "learning_rate": 0.5}))
        assert run(*train_args("m.json", "--config", "cfg.json", "--epochs", 4)) == 0
        model = load_checkpoint(workspace / "m.json")
        # flags win: --gcn-width 4 from SMALL, --epochs 4
        assert model.config.gcn_dims == (4, 4) and model.config.epochs == 4
        assert model.ablated and model.config.learning_rate == 0.5

    def test_unknown_config_key(self, workspace):
        (workspace / "cfg.json").write_text(json.dumps({"warp_factor": 9}))
        assert run(*train_args("m.json", "--config", "cfg.json")) == 2

    def test_manifest_contents(self, workspace):
        assert run(*train_args("m.json", "--seed", 3)) == 0
        man = json.loads((workspace / "m.json.manifest.json").read_text())
        assert man["command"] == "train" and man["seeds"] == [3]
        assert set(man["inputs"]) == {"e.jsonl", "g.csv"}
        assert set(man["outputs"]) == {"m.json", "m.losses.csv"}
        assert man["flags"]["epochs"] == 15 and man["tool"]["version"]
        assert man["timestamp"] == "2023-11-14T22:13:20Z"

    def test_manifest_replays_command(self, workspace):
        assert run(*train_args("m.json", "--seed", 5)) == 0
        first = (workspace / "m.json").read_bytes()
        man = json.loads((workspace / "m.json.manifest.json").read_text())
        assert main(man["argv"][1:]) == 0
        assert (workspace / "m.json").read_bytes() == first


class TestPreprocessAndSweep:
    def test_preprocess_csv(self, tmp_path):
        rng = np.random.default_rng(0)
        names = builtin_64().names[:4]
        data = rng.normal(size=(3000, 4))
        lines = ["sample," + ",".join(names)]
        lines += [f"{i}," + ",".join(repr(float(v)) for v in row) for i, row in enumerate(data)]
        (tmp_path / "s.csv").write_text("\n".join(lines) + "\n")
        (tmp_path / "k.csv").write_text("sample,label\n500,t\n1500,n\n2900,t\n")
        code = run("preprocess", "--signal", tmp_path / "s.csv", "--markers", tmp_path / "k.csv",
                   "--rate", 1000, "--label-map", "n=0,t=1", "--out", tmp_path / "p.jsonl")
        assert code == 0
        es = load_epochs(tmp_path / "p.jsonl")
        assert len(es) == 2 and es.shape == (4, 7) and es.meta["dropped_markers"] == 1

    def test_preprocess_requires_inputs(self, tmp_path):
        assert run("preprocess", "--out", tmp_path / "p.jsonl") == 2

    def test_sweep_table(self, tmp_path):
        code = run("sweep", "--thresholds", 20, "--topks", 3, "--epochs", 2,
                   "--epochs-per-class", 4, "--out", tmp_path / "s.csv")
        assert code == 0
        rows = (tmp_path / "s.csv").read_text().splitlines()
        assert rows[0].startswith("table,strategy,parameter,attention")
        assert len(rows) == 5
