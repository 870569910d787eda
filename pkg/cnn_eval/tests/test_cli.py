"""Command line behaviour: artifacts, exit codes, config files."""

import json

import numpy as np
import pytest
import torch

from conftest import make_tiny, run_cli, write_pmud

FAULT_NAMES = ["AG", "BG", "CG", "AB", "BC", "AC", "ABG", "BCG", "ACG", "ABC", "ABCG"]
LINE_NAMES = ["L1", "L2", "L3"]


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Small labelled tensors plus a cwd sandbox."""
    monkeypatch.chdir(tmp_path)
    meta = {"fault_types": FAULT_NAMES, "line_ids": LINE_NAMES}
    x, loc, kind = make_tiny(n=24, width=8, n_loc=3, seed=0)
    write_pmud(tmp_path / "train.pmud", x, loc, kind, n_loc=3, meta=meta)
    x, loc, kind = make_tiny(n=8, width=8, n_loc=3, seed=1)
    write_pmud(tmp_path / "val.pmud", x, loc, kind, n_loc=3, meta=meta)
    x, loc, kind = make_tiny(n=12, width=8, n_loc=3, seed=2)
    write_pmud(tmp_path / "test.pmud", x, loc, kind, n_loc=3, meta=meta)
    return tmp_path


def quick_train(extra=()):
    return run_cli([
        "train", "--train", "train.pmud", "--output", "model.pt",
        "--epochs", "2", "--batch-size", "8", "--seed", "1", "--quiet", *extra,
    ])


class TestTrain:
    def test_writes_checkpoint_and_history(self, workspace, capsys):
        code = run_cli([
            "train", "--train", "train.pmud", "--val", "val.pmud",
            "--output", "model.pt", "--epochs", "2", "--batch-size", "8",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "model: d=8 n_loc=3" in out
        assert "epoch 2/2" in out
        assert (workspace / "model.pt").exists()
        lines = (workspace / "model.history.csv").read_text().splitlines()
        assert lines[0] == "epoch,lr,loss_type,loss_loc,val_type_accuracy,val_loc_accuracy"
        assert len(lines) == 3
        payload = torch.load(workspace / "model.pt", map_location="cpu", weights_only=True)
        assert payload["d"] == 8 and payload["n_loc"] == 3
        assert payload["fault_types"] == FAULT_NAMES

    def test_quiet_suppresses_epoch_lines(self, workspace, capsys):
        assert quick_train() == 0
        out = capsys.readouterr().out
        assert "epoch " not in out
        assert "wrote" in out

    def test_history_without_validation_has_no_val_columns(self, workspace):
        assert quick_train() == 0
        header = (workspace / "model.history.csv").read_text().splitlines()[0]
        assert header == "epoch,lr,loss_type,loss_loc"

    def test_same_seed_reproduces_weights_and_history(self, workspace):
        assert quick_train(["--output", "a.pt"]) == 0
        assert quick_train(["--output", "b.pt"]) == 0
        a = torch.load("a.pt", map_location="cpu", weights_only=True)["state_dict"]
        b = torch.load("b.pt", map_location="cpu", weights_only=True)["state_dict"]
        assert a.keys() == b.keys()
        for key in a:
            assert torch.equal(a[key], b[key]), key
        assert (workspace / "a.history.csv").read_bytes() == \
               (workspace / "b.history.csv").read_bytes()

    def test_missing_tensor_file_exits_2(self, workspace, capsys):
        code = run_cli(["train", "--train", "nope.pmud", "--epochs", "1"])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_incompatible_width_exits_2(self, workspace, capsys):
        x, loc, kind = make_tiny(n=8, width=30, n_loc=3, seed=3)
        write_pmud(workspace / "w30.pmud", x, loc, kind, n_loc=3)
        code = run_cli(["train", "--train", "w30.pmud", "--epochs", "1"])
        assert code == 2
        assert "incompatible d" in capsys.readouterr().err

    def test_non_finite_loss_exits_3(self, workspace, capsys):
        x, loc, kind = make_tiny(n=8, width=8, n_loc=3, seed=4)
        x[:] = np.inf
        write_pmud(workspace / "inf.pmud", x, loc, kind, n_loc=3)
        code = run_cli(["train", "--train", "inf.pmud", "--epochs", "1",
                        "--batch-size", "8", "--quiet"])
        assert code == 3
        assert "training error: non-finite loss at epoch 0" in capsys.readouterr().err

    def test_bad_hyperparameter_exits_2(self, workspace, capsys):
        code = run_cli(["train", "--train", "train.pmud", "--epochs", "0"])
        assert code == 2
        assert "epochs" in capsys.readouterr().err


class TestEvaluate:
    @pytest.fixture
    def trained(self, workspace):
        assert quick_train() == 0
        return workspace

    def test_writes_metrics_and_confusions(self, trained, capsys):
        code = run_cli(["evaluate", "--model", "model.pt", "--test", "test.pmud",
                        "--output-dir", "scores"])
        assert code == 0
        out = capsys.readouterr().out
        assert "fault type: accuracy" in out
        assert "location: accuracy" in out
        scores = trained / "scores"
        metrics = (scores / "metrics.csv").read_text().splitlines()
        assert metrics[0] == "head,accuracy,precision,recall,f1,specificity"
        assert len(metrics) == 3
        type_csv = (scores / "confusion_fault_type.csv").read_text().splitlines()
        assert type_csv[0] == "true\\pred," + ",".join(FAULT_NAMES)
        assert len(type_csv) == 12
        loc_csv = (scores / "confusion_location.csv").read_text().splitlines()
        assert loc_csv[0] == "true\\pred," + ",".join(LINE_NAMES)
        assert len(loc_csv) == 4
        assert (scores / "confusion_fault_type.png").stat().st_size > 1000
        assert (scores / "confusion_location.png").stat().st_size > 1000

    def test_label_names_fall_back_to_checkpoint_then_generic(self, trained):
        # a test tensor without a sidecar still gets named axes because
        # the checkpoint carries the training sidecar's names
        x, loc, kind = make_tiny(n=6, width=8, n_loc=3, seed=5)
        write_pmud(trained / "bare.pmud", x, loc, kind, n_loc=3)
        assert run_cli(["evaluate", "--model", "model.pt", "--test", "bare.pmud",
                        "--output-dir", "s1"]) == 0
        header = (trained / "s1" / "confusion_location.csv").read_text().splitlines()[0]
        assert header == "true\\pred," + ",".join(LINE_NAMES)

        # with no names anywhere the axes are generic
        (trained / "train.pmud.meta.json").unlink()
        assert quick_train(["--output", "plain.pt"]) == 0
        assert run_cli(["evaluate", "--model", "plain.pt", "--test", "bare.pmud",
                        "--output-dir", "s2"]) == 0
        header = (trained / "s2" / "confusion_location.csv").read_text().splitlines()[0]
        assert header == "true\\pred,loc_0,loc_1,loc_2"

    def test_missing_checkpoint_exits_2(self, trained, capsys):
        code = run_cli(["evaluate", "--model", "ghost.pt", "--test", "test.pmud"])
        assert code == 2
        assert "checkpoint not found" in capsys.readouterr().err

    def test_garbage_checkpoint_exits_2(self, trained, capsys):
        (trained / "junk.pt").write_bytes(b"not a checkpoint")
        code = run_cli(["evaluate", "--model", "junk.pt", "--test", "test.pmud"])
        assert code == 2
        assert "not a readable checkpoint" in capsys.readouterr().err

    def test_foreign_torch_file_exits_2(self, trained, capsys):
        torch.save({"format": "something-else"}, trained / "other.pt")
        code = run_cli(["evaluate", "--model", "other.pt", "--test", "test.pmud"])
        assert code == 2
        assert "not a cnn-eval checkpoint" in capsys.readouterr().err

    def test_width_mismatch_exits_2(self, trained, capsys):
        x, loc, kind = make_tiny(n=6, width=16, n_loc=3, seed=6)
        write_pmud(trained / "wide.pmud", x, loc, kind, n_loc=3)
        code = run_cli(["evaluate", "--model", "model.pt", "--test", "wide.pmud"])
        assert code == 2
        assert "does not match the model" in capsys.readouterr().err

    def test_location_labels_beyond_model_exit_2(self, trained, capsys):
        x, loc, kind = make_tiny(n=6, width=8, n_loc=5, seed=7)
        loc[:] = 4
        write_pmud(trained / "far.pmud", x, loc, kind, n_loc=5)
        code = run_cli(["evaluate", "--model", "model.pt", "--test", "far.pmud"])
        assert code == 2
        assert "labels outside" in capsys.readouterr().err


class TestConfigFile:
    def test_config_supplies_defaults_and_required_flags(self, workspace):
        (workspace / "cfg.json").write_text(json.dumps({
            "train": "train.pmud",
            "training": {"epochs": 1, "batch_size": 8, "seed": 3},
            "output": "cfg.pt",
            "quiet": True,
        }))
        assert run_cli(["--config", "cfg.json", "train"]) == 0
        lines = (workspace / "cfg.history.csv").read_text().splitlines()
        assert len(lines) == 2

    def test_explicit_flag_overrides_config(self, workspace):
        (workspace / "cfg.json").write_text(json.dumps({
            "train": "train.pmud", "epochs": 5, "batch_size": 8, "quiet": True,
        }))
        assert run_cli(["--config", "cfg.json", "train", "--epochs", "1",
                        "--output", "o.pt"]) == 0
        lines = (workspace / "o.history.csv").read_text().splitlines()
        assert len(lines) == 2

    def test_unknown_key_exits_2(self, workspace, capsys):
        (workspace / "cfg.json").write_text(json.dumps({"epoch": 5}))
        assert run_cli(["--config", "cfg.json", "train", "--train", "train.pmud"]) == 2
        assert "unknown config key 'epoch'" in capsys.readouterr().err

    def test_section_must_be_object(self, workspace, capsys):
        (workspace / "cfg.json").write_text(json.dumps({"training": 5}))
        assert run_cli(["--config", "cfg.json", "train", "--train", "train.pmud"]) == 2
        assert "must be an object" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, workspace, capsys):
        assert run_cli(["--config", "ghost.json", "train", "--train", "train.pmud"]) == 2
        assert "config file not found" in capsys.readouterr().err

    def test_invalid_json_exits_2(self, workspace, capsys):
        (workspace / "cfg.json").write_text("{nope")
        assert run_cli(["--config", "cfg.json", "train", "--train", "train.pmud"]) == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_config_without_value_exits_2(self, workspace):
        assert run_cli(["train", "--train", "train.pmud", "--config"]) == 2
