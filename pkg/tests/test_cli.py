import csv
import json
import os

import pytest

from nnclr.checkpoint import MAGIC, VERSION
from nnclr.cli import EXIT_CHECKPOINT, EXIT_CONFIG, main, parse_data_spec

TINY_CFG = """
objective = nnclr
queue_size = 32
batch_size = 16
epochs = 2
warmup_epochs = 1
base_lr = 0.1
strict_deterministic = true
encoder.input_dim = 8
encoder.backbone_dims = 16
encoder.feature_dim = 16
encoder.projection_dims = 16,16,8
encoder.prediction_dims = 16,8
augment.mode = full
augment.noise_sigma = 0.1
augment.mask_prob = 0.2
data.kind = blobs
data.num_classes = 4
data.samples_per_class = 16
data.dim = 8
data.std = 0.1
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CFG)
    return str(path)


def read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


class TestPretrain:
    def test_writes_run_artifacts(self, cfg_path, tmp_path, capsys):
        run_dir = str(tmp_path / "run")
        assert main(["pretrain", "--config", cfg_path, "--out", run_dir]) == 0
        assert capsys.readouterr().out.strip() == run_dir
        assert os.path.exists(os.path.join(run_dir, "metrics.jsonl"))
        assert os.path.exists(os.path.join(run_dir, "checkpoint_final.nncq"))
        manifest = json.load(open(os.path.join(run_dir, "manifest.json")))
        assert manifest["end_time"] is not None
        assert manifest["config"]["objective"] == "nnclr"

    def test_replay_bitwise_identical(self, cfg_path, tmp_path):
        dirs = [str(tmp_path / f"run{i}") for i in range(2)]
        for d in dirs:
            assert main(["pretrain", "--config", cfg_path, "--out", d]) == 0
        a = open(os.path.join(dirs[0], "metrics.jsonl"), "rb").read()
        b = open(os.path.join(dirs[1], "metrics.jsonl"), "rb").read()
        assert a == b

    def test_set_override_lands_in_manifest(self, cfg_path, tmp_path):
        run_dir = str(tmp_path / "run")
        assert main(["pretrain", "--config", cfg_path, "--out", run_dir,
                     "--set", "tau=0.2", "--seed", "3"]) == 0
        manifest = json.load(open(os.path.join(run_dir, "manifest.json")))
        assert manifest["config"]["tau"] == "0.2"
        assert manifest["seed"] == 3

    def test_bad_config_exit_2(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text(TINY_CFG + "\nqueue_size = 8\n")  # < batch_size
        assert main(["pretrain", "--config", str(path)]) == EXIT_CONFIG
        assert "queue_size" in capsys.readouterr().err

    def test_unknown_key_exit_2(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text(TINY_CFG + "\nlearning_rate = 1\n")
        assert main(["pretrain", "--config", str(path)]) == EXIT_CONFIG
        assert "learning_rate" in capsys.readouterr().err

    def test_missing_required_key_exit_2(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("objective = nnclr\n")
        assert main(["pretrain", "--config", str(path)]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "required" in err


class TestEval:
    def test_probe_prints_json(self, cfg_path, tmp_path, capsys):
        run_dir = str(tmp_path / "run")
        main(["pretrain", "--config", cfg_path, "--out", run_dir])
        capsys.readouterr()
        rc = main(["eval",
                   "--checkpoint", os.path.join(run_dir, "checkpoint_final.nncq"),
                   "--data", "blobs:num_classes=4,samples_per_class=16,dim=8,std=0.1",
                   "--probe-epochs", "2"])
        assert rc == 0
        result = json.loads(capsys.readouterr().out)
        assert 0.0 <= result["top1"] <= 1.0
        assert result["step"] == 8

    def test_bad_magic_exit_4(self, tmp_path):
        path = tmp_path / "junk.nncq"
        path.write_bytes(b"ZZZZ" + b"\x00" * 16)
        assert main(["eval", "--checkpoint", str(path),
                     "--data", "blobs:"]) == EXIT_CHECKPOINT

    def test_bad_version_exit_4(self, tmp_path):
        path = tmp_path / "future.nncq"
        path.write_bytes(MAGIC + (VERSION + 1).to_bytes(4, "little"))
        assert main(["eval", "--checkpoint", str(path),
                     "--data", "blobs:"]) == EXIT_CHECKPOINT


class TestAblate:
    def test_sweep_writes_csv_and_figure(self, cfg_path, tmp_path, capsys):
        out_dir = str(tmp_path / "sweep")
        rc = main(["ablate", "--config", cfg_path, "--axis", "queue_size",
                   "--values", "16,32", "--out", out_dir])
        assert rc == 0
        with open(os.path.join(out_dir, "ablation.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["axis_value"] for r in rows] == ["16", "32"]
        assert all(r["error"] == "" for r in rows)
        # queue memory scales with capacity * dim * 8 bytes
        assert int(rows[0]["queue_bytes"]) == 16 * 8 * 8
        assert int(rows[1]["queue_bytes"]) == 32 * 8 * 8
        assert os.path.getsize(os.path.join(out_dir, "ablation.png")) > 0

    def test_partial_failure_marked_not_fatal(self, cfg_path, tmp_path):
        out_dir = str(tmp_path / "sweep")
        rc = main(["ablate", "--config", cfg_path, "--axis", "queue_size",
                   "--values", "8,32", "--out", out_dir])  # 8 < batch_size fails
        assert rc == 0
        with open(os.path.join(out_dir, "ablation.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert rows[0]["error"] != "" and rows[0]["top1"] == ""
        assert rows[1]["error"] == ""


class TestReport:
    def test_renders_figures_and_summary(self, cfg_path, tmp_path, capsys):
        run_dir = str(tmp_path / "run")
        main(["pretrain", "--config", cfg_path, "--out", run_dir])
        capsys.readouterr()
        assert main(["report", "--run", run_dir]) == 0
        printed = capsys.readouterr().out.splitlines()
        for name in ("loss.png", "lr.png", "nn_match.png", "summary.csv"):
            assert os.path.join(run_dir, name) in printed
            assert os.path.getsize(os.path.join(run_dir, name)) > 0
        with open(os.path.join(run_dir, "summary.csv")) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "epoch"
        assert len(rows) == 3  # header + 2 epochs


def test_gradcheck_exit_zero(capsys):
    assert main(["gradcheck", "--seeds", "2"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "ok" in out


class TestDataSpec:
    def test_blobs_spec(self):
        dcfg = parse_data_spec("blobs:num_classes=3,std=0.2,labels_enabled=false")
        assert dcfg.num_classes == 3
        assert dcfg.std == 0.2
        assert dcfg.labels_enabled is False

    def test_cifar_spec(self):
        dcfg = parse_data_spec("cifar10:/data/cifar")
        assert dcfg.kind == "cifar10" and dcfg.path == "/data/cifar"

    def test_unknown_kind_rejected(self):
        from nnclr.errors import ConfigError
        with pytest.raises(ConfigError):
            parse_data_spec("imagenet:")
        with pytest.raises(ConfigError):
            parse_data_spec("blobs:radius=3")
