import xml.etree.ElementTree as ET

import numpy as np
import pytest

from atkt import cli, model
from atkt.cli import ConfigError, parse_config_text
from atkt.data import generate_synthetic, serialize_triple_line
from atkt.linalg import Rng
from atkt.training import TrainConfig

TINY_CONFIG = """\
# tiny run for tests
skill_dim = 6
resp_dim = 3
hidden_dim = 5
attn_dim = 5
batch_size = 8
max_epochs = 2
patience = none
seed = 11
"""


@pytest.fixture
def data_file(tmp_path):
    ds = generate_synthetic(20, 4, 8, learn_rate=0.3, guess=0.25, slip=0.1, seed=7)
    path = tmp_path / "data.txt"
    path.write_text(serialize_triple_line(ds))
    return path


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.txt"
    path.write_text(TINY_CONFIG)
    return path


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


class TestConfigParsing:
    def test_comments_and_spacing(self):
        cfg = parse_config_text("# hello\n  lr = 0.01  # inline\n\nseed=3\n")
        assert cfg.lr == 0.01
        assert cfg.seed == 3

    def test_unknown_key_is_named(self):
        with pytest.raises(ConfigError, match="learning_rate"):
            parse_config_text("learning_rate = 0.1\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("lr = 0.1\nlr = 0.2\n")

    def test_bad_value_mentions_key_and_line(self):
        with pytest.raises(ConfigError, match="line 1.*batch_size"):
            parse_config_text("batch_size = many\n")

    def test_missing_epsilon_with_positive_beta(self):
        with pytest.raises(ConfigError, match="epsilon"):
            parse_config_text("beta = 0.5\n")

    def test_epsilon_and_beta_accepted(self):
        cfg = parse_config_text("beta = 0.5\nepsilon = 10\n")
        assert cfg.beta == 0.5 and cfg.epsilon == 10.0

    def test_optional_and_bool_values(self):
        cfg = parse_config_text("patience = none\nattention = false\ngrad_clip = 5.0\n")
        assert cfg.patience is None
        assert cfg.attention is False
        assert cfg.grad_clip == 5.0

    def test_not_key_value(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("just some words\n")

    def test_shipped_reference_config_parses(self):
        from pathlib import Path

        path = Path(__file__).resolve().parents[1] / "configs" / "reference.cfg"
        cfg = parse_config_text(path.read_text())
        assert cfg.skill_dim == 256 and cfg.resp_dim == 96
        assert cfg.hidden_dim == 80 and cfg.attn_dim == 80
        assert cfg.batch_size == 24 and cfg.max_seq_len == 500
        assert cfg.epsilon == 10.0 and cfg.beta == 0.2


class TestPrepare:
    def test_stats_line_and_normalized_output(self, tmp_path, capsys):
        raw = tmp_path / "raw.txt"
        raw.write_text("3\n1,2,1\n1,0,1\n1\n5\n1\n2\n0,3\n0,1\n")
        out = tmp_path / "norm.txt"
        assert run_cli("prepare", "--data", raw, "--out", out) == 0
        stdout = capsys.readouterr().out
        assert "2 students, 6 KSs, 5 responses" in stdout
        assert out.read_text() == "3\n1,2,1\n1,0,1\n2\n0,3\n0,1\n"

    def test_segments_long_sequences(self, tmp_path, capsys):
        raw = tmp_path / "raw.txt"
        skills = ",".join(["1"] * 8)
        resps = ",".join(["1", "0"] * 4)
        raw.write_text(f"8\n{skills}\n{resps}\n")
        out = tmp_path / "norm.txt"
        assert run_cli("prepare", "--data", raw, "--out", out, "--max-seq-len", 3) == 0
        assert "segmented into 3 sequences" in capsys.readouterr().out

    def test_only_short_students_reports_zero(self, tmp_path, capsys):
        raw = tmp_path / "raw.txt"
        raw.write_text("1\n5\n1\n")
        out = tmp_path / "norm.txt"
        assert run_cli("prepare", "--data", raw, "--out", out) == 0
        assert "0 students" in capsys.readouterr().out

    def test_empty_file_is_data_error(self, tmp_path):
        raw = tmp_path / "raw.txt"
        raw.write_text("\n")
        assert run_cli("prepare", "--data", raw, "--out", tmp_path / "x.txt") == 2

    def test_parse_error_reports_line_and_exits_2(self, tmp_path, capsys):
        raw = tmp_path / "raw.txt"
        raw.write_text("2\n1,oops\n1,0\n")
        assert run_cli("prepare", "--data", raw, "--out", tmp_path / "x.txt") == 2
        assert "line 2" in capsys.readouterr().err

    def test_missing_file_exits_2(self, tmp_path):
        assert run_cli("prepare", "--data", tmp_path / "nope.txt", "--out", tmp_path / "x.txt") == 2


class TestTrain:
    def test_writes_artifacts_and_is_reproducible(self, tmp_path, data_file, config_file, capsys):
        out1 = tmp_path / "run1"
        out2 = tmp_path / "run2"
        assert run_cli("train", "--config", config_file, "--data", data_file,
                       "--out", out1, "--no-timestamp") == 0
        assert run_cli("train", "--config", config_file, "--data", data_file,
                       "--out", out2, "--no-timestamp") == 0
        for name in ("run.csv", "checkpoint.json", "loss_curve.svg"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        stdout = capsys.readouterr().out
        assert "best_val_auc=" in stdout
        header = (out1 / "run.csv").read_text().splitlines()[0]
        assert header == "epoch,train_loss,val_loss,val_auc,lr"

    def test_loss_curve_svg_is_valid_xml(self, tmp_path, data_file, config_file):
        out = tmp_path / "run"
        run_cli("train", "--config", config_file, "--data", data_file, "--out", out,
                "--no-timestamp")
        root = ET.parse(out / "loss_curve.svg").getroot()
        assert root.tag.endswith("svg")
        polylines = [e for e in root.iter() if e.tag.endswith("polyline")]
        assert len(polylines) == 2  # train and val

    def test_no_attention_flag_recorded(self, tmp_path, data_file, config_file):
        out = tmp_path / "run"
        run_cli("train", "--config", config_file, "--data", data_file, "--out", out,
                "--no-attention", "--no-timestamp")
        _, echo = model.load_checkpoint(out / "checkpoint.json")
        assert echo["attention"] is False

    def test_seed_override(self, tmp_path, data_file, config_file):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        run_cli("train", "--config", config_file, "--data", data_file, "--out", out1,
                "--seed", 99, "--no-timestamp")
        run_cli("train", "--config", config_file, "--data", data_file, "--out", out2,
                "--no-timestamp")
        _, echo1 = model.load_checkpoint(out1 / "checkpoint.json")
        _, echo2 = model.load_checkpoint(out2 / "checkpoint.json")
        assert echo1["seed"] == 99 and echo2["seed"] == 11
        assert (out1 / "run.csv").read_bytes() != (out2 / "run.csv").read_bytes()


class TestEval:
    def make_chance_checkpoint(self, tmp_path, num_skills=4):
        cfg = TrainConfig(skill_dim=6, resp_dim=3, hidden_dim=5, attn_dim=5, seed=11)
        params = model.init_params(num_skills, 6, 3, 5, 5, Rng(0).split("init"))
        params.head_w[...] = 0.0
        params.head_b[...] = 0.0
        path = tmp_path / "chance.json"
        model.save_checkpoint(path, params, dict(cfg.to_dict(), fold=0), timestamp=False)
        return path

    def test_chance_checkpoint_scores_half(self, tmp_path, data_file, capsys):
        ckpt = self.make_chance_checkpoint(tmp_path)
        assert run_cli("eval", "--checkpoint", ckpt, "--data", data_file) == 0
        out = capsys.readouterr().out
        assert "fold 0 test AUC 0.500000" in out

    def test_all_folds_reports_mean_and_std(self, tmp_path, data_file, capsys):
        ckpt = self.make_chance_checkpoint(tmp_path)
        assert run_cli("eval", "--checkpoint", ckpt, "--data", data_file, "--all-folds") == 0
        out = capsys.readouterr().out
        assert "across 5 folds" in out and "±" in out

    def test_prediction_log_export(self, tmp_path, data_file):
        ckpt = self.make_chance_checkpoint(tmp_path)
        log_path = tmp_path / "preds.csv"
        run_cli("eval", "--checkpoint", ckpt, "--data", data_file, "--out", log_path)
        lines = log_path.read_text().splitlines()
        assert lines[0] == "student_id,step,skill,prob,label"
        assert len(lines) > 1

    def test_skill_universe_mismatch_exits_2(self, tmp_path, capsys):
        ckpt = self.make_chance_checkpoint(tmp_path, num_skills=3)
        big = generate_synthetic(10, 9, 6, 0.3, 0.2, 0.1, seed=1)
        data = tmp_path / "big.txt"
        data.write_text(serialize_triple_line(big))
        assert run_cli("eval", "--checkpoint", ckpt, "--data", data) == 2
        assert "skills" in capsys.readouterr().err


class TestSweep:
    def test_grid_csv_and_argmax_line(self, tmp_path, data_file, config_file, capsys):
        out = tmp_path / "sweepdir"
        assert run_cli("sweep", "--config", config_file, "--data", data_file, "--out", out,
                       "--epsilons", "1,2", "--betas", "0,1", "--folds", "0") == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "epsilon,beta=0,beta=1"
        assert len(lines) == 3
        grid = np.array([[float(v) for v in line.split(",")[1:]] for line in lines[1:]])
        assert grid[0, 0] == grid[1, 0]  # beta=0 column constant across epsilon
        assert "best: epsilon=" in capsys.readouterr().out


class TestTrace:
    def overfit_checkpoint(self, tmp_path):
        from atkt.data import FoldSplit, parse_triple_line
        from atkt.training import train

        streak = "12\n" + ",".join(["0"] * 12) + "\n" + ",".join(["1"] * 12) + "\n"
        other = (
            "6\n1,2,1,2,1,2\n0,1,0,1,0,1\n"
            "6\n3,3,2,2,1,1\n1,0,1,0,1,0\n"
            "6\n0,1,2,3,0,1\n0,0,1,1,0,0\n"
            "6\n2,2,3,3,0,0\n1,1,0,0,1,1\n"
            "6\n1,3,1,3,1,3\n0,1,1,0,0,1\n"
        )
        ds = parse_triple_line(streak + other)
        data_path = tmp_path / "toy.txt"
        data_path.write_text(streak + other)
        idx = tuple(range(len(ds.sequences)))
        cfg = TrainConfig(
            skill_dim=8, resp_dim=4, hidden_dim=8, attn_dim=8, batch_size=4,
            max_epochs=200, patience=None, lr=0.02, lr_decay=1.0, lr_decay_every=1000, seed=5,
        )
        result = train(cfg, ds, FoldSplit(0, idx, idx, idx))
        ckpt = tmp_path / "toy.json"
        model.save_checkpoint(ckpt, result.params, dict(cfg.to_dict(), fold=0), timestamp=False)
        return ckpt, data_path

    def test_csv_and_svg_shapes(self, tmp_path, data_file):
        ckpt = TestEval().make_chance_checkpoint(tmp_path)
        out = tmp_path / "trace"
        assert run_cli("trace", "--checkpoint", ckpt, "--data", data_file, "--index", 0,
                       "--skills", "0,1,2", "--out", out) == 0
        lines = (out / "trace.csv").read_text().splitlines()
        assert lines[0] == "step,skill_0,skill_1,skill_2,attempt_skill,attempt_correct"
        assert len(lines) == 9  # header + 8 steps
        root = ET.parse(out / "trace.svg").getroot()
        rects = [e for e in root.iter() if e.tag.endswith("rect")]
        assert len(rects) == 8 * 3  # steps x tracked skills
        assert (out / "mastery_change.csv").exists()
        ET.parse(out / "mastery_change.svg")  # valid XML

    def test_zero_head_gives_flat_half_rows(self, tmp_path, data_file):
        ckpt = TestEval().make_chance_checkpoint(tmp_path)
        out = tmp_path / "trace"
        run_cli("trace", "--checkpoint", ckpt, "--data", data_file, "--skills", "0,1", "--out", out)
        rows = (out / "trace.csv").read_text().splitlines()[1:]
        first = rows[0].split(",")
        assert first[1] == "0.5" and first[2] == "0.5"

    def test_repeated_correct_answers_raise_that_skill(self, tmp_path):
        ckpt, data_path = self.overfit_checkpoint(tmp_path)
        out = tmp_path / "trace"
        assert run_cli("trace", "--checkpoint", ckpt, "--data", data_path, "--index", 0,
                       "--skills", "0", "--out", out) == 0
        rows = (out / "trace.csv").read_text().splitlines()[1:]
        probs = [float(r.split(",")[1]) for r in rows]
        assert probs[-1] > 0.9
        assert probs[-1] > probs[0]
        smooth = np.convolve(probs, np.ones(3) / 3, mode="valid")
        assert np.all(np.diff(smooth) > -0.02)

    def test_memorizing_checkpoint_scores_auc_one_on_train_split(self, tmp_path, capsys):
        ckpt, data_path = self.overfit_checkpoint(tmp_path)
        assert run_cli("eval", "--checkpoint", ckpt, "--data", data_path,
                       "--split", "train", "--fold", 0) == 0
        assert "AUC 1.000000" in capsys.readouterr().out

    def test_unknown_skill_id_exits_2(self, tmp_path, data_file):
        ckpt = TestEval().make_chance_checkpoint(tmp_path)
        code = run_cli("trace", "--checkpoint", ckpt, "--data", data_file,
                       "--skills", "77", "--out", tmp_path / "x")
        assert code == 2

    def test_unknown_student_exits_2(self, tmp_path, data_file):
        ckpt = TestEval().make_chance_checkpoint(tmp_path)
        code = run_cli("trace", "--checkpoint", ckpt, "--data", data_file,
                       "--student", "missing", "--out", tmp_path / "x")
        assert code == 2


class TestExitCodes:
    def test_missing_required_argument_is_usage_error(self):
        assert run_cli("train", "--data", "x") == 1

    def test_unknown_command_is_usage_error(self):
        assert run_cli("frobnicate") == 1

    def test_bad_config_exits_1(self, tmp_path, data_file):
        cfg = tmp_path / "bad.txt"
        cfg.write_text("nonsense_key = 4\n")
        assert run_cli("train", "--config", cfg, "--data", data_file, "--out", tmp_path / "o") == 1

    def test_out_of_range_fold_exits_1(self, tmp_path, data_file, config_file):
        assert run_cli("train", "--config", config_file, "--data", data_file,
                       "--out", tmp_path / "o", "--fold", 9) == 1
