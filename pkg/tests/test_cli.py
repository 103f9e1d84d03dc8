import numpy as np
import pytest

from ukan import tensor as T
from ukan.checkpoint import load_checkpoint, save_checkpoint
from ukan.cli import main
from ukan.config import RunConfig, config_to_text, load_config, parse_config_text
from ukan.errors import ConfigError, FormatError


class TestConfig:
    def test_parse_round_trip(self):
        cfg = RunConfig(task="moons", model="ukan", widths=[2, 4, 2], lr=0.02, seed=9)
        assert parse_config_text(config_to_text(cfg)) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("task = moons\nbogus = 1\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("lr = 0.1\nlr = 0.2\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="lr"):
            parse_config_text("lr = fast\n")

    def test_field_validation(self):
        with pytest.raises(ConfigError, match="task"):
            parse_config_text("task = juggling\n")
        with pytest.raises(ConfigError, match="g_min"):
            parse_config_text("g_min = 2\ng_max = 1\n")

    def test_comments_and_blanks(self):
        cfg = parse_config_text("# a comment\n\nlr = 0.5  # trailing\n")
        assert cfg.lr == 0.5


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path, rng):
        cfg = RunConfig(task="moons", widths=[2, 4, 2])
        tensors = {"a.b": rng.normal(size=(3, 4)), "c": rng.normal(size=7)}
        path = str(tmp_path / "ck.bin")
        save_checkpoint(path, cfg, tensors, {"epoch": 3})
        cfg2, tensors2, meta = load_checkpoint(path)
        assert cfg2 == cfg and meta == {"epoch": 3}
        for k in tensors:
            assert np.array_equal(tensors[k], tensors2[k])

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(str(p))

    def test_truncation(self, tmp_path, rng):
        cfg = RunConfig()
        path = str(tmp_path / "ck.bin")
        save_checkpoint(path, cfg, {"w": rng.normal(size=10)}, {})
        data = open(path, "rb").read()
        (tmp_path / "trunc.bin").write_bytes(data[:-9])
        with pytest.raises(FormatError, match="truncated"):
            load_checkpoint(str(tmp_path / "trunc.bin"))


def _write_cfg(path, **overrides):
    base = dict(task="moons", model="kan", widths="2,4,2", degree=3,
                g_min=-3, g_max=3, grid_size=8, optimizer="sgd", lr=0.01,
                epochs=40, eval_every=20, seed=3, n_train=200, n_val=200)
    base.update(overrides)
    path.write_text("".join(f"{k} = {v}\n" for k, v in base.items()))
    return str(path)


class TestTrainCommand:
    def test_train_and_eval(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path / "run.cfg", out_dir=tmp_path / "out")
        assert main(["train", "--config", cfg]) == 0
        csv = (tmp_path / "out" / "metrics.csv").read_text().strip().splitlines()
        assert csv[0] == "epoch,lr,train_metric,val_metric,seconds"
        assert len(csv) == 3
        last = csv[-1].split(",")
        capsys.readouterr()
        assert main(["eval", "--checkpoint", str(tmp_path / "out" / "checkpoint.bin")]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[-1].split(",")[3] == last[2]   # train metric reproduced
        assert out[-1].split(",")[4] == last[3]   # validation metric reproduced

    def test_zero_epochs(self, tmp_path):
        cfg = _write_cfg(tmp_path / "run.cfg", epochs=0, out_dir=tmp_path / "out")
        assert main(["train", "--config", cfg]) == 0
        csv = (tmp_path / "out" / "metrics.csv").read_text().strip().splitlines()
        assert len(csv) == 1  # header only
        assert (tmp_path / "out" / "checkpoint.bin").exists()

    def test_same_seed_identical_metrics(self, tmp_path):
        cfg1 = _write_cfg(tmp_path / "a.cfg", out_dir=tmp_path / "a")
        cfg2 = _write_cfg(tmp_path / "b.cfg", out_dir=tmp_path / "b")
        assert main(["train", "--config", cfg1]) == 0
        assert main(["train", "--config", cfg2]) == 0

        def metrics(p):
            rows = (p / "metrics.csv").read_text().strip().splitlines()[1:]
            return [r.split(",")[:4] for r in rows]  # drop wall-clock column

        assert metrics(tmp_path / "a") == metrics(tmp_path / "b")

    def test_invalid_config_exit_2(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("task = juggling\n")
        assert main(["train", "--config", str(p)]) == 2

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "none.cfg")]) == 2

    def test_diverged_exit_3(self, tmp_path):
        cfg = _write_cfg(tmp_path / "run.cfg", optimizer="sgd", lr=1e12,
                         epochs=400, task="regression_II", widths="2,5,1",
                         n_train=64, n_val=64, out_dir=tmp_path / "out")
        code = main(["train", "--config", cfg])
        assert code == 3
        assert (tmp_path / "out" / "checkpoint.bin").exists()

    def test_checkpoint_forward_bitwise(self, tmp_path, rng):
        from ukan.checkpoint import load_checkpoint
        from ukan.train import build_model_from_config
        cfg_path = _write_cfg(tmp_path / "run.cfg", epochs=10, out_dir=tmp_path / "out")
        assert main(["train", "--config", cfg_path]) == 0
        cfg, tensors, _ = load_checkpoint(str(tmp_path / "out" / "checkpoint.bin"))
        m1 = build_model_from_config(cfg)
        m2 = build_model_from_config(cfg)
        for name, p in m1.parameters().items():
            p.values[...] = tensors[name]
        for name, p in m2.parameters().items():
            p.values[...] = tensors[name]
        probe = rng.uniform(-2, 2, (17, 2))
        assert np.array_equal(m1(T.as_tensor(probe)).values, m2(T.as_tensor(probe)).values)


class TestEvalCommand:
    def test_corrupted_shape_exit_4(self, tmp_path):
        from ukan.config import RunConfig
        cfg = RunConfig(task="moons", model="kan", widths=[2, 4, 2], n_train=100, n_val=100)
        # wrong tensor shape relative to the model the config describes
        save_checkpoint(str(tmp_path / "ck.bin"), cfg,
                        {"layer0.coeffs": np.zeros((1, 1, 1))}, {})
        assert main(["eval", "--checkpoint", str(tmp_path / "ck.bin")]) == 4

    def test_missing_checkpoint_exit_4(self, tmp_path):
        assert main(["eval", "--checkpoint", str(tmp_path / "nope.bin")]) == 4


class TestBenchCommand:
    def test_csv_schema(self, capsys):
        assert main(["bench", "--orders", "2,3", "--grids", "8,16",
                     "--batch", "64", "--reps", "2"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        header = "impl,k,G,d_in,d_out,batch,forward_s,backward_s,total_s,peak_mem_bytes"
        assert lines[0] == header
        assert len(lines) == 1 + 2 * 2 * 2
        for line in lines[1:]:
            assert len(line.split(",")) == len(header.split(","))
