import json

import pytest

from adner.cli import run
from adner.config import format_config, load_config, parse_config_text
from adner.errors import ConfigError

TINY_RUN = [
    "synth.n_source_labeled=60", "synth.n_target_unlabeled=30", "synth.n_test_shifted=20", "synth.seed=1",
    "model.d_model=16", "model.n_heads=2", "model.d_ffn=32", "model.max_len=32",
    "train.lr=0.003", "train.max_epochs=2", "train.seed=1",
]


def _sets(pairs):
    return [arg for p in pairs for arg in ("--set", p)]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run(["data", "synth", "--out-dir", str(out), *_sets(TINY_RUN)]) == 0
    return out


@pytest.fixture(scope="module")
def run_config(synth_dir):
    cfg = synth_dir / "run.conf"
    lines = [p.replace("=", " = ", 1) for p in TINY_RUN]
    lines += [f"data.source = {synth_dir / 'source.conll'}", f"data.target = {synth_dir / 'target.txt'}"]
    cfg.write_text("# tiny run\n" + "\n".join(lines) + "\n")
    return cfg


@pytest.fixture(scope="module")
def trained_dir(run_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run(["train", "--config", str(run_config), "--no-adapt", "--out-dir", str(out)]) == 0
    return out


class TestData:
    def test_synth_outputs(self, synth_dir):
        for name in ("source.conll", "target.txt", "test_in.conll", "test_shift.conll", "config.resolved"):
            assert (synth_dir / name).stat().st_size > 0
        assert "synth.n_source_labeled = 60" in (synth_dir / "config.resolved").read_text()

    def test_validate_clean(self, synth_dir, capsys):
        assert run(["data", "validate", "--in", str(synth_dir / "source.conll")]) == 0
        assert capsys.readouterr().err == ""

    def test_validate_dirty(self, tmp_path, capsys):
        bad = tmp_path / "bad.conll"
        bad.write_text("a O\nb I-PER\n\nc\n")
        assert run(["data", "validate", "--in", str(bad)]) == 2
        assert len(capsys.readouterr().err.strip().splitlines()) == 2

    def test_convert(self, tmp_path):
        src = tmp_path / "in.conll"
        src.write_text("-DOCSTART- O\n\nJean NNP I-PER\nDupont NNP I-PER\nva VB O\n\n\n")
        out = tmp_path / "out.conll"
        assert run(["data", "convert", "--in", str(src), "--out", str(out)]) == 0
        assert out.read_text() == "Jean B-PER\nDupont I-PER\nva O\n\n"
        assert run(["data", "convert", "--in", str(src), "--out", str(out), "--from", "iob2"]) == 2

    def test_stats(self, synth_dir, capsys):
        assert run(["data", "stats", "--in", str(synth_dir / "source.conll")]) == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["sentences"] == 60 and stats["labeled"]
        assert set(stats["classes"]) == {"PER", "LOC", "ORG", "MISC"}
        assert run(["data", "stats", "--in", str(synth_dir / "target.txt"), "--unlabeled"]) == 0

    def test_missing_file(self, tmp_path):
        assert run(["data", "validate", "--in", str(tmp_path / "nope.conll")]) == 2


class TestTrainEvalPredict:
    def test_outputs(self, trained_dir):
        for name in ("config.resolved", "model.ckpt", "history.json", "tag_index.tsv", "test_report.json"):
            assert (trained_dir / name).exists()
        history = json.loads((trained_dir / "history.json").read_text())
        assert set(history[0]) == {"epoch", "l_ner", "l_adv", "l_total", "val_metric", "lr_last"}
        assert all(rec["l_adv"] == 0 for rec in history)
        resolved = (trained_dir / "config.resolved").read_text()
        assert "train.adapt = false" in resolved and "data.source = " in resolved

    def test_eval(self, trained_dir, synth_dir, tmp_path, capsys):
        report = tmp_path / "report.json"
        code = run(["eval", "--checkpoint", str(trained_dir / "model.ckpt"),
                    "--data", str(synth_dir / "test_in.conll"), "--report", str(report)])
        assert code == 0
        data = json.loads(report.read_text())
        assert 0.0 <= data["f1"] <= 1.0
        assert report.with_suffix(".txt").read_text() == capsys.readouterr().out

    @pytest.mark.parametrize("fmt", ["conll", "text"])
    def test_predict(self, trained_dir, synth_dir, tmp_path, fmt):
        if fmt == "text":
            src = tmp_path / "in.txt"
            src.write_text("Zolu vaka pita\nmeno\n")
        else:
            src = synth_dir / "target.txt"
        out = tmp_path / "pred.conll"
        code = run(["predict", "--checkpoint", str(trained_dir / "model.ckpt"), "--in", str(src),
                    "--out", str(out), "--format", fmt])
        assert code == 0
        assert run(["data", "validate", "--in", str(out)]) == 0

    def test_train_deterministic(self, run_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["train", "--config", str(run_config), "--out-dir", str(a)]) == 0
        assert run(["train", "--config", str(run_config), "--out-dir", str(b)]) == 0
        for name in ("history.json", "model.ckpt"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        assert json.loads((a / "history.json").read_text())[0]["l_adv"] > 0

    def test_corrupt_checkpoint(self, trained_dir, synth_dir, tmp_path):
        blob = bytearray((trained_dir / "model.ckpt").read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(bytes(blob))
        assert run(["eval", "--checkpoint", str(bad), "--data", str(synth_dir / "test_in.conll"),
                    "--report", str(tmp_path / "r.json")]) == 2


class TestExitCodes:
    def test_usage(self, capsys):
        assert run([]) == 1
        assert run(["train", "--bogus"]) == 1
        assert run(["data", "convert", "--in", "x"]) == 1
        assert capsys.readouterr().out == ""

    def test_train_without_source(self, tmp_path):
        assert run(["train", "--out-dir", str(tmp_path)]) == 1

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.conf"
        cfg.write_text("train.learning_rate = 0.1\n")
        assert run(["train", "--config", str(cfg)]) == 2
        assert run(["data", "synth", "--out-dir", str(tmp_path), "--set", "synth.bogus=1"]) == 2

    def test_runtime_error(self, synth_dir, tmp_path):
        code = run(["train", "--out-dir", str(tmp_path), "--set", f"data.source={synth_dir / 'source.conll'}",
                    "--set", "model.n_heads=5", "--set", "model.d_model=16"])
        assert code == 3


class TestConfig:
    def test_precedence(self, tmp_path):
        path = tmp_path / "c.conf"
        path.write_text("train.lr = 0.5  # comment\ntrain.adapt = false\nsynth.classes = PER, LOC\n")
        cfg = load_config(path, {"train.lr": "0.25"})
        assert cfg.train.lr == 0.25
        assert cfg.train.adapt is False
        assert cfg.synth.classes == ("PER", "LOC")

    def test_round_trip(self):
        cfg = load_config(None, {"train.alpha": "0", "model.d_model": "32", "data.out_dir": "x"})
        again = load_config(None, parse_config_text(format_config(cfg)))
        assert again == cfg

    def test_errors(self):
        for text in ("train.lr 0.1\n", "model.vocab_size = 10\n", "nope = 1\n"):
            with pytest.raises(ConfigError):
                parse_config_text(text)
        with pytest.raises(ConfigError):
            load_config(None, {"train.max_epochs": "many"})
