import json
import subprocess
import sys

import pytest

from capunc import checkpoint
from capunc.cli import main
from capunc.corpus import normalize_and_label, read_dataset
from capunc.synthetic import generate_documents

TINY = {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "d_cap": 8, "vocab_size": 120,
        "epochs": 2, "lr": 3e-3, "batch_size": 4, "max_positions": 256}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    raw = root / "raw.txt"
    raw.write_text("\n\n".join(generate_documents(120, seed=3)) + "\n", encoding="utf-8")
    assert main(["prepare", str(raw), "--out", str(root / "data")]) == 0
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps({**TINY, "train": str(root / "data/train.tsv"), "valid": str(root / "data/valid.tsv")}))
    assert main(["train", "--config", str(cfg), "--out", str(root / "m.cnpc")]) == 0
    return root


def run(*argv):
    return main([str(a) for a in argv])


def test_prepare_outputs(workdir):
    data = workdir / "data"
    for name in ("train.tsv", "valid.tsv", "test.tsv", "stats.json", "stats.txt"):
        assert (data / name).is_file()
    stats = json.loads((data / "stats.json").read_text())
    assert set(stats) == {"train", "valid", "test"}
    assert sum(s["Sentences"] for s in stats.values()) == 120
    assert read_dataset(data / "test.tsv")


def test_prepare_is_deterministic(workdir, tmp_path):
    assert run("prepare", workdir / "raw.txt", "--out", tmp_path) == 0
    for name in ("train.tsv", "valid.tsv", "test.tsv", "stats.json"):
        assert (tmp_path / name).read_bytes() == (workdir / "data" / name).read_bytes()


def test_train_is_deterministic(workdir, tmp_path, capsys):
    capsys.readouterr()
    assert run("train", "--config", workdir / "tiny.json", "--out", tmp_path / "again.cnpc") == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["sha256"] == checkpoint.checksum(workdir / "m.cnpc")
    assert (tmp_path / "again.cnpc").read_bytes() == (workdir / "m.cnpc").read_bytes()


def test_metrics_log(workdir):
    lines = (workdir / "m.cnpc.metrics.jsonl").read_text().splitlines()
    epochs = [json.loads(x) for x in lines[:-1]]
    final = json.loads(lines[-1])
    assert [e["epoch"] for e in epochs] == [1, 2]
    averages = [e["average_f1"] for e in epochs]
    assert final["selected_epoch"] == 1 + averages.index(max(averages))
    assert final["config"]["mixture"] == 0.15


def test_command_line_beats_config(workdir, tmp_path):
    out = tmp_path / "o.cnpc"
    assert run("train", "--config", workdir / "tiny.json", "--lambda", 0.4, "--epochs", 1, "--out", out) == 0
    final = json.loads((tmp_path / "o.cnpc.metrics.jsonl").read_text().splitlines()[-1])
    assert final["config"]["mixture"] == 0.4 and final["config"]["epochs"] == 1


def test_config_lambda_alias(workdir, tmp_path):
    cfg = json.loads((workdir / "tiny.json").read_text())
    cfg.update({"lambda": 0.3, "epochs": 1})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert run("train", "--config", path, "--out", tmp_path / "o.cnpc") == 0
    final = json.loads((tmp_path / "o.cnpc.metrics.jsonl").read_text().splitlines()[-1])
    assert final["config"]["mixture"] == 0.3


def test_eval(workdir, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run("eval", workdir / "m.cnpc", workdir / "data/test.tsv", "--out", out) == 0
    assert "micro" in capsys.readouterr().out
    report = json.loads(out.read_text())
    assert {"capitalization", "punctuation", "average_f1"} <= set(report)


def test_restore_is_self_consistent(workdir, tmp_path):
    src = tmp_path / "in.txt"
    words = [t.text for t in normalize_and_label(generate_documents(6, seed=9)[0])]
    src.write_text(" ".join(words) + "\n\nchào bạn\n", encoding="utf-8")
    out = tmp_path / "out.txt"
    assert run("restore", workdir / "m.cnpc", src, "--out", out, "--max-len", 7) == 0
    lines = out.read_text(encoding="utf-8").split("\n")
    assert lines[1] == "" and len(lines) == 4
    for original, restored in ((words, lines[0]), (["chào", "bạn"], lines[2])):
        assert [t.text for t in normalize_and_label(restored)] == original


def test_restore_normalises_cased_input(workdir, tmp_path, caplog):
    src = tmp_path / "in.txt"
    src.write_text("Hello, World!\n", encoding="utf-8")
    out = tmp_path / "out.txt"
    assert run("restore", workdir / "m.cnpc", src, "--out", out) == 0
    assert [t.text for t in normalize_and_label(out.read_text())] == ["hello", "world"]
    assert "normalising" in caplog.text


@pytest.mark.parametrize(
    "argv, code",
    [
        (["train"], 1),
        (["train", "--variant", "BOGUS"], 1),
        (["frobnicate"], 1),
        (["eval", "missing.cnpc", "missing.tsv"], 2),
    ],
)
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert set(err) == {"error", "message"}


def test_unknown_config_key(workdir, tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"learning_rate": 1.0, "epochs": "many"}))
    assert run("train", "--config", path, "--train", workdir / "data/train.tsv", "--valid", workdir / "data/valid.tsv") == 1
    msg = json.loads(capsys.readouterr().err.strip())["message"]
    assert "learning_rate" in msg and "epochs" in msg


def test_malformed_dataset_is_data_error(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("word\t9\tO\n", encoding="utf-8")
    assert run("eval", workdir / "m.cnpc", bad) == 2
    assert ":1:" in capsys.readouterr().err


def test_corrupt_checkpoint_is_data_error(workdir, tmp_path):
    broken = tmp_path / "b.cnpc"
    raw = bytearray((workdir / "m.cnpc").read_bytes())
    raw[100] ^= 1
    broken.write_bytes(bytes(raw))
    assert run("eval", broken, workdir / "data/test.tsv") == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_diverging_training_is_numeric_error(workdir, tmp_path, capsys):
    code = run("train", "--config", workdir / "tiny.json", "--lr", 1e12, "--epochs", 2, "--out", tmp_path / "x.cnpc")
    assert code == 3
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "numeric"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "capunc"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr.strip().splitlines()[-1])["error"] == "usage"
