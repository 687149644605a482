import json
import subprocess
import sys

import pytest

from hner.cli import run_cli
from hner.data import parse_conll, write_conll
from hner.synthetic import make_corpus

SMALL = (
    "encoder.layers=1\nencoder.hidden=16\nencoder.heads=2\nencoder.ffn=32\n"
    "word_layer.heads=2\nepochs=2\nlr=1e-3\n"
)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    write_conll(make_corpus(12, seed=0).sentences, d / "train.conll")
    write_conll(make_corpus(6, seed=1).sentences, d / "dev.conll")
    (d / "cfg").write_text(SMALL)
    code = run_cli(["train", "--config", str(d / "cfg"), "--train", str(d / "train.conll"),
                    "--dev", str(d / "dev.conll"), "--out", str(d / "model.ckpt"),
                    "--log", str(d / "log.jsonl")])
    assert code == 0
    return d


def test_train_log_is_json_lines(workspace):
    lines = [json.loads(x) for x in (workspace / "log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in lines] == [1, 2]
    assert set(lines[0]) == {"epoch", "train_loss", "dev_f1_live", "dev_f1_ema", "seconds"}


def test_train_without_dev(workspace, capsys):
    code = run_cli(["train", "--config", str(workspace / "cfg"), "--train", str(workspace / "train.conll"),
                    "--out", str(workspace / "nodev.ckpt")])
    assert code == 0
    assert len(capsys.readouterr().out.splitlines()) == 2


def test_eval_reports_both_averages(workspace, capsys):
    assert run_cli(["eval", "--model", str(workspace / "model.ckpt"), "--data",
                    str(workspace / "dev.conll"), "--average", "both"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert "micro" in report and "macro" in report and report["params"] == "ema"


def test_eval_single_average_and_text(workspace, capsys):
    assert run_cli(["eval", "--model", str(workspace / "model.ckpt"), "--data",
                    str(workspace / "dev.conll"), "--average", "micro", "--params", "live"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert "micro" in report and "macro" not in report
    assert run_cli(["eval", "--model", str(workspace / "model.ckpt"), "--data",
                    str(workspace / "dev.conll"), "--format", "text"]) == 0
    assert "micro avg" in capsys.readouterr().out


def test_predict_writes_tags_for_every_word(workspace):
    raw = workspace / "raw.txt"
    raw.write_text("\n\n".join("\n".join(s.words) for s in make_corpus(4, seed=5).sentences) + "\n")
    out = workspace / "pred.conll"
    assert run_cli(["predict", "--model", str(workspace / "model.ckpt"), "--input", str(raw),
                    "--output", str(out)]) == 0
    pred = parse_conll(out)
    assert [s.words for s in pred.sentences] == [s.words for s in make_corpus(4, seed=5).sentences]


def test_predict_empty_input(workspace):
    empty = workspace / "empty.txt"
    empty.write_text("")
    assert run_cli(["predict", "--model", str(workspace / "model.ckpt"), "--input", str(empty),
                    "--output", str(workspace / "x")]) == 2


def test_gradcheck(capsys):
    assert run_cli(["gradcheck", "--seed", "7", "--kind", "bilstm"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["max_relative_error"] < 1e-4


def test_stats(workspace, capsys):
    assert run_cli(["stats", "--data", str(workspace / "train.conll")]) == 0
    assert json.loads(capsys.readouterr().out)["splits"][0]["sentences"] == 12
    assert run_cli(["stats", "--data", str(workspace / "train.conll"), "--expect", "tdm"]) == 2


def test_ablate_count_only(workspace, capsys):
    assert run_cli(["ablate", "--mode", "word", "subword", "lstm", "--count-only",
                    "--config", str(workspace / "cfg"), "--train", str(workspace / "train.conll")]) == 0
    arms = json.loads(capsys.readouterr().out)["arms"]
    assert arms["word"]["parameters"] == arms["subword"]["parameters"]
    assert arms["lstm"]["word_layer"] == "bilstm"


@pytest.mark.parametrize("argv", [[], ["train", "--bogus"], ["eval"], ["nosuch"],
                                  ["ablate", "--mode", "both", "--train", "x"]])
def test_usage_errors_exit_1(argv, capsys):
    assert run_cli(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_data_errors_exit_2(workspace, tmp_path):
    assert run_cli(["eval", "--model", str(tmp_path / "missing"), "--data", str(workspace / "dev.conll")]) == 2
    (tmp_path / "bad.cfg").write_text("nope=1\n")
    assert run_cli(["train", "--config", str(tmp_path / "bad.cfg"), "--train", str(workspace / "train.conll"),
                    "--out", str(tmp_path / "m")]) == 2
    (tmp_path / "bad.conll").write_text("a\tI-X\n")
    assert run_cli(["stats", "--data", str(tmp_path / "bad.conll")]) == 2
    (tmp_path / "garbage.ckpt").write_bytes(b"not a checkpoint")
    assert run_cli(["eval", "--model", str(tmp_path / "garbage.ckpt"), "--data", str(workspace / "dev.conll")]) == 2


def test_help_and_module_entry_point():
    assert run_cli(["--help"]) == 0
    proc = subprocess.run([sys.executable, "-m", "hner", "train", "--bogus"], capture_output=True, text=True)
    assert proc.returncode == 1
