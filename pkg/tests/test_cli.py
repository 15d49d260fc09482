import csv
import io
import json
import re
import subprocess
import sys

import pytest

from conftest import FIXTURES, GOLDEN
from corefrank import cli
from corefrank.corpus_io import parse_conll, read_conll, write_conll
from corefrank.training import load_checkpoint

PERFECT = GOLDEN / "perfect.ckpt"
PERFECT_TEST = FIXTURES / "perfect_test.conll"
TINY_MODEL = ["--model.d_w", "4", "--model.m1", "8", "--model.m2", "6", "--model.m3", "6"]


def run(capsys, *argv):
    status = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return status, out, err


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--synth.out_dir", str(d), "--synth.train_docs", "6",
                     "--synth.dev_docs", "3", "--model.d_w", "4", "--synth.seed", "7"]) == 0
    return d


def train_args(d, ckpt, *extra):
    return ["train", "--data.train", d / "train.conll", "--data.dev", d / "dev.conll",
            "--data.embeddings", d / "embeddings.txt", "--model.checkpoint", ckpt,
            "--train.epochs", "2", "--train.lr", "1e-3", *TINY_MODEL, *extra]


def test_synth_writes_corpus(synth_dir):
    assert len(read_conll(synth_dir / "train.conll", warn_singletons=False)) == 6
    assert len(read_conll(synth_dir / "dev.conll", warn_singletons=False)) == 3
    assert len((synth_dir / "embeddings.txt").read_text().split("\n", 1)[0].split()) == 5


# ---------------------------------------------------------------- train


def test_missing_corpus_exits_2(capsys, tmp_path):
    status, _, err = run(capsys, "train", "--data.train", tmp_path / "nope.conll",
                         "--data.embeddings", tmp_path / "e.txt")
    assert status == 2 and "data.train" in err


def test_bad_value_exits_2(capsys, synth_dir, tmp_path):
    status, _, err = run(capsys, *train_args(synth_dir, tmp_path / "m.ckpt", "--train.epochs", "many"))
    assert status == 2 and "train.epochs" in err
    status, _, err = run(capsys, *train_args(synth_dir, tmp_path / "m.ckpt", "--train.objective", "x"))
    assert status == 2


def test_unknown_key_in_config_file_exits_2(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("train.epochs = 3\nmodel.width = 7\n")
    status, _, err = run(capsys, "train", "--config", cfg)
    assert status == 2 and "model.width" in err and "run.cfg:2" in err


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["train", "--model.width", "7"])
    assert e.value.code == 2
    capsys.readouterr()


def test_train_writes_reloadable_checkpoint_and_is_deterministic(capsys, synth_dir, tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    status, out, _ = run(capsys, *train_args(synth_dir, a))
    assert status == 0 and "best epoch" in out
    assert run(capsys, *train_args(synth_dir, b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert load_checkpoint(a).dims()["m1"] == 8
    rows = list(csv.reader(io.StringIO((tmp_path / "a.ckpt.log.csv").read_text())))
    assert len(rows) == 3
    assert not list(tmp_path.glob("*.tmp*"))


def test_train_plot_writes_figure(capsys, synth_dir, tmp_path):
    ckpt = tmp_path / "m.ckpt"
    assert run(capsys, *train_args(synth_dir, ckpt, "--train.plot", "yes", "--train.epochs", "1"))[0] == 0
    assert (tmp_path / "m.ckpt.log.png").stat().st_size > 0


def test_flags_override_config_file(capsys, synth_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny run\ntrain.epochs = 3\nmodel.m1 = 8  # inline comment\n")
    ckpt = tmp_path / "m.ckpt"
    args = train_args(synth_dir, ckpt)
    args.remove("--train.epochs")
    args.remove("2")
    status, _, _ = run(capsys, *args[:1], "--config", cfg, *args[1:], "--train.epochs", "1")
    assert status == 0
    rows = list(csv.reader(io.StringIO((tmp_path / "m.ckpt.log.csv").read_text())))
    assert len(rows) == 2
    assert load_checkpoint(ckpt).dims()["m1"] == 8


def test_warm_start_with_mismatched_dims_exits_1(capsys, synth_dir, tmp_path):
    ckpt = tmp_path / "m.ckpt"
    assert run(capsys, *train_args(synth_dir, ckpt, "--train.epochs", "1"))[0] == 0
    status, _, err = run(capsys, *train_args(synth_dir, tmp_path / "n.ckpt", "--model.init", ckpt,
                                             "--model.m1", "9"))
    assert status == 1 and err


# ---------------------------------------------------------------- eval


def _table(out):
    rows = {}
    for line in out.splitlines()[1:]:
        parts = line.split()
        nums = [p for p in parts if re.fullmatch(r"-?\d+\.\d\d", p)]
        rows[" ".join(parts[: len(parts) - len(nums)])] = [float(x) for x in nums]
    return rows


def test_eval_perfect_checkpoint(capsys):
    status, out, _ = run(capsys, "eval", "--data.test", PERFECT_TEST, "--model.checkpoint", PERFECT)
    assert status == 0
    lines = out.splitlines()
    assert lines[0].split() == ["metric", "P", "R", "F1"]
    for line in lines[1:4]:
        assert line.split()[1:] == ["100.00"] * 3
    assert lines[4].split() == ["Avg", "F1", "100.00"]


def test_eval_json_matches_table(capsys, synth_dir):
    base = ["eval", "--data.test", synth_dir / "dev.conll", "--model.checkpoint", GOLDEN / "fixture.ckpt"]
    status, table, _ = run(capsys, *base)
    assert status == 0
    status, js, _ = run(capsys, *base, "--json")
    report = json.loads(js)
    rows = _table(table)
    printed_f1 = []
    for name in ("MUC", "B3", "CEAF_phi4"):
        entry = report[name]
        assert rows[name] == [round(100 * entry[f], 2) for f in ("precision", "recall", "f1")]
        printed_f1.append(rows[name][2])
    avg = rows["Avg F1"][0]
    assert avg == round(100 * report["conll_average"], 2)
    assert abs(avg - sum(printed_f1) / 3) <= 0.01


def test_eval_corrupt_checkpoint_exits_1(capsys, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(PERFECT.read_bytes()[:100])
    status, _, err = run(capsys, "eval", "--data.test", PERFECT_TEST, "--model.checkpoint", bad)
    assert status == 1 and "bad.ckpt" in err


def test_eval_missing_checkpoint_exits_2(capsys, tmp_path):
    status, _, _ = run(capsys, "eval", "--data.test", PERFECT_TEST, "--model.checkpoint", tmp_path / "x")
    assert status == 2


def test_eval_checkpoint_vocab_mismatch_with_corpus_is_fine(capsys):
    status, out, _ = run(capsys, "eval", "--data.test", FIXTURES / "minimal.conll",
                         "--model.checkpoint", PERFECT)
    assert status == 0 and "Avg F1" in out


def test_eval_malformed_corpus_exits_1(capsys, tmp_path):
    bad = tmp_path / "bad.conll"
    bad.write_text("#begin document (x); part 000\nnot enough columns\n#end document\n")
    status, _, err = run(capsys, "eval", "--data.test", bad, "--model.checkpoint", PERFECT)
    assert status == 1 and "bad.conll" in err


# ---------------------------------------------------------------- score, predict


def test_score_key_against_itself(capsys):
    status, out, _ = run(capsys, "score", FIXTURES / "nested.conll", FIXTURES / "nested.conll")
    assert status == 0 and out.splitlines()[-1].split()[-1] == "100.00"
    status, out, _ = run(capsys, "score", FIXTURES / "nested.conll", FIXTURES / "nested.conll", "--json")
    assert json.loads(out)["conll_average"] == 1.0


def test_score_missing_file_exits_2(capsys, tmp_path):
    assert run(capsys, "score", FIXTURES / "nested.conll", tmp_path / "none.conll")[0] == 2


def _gold_free(path):
    """Same mentions, each in its own chain."""
    docs = read_conll(path, warn_singletons=False)
    for d in docs:
        d.gold = []
    return write_conll(docs)


def test_predict_on_gold_free_input(capsys, tmp_path):
    blank = tmp_path / "blank.conll"
    blank.write_text(_gold_free(PERFECT_TEST))
    status, out, _ = run(capsys, "predict", "--data.test", blank, "--model.checkpoint", PERFECT)
    assert status == 0
    docs = parse_conll(out, warn_singletons=False)
    assert len(docs) == 4 and all(d.gold for d in docs)
    assert [d.gold for d in docs] == [d.gold for d in read_conll(PERFECT_TEST, warn_singletons=False)]
    target = tmp_path / "pred.conll"
    assert run(capsys, "predict", "--data.test", blank, "--model.checkpoint", PERFECT,
               "--predict.output", target)[0] == 0
    assert target.read_text() == out


def test_predict_then_score_is_perfect(capsys, tmp_path):
    pred = tmp_path / "pred.conll"
    assert run(capsys, "predict", "--data.test", PERFECT_TEST, "--model.checkpoint", PERFECT,
               "--predict.output", pred)[0] == 0
    status, out, _ = run(capsys, "score", PERFECT_TEST, pred, "--json")
    assert status == 0 and json.loads(out)["conll_average"] == 1.0


# ---------------------------------------------------------------- tune, analyze


def test_tune_constant_surrogate(capsys, tmp_path):
    trials = tmp_path / "trials.csv"
    status, out, _ = run(capsys, "tune", "--tune.surrogate", "constant", "--tune.trials", trials)
    assert status == 0
    rows = list(csv.reader(io.StringIO(trials.read_text())))
    assert 1 < len(rows) <= 6
    assert "best alpha_fn=1.0 alpha_fa=1.0" in out


def test_tune_manhattan_surrogate_to_stdout(capsys):
    status, out, err = run(capsys, "tune", "--tune.surrogate", "manhattan:0.8,0.5")
    assert status == 0
    assert out.startswith("trial_index,")
    assert "best alpha_fn=0.8 alpha_fa=0.5" in err


def test_tune_bad_surrogate_exits_2(capsys):
    assert run(capsys, "tune", "--tune.surrogate", "manhattan:x")[0] == 2
    assert run(capsys, "tune", "--tune.surrogate", "oracle")[0] == 2


def test_tune_with_training(capsys, synth_dir, tmp_path):
    status, out, err = run(capsys, "tune", "--data.train", synth_dir / "train.conll",
                           "--data.dev", synth_dir / "dev.conll", "--data.embeddings",
                           synth_dir / "embeddings.txt", "--train.epochs", "1", *TINY_MODEL,
                           "--tune.start_fn", "0.1", "--tune.start_fa", "0.1")
    assert status == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert len(rows) >= 4 and rows[1][1:3] == ["0.1", "0.1"]


def test_analyze_empty_corpus(capsys, tmp_path):
    empty = tmp_path / "empty.conll"
    empty.write_text("")
    out_dir = tmp_path / "an"
    status, out, _ = run(capsys, "analyze", "--data.test", empty, "--model.checkpoint", PERFECT,
                         "--analyze.out_dir", out_dir)
    assert status == 0 and "FN=0 FA=0 WL=0" in out
    for name in ("errors.csv", "costs.csv", "density.csv"):
        lines = (out_dir / name).read_text().splitlines()
        assert len(lines) == 1 and "," in lines[0]
    assert (out_dir / "density.png").exists() and (out_dir / "errors.png").exists()


def test_analyze_fixture_matches_goldens(capsys, tmp_path):
    status, out, _ = run(capsys, "analyze", "--data.test", FIXTURES / "analysis_test.conll",
                         "--model.checkpoint", GOLDEN / "fixture.ckpt", "--analyze.out_dir", tmp_path,
                         "--analyze.figures", "false")
    assert status == 0
    counts = json.loads((GOLDEN / "error_counts.json").read_text())
    assert out.split(" -> ")[0] == " ".join(f"{k}={v}" for k, v in counts.items())
    for name in ("errors.csv", "costs.csv", "density.csv"):
        assert (tmp_path / name).read_text() == (GOLDEN / name).read_text()
    assert not (tmp_path / "density.png").exists()


# ---------------------------------------------------------------- help


def test_help_lists_every_key(capsys):
    for command in ("train", "eval", "tune", "analyze", "predict", "synth"):
        with pytest.raises(SystemExit) as e:
            cli.main([command, "--help"])
        assert e.value.code == 0
        text = capsys.readouterr().out
        for key in cli.KEYS:
            assert f"--{key}" in text


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "corefrank", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for command in cli.COMMANDS:
        assert command in proc.stdout
