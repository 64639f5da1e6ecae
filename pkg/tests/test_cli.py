import csv
import subprocess
import sys

import pytest

from natforest import __version__
from natforest.cli import read_config, run
from natforest.synth import read_truth


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Small synthetic corpus pushed through ingest, features, sample and labels."""
    d = tmp_path_factory.mktemp("cli")
    assert run(["synth", "--preset", "strong", "--n-users", "500", "--out", str(d / "raw")]) == 0
    assert run(["ingest", "--tweets", str(d / "raw/tweets.csv"), "--users", str(d / "raw/users.csv"),
                "--referenced", str(d / "raw/referenced.csv"), "--out", str(d / "corpus")]) == 0
    assert run(["features", "--corpus", str(d / "corpus"), "--out", str(d / "feats.csv")]) == 0
    assert run(["sample", "--in", str(d / "feats.csv"), "--out", str(d / "sample.csv")]) == 0
    truth = read_truth(d / "raw/truth.csv")
    with open(d / "sample.csv", newline="") as fh:
        ids = [int(r["author_id"]) for r in csv.DictReader(fh)]
    with open(d / "labels.csv", "w") as fh:
        fh.write("author_id,label\n")
        for a in ids:
            fh.write(f"{a},{truth[a]}\n")
    return d


def test_version_and_help(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out
    with pytest.raises(SystemExit) as exc:
        run(["search", "--help"])
    assert exc.value.code == 0


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["features", "--corpus", "x"],
                                  ["search", "--labels", "l.csv"], ["sample", "--n", "ten"]])
def test_usage_errors_exit_1(argv, capsys):
    assert run(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_sample_size_default(pipeline):
    with open(pipeline / "sample.csv") as fh:
        assert sum(1 for _ in fh) - 1 == 385


def test_corrupt_features_exit_2(pipeline, tmp_path, capsys):
    lines = (pipeline / "feats.csv").read_text().splitlines()
    cells = lines[3].split(",")
    cells[3] = "-4"
    lines[3] = ",".join(cells)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    code = run(["search", "--labels", str(pipeline / "labels.csv"), "--features", str(bad),
                "--out", str(tmp_path / "r.csv")])
    assert code == 2
    assert "line 4" in capsys.readouterr().err


def test_missing_input_file_exit_2(tmp_path):
    assert run(["report-sources", "--tweets", str(tmp_path / "nope.csv")]) == 2


def test_search_select_classify(pipeline, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    base = ["search", "--labels", str(pipeline / "labels.csv"), "--features", str(pipeline / "feats.csv"),
            "--cells", "0:300", "--workers", "1", "--quiet"]
    assert run(base) == 0  # --out defaults to results.csv
    first = (tmp_path / "results.csv").read_bytes()
    assert run(base + ["--out", "again.csv"]) == 0
    assert (tmp_path / "again.csv").read_bytes() == first
    assert run(["select", "--results", "results.csv", "--fp-max", "5", "--features",
                str(pipeline / "feats.csv"), "--labels", str(pipeline / "labels.csv"),
                "--model-out", "m.json"]) == 0
    assert run(["classify", "--model", "m.json", "--features", str(pipeline / "feats.csv"),
                "--out", "c.csv", "--class1-out", "c1.csv"]) == 0
    c1 = (tmp_path / "c1.csv").read_text().splitlines()
    assert len(c1) > 1
    assert run(["classify", "--model", "m.json", "--features", str(pipeline / "feats.csv"),
                "--out", "c2.csv"]) == 0
    assert (tmp_path / "c2.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()


def test_select_with_nothing_passing(pipeline, tmp_path, capsys):
    res = tmp_path / "r.csv"
    res.write_text("num,TN,FP,FN,TP,removed_cols,criterion,class_weight,n_estimators,cv_score,degenerate\n"
                   "5,10,9,3,55,,gini,none,10,,0\n")
    assert run(["select", "--results", str(res)]) == 0
    assert "--fp-max" in capsys.readouterr().err


def test_config_file_and_flag_precedence(pipeline, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# sampling\nin = {pipeline / 'feats.csv'}\nn = 20\nseed = 7\nout = {tmp_path / 'a.csv'}\n")
    assert run(["sample", "--config", str(cfg)]) == 0
    assert run(["sample", "--config", str(cfg), "--n", "30", "--out", str(tmp_path / "b.csv")]) == 0
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 21
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 31
    cfg.write_text("colour = blue\n")
    assert run(["sample", "--config", str(cfg)]) == 1


def test_read_config_rejects_garbage(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("seed = 5\nfp-max=2\n")
    assert read_config(p) == {"seed": "5", "fp_max": "2"}
    p.write_text("just words\n")
    with pytest.raises(Exception):
        read_config(p)


def test_adjudicate_tie_exits_3(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("author_id,annotator,label,noted_at\n1,a,1,2021-01-01T00:00:00Z\n2,a,0,2021-01-01T00:00:00Z\n")
    b.write_text("author_id,annotator,label,noted_at\n1,b,0,2021-01-01T00:00:00Z\n2,b,0,2021-01-01T00:00:00Z\n")
    assert run(["adjudicate", "--in", str(a), str(b), "--out", str(tmp_path / "o.csv")]) == 3


def test_acquire_unreachable_endpoint_exits_3(tmp_path):
    cfg = tmp_path / "acq.cfg"
    cfg.write_text("endpoint = http://127.0.0.1:9\ncountry = PA\nstart-time = 2021-01-01\n"
                   "end-time = 2021-02-01\nwindow = 900\n")
    code = run(["acquire", "--config", str(cfg), "--out", str(tmp_path / "t.csv"), "--retries", "0"])
    assert code == 3


def test_report_prints_delta(capsys):
    assert run(["report", "--before", "A=306/385", "B=296/385", "C=292/385",
                "--after", "A=362/385", "B=351/385", "C=345/385"]) == 0
    assert "+14.20" in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "natforest", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
