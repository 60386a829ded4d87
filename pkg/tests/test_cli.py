import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from cfbary.cli import main
from cfbary.io import atomic_write, read_table, to_dataset
from cfbary.partition import IngestionError
from cfbary.postprocess import FairModel, fit


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    tr, te = d / "train.csv", d / "test.csv"
    assert main(["synth", "--binary", "--seed", "7", "--n-train", "1000", "--n-test", "4000",
                 "--train-out", str(tr), "--test-out", str(te)]) == 0
    model = d / "model.json"
    assert main(["fit", str(tr), "--out", str(model)]) == 0
    return d, tr, te, model


class TestIO:
    def test_labels_first_appearance(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("v,s,score\n0.1,b,1\n0.2,a,2\n0.3,b,3\n")
        data, _ = to_dataset(read_table(str(p)))
        assert data.labels == ("b", "a") and data.s.tolist() == [0, 1, 0]

    def test_jsonl(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"v": 0.1, "s": "x", "score": 1.5, "y": 2}\n\n{"v": 0.9, "s": "y", "score": -1, "y": 0}\n')
        data, _ = to_dataset(read_table(str(p), jsonl=True))
        assert data.n == 2 and data.y.tolist() == [2.0, 0.0]

    @pytest.mark.parametrize("body, match", [
        ("v,s,score\n0.1,a,1\n1.2,a,1\n", "line 3"),
        ("v,s,score\n0.1,a,oops\n", "line 2.*'score'"),
        ("v,s,score\n0.1,a,nan\n", "not finite"),
        ("v,s,score\n0.1,a\n", "line 2: expected 3"),
        ("v,s\n0.1,a\n", "missing column 'score'"),
        ("", "empty file"),
        ("v,s,score\n", "no data rows"),
        ("v,v,score\n", "duplicate"),
    ])
    def test_schema_errors(self, tmp_path, body, match):
        p = tmp_path / "d.csv"
        p.write_text(body)
        with pytest.raises(IngestionError, match=match):
            to_dataset(read_table(str(p)))

    def test_group_limit(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("v,s,score\n" + "".join(f"0.5,g{i},0\n" for i in range(65)))
        with pytest.raises(IngestionError, match="more than 64"):
            to_dataset(read_table(str(p)))

    def test_atomic_write(self, tmp_path):
        p = tmp_path / "out.txt"
        atomic_write(str(p), "one")
        atomic_write(str(p), "two")
        assert p.read_text() == "two"
        assert os.listdir(tmp_path) == ["out.txt"]


class TestFit:
    def test_summary(self, files, capsys, tmp_path):
        _, tr, _, _ = files
        out = tmp_path / "m.json"
        assert main(["fit", str(tr), "--out", str(out)]) == 0
        s = kv(capsys.readouterr().out)
        assert list(s)[:3] == ["n", "K", "L"]
        for key in ("L", "l_star", "delta_star", "u_hat_bb", "alpha", "m_hat", "lcdf_hat", "degenerate_cells"):
            assert key in s
        assert json.loads(out.read_text())["format"] == "cfbary.FairModel"

    def test_budget_below_floor(self, files, capsys, tmp_path):
        _, tr, _, _ = files
        assert main(["fit", str(tr), "--budget", "0.01", "--out", str(tmp_path / "m.json")]) == 0
        cap = capsys.readouterr()
        s = kv(cap.out)
        assert s["alpha"] == "0" and s["budget_feasible"] == "false" and s["warning"] == "budget_infeasible"
        assert "does not exceed" in cap.err

    def test_alpha_and_budget(self, files, capsys, tmp_path):
        _, tr, _, _ = files
        assert main(["fit", str(tr), "--alpha", "0.5", "--budget", "1", "--out", str(tmp_path / "m.json")]) == 2
        assert "mutually exclusive" in capsys.readouterr().err

    def test_missing_score(self, tmp_path, capsys):
        p = tmp_path / "d.csv"
        p.write_text("v,s\n0.1,a\n")
        assert main(["fit", str(p), "--out", str(tmp_path / "m.json")]) == 2
        assert "'score'" in capsys.readouterr().err
        assert not (tmp_path / "m.json").exists()

    def test_bad_row_number(self, tmp_path, capsys):
        p = tmp_path / "d.csv"
        p.write_text("v,s,score\n0.1,a,1\n0.2,b,1\n-0.5,a,1\n")
        assert main(["fit", str(p), "--L", "1", "--out", str(tmp_path / "m.json")]) == 2
        assert "line 4" in capsys.readouterr().err

    def test_L_one_is_wfr(self, files, tmp_path, capsys):
        _, tr, te, _ = files
        out = tmp_path / "m.json"
        assert main(["fit", str(tr), "--L", "1", "--out", str(out)]) == 0
        assert kv(capsys.readouterr().out)["L"] == "1"
        data, _ = to_dataset(read_table(str(tr)))
        ref = fit(data, L=1)
        m = FairModel.from_json(out.read_text())
        test, _ = to_dataset(read_table(str(te)), labels=m.labels)
        assert np.array_equal(m.predict_dataset(test), ref.predict_dataset(test))

    def test_bad_L_flag(self, files):
        _, tr, _, _ = files
        with pytest.raises(SystemExit) as e:
            main(["fit", str(tr), "--L", "0", "--out", "x.json"])
        assert e.value.code == 2


class TestPredict:
    def test_matches_in_process(self, files, tmp_path):
        _, tr, te, model = files
        out = tmp_path / "p.csv"
        assert main(["predict", str(model), str(te), "--out", str(out)]) == 0
        rows = read_csv(out)
        data, _ = to_dataset(read_table(str(tr)))
        m = fit(data)
        test, _ = to_dataset(read_table(str(te)), labels=m.labels)
        want = m.predict_dataset(test)
        got = np.array([float(r["prediction"]) for r in rows])
        assert np.array_equal(got, want)
        assert all(r["error"] == "" for r in rows)
        assert list(rows[0])[:3] == ["v", "s", "x1"]

    def test_bit_identical_reruns(self, files, tmp_path):
        _, _, te, model = files
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["predict", str(model), str(te), "--out", str(a)])
        main(["predict", str(model), str(te), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_alpha_one_returns_score(self, files, tmp_path):
        _, _, te, model = files
        out = tmp_path / "p.csv"
        assert main(["predict", str(model), str(te), "--alpha", "1", "--out", str(out)]) == 0
        assert all(float(r["prediction"]) == float(r["score"]) for r in read_csv(out))

    def test_unseen_group(self, files, tmp_path, capsys):
        _, _, _, model = files
        p = tmp_path / "d.csv"
        p.write_text("v,s,score\n1.0,0,0.2\n0.5,zz,0.1\n0.0,1,-0.3\n")
        out = tmp_path / "p.csv"
        assert main(["predict", str(model), str(p), "--out", str(out)]) == 3
        rows = read_csv(out)
        assert [r["error"] for r in rows] == ["", "unseen_group", ""]
        assert rows[1]["prediction"] == "" and rows[0]["prediction"] != ""

    def test_bad_model(self, files, tmp_path):
        _, _, te, _ = files
        p = tmp_path / "m.json"
        p.write_text('{"format": "nope"}')
        assert main(["predict", str(p), str(te), "--out", str(tmp_path / "o.csv")]) == 2


class TestEvaluate:
    def test_cf_drop(self, files, tmp_path, capsys):
        _, _, te, model = files
        pred = tmp_path / "p.csv"
        main(["predict", str(model), str(te), "--out", str(pred)])
        capsys.readouterr()
        main(["evaluate", str(te)])
        raw = kv(capsys.readouterr().out)
        out = tmp_path / "r.json"
        assert main(["evaluate", str(pred), "--out", str(out)]) == 0
        post = kv(capsys.readouterr().out)
        assert post["column"] == "prediction" and raw["column"] == "score"
        assert float(post["cf"]) <= 0.01 * float(raw["cf"])
        rep = json.loads(out.read_text())
        assert set(rep) >= {"rmse", "cf", "dp", "windows_used"}

    def test_constant_predictions(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        p = tmp_path / "d.csv"
        lines = [f"{v:.17g},{s},0.25" for v, s in zip(rng.random(2000), rng.integers(0, 2, 2000))]
        p.write_text("v,s,score\n" + "\n".join(lines) + "\n")
        assert main(["evaluate", str(p)]) == 0
        cap = capsys.readouterr()
        s = kv(cap.out)
        assert float(s["cf"]) == 0 and float(s["dp"]) == 0 and s["rmse"] == "none"
        assert "rmse omitted" in cap.err

    def test_no_windows(self, tmp_path, capsys):
        p = tmp_path / "d.csv"
        p.write_text("v,s,score\n0.1,a,1\n0.2,b,2\n")
        assert main(["evaluate", str(p)]) == 4
        assert "increase the window" in capsys.readouterr().err

    def test_wide_window_is_global(self, files, capsys):
        _, _, te, _ = files
        main(["evaluate", str(te), "--grid", "1", "--window", "0.5"])
        s = kv(capsys.readouterr().out)
        assert s["windows_used"] == "1"
        assert float(s["cf"]) == pytest.approx(float(s["dp"]) / 4, rel=0.05)


class TestSweep:
    def test_L_rows(self, files, tmp_path):
        _, tr, te, _ = files
        out = tmp_path / "c.csv"
        assert main(["sweep", str(tr), "--test", str(te), "--mode", "L", "--L-values", "1,2,4,8,16,32",
                     "--out", str(out)]) == 0
        rows = read_csv(out)
        assert len(rows) == 7 and rows[-1]["series"] == "l_star"
        assert [r["x"] for r in rows[:6]] == ["1", "2", "4", "8", "16", "32"]
        assert list(rows[0]) == ["x", "mean", "lo", "hi", "series"]

    def test_alpha_rows(self, files, tmp_path):
        _, tr, te, _ = files
        out = tmp_path / "c.csv"
        assert main(["sweep", str(tr), "--test", str(te), "--mode", "alpha", "--alphas", "0,0.5,1",
                     "--metric", "rmse", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert [r["series"] for r in rows] == ["rmse"] * 3

    def test_synthetic_repeats(self, tmp_path):
        out = tmp_path / "c.csv"
        assert main(["sweep", "--mode", "L", "--L-values", "2,8", "--repeats", "2", "--n-test", "3000",
                     "--out", str(out)]) == 0
        rows = read_csv(out)
        assert [r["series"] for r in rows] == ["cf", "cf", "l_star"]
        assert all(float(r["lo"]) <= float(r["mean"]) <= float(r["hi"]) for r in rows)

    def test_needs_test_file(self, files, tmp_path):
        _, tr, _, _ = files
        assert main(["sweep", str(tr), "--mode", "L", "--out", str(tmp_path / "c.csv")]) == 2

    def test_bad_alpha(self, files, tmp_path):
        _, tr, te, _ = files
        assert main(["sweep", str(tr), "--test", str(te), "--mode", "alpha", "--alphas", "2",
                     "--out", str(tmp_path / "c.csv")]) == 2


class TestSynth:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["synth", "--binary", "--seed", "7", "--n-train", "200", "--train-out", str(a)])
        main(["synth", "--binary", "--seed", "7", "--n-train", "200", "--train-out", str(b)])
        assert a.read_bytes() == b.read_bytes()
        assert read_csv(a)[0].keys() == {"v", "s", "x1", "x2", "y", "score"}

    def test_multigroup(self, tmp_path):
        a = tmp_path / "a.csv"
        assert main(["synth", "--multigroup", "3", "--n-train", "300", "--train-out", str(a)]) == 0
        assert {r["s"] for r in read_csv(a)} == {"0", "1", "2"}


class TestBench:
    ARGS = ["bench", "--repeats", "2", "--n-train", "500", "--n-test", "3000"]

    def test_identical_csv(self, tmp_path, capsys):
        a, b, s = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "s.csv"
        assert main(self.ARGS + ["--out", str(a), "--summary", str(s)]) == 0
        assert main(self.ARGS + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert read_csv(s)[0].keys() == {"method", "metric", "mean", "lo", "hi", "repeats"}
        assert "ours.cf" in kv(capsys.readouterr().out)

    def test_unknown_method(self, tmp_path, capsys):
        assert main(self.ARGS + ["--methods", "base,magic", "--out", str(tmp_path / "a.csv")]) == 2
        assert "magic" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "cfbary.cli", "synth", "--n-train", "50",
                        "--train-out", str(tmp_path / "t.csv")], capture_output=True, text=True)
    assert r.returncode == 0 and "n_train=50" in r.stdout
