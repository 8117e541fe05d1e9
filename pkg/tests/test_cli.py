import csv
import json

import pytest

from incompfit.cli import main


def run(tmp_path, *args):
    out = tmp_path / args[0]
    code = main([*args, "--out", str(out)])
    return code, out


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def report(out):
    return json.loads((out / "diff_report.json").read_text())


def test_growth_table1(tmp_path):
    code, out = run(tmp_path, "growth-table1")
    rep = report(out)
    assert code == 0 and rep["passed"]
    rows = {(r["data"], r["method"]): r for r in read_rows(out / "results.csv")}
    assert float(rows[("original", "ml")]["mean8"]) == pytest.approx(22.88, abs=0.005)
    assert float(rows[("original", "ml")]["mean10"]) == pytest.approx(23.81, abs=0.005)
    man, cc = rows[("observed", "manova")], rows[("cc", "reml")]
    assert [man[k] for k in ("mean8", "se8", "mean10", "se10")] == [cc[k] for k in ("mean8", "se8", "mean10", "se10")]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "growth-table1" and manifest["seed"] == 0
    assert (out / "table3.csv").exists()


def test_zero_tolerance_fails(tmp_path, capsys):
    code, out = run(tmp_path, "growth-table1", "--tolerance", "0")
    assert code == 1
    rep = report(out)
    assert not rep["passed"] and rep["n_failed"] > 0
    assert "FAIL table1/" in capsys.readouterr().out


def test_spo_tables45(tmp_path):
    code, out = run(tmp_path, "spo-tables45")
    rep = report(out)
    assert code == (0 if rep["passed"] else 1)
    checks = {c["name"]: c for c in rep["checks"]}
    assert checks["tables45/BRD7/prediction/r0c2"]["passed"]
    assert checks["tables45/BRD7/prediction/r0c3"]["passed"]
    assert (out / "table_BRD7_prediction.csv").exists()


def test_spo_table2(tmp_path):
    code, out = run(tmp_path, "spo-table2", "--grid", "21")
    rows = {r["model"]: r for r in read_rows(out / "results.csv")}
    assert float(rows["BRD3"]["loglik"]) == pytest.approx(-2463.10, abs=0.01)
    assert float(rows["BRD3"]["theta"]) == pytest.approx(0.881, abs=0.001)
    for m in ("BRD%d" % i for i in range(1, 10)):
        assert 0.8914 <= float(rows[m]["theta_mar"]) <= 0.8921
    assert float(rows["model12"]["ii_lo"]) == pytest.approx(0.694, abs=0.005)
    assert float(rows["model12"]["ii_hi"]) == pytest.approx(0.905, abs=0.005)
    assert code == (0 if report(out)["passed"] else 1)


def test_growth_influence(tmp_path):
    code, out = run(tmp_path, "growth-influence")
    assert code == 0
    assert set(report(out)["summary"]["ranking"][:4]) == {3, 13, 23, 27}
    rows = read_rows(out / "results.csv")
    assert len(rows) == 27


def test_ppc_is_deterministic(tmp_path):
    _, a = run(tmp_path / "a", "growth-ppc", "--seed", "4")
    _, b = run(tmp_path / "b", "growth-ppc", "--seed", "4")
    for name in ("results.csv", "diff_report.json", "envelope_model1a.csv", "envelope_model1b.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_fit_growth(tmp_path, growth):
    code, out = run(tmp_path, "fit", "--data", "growth-complete", "--model", "model1")
    assert code == 0
    cm = growth.cell_means()
    for r in read_rows(out / "results.csv"):
        assert float(r["mean"]) == pytest.approx(cm[r["sex"]][(8, 10, 12, 14).index(int(r["age"]))], abs=1e-6)


def test_fit_table_file(tmp_path, spo):
    from incompfit.datasets import table_to_csv
    p = tmp_path / "t.csv"
    p.write_text(table_to_csv(spo))
    code, out = run(tmp_path, "fit", "--data", str(p), "--model", "BRD9")
    assert code == 0
    rec = json.loads((out / "fit.json").read_text())
    assert rec["theta"] == pytest.approx(0.867, abs=0.001)
    assert (out / "completion.csv").exists()


def test_fit_errors(tmp_path, capsys):
    code, _ = run(tmp_path, "fit", "--data", "spo", "--model", "model1")
    assert code == 2
    assert "does not apply" in capsys.readouterr().err
    code, _ = run(tmp_path, "fit", "--data", str(tmp_path / "missing.csv"), "--model", "model1")
    assert code == 2
    code, _ = run(tmp_path, "fit", "--data", "growth-trimmed", "--model", "BRD1")
    assert code == 2
