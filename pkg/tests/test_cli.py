import csv
import io
import json

import pytest

from symmwig.cli import dispatch, load_config


def run(capsys, *argv):
    code = dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def rows_of(text):
    return list(csv.reader(io.StringIO(text)))


def test_classes_example(capsys):
    code, out, _ = run(capsys, "classes", "--class", "DIII", "--n", "2")
    assert code == 0
    rows = rows_of(out)
    assert rows[0] == ["class", "n", "index", "kind", "a", "b", "size", "members", "signs"]
    assert len(rows) == 1 + 2  # header + the two classes of DIII at n=2
    assert {r[3] for r in rows[1:]} == {"C1", "C2"}


def test_patterns_example(capsys):
    code, out, _ = run(
        capsys, "patterns", "--m", "4", "--condition", "forward",
        "--filter", "identical-rows-alpha1",
    )
    assert code == 0
    rows = rows_of(out)
    assert rows[1][3] == "8" and rows[1][4] == "8" and rows[1][5] == "yes"


def test_variance_asymptotic_example(capsys):
    code, out, _ = run(
        capsys, "variance", "--class", "CI", "--m", "4",
        "--mode", "asymptotic", "--sigma", "1",
    )
    assert code == 0
    rows = rows_of(out)
    assert rows[1][3] == "16"
    assert rows[1][5] == "theorem"


def test_variance_exact_needs_n(capsys):
    code, _, err = run(capsys, "variance", "--class", "CI", "--m", "4", "--mode", "exact")
    assert code == 1
    assert "--n" in err


def test_twelve_significant_digits(capsys):
    code, out, _ = run(
        capsys, "variance", "--class", "DIII", "--m", "2",
        "--mode", "exact", "--n", "12",
    )
    assert code == 0
    value = rows_of(out)[1][3]
    assert value == "%.12g" % (8 * 11 / 12)


def test_unknown_flag_exits_1(capsys):
    code, _, err = run(capsys, "classes", "--class", "DIII", "--n", "2", "--frob", "1")
    assert code == 1
    assert "usage" in err


def test_unknown_subcommand_exits_1(capsys):
    assert run(capsys, "frobnicate")[0] == 1


def test_missing_required_flag(capsys):
    code, _, err = run(capsys, "classes", "--class", "DIII")
    assert code == 1
    assert "--n" in err


def test_budget_error_exits_2(capsys):
    code, _, err = run(
        capsys, "oracle", "--class", "DIII", "--n", "6",
        "--m", "4", "--mu", "4", "--budget", "10",
    )
    assert code == 2
    assert "budget" in err


def test_help_exits_0(capsys):
    assert dispatch(["--help"]) == 0
    capsys.readouterr()
    assert dispatch(["simulate", "--help"]) == 0
    capsys.readouterr()


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment line\nclass = CI\nn = 64\n\nm = 4  # trailing comment\n")
    code, out, _ = run(
        capsys, "variance", "--config", str(cfg), "--n", "3", "--mode", "exact"
    )
    assert code == 0
    row = rows_of(out)[1]
    assert row[0] == "CI" and row[1] == "3" and row[2] == "4"  # flag beat file


def test_config_malformed_line_reports_lineno(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("class = CI\nnonsense line\n")
    code, _, err = run(capsys, "classes", "--config", str(cfg), "--n", "2")
    assert code == 1
    assert f"{cfg}:2" in err


def test_config_unknown_key_reports_lineno(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("class = CI\nn = 2\nwibble = 9\n")
    code, _, err = run(capsys, "classes", "--config", str(cfg))
    assert code == 1
    assert "wibble" in err and ":3" in err


def test_config_type_error_reports_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n = lots\n")
    code, _, err = run(capsys, "classes", "--config", str(cfg), "--class", "CI")
    assert code == 1
    assert "n" in err and "integer" in err


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(capsys, "classes", "--config", str(tmp_path / "nope.cfg"),
                       "--class", "CI", "--n", "2")
    assert code == 1


def test_load_config_duplicate_last_wins(tmp_path):
    cfg = tmp_path / "dup.cfg"
    cfg.write_text("n = 2\nn = 5\n")
    assert load_config(str(cfg))["n"] == (2, "5")


def test_out_writes_table_and_manifest(tmp_path, capsys):
    out = tmp_path / "classes.csv"
    code, printed, _ = run(
        capsys, "classes", "--class", "CI", "--n", "2", "--out", str(out)
    )
    assert code == 0
    assert printed == ""  # table went to the file
    rows = rows_of(out.read_text())
    assert len(rows) == 1 + 2 * 1 + 4  # header + n(n-1) + 2n classes
    manifest = json.loads((tmp_path / "classes.csv.manifest.json").read_text())
    assert manifest["schema"] == "symmwig/1"
    assert manifest["subcommand"] == "classes"
    assert manifest["parameters"]["class"] == "CI"
    assert manifest["parameters"]["n"] == 2
    assert "version" in manifest and "timestamp" in manifest


def test_simulate_artifacts(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    code, _, _ = run(
        capsys, "simulate", "--class", "CI", "--n", "6", "--samples", "300",
        "--seed", "4", "--M", "4", "--out", str(out),
    )
    assert code == 0
    rows = rows_of(out.read_text())
    assert rows[0] == ["degree", "var_est", "var_se", "theory", "flag", "z", "k3", "k4"]
    assert len(rows) == 1 + 4
    doc = json.loads((out.parent / "sim.csv.json").read_text())
    assert doc["schema"] == "symmwig/1"
    assert doc["config"]["samples"] == 300
    assert len(doc["report"]["rows"]) == 4
    assert doc["report"]["rows"][0]["var_est"] == 0.0
    manifest = json.loads((out.parent / "sim.csv.manifest.json").read_text())
    assert manifest["seed"] == 4


def test_simulate_csv_deterministic_across_threads(tmp_path, capsys):
    outs = []
    for threads, name in ((1, "a.csv"), (8, "b.csv")):
        path = tmp_path / name
        code, _, _ = run(
            capsys, "simulate", "--class", "DIII", "--n", "8", "--samples", "400",
            "--seed", "12", "--threads", str(threads), "--out", str(path),
        )
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_threads_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SYMMWIG_THREADS", "2")
    out = tmp_path / "env.csv"
    code, _, _ = run(
        capsys, "simulate", "--class", "CI", "--n", "4", "--samples", "200",
        "--out", str(out),
    )
    assert code == 0
    doc = json.loads((out.parent / "env.csv.json").read_text())
    assert doc["config"]["parallelism"] == 2
    monkeypatch.setenv("SYMMWIG_THREADS", "soon")
    assert dispatch(["simulate", "--class", "CI", "--n", "4", "--samples", "200"]) == 1
    capsys.readouterr()


def test_report_table(capsys):
    code, out, _ = run(
        capsys, "report", "--class", "CI", "--n", "6", "--samples", "300",
        "--seed", "4", "--M", "4", "--rel-window", "0.5",
    )
    assert code == 0
    rows = rows_of(out)
    kinds = [r[0] for r in rows[1:]]
    assert kinds.count("var") == 4
    assert kinds.count("cov") == 6


def test_oracle_kinds_agree(capsys):
    results = []
    for kind in ("config", "moment"):
        code, out, _ = run(
            capsys, "oracle", "--class", "CI", "--n", "2", "--m", "2", "--mu", "2",
            "--kind", kind,
        )
        assert code == 0
        results.append(float(rows_of(out)[1][4]))
    assert results[0] == pytest.approx(results[1], abs=1e-12)


def test_traces_runs(capsys):
    code, out, _ = run(
        capsys, "traces", "--class", "DIII", "--n", "4", "--seed", "2", "--M", "5"
    )
    assert code == 0
    rows = rows_of(out)
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4", "5"]


def test_atoms_family_accepted(capsys):
    code, out, _ = run(
        capsys, "variance", "--class", "CI", "--m", "2", "--mode", "exact",
        "--n", "3", "--family", "atoms:-1:0.5,1:0.5",
    )
    assert code == 0
    assert float(rows_of(out)[1][3]) == 0.0  # fourth moment tight, no m=2 noise


def test_bad_atoms_rejected(capsys):
    code, _, err = run(
        capsys, "variance", "--class", "CI", "--m", "2", "--mode", "exact",
        "--n", "3", "--family", "atoms:-1:0.5,1:0.4",
    )
    assert code == 1
    assert "sum" in err
