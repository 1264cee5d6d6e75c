import csv
import json

import pytest

from app.cli import main
from app.config import settings
from app.db.database import SessionLocal
from app.models.db_models import ExperimentRun


@pytest.fixture(autouse=True)
def restore_settings(monkeypatch):
    # main() applies --tol/--cap/--threads to the shared settings object
    for name in ("TOL", "MAX_ITER", "GARSIDE_CAP", "THREADS"):
        monkeypatch.setattr(settings, name, getattr(settings, name))


@pytest.fixture
def a2_tilde_file(tmp_path, a2_tilde_spec):
    path = tmp_path / "a2_tilde.monoid"
    path.write_text(a2_tilde_spec, encoding="utf-8")
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_analyze_braid3(capsys):
    code, out, err = run(capsys, "analyze", "--family", "braid:3")
    assert code == 0
    lines = out.splitlines()
    assert "|S|=6" in lines
    assert "p0=0.618033988749895" in lines
    assert "spherical=true" in lines
    assert "perron_case=B K=3" in lines
    assert "axioms=pass" in lines
    assert err.startswith("config {")


def test_analyze_free_monoid(capsys):
    code, out, _ = run(capsys, "analyze", "--family", "free:2")
    assert code == 0
    assert "p0=0.5" in out.splitlines()
    assert "delta=none" in out.splitlines()


def test_analyze_spec_file(capsys, a2_tilde_file):
    code, out, _ = run(capsys, "analyze", a2_tilde_file)
    assert code == 0
    lines = out.splitlines()
    assert "monoid=a2_tilde" in lines
    assert "|S|=16" in lines
    assert "fc=false" in lines
    assert "charney_strongly_connected=true" in lines


def test_analyze_json(capsys):
    code, out, _ = run(capsys, "analyze", "--family", "dual-a:3", "--json")
    assert code == 0
    report = json.loads(out)
    assert report["simples"] == 5
    assert report["p0"] == pytest.approx(0.5)
    assert report["axioms"]["passed"]


def test_normal_form(capsys, a2_tilde_file):
    code, out, _ = run(capsys, "normal-form", a2_tilde_file, "--word", "abc")
    assert code == 0
    assert out.splitlines() == ["ab | c", "height=2", "length=3"]
    _, out, _ = run(capsys, "normal-form", a2_tilde_file, "--word", "abcb")
    assert out.splitlines()[0] == "abcb"
    _, out, _ = run(capsys, "normal-form", a2_tilde_file, "--word", "e")
    assert out.splitlines() == ["e", "height=0", "length=0"]


def test_normal_form_json(capsys):
    code, out, _ = run(capsys, "normal-form", "--family", "braid:3", "--word", "abaaba", "--json")
    assert code == 0
    assert json.loads(out)["blocks"] == ["aba", "aba"]


def test_garside_dump(capsys):
    code, out, _ = run(capsys, "garside", "--family", "braid:3", "--dump")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "|S|=6"
    assert "delta=aba" in lines
    assert "5 aba 3" in lines
    assert "arrows" in lines
    assert "5 5" in lines[lines.index("arrows"):]


def test_garside_matrix(capsys):
    code, out, _ = run(capsys, "garside", "--family", "braid:3", "--dump-matrix")
    assert code == 0
    assert out.splitlines()[0] == "# states 9"


def test_mobius(capsys):
    code, out, _ = run(capsys, "mobius", "--family", "braid:3", "--k-max", "6")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "mu=1 - 2·T + T^3"
    assert "coefficients=1,-2,0,1" in lines
    assert "mu_over_simples=1 - 2·T + T^3" in lines
    assert lines[lines.index("k,lambda_k") + 1:] == ["0,1", "1,2", "2,4", "3,7", "4,12", "5,20", "6,33"]


def test_mobius_weighted(capsys):
    code, out, _ = run(capsys, "mobius", "--family", "free:2", "--valuation", "a=1/3,b=1/6", "--k-max", "2")
    assert code == 0
    assert "coefficients=1,-1/2" in out.splitlines()
    assert out.splitlines()[-1] == "2,1/4"


def test_measure(capsys):
    code, out, _ = run(capsys, "measure", "--family", "braid:3", "--prefix", "2", "--count", "5", "--seed", "3")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 5
    assert all(" | " in line for line in lines)


def test_sample_is_reproducible(capsys):
    argv = ("sample", "--family", "braid:4", "--length", "12", "--count", "20", "--seed", "5")
    code, first, _ = run(capsys, *argv, "--threads", "1")
    assert code == 0
    _, second, _ = run(capsys, *argv, "--threads", "3")
    assert first == second
    assert len(first.splitlines()) == 20


def test_stats_report_and_csv(capsys, tmp_path):
    out_path = tmp_path / "braid3.csv"
    argv = ("stats", "--family", "braid:3", "--length", "20", "--count", "50", "--seed", "2")
    code, out, _ = run(capsys, *argv, "--out", str(out_path))
    assert code == 0
    lines = out.splitlines()
    assert "k=20" in lines
    assert "count=50" in lines
    assert any(line.startswith("delta_method.target_variance=") for line in lines)
    assert any(line.startswith("caveat: ") for line in lines)
    assert not any("runtime" in line for line in lines)

    with out_path.open(encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["sample_id", "length", "height", "stat_value", "normalized_value", "delta_power"]
    assert len(rows) == 51
    assert all(row[1] == "20" for row in rows[1:])
    sidecar = out_path.with_suffix(".jsonl").read_text(encoding="utf-8").splitlines()
    assert json.loads(sidecar[0])["config"]["seed"] == 2
    assert json.loads(sidecar[1])["report"]["count"] == 50
    assert "runtime_seconds" not in json.loads(sidecar[1])["report"]

    _, again, _ = run(capsys, *argv)
    assert again == out
    first_csv = out_path.read_bytes()
    first_sidecar = out_path.with_suffix(".jsonl").read_bytes()
    run(capsys, *argv, "--out", str(out_path))
    assert out_path.read_bytes() == first_csv
    assert out_path.with_suffix(".jsonl").read_bytes() == first_sidecar


def test_stats_json_has_no_runtime(capsys):
    code, out, _ = run(capsys, "stats", "--family", "free:2", "--length", "10", "--count", "20", "--json")
    assert code == 0
    response = json.loads(out)
    assert "runtime_seconds" not in response["report"]
    assert response["report"]["degenerate"]
    assert response["report"]["s2"] == 0.0


def test_stats_record(capsys):
    code, _, _ = run(capsys, "stats", "--family", "braid:3", "--length", "10", "--count", "10", "--seed", "77", "--record")
    assert code == 0
    code, _, _ = run(capsys, "stats", "--family", "heap:a-b", "--length", "10", "--count", "10", "--seed", "78", "--record")
    assert code == 7
    db = SessionLocal()
    try:
        done = db.query(ExperimentRun).filter(ExperimentRun.seed == 77).one()
        failed = db.query(ExperimentRun).filter(ExperimentRun.seed == 78).one()
    finally:
        db.close()
    assert done.status == "completed"
    assert json.loads(done.report_json)["k"] == 10
    assert failed.status == "failed"
    assert failed.error_message


@pytest.mark.parametrize(
    "argv, code",
    [
        (("analyze",), 3),
        (("analyze", "--family", "cube:3"), 3),
        (("normal-form", "--family", "braid:3", "--word", "abz"), 3),
        (("stats", "--family", "braid:3", "--length", "5", "--count", "5", "--stat", "width"), 15),
        (("stats", "--family", "heap:a-b", "--length", "5", "--count", "5"), 7),
        (("analyze", "--family", "braid:4", "--cap", "5"), 6),
        (("analyze", "/nonexistent/monoid.spec"), 1),
    ],
)
def test_error_exit_codes(capsys, argv, code):
    result, _, err = run(capsys, *argv)
    assert result == code
    assert any(line.startswith("atm: ") for line in err.splitlines())


def test_syntax_error_exit_code(capsys, tmp_path):
    path = tmp_path / "bad.monoid"
    path.write_text("generators: a b\nm: a b 3\n", encoding="utf-8")
    code, _, err = run(capsys, "analyze", str(path))
    assert code == 2
    assert "PresentationSyntaxError" in err
    assert "line 2" in err


@pytest.mark.parametrize("argv", [("frobnicate",), ("normal-form", "--family", "braid:3"), ("sample", "--family", "braid:3")])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        main(list(argv))
    assert info.value.code == 64


def test_help_lists_exit_codes(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    assert "exit codes:" in out
    assert "PresentationSyntaxError" in out
    assert "64  usage error" in out
