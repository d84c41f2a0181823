import json
import subprocess
import sys

import pytest

from sif.cli import EXIT_ERROR, EXIT_LEAK, EXIT_OK, EXIT_USAGE, REFERENCE_MEAN, main
from sif.corpus import APP_CASES, APP_IR, APP_LATTICE, APP_SPECS, BENCH_CASES
from sif.ir.parser import parse_program

APP = ["--ir", str(APP_IR), "--specs", str(APP_SPECS), "--lattice", str(APP_LATTICE)]


@pytest.fixture
def instrumented(tmp_path):
    out = tmp_path / "app.sif"
    assert main(["instrument", *APP, "-o", str(out)]) == EXIT_OK
    return out


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_instrument_writes_program_and_manifest(tmp_path):
    out, manifest = tmp_path / "o.sif", tmp_path / "m.txt"
    assert main(["instrument", *APP, "-o", str(out), "--manifest", str(manifest)]) == EXIT_OK
    assert "secLbl$" in out.read_text()
    parse_program(out.read_text())
    assert manifest.read_text().startswith("class ")


def test_check_passes(tmp_path, capsys):
    summary = tmp_path / "s.json"
    assert main(["check", *APP, "--cases", str(APP_CASES), "--summary", str(summary)]) == EXIT_OK
    data = json.loads(summary.read_text())
    assert data["failed"] == 0 and data["total"] >= 12
    header = capsys.readouterr().out.splitlines()[0]
    assert header.split("\t") == ["case", "expected", "actual", "verdict", "detail"]


def test_check_failing_expectation(tmp_path):
    cases = write(tmp_path, "c.cases", "case flip: call App.myEvaluation(2) expect normal\n")
    assert main(["check", *APP, "--cases", cases]) == EXIT_ERROR


def test_check_empty_suite(tmp_path, capsys):
    cases = write(tmp_path, "c.cases", "# nothing\n")
    assert main(["check", *APP, "--cases", cases]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 1


def test_run_normal_and_leak(instrumented, tmp_path, capsys):
    ok = write(tmp_path, "ok.cases", "case a: call App.associateDispatch(1, 1) expect normal\n")
    assert main(["run", "--ir", str(instrumented), "--lattice", str(APP_LATTICE), "--case", ok]) == EXIT_OK
    assert capsys.readouterr().out.startswith("normal\t")
    bad = write(tmp_path, "bad.cases", "case a: call App.myEvaluation(2) expect leak\n")
    assert main(["run", "--ir", str(instrumented), "--lattice", str(APP_LATTICE), "--case", bad]) == EXIT_LEAK
    assert capsys.readouterr().out.startswith("leak\t")


def test_run_picks_case_by_name(instrumented):
    args = ["run", "--ir", str(instrumented), "--lattice", str(APP_LATTICE), "--case", str(APP_CASES)]
    assert main(args) == EXIT_USAGE
    assert main(args + ["--name", "own_salary"]) == EXIT_OK
    assert main(args + ["--name", "colleague_salary"]) == EXIT_LEAK


def test_run_error_exit(tmp_path):
    ir = write(tmp_path, "z.sif", "class Z {\n  long f(long a) {\n  entry:\n    b = div(a, 0)\n    return b\n  }\n}\n")
    case = write(tmp_path, "z.cases", "case z: call Z.f(1) expect normal\n")
    assert main(["run", "--ir", ir, "--lattice", str(APP_LATTICE), "--case", case]) == EXIT_ERROR


def test_missing_file_is_usage_error(capsys):
    assert main(["check", "--ir", "/nonexistent.sif", "--specs", str(APP_SPECS), "--lattice", str(APP_LATTICE),
                 "--cases", str(APP_CASES)]) == EXIT_USAGE
    assert "cannot read" in capsys.readouterr().err


def test_malformed_spec(tmp_path, capsys):
    spec = write(tmp_path, "bad.spec", "class Supervisor { double:SupervisorSL(id) bonus; }\n")
    args = ["instrument", "--ir", str(APP_IR), "--specs", spec, "--lattice", str(APP_LATTICE),
            "-o", str(tmp_path / "o.sif")]
    assert main(args) == EXIT_ERROR
    assert "unknown field bonus" in capsys.readouterr().err
    assert not (tmp_path / "o.sif").exists()


def test_syntax_error_reports_position(tmp_path, capsys):
    spec = write(tmp_path, "bad.spec", "class Supervisor {\n  double salary;\n}\n")
    args = ["instrument", "--ir", str(APP_IR), "--specs", spec, "--lattice", str(APP_LATTICE),
            "-o", str(tmp_path / "o.sif")]
    assert main(args) == EXIT_ERROR
    assert "2:" in capsys.readouterr().err


def test_bench_prints_reference(capsys):
    assert main(["bench", *APP, "--cases", str(BENCH_CASES), "--reps", "2"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 7
    assert lines[-1].endswith(f"{REFERENCE_MEAN:.2f}")


def test_bench_without_cases_is_usage_error(tmp_path):
    cases = write(tmp_path, "none.cases", "")
    assert main(["bench", *APP, "--cases", cases]) == EXIT_USAGE


def test_lattice_check(tmp_path, capsys):
    assert main(["lattice-check", "--lattice", str(APP_LATTICE)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("ok: 10 labels")
    cyclic = write(tmp_path, "c.lattice", "label A\nlabel B\norder A < B\norder B < A\n")
    assert main(["lattice-check", "--lattice", cyclic]) == EXIT_ERROR
    assert "cycle" in capsys.readouterr().err


def test_bad_arguments_exit_two():
    with pytest.raises(SystemExit) as err:
        main(["run"])
    assert err.value.code == EXIT_USAGE


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sif", "lattice-check", "--lattice", str(APP_LATTICE)],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_OK and proc.stdout.startswith("ok:")


def test_check_output_reproducible(capsys):
    args = ["check", *APP, "--cases", str(APP_CASES)]
    main(args)
    first = capsys.readouterr().out
    main(args)
    assert capsys.readouterr().out == first


def test_run_with_labels_and_pc(instrumented, tmp_path, capsys):
    c = write(tmp_path, "l.cases", "case a: call App.publicProfile(2) labels(AssociateSL(2)) pc(Public) expect leak\n")
    assert main(["run", "--ir", str(instrumented), "--lattice", str(APP_LATTICE), "--case", c]) == EXIT_LEAK
