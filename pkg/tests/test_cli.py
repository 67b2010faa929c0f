"""CLI-level tests for secondvar.main with patched settings."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import pytest

from secondvar.config import Settings
from secondvar.main import parse_args, run, run_async


@pytest.fixture(autouse=True)
def _fixed_settings(monkeypatch: pytest.MonkeyPatch) -> Settings:
    """Isolate every CLI run from settings.toml and the environment."""

    settings = Settings(grid=1024, coercivity_n=200)
    monkeypatch.setattr("secondvar.main.load_settings", lambda: settings)
    return settings


def _write_problem(tmp_path: Path, document: dict[str, object]) -> Path:
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def test_check_prints_json_report(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """check on a strict minimizer exits 0 and prints the JSON record."""

    path = _write_problem(tmp_path, {"integrand": "yp^2/2 + y", "candidate": "x*(x-1)/2"})

    exit_code = run(["check", str(path)])

    record = json.loads(capsys.readouterr().out)
    assert exit_code == 0
    assert record["verdict"]["kind"] == "StrictLocalMinimizer"
    assert record["provenance"]["settings"]["grid"] == 1024


def test_check_output_is_reproducible(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """Two runs of check --cross-check on one problem print identical bytes."""

    path = _write_problem(tmp_path, {"integrand": "yp^2 - y^2", "candidate": "0"})

    outputs = []
    for _ in range(2):
        assert run(["check", "--cross-check", str(path)]) == 0
        outputs.append(capsys.readouterr().out)

    assert outputs[0] == outputs[1]
    assert json.loads(outputs[0])["diagnostics"]["hyperdual_discrepancy"] is not None


def test_check_conjugate_point_exit_code(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """A conjugate point exits 3 with its location."""

    path = _write_problem(tmp_path, {"integrand": "yp^2 - 16*y^2", "candidate": "0"})

    exit_code = run(["check", str(path)])

    record = json.loads(capsys.readouterr().out)
    assert exit_code == 3
    assert record["verdict"]["location"] == pytest.approx(math.pi / 4, abs=1e-6)


def test_check_text_format_and_output_file(tmp_path: Path) -> None:
    """--format text with --output writes the rendered report to disk."""

    path = _write_problem(tmp_path, {"overrides": {"P": "1", "Q": "-pi^2"}})
    output = tmp_path / "out" / "report.txt"

    exit_code = run(["check", str(path), "--format", "text", "--output", str(output)])

    assert exit_code == 4
    assert output.read_text(encoding="utf-8").startswith("Verdict: Borderline")


def test_missing_problem_file_exits_2(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """A missing file is a usage error."""

    exit_code = run(["check", str(tmp_path / "absent.json")])

    assert exit_code == 2
    assert "secondvar: error" in capsys.readouterr().err


def test_malformed_problem_exits_2(tmp_path: Path) -> None:
    """Schema violations and unparsable expressions exit 2."""

    ambiguous = _write_problem(
        tmp_path, {"integrand": "yp^2", "candidate": "0", "overrides": {"P": "1", "Q": "0"}}
    )
    assert run(["check", str(ambiguous)]) == 2

    broken = _write_problem(tmp_path, {"integrand": "yp^2 +", "candidate": "0"})
    assert run(["check", str(broken)]) == 2


def test_csv_is_rejected_for_record_commands(tmp_path: Path) -> None:
    """gamma and scan only produce JSON records."""

    path = _write_problem(tmp_path, {"overrides": {"P": "1", "Q": "0"}})

    assert run(["gamma", str(path), "--format", "csv"]) == 2
    assert run(["scan", str(path), "--format", "text"]) == 2


def test_scan_lists_conjugate_points(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """scan prints every zero of the basic Jacobi solution."""

    path = _write_problem(tmp_path, {"overrides": {"P": "1", "Q": "-9*pi^2"}})

    exit_code = run(["scan", str(path)])

    assert exit_code == 0
    assert json.loads(capsys.readouterr().out) == pytest.approx([1 / 3, 2 / 3, 1.0], abs=1e-6)


def test_jacobi_csv_dump(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """jacobi writes x, u, v columns on the grid given by --grid."""

    path = _write_problem(tmp_path, {"overrides": {"P": "1", "Q": "0"}})

    exit_code = run(["jacobi", str(path), "--grid", "64"])

    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert exit_code == 0
    assert rows[0] == ["x", "u", "v"]
    assert len(rows) == 66
    assert float(rows[-1][1]) == pytest.approx(1.0, abs=1e-8)


def test_hessian_csv_columns(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """hessian reports P, R, Q_raw and the determinant along the candidate."""

    path = _write_problem(tmp_path, {"integrand": "yp^2 + y^2", "candidate": "0"})

    assert run(["hessian", str(path), "--grid", "16"]) == 0

    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["x", "P", "R", "Q_raw", "det"]
    assert [float(value) for value in rows[1][1:]] == pytest.approx([2.0, 0.0, 2.0, 4.0])


def test_gamma_record(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """gamma prints battery forms, the coercivity trend and the certified bound."""

    path = _write_problem(tmp_path, {"overrides": {"P": "1", "Q": "1"}})

    assert run(["gamma", str(path)]) == 0

    record = json.loads(capsys.readouterr().out)
    assert record["gamma"] == pytest.approx(1.0, abs=1e-6)
    assert [entry["n"] for entry in record["trend"]] == [200, 400, 800]
    assert record["certified_gamma"] > 0
    assert all(form["gap"] <= 1e-6 for form in record["forms"])


@pytest.mark.asyncio
async def test_riccati_scan_with_initial_values(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """Repeated --w0 values produce one JSON record per trajectory."""

    path = _write_problem(tmp_path, {"overrides": {"P": "1", "Q": "-16"}})
    args = parse_args(["riccati", str(path), "--w0", "0", "--w0", "1", "--format", "json"])

    exit_code = await run_async(args)

    records = json.loads(capsys.readouterr().out)
    assert exit_code == 0
    assert [record["status"] for record in records] == ["blowup", "blowup"]
    assert records[0]["location"] == pytest.approx(math.pi / 8, abs=1e-4)


def test_riccati_without_positive_solution_exits_1(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """The constructed Riccati solution needs the Jacobi condition to hold."""

    path = _write_problem(tmp_path, {"overrides": {"P": "1", "Q": "-16"}})

    assert run(["riccati", str(path)]) == 1
    assert "no positive Jacobi solution" in capsys.readouterr().err


def test_riccati_scan_uses_configured_initial_values(
    tmp_path: Path, capsys: pytest.CaptureFixture[str], _fixed_settings: Settings
) -> None:
    """--scan integrates from every riccati_w0_scan value and defaults to JSON."""

    path = _write_problem(tmp_path, {"overrides": {"P": "1", "Q": "-1"}})

    assert run(["riccati", str(path), "--scan"]) == 0

    records = json.loads(capsys.readouterr().out)
    assert [record["w0"] for record in records] == _fixed_settings.riccati_w0_scan
    by_w0 = {record["w0"]: record for record in records}
    assert by_w0[0.0]["status"] == "bounded"
    assert by_w0[0.0]["w"][-1] == pytest.approx(math.tan(1.0), abs=1e-6)
    assert by_w0[10.0]["status"] == "blowup"
