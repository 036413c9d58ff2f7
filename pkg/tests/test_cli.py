import csv
import io
import json
import os

import pytest

from main.main import run
from src.egs.errors import EXIT_INPUT_ERROR, EXIT_NOT_PROVEN, EXIT_VERIFIED

DATA = os.path.join(os.path.dirname(__file__), "..", "data")
CERT = os.path.join(DATA, "certificates", "t9_lower.cert")
WEIGHTS = os.path.join(DATA, "weights", "example_3_16.txt")


def test_verify_certificate_file(capsys):
    assert run(["verify", CERT]) == EXIT_VERIFIED
    captured = capsys.readouterr()
    assert "accepted t(9) >= 3" in captured.out
    assert "# egs verify" in captured.err


def test_verify_json_output(capsys):
    assert run(["--format", "json", "verify", CERT]) == EXIT_VERIFIED
    report = json.loads(capsys.readouterr().out)
    assert report["accepted"] is True
    assert report["count"] == 9


def test_missing_file_is_input_error(capsys, tmp_path):
    assert run(["verify", str(tmp_path / "absent.cert")]) == EXIT_INPUT_ERROR


def test_malformed_certificate_reports_json_error(capsys, tmp_path):
    path = tmp_path / "bad.cert"
    path.write_text("EGS-CERT v1\nN 9\nt 3\nF 1 2.5\n")
    assert run(["--format", "json", "verify", str(path)]) == EXIT_INPUT_ERROR
    assert json.loads(capsys.readouterr().out)["error"] == "CertificateFormatError"


def test_verify_dual_rejects_primal_file(capsys):
    assert run(["verify-dual", CERT]) == EXIT_INPUT_ERROR


def test_t_exact_small(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(["t-exact", "--n", "9"]) == EXIT_VERIFIED
    assert "t(9) = 3" in capsys.readouterr().out


def test_t_exact_writes_default_certificate(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(["--format", "json", "t-exact", "--n", "12"]) == EXIT_VERIFIED
    data = json.loads(capsys.readouterr().out)
    assert data["certificate_path"] == "t12.cert"
    assert (tmp_path / "t12.cert").read_text().startswith("EGS-CERT v1")
    assert run(["verify", "t12.cert"]) == EXIT_VERIFIED


def test_t_exact_honours_out(capsys, tmp_path):
    out = tmp_path / "nine.cert"
    assert run(["t-exact", "--n", "9", "--out", str(out)]) == EXIT_VERIFIED
    assert run(["verify", str(out)]) == EXIT_VERIFIED


_FACTOR_LINES = [i for i, line in enumerate(open(CERT).read().splitlines()) if line.startswith("F ")]


@pytest.mark.parametrize("line_index", _FACTOR_LINES)
def test_verify_rejects_any_changed_factor_digit(capsys, tmp_path, line_index):
    lines = open(CERT).read().splitlines()
    tag, mult, factor = lines[line_index].split()
    for position in (1, 2):
        for digit in "0123456789":
            fields = [tag, mult, factor]
            if fields[position] == digit:
                continue
            fields[position] = digit
            mutated = list(lines)
            mutated[line_index] = " ".join(fields)
            path = tmp_path / "mutated.cert"
            path.write_text("\n".join(mutated) + "\n")
            assert run(["verify", str(path)]) != EXIT_VERIFIED, mutated[line_index]


def test_greedy_writes_verified_certificate(capsys, tmp_path):
    out = tmp_path / "g.cert"
    assert run(["greedy", "--n", "9", "--t", "3", "--out", str(out)]) == EXIT_VERIFIED
    assert out.read_text().startswith("EGS-CERT v1")
    assert run(["verify", str(out)]) == EXIT_VERIFIED


def test_greedy_above_t_is_not_proven(capsys):
    assert run(["greedy", "--n", "9", "--t", "5"]) == EXIT_NOT_PROVEN


def test_lp_upper_proves_upper_bound(capsys, tmp_path):
    dual = tmp_path / "d.cert"
    assert run(["lp-upper", "--n", "10", "--t", "5", "--out", str(dual)]) == EXIT_VERIFIED
    assert "t(10) < 5" in capsys.readouterr().out
    assert run(["verify-dual", str(dual)]) == EXIT_VERIFIED


def test_rearrange_verify(capsys):
    assert run(["rearrange-verify", "--weights", WEIGHTS, "--alpha", "1/8"]) == EXIT_VERIFIED
    assert run(["rearrange-verify", "--weights", WEIGHTS, "--alpha", "1/4"]) == EXIT_NOT_PROVEN


def test_rearrange_search_writes_a_verifiable_table(capsys, tmp_path):
    path = str(tmp_path / "w.txt")
    search = ["rearrange-search", "--limit", "4", "--prime-bound", "2", "--tail", "power2", "--start", "1"]
    assert run(search + ["--alpha", "1/8", "--out", path]) == EXIT_VERIFIED
    assert "weights for t(N) >= 1/8 N" in capsys.readouterr().out
    assert run(["rearrange-verify", "--weights", path, "--alpha", "1/8"]) == EXIT_VERIFIED
    assert run(search + ["--alpha", "3/16"]) == EXIT_NOT_PROVEN
    assert run(search + ["--alpha", "1/16", "--n", "1e6"]) == EXIT_VERIFIED


def test_quarter_certificate_command(capsys):
    assert run(["quarter-cert"]) == EXIT_VERIFIED
    assert "threshold = 1328148" in capsys.readouterr().out


def test_t23_requires_an_argument(capsys):
    assert run(["t23"]) == EXIT_INPUT_ERROR
    assert run(["t23", "--n", "30"]) == EXIT_VERIFIED


def test_repair_rejects_small_range(capsys):
    assert run(["repair-verify", "--n-lo", "1e6", "--n-hi", "1e7"]) == EXIT_NOT_PROVEN
    assert "rejected" in capsys.readouterr().out


def test_repair_point_lists_reference_notes(capsys):
    assert run(["repair-verify", "--n-lo", "1e11", "--n-hi", "1e11"]) == EXIT_VERIFIED
    out = capsys.readouterr().out
    assert out.startswith("[100000000000, 100000000000] verified")
    assert "  note: delta5 = " in out


@pytest.mark.slow
def test_repair_reference_cover(capsys):
    assert run(["--format", "json", "repair-verify", "--reference"]) == EXIT_VERIFIED
    payload = json.loads(capsys.readouterr().out)
    assert payload["intervals"] == 5
    assert payload["rows"][-1]["N_hi"] is None


def test_kb_table_as_csv(capsys, tmp_path):
    out = tmp_path / "kb.csv"
    assert run(["--format", "csv", "--output", str(out), "table", "--kind", "kb", "--n-values", "12"]) == EXIT_VERIFIED
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 12
    assert rows[0]["K"] == "1"
    assert out.read_text().splitlines()[0] == "K,sum"


def test_json_output_file_matches_stdout(capsys, tmp_path):
    out = tmp_path / "verify.json"
    assert run(["--format", "json", "--output", str(out), "verify", CERT]) == EXIT_VERIFIED
    printed = json.loads(capsys.readouterr().out)
    assert json.loads(out.read_text()) == printed
    assert printed["bound_implied"] == "t(9) >= 3"


def test_unknown_command_exits_with_usage():
    with pytest.raises(SystemExit) as info:
        run(["no-such-command"])
    assert info.value.code == 2
