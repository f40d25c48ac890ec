"""Command-line surface: verbs, file formats, exit codes."""

import json
from math import pi

import pytest

from qpencil import PotentialPair, make_split_data
from qpencil.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, main


def test_forward_zero_potentials(tmp_path, capsys):
    pot_path = tmp_path / "pot.csv"
    PotentialPair.zeros(200).to_csv(pot_path)
    out = tmp_path / "spec.json"
    code = main(["forward", "--potentials", str(pot_path), "--n-max", "3",
                 "--out", str(out)])
    assert code == EXIT_OK
    payload = json.loads(out.read_text())
    assert payload["model"] == "dirichlet-zero"
    entries = {e["n"]: e for e in payload["entries"]}
    assert entries[2]["lambda"][0] == pytest.approx(2.0, abs=1e-8)
    assert entries[2]["M"][0] == pytest.approx(-2 / pi, abs=1e-6)


def test_inverse_on_split_data(tmp_path):
    data_path = tmp_path / "split.json"
    make_split_data(0.01).save_json(data_path)
    out = tmp_path / "rec.csv"
    code = main(["inverse", "--data", str(data_path), "--grid-n", "200",
                 "--out", str(out)])
    assert code == EXIT_OK
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "x,re_q1,im_q1,re_q0ad,im_q0ad"
    assert len(rows) == 202
    last = [float(v) for v in rows[-1].split(",")]
    assert last[0] == pytest.approx(pi, abs=1e-12)


def test_inverse_missing_file_is_io_error(tmp_path):
    code = main(["inverse", "--data", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o.csv")])
    assert code == EXIT_IO


def test_inverse_bad_model_tag_is_validation_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"model": "unknown", "entries": []}))
    code = main(["inverse", "--data", str(path), "--out", str(tmp_path / "o.csv")])
    assert code == EXIT_VALIDATION


def test_split_table_writes_outputs(tmp_path, capsys):
    code = main(["split-table", "--deltas", "0.05,0.01", "--out-dir",
                 str(tmp_path), "--no-verify"])
    assert code == EXIT_OK
    assert (tmp_path / "table.csv").exists()
    assert (tmp_path / "potentials_delta=0.01.csv").exists()
    printed = capsys.readouterr().out
    assert "0.4157" in printed or "0.416" in printed


def test_split_table_bad_contour_is_validation_error(tmp_path):
    code = main(["split-table", "--deltas", "0.05", "--contour-r", "1.5",
                 "--out-dir", str(tmp_path)])
    assert code == EXIT_VALIDATION


def test_roundtrip_on_model_data(tmp_path, capsys):
    data_path = tmp_path / "model.json"
    from qpencil import model_spectral_data

    model_spectral_data(2).save_json(data_path)
    code = main(["roundtrip", "--data", str(data_path), "--n-check", "2"])
    assert code == EXIT_OK
    assert "lam_in" in capsys.readouterr().out
