"""End-to-end command-line runs."""

import json
import shutil

import pytest

from intermit.cli import main
from intermit.formats import read_pc1, read_vf1
from intermit.pipeline import REPORT_FILES


@pytest.fixture(scope="module")
def sheet_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("sheet")
    code = main(["analyze", "--synth", "vortex-sheet", "--n", "128", "--cells", "1,1,8", "--out", str(out)])
    return code, out


def test_synth_and_manifest(tmp_path, capsys):
    assert main(["synth", "single-mode", "--n", "16", "--out", str(tmp_path / "m.vf1")]) == 0
    u = read_vf1(tmp_path / "m.vf1")
    assert u.grid.spatial_shape == (16, 16, 16) and u.samples.shape == (1, 16, 16, 16, 3)
    assert main(["synth", "--manifest", str(tmp_path / "corpus.json")]) == 0
    manifest = json.loads((tmp_path / "corpus.json").read_text())
    assert "vortex-sheet" in json.dumps(manifest)


def test_sheet_end_to_end(sheet_report, capsys):
    code, out = sheet_report
    assert code == 0
    for name in REPORT_FILES:
        assert (out / name).is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert 1.8 <= summary["headline"]["d"] <= 2.2
    assert summary["all_invariants_pass"]
    for name in REPORT_FILES:
        if name.endswith(".json"):
            assert json.loads((out / name).read_text())["config"] == summary["config"]
    assert summary["config"]["cells"] == [1, 1, 8] and summary["config"]["synth"] == "vortex-sheet"


def test_plots(sheet_report):
    _, out = sheet_report
    assert main(["plots", str(out)]) == 0
    figures = {read_pc1(p)[0] for p in (out / "plots").glob("*.csv")}
    assert {"spectrum", "volumes", "structure_s2", "localization"} <= figures
    fig, cols, rows = read_pc1(out / "plots" / "volumes.csv")
    assert "q" in cols and len(rows) > 3


def test_frequency_cubes_from_file(tmp_path):
    path = tmp_path / "f.vf1"
    assert main(["synth", "frequency-cubes", "--out", str(path)]) == 0
    out = tmp_path / "rep"
    assert main(["analyze", str(path), "--separations", "3", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert -0.3 <= summary["headline"]["d"] <= 0.3


def test_small_run_is_byte_identical(tmp_path):
    path = tmp_path / "s.vf1"
    assert main(["synth", "vortex-sheet", "--n", "32", "--out", str(path)]) == 0
    runs = []
    out = tmp_path / "rep"  # same config (including the echoed output path) for every run
    for threads in ("1", "2", "1"):
        if out.exists():
            shutil.rmtree(out)
        main(["--threads", threads, "analyze", str(path), "--window", "1:3", "--out", str(out)])
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()})
    assert runs[0] == runs[1] == runs[2]
    assert set(REPORT_FILES) <= set(runs[0])


def test_check_single_mode(capsys):
    assert main(["check", "--field", "single-mode"]) == 0
    assert "PASS" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["analyze", "/nonexistent/field.vf1"],
    ["analyze", "--synth", "vortex-sheet", "--n", "16", "--cells", "0,1,1"],
    ["synth", "vortex-sheet"],
    ["plots", "/nonexistent/bundle"],
])
def test_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + (["--out", str(tmp_path / "x")] if argv[0] == "analyze" else [])) == 2
    assert "intermit: error" in capsys.readouterr().err


def test_bad_window_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--synth", "vortex-sheet", "--window", "3-8"])
    assert exc.value.code == 2
