import csv

import pytest

from mtpgd.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from mtpgd.driver import RunConfig
from mtpgd.mesh import read_mesh

TINY = ["--nx", "4", "--ny", "2", "--length", "40", "--width", "20", "--n-micro", "16",
        "--training-cycles", "6", "--target-cycles", "9", "--reference-count", "2"]


def test_generate_mesh(tmp_path, capsys):
    out = tmp_path / "m.txt"
    assert main(["generate-mesh", str(out), "--kind", "dogbone", "--nx", "10", "--ny", "4"]) == EXIT_OK
    assert read_mesh(out).n_elements == 40
    assert "40 elements" in capsys.readouterr().out


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_full_workflow(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["run-reference", *TINY, "-o", str(run), "--extend"]) == EXIT_OK
    assert (run / "reference" / "manifest.json").is_file() and (run / "extended" / "plastic.bin").is_file()
    assert main(["run-datadriven", str(run / "reference"), "--truth", str(run / "extended"), "-o", str(run),
                 "--extension", "gappy"]) == EXIT_OK
    assert RunConfig.load(run / "datadriven" / "config.ini").extension == "gappy"
    assert main(["compare", str(run / "extended"), str(run / "datadriven"), "-o", str(tmp_path / "c.csv")]) == EXIT_OK
    rows = {r[0]: r[1] for r in csv.reader(open(tmp_path / "c.csv"))}
    assert float(rows["evaluation_ratio"]) == pytest.approx(8 / 32)
    assert main(["forecast", str(run / "reference"), "-o", str(tmp_path / "fc"), "--horizon", "5"]) == EXIT_OK
    assert len(list(csv.reader(open(tmp_path / "fc" / "macro_forecast.csv")))) == 6
    assert main(["export-modes", str(run / "datadriven"), "-o", str(tmp_path / "modes")]) == EXIT_OK
    assert (tmp_path / "modes" / "modes_macro.csv").is_file()
    capsys.readouterr()


def test_config_file_and_set(tmp_path):
    RunConfig(nx=2, ny=1, length=20.0, width=10.0, n_micro=8, training_cycles=1, target_cycles=2).save(tmp_path / "c.ini")
    assert main(["run-reference", "--config", str(tmp_path / "c.ini"), "--set", "amplitude=0.001",
                 "-o", str(tmp_path / "r")]) == EXIT_OK
    assert RunConfig.load(tmp_path / "r" / "reference" / "config.ini").amplitude == 0.001


@pytest.mark.parametrize(
    "argv",
    [
        ["run-reference", "--set", "colour=red"],
        ["run-reference", "--set", "nx"],
        ["run-reference", "--nx", "ten"],
        ["run-reference", "--training-cycles", "5", "--target-cycles", "5"],
        ["run-reference", "--config", "/nonexistent.ini"],
    ],
)
def test_configuration_errors(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_missing_run_is_io_error(tmp_path, capsys):
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b")]) == EXIT_IO
    assert "error:" in capsys.readouterr().err


def test_thread_variable(monkeypatch, tmp_path):
    monkeypatch.setenv("MTPGD_THREADS", "zero")
    assert main(["generate-mesh", str(tmp_path / "m.txt")]) == EXIT_CONFIG
    monkeypatch.setenv("MTPGD_THREADS", "1")
    assert main(["generate-mesh", str(tmp_path / "m.txt")]) == EXIT_OK


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["no-such-command"])
    assert info.value.code == 2
