from __future__ import annotations

import io
import json

import pytest

from app import cli
from app.db.spectrum_io import read_spectrum
from app.errors import CertificationError, ConfigurationError


def _run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def _data_lines(text):
    return [line for line in text.splitlines() if line and not line.startswith("#")]


def test_spectrum_to_stdout(tmp_path):
    code, out, err = _run(
        "spectrum", "--shape", "square", "--lambda-max", "20", "--cache-dir", str(tmp_path)
    )
    assert code == 0
    assert out.startswith("# bc=D lambda_max=20.0 source=analytic\n")
    assert _data_lines(out)[0].endswith(",1")
    assert "levels=" in err and "weyl=" in err


def test_spectrum_to_file(tmp_path):
    target = tmp_path / "out" / "triangle.txt"
    code, out, _ = _run(
        "spectrum",
        "--shape",
        "triangle",
        "--bc",
        "N",
        "--lambda-max",
        "30",
        "--out",
        str(target),
        "--cache-dir",
        str(tmp_path / "cache"),
    )
    assert code == 0
    assert out == ""
    spectrum = read_spectrum(target)
    assert spectrum.bc.value == "N"
    assert spectrum.lambda_max == 30.0


def test_force_csv(tmp_path):
    code, out, _ = _run(
        "force",
        "--shape",
        "square",
        "--D",
        "20",
        "--a-min",
        "0.1",
        "--a-max",
        "1.0",
        "--points-per-decade",
        "4",
        "--cache-dir",
        str(tmp_path),
    )
    assert code == 0
    lines = _data_lines(out)
    assert lines[0] == "a,F,F_weyl,delta_F,a_delta_F"
    assert len(lines) == 1 + 5
    assert "# D=20.0 a_min=0.1" in out
    assert "# lambda_max=" in out
    first = [float(value) for value in lines[1].split(",")]
    assert first[0] == pytest.approx(0.1)
    assert first[3] == pytest.approx(first[1] - first[2])


def test_force_overlays_add_columns(tmp_path):
    code, out, _ = _run(
        "force",
        "--shape",
        "circle",
        "--D",
        "20",
        "--a-min",
        "0.2",
        "--a-max",
        "2.0",
        "--points-per-decade",
        "2",
        "--overlay",
        "--cache-dir",
        str(tmp_path),
    )
    assert code == 0
    header = _data_lines(out)[0].split(",")
    assert header[:5] == ["a", "F", "F_weyl", "delta_F", "a_delta_F"]
    assert header[5:] == sorted(header[5:])
    assert "F_far_1" in header and "F_weyl_2" in header


def test_config_file_then_flags(tmp_path):
    config = tmp_path / "run.ini"
    config.write_text(
        "[run]\nshape = triangle\n\n[policy]\nD = 20\na_min = 0.1\n\n"
        "[grid]\na_max = 1.0\npoints_per_decade = 3\n",
        encoding="utf-8",
    )
    code, out, _ = _run(
        "force", "--config", str(config), "--a-min", "0.2", "--cache-dir", str(tmp_path / "c")
    )
    assert code == 0
    assert "# shape=triangle" in out
    assert "# D=20.0 a_min=0.2" in out


def test_unknown_config_section_is_rejected(tmp_path):
    config = tmp_path / "bad.ini"
    config.write_text("[plot]\ncolor = red\n", encoding="utf-8")
    code, _, err = _run("force", "--config", str(config), "--cache-dir", str(tmp_path))
    assert code == 1
    assert "unknown config section" in err


def test_read_config_file_rejects_bad_values(tmp_path):
    config = tmp_path / "bad.ini"
    config.write_text("[policy]\na_min = small\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        cli.read_config_file(config)
    config.write_text("[policy]\nalpha = 1\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        cli.read_config_file(config)


@pytest.mark.parametrize(
    "argv",
    [
        ("force", "--lambda-max", "50", "--D", "25", "--a-min", "0.05"),
        ("force", "--shape", "stadium"),
        ("force", "--shape", "stadium", "--ratio", "0.2", "--D", "25", "--a-min", "0.05"),
        ("spectrum", "--shape", "quarter_circle", "--bc", "N", "--lambda-max", "20"),
        ("force", "--a-min", "0.5", "--a-max", "0.2"),
    ],
)
def test_rejected_configurations_exit_with_one(tmp_path, argv):
    code, out, err = _run(*argv, "--cache-dir", str(tmp_path))
    assert code == 1
    assert out == ""
    assert "invalid configuration" in err


def test_spectrum_rejects_em(tmp_path):
    code, _, err = _run(
        "spectrum", "--bc", "EM", "--lambda-max", "20", "--cache-dir", str(tmp_path)
    )
    assert code == 1
    assert "ConfigurationError" in err


def test_numerical_failures_exit_with_two(tmp_path, monkeypatch):
    def failing(config, stdout, stderr):
        raise CertificationError("lost a level", windows=[(10.0, 10.4)])

    monkeypatch.setitem(cli.HANDLERS, "force", failing)
    code, _, err = _run("force", "--cache-dir", str(tmp_path))
    assert code == 2
    assert "CertificationError: lost a level" in err
    assert "window [10, 10.4]" in err


def test_asymptotes_json(tmp_path):
    code, out, _ = _run(
        "asymptotes",
        "--shape",
        "rectangle",
        "--ratio",
        "4",
        "--lambda-max",
        "40",
        "--cache-dir",
        str(tmp_path),
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["version"]
    (entry,) = payload["terms"]
    assert entry["perimeter"] == pytest.approx(5.0)
    assert "deltaForceConstant" in entry


def test_transition_csv(tmp_path):
    code, out, err = _run(
        "transition",
        "--ratios",
        "0",
        "--D",
        "20",
        "--a-min",
        "0.1",
        "--a-max",
        "1.0",
        "--points-per-decade",
        "10",
        "--cache-dir",
        str(tmp_path),
    )
    assert code == 0
    lines = _data_lines(out)
    assert lines[0] == "ratio,U,flatness"
    assert len(lines) == 2
    assert "# J=" not in out
    assert "J=" not in err


def test_workers_reach_the_solver():
    args = cli.build_parser().parse_args(["spectrum", "--workers", "3"])
    config = cli.load_run_config(args)
    assert config.workers == 3
    assert config.solver.workers == 3
    assert config.command == "spectrum"


@pytest.mark.slow
def test_verify_passes(tmp_path):
    code, out, _ = _run("verify", "--cache-dir", str(tmp_path))
    assert code == 0, out
    assert all(line.startswith("PASS") for line in out.splitlines())


def test_bad_ratio_list_is_a_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["transition", "--ratios", "0,abc", "--cache-dir", str(tmp_path)])
    assert info.value.code == 2
    err = capsys.readouterr().err
    assert "bad ratio list" in err
    assert "Traceback" not in err


def test_bad_ratio_list_in_config_file(tmp_path):
    config = tmp_path / "run.ini"
    config.write_text("[grid]\nratios = 0,abc\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        cli.read_config_file(config)
