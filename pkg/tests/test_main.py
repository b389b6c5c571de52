"""Test functions in main."""
import json

import pytest

from selective_prediction import main, writers


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--experiment", "mean-upper", "--k", "3", "--exact"],
        ["run", "--experiment", "mean-upper", "--k", "5", "--trials", "50",
         "--exact-over-predictor"],
        ["run", "--experiment", "mean-lower", "--k", "8", "--trials", "200",
         "--exact-over-predictor"],
        ["run", "--experiment", "erm-lower", "--k", "3", "--exact"],
        ["run", "--experiment", "fixed-time", "--n", "8", "--t", "3",
         "--exact"],
        ["run", "--experiment", "smooth-upper", "--k", "6", "--trials", "100"],
    ],
)
def test_run_passes(argv):
    """Test named experiments meet their bounds."""
    assert main.main(argv) == main.EXIT_PASS


def test_run_output(tmp_path, capsys):
    """Test the report file and the printed verdict."""
    out = tmp_path / "report.csv"
    code = main.main([
        "run", "--experiment", "erm-lower", "--k", "3", "--exact",
        "--out", str(out)])
    assert code == main.EXIT_PASS
    printed = capsys.readouterr().out
    assert "PASS erm-lower" in printed
    assert "[1/8]" in printed
    header = writers.read_header(out)
    assert header["experiment"] == "erm-lower"
    assert header["k"] == "3"
    assert "out" not in header
    report = writers.read_report(out)
    assert report.exact
    assert report.mean >= 0.125


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--experiment", "nope"],
        ["run", "--source", "nope"],
        ["run", "--loss", "hinge"],
        ["run", "--k", "3", "--n", "12"],
        ["run", "--experiment", "fixed-time", "--n", "8"],
        ["run", "--trials", "0"],
        ["certify", "--source", "iid-bits"],
        ["figures", "--k", "15"],
        ["figures", "--k", "40"],
        ["run", "--experiment", "mean-upper", "--k", "40"],
        ["run", "--experiment", "concave-upper", "--source", "iid-uniform",
         "--k", "4", "--trials", "10"],
        ["run", "--experiment", "smooth-upper", "--source", "iid-symbols",
         "--k", "4", "--trials", "10"],
        ["run", "--experiment", "erm-upper", "--models", "0", "--k", "4",
         "--trials", "5"],
        ["run", "--experiment", "concave-upper", "--models", "0", "--k", "4",
         "--trials", "5"],
        ["suite", "--only", "nope"],
    ],
)
def test_usage_errors(argv):
    """Test invalid invocations exit with the usage code."""
    assert main.main(argv) == main.EXIT_USAGE


def test_argparse_errors():
    """Test argparse itself rejects malformed flags."""
    with pytest.raises(SystemExit) as e:
        main.main(["run", "--k", "three"])
    assert e.value.code == main.EXIT_USAGE


@pytest.mark.parametrize(
    "argv,expected",
    [
        (["certify"], "PASS certify anti-concentrated"),
        (["certify", "--source", "fixed-time", "--n", "8", "--t", "4"],
         "min variance 0.25"),
        (["certify", "--source", "block", "--n", "8", "--m", "3"],
         "PASS certify block"),
        (["certify", "--source", "halving-block", "--n", "16"],
         "PASS certify halving-block"),
    ],
)
def test_certify(argv, expected, capsys):
    """Test certified lower bounds."""
    assert main.main(argv) == main.EXIT_PASS
    assert expected in capsys.readouterr().out


def test_certify_guard():
    """Test oversized enumerations are refused."""
    assert main.main(["certify", "--k", "4"]) == main.EXIT_USAGE


def test_certify_output(tmp_path):
    """Test the certificate file lists every entry."""
    out = tmp_path / "cert.csv"
    assert main.main([
        "certify", "--source", "fixed-time", "--n", "4", "--t", "2",
        "--out", str(out)]) == main.EXIT_PASS
    assert writers.read_header(out)["min_variance"] == "0.25"
    assert writers.read_table(out).num_rows == 2


def test_config_precedence(tmp_path):
    """Test config values are defaults that flags override."""
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"k": 3, "exact": True}))
    out = tmp_path / "a.csv"
    args = ["run", "--experiment", "erm-lower", "--config", str(config)]
    assert main.main(args + ["--out", str(out)]) == main.EXIT_PASS
    assert writers.read_header(out)["k"] == "3"
    assert main.main(
        args + ["--k", "4", "--out", str(out)]) == main.EXIT_PASS
    assert writers.read_header(out)["k"] == "4"


@pytest.mark.parametrize(
    "content", [{"bogus": 1}, [1, 2]],
)
def test_config_rejects(content, tmp_path):
    """Test unknown keys and non-object configs."""
    config = tmp_path / "config.json"
    config.write_text(json.dumps(content))
    assert main.main(["run", "--config", str(config)]) == main.EXIT_USAGE


def test_missing_config(tmp_path):
    """Test a missing config file."""
    assert main.main(
        ["run", "--config", str(tmp_path / "none.json")]) == main.EXIT_USAGE


def test_figures(tmp_path, capsys):
    """Test two scales of thirty block means."""
    out = tmp_path / "figures.csv"
    assert main.main(["figures", "--out", str(out)]) == main.EXIT_PASS
    rows = writers.read_table(out).to_pylist()
    assert len(rows) == 60
    assert {r["scale"] for r in rows} == {2 ** 10, 2 ** 15}
    assert all(0.0 <= r["mean"] <= 1.0 for r in rows)
    assert "scale 1024" in capsys.readouterr().out


def test_suite_deterministic(tmp_path):
    """Test identical seeds give byte-identical suite outputs."""
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        assert main.main(
            ["suite", "--quick", "--seed", "42", "--out", str(out)]) == \
            main.EXIT_PASS
    for name in ("summary.csv", "figures.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_resolve_length():
    """Test k and n defaults and consistency."""
    assert main.resolve_length(None, None) == (10, 1024)
    assert main.resolve_length(None, 12) == (3, 12)
    assert main.resolve_length(4, 16) == (4, 16)
    with pytest.raises(main.UsageError):
        main.resolve_length(0, None)
    with pytest.raises(main.ResourceGuardError):
        main.resolve_length(40, None)
    with pytest.raises(main.ResourceGuardError):
        main.resolve_length(None, 2 ** 30 + 1)


def test_check_kinds():
    """Test real sources are refused by symbol-scoring targets."""
    config = main.resolve_config(main.parse_args(
        ["run", "--experiment", "concave-upper", "--k", "3"]))
    target = main.build_target(config)
    main.check_kinds(main.build_source(config), target)
    real = main.build_source(
        main.resolve_config(main.parse_args(
            ["run", "--source", "iid-uniform", "--k", "3"])))
    with pytest.raises(main.UsageError):
        main.check_kinds(real, target)
    erm = main.resolve_config(main.parse_args(
        ["run", "--experiment", "erm-upper", "--k", "3"]))
    with pytest.raises(main.UsageError):
        main.check_kinds(real, main.build_target(erm))
