"""Test functions in writers."""
import numpy as np
import pytest

from selective_prediction import engine, writers
from selective_prediction.acceptance import CheckResult
from selective_prediction.core import Sequence
from selective_prediction.predictors import selective_predictor
from selective_prediction.sequences import (
    AlternatingSource, fixed_time_adversary, IIDUniformSource)
from selective_prediction.statistics import mean_family


def test_report_round_trip(tmp_path):
    """Test a sampled report survives writing and reading."""
    report = engine.monte_carlo(
        IIDUniformSource(16), selective_predictor(k=4), mean_family(),
        trials=20, master_seed=7, experiment="iid")
    path = tmp_path / "report.csv"
    writers.write_report(report, path, {"version": "test"})
    header = writers.read_header(path)
    assert header["experiment"] == "iid"
    assert header["master_seed"] == "7"
    assert header["version"] == "test"
    assert float(header["mean"]) == report.mean
    back = writers.read_report(path)
    assert back.trials == 20
    assert back.n == 16 and back.k == 4
    assert not back.exact
    np.testing.assert_array_equal(back.losses, report.losses)
    assert [r.k_prime for r in back.records] == \
        [r.k_prime for r in report.records]
    assert all(r.payload is None for r in back.records)


def test_exact_report_weighted(tmp_path):
    """Test weighted losses of an exact report sum to its mean."""
    report = engine.exact_report(
        AlternatingSource(8).sample(), selective_predictor(k=3),
        mean_family(), "alt")
    path = tmp_path / "exact.csv"
    writers.write_report(report, path)
    table = writers.read_table(path)
    assert sum(table.column("weighted_loss").to_pylist()) == \
        pytest.approx(1 / 3)
    assert set(table.column("trial").to_pylist()) == {-1}
    assert writers.read_report(path).exact


@pytest.mark.parametrize(
    "seq",
    [
        Sequence.from_reals([0.0, 1.0, 1.0, 0.0]),
        Sequence(np.random.default_rng(1).random(9)),
        Sequence.from_symbols([3, 0, 2, 2], alphabet_size=4),
    ],
)
def test_sequence_round_trip(seq, tmp_path):
    """Test exported sequences import exactly."""
    path = tmp_path / "seq.csv"
    writers.write_sequence(seq, path)
    back = writers.read_sequence(path)
    assert back == seq
    assert back.kind is seq.kind
    assert back.alphabet_size == seq.alphabet_size


def test_read_sequence_order(tmp_path):
    """Test sequences must list their indices in order."""
    path = tmp_path / "seq.csv"
    path.write_text("# kind=real\nindex,value\n1,0.5\n0,0.5\n")
    with pytest.raises(ValueError):
        writers.read_sequence(path)


def test_certificate(tmp_path):
    """Test certificates list every entry and state the minimum."""
    cert = engine.min_conditional_variance(
        fixed_time_adversary(4, 2), engine.VarianceConstraint.fixed_time, t=2)
    path = tmp_path / "cert.csv"
    writers.write_certificate(cert, path)
    header = writers.read_header(path)
    assert header["constraint"] == "fixed-time"
    assert float(header["min_variance"]) == 0.25
    assert header["argmin_t"] == "2"
    table = writers.read_table(path)
    assert table.num_rows == len(cert.entries)
    assert min(table.column("variance").to_pylist()) == 0.25


def test_summary(tmp_path):
    """Test one summary row per check."""
    results = [
        CheckResult("a", "<=", 0.1, 0.2, True),
        CheckResult("b", ">=", 0.1, 0.2, False)]
    path = tmp_path / "summary.csv"
    writers.write_summary(results, path, {"seed": 42})
    assert writers.read_header(path) == {"seed": "42"}
    table = writers.read_table(path)
    assert table.column("check").to_pylist() == ["a", "b"]
    assert table.column("passed").to_pylist() == [True, False]


def test_figure(tmp_path):
    """Test figure rows."""
    rows = [{"scale": 4, "block": i, "mean": 0.25 * i} for i in range(3)]
    path = tmp_path / "figure.csv"
    writers.write_figure(rows, path)
    assert writers.read_header(path) == {}
    assert writers.read_table(path).to_pylist() == rows
