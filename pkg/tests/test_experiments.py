"""
Tests for experiment dispatch, sweeps, fits and reports.
"""

import json
import threading

import numpy as np
import pytest

from qmldesk.datasets import write_dataset, write_patterns
from qmldesk.distance import LabeledDataset
from qmldesk.errors import ConfigError, InsufficientRuns, UnknownAlgorithm
from qmldesk.experiments import (
    AlgorithmParams,
    ExperimentConfig,
    RunReport,
    SweepRunner,
    SweepStatus,
    fit_exponent,
    ledger_report,
    report_json,
    report_tsv,
    round_significant,
    run_experiment,
    to_plain,
    write_report,
)
from qmldesk.sim import RandomSource


@pytest.fixture
def labeled_csv(tmp_path):
    rng = np.random.default_rng(0)
    features = np.vstack([rng.normal((2.0, 0.0), 0.3, (5, 2)), rng.normal((0.0, 2.0), 0.3, (5, 2))])
    return str(write_dataset(tmp_path / "blobs.csv", LabeledDataset(features, ("a",) * 5 + ("b",) * 5)))


def config(algorithm, dataset=None, **params) -> ExperimentConfig:
    return ExperimentConfig(algorithm=algorithm, dataset=dataset, seed=7, params=AlgorithmParams(**params))


class TestFitExponent:
    """Tests for fit_exponent."""

    def test_power_law(self):
        """Test counts proportional to N^1.5 fit exponent 1.5."""
        sizes = [8, 16, 32, 64, 128]
        fit = fit_exponent(sizes, [3 * n**1.5 for n in sizes])
        assert fit.exponent == pytest.approx(1.5)
        assert fit.intercept == pytest.approx(np.log(3))
        assert fit.ci_low == pytest.approx(1.5)
        assert fit.ci_high == pytest.approx(1.5)
        assert fit.points == 5

    def test_constant(self):
        """Test constant counts fit exponent 0."""
        fit = fit_exponent([1, 2, 4, 8], [5, 5, 5, 5])
        assert fit.exponent == pytest.approx(0.0, abs=1e-12)

    def test_noisy_interval_contains_slope(self):
        """Test the interval brackets the true slope on noisy data."""
        rng = np.random.default_rng(1)
        sizes = np.array([10, 20, 40, 80, 160, 320], dtype=float)
        counts = sizes**0.5 * np.exp(rng.normal(0, 0.05, sizes.size))
        fit = fit_exponent(sizes, counts)
        assert fit.ci_low < 0.5 < fit.ci_high

    def test_insufficient_runs(self):
        """Test fewer than four distinct sizes raises InsufficientRuns."""
        with pytest.raises(InsufficientRuns):
            fit_exponent([1, 2, 4, 4], [1, 2, 3, 4])

    def test_non_positive(self):
        """Test log-log fits need positive values."""
        with pytest.raises(ValueError):
            fit_exponent([1, 2, 4, 8], [1, 0, 3, 4])


class TestLedgerReport:
    """Tests for ledger_report."""

    def make_run(self, algorithm, n, queries, status="ok"):
        return RunReport(
            version="test",
            config=ExperimentConfig(algorithm=algorithm),
            status=status,
            results={"size": {"n": n}},
            ledger={"oracle_queries": queries},
        )

    def test_groups_by_algorithm(self):
        """Test each algorithm is fitted against its table row."""
        runs = [self.make_run("mst-cluster", n, n**1.5) for n in (8, 16, 32, 64)]
        runs += [self.make_run("knn", n, 4 * n**0.5) for n in (16, 32, 64, 128)]
        runs.append(self.make_run("knn", 256, 1, status="error"))
        table = ledger_report(runs)
        assert table["mst-cluster"]["exponent"] == pytest.approx(1.5)
        assert table["knn"]["exponent"] == pytest.approx(0.5)
        assert table["knn"]["points"] == 4
        assert table["mst-cluster"]["expected_exponent"] == 1.5

    def test_no_runs(self):
        """Test an empty run list raises InsufficientRuns."""
        with pytest.raises(InsufficientRuns):
            ledger_report([])


class TestReports:
    """Tests for report serialization."""

    def test_round_significant(self):
        """Test rounding to significant digits."""
        assert round_significant(123456.789, 3) == 123000.0
        assert round_significant(0.0, 3) == 0.0

    def test_to_plain(self):
        """Test numpy and complex values become JSON types."""
        plain = to_plain(
            {
                "third": np.float64(1 / 3),
                "array": np.array([1, 2]),
                "flag": np.bool_(True),
                "z": 1 + 2j,
                "inf": float("inf"),
                3: (1, 2),
            }
        )
        assert plain == {
            "third": 0.333333333333,
            "array": [1, 2],
            "flag": True,
            "z": {"real": 1.0, "imag": 2.0},
            "inf": "inf",
            "3": [1, 2],
        }
        json.dumps(plain)

    def test_tsv_with_rows(self):
        """Test TSV output has a '#' header and one line per row."""
        report = RunReport(
            version="test",
            config=ExperimentConfig(algorithm="bench"),
            status="ok",
            rows=[{"n": 8, "queries": 100}, {"n": 16, "queries": 290}],
        )
        assert report_tsv(report) == "#n\tqueries\n8\t100\n16\t290\n"

    def test_tsv_without_rows(self):
        """Test TSV falls back to scalar results."""
        report = RunReport(
            version="test", config=ExperimentConfig(algorithm="hhl-solve"), status="ok", results={"fidelity": 0.99, "solution": {}}
        )
        assert report_tsv(report) == "#key\tvalue\nfidelity\t0.99\n"

    def test_json_is_sorted(self, tmp_path):
        """Test JSON reports have sorted keys and load back."""
        report = RunReport(version="test", config=ExperimentConfig(algorithm="knn"), status="ok", results={"b": 1, "a": 2})
        text = report_json(report)
        assert text.index('"a"') < text.index('"b"')
        path = write_report(report, tmp_path / "nested" / "r.json")
        assert RunReport.model_validate_json(path.read_text()) == report

    def test_config_rejects_unknown_params(self):
        """Test unknown parameters fail validation."""
        with pytest.raises(ValueError):
            AlgorithmParams(warp=1)

    def test_seed_range(self):
        """Test seeds must fit in 64 bits."""
        with pytest.raises(ValueError):
            ExperimentConfig(algorithm="knn", seed=2**64)


class TestSweepRunner:
    """Tests for SweepRunner."""

    def test_results_in_grid_order(self):
        """Test tasks come back in grid order with per-point streams."""
        with SweepRunner(max_workers=4) as runner:
            tasks = runner.run([1, 2, 3, 4], lambda p, s: {"p": p, "draw": s.generator.random()}, RandomSource(5))
        assert [t.result["p"] for t in tasks] == [1, 2, 3, 4]
        assert all(t.status == SweepStatus.COMPLETED for t in tasks)

    def test_independent_of_worker_count(self):
        """Test results do not depend on scheduling."""

        def draw(p, s):
            return {"draw": s.generator.random()}

        with SweepRunner(max_workers=1) as one, SweepRunner(max_workers=4) as four:
            a = [t.result for t in one.run([1, 2, 3], draw, RandomSource(9))]
            b = [t.result for t in four.run([1, 2, 3], draw, RandomSource(9))]
        assert a == b

    def test_library_errors_mark_failed(self):
        """Test a library error fails the task and is logged."""
        lines = []

        def fn(p, s):
            if p == 2:
                raise ConfigError("bad point")
            return {"p": p}

        with SweepRunner(log_callback=lambda msg, level: lines.append(level)) as runner:
            tasks = runner.run([1, 2, 3], fn, RandomSource(0))
        assert [t.status for t in tasks] == [SweepStatus.COMPLETED, SweepStatus.FAILED, SweepStatus.COMPLETED]
        assert tasks[1].error == "bad point"
        assert "WARNING" in lines

    def test_cancelled_before_start(self):
        """Test a task cancelled before it runs is marked cancelled."""
        gate = threading.Event()
        with SweepRunner(max_workers=1) as runner:
            _, blocker = runner.submit("blocker", lambda: gate.wait(5) and {})
            task, future = runner.submit("second", lambda: {"ran": True})
            task.cancel()
            gate.set()
            future.result()
            blocker.result()
        assert task.status == SweepStatus.CANCELLED
        assert task.result is None


class TestRunExperiment:
    """Tests for run_experiment."""

    def test_unknown_algorithm(self):
        """Test an unknown algorithm raises UnknownAlgorithm."""
        with pytest.raises(UnknownAlgorithm):
            run_experiment(ExperimentConfig(algorithm="teleport"))

    def test_missing_dataset_is_reported(self):
        """Test library errors become error reports."""
        report = run_experiment(config("classify"))
        assert report.status == "error"
        assert report.error["code"] == "config_error"

    def test_classify(self, labeled_csv):
        """Test exact classification agrees with the classical labels."""
        report = run_experiment(config("classify", labeled_csv))
        assert report.status == "ok"
        assert report.results["agreement"] == 1.0
        assert len(report.rows) == 10

    def test_deterministic_apart_from_wall_time(self, labeled_csv):
        """Test the same config gives the same report."""
        cfg = ExperimentConfig(algorithm="knn", dataset=labeled_csv, seed=3, shots=100, params=AlgorithmParams(k=3, backend="sampled"))
        a = run_experiment(cfg).model_dump(exclude={"wall_time"})
        b = run_experiment(cfg).model_dump(exclude={"wall_time"})
        assert a == b

    def test_binary_classify(self, labeled_csv):
        """Test the two class centroids decide each query."""
        report = run_experiment(config("binary-classify", labeled_csv))
        assert report.results["classes"] == ["a", "b"]
        assert [p["label"] for p in report.results["predictions"]] == ["a"] * 5 + ["b"] * 5
        assert set(report.rows[0]) == {"query", "label", "gap", "pooled_standard_error"}

    def test_mst_cluster(self, labeled_csv):
        """Test clustering the blobs matches the classical tree weight."""
        report = run_experiment(config("mst-cluster", labeled_csv, k=2))
        assert report.results["total_weight"] == pytest.approx(report.results["classical_total_weight"])
        assert report.results["assignment"] == [0] * 5 + [1] * 5

    def test_hhl_solve(self, tmp_path):
        """Test a JSON system is solved with high fidelity."""
        path = tmp_path / "system.json"
        path.write_text(json.dumps({"A": [[2, 1], [1, 2]], "b": [1, 0]}))
        report = run_experiment(config("hhl-solve", str(path), clock_qubits=8))
        assert report.status == "ok"
        assert report.results["fidelity"] > 0.99

    def test_train_bm(self, tmp_path):
        """Test Boltzmann training reports one row per step."""
        path = write_patterns(tmp_path / "p.csv", [[1, 0, 1], [1, 0, 1], [0, 1, 0]])
        report = run_experiment(config("train-bm", str(path), hidden=2, steps=20))
        assert len(report.rows) == 21
        assert report.results["final_log_likelihood"] > report.results["initial_log_likelihood"]

    def test_train_perceptron(self, tmp_path):
        """Test perceptron training reaches full training accuracy."""
        path = tmp_path / "t.csv"
        path.write_text("label,x1,x2,x3\n1,1,0,0\n0,0,1,0\n1,0,0,1\n")
        report = run_experiment(config("train-perceptron", str(path), clock_qubits=4))
        assert report.results["training_accuracy"] == 1.0
        assert report.results["model"]["decoded_weights"] == [1, 0, 1]

    def test_qpca_density_input(self, tmp_path):
        """Test a density matrix file is read directly."""
        path = tmp_path / "rho.csv"
        path.write_text(f"{5 / 7!r},0\n0,{2 / 7!r}\n")
        report = run_experiment(config("qpca", str(path), input="density", clock_qubits=3, copies=10000))
        assert report.results["decomposition"]["eigenvalues"][0] == pytest.approx(5 / 7, abs=1e-3)
        assert [row["copies"] for row in report.rows][:3] == [1, 2, 4]

    def test_bench_copies(self):
        """Test the copies sweep fits an exponent near -1."""
        report = run_experiment(config("bench", sweep="copies", grid=[8, 16, 32, 64]))
        assert report.status == "ok"
        assert -1.3 < report.results["fit"]["exponent"] < -0.7

    def test_bench_mst(self):
        """Test the spanning-tree sweep fits both counts."""
        report = run_experiment(config("bench", sweep="mst", grid=[8, 16, 32, 64]))
        assert report.results["fit"]["expected_exponent"] == 1.5
        assert 1.9 < report.results["classical_fit"]["exponent"] < 2.2
        assert report.ledger["oracle_queries"] == sum(row["queries"] for row in report.rows)

    def test_bench_mst_default_grid_beats_edge_scan(self):
        """Test spanning-tree queries over 8..128 points grow at most as n^1.6."""
        report = run_experiment(config("bench", sweep="mst"))
        assert report.status == "ok"
        assert [row["n"] for row in report.rows] == [8, 16, 32, 64, 128]
        assert report.results["fit"]["exponent"] <= 1.6
        assert report.results["classical_fit"]["exponent"] >= 1.9

    def test_bench_knn(self):
        """Test k-NN minimum-finding queries grow about as the square root of n."""
        report = run_experiment(config("bench", sweep="knn"))
        assert report.status == "ok"
        assert report.results["fit"]["expected_exponent"] == 0.5
        assert 0.3 < report.results["fit"]["exponent"] <= 0.6

    def test_bench_shots(self):
        """Test the spread of p_hat falls as shots^-1/2."""
        report = run_experiment(config("bench", sweep="shots"))
        assert report.status == "ok"
        assert [row["shots"] for row in report.rows] == [100, 1000, 10000, 100000]
        assert -0.55 <= report.results["fit"]["exponent"] <= -0.45

    def test_bench_too_few_points(self):
        """Test a sweep with three grid points reports insufficient runs."""
        report = run_experiment(config("bench", sweep="copies", grid=[8, 16, 32]))
        assert report.status == "error"
        assert report.error["code"] == "insufficient_runs"

    def test_unknown_sweep(self):
        """Test an unknown sweep name is a config error."""
        report = run_experiment(config("bench", sweep="warp"))
        assert report.error["code"] == "config_error"
