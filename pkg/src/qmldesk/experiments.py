"""
Experiment configuration, dispatch, sweeps and reports.

A run is described by an ExperimentConfig and produces a RunReport holding
the results, a snapshot of the resource ledger, optional plot rows and the
wall time. All randomness flows from the config seed through split
streams, so a rerun of the same config gives the same report apart from
the wall time.
"""

import json
import math
import threading
import time
from collections.abc import Callable, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from qmldesk import __version__
from qmldesk.boltzmann import BoltzmannMachine, train_bm
from qmldesk.datasets import load_binary, load_labeled, load_linear_system, load_matrix, load_training_set
from qmldesk.distance import (
    CentroidModel,
    LabeledDataset,
    binary_classify,
    classical_nearest_centroid,
    estimate_distance,
    nearest_centroid_estimates,
    pick_closest,
)
from qmldesk.errors import ConfigError, InsufficientRuns, QmlDeskError, UnknownAlgorithm
from qmldesk.grover import KNNConfig, classical_knn, classical_mst, knn_search, mst_cluster
from qmldesk.hhl import HHLParams, LinearSystem, hhl_solve
from qmldesk.ledger import SCALING_TABLE, ResourceLedger
from qmldesk.perceptron import ActivationRule, classical_baselines, classify, exhaustive_binary_solution, train_weights
from qmldesk.qpca import (
    ExponentiationPlan,
    PrincipalDecomposition,
    dm_exponentiate,
    principal_projection_error,
    qpca_extract,
    spectrum_flatness,
)
from qmldesk.settings import Settings, resolve
from qmldesk.sim import DensityMatrix, QuantumState, RandomSource

LogCallback = Callable[[str, str], None]

SWEEPS = ("shots", "copies", "mst", "knn", "hhl-clock")

DEFAULT_GRIDS: dict[str, list[float]] = {
    "shots": [100, 1000, 10000, 100000],
    "copies": [8, 16, 32, 64, 128],
    "mst": [8, 16, 32, 64, 128],
    "knn": [16, 32, 64, 128, 256],
    "hhl-clock": [3, 4, 5, 6, 7, 8],
}


# -------------------------------------------------------------------------
# Config and report models
# -------------------------------------------------------------------------


class AlgorithmParams(BaseModel):
    """Algorithm parameters; each algorithm reads the ones it needs."""

    model_config = ConfigDict(extra="forbid")

    clock_qubits: int | None = Field(None, ge=1, description="Clock register width")
    mode: str | None = Field(None, description="exact | sampled (HHL), exact | least-squares (perceptron)")
    k: int | None = Field(None, ge=1, description="Neighbours (knn) or clusters (mst-cluster)")
    backend: str | None = Field(None, description="exact | sampled (knn), exact | mean-field (train-bm)")
    time: float = Field(1.0, ge=0, description="Evolution time for density-matrix exponentiation")
    copies: int = Field(128, ge=1, description="Copies of rho consumed per unit of squared time")
    hidden: int = Field(3, ge=1, description="Hidden units")
    steps: int = Field(500, ge=0, description="Training steps")
    lr: float = Field(0.1, gt=0, description="Learning rate")
    query: str | None = Field(None, description="CSV file of query points")
    bias: float = Field(0.0, description="Global perceptron bias")
    centroids: bool = Field(False, description="Replace each class by its mean vector")
    verify: bool = Field(False, description="Verify min-finding results with a linear check")
    input: Literal["covariance", "density"] = Field("covariance", description="How qpca reads its data file")
    sweep: str | None = Field(None, description="Bench sweep: " + ", ".join(SWEEPS))
    grid: list[float] | None = Field(None, description="Grid of the swept parameter")
    reps: int = Field(200, ge=2, description="Repetitions per grid point in the shots sweep")


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce a run."""

    model_config = ConfigDict(extra="forbid")

    algorithm: str
    dataset: str | None = None
    seed: int = Field(0, ge=0, lt=2**64)
    shots: int = Field(0, ge=0)
    params: AlgorithmParams = Field(default_factory=AlgorithmParams)
    out: str | None = None
    format: Literal["json", "tsv"] = "json"


class RunReport(BaseModel):
    """Config echo, results, ledger snapshot and wall time of one run."""

    version: str
    config: ExperimentConfig
    status: Literal["ok", "error"]
    results: dict[str, Any] = Field(default_factory=dict)
    rows: list[dict[str, Any]] = Field(default_factory=list, description="Plot data, one row per point")
    ledger: dict[str, Any] = Field(default_factory=dict)
    error: dict[str, str] | None = None
    wall_time: float = Field(0.0, description="Seconds; excluded from determinism")


def round_significant(value: float, digits: int) -> float:
    if value == 0 or not math.isfinite(value):
        return value
    return float(f"{value:.{digits}g}")


def to_plain(obj: Any, digits: int = 12) -> Any:
    """Convert results to JSON types, rounding floats to ``digits`` significant digits."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v, digits) for k, v in obj.items()}
    if isinstance(obj, list | tuple):
        return [to_plain(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist(), digits)
    if isinstance(obj, bool | np.bool_):
        return bool(obj)
    if isinstance(obj, int | np.integer):
        return int(obj)
    if isinstance(obj, complex | np.complexfloating):
        return {"real": round_significant(float(obj.real), digits), "imag": round_significant(float(obj.imag), digits)}
    if isinstance(obj, float | np.floating):
        value = float(obj)
        if not math.isfinite(value):
            return str(value)
        return round_significant(value, digits)
    return obj


def report_json(report: RunReport) -> str:
    """Sorted-key JSON so equal reports are byte-identical."""
    return json.dumps(report.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def report_tsv(report: RunReport) -> str:
    """Plot rows as TSV with a '#' header; scalar results when there are no rows."""
    if report.rows:
        columns = list(report.rows[0])
        lines = ["#" + "\t".join(columns)]
        lines += ["\t".join(_cell(row.get(c)) for c in columns) for row in report.rows]
    else:
        lines = ["#key\tvalue"]
        lines += [f"{k}\t{_cell(v)}" for k, v in sorted(report.results.items()) if not isinstance(v, dict | list)]
    return "\n".join(lines) + "\n"


def _cell(value: Any) -> str:
    if isinstance(value, dict | list):
        return json.dumps(value, sort_keys=True)
    return "" if value is None else str(value)


def write_report(report: RunReport, path: Path | str, fmt: Literal["json", "tsv"] = "json") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_json(report) if fmt == "json" else report_tsv(report), encoding="utf-8")
    return path


# -------------------------------------------------------------------------
# Sweeps
# -------------------------------------------------------------------------


class SweepStatus(Enum):
    """Status of one grid point."""

    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELLED = "cancelled"


@dataclass
class SweepTask:
    """Tracks one grid point of a sweep."""

    id: str
    description: str
    status: SweepStatus = SweepStatus.PENDING
    result: dict | None = None
    error: str | None = None
    _cancelled: bool = False

    def cancel(self) -> None:
        """Request cancellation; honoured if the task has not started."""
        self._cancelled = True

    @property
    def is_cancelled(self) -> bool:
        return self._cancelled


class SweepRunner:
    """
    Runs grid points on a thread pool.

    Each point gets its own random stream spawned from the master source,
    so results do not depend on scheduling order.
    """

    def __init__(self, max_workers: int = 4, log_callback: LogCallback | None = None):
        self._log = log_callback or (lambda msg, level: None)
        self._executor = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="qmldesk-sweep")
        self._tasks: dict[str, SweepTask] = {}
        self._task_counter = 0
        self._lock = threading.Lock()

    def close(self) -> None:
        """Shutdown the thread pool."""
        self._executor.shutdown(wait=True, cancel_futures=True)

    def __enter__(self) -> "SweepRunner":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _next_task_id(self) -> str:
        with self._lock:
            self._task_counter += 1
            return f"sweep-{self._task_counter}"

    def submit(self, description: str, fn: Callable[[], dict]) -> tuple[SweepTask, Future]:
        task = SweepTask(id=self._next_task_id(), description=description)
        self._tasks[task.id] = task

        def do_task():
            if task.is_cancelled:
                task.status = SweepStatus.CANCELLED
                return
            task.status = SweepStatus.RUNNING
            try:
                task.result = fn()
                task.status = SweepStatus.COMPLETED
            except QmlDeskError as e:
                task.status = SweepStatus.FAILED
                task.error = str(e)
                self._log(f"{task.description} failed: {e}", "WARNING")
                return
            self._log(f"{task.description} completed", "DEBUG")

        return task, self._executor.submit(do_task)

    def run(
        self,
        points: Sequence[float],
        fn: Callable[[float, RandomSource], dict],
        rng: RandomSource,
        label: str = "point",
    ) -> list[SweepTask]:
        """Run ``fn(point, stream)`` for every grid point; tasks come back in grid order."""
        streams = rng.spawn(len(points))
        submitted = [
            self.submit(f"{label}={point:g}", lambda p=point, s=stream: fn(p, s))
            for point, stream in zip(points, streams, strict=True)
        ]
        for _, future in submitted:
            future.result()
        return [task for task, _ in submitted]


# -------------------------------------------------------------------------
# Scaling fits
# -------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentFit:
    """Log-log slope of a counter against a size parameter, with a 95% interval."""

    exponent: float
    intercept: float
    ci_low: float
    ci_high: float
    points: int

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "points": self.points,
        }


def fit_exponent(sizes: Sequence[float], counts: Sequence[float], min_points: int = 4) -> ExponentFit:
    """
    Fit log(count) = exponent * log(size) + intercept.

    Raises:
        InsufficientRuns: With fewer than ``min_points`` distinct sizes
    """
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(counts, dtype=float)
    if x.size != y.size:
        raise ValueError(f"{x.size} sizes but {y.size} counts")
    if np.unique(x).size < min_points:
        raise InsufficientRuns(f"need at least {min_points} distinct sizes, got {np.unique(x).size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("Sizes and counts must be positive for a log-log fit")
    fit = stats.linregress(np.log(x), np.log(y))
    half = float(stats.t.ppf(0.975, x.size - 2) * fit.stderr)
    slope = float(fit.slope)
    return ExponentFit(slope, float(fit.intercept), slope - half, slope + half, int(x.size))


def ledger_report(runs: Sequence[RunReport]) -> dict[str, dict]:
    """
    Fit the ledgered counter of each algorithm against its size parameter.

    Runs are grouped by algorithm. The counter and size parameter come from
    SCALING_TABLE; each run must record its size under results["size"].

    Raises:
        InsufficientRuns: When an algorithm has fewer than 4 usable runs
    """
    groups: dict[str, list[RunReport]] = {}
    for run in runs:
        if run.status == "ok":
            groups.setdefault(run.config.algorithm, []).append(run)
    if not groups:
        raise InsufficientRuns("no successful runs to fit")

    table = {}
    for algorithm, group in sorted(groups.items()):
        model = SCALING_TABLE.get(algorithm)
        if model is None:
            raise UnknownAlgorithm(f"No scaling model for {algorithm!r}")
        sizes = [run.results["size"][model.size_parameter] for run in group]
        counts = [run.ledger[model.counter] for run in group]
        fit = fit_exponent(sizes, counts)
        table[algorithm] = {
            "counter": model.counter,
            "size_parameter": model.size_parameter,
            "quantum_time": model.quantum_time,
            "classical_time": model.classical_time,
            "expected_exponent": model.expected_exponent,
            **fit.to_dict(),
        }
    return table


# -------------------------------------------------------------------------
# Algorithm runners
# -------------------------------------------------------------------------


@dataclass
class RunContext:
    cfg: ExperimentConfig
    rng: RandomSource
    ledger: ResourceLedger
    settings: Settings
    log: LogCallback

    @property
    def params(self) -> AlgorithmParams:
        return self.cfg.params

    def dataset_path(self) -> str:
        if not self.cfg.dataset:
            raise ConfigError(f"{self.cfg.algorithm} needs --dataset")
        return self.cfg.dataset


RunOutput = tuple[dict[str, Any], list[dict[str, Any]]]


def _queries(ctx: RunContext, dataset: LabeledDataset) -> np.ndarray:
    if ctx.params.query is None:
        return np.asarray(dataset.features)
    queries = np.atleast_2d(load_matrix(ctx.params.query))
    if np.iscomplexobj(queries):
        raise ConfigError("Query points must be real")
    if queries.shape[1] != dataset.num_features:
        raise ConfigError(f"Queries have {queries.shape[1]} features, the dataset has {dataset.num_features}")
    return queries


def _run_classify(ctx: RunContext) -> RunOutput:
    dataset = load_labeled(ctx.dataset_path())
    model = CentroidModel.from_dataset(dataset, centroids_only=ctx.params.centroids)
    classical_model = CentroidModel.from_dataset(dataset, centroids_only=True)
    queries = _queries(ctx, dataset)
    predictions = []
    for i, (u, stream) in enumerate(zip(queries, ctx.rng.spawn(len(queries)), strict=True)):
        estimates = nearest_centroid_estimates(u, model, ctx.cfg.shots, stream, ctx.ledger, ctx.settings)
        predictions.append(
            {
                "query": i,
                "label": pick_closest({c: e.distance for c, e in estimates.items()}),
                "classical_label": classical_nearest_centroid(u, classical_model),
                "distances": {c: e.to_dict() for c, e in estimates.items()},
            }
        )
    agreement = float(np.mean([p["label"] == p["classical_label"] for p in predictions]))
    ctx.log(f"Classified {len(predictions)} point(s), agreement with classical {agreement:.3f}", "INFO")
    rows = [{"query": p["query"], "label": p["label"], "classical_label": p["classical_label"]} for p in predictions]
    return {"predictions": predictions, "agreement": agreement, "size": {"n": len(dataset)}}, rows


def _run_binary_classify(ctx: RunContext) -> RunOutput:
    dataset = load_labeled(ctx.dataset_path())
    classes = dataset.classes
    if len(classes) != 2:
        raise ConfigError(f"binary-classify needs exactly two classes, found {len(classes)}")
    centroids = CentroidModel.from_dataset(dataset, centroids_only=True).references
    v_a, v_b = (centroids[c][0] for c in classes)
    names = {"A": classes[0], "B": classes[1]}
    queries = _queries(ctx, dataset)
    predictions = []
    for i, (u, stream) in enumerate(zip(queries, ctx.rng.spawn(len(queries)), strict=True)):
        result = binary_classify(u, v_a, v_b, ctx.cfg.shots, stream, ctx.ledger, ctx.settings)
        predictions.append({"query": i, **result.to_dict(), "label": names[result.label]})
    rows = [
        {
            "query": p["query"],
            "label": p["label"],
            "gap": p["gap"],
            "pooled_standard_error": p["pooled_standard_error"],
        }
        for p in predictions
    ]
    return {"classes": classes, "predictions": predictions, "size": {"n": len(dataset)}}, rows


def _run_knn(ctx: RunContext) -> RunOutput:
    dataset = load_labeled(ctx.dataset_path())
    cfg = KNNConfig(k=ctx.params.k or 3, shots=ctx.cfg.shots, backend=ctx.params.backend or "exact")
    queries = _queries(ctx, dataset)
    predictions = []
    for i, (u, stream) in enumerate(zip(queries, ctx.rng.spawn(len(queries)), strict=True)):
        result = knn_search(u, dataset, cfg, stream, ctx.ledger, ctx.settings, ctx.params.verify, ctx.log)
        predictions.append({"query": i, **result.to_dict(), "classical_label": classical_knn(u, dataset, cfg.k)})
    rows = [{"query": p["query"], "label": p["label"], "queries": p["queries"]} for p in predictions]
    return {"k": cfg.k, "backend": cfg.backend, "predictions": predictions, "size": {"n": len(dataset)}}, rows


def _run_mst_cluster(ctx: RunContext) -> RunOutput:
    points = np.real_if_close(load_matrix(ctx.dataset_path()))
    if np.iscomplexobj(points):
        raise ConfigError("Points must be real")
    k = ctx.params.k or 2
    result = mst_cluster(points, k, ctx.rng, ctx.ledger, ctx.settings, log_callback=ctx.log)
    baseline = classical_mst(points, k)
    rows = [{"point": i, "cluster": c} for i, c in enumerate(result.assignment)]
    return {
        **result.to_dict(),
        "clusters": k,
        "classical_total_weight": baseline.total_weight,
        "classical_queries": baseline.queries,
        "size": {"n": int(points.shape[0])},
    }, rows


def _complex_dict(vector: np.ndarray) -> dict:
    return {"real": np.real(vector).tolist(), "imag": np.imag(vector).tolist()}


def _run_hhl_solve(ctx: RunContext) -> RunOutput:
    system = load_linear_system(ctx.dataset_path())
    params = HHLParams.for_system(system, ctx.params.clock_qubits or 8)
    mode = ctx.params.mode or "exact"
    result = hhl_solve(system, params, ctx.rng, ctx.ledger, ctx.settings, mode=mode, log_callback=ctx.log)
    reference, *_ = np.linalg.lstsq(system.matrix, system.rhs, rcond=None)
    fidelity = result.fidelity(reference)
    ctx.log(f"Fidelity against the dense solve: {fidelity:.6f}", "INFO")
    return {
        "solution": _complex_dict(result.solution),
        "success_probability": result.success_probability,
        "attempts": result.attempts,
        "fidelity": fidelity,
        "params": {
            "clock_qubits": params.clock_qubits,
            "evolution_time": params.evolution_time,
            "eigenvalue_cutoff": params.eigenvalue_cutoff,
            "inversion_constant": params.inversion_constant,
            "signed": params.signed,
        },
        "size": {"n": system.shape[0]},
    }, []


def _run_train_perceptron(ctx: RunContext) -> RunOutput:
    ts = load_training_set(ctx.dataset_path(), ctx.params.bias)
    mode = ctx.params.mode or "exact"
    weights = train_weights(
        ts,
        rng=ctx.rng,
        ledger=ctx.ledger,
        settings=ctx.settings,
        mode=mode,
        clock_qubits=ctx.params.clock_qubits or 8,
        log_callback=ctx.log,
    )
    rule = ActivationRule(ts.bias)
    predictions = [classify(weights, x, rule, ctx.ledger, ctx.settings) for x in ts.inputs]
    accuracy = float(np.mean(np.asarray(predictions) == ts.labels))
    exhaustive = exhaustive_binary_solution(ts)
    rows = [{"instance": i, "label": int(y), "predicted": p} for i, (y, p) in enumerate(zip(ts.labels, predictions, strict=True))]
    return {
        "model": weights.to_dict(),
        "training_accuracy": accuracy,
        "exhaustive_solution": list(exhaustive) if exhaustive is not None else None,
        "baselines": classical_baselines(ts, ctx.ledger).to_dict(),
        "size": {"n": ts.num_instances},
    }, rows


def _run_qpca(ctx: RunContext) -> RunOutput:
    data = load_matrix(ctx.dataset_path())
    if ctx.params.input == "density":
        rho = DensityMatrix(data.shape[0], data)
    else:
        rho = DensityMatrix.from_data(np.real_if_close(data))
    plan = ExponentiationPlan(ctx.params.time, ctx.params.copies)
    clock_qubits = ctx.params.clock_qubits or 6
    extract_rng, _ = ctx.rng.spawn(2)
    decomposition = qpca_extract(
        rho, plan, clock_qubits, extract_rng, ctx.ledger, ctx.settings, shots=ctx.cfg.shots, log_callback=ctx.log
    )
    exact = PrincipalDecomposition.exact(rho, ctx.settings.retained_rank_threshold)
    rank = min(decomposition.rank, exact.rank)

    # Error scaling of the exponentiation, probed on |0><0|
    sigma = DensityMatrix.from_state(QuantumState.basis(rho.num_qubits, 0))
    rows = []
    copies = 1
    while copies <= plan.n_copies:
        step_plan = ExponentiationPlan(plan.time, copies)
        if step_plan.dt * rho.spectral_norm() <= 1:
            _, error = dm_exponentiate(rho, sigma, step_plan, ResourceLedger(), ctx.settings)
            rows.append({"copies": copies, "trace_distance": error, "error_scale": step_plan.error_scale})
        copies *= 2
    return {
        "decomposition": decomposition.to_dict(include_vectors=True),
        "exact": exact.to_dict(),
        "projection_error": principal_projection_error(rho, decomposition, rank),
        "flatness": spectrum_flatness(rho).to_dict(),
        "size": {"copies": plan.n_copies, "d": rho.dim},
    }, rows


def _run_train_bm(ctx: RunContext) -> RunOutput:
    data = load_binary(ctx.dataset_path())
    backend = ctx.params.backend or "exact"
    bm0 = BoltzmannMachine.random(data.n_visible, ctx.params.hidden, ctx.rng, scale=0.1)
    trace = train_bm(bm0, data, backend, ctx.params.steps, ctx.params.lr, ctx.ledger, ctx.settings, ctx.log)
    rows = [{"step": i, "log_likelihood": value} for i, value in enumerate(trace.log_likelihoods)]
    return {
        "backend": backend,
        "machine": trace.machine.to_dict(),
        "initial_log_likelihood": trace.log_likelihoods[0],
        "final_log_likelihood": trace.log_likelihoods[-1],
        "size": {"n": len(data)},
    }, rows


# -------------------------------------------------------------------------
# Bench sweeps
# -------------------------------------------------------------------------


def _shots_point(u: np.ndarray, v: np.ndarray, reps: int, settings: Settings, total: ResourceLedger):
    def run(shots: float, rng: RandomSource) -> dict:
        ledger = ResourceLedger()
        estimates = [estimate_distance(u, [v], int(shots), stream, ledger, settings) for stream in rng.spawn(reps)]
        p_hat = np.array([e.p_hat for e in estimates])
        total.merge(ledger)
        return {
            "shots": int(shots),
            "p_hat_std": float(np.std(p_hat, ddof=1)),
            "p_hat_mean": float(np.mean(p_hat)),
            "p_exact": estimates[0].p_exact,
            "ledger_shots": ledger.shots,
        }

    return run


def _copies_point(rho: DensityMatrix, sigma: DensityMatrix, time_: float, settings: Settings, total: ResourceLedger):
    def run(copies: float, rng: RandomSource) -> dict:
        ledger = ResourceLedger()
        plan = ExponentiationPlan(time_, int(copies))
        _, error = dm_exponentiate(rho, sigma, plan, ledger, settings)
        total.merge(ledger)
        return {"copies": int(copies), "trace_distance": error, "copies_consumed": ledger.copies_consumed}

    return run


def _mst_point(settings: Settings, verify: bool, total: ResourceLedger):
    def run(n: float, rng: RandomSource) -> dict:
        points_rng, search_rng = rng.spawn(2)
        points = points_rng.generator.random((int(n), 2))
        ledger = ResourceLedger()
        result = mst_cluster(points, 1, search_rng, ledger, settings, verify=verify)
        baseline = classical_mst(points)
        total.merge(ledger)
        return {
            "n": int(n),
            "queries": ledger.oracle_queries,
            "classical_queries": baseline.queries,
            "unverified_steps": result.unverified_steps,
        }

    return run


def _knn_point(settings: Settings, verify: bool, total: ResourceLedger):
    def run(n: float, rng: RandomSource) -> dict:
        data_rng, search_rng = rng.spawn(2)
        g = data_rng.generator
        count = int(n)
        features = g.normal(size=(count, 4)) + np.repeat([[2.0, 0, 0, 0], [0, 2.0, 0, 0]], [count // 2, count - count // 2], axis=0)
        labels = ["0"] * (count // 2) + ["1"] * (count - count // 2)
        dataset = LabeledDataset(features, tuple(labels))
        query = g.normal(size=4) + np.array([2.0, 0, 0, 0])
        ledger = ResourceLedger()
        result = knn_search(query, dataset, KNNConfig(k=1), search_rng, ledger, settings, verify)
        total.merge(ledger)
        return {"n": count, "queries": ledger.oracle_queries, "shots": ledger.shots, "exhausted": result.exhausted}

    return run


def _hhl_clock_point(system: LinearSystem, settings: Settings, total: ResourceLedger):
    reference, *_ = np.linalg.lstsq(system.matrix, system.rhs, rcond=None)

    def run(clock_qubits: float, rng: RandomSource) -> dict:
        ledger = ResourceLedger()
        params = HHLParams.for_system(system, int(clock_qubits))
        result = hhl_solve(system, params, rng, ledger, settings)
        total.merge(ledger)
        return {
            "clock_qubits": int(clock_qubits),
            "fidelity": result.fidelity(reference),
            "success_probability": result.success_probability,
            "gate_count": ledger.gate_count,
        }

    return run


def _random_hermitian(dim: int, rng: RandomSource, low: float = 1.0, high: float = 4.0) -> np.ndarray:
    g = rng.generator
    q, _ = np.linalg.qr(g.normal(size=(dim, dim)) + 1j * g.normal(size=(dim, dim)))
    values = g.uniform(low, high, dim)
    a = q @ np.diag(values) @ q.conj().T
    return (a + a.conj().T) / 2


def _run_bench(ctx: RunContext) -> RunOutput:
    sweep = ctx.params.sweep or "shots"
    if sweep not in SWEEPS:
        raise ConfigError(f"Unknown sweep {sweep!r}; choose from {', '.join(SWEEPS)}")
    grid = ctx.params.grid or DEFAULT_GRIDS[sweep]
    setup_rng, sweep_rng = ctx.rng.spawn(2)
    g = setup_rng.generator

    if sweep == "shots":
        point = _shots_point(g.normal(size=4), g.normal(size=4), ctx.params.reps, ctx.settings, ctx.ledger)
        x_key, y_key, expected = "shots", "p_hat_std", -0.5
    elif sweep == "copies":
        rho = DensityMatrix.random(4, setup_rng)
        sigma = DensityMatrix.random(4, setup_rng)
        point = _copies_point(rho, sigma, ctx.params.time, ctx.settings, ctx.ledger)
        x_key, y_key, expected = "copies", "trace_distance", -1.0
    elif sweep == "mst":
        point = _mst_point(ctx.settings, True, ctx.ledger)
        x_key, y_key, expected = "n", "queries", SCALING_TABLE["mst-cluster"].expected_exponent
    elif sweep == "knn":
        point = _knn_point(ctx.settings, ctx.params.verify, ctx.ledger)
        x_key, y_key, expected = "n", "queries", SCALING_TABLE["knn"].expected_exponent
    else:
        system = LinearSystem(_random_hermitian(4, setup_rng), g.normal(size=4))
        point = _hhl_clock_point(system, ctx.settings, ctx.ledger)
        x_key, y_key, expected = "clock_qubits", "fidelity", None

    ctx.log(f"Running {sweep} sweep over {len(grid)} grid points", "INFO")
    with SweepRunner(ctx.settings.max_workers, ctx.log) as runner:
        tasks = runner.run(grid, point, sweep_rng, label=x_key)

    failed = [t for t in tasks if t.status != SweepStatus.COMPLETED]
    rows = [t.result for t in tasks if t.status == SweepStatus.COMPLETED]
    results: dict[str, Any] = {
        "sweep": sweep,
        "grid": list(grid),
        "failed": [{"task": t.description, "error": t.error} for t in failed],
    }
    if expected is not None:
        fit = fit_exponent([r[x_key] for r in rows], [r[y_key] for r in rows])
        results["fit"] = {"x": x_key, "y": y_key, "expected_exponent": expected, **fit.to_dict()}
        if sweep == "mst":
            classical = fit_exponent([r["n"] for r in rows], [r["classical_queries"] for r in rows])
            results["classical_fit"] = classical.to_dict()
    return results, rows


ALGORITHMS: dict[str, Callable[[RunContext], RunOutput]] = {
    "classify": _run_classify,
    "binary-classify": _run_binary_classify,
    "knn": _run_knn,
    "mst-cluster": _run_mst_cluster,
    "hhl-solve": _run_hhl_solve,
    "train-perceptron": _run_train_perceptron,
    "qpca": _run_qpca,
    "train-bm": _run_train_bm,
    "bench": _run_bench,
}


def run_experiment(
    cfg: ExperimentConfig,
    settings: Settings | None = None,
    log_callback: LogCallback | None = None,
) -> RunReport:
    """
    Run one algorithm and assemble its report.

    Library errors are captured in the report (status "error"); anything
    else propagates.

    Raises:
        UnknownAlgorithm: If cfg.algorithm names no runner
    """
    runner = ALGORITHMS.get(cfg.algorithm)
    if runner is None:
        raise UnknownAlgorithm(f"Unknown algorithm {cfg.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    settings = resolve(settings)
    log = log_callback or (lambda msg, level: None)
    ctx = RunContext(cfg, RandomSource(cfg.seed), ResourceLedger(), settings, log)

    start = time.perf_counter()
    try:
        results, rows = runner(ctx)
        status, error = "ok", None
    except QmlDeskError as e:
        log(f"{cfg.algorithm} failed: {e}", "ERROR")
        results, rows, status, error = {}, [], "error", e.to_dict()
    wall_time = time.perf_counter() - start

    digits = settings.report_digits
    return RunReport(
        version=__version__,
        config=cfg,
        status=status,
        results=to_plain(results, digits),
        rows=to_plain(rows, digits),
        ledger=to_plain(ctx.ledger.snapshot(), digits),
        error=error,
        wall_time=wall_time,
    )
