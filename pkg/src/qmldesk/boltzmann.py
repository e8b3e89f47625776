"""
Restricted Boltzmann machines trained on the exact Gibbs distribution.

The exact table stands in for the Gibbs state a quantum preparation would
sample from. A damped mean-field approximation gives the classical baseline.
"""

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import expit, logsumexp

from qmldesk.errors import DimensionMismatch, EmptyTrainingSet, MeanFieldNonConvergence, SizeCapExceeded
from qmldesk.ledger import ResourceLedger
from qmldesk.settings import Settings, resolve
from qmldesk.sim import RandomSource


def _bit_table(width: int) -> np.ndarray:
    """All 2^width bit patterns, most significant bit first."""
    index = np.arange(2**width)[:, None]
    shifts = np.arange(width - 1, -1, -1)[None, :]
    return ((index >> shifts) & 1).astype(float)


@dataclass(frozen=True, eq=False)
class BoltzmannMachine:
    """
    Visible biases ``a``, hidden biases ``b`` and weights ``w`` (n_v x n_h).

    Energy: E(v, h) = -a.v - b.h - v.W.h
    """

    a: np.ndarray
    b: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        w = np.asarray(self.w, dtype=float)
        if w.size == 0:
            w = np.zeros((a.size, b.size))
        if w.shape != (a.size, b.size):
            raise DimensionMismatch(f"weights must be {a.size}x{b.size}, got {w.shape}")
        for name, value in (("a", a), ("b", b), ("w", w)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int) -> "BoltzmannMachine":
        return cls(np.zeros(n_visible), np.zeros(n_hidden), np.zeros((n_visible, n_hidden)))

    @classmethod
    def random(cls, n_visible: int, n_hidden: int, rng: RandomSource, scale: float = 1.0) -> "BoltzmannMachine":
        g = rng.generator
        return cls(
            g.normal(0, scale, n_visible),
            g.normal(0, scale, n_hidden),
            g.normal(0, scale, (n_visible, n_hidden)),
        )

    @property
    def n_visible(self) -> int:
        return self.a.size

    @property
    def n_hidden(self) -> int:
        return self.b.size

    @property
    def num_units(self) -> int:
        return self.n_visible + self.n_hidden

    def energy(self, v, h) -> float:
        v = np.asarray(v, dtype=float)
        h = np.asarray(h, dtype=float)
        return float(-(self.a @ v) - (self.b @ h) - v @ self.w @ h)

    def hidden_activation(self, v) -> np.ndarray:
        """P(h_j = 1 | v) for each hidden unit."""
        return expit(self.b + np.asarray(v, dtype=float) @ self.w)

    def step(self, gradient: "Gradient", learning_rate: float) -> "BoltzmannMachine":
        """One ascent step along the log-likelihood gradient."""
        return BoltzmannMachine(
            self.a + learning_rate * gradient.a,
            self.b + learning_rate * gradient.b,
            self.w + learning_rate * gradient.w,
        )

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "b": self.b.tolist(), "w": self.w.tolist()}


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """Unique visible patterns with empirical weights summing to 1."""

    patterns: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        patterns = np.atleast_2d(np.asarray(self.patterns, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if patterns.shape[0] == 0 or patterns.size == 0:
            raise EmptyTrainingSet("Binary dataset has no patterns")
        if weights.size != patterns.shape[0]:
            raise DimensionMismatch(f"{patterns.shape[0]} patterns but {weights.size} weights")
        if not np.isin(patterns, (0.0, 1.0)).all():
            raise ValueError("Binary patterns may only contain 0 and 1")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("Pattern weights must be non-negative with a positive sum")
        patterns.setflags(write=False)
        weights = weights / weights.sum()
        weights.setflags(write=False)
        object.__setattr__(self, "patterns", patterns)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_patterns(cls, rows: Sequence[Sequence[int]]) -> "BinaryDataset":
        """Merge duplicate rows, weighting each unique pattern by its frequency."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.size == 0:
            raise EmptyTrainingSet("Binary dataset has no patterns")
        unique, counts = np.unique(rows, axis=0, return_counts=True)
        return cls(unique, counts.astype(float))

    @property
    def n_visible(self) -> int:
        return self.patterns.shape[1]

    def __len__(self) -> int:
        return self.patterns.shape[0]


@dataclass(frozen=True, eq=False)
class GibbsTable:
    """Exact joint distribution over every (v, h) configuration, visible bits first."""

    visible: np.ndarray
    hidden: np.ndarray
    energies: np.ndarray
    probabilities: np.ndarray
    log_partition: float

    def marginal_visible(self) -> np.ndarray:
        """P(v) for every visible pattern, in the order of ``_bit_table(n_v)``."""
        n_h = self.hidden.shape[1]
        return self.probabilities.reshape(-1, 2**n_h).sum(axis=1)

    def expectations(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Model averages <v>, <h> and <v h^T>."""
        p = self.probabilities
        return p @ self.visible, p @ self.hidden, (self.visible * p[:, None]).T @ self.hidden


@dataclass(frozen=True, eq=False)
class Gradient:
    """Log-likelihood gradient in the shape of the machine parameters."""

    a: np.ndarray
    b: np.ndarray
    w: np.ndarray

    def norm(self) -> float:
        return float(math.sqrt(np.sum(self.a**2) + np.sum(self.b**2) + np.sum(self.w**2)))

    def __sub__(self, other: "Gradient") -> "Gradient":
        return Gradient(self.a - other.a, self.b - other.b, self.w - other.w)


def _check_size(bm: BoltzmannMachine, settings: Settings) -> None:
    if bm.num_units > settings.boltzmann_max_units:
        raise SizeCapExceeded(
            f"{bm.num_units} units exceed the exact-enumeration cap of {settings.boltzmann_max_units}"
        )


def _check_data(bm: BoltzmannMachine, data: BinaryDataset) -> None:
    if data.n_visible != bm.n_visible:
        raise DimensionMismatch(f"patterns have {data.n_visible} bits, machine has {bm.n_visible} visible units")


def gibbs_distribution(
    bm: BoltzmannMachine,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> GibbsTable:
    """
    Enumerate P(v, h) = exp(-E(v, h)) / Z over all 2^(n_v + n_h) configurations.

    Raises:
        SizeCapExceeded: When n_v + n_h is above the enumeration cap
    """
    settings = resolve(settings)
    _check_size(bm, settings)
    configs = _bit_table(bm.num_units)
    visible = configs[:, : bm.n_visible]
    hidden = configs[:, bm.n_visible :]
    energies = -(visible @ bm.a) - (hidden @ bm.b) - np.einsum("ci,ij,cj->c", visible, bm.w, hidden)
    log_z = float(logsumexp(-energies))
    probabilities = np.exp(-energies - log_z)
    if ledger is not None:
        ledger.charge_classical(configs.shape[0])
        ledger.record_symbolic(
            "gibbs_preparation",
            f"O~(N E sqrt(kappa)) with E = {bm.n_visible * bm.n_hidden} edges, kappa = {settings.gibbs_kappa}",
        )
    return GibbsTable(visible, hidden, energies, probabilities, log_z)


def log_likelihood(bm: BoltzmannMachine, data: BinaryDataset, settings: Settings | None = None) -> float:
    """Weighted data log-likelihood sum_v p_data(v) log P(v)."""
    _check_data(bm, data)
    table = gibbs_distribution(bm, settings=settings)
    # log P(v) = log sum_h exp(-E(v, h)) - log Z, summed in closed form over h
    free = data.patterns @ bm.a + np.sum(np.logaddexp(0.0, bm.b + data.patterns @ bm.w), axis=1)
    return float(data.weights @ (free - table.log_partition))


def _data_expectations(bm: BoltzmannMachine, data: BinaryDataset):
    h_given_v = bm.hidden_activation(data.patterns)
    weighted = data.patterns * data.weights[:, None]
    return data.weights @ data.patterns, data.weights @ h_given_v, weighted.T @ h_given_v


def exact_gradient(
    bm: BoltzmannMachine,
    data: BinaryDataset,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> Gradient:
    """
    Exact maximum-likelihood gradient.

    dL/dw_ij = <v_i h_j>_data - <v_i h_j>_model, where the data side uses the
    exact conditional P(h | v) and the model side the full Gibbs table.
    """
    _check_data(bm, data)
    table = gibbs_distribution(bm, ledger, settings)
    data_v, data_h, data_vh = _data_expectations(bm, data)
    model_v, model_h, model_vh = table.expectations()
    return Gradient(data_v - model_v, data_h - model_h, data_vh - model_vh)


@dataclass
class MeanFieldSolution:
    visible: np.ndarray
    hidden: np.ndarray
    residuals: list[float] = field(default_factory=list)

    @property
    def sweeps(self) -> int:
        return len(self.residuals)


def mean_field_magnetizations(bm: BoltzmannMachine, settings: Settings | None = None) -> MeanFieldSolution:
    """
    Self-consistent magnetizations by damped fixed-point iteration.

    Both layers update from the previous sweep; the new value is blended
    with the old one by ``mean_field_damping``.

    Raises:
        MeanFieldNonConvergence: When the residual is still above
            ``mean_field_tol`` after ``mean_field_max_sweeps`` sweeps
    """
    settings = resolve(settings)
    damping = settings.mean_field_damping
    mu_v = np.full(bm.n_visible, 0.5)
    mu_h = np.full(bm.n_hidden, 0.5)
    residuals = []
    for _ in range(settings.mean_field_max_sweeps):
        target_v = expit(bm.a + bm.w @ mu_h)
        target_h = expit(bm.b + mu_v @ bm.w)
        residual = float(max(np.max(np.abs(target_v - mu_v), initial=0.0), np.max(np.abs(target_h - mu_h), initial=0.0)))
        residuals.append(residual)
        mu_v = damping * mu_v + (1 - damping) * target_v
        mu_h = damping * mu_h + (1 - damping) * target_h
        if residual < settings.mean_field_tol:
            return MeanFieldSolution(mu_v, mu_h, residuals)
    raise MeanFieldNonConvergence(
        f"mean field did not converge in {settings.mean_field_max_sweeps} sweeps",
        residuals[-1] if residuals else math.inf,
    )


def mean_field_gradient(
    bm: BoltzmannMachine,
    data: BinaryDataset,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> Gradient:
    """Gradient with model expectations replaced by the mean-field product <v_i><h_j>."""
    settings = resolve(settings)
    _check_size(bm, settings)
    _check_data(bm, data)
    solution = mean_field_magnetizations(bm, settings)
    if ledger is not None:
        ledger.charge_classical(solution.sweeps * bm.n_visible * bm.n_hidden)
        ledger.record("mean_field_sweeps", solution.sweeps)
    data_v, data_h, data_vh = _data_expectations(bm, data)
    return Gradient(
        data_v - solution.visible,
        data_h - solution.hidden,
        data_vh - np.outer(solution.visible, solution.hidden),
    )


def sample(table: GibbsTable, count: int, rng: RandomSource) -> np.ndarray:
    """Draw visible patterns from the exact model distribution."""
    marginal = table.marginal_visible()
    picks = rng.generator.choice(marginal.size, size=count, p=marginal / marginal.sum())
    return _bit_table(table.visible.shape[1])[picks]


@dataclass
class TrainingTrace:
    """Trained machine and the log-likelihood before and after every step."""

    machine: BoltzmannMachine
    log_likelihoods: list[float]
    backend: str

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "machine": self.machine.to_dict(),
            "log_likelihood": list(self.log_likelihoods),
        }


def train_bm(
    bm: BoltzmannMachine,
    data: BinaryDataset,
    backend: Literal["exact", "mean-field"] = "exact",
    steps: int = 500,
    learning_rate: float = 0.1,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    log_callback: Callable[[str, str], None] | None = None,
) -> TrainingTrace:
    """
    Gradient ascent on the data log-likelihood.

    The trace holds steps + 1 values: the starting log-likelihood and the
    value after each step, always evaluated exactly.
    """
    settings = resolve(settings)
    log = log_callback or (lambda msg, level: None)
    gradients: dict[str, Callable[..., Gradient]] = {
        "exact": exact_gradient,
        "mean-field": mean_field_gradient,
    }
    if backend not in gradients:
        raise ValueError(f"Unknown gradient backend {backend!r}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    _check_size(bm, settings)
    _check_data(bm, data)
    gradient_of = gradients[backend]

    trace = [log_likelihood(bm, data, settings)]
    log(f"Training {bm.n_visible}+{bm.n_hidden} unit machine, backend {backend}, {steps} steps", "INFO")
    for step in range(steps):
        bm = bm.step(gradient_of(bm, data, ledger, settings), learning_rate)
        trace.append(log_likelihood(bm, data, settings))
        if (step + 1) % 100 == 0:
            log(f"step {step + 1}: log-likelihood {trace[-1]:.6f}", "DEBUG")
    log(f"Final log-likelihood {trace[-1]:.6f} (start {trace[0]:.6f})", "INFO")
    return TrainingTrace(bm, trace, backend)
