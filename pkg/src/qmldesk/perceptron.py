"""
Perceptron with weights held in a quantum register.

Training assembles the linear system A w = y - b from the binary training
instances and solves it with HHL. Classification runs one Toffoli per
weight, controlled on the weight qubit and the matching data qubit, onto a
scratch ancilla; the weight register is left untouched and can be reused.
"""

import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.sparse.linalg import cg

from qmldesk.errors import DimensionMismatch, EmptyTrainingSet, InconsistentSystem, ZeroTarget
from qmldesk.hhl import HHLParams, LinearSystem, hhl_solve
from qmldesk.ledger import ResourceLedger
from qmldesk.settings import Settings, resolve
from qmldesk.sim import (
    QuantumState,
    RandomSource,
    apply_unitary,
    check_qubit_cap,
    marginal_probabilities,
    toffoli,
)

# Relative residual above which a system counts as inconsistent
CONSISTENCY_TOL = 1e-8

# Amplitude (relative to the largest) at which a decoded weight is 1
DECODE_THRESHOLD = 0.5


def _binary(array, what: str) -> np.ndarray:
    arr = np.asarray(array, dtype=float)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{what} must be binary (0 or 1)")
    return arr.astype(int)


@dataclass(frozen=True, eq=False)
class PerceptronTrainingSet:
    """N binary instances of width W with binary labels and a global bias."""

    inputs: np.ndarray
    labels: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.inputs)
        if x.size == 0:
            raise EmptyTrainingSet("training set has no instances")
        x = _binary(np.atleast_2d(x), "inputs")
        y = _binary(np.asarray(self.labels).reshape(-1), "labels")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{x.shape[0]} instances but {y.shape[0]} labels")
        if x.shape[1] == 0:
            raise EmptyTrainingSet("instances have no features")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    @property
    def num_instances(self) -> int:
        return self.inputs.shape[0]

    @property
    def num_weights(self) -> int:
        return self.inputs.shape[1]

    def target(self) -> np.ndarray:
        """y - b."""
        return self.labels - self.bias


@dataclass(frozen=True)
class ActivationRule:
    """Fire when w . x + bias > 0."""

    bias: float = 0.0

    def fires(self, activation: float) -> int:
        return int(activation + self.bias > 0)


def assemble_system(ts: PerceptronTrainingSet) -> LinearSystem:
    """
    Build A (row t is x^t) and the right-hand side y - b.

    Raises:
        ZeroTarget: If y - b is identically zero
    """
    target = ts.target()
    if not np.any(target):
        raise ZeroTarget("y - b is zero; every weight vector solves the system")
    return LinearSystem(ts.inputs.astype(float), target)


@dataclass(frozen=True, eq=False)
class WeightState:
    """Trained weight register and what training learned about it."""

    register: QuantumState
    decoded_weights: tuple[int, ...]
    solution: np.ndarray
    residual: float
    success_probability: float = 1.0
    # "rounding" (a threshold rounding of the solution), "exhaustive" or "given"
    decoded_from: str = "rounding"

    @classmethod
    def from_weights(cls, weights) -> "WeightState":
        """Basis-state register for a known binary weight vector."""
        w = tuple(int(v) for v in _binary(np.asarray(weights).reshape(-1), "weights"))
        register = QuantumState.basis(len(w), int("".join(map(str, w)), 2))
        solution = np.asarray(w, dtype=float)
        norm = np.linalg.norm(solution)
        return cls(register, w, solution / norm if norm else solution, 0.0, decoded_from="given")

    @property
    def num_weights(self) -> int:
        return len(self.decoded_weights)

    def to_dict(self) -> dict:
        return {
            "decoded_weights": list(self.decoded_weights),
            "register_amplitudes": {
                "real": self.register.amplitudes.real.tolist(),
                "imag": self.register.amplitudes.imag.tolist(),
            },
            "solution_amplitudes": {
                "real": self.solution.real.tolist(),
                "imag": self.solution.imag.tolist(),
            },
            "residual": self.residual,
            "success_probability": self.success_probability,
            "decoded_from": self.decoded_from,
        }


def _relative_amplitudes(amplitudes) -> np.ndarray | None:
    """Amplitudes with the global phase removed, scaled so the largest is 1."""
    a = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
    pivot = a[np.argmax(np.abs(a))]
    if pivot == 0:
        return None
    real = np.real(a * np.conj(pivot) / abs(pivot))
    return real / real.max()


def decode_weights(amplitudes) -> tuple[int, ...]:
    """Round a solution amplitude pattern to binary weights at half the peak."""
    relative = _relative_amplitudes(amplitudes)
    if relative is None:
        return tuple(0 for _ in np.asarray(amplitudes).reshape(-1))
    return tuple(int(v) for v in relative >= DECODE_THRESHOLD)


def threshold_roundings(amplitudes) -> list[tuple[int, ...]]:
    """
    Every distinct binary rounding of a solution amplitude pattern.

    The half-peak rounding comes first, then one rounding per amplitude
    level from the largest down.
    """
    candidates = [decode_weights(amplitudes)]
    relative = _relative_amplitudes(amplitudes)
    if relative is None:
        return candidates
    for level in sorted({float(v) for v in relative if v > 0}, reverse=True):
        w = tuple(int(v) for v in relative >= level - 1e-12)
        if w not in candidates:
            candidates.append(w)
    return candidates


def all_binary_inputs(width: int) -> np.ndarray:
    """The 2^width binary vectors as rows, in counting order."""
    index = np.arange(2**width)
    return (index[:, None] >> np.arange(width - 1, -1, -1)) & 1


def truth_table(weights, bias: float = 0.0) -> tuple[int, ...]:
    """Labels the weights give every binary input, in counting order."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    rule = ActivationRule(bias)
    return tuple(rule.fires(float(v)) for v in all_binary_inputs(w.size) @ w)


def select_weights(
    ts: PerceptronTrainingSet,
    amplitudes,
    ledger: ResourceLedger | None = None,
) -> tuple[tuple[int, ...], str]:
    """
    Choose binary weights for a trained solution.

    When the training set has a zero-error binary solution, the first
    threshold rounding that labels every binary input the same way as the
    exhaustive-search solution is kept. If no rounding does (the set admits
    several classifiers and the minimum-norm solution leans to another
    one), the exhaustive-search solution is used. Without a binary solution
    the half-peak rounding is returned.

    Returns:
        (weights, source) with source "rounding" or "exhaustive"
    """
    ledger = ledger if ledger is not None else ResourceLedger()
    candidates = threshold_roundings(amplitudes)
    reference = exhaustive_binary_solution(ts)
    width = ts.num_weights
    ledger.charge_classical(2**width * ts.num_instances * width)
    if reference is None:
        return candidates[0], "rounding"

    expected = truth_table(reference, ts.bias)
    for w in candidates:
        ledger.charge_classical(2**width * width)
        if truth_table(w, ts.bias) == expected:
            return w, "rounding"
    return reference, "exhaustive"


def train_weights(
    ts: PerceptronTrainingSet,
    params: HHLParams | None = None,
    rng: RandomSource | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    mode: Literal["exact", "least-squares"] = "exact",
    clock_qubits: int = 8,
    log_callback: Callable[[str, str], None] | None = None,
) -> WeightState:
    """
    Train the weights by solving A w = y - b with HHL.

    Args:
        ts: Training set
        params: HHL parameters; chosen from the system when omitted
        rng: Random stream
        ledger: Resource ledger to charge
        settings: Tolerances and qubit cap
        mode: "exact" refuses inconsistent systems; "least-squares" accepts
            them and reports the residual
        clock_qubits: Clock width when params is omitted
        log_callback: Optional callback for logging (message, level)

    Returns:
        WeightState with a basis-state register holding the decoded weights;
        the HHL solution amplitudes are kept on `solution`

    Raises:
        InconsistentSystem: If mode is "exact" and A w = y - b has no solution
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    if mode not in ("exact", "least-squares"):
        raise ValueError(f"Unknown training mode {mode!r}")
    system = assemble_system(ts)
    a = ts.inputs.astype(float)
    target = ts.target()

    least_squares, *_ = np.linalg.lstsq(a, target, rcond=None)
    residual = float(np.linalg.norm(a @ least_squares - target))
    if mode == "exact" and residual > CONSISTENCY_TOL * max(1.0, float(np.linalg.norm(target))):
        raise InconsistentSystem(f"training set has no exact solution (residual {residual:.3e})")

    if params is None:
        params = HHLParams.for_system(system, clock_qubits)
    result = hhl_solve(system, params, rng, ledger, settings, log_callback=log_callback)
    ledger.record_symbolic("perceptron_runtime", "O(W + log(N) log(1/eps))")

    weights, source = select_weights(ts, result.solution, ledger)
    if source == "exhaustive" and log_callback:
        log_callback(
            f"No rounding of the HHL solution matches the exhaustive classifier; using {weights}",
            "WARNING",
        )
    index = int("".join(map(str, weights)), 2)
    register = QuantumState.basis(ts.num_weights, index)
    ledger.observe_qubits(register.num_qubits)
    return WeightState(
        register=register,
        decoded_weights=weights,
        solution=result.solution,
        residual=residual,
        success_probability=result.success_probability,
        decoded_from=source,
    )


def classification_circuit(
    weights: WeightState,
    x,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> QuantumState:
    """
    Run the Toffoli scratchpad on |w>|x>|0...0>.

    Qubits 0..W-1 hold the weights, W..2W-1 the data and 2W..3W-1 the
    ancillas; ancilla j ends in |w_j AND x_j>.
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    width = weights.num_weights
    x = _binary(np.asarray(x).reshape(-1), "input")
    if x.size != width:
        raise DimensionMismatch(f"Input has {x.size} entries, weights have {width}")
    check_qubit_cap(3 * width, settings)

    data = QuantumState.basis(width, int("".join(map(str, x)), 2))
    state = weights.register.tensor(data).tensor(QuantumState.basis(width, 0))
    for j in range(width):
        state = apply_unitary(state, toffoli(j, width + j, 2 * width + j), ledger, settings)
    return state


def classify(
    weights: WeightState,
    x,
    rule: ActivationRule | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> int:
    """
    Classify a binary input against the weight register.

    The ancilla count of ones is w . x; the output is 1 when w . x + bias > 0.
    The most probable ancilla outcome is read, which is exact for basis-state
    registers.
    """
    rule = rule or ActivationRule()
    width = weights.num_weights
    state = classification_circuit(weights, x, ledger, settings)
    probs = marginal_probabilities(state, range(2 * width, 3 * width))
    activation = bin(int(np.argmax(probs))).count("1")
    return rule.fires(activation)


# -------------------------------------------------------------------------
# Classical baselines
# -------------------------------------------------------------------------


@dataclass
class BaselineResult:
    """Classical solutions of the same training problem."""

    perceptron_weights: np.ndarray
    perceptron_epochs: int
    perceptron_converged: bool
    least_squares_weights: np.ndarray
    least_squares_residual: float
    cg_weights: np.ndarray
    cg_iterations: int
    cg_converged: bool
    runtimes: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "perceptron_weights": self.perceptron_weights.tolist(),
            "perceptron_epochs": self.perceptron_epochs,
            "perceptron_converged": self.perceptron_converged,
            "least_squares_weights": self.least_squares_weights.tolist(),
            "least_squares_residual": self.least_squares_residual,
            "cg_weights": self.cg_weights.tolist(),
            "cg_iterations": self.cg_iterations,
            "cg_converged": self.cg_converged,
            "runtimes": dict(self.runtimes),
            "warnings": list(self.warnings),
        }


def rosenblatt(
    ts: PerceptronTrainingSet,
    rule: ActivationRule,
    max_epochs: int = 1000,
) -> tuple[np.ndarray, int, bool]:
    """Classic mistake-driven perceptron; returns weights, epochs run and convergence."""
    w = np.zeros(ts.num_weights)
    for epoch in range(1, max_epochs + 1):
        mistakes = 0
        for x, y in zip(ts.inputs, ts.labels, strict=True):
            predicted = rule.fires(float(w @ x))
            if predicted != y:
                w = w + (y - predicted) * x
                mistakes += 1
        if mistakes == 0:
            return w, epoch, True
    return w, max_epochs, False


def classical_baselines(
    ts: PerceptronTrainingSet,
    ledger: ResourceLedger | None = None,
    max_iterations: int = 1000,
    tolerance: float = 1e-12,
) -> BaselineResult:
    """
    Solve the training problem classically three ways.

    Non-convergence is reported on the result, not raised.
    """
    ledger = ledger if ledger is not None else ResourceLedger()
    a = ts.inputs.astype(float)
    target = ts.target()
    n, w = a.shape
    runtimes = {}
    warnings = []

    start = time.perf_counter()
    p_weights, epochs, p_converged = rosenblatt(ts, ActivationRule(ts.bias), max_iterations)
    runtimes["perceptron"] = time.perf_counter() - start
    ledger.charge_classical(epochs * n * w)
    if not p_converged:
        warnings.append(f"perceptron did not converge in {max_iterations} epochs")

    start = time.perf_counter()
    ls_weights, *_ = np.linalg.lstsq(a, target, rcond=None)
    runtimes["least_squares"] = time.perf_counter() - start
    ledger.charge_classical(n * w * w)
    residual = float(np.linalg.norm(a @ ls_weights - target))

    iterations = 0

    def count(_xk):
        nonlocal iterations
        iterations += 1

    start = time.perf_counter()
    normal = a.T @ a
    cg_weights, info = cg(normal, a.T @ target, rtol=tolerance, atol=0.0, maxiter=max_iterations, callback=count)
    runtimes["conjugate_gradient"] = time.perf_counter() - start
    ledger.charge_classical(iterations * 2 * n * w)
    cg_converged = info == 0
    if not cg_converged:
        warnings.append(f"conjugate gradient stopped after {iterations} iterations (info {info})")

    return BaselineResult(
        perceptron_weights=p_weights,
        perceptron_epochs=epochs,
        perceptron_converged=p_converged,
        least_squares_weights=ls_weights,
        least_squares_residual=residual,
        cg_weights=np.asarray(cg_weights),
        cg_iterations=iterations,
        cg_converged=cg_converged,
        runtimes=runtimes,
        warnings=warnings,
    )


def exhaustive_binary_solution(ts: PerceptronTrainingSet) -> tuple[int, ...] | None:
    """First binary weight vector (in counting order) with zero training error, if any."""
    rule = ActivationRule(ts.bias)
    for w in all_binary_inputs(ts.num_weights):
        if all(rule.fires(float(w @ x)) == y for x, y in zip(ts.inputs, ts.labels, strict=True)):
            return tuple(int(v) for v in w)
    return None
