"""
HHL linear-system solver.

The pipeline is: Hermitian embedding, zero-padding to a power of two,
phase estimation of e^{iAt0} on |b>, an eigenvalue-controlled rotation of
an ancilla, post-selection on the ancilla, and uncomputation of the clock
register. Hamiltonian simulation is exact dense exponentiation; the ledger
records the sparsity the asymptotic analysis would depend on.

Register layout: clock qubits first, then the system register, then the
rotation ancilla.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from qmldesk.errors import (
    ConfigError,
    DimensionMismatch,
    EigenvalueOutOfRange,
    NotPositiveDefinite,
    PostSelectionFailed,
    SingularSystem,
    ZeroSolution,
    ZeroVector,
)
from qmldesk.ledger import ResourceLedger
from qmldesk.settings import Settings, resolve
from qmldesk.sim import (
    GateOp,
    QuantumState,
    RandomSource,
    apply_unitary,
    check_qubit_cap,
    hadamard,
    marginal_probabilities,
    num_qubits_for,
    prepare_amplitude_state,
    qft_matrix,
    state_size,
)

# Eigencomponents of b lighter than this (relative) do not participate
PARTICIPATION_TOL = 1e-12

# Below this success probability nothing survived the cutoff
MIN_SUCCESS_PROBABILITY = 1e-14


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """
    Matrix A and right-hand side b of A x = b.

    A may be rectangular; hermitian_embed makes it square and Hermitian.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    hermitian: bool = field(init=False)
    embedded_from: tuple[int, int] | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.array(self.matrix, dtype=np.complex128))
        b = np.array(self.rhs, dtype=np.complex128).reshape(-1)
        if a.ndim != 2:
            raise DimensionMismatch("Matrix must be two-dimensional")
        if a.shape[0] != b.shape[0]:
            raise DimensionMismatch(f"Matrix has {a.shape[0]} rows but b has {b.shape[0]} entries")
        if np.linalg.norm(b) == 0:
            raise ZeroVector("right-hand side b is zero")
        hermitian = a.shape[0] == a.shape[1] and bool(np.allclose(a, a.conj().T, atol=1e-10, rtol=0))
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "hermitian", hermitian)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def sparsity(self) -> int:
        """Largest number of nonzero entries in a row."""
        return int(np.max(np.count_nonzero(np.abs(self.matrix) > 0, axis=1)))


def hermitian_embed(system: LinearSystem) -> LinearSystem:
    """
    Return a Hermitian system with the same solution.

    Non-Hermitian A (r x c) becomes [[0, A], [A^dagger, 0]] with b -> (b, 0).
    The solution of the original unknowns is the lower block of length c;
    use extract_solution to read it.
    """
    if system.hermitian:
        return system
    a = system.matrix
    rows, cols = a.shape
    block = np.zeros((rows + cols, rows + cols), dtype=np.complex128)
    block[:rows, rows:] = a
    block[rows:, :rows] = a.conj().T
    rhs = np.concatenate([system.rhs, np.zeros(cols, dtype=np.complex128)])
    return LinearSystem(block, rhs, embedded_from=(rows, cols))


def extract_solution(system: LinearSystem, vector: np.ndarray) -> np.ndarray:
    """Entries of an embedded-system solution that belong to the original unknowns."""
    vector = np.asarray(vector).reshape(-1)
    if system.embedded_from is None:
        return vector[: system.shape[1]]
    rows, cols = system.embedded_from
    return vector[rows : rows + cols]


def _padded(system: LinearSystem) -> tuple[np.ndarray, np.ndarray]:
    dim = system.shape[0]
    padded_dim = 2 ** num_qubits_for(dim)
    a = np.zeros((padded_dim, padded_dim), dtype=np.complex128)
    a[:dim, :dim] = system.matrix
    b = np.zeros(padded_dim, dtype=np.complex128)
    b[:dim] = system.rhs
    return a, b


def gershgorin_bound(matrix: np.ndarray) -> float:
    """Upper bound on the spectral radius from Gershgorin discs."""
    return float(np.max(np.sum(np.abs(matrix), axis=1)))


@dataclass(frozen=True)
class HHLParams:
    """Phase-estimation and inversion parameters."""

    clock_qubits: int
    evolution_time: float
    eigenvalue_cutoff: float
    inversion_constant: float
    signed: bool = False

    def __post_init__(self):
        if self.clock_qubits < 1:
            raise ConfigError(f"clock_qubits must be >= 1, got {self.clock_qubits}")
        if self.evolution_time <= 0:
            raise ConfigError(f"evolution_time must be > 0, got {self.evolution_time}")
        if self.eigenvalue_cutoff <= 0 or self.inversion_constant <= 0:
            raise ConfigError("eigenvalue_cutoff and inversion_constant must be > 0")
        if self.inversion_constant > self.eigenvalue_cutoff * (1 + 1e-12):
            raise ConfigError(
                f"inversion_constant {self.inversion_constant} exceeds eigenvalue_cutoff {self.eigenvalue_cutoff}"
            )

    @classmethod
    def for_system(cls, system: LinearSystem, clock_qubits: int = 8) -> "HHLParams":
        """
        Choose t0, cutoff and rotation constant for a system.

        t0 = 2 pi (1 - 2^-c) / g for non-negative spectra, where g is the
        Gershgorin bound; a spectrum with negative eigenvalues switches to a
        signed (two's-complement) clock with t0 = pi (1 - 2^(1-c)) / g. The
        cutoff is half the smallest eigenvalue magnitude that b touches, and
        the rotation constant equals the cutoff.
        """
        embedded = hermitian_embed(system)
        a, b = _padded(embedded)
        values, vectors = np.linalg.eigh(a)
        bound = gershgorin_bound(a)
        if bound == 0:
            raise SingularSystem("matrix is zero")

        weights = np.abs(vectors.conj().T @ b) ** 2
        weights = weights / weights.sum()
        nonzero = np.abs(values) > PARTICIPATION_TOL * bound
        participating = np.abs(values[(weights > PARTICIPATION_TOL) & nonzero])
        if participating.size == 0:
            raise SingularSystem("b has no component outside the null space of A")

        signed = bool(np.any(values < -PARTICIPATION_TOL * bound))
        if signed:
            if clock_qubits < 2:
                raise ConfigError("A signed clock needs at least 2 clock qubits")
            t0 = math.pi * (1 - 2.0 ** (1 - clock_qubits)) / bound
        else:
            t0 = 2 * math.pi * (1 - 2.0**-clock_qubits) / bound
        cutoff = 0.5 * float(participating.min())
        return cls(clock_qubits, t0, cutoff, cutoff, signed)

    def decode(self, k: np.ndarray | int) -> np.ndarray:
        """Eigenvalue estimates for clock readings k."""
        k = np.asarray(k, dtype=float)
        size = 2**self.clock_qubits
        if self.signed:
            k = np.where(k >= size / 2, k - size, k)
        return 2 * math.pi * k / (size * self.evolution_time)

    def rotation_amplitudes(self) -> np.ndarray:
        """Ancilla |1> amplitude C / lambda_hat per clock reading, 0 below the cutoff."""
        estimates = self.decode(np.arange(2**self.clock_qubits))
        amps = np.zeros_like(estimates)
        keep = (np.abs(estimates) >= self.eigenvalue_cutoff) & (estimates != 0)
        amps[keep] = self.inversion_constant / estimates[keep]
        return np.clip(amps, -1.0, 1.0)


@dataclass(frozen=True)
class QuadraticForm:
    """f(x) = x^T A x + b^T x + c with symmetric A."""

    matrix: np.ndarray
    linear: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        a = np.atleast_2d(np.array(self.matrix, dtype=float))
        b = np.array(self.linear, dtype=float).reshape(-1)
        if a.shape != (b.size, b.size):
            raise DimensionMismatch(f"Matrix shape {a.shape} does not match b of length {b.size}")
        if not np.allclose(a, a.T, atol=1e-10, rtol=0):
            raise ValueError("Quadratic form matrix is not symmetric")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "linear", b)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        return float(x @ self.matrix @ x + self.linear @ x + self.constant)


# -------------------------------------------------------------------------
# Phase estimation
# -------------------------------------------------------------------------


def _evolution(values: np.ndarray, vectors: np.ndarray, time: float) -> np.ndarray:
    return (vectors * np.exp(1j * values * time)) @ vectors.conj().T


def _qpe_gates(matrix: np.ndarray, params: HHLParams, settings: Settings) -> list[GateOp]:
    c = params.clock_qubits
    system_qubits = num_qubits_for(matrix.shape[0])
    values, vectors = np.linalg.eigh(matrix)

    phases = values * params.evolution_time / (2 * math.pi)
    tol = 1e-12
    if params.signed:
        bad = np.abs(phases) >= 0.5 - tol
    else:
        bad = (phases < -tol) | (phases >= 1 - tol)
    if np.any(bad):
        raise EigenvalueOutOfRange(
            f"Eigenvalue phases {phases[bad]} fall outside the clock window; evolution time is mis-scaled"
        )

    system = tuple(range(c, c + system_qubits))
    gates = [hadamard(q) for q in range(c)]
    for j in range(c):
        power = 2 ** (c - 1 - j)
        u = _evolution(values, vectors, params.evolution_time * power)
        gates.append(GateOp(u, system, settings.unitary_tol).controlled((j,)))
    gates.append(GateOp(qft_matrix(c).conj().T, tuple(range(c)), settings.unitary_tol))
    return gates


def phase_estimation(
    matrix,
    state: QuantumState,
    params: HHLParams,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> QuantumState:
    """
    Entangle clock readings of the eigenvalues of a Hermitian matrix with its eigenvectors.

    Args:
        matrix: Hermitian matrix matching the state's dimension
        state: Input state on the system register
        params: Clock width, evolution time and clock signedness
        ledger: Resource ledger to charge
        settings: Tolerances and qubit cap

    Returns:
        State over clock_qubits + state.num_qubits qubits, clock first

    Raises:
        EigenvalueOutOfRange: If some eigenvalue phase is outside the clock window
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    matrix = np.asarray(matrix, dtype=np.complex128)
    if matrix.shape != (state.dim, state.dim):
        raise DimensionMismatch(f"Matrix of shape {matrix.shape} does not act on {state.num_qubits} qubits")
    if not np.allclose(matrix, matrix.conj().T, atol=settings.hermitian_tol, rtol=0):
        raise ValueError("Phase estimation needs a Hermitian matrix")
    check_qubit_cap(params.clock_qubits + state.num_qubits, settings)

    full = QuantumState.basis(params.clock_qubits, 0).tensor(state)
    for gate in _qpe_gates(matrix, params, settings):
        full = apply_unitary(full, gate, ledger, settings)
    return full


def clock_distribution(state: QuantumState, params: HHLParams) -> tuple[np.ndarray, np.ndarray]:
    """Decoded eigenvalue estimates and their probabilities from the clock register."""
    probs = marginal_probabilities(state, range(params.clock_qubits))
    return params.decode(np.arange(probs.size)), probs


# -------------------------------------------------------------------------
# Solver
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HHLResult:
    """Post-selected solution state with its bookkeeping."""

    solution_state: QuantumState
    success_probability: float
    solution: np.ndarray
    attempts: int
    params: HHLParams

    def fidelity(self, reference) -> float:
        """|<x_ref|x>|^2 with both vectors normalized."""
        ref = np.asarray(reference, dtype=np.complex128).reshape(-1)
        ref = ref / np.linalg.norm(ref)
        return float(abs(np.vdot(ref, self.solution)) ** 2)


def hhl_solve(
    system: LinearSystem,
    params: HHLParams,
    rng: RandomSource | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    mode: Literal["exact", "sampled"] = "exact",
    max_attempts: int = 100,
    log_callback: Callable[[str, str], None] | None = None,
) -> HHLResult:
    """
    Prepare a state proportional to A^-1 b.

    Eigenvalue estimates below the cutoff are dropped, so a singular or
    rectangular A yields the truncated pseudo-inverse solution.

    Args:
        system: Linear system (embedded automatically if not Hermitian)
        params: Clock and inversion parameters
        rng: Random stream, required in sampled mode
        ledger: Resource ledger to charge
        settings: Tolerances and qubit cap
        mode: "exact" conditions on the ancilla directly; "sampled" draws
            post-selection attempts until one succeeds
        max_attempts: Post-selection attempts allowed in sampled mode
        log_callback: Optional callback for logging (message, level)

    Returns:
        HHLResult

    Raises:
        SingularSystem: If no eigencomponent of b survives the cutoff
        PostSelectionFailed: If every sampled attempt fails
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    log = log_callback or (lambda msg, level: None)
    if mode not in ("exact", "sampled"):
        raise ConfigError(f"Unknown HHL mode {mode!r}")
    if mode == "sampled" and rng is None:
        raise ValueError("Sampled post-selection needs a random source")

    embedded = hermitian_embed(system)
    a, b = _padded(embedded)
    c = params.clock_qubits
    system_qubits = num_qubits_for(a.shape[0])
    ancilla = c + system_qubits
    check_qubit_cap(c + system_qubits + 1, settings)
    log(f"HHL on a {a.shape[0]}x{a.shape[1]} system with {c} clock qubits ({state_size(c + system_qubits + 1)} state)", "DEBUG")

    ledger.record("matrix_sparsity", system.sparsity())
    ledger.record("clock_qubits", c)
    ledger.record_symbolic("hhl_runtime", "O(log(N) s^2 kappa^2 / eps) for s-sparse A")

    b_state = prepare_amplitude_state(b, ledger, settings)
    qpe_gates = _qpe_gates(a, params, settings)
    state = QuantumState.basis(c, 0).tensor(b_state)
    for gate in qpe_gates:
        state = apply_unitary(state, gate, ledger, settings)

    # Controlled rotation: ancilla |1> amplitude C / lambda_hat for each clock reading
    f = params.rotation_amplitudes()
    cos = np.sqrt(1 - f**2)
    rotation = np.zeros((2 ** (c + 1), 2 ** (c + 1)))
    rotation[0::2, 0::2] = np.diag(cos)
    rotation[0::2, 1::2] = np.diag(-f)
    rotation[1::2, 0::2] = np.diag(f)
    rotation[1::2, 1::2] = np.diag(cos)
    state = state.tensor(QuantumState.basis(1, 0))
    state = apply_unitary(state, GateOp(rotation, tuple(range(c)) + (ancilla,), settings.unitary_tol), ledger, settings)

    success = float(marginal_probabilities(state, (ancilla,))[1])
    if success < MIN_SUCCESS_PROBABILITY:
        raise SingularSystem("no eigencomponent of b survives the eigenvalue cutoff")

    attempts = 1
    if mode == "sampled":
        for attempts in range(1, max_attempts + 1):
            ledger.charge_shots(1)
            if rng.generator.random() < success:
                break
        else:
            raise PostSelectionFailed(f"ancilla read 0 on all {max_attempts} attempts (p = {success:.3e})")
        log(f"Post-selection succeeded after {attempts} attempt(s)", "DEBUG")

    conditional = state.amplitudes.reshape(-1, 2)[:, 1] / math.sqrt(success)
    state = QuantumState(c + system_qubits, conditional, settings.norm_tol * (len(qpe_gates) + 2))

    for gate in reversed(qpe_gates):
        state = apply_unitary(state, gate.adjoint(), ledger, settings)

    clock_zero = state.amplitudes.reshape(2**c, -1)[0]
    norm = np.linalg.norm(clock_zero)
    if norm == 0:
        raise SingularSystem("clock register did not uncompute to |0>")
    solution_state = QuantumState(system_qubits, clock_zero / norm, settings.norm_tol)

    solution = extract_solution(embedded, solution_state.amplitudes[: embedded.shape[0]])
    solution_norm = np.linalg.norm(solution)
    if solution_norm == 0:
        raise SingularSystem("solution has no weight on the original unknowns")
    ledger.record("success_probability", success)
    log(f"Ancilla success probability {success:.3e}", "INFO")
    return HHLResult(
        solution_state=solution_state,
        success_probability=success,
        solution=solution / solution_norm,
        attempts=attempts,
        params=params,
    )


def truncated_pseudo_inverse_solution(system: LinearSystem, cutoff: float) -> np.ndarray:
    """Classical reference: sum over |lambda| >= cutoff of <v|b>/lambda v, on the original unknowns."""
    embedded = hermitian_embed(system)
    values, vectors = np.linalg.eigh(embedded.matrix)
    keep = np.abs(values) >= cutoff
    coeffs = (vectors.conj().T @ embedded.rhs)[keep] / values[keep]
    return extract_solution(embedded, vectors[:, keep] @ coeffs)


# -------------------------------------------------------------------------
# Quadratic forms
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadraticResult:
    """Minimizer direction from HHL and its rescaled classical read-out."""

    solution_state: QuantumState
    direction: np.ndarray
    minimizer: np.ndarray
    success_probability: float


def stationarity_system(q: QuadraticForm) -> LinearSystem:
    """The system 2 A x = -b where the gradient of x^T A x + b^T x + c vanishes."""
    if np.linalg.norm(q.linear) == 0:
        raise ZeroSolution("the minimizer is the zero vector")
    return LinearSystem(2 * q.matrix, -q.linear)


def rescale_minimizer(q: QuadraticForm, direction) -> np.ndarray:
    """
    Scale a unit direction to the minimizer along it.

    The global phase is removed first; the step s = -b.d / (2 d^T A d)
    minimizes f(s d).
    """
    d = np.asarray(direction, dtype=np.complex128).reshape(-1)
    pivot = d[np.argmax(np.abs(d))]
    d = np.real(d * np.conj(pivot) / abs(pivot))
    curvature = d @ q.matrix @ d
    return -(q.linear @ d) / (2 * curvature) * d


def quadratic_minimize(
    q: QuadraticForm,
    params: HHLParams | None = None,
    rng: RandomSource | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    clock_qubits: int = 8,
) -> QuadraticResult:
    """
    Minimize x^T A x + b^T x + c by solving 2 A x = -b with HHL.

    Raises:
        NotPositiveDefinite: If A has a non-positive eigenvalue
        ZeroSolution: If b = 0, making the minimizer the zero vector
    """
    smallest = float(np.linalg.eigvalsh(q.matrix)[0])
    if smallest <= 0:
        raise NotPositiveDefinite(f"smallest eigenvalue is {smallest:.3e}")
    system = stationarity_system(q)
    if params is None:
        params = HHLParams.for_system(system, clock_qubits)
    result = hhl_solve(system, params, rng, ledger, settings)
    return QuadraticResult(
        solution_state=result.solution_state,
        direction=result.solution,
        minimizer=rescale_minimizer(q, result.solution),
        success_probability=result.success_probability,
    )
