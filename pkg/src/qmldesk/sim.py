"""
Dense statevector and density-matrix engine.

States and matrices are immutable values: every operation returns a new
object. Qubit 0 is the most significant bit of a basis index, so the
tensor product ``a.tensor(b)`` puts ``a``'s qubits first.

Gates are dense unitaries applied by index arithmetic on the amplitude
tensor; ``gate_count`` is therefore the number of unitary applications,
not an elementary-gate count.
"""

import threading
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import humanize
import numpy as np

from qmldesk.errors import (
    DimensionMismatch,
    DimensionOverflow,
    EmptyKeepSet,
    InvalidDensityMatrix,
    NonUnitaryGate,
    TargetOutOfRange,
    ZeroVector,
)
from qmldesk.ledger import ResourceLedger
from qmldesk.settings import Settings, resolve

BYTES_PER_AMPLITUDE = 16


def num_qubits_for(length: int) -> int:
    """Smallest register (at least one qubit) holding ``length`` entries."""
    if length < 1:
        raise ValueError(f"Length must be >= 1, got {length}")
    return max(1, (length - 1).bit_length())


def state_size(num_qubits: int) -> str:
    """Memory of a statevector on num_qubits, for humans."""
    return humanize.naturalsize(BYTES_PER_AMPLITUDE * 2**num_qubits, binary=True)


def check_qubit_cap(num_qubits: int, settings: Settings | None = None) -> None:
    """
    Refuse registers wider than the configured cap.

    Raises:
        DimensionOverflow: If num_qubits exceeds settings.qubit_cap
    """
    settings = resolve(settings)
    if num_qubits > settings.qubit_cap:
        raise DimensionOverflow(
            f"{num_qubits} qubits ({state_size(num_qubits)} of amplitudes) exceeds the cap of {settings.qubit_cap} qubits"
        )


def _ledger(ledger: ResourceLedger | None) -> ResourceLedger:
    return ledger if ledger is not None else ResourceLedger()


def _bitstring(index: int, width: int) -> str:
    return format(index, f"0{width}b")


# -------------------------------------------------------------------------
# Randomness
# -------------------------------------------------------------------------


class RandomSource:
    """
    Seeded random stream.

    Identical seeds give identical measurement streams. Child streams come
    from SeedSequence spawning, so a child's stream depends only on the
    master seed and the child's position, never on scheduling.
    """

    def __init__(self, seed: int = 0, spawn_key: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"Seed must be a non-negative integer, got {seed}")
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        self.generator = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.spawn_key))
        self._spawned = 0
        self._lock = threading.Lock()

    def spawn(self, count: int) -> list["RandomSource"]:
        """Split off ``count`` independent child streams."""
        with self._lock:
            start = self._spawned
            self._spawned += count
        return [RandomSource(self.seed, self.spawn_key + (start + i,)) for i in range(count)]

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, spawn_key={self.spawn_key})"


# -------------------------------------------------------------------------
# States
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Normalized amplitude vector over ``num_qubits`` qubits."""

    num_qubits: int
    amplitudes: np.ndarray
    tolerance: float = field(default=1e-10, repr=False)

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError(f"A state needs at least one qubit, got {self.num_qubits}")
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != 2**self.num_qubits:
            raise DimensionMismatch(f"{amps.shape[0]} amplitudes cannot describe {self.num_qubits} qubits")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > self.tolerance:
            raise ValueError(f"State is not normalized: squared norm {norm2!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = False, tolerance: float = 1e-10) -> "QuantumState":
        """Build a state from a power-of-two length amplitude vector."""
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise ZeroVector()
            amps = amps / norm
        return cls(num_qubits_for(amps.shape[0]), amps, tolerance)

    @classmethod
    def basis(cls, num_qubits: int, index: int = 0) -> "QuantumState":
        """Computational basis state ``|index>``."""
        amps = np.zeros(2**num_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(num_qubits, amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def probabilities(self) -> np.ndarray:
        """Born-rule probabilities of every basis state."""
        return np.abs(self.amplitudes) ** 2

    def inner(self, other: "QuantumState") -> complex:
        """Inner product <self|other>."""
        if other.num_qubits != self.num_qubits:
            raise DimensionMismatch(f"Cannot take overlap of {self.num_qubits}- and {other.num_qubits}-qubit states")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "QuantumState") -> float:
        """|<self|other>|^2."""
        return abs(self.inner(other)) ** 2

    def tensor(self, other: "QuantumState") -> "QuantumState":
        """Tensor product with ``self``'s qubits first."""
        return QuantumState(
            self.num_qubits + other.num_qubits,
            np.kron(self.amplitudes, other.amplitudes),
            self.tolerance + other.tolerance,
        )

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix.from_state(self)


# -------------------------------------------------------------------------
# Gates
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GateOp:
    """Dense unitary acting on an ordered list of target qubits."""

    matrix: np.ndarray
    targets: tuple[int, ...]
    tolerance: float = field(default=1e-10, repr=False)

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        k = len(targets)
        if k == 0:
            raise ValueError("A gate needs at least one target")
        if len(set(targets)) != k or min(targets) < 0:
            raise TargetOutOfRange(f"Gate targets must be distinct non-negative indices, got {targets}")
        m = np.array(self.matrix, dtype=np.complex128)
        if m.shape != (2**k, 2**k):
            raise DimensionMismatch(f"Gate matrix of shape {m.shape} does not act on {k} qubits")
        deviation = np.max(np.abs(m @ m.conj().T - np.eye(2**k)))
        if deviation > self.tolerance:
            raise NonUnitaryGate(f"U U^dagger differs from identity by {deviation:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "targets", targets)

    def adjoint(self) -> "GateOp":
        """Inverse gate on the same targets."""
        return GateOp(self.matrix.conj().T, self.targets, self.tolerance)

    def controlled(self, controls: Sequence[int]) -> "GateOp":
        """Gate applied only when every control qubit is |1>."""
        controls = tuple(controls)
        dim = self.matrix.shape[0]
        full = np.eye(2 ** len(controls) * dim, dtype=np.complex128)
        full[-dim:, -dim:] = self.matrix
        return GateOp(full, controls + self.targets, self.tolerance)


HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=np.complex128)


def hadamard(qubit: int) -> GateOp:
    return GateOp(HADAMARD, (qubit,))


def pauli_x(qubit: int) -> GateOp:
    return GateOp(PAULI_X, (qubit,))


def swap(a: int, b: int) -> GateOp:
    return GateOp(SWAP, (a, b))


def toffoli(control_a: int, control_b: int, target: int) -> GateOp:
    return pauli_x(target).controlled((control_a, control_b))


def qft_matrix(num_qubits: int) -> np.ndarray:
    """Quantum Fourier transform on ``num_qubits`` qubits, most significant qubit first."""
    dim = 2**num_qubits
    k = np.arange(dim)
    return np.exp(2j * np.pi * np.outer(k, k) / dim) / np.sqrt(dim)


def _check_targets(targets: Iterable[int], num_qubits: int) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if not targets:
        raise ValueError("At least one target qubit is required")
    if len(set(targets)) != len(targets):
        raise TargetOutOfRange(f"Repeated target qubit in {targets}")
    for t in targets:
        if t < 0 or t >= num_qubits:
            raise TargetOutOfRange(f"Qubit {t} is outside a {num_qubits}-qubit register")
    return targets


# -------------------------------------------------------------------------
# Operations on states
# -------------------------------------------------------------------------


def prepare_amplitude_state(
    x,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> QuantumState:
    """
    Amplitude-encode a classical vector as |x> = x / |x|.

    The vector is zero-padded to the next power of two. Preparation is an
    ideal oracle: the ledger charges one preparation event and records the
    QRAM cost symbolically.

    Args:
        x: Nonzero real or complex vector
        ledger: Resource ledger to charge
        settings: Tolerances and qubit cap

    Returns:
        The normalized state

    Raises:
        ZeroVector: If |x| = 0
        DimensionOverflow: If the padded register exceeds the qubit cap
    """
    settings = resolve(settings)
    ledger = _ledger(ledger)
    vec = np.asarray(x, dtype=np.complex128).reshape(-1)
    if vec.size == 0:
        raise ZeroVector("cannot encode an empty vector")
    if not np.all(np.isfinite(vec)):
        raise ValueError("Vector has non-finite entries")
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ZeroVector()

    num_qubits = num_qubits_for(vec.size)
    check_qubit_cap(num_qubits, settings)
    padded = np.zeros(2**num_qubits, dtype=np.complex128)
    padded[: vec.size] = vec / norm

    ledger.charge_preparation(vec.size)
    ledger.observe_qubits(num_qubits)
    return QuantumState(num_qubits, padded, settings.norm_tol)


def apply_unitary(
    state: QuantumState,
    gate: GateOp,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> QuantumState:
    """
    Apply a gate embedded on its target qubits.

    Raises:
        TargetOutOfRange: If a target is outside the register
    """
    settings = resolve(settings)
    ledger = _ledger(ledger)
    n = state.num_qubits
    targets = _check_targets(gate.targets, n)
    k = len(targets)

    psi = state.amplitudes.reshape((2,) * n)
    u = gate.matrix.reshape((2,) * (2 * k))
    out = np.tensordot(u, psi, axes=(list(range(k, 2 * k)), list(targets)))
    out = np.moveaxis(out, list(range(k)), list(targets))

    ledger.charge_gates(1)
    ledger.observe_qubits(n)
    # Norm drift is allowed to grow by norm_tol per applied gate
    return QuantumState(n, out.reshape(-1), state.tolerance + settings.norm_tol)


def marginal_probabilities(state: QuantumState, targets: Sequence[int]) -> np.ndarray:
    """Exact Born probabilities of the target qubits, in target order."""
    n = state.num_qubits
    targets = _check_targets(targets, n)
    probs = state.probabilities().reshape((2,) * n)
    others = tuple(q for q in range(n) if q not in targets)
    if others:
        probs = probs.sum(axis=others)
    ordered = sorted(targets)
    probs = np.transpose(probs, [ordered.index(t) for t in targets])
    return probs.reshape(-1)


def measure_qubits(
    state: QuantumState,
    targets: Sequence[int],
    rng: RandomSource,
    shots: int,
    ledger: ResourceLedger | None = None,
) -> dict[str, int]:
    """
    Sample measurement outcomes of the target qubits.

    Args:
        state: State to measure (left unchanged)
        targets: Qubits to read; bitstrings list them in this order
        rng: Random stream
        shots: Number of samples, at least 1
        ledger: Resource ledger to charge

    Returns:
        Histogram mapping bitstrings to counts (zero counts omitted)
    """
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    ledger = _ledger(ledger)
    probs = np.clip(marginal_probabilities(state, targets), 0.0, None)
    counts = rng.generator.multinomial(shots, probs / probs.sum())
    ledger.charge_shots(shots)
    width = len(tuple(targets))
    return {_bitstring(i, width): int(c) for i, c in enumerate(counts) if c > 0}


def reduced_density_matrix(state: QuantumState, keep: Iterable[int]) -> "DensityMatrix":
    """Density matrix of the kept qubits of a pure state, without forming the full matrix."""
    n = state.num_qubits
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise EmptyKeepSet("keep set is empty")
    _check_targets(keep, n)
    rest = [q for q in range(n) if q not in keep]
    psi = np.transpose(state.amplitudes.reshape((2,) * n), keep + rest).reshape(2 ** len(keep), -1)
    return DensityMatrix(2 ** len(keep), psi @ psi.conj().T)


# -------------------------------------------------------------------------
# Density matrices
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, trace-one, positive semidefinite matrix of power-of-two dimension."""

    dim: int
    entries: np.ndarray
    hermitian_tol: float = field(default=1e-10, repr=False)
    trace_tol: float = field(default=1e-10, repr=False)
    psd_tol: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        dim = int(self.dim)
        m = np.array(self.entries, dtype=np.complex128)
        if m.shape != (dim, dim):
            raise DimensionMismatch(f"Matrix of shape {m.shape} is not {dim}x{dim}")
        if dim < 2 or dim & (dim - 1):
            raise DimensionMismatch(f"Dimension must be a power of two >= 2, got {dim}")
        asym = np.max(np.abs(m - m.conj().T))
        if asym > self.hermitian_tol:
            raise InvalidDensityMatrix(f"Matrix is not Hermitian (max deviation {asym:.3e})")
        trace = np.trace(m).real
        if abs(trace - 1.0) > self.trace_tol:
            raise InvalidDensityMatrix(f"Trace is {trace!r}, expected 1")
        smallest = np.linalg.eigvalsh((m + m.conj().T) / 2)[0]
        if smallest < -self.psd_tol:
            raise InvalidDensityMatrix(f"Matrix has negative eigenvalue {smallest:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "entries", m)

    @classmethod
    def from_state(cls, state: QuantumState) -> "DensityMatrix":
        psi = state.amplitudes
        return cls(state.dim, np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, num_qubits: int) -> "DensityMatrix":
        dim = 2**num_qubits
        return cls(dim, np.eye(dim) / dim)

    @classmethod
    def random(cls, dim: int, rng: "RandomSource", rank: int | None = None) -> "DensityMatrix":
        """G G^dagger / tr(G G^dagger) for a complex Gaussian dim x rank matrix G."""
        g = rng.generator
        cols = dim if rank is None else rank
        m = g.normal(size=(dim, cols)) + 1j * g.normal(size=(dim, cols))
        rho = m @ m.conj().T
        rho = (rho + rho.conj().T) / 2
        return cls(dim, rho / np.trace(rho).real)

    @classmethod
    def from_data(cls, data) -> "DensityMatrix":
        """
        Covariance density matrix of a dataset.

        Rows are samples. Rows are mean-centered, then rho = X^T X / tr(X^T X),
        zero-padded to a power-of-two dimension.

        Raises:
            ZeroVector: If the centered data has no variance
        """
        x = np.asarray(data, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise ValueError("Data must be a non-empty 2-D array")
        centered = x - x.mean(axis=0)
        cov = centered.T @ centered
        trace = np.trace(cov)
        if trace <= 0:
            raise ZeroVector("centered data has zero variance")
        dim = 2 ** num_qubits_for(cov.shape[0])
        padded = np.zeros((dim, dim))
        padded[: cov.shape[0], : cov.shape[0]] = cov / trace
        return cls(dim, padded)

    @property
    def num_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (descending) and matching eigenvector columns."""
        values, vectors = np.linalg.eigh(self.entries)
        order = np.argsort(values)[::-1]
        return values[order], vectors[:, order]

    def spectral_norm(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.entries))))

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(self.dim * other.dim, np.kron(self.entries, other.entries))

    def trace_distance(self, other: "DensityMatrix") -> float:
        """Half the trace norm of the difference."""
        if other.dim != self.dim:
            raise DimensionMismatch(f"Cannot compare {self.dim}- and {other.dim}-dimensional matrices")
        diff = self.entries - other.entries
        return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2))))


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """
    Trace out every qubit not in ``keep``.

    Kept qubits stay in increasing index order.

    Raises:
        EmptyKeepSet: If keep is empty
        TargetOutOfRange: If keep names a qubit outside the register
    """
    n = rho.num_qubits
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise EmptyKeepSet("keep set is empty")
    if keep[0] < 0 or keep[-1] >= n:
        raise TargetOutOfRange(f"keep set {keep} is outside a {n}-qubit register")

    t = rho.entries.reshape((2,) * (2 * n))
    remaining = n
    # Highest index first so lower axis positions stay valid
    for q in sorted((q for q in range(n) if q not in keep), reverse=True):
        t = np.trace(t, axis1=q, axis2=q + remaining)
        remaining -= 1

    dim = 2 ** len(keep)
    return DensityMatrix(dim, t.reshape(dim, dim), rho.hermitian_tol, rho.trace_tol, rho.psd_tol)


# -------------------------------------------------------------------------
# Swap test
# -------------------------------------------------------------------------


def swap_test_probability(a: QuantumState, b: QuantumState) -> float:
    """
    Exact probability that the swap-test ancilla reads 0: (1 + |<a|b>|^2) / 2.

    Raises:
        DimensionMismatch: If the states have different qubit counts
    """
    return 0.5 * (1.0 + a.fidelity(b))


def swap_test_circuit_state(
    a: QuantumState,
    b: QuantumState,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> QuantumState:
    """
    Run H - controlled-SWAP - H on |0>|a>|b>.

    Qubit 0 is the ancilla, qubits 1..n hold ``a`` and n+1..2n hold ``b``.
    """
    if a.num_qubits != b.num_qubits:
        raise DimensionMismatch(f"Cannot swap-test {a.num_qubits}- and {b.num_qubits}-qubit states")
    settings = resolve(settings)
    ledger = _ledger(ledger)
    n = a.num_qubits
    check_qubit_cap(2 * n + 1, settings)

    state = QuantumState.basis(1, 0).tensor(a).tensor(b)
    state = apply_unitary(state, hadamard(0), ledger, settings)
    for i in range(n):
        state = apply_unitary(state, swap(1 + i, 1 + n + i).controlled((0,)), ledger, settings)
    return apply_unitary(state, hadamard(0), ledger, settings)


def sample_swap_test(
    a: QuantumState,
    b: QuantumState,
    shots: int,
    rng: RandomSource,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> float:
    """Estimate the ancilla-|0> probability by sampling the swap-test circuit."""
    ledger = _ledger(ledger)
    state = swap_test_circuit_state(a, b, ledger, settings)
    counts = measure_qubits(state, (0,), rng, shots, ledger)
    return counts.get("0", 0) / shots
