"""
Principal component analysis with density-matrix exponentiation.

Copies of rho act as their own Hamiltonian: a partial SWAP between one copy
and a target state, followed by discarding the copy, evolves the target by
e^{-i rho dt} to second order in dt. Chaining n such steps gives e^{-i rho t}
with error O(t^2 / n). Phase estimation driven by these steps on rho itself
samples eigenvalue lambda with probability lambda, and the post-measurement
system state is the matching eigenvector.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from qmldesk.errors import DimensionMismatch, InvalidPlan
from qmldesk.ledger import ResourceLedger
from qmldesk.settings import Settings, resolve
from qmldesk.sim import DensityMatrix, RandomSource, check_qubit_cap, partial_trace, qft_matrix


@dataclass(frozen=True)
class ExponentiationPlan:
    """Total evolution time and number of rho copies (one per step)."""

    time: float
    n_copies: int

    def __post_init__(self):
        if self.n_copies < 1:
            raise InvalidPlan(f"n_copies must be >= 1, got {self.n_copies}")
        if self.time < 0 or not math.isfinite(self.time):
            raise InvalidPlan(f"time must be a finite non-negative number, got {self.time}")

    @property
    def dt(self) -> float:
        return self.time / self.n_copies

    @property
    def error_scale(self) -> float:
        """t^2 / n, the order of the accumulated error."""
        return self.time**2 / self.n_copies

    def validate_for(self, rho: DensityMatrix) -> None:
        """
        Raises:
            InvalidPlan: If dt * |rho| > 1, where the per-step expansion breaks down
        """
        if self.dt * rho.spectral_norm() > 1:
            raise InvalidPlan(f"step dt = {self.dt:.3g} is too large for |rho| = {rho.spectral_norm():.3g}")


def swap_operator(dim: int) -> np.ndarray:
    """SWAP on two registers of dimension ``dim``."""
    s = np.zeros((dim * dim, dim * dim))
    for i in range(dim):
        for j in range(dim):
            s[j * dim + i, i * dim + j] = 1.0
    return s


def dm_exp_step(
    rho: DensityMatrix,
    sigma: DensityMatrix,
    dt: float,
    settings: Settings | None = None,
) -> DensityMatrix:
    """
    One partial-swap step: Tr_1[e^{-iS dt} (rho x sigma) e^{iS dt}].

    Raises:
        DimensionMismatch: If rho and sigma differ in dimension
    """
    settings = resolve(settings)
    if rho.dim != sigma.dim:
        raise DimensionMismatch(f"rho is {rho.dim}-dimensional, sigma is {sigma.dim}-dimensional")
    dim = rho.dim
    # S^2 = I, so e^{-iS dt} = cos(dt) I - i sin(dt) S
    u = math.cos(dt) * np.eye(dim * dim) - 1j * math.sin(dt) * swap_operator(dim)
    joint = DensityMatrix(
        dim * dim,
        u @ np.kron(rho.entries, sigma.entries) @ u.conj().T,
        settings.hermitian_tol,
        settings.norm_tol,
        settings.psd_tol,
    )
    return partial_trace(joint, range(rho.num_qubits, 2 * rho.num_qubits))


def swap_step_map(rho: np.ndarray, x: np.ndarray, dt: float) -> np.ndarray:
    """
    The partial-swap step as a linear map on (a stack of) matrices.

    X -> cos^2 X + sin^2 tr(X) rho - i cos sin [rho, X]; equal to dm_exp_step
    on density matrices and valid for any square X.
    """
    c, s = math.cos(dt), math.sin(dt)
    trace = np.trace(x, axis1=-2, axis2=-1)[..., None, None]
    return c * c * x + s * s * trace * rho - 1j * c * s * (rho @ x - x @ rho)


def exact_evolution(rho: DensityMatrix, sigma: DensityMatrix, time: float) -> np.ndarray:
    """e^{-i rho t} sigma e^{i rho t} by dense matrix exponential."""
    u = expm(-1j * time * rho.entries)
    return u @ sigma.entries @ u.conj().T


def dm_exponentiate(
    rho: DensityMatrix,
    sigma: DensityMatrix,
    plan: ExponentiationPlan,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> tuple[DensityMatrix, float]:
    """
    Apply e^{-i rho t} to sigma using n_copies partial-swap steps.

    Returns:
        (evolved state, trace distance to the exact evolution)
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    if rho.dim != sigma.dim:
        raise DimensionMismatch(f"rho is {rho.dim}-dimensional, sigma is {sigma.dim}-dimensional")
    plan.validate_for(rho)
    check_qubit_cap(2 * rho.num_qubits, settings)

    out = sigma
    if plan.time > 0:
        for _ in range(plan.n_copies):
            out = dm_exp_step(rho, out, plan.dt, settings)
    ledger.charge_copies(plan.n_copies)
    ledger.charge_gates(plan.n_copies)
    ledger.observe_qubits(2 * rho.num_qubits)

    exact = DensityMatrix(rho.dim, exact_evolution(rho, sigma, plan.time))
    return out, exact.trace_distance(out)


# -------------------------------------------------------------------------
# Eigenpair extraction
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PrincipalDecomposition:
    """Descending eigenvalues with eigenvector columns; rank is the retained count."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int

    @classmethod
    def exact(cls, rho: DensityMatrix, threshold: float = 0.0) -> "PrincipalDecomposition":
        """Dense eigendecomposition, keeping eigenvalues >= threshold."""
        values, vectors = rho.eigh()
        keep = values >= threshold
        return cls(np.clip(values[keep], 0.0, 1.0), vectors[:, keep], int(np.count_nonzero(keep)))

    def to_dict(self, include_vectors: bool = False) -> dict:
        data = {"eigenvalues": self.eigenvalues.tolist(), "rank": self.rank}
        if include_vectors:
            data["eigenvectors"] = {
                "real": self.eigenvectors.real.T.tolist(),
                "imag": self.eigenvectors.imag.T.tolist(),
            }
        return data


def _controlled_step_superop(rho: np.ndarray, dt: float) -> np.ndarray:
    """
    Superoperator of one controlled partial-swap step on control x system.

    Row-major vectorization; the control is the leading qubit. The |1><1|
    block evolves by the step map, the off-diagonal blocks pick up a single
    factor of the partial swap and the |0><0| block is left alone.
    """
    d = rho.shape[0]
    size = 2 * d
    basis = np.eye(size * size, dtype=np.complex128).reshape(size * size, size, size)
    out = basis.copy()
    c, s = math.cos(dt), math.sin(dt)

    top, bottom = slice(0, d), slice(d, size)
    x01 = basis[:, top, bottom]
    x10 = basis[:, bottom, top]
    x11 = basis[:, bottom, bottom]
    out[:, top, bottom] = c * x01 + 1j * s * (x01 @ rho)
    out[:, bottom, top] = c * x10 - 1j * s * (rho @ x10)
    out[:, bottom, bottom] = swap_step_map(rho, x11, dt)
    return out.reshape(size * size, size * size).T


def _apply_superop(big: np.ndarray, superop: np.ndarray, targets: list[int], num_qubits: int) -> np.ndarray:
    k = len(targets)
    tensor = big.reshape((2,) * (2 * num_qubits))
    op = superop.reshape((2,) * (4 * k))
    in_axes = list(range(2 * k, 4 * k))
    target_axes = targets + [num_qubits + t for t in targets]
    out = np.tensordot(op, tensor, axes=(in_axes, target_axes))
    out = np.moveaxis(out, list(range(2 * k)), target_axes)
    dim = 2**num_qubits
    return out.reshape(dim, dim)


def eigenvalue_grid(clock_qubits: int) -> np.ndarray:
    """Eigenvalue read for each clock outcome m: ((-m) mod 2^c) / (2^c - 1)."""
    size = 2**clock_qubits
    return ((-np.arange(size)) % size) / (size - 1)


def _peaks(grid: np.ndarray, probs: np.ndarray) -> list[list[int]]:
    """Group clock outcomes into peaks; each outcome joins its nearest local maximum."""
    order = np.argsort(grid)
    p = probs[order]
    n = p.size
    maxima = [
        i
        for i in range(n)
        if p[i] > 0 and (i == 0 or p[i] >= p[i - 1]) and (i == n - 1 or p[i] > p[i + 1])
    ]
    if not maxima:
        return []
    groups: list[list[int]] = [[] for _ in maxima]
    positions = np.array(maxima)
    for i in range(n):
        if p[i] == 0:
            continue
        nearest = int(np.argmin(np.abs(positions - i)))
        groups[nearest].append(int(order[i]))
    return groups


def _conditional_clock_states(
    rho: DensityMatrix,
    plan: ExponentiationPlan,
    clock_qubits: int,
    ledger: ResourceLedger,
    settings: Settings,
) -> np.ndarray:
    """Unnormalized system blocks <m| R |m> for every clock outcome m after phase estimation."""
    if clock_qubits < 2:
        raise ValueError(f"clock_qubits must be >= 2, got {clock_qubits}")
    if plan.time <= 0:
        raise InvalidPlan("eigenvalue extraction needs a positive evolution time")
    c = clock_qubits
    s = rho.num_qubits
    total = c + s
    check_qubit_cap(total + s, settings)
    size = 2**c
    t0 = 2 * math.pi * (1 - 1 / size)

    big = np.kron(np.full((size, size), 1 / size), rho.entries)
    steps_total = 0
    for j in range(c):
        tau = t0 * 2 ** (c - 1 - j)
        steps = max(plan.n_copies, math.ceil(tau**2 / plan.error_scale))
        superop = np.linalg.matrix_power(_controlled_step_superop(rho.entries, tau / steps), steps)
        big = _apply_superop(big, superop, [j] + list(range(c, total)), total)
        steps_total += steps

    inverse_qft = np.kron(qft_matrix(c).conj().T, np.eye(rho.dim))
    big = inverse_qft @ big @ inverse_qft.conj().T

    ledger.charge_copies(steps_total)
    ledger.charge_gates(steps_total + c + 1)
    ledger.observe_qubits(total + s)

    blocks = big.reshape(size, rho.dim, size, rho.dim)
    return np.einsum("aiaj->aij", blocks)


def eigenvalue_register(
    rho: DensityMatrix,
    plan: ExponentiationPlan,
    clock_qubits: int,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalue read for each clock outcome and the exact outcome probabilities."""
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    conditional = _conditional_clock_states(rho, plan, clock_qubits, ledger, settings)
    probs = np.clip(np.real(np.einsum("aii->a", conditional)), 0.0, None)
    return eigenvalue_grid(clock_qubits), probs / probs.sum()


def qpca_extract(
    rho: DensityMatrix,
    plan: ExponentiationPlan,
    clock_qubits: int,
    rng: RandomSource | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    shots: int = 0,
    log_callback: Callable[[str, str], None] | None = None,
) -> PrincipalDecomposition:
    """
    Estimate the principal eigenpairs of rho by phase estimation.

    Each clock qubit j controls e^{-i rho tau_j} with tau_j = t0 2^(c-1-j)
    and t0 = 2 pi (1 - 2^-c), realized with ceil(tau_j^2 / eps) controlled
    partial-swap steps where eps = t^2 / n is the plan's error scale. The
    clock is read exactly (shots = 0) or by sampling; every peak of the
    clock distribution gives an eigenvalue (its weighted grid position) and
    a multiplicity (its weight over that eigenvalue). Eigenvectors are the
    dominant eigenvectors of the system state conditioned on each peak.

    Args:
        rho: Density matrix to analyze
        plan: Copy budget per unit of squared evolution time
        clock_qubits: Clock width, at least 2
        rng: Random stream, required when shots > 0
        ledger: Resource ledger to charge
        settings: Retained-rank threshold and qubit cap
        shots: Clock samples; 0 uses exact probabilities
        log_callback: Optional callback for logging (message, level)

    Returns:
        PrincipalDecomposition of the retained eigenpairs
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    log = log_callback or (lambda msg, level: None)
    if shots > 0 and rng is None:
        raise ValueError("Sampling the clock needs a random source")

    c = clock_qubits
    conditional = _conditional_clock_states(rho, plan, c, ledger, settings)
    probs = np.clip(np.real(np.einsum("aii->a", conditional)), 0.0, None)
    probs = probs / probs.sum()
    if shots > 0:
        counts = rng.generator.multinomial(shots, probs)
        ledger.charge_shots(shots)
        observed = counts / shots
    else:
        observed = probs

    grid = eigenvalue_grid(c)
    eigenvalues = []
    vectors = []
    for group in _peaks(grid, observed):
        weight = float(observed[group].sum())
        value = float(np.dot(grid[group], observed[group]) / weight)
        if value < settings.retained_rank_threshold:
            continue
        # A peak of eigenvalue lambda carries weight lambda per eigenvector; lighter peaks are leakage
        multiplicity = round(weight / value)
        if multiplicity < 1:
            continue
        block = conditional[group].sum(axis=0)
        block = (block + block.conj().T) / 2
        _, vecs = np.linalg.eigh(block)
        for m in range(min(multiplicity, rho.dim)):
            eigenvalues.append(value)
            vectors.append(vecs[:, -1 - m])

    log(f"Clock distribution gave {len(eigenvalues)} eigenpair(s) above {settings.retained_rank_threshold}", "INFO")
    if not eigenvalues:
        return PrincipalDecomposition(np.zeros(0), np.zeros((rho.dim, 0), dtype=np.complex128), 0)

    order = np.argsort(eigenvalues)[::-1]
    values = np.clip(np.array(eigenvalues)[order], 0.0, 1.0)
    if values.sum() > 1:
        values = values / values.sum()
    basis = np.column_stack([vectors[i] for i in order])
    q, r = np.linalg.qr(basis)
    # Keep each column's orientation
    diagonal = np.diag(r)
    q = q * np.divide(diagonal, np.abs(diagonal), out=np.ones_like(diagonal), where=np.abs(diagonal) > 0)
    return PrincipalDecomposition(values, q, len(values))


def principal_projection_error(rho: DensityMatrix, decomposition: PrincipalDecomposition, rank: int) -> float:
    """Spectral norm of rho - P rho P, with P projecting onto the top ``rank`` eigenvectors."""
    if rank < 0 or rank > rho.dim:
        raise ValueError(f"rank must be in [0, {rho.dim}], got {rank}")
    if rank > decomposition.eigenvectors.shape[1]:
        raise ValueError(f"decomposition holds only {decomposition.eigenvectors.shape[1]} eigenvectors")
    v = decomposition.eigenvectors[:, :rank]
    projector = v @ v.conj().T
    return float(np.linalg.norm(rho.entries - projector @ rho.entries @ projector, ord=2))


@dataclass(frozen=True)
class SpectrumFlatness:
    """How far a spectrum is from the flat O(1/d) case."""

    largest_times_dim: float
    participation_ratio: float
    flat: bool

    def to_dict(self) -> dict:
        return {
            "largest_times_dim": self.largest_times_dim,
            "participation_ratio": self.participation_ratio,
            "flat": self.flat,
        }


def spectrum_flatness(rho: DensityMatrix, flat_ratio: float = 2.0) -> SpectrumFlatness:
    """
    Diagnose a flat spectrum.

    largest_times_dim is lambda_max * d (1 for the maximally mixed state);
    participation_ratio is 1 / sum(lambda^2), the effective rank. The
    spectrum is flagged flat when lambda_max * d < flat_ratio.
    """
    values = np.clip(np.linalg.eigvalsh(rho.entries), 0.0, None)
    largest = float(values.max()) * rho.dim
    participation = float(1.0 / np.sum(values**2))
    return SpectrumFlatness(largest, participation, largest < flat_ratio)
