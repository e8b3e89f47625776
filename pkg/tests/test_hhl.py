"""
Tests for the HHL solver.
"""

import math

import numpy as np
import pytest

from qmldesk.errors import (
    ConfigError,
    DimensionMismatch,
    EigenvalueOutOfRange,
    NotPositiveDefinite,
    SingularSystem,
    ZeroSolution,
    ZeroVector,
)
from qmldesk.hhl import (
    HHLParams,
    LinearSystem,
    QuadraticForm,
    clock_distribution,
    extract_solution,
    gershgorin_bound,
    hermitian_embed,
    hhl_solve,
    phase_estimation,
    quadratic_minimize,
    rescale_minimizer,
    truncated_pseudo_inverse_solution,
)
from qmldesk.ledger import ResourceLedger
from qmldesk.sim import QuantumState, RandomSource, prepare_amplitude_state


def grid_params() -> HHLParams:
    # Eigenvalues 1 and 2 land exactly on clock readings 1 and 2
    return HHLParams(clock_qubits=2, evolution_time=math.pi / 2, eigenvalue_cutoff=1.0, inversion_constant=1.0)


class TestLinearSystem:
    """Tests for LinearSystem and embedding."""

    def test_hermitian_flag(self):
        """Test symmetric matrices are recognized as Hermitian."""
        assert LinearSystem([[2, 1], [1, 3]], [1, 0]).hermitian
        assert not LinearSystem([[1, 2], [0, 1]], [1, 0]).hermitian

    def test_zero_rhs(self):
        """Test b = 0 raises ZeroVector."""
        with pytest.raises(ZeroVector):
            LinearSystem(np.eye(2), [0, 0])

    def test_row_mismatch(self):
        """Test b must have one entry per row."""
        with pytest.raises(DimensionMismatch):
            LinearSystem(np.eye(2), [1, 0, 0])

    def test_embedding_shape_and_solution(self):
        """Test the embedded system is Hermitian and keeps the solution in its lower block."""
        system = LinearSystem([[1.0, 2.0], [0.0, 1.0], [1.0, 0.0]], [3.0, 1.0, 1.0])
        embedded = hermitian_embed(system)
        assert embedded.hermitian
        assert embedded.shape == (5, 5)
        full = np.linalg.lstsq(embedded.matrix, embedded.rhs, rcond=None)[0]
        np.testing.assert_allclose(extract_solution(embedded, full), [1.0, 1.0], atol=1e-10)

    def test_embedding_leaves_hermitian_alone(self):
        """Test Hermitian systems are returned unchanged."""
        system = LinearSystem(np.eye(2), [1, 1])
        assert hermitian_embed(system) is system

    def test_sparsity(self):
        """Test sparsity counts the densest row."""
        assert LinearSystem([[1, 0, 0], [1, 1, 1], [0, 0, 1]], [1, 1, 1]).sparsity() == 3

    def test_gershgorin(self):
        """Test the Gershgorin bound is the largest absolute row sum."""
        assert gershgorin_bound(np.array([[2, -1], [-1, 3]])) == 4


class TestHHLParams:
    """Tests for HHLParams."""

    def test_constant_above_cutoff_rejected(self):
        """Test C may not exceed the eigenvalue cutoff."""
        with pytest.raises(ConfigError):
            HHLParams(3, 1.0, eigenvalue_cutoff=0.5, inversion_constant=0.6)

    def test_for_positive_system(self):
        """Test parameters for a positive spectrum use an unsigned clock."""
        params = HHLParams.for_system(LinearSystem(np.diag([1.0, 2.0]), [1, 1]), clock_qubits=4)
        assert not params.signed
        assert params.eigenvalue_cutoff == pytest.approx(0.5)
        assert params.inversion_constant == params.eigenvalue_cutoff
        assert params.evolution_time == pytest.approx(2 * math.pi * (1 - 2**-4) / 2)

    def test_negative_spectrum_uses_signed_clock(self):
        """Test a negative eigenvalue switches to a signed clock."""
        params = HHLParams.for_system(LinearSystem(np.diag([1.0, -2.0]), [1, 1]), clock_qubits=4)
        assert params.signed
        assert params.decode(15) == pytest.approx(-2 * math.pi / (16 * params.evolution_time))

    def test_b_in_null_space(self):
        """Test b orthogonal to every nonzero eigenvector raises SingularSystem."""
        with pytest.raises(SingularSystem):
            HHLParams.for_system(LinearSystem(np.diag([1.0, 0.0]), [0, 1]))

    def test_rotation_amplitudes(self):
        """Test C / lambda on the grid and zero below the cutoff."""
        amps = grid_params().rotation_amplitudes()
        np.testing.assert_allclose(amps, [0.0, 1.0, 0.5, 1 / 3])


class TestPhaseEstimation:
    """Tests for phase_estimation."""

    def test_grid_eigenvalues_are_read_exactly(self):
        """Test eigenvalues on the clock grid read with certainty."""
        state = phase_estimation(np.diag([1.0, 2.0]), QuantumState.basis(1, 1), grid_params())
        values, probs = clock_distribution(state, grid_params())
        assert values[np.argmax(probs)] == pytest.approx(2.0)
        assert probs.max() == pytest.approx(1.0)

    def test_mixture_of_eigenvectors(self):
        """Test a superposition splits the clock readings by weight."""
        state = phase_estimation(np.diag([1.0, 2.0]), prepare_amplitude_state([1, math.sqrt(3)]), grid_params())
        _, probs = clock_distribution(state, grid_params())
        np.testing.assert_allclose(probs, [0.0, 0.25, 0.75, 0.0], atol=1e-12)

    def test_out_of_window(self):
        """Test an eigenvalue beyond the clock window raises."""
        with pytest.raises(EigenvalueOutOfRange):
            phase_estimation(np.diag([1.0, 5.0]), QuantumState.basis(1, 0), grid_params())


class TestHHLSolve:
    """Tests for hhl_solve."""

    def test_diagonal_solution(self):
        """Test diag(1, 2) x = (1, 1) gives x proportional to (2, 1)."""
        result = hhl_solve(LinearSystem(np.diag([1.0, 2.0]), [1.0, 1.0]), grid_params())
        np.testing.assert_allclose(np.abs(result.solution), np.array([2.0, 1.0]) / math.sqrt(5), atol=1e-10)
        assert result.success_probability == pytest.approx(0.5 * 1.0 + 0.5 * 0.25)
        assert result.fidelity([2.0, 1.0]) == pytest.approx(1.0)

    def test_identity_success_probability(self):
        """Test A = I with chosen parameters succeeds with probability 1/4."""
        system = LinearSystem(np.eye(2), [1.0, 0.0])
        result = hhl_solve(system, HHLParams.for_system(system, clock_qubits=3))
        assert result.success_probability == pytest.approx(0.25)
        assert result.fidelity([1.0, 0.0]) == pytest.approx(1.0)

    def test_matches_classical_solution(self):
        """Test a 4x4 system with grid eigenvalues agrees with numpy."""
        rng = np.random.default_rng(4)
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        a = q @ np.diag([1.0, 2.0, 3.0, 4.0]) @ q.T
        b = rng.normal(size=4)
        params = HHLParams(clock_qubits=3, evolution_time=math.pi / 4, eigenvalue_cutoff=1.0, inversion_constant=1.0)
        result = hhl_solve(LinearSystem(a, b), params)
        assert result.fidelity(np.linalg.solve(a, b)) == pytest.approx(1.0, abs=1e-10)

    def test_random_well_conditioned_systems(self):
        """Test random 8x8 Hermitian systems with condition number <= 10 reach fidelity 0.99."""
        rng = np.random.default_rng(20)
        good = 0
        for instance in range(20):
            signed = instance % 2 == 1
            q, _ = np.linalg.qr(rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
            magnitudes = rng.uniform(1.0, 10.0, size=8)
            magnitudes[:2] = [1.0, 10.0]
            signs = np.where(rng.random(8) < 0.5, -1.0, 1.0) if signed else np.ones(8)
            signs[0] = -1.0 if signed else 1.0
            a = q @ np.diag(signs * magnitudes) @ q.conj().T
            a = (a + a.conj().T) / 2
            b = rng.normal(size=8)
            system = LinearSystem(a, b)
            params = HHLParams.for_system(system, clock_qubits=8)
            assert params.signed == signed
            result = hhl_solve(system, params)
            good += result.fidelity(np.linalg.solve(a, b)) >= 0.99
        assert good >= 19

    def test_rectangular_system(self):
        """Test a consistent overdetermined system through the embedding."""
        system = LinearSystem([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [1.0, 2.0, 3.0])
        result = hhl_solve(system, HHLParams.for_system(system, clock_qubits=8))
        assert result.fidelity([1.0, 2.0]) > 0.95

    def test_truncated_pseudo_inverse(self):
        """Test the classical reference drops small eigenvalues."""
        system = LinearSystem(np.diag([1.0, 0.01]), [1.0, 1.0])
        np.testing.assert_allclose(truncated_pseudo_inverse_solution(system, 0.5), [1.0, 0.0])

    def test_sampled_mode(self):
        """Test sampled post-selection counts attempts as shots."""
        ledger = ResourceLedger()
        result = hhl_solve(
            LinearSystem(np.diag([1.0, 2.0]), [1.0, 1.0]), grid_params(), RandomSource(9), ledger, mode="sampled"
        )
        assert result.attempts >= 1
        assert ledger.shots == result.attempts

    def test_sampled_needs_random_source(self):
        """Test sampled mode without a stream raises ValueError."""
        with pytest.raises(ValueError):
            hhl_solve(LinearSystem(np.eye(2), [1, 0]), grid_params(), mode="sampled")

    def test_nothing_survives_cutoff(self):
        """Test b only on eigenvalues below the cutoff raises SingularSystem."""
        params = HHLParams(clock_qubits=2, evolution_time=math.pi / 2, eigenvalue_cutoff=1.5, inversion_constant=1.0)
        with pytest.raises(SingularSystem):
            hhl_solve(LinearSystem(np.diag([1.0, 2.0]), [1.0, 0.0]), params)

    def test_ledger_records(self):
        """Test the solver records sparsity and success probability."""
        ledger = ResourceLedger()
        hhl_solve(LinearSystem(np.diag([1.0, 2.0]), [1.0, 1.0]), grid_params(), ledger=ledger)
        assert ledger.metrics["matrix_sparsity"] == 1
        assert ledger.metrics["success_probability"] == pytest.approx(0.625)
        assert ledger.state_preparations == 1
        assert ledger.qubits_peak == 4

    def test_log_callback(self):
        """Test progress is reported through the callback."""
        lines = []
        hhl_solve(LinearSystem(np.eye(2), [1, 0]), grid_params(), log_callback=lambda msg, level: lines.append(level))
        assert "INFO" in lines


class TestQuadraticMinimize:
    """Tests for quadratic_minimize."""

    def test_minimizer(self):
        """Test x^T diag(1, 2) x - 2 x1 - 4 x2 is minimized at (1, 1)."""
        q = QuadraticForm(np.diag([1.0, 2.0]), [-2.0, -4.0])
        result = quadratic_minimize(q, clock_qubits=8)
        np.testing.assert_allclose(result.minimizer, [1.0, 1.0], atol=0.05)

    def test_rescale_exact_direction(self):
        """Test rescaling the exact direction recovers the minimizer, whatever its phase."""
        q = QuadraticForm(np.diag([1.0, 2.0]), [-2.0, -4.0])
        direction = -1j * np.array([1.0, 1.0]) / math.sqrt(2)
        np.testing.assert_allclose(rescale_minimizer(q, direction), [1.0, 1.0], atol=1e-12)

    def test_not_positive_definite(self):
        """Test an indefinite form raises NotPositiveDefinite."""
        with pytest.raises(NotPositiveDefinite):
            quadratic_minimize(QuadraticForm(np.diag([1.0, -1.0]), [1.0, 1.0]))

    def test_zero_linear_term(self):
        """Test b = 0 raises ZeroSolution."""
        with pytest.raises(ZeroSolution):
            quadratic_minimize(QuadraticForm(np.eye(2), [0.0, 0.0]))

    def test_evaluate(self):
        """Test evaluate computes x^T A x + b^T x + c."""
        q = QuadraticForm(np.diag([1.0, 2.0]), [-2.0, -4.0], constant=3.0)
        assert q.evaluate([1.0, 1.0]) == pytest.approx(0.0)
