"""
Tests for density-matrix exponentiation and principal component extraction.
"""

import numpy as np
import pytest

from qmldesk.errors import DimensionMismatch, InvalidPlan
from qmldesk.ledger import ResourceLedger
from qmldesk.qpca import (
    ExponentiationPlan,
    PrincipalDecomposition,
    dm_exp_step,
    dm_exponentiate,
    eigenvalue_grid,
    eigenvalue_register,
    principal_projection_error,
    qpca_extract,
    spectrum_flatness,
    swap_step_map,
)
from qmldesk.sim import DensityMatrix, QuantumState, RandomSource, prepare_amplitude_state


def plus_state() -> DensityMatrix:
    return DensityMatrix.from_state(prepare_amplitude_state([1, 1]))


def grid_rho() -> DensityMatrix:
    # 5/7 and 2/7 sit on the 3-qubit clock grid
    return DensityMatrix(2, np.diag([5 / 7, 2 / 7]))


class TestExponentiationPlan:
    """Tests for ExponentiationPlan."""

    def test_dt_and_error_scale(self):
        """Test derived step size and error scale."""
        plan = ExponentiationPlan(time=2.0, n_copies=8)
        assert plan.dt == 0.25
        assert plan.error_scale == 0.5

    def test_needs_copies(self):
        """Test zero copies raises InvalidPlan."""
        with pytest.raises(InvalidPlan):
            ExponentiationPlan(time=1.0, n_copies=0)

    def test_step_too_large(self):
        """Test dt |rho| > 1 raises InvalidPlan."""
        with pytest.raises(InvalidPlan):
            ExponentiationPlan(time=10.0, n_copies=2).validate_for(DensityMatrix.from_state(QuantumState.basis(1, 0)))


class TestDensityMatrixExponentiation:
    """Tests for dm_exponentiate."""

    def test_step_matches_linear_map(self):
        """Test the partial-swap step equals its closed-form map."""
        rho = DensityMatrix.random(2, RandomSource(3))
        sigma = plus_state()
        step = dm_exp_step(rho, sigma, 0.1)
        np.testing.assert_allclose(step.entries, swap_step_map(rho.entries, sigma.entries, 0.1), atol=1e-12)

    def test_error_shrinks_with_copies(self):
        """Test eight times the copies cuts the error roughly eightfold."""
        rho = DensityMatrix.random(2, RandomSource(1))
        sigma = plus_state()
        _, coarse = dm_exponentiate(rho, sigma, ExponentiationPlan(1.0, 8))
        _, fine = dm_exponentiate(rho, sigma, ExponentiationPlan(1.0, 64))
        assert fine < coarse
        assert 4 < coarse / fine < 16

    def test_zero_time_is_identity(self):
        """Test t = 0 leaves sigma unchanged."""
        rho = DensityMatrix.random(2, RandomSource(1))
        out, error = dm_exponentiate(rho, plus_state(), ExponentiationPlan(0.0, 4))
        np.testing.assert_allclose(out.entries, plus_state().entries)
        assert error == pytest.approx(0.0, abs=1e-12)

    def test_copies_charged(self):
        """Test every step consumes one copy."""
        ledger = ResourceLedger()
        dm_exponentiate(DensityMatrix.maximally_mixed(1), plus_state(), ExponentiationPlan(1.0, 16), ledger)
        assert ledger.copies_consumed == 16
        assert ledger.qubits_peak == 2

    def test_dimension_mismatch(self):
        """Test rho and sigma must share a dimension."""
        with pytest.raises(DimensionMismatch):
            dm_exponentiate(DensityMatrix.maximally_mixed(2), plus_state(), ExponentiationPlan(1.0, 4))


class TestEigenpairExtraction:
    """Tests for qpca_extract."""

    def test_grid(self):
        """Test clock outcome m reads ((-m) mod 2^c) / (2^c - 1)."""
        np.testing.assert_allclose(eigenvalue_grid(2), [0.0, 1.0, 2 / 3, 1 / 3])

    def test_clock_distribution(self):
        """Test grid eigenvalues are read with probability equal to themselves."""
        grid, probs = eigenvalue_register(grid_rho(), ExponentiationPlan(1.0, 10000), clock_qubits=3)
        assert probs[np.argmin(np.abs(grid - 5 / 7))] == pytest.approx(5 / 7, abs=1e-3)
        assert probs[np.argmin(np.abs(grid - 2 / 7))] == pytest.approx(2 / 7, abs=1e-3)

    def test_exact_clock(self):
        """Test both eigenpairs are recovered from the exact clock distribution."""
        result = qpca_extract(grid_rho(), ExponentiationPlan(1.0, 10000), clock_qubits=3)
        assert result.rank == 2
        np.testing.assert_allclose(result.eigenvalues, [5 / 7, 2 / 7], atol=1e-3)
        assert abs(result.eigenvectors[0, 0]) == pytest.approx(1.0, abs=1e-3)
        assert abs(result.eigenvectors[1, 1]) == pytest.approx(1.0, abs=1e-3)

    @pytest.mark.parametrize("clock_qubits", [4, 6])
    def test_rank_two_in_eight_dimensions(self, clock_qubits):
        """Test a rank-2 rho on three qubits gives both eigenpairs within one clock step."""
        rng = np.random.default_rng(17)
        q, _ = np.linalg.qr(rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
        v1, v2 = q[:, 0], q[:, 1]
        rho = DensityMatrix(8, 2 / 3 * np.outer(v1, v1.conj()) + 1 / 3 * np.outer(v2, v2.conj()))
        result = qpca_extract(rho, ExponentiationPlan(1.0, 10000), clock_qubits)
        tolerance = 2.0 ** -(clock_qubits - 1)
        assert result.rank == 2
        np.testing.assert_allclose(result.eigenvalues, [2 / 3, 1 / 3], atol=tolerance)
        assert abs(np.vdot(v1, result.eigenvectors[:, 0])) ** 2 == pytest.approx(1.0, abs=1e-2)
        assert abs(np.vdot(v2, result.eigenvectors[:, 1])) ** 2 == pytest.approx(1.0, abs=1e-2)

    def test_off_grid_principal_eigenvalue(self):
        """Test an eigenvalue between clock readings is still located within one step."""
        rng = np.random.default_rng(18)
        q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        v1, v2 = q[:, 0], q[:, 1]
        rho = DensityMatrix(8, 0.7 * np.outer(v1, v1) + 0.3 * np.outer(v2, v2))
        result = qpca_extract(rho, ExponentiationPlan(1.0, 10000), clock_qubits=6)
        assert result.eigenvalues[0] == pytest.approx(0.7, abs=2.0**-5)

    def test_sampled_clock(self):
        """Test sampling the clock finds the principal eigenvalue."""
        ledger = ResourceLedger()
        result = qpca_extract(grid_rho(), ExponentiationPlan(1.0, 10000), 3, RandomSource(6), ledger, shots=5000)
        assert result.eigenvalues[0] == pytest.approx(5 / 7, abs=1e-3)
        assert ledger.shots == 5000

    def test_shots_need_random_source(self):
        """Test sampling without a stream raises ValueError."""
        with pytest.raises(ValueError):
            qpca_extract(grid_rho(), ExponentiationPlan(1.0, 100), 3, shots=10)

    def test_projection_error(self):
        """Test the top eigenvector leaves only the smaller eigenvalue."""
        rho = grid_rho()
        exact = PrincipalDecomposition.exact(rho)
        assert principal_projection_error(rho, exact, 1) == pytest.approx(2 / 7)
        assert principal_projection_error(rho, exact, 2) == pytest.approx(0.0, abs=1e-12)

    def test_exact_threshold(self):
        """Test the exact decomposition drops eigenvalues below the threshold."""
        rho = DensityMatrix(4, np.diag([0.7, 0.295, 0.005, 0.0]))
        assert PrincipalDecomposition.exact(rho, threshold=0.01).rank == 2

    def test_to_dict(self):
        """Test vectors are included only on request."""
        exact = PrincipalDecomposition.exact(grid_rho())
        assert "eigenvectors" not in exact.to_dict()
        assert len(exact.to_dict(include_vectors=True)["eigenvectors"]["real"]) == 2


class TestSpectrumFlatness:
    """Tests for spectrum_flatness."""

    def test_maximally_mixed_is_flat(self):
        """Test I/d has lambda_max d = 1 and full participation."""
        flat = spectrum_flatness(DensityMatrix.maximally_mixed(3))
        assert flat.flat
        assert flat.largest_times_dim == pytest.approx(1.0)
        assert flat.participation_ratio == pytest.approx(8.0)

    def test_pure_state_is_not_flat(self):
        """Test a pure state has participation ratio 1."""
        flat = spectrum_flatness(DensityMatrix.from_state(QuantumState.basis(2, 0)))
        assert not flat.flat
        assert flat.participation_ratio == pytest.approx(1.0)
