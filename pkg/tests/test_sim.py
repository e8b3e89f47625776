"""
Tests for the statevector simulator.
"""

import numpy as np
import pytest

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
from qmldesk.settings import Settings
from qmldesk.sim import (
    HADAMARD,
    DensityMatrix,
    GateOp,
    QuantumState,
    RandomSource,
    apply_unitary,
    hadamard,
    marginal_probabilities,
    measure_qubits,
    num_qubits_for,
    partial_trace,
    pauli_x,
    prepare_amplitude_state,
    qft_matrix,
    reduced_density_matrix,
    sample_swap_test,
    swap_test_circuit_state,
    swap_test_probability,
    toffoli,
)


def bell_state() -> QuantumState:
    state = QuantumState.basis(2, 0)
    state = apply_unitary(state, hadamard(0))
    return apply_unitary(state, pauli_x(1).controlled((0,)))


class TestRandomSource:
    """Tests for seeded random streams."""

    def test_same_seed_same_stream(self):
        """Test identical seeds give identical draws."""
        assert np.array_equal(RandomSource(7).generator.random(5), RandomSource(7).generator.random(5))

    def test_spawned_streams_are_reproducible(self):
        """Test children depend only on seed and position."""
        a = [s.generator.random() for s in RandomSource(3).spawn(3)]
        b = [s.generator.random() for s in RandomSource(3).spawn(3)]
        assert a == b
        assert len(set(a)) == 3

    def test_negative_seed_rejected(self):
        """Test seeds must be non-negative."""
        with pytest.raises(ValueError):
            RandomSource(-1)


class TestStatePreparation:
    """Tests for amplitude encoding."""

    def test_normalizes(self):
        """Test (3, 4) encodes as (0.6, 0.8) on one qubit."""
        state = prepare_amplitude_state([3, 4])
        assert state.num_qubits == 1
        np.testing.assert_allclose(state.amplitudes, [0.6, 0.8])

    def test_pads_to_power_of_two(self):
        """Test a length-3 vector lands on two qubits with a zero pad."""
        state = prepare_amplitude_state([1, 1, 1])
        assert state.num_qubits == 2
        assert state.amplitudes[3] == 0

    def test_zero_vector_rejected(self):
        """Test the zero vector raises ZeroVector."""
        with pytest.raises(ZeroVector):
            prepare_amplitude_state([0, 0])

    def test_qubit_cap(self):
        """Test registers above the cap raise DimensionOverflow."""
        with pytest.raises(DimensionOverflow):
            prepare_amplitude_state(np.ones(16), settings=Settings(qubit_cap=3))

    def test_ledger_charges_one_preparation(self):
        """Test preparation is charged as one oracle event."""
        ledger = ResourceLedger()
        prepare_amplitude_state([1, 2, 3, 4], ledger)
        assert ledger.state_preparations == 1
        assert ledger.qubits_peak == 2

    def test_num_qubits_for(self):
        """Test register widths for a few lengths."""
        assert [num_qubits_for(n) for n in (1, 2, 3, 4, 5, 8, 9)] == [1, 1, 2, 2, 3, 3, 4]


class TestGates:
    """Tests for gate construction and application."""

    def test_hadamard_on_zero(self):
        """Test H|0> is the uniform superposition."""
        state = apply_unitary(QuantumState.basis(1, 0), hadamard(0))
        np.testing.assert_allclose(state.amplitudes, [1 / np.sqrt(2)] * 2)

    def test_bell_state(self):
        """Test H then CNOT gives (|00> + |11>)/sqrt(2)."""
        np.testing.assert_allclose(bell_state().amplitudes, np.array([1, 0, 0, 1]) / np.sqrt(2), atol=1e-12)

    def test_qubit_zero_is_most_significant(self):
        """Test X on qubit 0 of |00> gives |10>."""
        state = apply_unitary(QuantumState.basis(2, 0), pauli_x(0))
        assert state.probabilities()[2] == pytest.approx(1.0)

    def test_non_unitary_rejected(self):
        """Test a non-unitary matrix raises NonUnitaryGate."""
        with pytest.raises(NonUnitaryGate):
            GateOp(np.array([[1, 1], [0, 1]]), (0,))

    def test_target_out_of_range(self):
        """Test applying a gate beyond the register raises TargetOutOfRange."""
        with pytest.raises(TargetOutOfRange):
            apply_unitary(QuantumState.basis(1, 0), pauli_x(3))

    def test_adjoint_inverts(self):
        """Test U then U^dagger restores the state."""
        gate = GateOp(qft_matrix(2), (0, 1))
        start = prepare_amplitude_state([1, 2, 3, 4])
        state = apply_unitary(apply_unitary(start, gate), gate.adjoint())
        assert state.fidelity(start) == pytest.approx(1.0, abs=1e-12)

    def test_toffoli_truth_table(self):
        """Test Toffoli flips the target only when both controls are 1."""
        for index in range(8):
            out = apply_unitary(QuantumState.basis(3, index), toffoli(0, 1, 2))
            expected = index ^ 1 if index >= 6 else index
            assert out.probabilities()[expected] == pytest.approx(1.0)

    def test_qft_is_unitary(self):
        """Test the QFT matrix passes the unitarity check."""
        GateOp(qft_matrix(3), (0, 1, 2))

    def test_gate_count(self):
        """Test every application is charged as one gate."""
        ledger = ResourceLedger()
        state = QuantumState.basis(2, 0)
        for _ in range(3):
            state = apply_unitary(state, hadamard(1), ledger)
        assert ledger.gate_count == 3


class TestMeasurement:
    """Tests for marginals and sampling."""

    def test_marginal_in_target_order(self):
        """Test marginals follow the requested qubit order."""
        state = QuantumState.basis(2, 1)  # |01>
        np.testing.assert_allclose(marginal_probabilities(state, (0, 1)), [0, 1, 0, 0])
        np.testing.assert_allclose(marginal_probabilities(state, (1, 0)), [0, 0, 1, 0])

    def test_bell_histogram(self):
        """Test a Bell state yields only 00 and 11."""
        counts = measure_qubits(bell_state(), (0, 1), RandomSource(1), 1000)
        assert set(counts) <= {"00", "11"}
        assert sum(counts.values()) == 1000
        assert 400 < counts["00"] < 600

    def test_measurement_is_deterministic_per_seed(self):
        """Test the same seed gives the same histogram."""
        state = prepare_amplitude_state([1, 2, 3, 4])
        a = measure_qubits(state, (0, 1), RandomSource(5), 100)
        b = measure_qubits(state, (0, 1), RandomSource(5), 100)
        assert a == b

    def test_shots_charged(self):
        """Test sampling charges the ledger."""
        ledger = ResourceLedger()
        measure_qubits(QuantumState.basis(1, 0), (0,), RandomSource(0), 25, ledger)
        assert ledger.shots == 25


class TestDensityMatrices:
    """Tests for density matrices and partial traces."""

    def test_bell_reduced_state_is_maximally_mixed(self):
        """Test either half of a Bell pair is I/2."""
        rho = reduced_density_matrix(bell_state(), [0])
        np.testing.assert_allclose(rho.entries, np.eye(2) / 2, atol=1e-12)

    def test_partial_trace_matches_reduced_state(self):
        """Test partial_trace agrees with the pure-state reduction."""
        state = prepare_amplitude_state(np.arange(1, 9))
        full = DensityMatrix.from_state(state)
        for keep in ([0], [1], [2], [0, 2], [1, 2]):
            np.testing.assert_allclose(partial_trace(full, keep).entries, reduced_density_matrix(state, keep).entries, atol=1e-12)

    def test_partial_trace_of_product(self):
        """Test tracing out one factor of a product returns the other."""
        a = DensityMatrix.random(2, RandomSource(1))
        b = DensityMatrix.random(4, RandomSource(2))
        np.testing.assert_allclose(partial_trace(a.tensor(b), [1, 2]).entries, b.entries, atol=1e-12)
        np.testing.assert_allclose(partial_trace(a.tensor(b), [0]).entries, a.entries, atol=1e-12)

    @pytest.mark.parametrize("first, second, combined", [([0, 1, 3], [0, 2], [0, 3]), ([1, 2, 3], [1], [2]), ([0, 2], [0, 1], [0, 2])])
    def test_partial_traces_compose(self, first, second, combined):
        """Test tracing out in two steps equals tracing out at once."""
        rho = DensityMatrix.random(16, RandomSource(5))
        twice = partial_trace(partial_trace(rho, first), second)
        np.testing.assert_allclose(twice.entries, partial_trace(rho, combined).entries, atol=1e-12)
        assert np.trace(twice.entries).real == pytest.approx(1.0)

    def test_empty_keep_set(self):
        """Test an empty keep set raises EmptyKeepSet."""
        with pytest.raises(EmptyKeepSet):
            partial_trace(DensityMatrix.maximally_mixed(2), [])

    def test_invalid_matrices(self):
        """Test trace and positivity checks."""
        with pytest.raises(InvalidDensityMatrix):
            DensityMatrix(2, np.eye(2))
        with pytest.raises(InvalidDensityMatrix):
            DensityMatrix(2, np.diag([1.5, -0.5]))

    def test_non_power_of_two_rejected(self):
        """Test dimensions must be powers of two."""
        with pytest.raises(DimensionMismatch):
            DensityMatrix(3, np.eye(3) / 3)

    def test_from_data_is_covariance(self):
        """Test the covariance front end centers and normalizes."""
        data = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.5], [0.0, -0.5]])
        rho = DensityMatrix.from_data(data)
        np.testing.assert_allclose(rho.entries, np.diag([0.8, 0.2]), atol=1e-12)

    def test_from_data_without_variance(self):
        """Test constant data raises ZeroVector."""
        with pytest.raises(ZeroVector):
            DensityMatrix.from_data([[1.0, 2.0], [1.0, 2.0]])

    def test_trace_distance(self):
        """Test trace distance between orthogonal pure states is 1."""
        zero = DensityMatrix.from_state(QuantumState.basis(1, 0))
        one = DensityMatrix.from_state(QuantumState.basis(1, 1))
        assert zero.trace_distance(one) == pytest.approx(1.0)


class TestSwapTest:
    """Tests for the swap test."""

    def test_identical_states(self):
        """Test identical states read 0 with certainty."""
        a = prepare_amplitude_state([1, 2])
        assert swap_test_probability(a, a) == pytest.approx(1.0)

    def test_orthogonal_states(self):
        """Test orthogonal states read 0 half the time."""
        assert swap_test_probability(QuantumState.basis(1, 0), QuantumState.basis(1, 1)) == pytest.approx(0.5)

    def test_circuit_matches_formula(self):
        """Test the simulated circuit gives (1 + |<a|b>|^2) / 2."""
        a = prepare_amplitude_state([1, 2, 0, 1])
        b = prepare_amplitude_state([0, 1, 1, 1])
        state = swap_test_circuit_state(a, b)
        assert marginal_probabilities(state, (0,))[0] == pytest.approx(swap_test_probability(a, b), abs=1e-12)

    def test_sampled_estimate(self):
        """Test sampling converges to the exact probability."""
        a = prepare_amplitude_state([1, 0])
        b = prepare_amplitude_state([1, 1])
        estimate = sample_swap_test(a, b, 20000, RandomSource(4))
        assert estimate == pytest.approx(0.75, abs=0.02)

    def test_sampled_frequencies_within_binomial_bounds(self):
        """Test sampled swap tests of random pairs stay within 5 sigma of (1 + |<a|b>|^2) / 2."""
        rng = np.random.default_rng(9)
        shots = 10000
        for seed in range(10):
            a = prepare_amplitude_state(rng.normal(size=4))
            b = prepare_amplitude_state(rng.normal(size=4))
            p = swap_test_probability(a, b)
            sigma = np.sqrt(p * (1 - p) / shots)
            assert abs(sample_swap_test(a, b, shots, RandomSource(seed)) - p) <= 5 * sigma

    def test_mismatched_widths(self):
        """Test states of different widths raise DimensionMismatch."""
        with pytest.raises(DimensionMismatch):
            swap_test_circuit_state(QuantumState.basis(1, 0), QuantumState.basis(2, 0))

    def test_hadamard_constant(self):
        """Test the Hadamard matrix squares to identity."""
        np.testing.assert_allclose(HADAMARD @ HADAMARD, np.eye(2), atol=1e-15)
