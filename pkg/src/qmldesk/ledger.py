"""
Resource accounting.

A ResourceLedger counts the space and time a simulated protocol would
consume on quantum hardware: peak qubits, unitary applications, oracle
queries and measurement shots. Costs that the simulator does not execute
(QRAM state preparation, Gibbs-state preparation) are recorded as
symbolic expressions next to the counters.
"""

import threading
from dataclasses import dataclass, field


@dataclass
class ResourceLedger:
    """Per-run resource counters. All counters only ever grow."""

    qubits_peak: int = 0
    gate_count: int = 0
    oracle_queries: int = 0
    shots: int = 0
    state_preparations: int = 0
    copies_consumed: int = 0
    classical_ops: int = 0
    symbolic: dict[str, str] = field(default_factory=dict)
    metrics: dict[str, float] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def _add(self, counter: str, amount: int) -> None:
        if amount < 0:
            raise ValueError(f"Ledger counter {counter} cannot decrease (got {amount})")
        with self._lock:
            setattr(self, counter, getattr(self, counter) + int(amount))

    def observe_qubits(self, num_qubits: int) -> None:
        """Record a register width; keeps the maximum seen."""
        with self._lock:
            self.qubits_peak = max(self.qubits_peak, int(num_qubits))

    def charge_gates(self, count: int = 1) -> None:
        """Charge unitary applications."""
        self._add("gate_count", count)

    def charge_queries(self, count: int = 1) -> None:
        """Charge oracle queries."""
        self._add("oracle_queries", count)

    def charge_shots(self, count: int) -> None:
        """Charge measurement shots."""
        self._add("shots", count)

    def charge_preparation(self, num_amplitudes: int) -> None:
        """Charge one ideal-oracle state preparation of the given length."""
        self._add("state_preparations", 1)
        self.record_symbolic(
            "state_preparation",
            "QRAM oracle: O(sqrt(n)) or O(polylog n) per prepared state",
        )
        with self._lock:
            self.metrics["largest_prepared_state"] = max(
                self.metrics.get("largest_prepared_state", 0.0), float(num_amplitudes)
            )

    def charge_copies(self, count: int) -> None:
        """Charge copies of a density matrix consumed by exponentiation."""
        self._add("copies_consumed", count)

    def charge_classical(self, count: int) -> None:
        """Charge classical elementary operations (comparisons, edge reads)."""
        self._add("classical_ops", count)

    def record_symbolic(self, name: str, expression: str) -> None:
        """Record a cost that is accounted for but not executed."""
        with self._lock:
            self.symbolic[name] = expression

    def record(self, name: str, value: float) -> None:
        """Record a named scalar observation (for example matrix sparsity)."""
        with self._lock:
            self.metrics[name] = float(value)

    def merge(self, other: "ResourceLedger") -> None:
        """Fold another ledger's counts into this one."""
        snap = other.snapshot()
        self.observe_qubits(snap["qubits_peak"])
        for counter in COUNTERS[1:]:
            self._add(counter, snap[counter])
        with self._lock:
            self.symbolic.update(snap["symbolic"])
            for name, value in snap["metrics"].items():
                self.metrics[name] = max(self.metrics.get(name, value), value)

    def snapshot(self) -> dict:
        """Plain-dict copy of the counters for reports."""
        with self._lock:
            data = {counter: getattr(self, counter) for counter in COUNTERS}
            data["symbolic"] = dict(sorted(self.symbolic.items()))
            data["metrics"] = dict(sorted(self.metrics.items()))
        return data


COUNTERS = (
    "qubits_peak",
    "gate_count",
    "oracle_queries",
    "shots",
    "state_preparations",
    "copies_consumed",
    "classical_ops",
)


@dataclass(frozen=True)
class ScalingModel:
    """One row of the algorithm complexity table."""

    algorithm: str
    quantum_time: str
    classical_time: str
    size_parameter: str
    counter: str
    expected_exponent: float | None
    comment: str = ""


# Rows for the algorithms this package implements. expected_exponent is
# the exponent of the ledgered counter in the size parameter, where the
# table gives one.
SCALING_TABLE: dict[str, ScalingModel] = {
    "classify": ScalingModel(
        algorithm="nearest centroid",
        quantum_time="O(eps^-1 log nm)",
        classical_time="O(nm)",
        size_parameter="eps",
        counter="shots",
        expected_exponent=None,
        comment="shots per class scale as eps^-2 with the sampled estimator",
    ),
    "binary-classify": ScalingModel(
        algorithm="two-class nearest centroid",
        quantum_time="O(eps^-1 log nm)",
        classical_time="O(nm)",
        size_parameter="eps",
        counter="shots",
        expected_exponent=None,
    ),
    "knn": ScalingModel(
        algorithm="k-nearest neighbours",
        quantum_time="O~(sqrt(n) log n) (first order)",
        classical_time="O(nm)",
        size_parameter="n",
        counter="oracle_queries",
        expected_exponent=0.5,
        comment="distance-estimation shots are reported separately",
    ),
    "mst-cluster": ScalingModel(
        algorithm="minimum spanning tree",
        quantum_time="Theta(N^(3/2))",
        classical_time="Omega(N^2)",
        size_parameter="n",
        counter="oracle_queries",
        expected_exponent=1.5,
    ),
    "hhl-solve": ScalingModel(
        algorithm="linear systems (HHL)",
        quantum_time="O(poly log N, poly log 1/eps) state output; O(poly log N, poly 1/eps) classical output",
        classical_time="O(poly(N) log 1/eps)",
        size_parameter="n",
        counter="gate_count",
        expected_exponent=None,
        comment="classical-output mode is not implemented",
    ),
    "qpca": ScalingModel(
        algorithm="quantum principal component analysis",
        quantum_time="O(log d)",
        classical_time="O(d)",
        size_parameter="copies",
        counter="copies_consumed",
        expected_exponent=None,
        comment="exponentiation error scales as t^2/n in the number of copies",
    ),
    "train-perceptron": ScalingModel(
        algorithm="perceptron (weights in states)",
        quantum_time="O(W + log(N) log(1/eps))",
        classical_time="O(W + N log(1/eps))",
        size_parameter="n",
        counter="gate_count",
        expected_exponent=None,
    ),
    "train-bm": ScalingModel(
        algorithm="quantum deep learning (Gibbs sampling)",
        quantum_time="O~(N E sqrt(kappa))",
        classical_time="O~(N L E k), O(N E kappa)",
        size_parameter="n",
        counter="classical_ops",
        expected_exponent=None,
        comment="kappa is a free scaling factor taken from settings",
    ),
}
