"""
Distance estimation and nearest-centroid classification.

A query ``u`` and a class of reference vectors ``v_1..v_n`` are loaded into
two states: psi over a data register and an index register, and phi over
the index register alone. Projecting psi's index register onto phi succeeds
with probability p, and the distance between ``u`` and the norm-weighted
class mean is D = sqrt(2 p Z).
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from qmldesk.errors import DimensionMismatch, ZeroVector
from qmldesk.ledger import ResourceLedger
from qmldesk.settings import Settings, resolve
from qmldesk.sim import QuantumState, RandomSource, num_qubits_for, prepare_amplitude_state

# Distances closer than this (relative) are treated as tied
TIE_TOLERANCE = 1e-9

# Smallest register the two-class experiment works in
BINARY_MIN_DIM = 8


def class_sort_key(label: str) -> tuple:
    """Order class ids numerically when they look like numbers, else lexically."""
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Real feature vectors with class labels and cached norms."""

    features: np.ndarray
    labels: tuple[str, ...]
    norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise ValueError("Dataset needs at least one point with at least one feature")
        labels = tuple(str(label) for label in self.labels)
        if len(labels) != x.shape[0]:
            raise DimensionMismatch(f"{len(labels)} labels for {x.shape[0]} points")
        norms = np.linalg.norm(x, axis=1)
        for row, norm in enumerate(norms):
            if norm == 0:
                raise ZeroVector("feature vector has zero norm", row=row)
        x.setflags(write=False)
        norms.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "norms", norms)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.labels), key=class_sort_key)

    def by_class(self) -> dict[str, np.ndarray]:
        """Feature rows grouped by label, classes in sorted order."""
        labels = np.array(self.labels)
        return {c: self.features[labels == c] for c in self.classes}


@dataclass(frozen=True)
class DistanceEstimate:
    """Outcome of one distance estimation."""

    p_hat: float
    shots: int
    distance: float
    standard_error: float
    z_norm: float
    p_exact: float

    def to_dict(self) -> dict:
        return {
            "p_hat": self.p_hat,
            "shots": self.shots,
            "distance": self.distance,
            "standard_error": self.standard_error,
            "z_norm": self.z_norm,
            "p_exact": self.p_exact,
        }


def _check_inputs(u, class_vectors) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float).reshape(-1)
    refs = np.atleast_2d(np.asarray(class_vectors, dtype=float))
    if refs.shape[0] == 0:
        raise ValueError("A class needs at least one reference vector")
    if refs.shape[1] != u.shape[0]:
        raise DimensionMismatch(f"Query has {u.shape[0]} features, references have {refs.shape[1]}")
    if np.linalg.norm(u) == 0:
        raise ZeroVector("query vector has zero norm")
    for row, norm in enumerate(np.linalg.norm(refs, axis=1)):
        if norm == 0:
            raise ZeroVector("reference vector has zero norm", row=row)
    return u, refs


def build_class_states(
    u,
    class_vectors,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> tuple[QuantumState, QuantumState, float]:
    """
    Build the data/index state psi, the index state phi and Z.

    psi = (|u>|0> + n^-1/2 sum_j |v_j>|j>) / sqrt(2), data qubits first.
    phi = (|u| |0> - n^-1/2 sum_j |v_j| |j>) / sqrt(Z).
    Z = |u|^2 + (1/n) sum_j |v_j|^2.

    Raises:
        ZeroVector: If u or any v_j is zero
        DimensionMismatch: If the vectors differ in length
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    u, refs = _check_inputs(u, class_vectors)
    n, m = refs.shape
    data_dim = 2 ** num_qubits_for(m)
    index_dim = 2 ** num_qubits_for(n + 1)

    u_norm = float(np.linalg.norm(u))
    ref_norms = np.linalg.norm(refs, axis=1)
    z_norm = u_norm**2 + float(np.sum(ref_norms**2)) / n

    psi = np.zeros((data_dim, index_dim))
    psi[:m, 0] = u / u_norm / math.sqrt(2)
    psi[:m, 1 : n + 1] = (refs / ref_norms[:, None]).T / math.sqrt(2 * n)

    phi = np.zeros(index_dim)
    phi[0] = u_norm
    phi[1 : n + 1] = -ref_norms / math.sqrt(n)

    psi_state = prepare_amplitude_state(psi.reshape(-1), ledger, settings)
    phi_state = prepare_amplitude_state(phi, ledger, settings)
    return psi_state, phi_state, z_norm


def projection_probability(psi: QuantumState, phi: QuantumState) -> float:
    """Probability that psi's trailing index register is found in phi."""
    index_dim = phi.dim
    psi_matrix = psi.amplitudes.reshape(-1, index_dim)
    if psi_matrix.shape[0] * index_dim != psi.dim:
        raise DimensionMismatch("phi does not match psi's index register")
    projected = psi_matrix @ np.conj(phi.amplitudes)
    return float(np.vdot(projected, projected).real)


def _estimate(p_exact: float, z_norm: float, successes: int, shots: int) -> DistanceEstimate:
    if shots == 0:
        p_hat = p_exact
        se = 0.0
    else:
        p_hat = successes / shots
        if p_hat > 0:
            se = math.sqrt(2 * z_norm) * math.sqrt(p_hat * (1 - p_hat) / shots) / (2 * math.sqrt(p_hat))
        else:
            # No successes: sqrt(2Z) times the binomial bound max sqrt(p(1-p)/shots)
            se = math.sqrt(2 * z_norm) * 0.5 / math.sqrt(shots)
    return DistanceEstimate(
        p_hat=p_hat,
        shots=shots,
        distance=math.sqrt(2 * p_hat * z_norm),
        standard_error=se,
        z_norm=z_norm,
        p_exact=p_exact,
    )


def estimate_distance(
    u,
    class_vectors,
    shots: int,
    rng: RandomSource | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> DistanceEstimate:
    """
    Estimate the distance from u to a class by projective measurement.

    Args:
        u: Query vector
        class_vectors: Reference vectors of the class, one per row
        shots: Number of projections to sample; 0 returns the exact probability
        rng: Random stream (required when shots > 0)
        ledger: Resource ledger to charge
        settings: Tolerances and qubit cap

    Returns:
        DistanceEstimate with distance = sqrt(2 p_hat Z)
    """
    if shots < 0:
        raise ValueError(f"shots must be >= 0, got {shots}")
    if shots > 0 and rng is None:
        raise ValueError("A random source is required for sampled estimates")
    ledger = ledger if ledger is not None else ResourceLedger()
    psi, phi, z_norm = build_class_states(u, class_vectors, ledger, settings)
    p_exact = min(1.0, projection_probability(psi, phi))

    successes = 0
    if shots > 0:
        successes = int(rng.generator.binomial(shots, p_exact))
        ledger.charge_shots(shots)
    return _estimate(p_exact, z_norm, successes, shots)


# -------------------------------------------------------------------------
# Classifiers
# -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CentroidModel:
    """Reference vectors per class, classes in sorted order."""

    references: dict[str, np.ndarray]

    def __post_init__(self):
        ordered = {
            c: np.atleast_2d(np.asarray(self.references[c], dtype=float))
            for c in sorted(self.references, key=class_sort_key)
        }
        widths = {refs.shape[1] for refs in ordered.values()}
        if len(widths) > 1:
            raise DimensionMismatch(f"Classes have differing feature counts: {sorted(widths)}")
        object.__setattr__(self, "references", ordered)

    @classmethod
    def from_dataset(cls, dataset: LabeledDataset, centroids_only: bool = False) -> "CentroidModel":
        """
        Build a model from a labeled dataset.

        Args:
            dataset: Training data
            centroids_only: Replace each class by its mean vector
        """
        groups = dataset.by_class()
        if centroids_only:
            groups = {c: rows.mean(axis=0, keepdims=True) for c, rows in groups.items()}
        return cls(groups)

    @property
    def class_ids(self) -> list[str]:
        return list(self.references)

    def class_norms(self, label: str) -> np.ndarray:
        return np.linalg.norm(self.references[label], axis=1)


def pick_closest(distances: dict[str, float]) -> str:
    best = min(distances.values())
    tol = TIE_TOLERANCE * max(1.0, best)
    # Dict order is sorted class order, so the first hit is the lowest id
    return next(c for c, d in distances.items() if d <= best + tol)


def nearest_centroid_estimates(
    u,
    model: CentroidModel,
    shots: int,
    rng: RandomSource | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> dict[str, DistanceEstimate]:
    """Distance estimates to every class, each with its own split random stream."""
    if len(model.class_ids) < 2:
        raise ValueError("Classification needs at least two classes")
    ledger = ledger if ledger is not None else ResourceLedger()
    streams = rng.spawn(len(model.class_ids)) if rng is not None else [None] * len(model.class_ids)
    return {
        label: estimate_distance(u, model.references[label], shots, stream, ledger, settings)
        for label, stream in zip(model.class_ids, streams, strict=True)
    }


def nearest_centroid_classify(
    u,
    model: CentroidModel,
    shots: int,
    rng: RandomSource | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> str:
    """
    Assign u to the class with the smallest estimated distance.

    Ties go to the lowest class id.
    """
    estimates = nearest_centroid_estimates(u, model, shots, rng, ledger, settings)
    return pick_closest({c: e.distance for c, e in estimates.items()})


def classical_nearest_centroid(u, model: CentroidModel) -> str:
    """Euclidean nearest-centroid label to the plain class means."""
    u = np.asarray(u, dtype=float).reshape(-1)
    distances = {}
    for label, refs in model.references.items():
        distances[label] = float(np.linalg.norm(u - refs.mean(axis=0)))
    return pick_closest(distances)


@dataclass(frozen=True)
class BinaryClassification:
    """Two-class decision with both distance estimates."""

    label: str
    estimate_a: DistanceEstimate
    estimate_b: DistanceEstimate
    pooled_standard_error: float
    rounds: int = 1

    @property
    def gap(self) -> float:
        return self.estimate_a.distance - self.estimate_b.distance

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "distance_a": self.estimate_a.distance,
            "distance_b": self.estimate_b.distance,
            "gap": self.gap,
            "standard_error_a": self.estimate_a.standard_error,
            "standard_error_b": self.estimate_b.standard_error,
            "pooled_standard_error": self.pooled_standard_error,
            "shots_a": self.estimate_a.shots,
            "shots_b": self.estimate_b.shots,
            "rounds": self.rounds,
        }


def _pad(vec, dim: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=float).reshape(-1)
    out = np.zeros(dim)
    out[: vec.size] = vec
    return out


def binary_classify(
    u,
    v_a,
    v_b,
    shots: int,
    rng: RandomSource | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> BinaryClassification:
    """
    Decide whether u is closer to reference v_a ("A") or v_b ("B").

    Vectors are zero-padded to at least 8 dimensions. With adaptive stopping
    enabled in settings, shots are drawn in rounds of ``shots`` per reference
    until |D_A - D_B| exceeds z times the pooled standard error or the round
    limit is hit.
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    u, v_a, v_b = (np.asarray(v, dtype=float).reshape(-1) for v in (u, v_a, v_b))
    if not (u.size == v_a.size == v_b.size):
        raise DimensionMismatch(f"Vector lengths differ: {u.size}, {v_a.size}, {v_b.size}")
    dim = max(BINARY_MIN_DIM, u.size)
    u, v_a, v_b = _pad(u, dim), _pad(v_a, dim), _pad(v_b, dim)

    if shots > 0 and rng is None:
        raise ValueError("A random source is required for sampled estimates")
    stream_a, stream_b = rng.spawn(2) if rng is not None else (None, None)

    exact = {}
    for name, ref in (("A", v_a), ("B", v_b)):
        psi, phi, z_norm = build_class_states(u, [ref], ledger, settings)
        exact[name] = (min(1.0, projection_probability(psi, phi)), z_norm)

    def draw(name, stream, count):
        p, _ = exact[name]
        ledger.charge_shots(count)
        return int(stream.generator.binomial(count, p))

    rounds = 1
    if shots == 0:
        est_a = _estimate(*exact["A"], 0, 0)
        est_b = _estimate(*exact["B"], 0, 0)
    else:
        hits_a, hits_b, total = draw("A", stream_a, shots), draw("B", stream_b, shots), shots
        est_a = _estimate(*exact["A"], hits_a, total)
        est_b = _estimate(*exact["B"], hits_b, total)
        if settings.adaptive_stopping:
            while rounds < settings.adaptive_max_rounds:
                pooled = math.hypot(est_a.standard_error, est_b.standard_error)
                if abs(est_a.distance - est_b.distance) > settings.adaptive_z * pooled:
                    break
                hits_a += draw("A", stream_a, shots)
                hits_b += draw("B", stream_b, shots)
                total += shots
                rounds += 1
                est_a = _estimate(*exact["A"], hits_a, total)
                est_b = _estimate(*exact["B"], hits_b, total)

    label = pick_closest({"A": est_a.distance, "B": est_b.distance})
    return BinaryClassification(
        label=label,
        estimate_a=est_a,
        estimate_b=est_b,
        pooled_standard_error=math.hypot(est_a.standard_error, est_b.standard_error),
        rounds=rounds,
    )


def classify_points(
    points: Sequence,
    model: CentroidModel,
    shots: int,
    rng: RandomSource | None = None,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> list[str]:
    """Classify several queries, one split stream per query."""
    streams = rng.spawn(len(points)) if rng is not None else [None] * len(points)
    return [
        nearest_centroid_classify(p, model, shots, s, ledger, settings)
        for p, s in zip(points, streams, strict=True)
    ]
