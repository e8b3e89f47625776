"""
Grover search, minimum finding, k-nearest neighbours and MST clustering.

Grover iterations are simulated on the amplitude vector of a log2(N)-qubit
register: the oracle flips the sign of marked entries and the diffusion
step reflects about the mean. Minimum finding follows Durr and Hoyer:
repeatedly search for an entry below the current threshold, with the
Boyer-Brassard-Hoyer-Tapp schedule for the unknown number of solutions.

Oracle queries are counted per evaluation of the table: one per Grover
iteration and one per classical check of a measured index.
"""

import math
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import humanize
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from qmldesk.distance import LabeledDataset, class_sort_key, estimate_distance
from qmldesk.errors import BudgetExhausted, ConfigError, NoMarkedItems
from qmldesk.ledger import ResourceLedger
from qmldesk.settings import Settings, resolve
from qmldesk.sim import QuantumState, RandomSource, check_qubit_cap, num_qubits_for

# BBHT growth factor for the iteration range
BBHT_GROWTH = 6 / 5

# A threshold search with no hit after this many sqrt(N) queries concludes
# that nothing lies below the threshold
ROUND_LIMIT = 9.0

# Verified min-finding gives up retrying after this many attempts
MAX_VERIFY_ATTEMPTS = 20


class OracleTable:
    """
    Values readable only through a counted oracle.

    The table is padded to a power of two with +inf sentinels, which are
    never below any threshold.
    """

    def __init__(self, values: Sequence[float]):
        vals = np.asarray(values, dtype=float).reshape(-1)
        if vals.size == 0:
            raise ValueError("Oracle table needs at least one value")
        self.length = int(vals.size)
        self.size = 2 ** num_qubits_for(self.length)
        self.values = np.full(self.size, np.inf)
        self.values[: self.length] = vals
        self.query_counter = 0

    @property
    def num_qubits(self) -> int:
        return num_qubits_for(self.size)

    def charge(self, count: int, ledger: ResourceLedger | None = None) -> None:
        """Count ``count`` oracle evaluations."""
        self.query_counter += count
        if ledger is not None:
            ledger.charge_queries(count)

    def lookup(self, index: int, ledger: ResourceLedger | None = None) -> float:
        """Read one value through the oracle."""
        self.charge(1, ledger)
        return float(self.values[index])

    def exclude(self, index: int) -> None:
        """Hide an entry from later searches."""
        self.values[index] = np.inf


# -------------------------------------------------------------------------
# Grover search
# -------------------------------------------------------------------------


def grover_state(marked: Sequence[bool], iterations: int) -> QuantumState:
    """Register state after ``iterations`` Grover iterations from the uniform superposition."""
    mask = np.asarray(marked, dtype=bool).reshape(-1)
    size = 2 ** num_qubits_for(mask.size)
    padded = np.zeros(size, dtype=bool)
    padded[: mask.size] = mask
    amps = np.full(size, 1 / math.sqrt(size))
    for _ in range(iterations):
        amps = np.where(padded, -amps, amps)
        amps = 2 * amps.mean() - amps
    return QuantumState(num_qubits_for(size), amps, 1e-10 * (iterations + 1))


def grover_success_probability(size: int, num_marked: int, iterations: int) -> float:
    """sin^2((2j+1) theta) with theta = arcsin(sqrt(M/N))."""
    theta = math.asin(math.sqrt(num_marked / size))
    return math.sin((2 * iterations + 1) * theta) ** 2


def optimal_iterations(size: int, num_marked: int) -> int:
    """floor(pi/4 sqrt(N/M))."""
    return int(math.floor(math.pi / 4 * math.sqrt(size / num_marked)))


def _search_once(mask: np.ndarray, iterations: int, rng: RandomSource, ledger: ResourceLedger) -> int:
    state = grover_state(mask, iterations)
    ledger.charge_gates(2 * iterations)
    ledger.charge_shots(1)
    ledger.observe_qubits(state.num_qubits)
    probs = state.probabilities()
    return int(rng.generator.choice(probs.size, p=probs / probs.sum()))


def grover_search(
    marked: Sequence[bool],
    rng: RandomSource,
    iterations: int | Literal["auto"] = "auto",
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> int:
    """
    Run Grover's algorithm and measure the register once.

    Args:
        marked: Oracle marking, one flag per item
        rng: Random stream for the measurement
        iterations: Grover iterations, or "auto" for floor(pi/4 sqrt(N/M))
        ledger: Resource ledger; oracle_queries grows by the iteration count
        settings: Qubit cap

    Returns:
        The measured index

    Raises:
        NoMarkedItems: In auto mode when nothing is marked
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    mask = np.asarray(marked, dtype=bool).reshape(-1)
    check_qubit_cap(num_qubits_for(mask.size), settings)
    if iterations == "auto":
        num_marked = int(np.count_nonzero(mask))
        if num_marked == 0:
            raise NoMarkedItems("auto iteration count needs at least one marked item")
        iterations = optimal_iterations(2 ** num_qubits_for(mask.size), num_marked)
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    ledger.charge_queries(iterations)
    return _search_once(mask, iterations, rng, ledger)


# -------------------------------------------------------------------------
# Minimum finding
# -------------------------------------------------------------------------


@dataclass(frozen=True)
class MinimumResult:
    """Outcome of one minimum (or maximum) search."""

    index: int
    value: float
    queries: int
    exhausted: bool
    degenerate: bool
    verified: bool | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "value": self.value,
            "queries": self.queries,
            "exhausted": self.exhausted,
            "degenerate": self.degenerate,
            "verified": self.verified,
        }


def _find_extreme(
    table: OracleTable,
    sign: float,
    rng: RandomSource,
    ledger: ResourceLedger,
    settings: Settings,
    strict: bool,
) -> MinimumResult:
    check_qubit_cap(table.num_qubits, settings)
    real = np.zeros(table.size, dtype=bool)
    real[: table.length] = np.isfinite(table.values[: table.length])
    if not real.any():
        raise NoMarkedItems("every table entry is excluded")
    keys = np.where(real, sign * table.values, np.inf)

    start_queries = table.query_counter
    budget = math.ceil(settings.durr_hoyer_budget * math.sqrt(table.size))
    round_limit = ROUND_LIMIT * math.sqrt(table.size)

    candidates = np.flatnonzero(real)
    best = int(candidates[rng.generator.integers(candidates.size)])
    best_key = sign * table.lookup(best, ledger)
    exhausted = False

    while True:
        mask = keys < best_key
        m = 1.0
        spent = 0
        improved = False
        while spent < round_limit:
            if table.query_counter - start_queries >= budget:
                exhausted = True
                break
            j = int(rng.generator.integers(math.ceil(m)))
            table.charge(j, ledger)
            index = _search_once(mask, j, rng, ledger)
            value = sign * table.lookup(index, ledger)
            spent += j + 1
            if value < best_key:
                best, best_key = index, value
                improved = True
                break
            m = min(BBHT_GROWTH * m, math.sqrt(table.size))
        if exhausted or not improved:
            break

    if exhausted and strict:
        raise BudgetExhausted(f"no minimum claimed within {budget} queries")
    value = sign * best_key
    degenerate = int(np.count_nonzero(table.values[: table.length] == value)) > 1
    return MinimumResult(
        index=best,
        value=value,
        queries=table.query_counter - start_queries,
        exhausted=exhausted,
        degenerate=degenerate,
    )


def durr_hoyer_minimum(
    table: OracleTable,
    rng: RandomSource,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    strict: bool = False,
) -> MinimumResult:
    """
    Find an index of the smallest table value.

    A threshold search that finds nothing within the round limit claims the
    current threshold as the minimum. When the query budget
    (durr_hoyer_budget * sqrt(N)) runs out, the best index so far is returned
    with ``exhausted`` set, or BudgetExhausted is raised if ``strict``.
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    return _find_extreme(table, 1.0, rng, ledger, settings, strict)


def durr_hoyer_maximum(
    table: OracleTable,
    rng: RandomSource,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    strict: bool = False,
) -> MinimumResult:
    """Find an index of the largest finite table value."""
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    return _find_extreme(table, -1.0, rng, ledger, settings, strict)


def verified_minimum(
    table: OracleTable,
    rng: RandomSource,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> MinimumResult:
    """
    Minimum finding with a final linear check, retried until the check passes.

    The check reads the table classically and is charged to classical_ops.
    """
    ledger = ledger if ledger is not None else ResourceLedger()
    true_min = float(np.min(table.values[: table.length]))
    result = None
    queries = 0
    for _ in range(MAX_VERIFY_ATTEMPTS):
        result = durr_hoyer_minimum(table, rng, ledger, settings)
        queries += result.queries
        ledger.charge_classical(table.length)
        if result.value <= true_min:
            return MinimumResult(result.index, result.value, queries, result.exhausted, result.degenerate, True)
    return MinimumResult(result.index, result.value, queries, result.exhausted, result.degenerate, False)


# -------------------------------------------------------------------------
# k-nearest neighbours
# -------------------------------------------------------------------------


@dataclass(frozen=True)
class KNNConfig:
    """Neighbour count, distance backend and shots per distance estimate."""

    k: int = 1
    shots: int = 0
    backend: Literal["exact", "sampled"] = "exact"

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ConfigError(f"k must be a positive odd number, got {self.k}")
        if self.backend not in ("exact", "sampled"):
            raise ConfigError(f"Unknown distance backend {self.backend!r}")
        if self.backend == "sampled" and self.shots < 1:
            raise ConfigError("The sampled backend needs shots >= 1")


@dataclass
class KNNResult:
    """Vote, neighbours found and min-finding bookkeeping."""

    label: str
    neighbors: list[int]
    distances: list[float]
    votes: dict[str, int]
    queries: int
    exhausted: bool = False

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "neighbors": list(self.neighbors),
            "distances": list(self.distances),
            "votes": dict(self.votes),
            "queries": self.queries,
            "exhausted": self.exhausted,
        }


def majority_vote(labels: Sequence[str]) -> tuple[str, dict[str, int]]:
    """Unweighted vote; ties go to the lowest class id."""
    votes = Counter(labels)
    top = max(votes.values())
    winner = min((c for c, n in votes.items() if n == top), key=class_sort_key)
    return winner, dict(sorted(votes.items(), key=lambda item: class_sort_key(item[0])))


def knn_search(
    query,
    dataset: LabeledDataset,
    cfg: KNNConfig,
    rng: RandomSource,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    verify: bool = False,
    log_callback: Callable[[str, str], None] | None = None,
) -> KNNResult:
    """
    Find the k nearest training points and vote.

    Distances come from the distance estimator and fill an oracle table; the
    k neighbours are found by k successive minimum searches, each found entry
    being excluded (set to +inf) before the next search.
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    if cfg.k > len(dataset):
        raise ConfigError(f"k = {cfg.k} exceeds the {len(dataset)} training points")

    shots = cfg.shots if cfg.backend == "sampled" else 0
    distance_rng, search_rng = rng.spawn(2)
    streams = distance_rng.spawn(len(dataset))
    distances = [
        estimate_distance(query, [x], shots, stream, ledger, settings).distance
        for x, stream in zip(dataset.features, streams, strict=True)
    ]
    table = OracleTable(distances)

    neighbors = []
    found = []
    exhausted = False
    for _ in range(cfg.k):
        if verify:
            result = verified_minimum(table, search_rng, ledger, settings)
        else:
            result = durr_hoyer_minimum(table, search_rng, ledger, settings)
        exhausted = exhausted or result.exhausted
        neighbors.append(result.index)
        found.append(result.value)
        table.exclude(result.index)

    label, votes = majority_vote([dataset.labels[i] for i in neighbors])
    if log_callback is not None:
        log_callback(f"k-NN vote {votes} after {humanize.intcomma(table.query_counter)} oracle queries", "DEBUG")
    return KNNResult(label, neighbors, found, votes, table.query_counter, exhausted)


def knn_classify(
    query,
    dataset: LabeledDataset,
    cfg: KNNConfig,
    rng: RandomSource,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    verify: bool = False,
) -> str:
    """Majority label of the k nearest training points."""
    return knn_search(query, dataset, cfg, rng, ledger, settings, verify).label


def classical_knn(query, dataset: LabeledDataset, k: int) -> str:
    """Exhaustive k-NN with the same vote rule."""
    query = np.asarray(query, dtype=float).reshape(-1)
    distances = np.linalg.norm(dataset.features - query, axis=1)
    nearest = np.argsort(distances, kind="stable")[:k]
    return majority_vote([dataset.labels[i] for i in nearest])[0]


# -------------------------------------------------------------------------
# Spanning trees and clustering
# -------------------------------------------------------------------------


@dataclass
class MSTResult:
    """Tree edges (parent, child, weight), cluster per point and query count."""

    edges: list[tuple[int, int, float]]
    assignment: list[int]
    queries: int
    classical_reads: int = 0
    unverified_steps: int = 0
    exhausted: bool = False

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    def to_dict(self) -> dict:
        return {
            "edges": [[i, j, w] for i, j, w in self.edges],
            "assignment": list(self.assignment),
            "queries": self.queries,
            "classical_reads": self.classical_reads,
            "total_weight": self.total_weight,
            "unverified_steps": self.unverified_steps,
            "exhausted": self.exhausted,
        }


def _points(points) -> np.ndarray:
    if isinstance(points, LabeledDataset):
        return np.asarray(points.features)
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("Need at least one point")
    return x


def cut_clusters(num_points: int, edges: list[tuple[int, int, float]], k_clusters: int) -> list[int]:
    """
    Remove the k-1 longest tree edges and label connected components.

    Cluster ids are assigned in order of each cluster's lowest point index.
    """
    if k_clusters < 1 or k_clusters > num_points:
        raise ConfigError(f"k must be between 1 and {num_points}, got {k_clusters}")
    ranked = sorted(range(len(edges)), key=lambda e: (-edges[e][2], e))
    dropped = set(ranked[: k_clusters - 1])
    kept = [edges[e] for e in range(len(edges)) if e not in dropped]
    rows = [i for i, _, _ in kept]
    cols = [j for _, j, _ in kept]
    graph = coo_matrix((np.ones(len(kept)), (rows, cols)), shape=(num_points, num_points))
    _, labels = connected_components(graph, directed=False)
    relabel: dict[int, int] = {}
    return [relabel.setdefault(int(c), len(relabel)) for c in labels]


def mst_cluster(
    points,
    k_clusters: int,
    rng: RandomSource,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
    verify: bool = True,
    log_callback: Callable[[str, str], None] | None = None,
) -> MSTResult:
    """
    Cluster points by cutting the longest edges of a minimum spanning tree.

    Prim's algorithm keeps the cheapest known connection of every outside
    point; each next edge is chosen by minimum finding over those
    connections, so the tree costs about sum_k sqrt(N - k) = Theta(N^1.5)
    oracle queries. Connection updates and verification checks are charged
    to classical_ops.
    """
    settings = resolve(settings)
    ledger = ledger if ledger is not None else ResourceLedger()
    log = log_callback or (lambda msg, level: None)
    x = _points(points)
    n = x.shape[0]
    if k_clusters < 1 or k_clusters > n:
        raise ConfigError(f"k must be between 1 and {n}, got {k_clusters}")

    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    key = np.linalg.norm(x - x[0], axis=1)
    parent = np.zeros(n, dtype=int)
    classical_reads = n
    ledger.charge_classical(n)

    edges = []
    queries = 0
    unverified = 0
    exhausted = False
    for _ in range(n - 1):
        outside = np.flatnonzero(~in_tree)
        table = OracleTable(key[outside])
        if verify:
            result = verified_minimum(table, rng, ledger, settings)
            if not result.verified:
                unverified += 1
        else:
            result = durr_hoyer_minimum(table, rng, ledger, settings)
        queries += table.query_counter
        exhausted = exhausted or result.exhausted

        v = int(outside[result.index])
        edges.append((int(parent[v]), v, float(key[v])))
        in_tree[v] = True

        remaining = np.flatnonzero(~in_tree)
        if remaining.size:
            d = np.linalg.norm(x[remaining] - x[v], axis=1)
            closer = d < key[remaining]
            key[remaining[closer]] = d[closer]
            parent[remaining[closer]] = v
            classical_reads += remaining.size
            ledger.charge_classical(remaining.size)

    ledger.record_symbolic("mst_queries", "Theta(N^(3/2)) oracle queries")
    log(f"Spanning tree over {n} points: {humanize.intcomma(queries)} oracle queries, {unverified} unverified step(s)", "INFO")
    return MSTResult(
        edges=edges,
        assignment=cut_clusters(n, edges, k_clusters),
        queries=queries,
        classical_reads=classical_reads,
        unverified_steps=unverified,
        exhausted=exhausted,
    )


def classical_mst(
    points,
    k_clusters: int = 1,
    ledger: ResourceLedger | None = None,
) -> MSTResult:
    """
    Prim's algorithm with a linear scan for every next edge.

    Every scanned connection is one oracle query, about N^2 / 2 in total.
    """
    ledger = ledger if ledger is not None else ResourceLedger()
    x = _points(points)
    n = x.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    key = np.linalg.norm(x - x[0], axis=1)
    parent = np.zeros(n, dtype=int)
    edges = []
    queries = 0
    for _ in range(n - 1):
        outside = np.flatnonzero(~in_tree)
        queries += outside.size
        ledger.charge_queries(outside.size)
        v = int(outside[np.argmin(key[outside])])
        edges.append((int(parent[v]), v, float(key[v])))
        in_tree[v] = True
        remaining = np.flatnonzero(~in_tree)
        if remaining.size:
            d = np.linalg.norm(x[remaining] - x[v], axis=1)
            closer = d < key[remaining]
            key[remaining[closer]] = d[closer]
            parent[remaining[closer]] = v
            ledger.charge_classical(remaining.size)
    return MSTResult(edges=edges, assignment=cut_clusters(n, edges, k_clusters), queries=queries)


@dataclass
class NeighborGraph:
    """Directed k-nearest-neighbour edges (i, j, distance)."""

    edges: list[tuple[int, int, float]] = field(default_factory=list)
    queries: int = 0

    def adjacency(self, num_points: int) -> np.ndarray:
        """Dense symmetric weight matrix, 0 where there is no edge."""
        w = np.zeros((num_points, num_points))
        for i, j, d in self.edges:
            w[i, j] = w[j, i] = d
        return w


def neighbor_graph(
    points,
    k: int,
    rng: RandomSource,
    ledger: ResourceLedger | None = None,
    settings: Settings | None = None,
) -> NeighborGraph:
    """k nearest neighbours of every point, each found by verified minimum finding."""
    ledger = ledger if ledger is not None else ResourceLedger()
    x = _points(points)
    n = x.shape[0]
    if k < 1 or k >= n:
        raise ConfigError(f"k must be between 1 and {n - 1}, got {k}")
    graph = NeighborGraph()
    for i, stream in enumerate(rng.spawn(n)):
        distances = np.linalg.norm(x - x[i], axis=1)
        distances[i] = np.inf
        table = OracleTable(distances)
        for _ in range(k):
            result = verified_minimum(table, stream, ledger, settings)
            graph.edges.append((i, result.index, float(result.value)))
            table.exclude(result.index)
        graph.queries += table.query_counter
    return graph
