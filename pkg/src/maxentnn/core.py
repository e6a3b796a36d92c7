"""Self-tuning maximum-entropy neighbor prediction.

Every query is handled independently, with no training phase. The predictor
screens the dataset with a Gaussian similarity filter, sweeps the similarity
bandwidth and keeps the value that maximizes the mean Gibbs entropy of the
retained neighbors, then iterates a nonnegative interpolation solve so the
neighbors reconstruct the query as a convex combination. Regression labels
are blended with those weights; classification takes the neighborhood mode.

Because nothing is fitted ahead of time, rows may be appended to the dataset
between queries and are picked up immediately.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateNeighborhoodError,
    InvalidInputError,
    MaxentError,
    NumericalFailureError,
    ParameterError,
)

__all__ = [
    "MaxEntParams",
    "Dataset",
    "ConvexSubset",
    "WeightSolution",
    "Prediction",
    "PredictionFailure",
    "rbf_value",
    "filter_convex",
    "mean_entropy",
    "optimize_bandwidth",
    "solve_weights",
    "interpolation_error",
    "predict_regression",
    "predict_classification",
    "predict_point",
    "predict_batch",
]


@dataclass(frozen=True)
class MaxEntParams:
    """Thresholds and iteration caps steering a single prediction.

    The six tolerances and caps control the two nested loops of the
    predictor; ``q1_initial_error`` seeds the stall detector and
    ``q2_hfilter_increment`` is the fraction of the initial filter radius
    added to it after each unconverged outer round. ``sweep_points`` sizes
    the bandwidth search grid and ``max_minconvex_rounds`` bounds the outer
    loop so the predictor always terminates.
    """

    threshold_filter: float = 0.01
    threshold_entropy: float = 0.01
    convergence_tolerance: float = 0.01
    it_convergence: int = 20
    local_min_tolerance: float = 1e-9
    it_local_min: int = 1000
    q1_initial_error: float = 1e6
    q2_hfilter_increment: float = 0.25
    sweep_points: int = 64
    max_minconvex_rounds: int = 20

    def __post_init__(self):
        positive = (
            "threshold_filter",
            "threshold_entropy",
            "convergence_tolerance",
            "local_min_tolerance",
            "q1_initial_error",
            "q2_hfilter_increment",
        )
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be strictly positive and finite, got {v!r}")
        for name in ("threshold_filter", "threshold_entropy"):
            if getattr(self, name) >= 1.0:
                raise ParameterError(f"{name} compares similarities in (0, 1] and must be < 1")
        counts = ("it_convergence", "it_local_min", "sweep_points", "max_minconvex_rounds")
        for name in counts:
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ParameterError(f"{name} must be an integer >= 1, got {v!r}")
        if self.sweep_points < 2:
            raise ParameterError("sweep_points must be >= 2 to bracket a bandwidth optimum")


def _as_point(values, n_features: int | None = None, name: str = "query") -> np.ndarray:
    q = np.asarray(values, dtype=float)
    if q.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-D coordinate vector, got shape {q.shape}")
    if n_features is not None and q.size != n_features:
        raise InvalidInputError(f"{name} has {q.size} coordinates, dataset has {n_features} features")
    if not np.all(np.isfinite(q)):
        raise InvalidInputError(f"{name} contains non-finite coordinates")
    return q


@dataclass(frozen=True)
class Dataset:
    """Immutable training set: one feature row per point, plus labels.

    ``task`` is ``"regression"`` (labels stored as an ``(m, n_y)`` float
    array) or ``"classification"`` (labels stored as an ``(m,)`` integer
    array). Arrays are copied and marked read-only, so a Dataset can be
    shared freely across concurrent readers.

    Features should be pre-normalized so the bulk of coordinates lies in
    [-1, 1]; the default thresholds assume that scale.
    """

    points: np.ndarray
    labels: np.ndarray
    task: str = "regression"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidInputError(f"points must be a nonempty 2-D array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("points contain non-finite coordinates")

        if self.task == "regression":
            lab = np.array(self.labels, dtype=float)
            if lab.ndim == 1:
                lab = lab.reshape(-1, 1)
            if lab.ndim != 2 or lab.shape[1] < 1:
                raise InvalidInputError(f"regression labels must be (m, n_y), got shape {lab.shape}")
            if not np.all(np.isfinite(lab)):
                raise InvalidInputError("labels contain non-finite values")
        elif self.task == "classification":
            raw = np.asarray(self.labels)
            if raw.ndim != 1:
                raise InvalidInputError(f"classification labels must be 1-D, got shape {raw.shape}")
            if raw.dtype.kind == "f":
                if not np.all(np.isfinite(raw)) or not np.all(raw == np.round(raw)):
                    raise InvalidInputError("class ids must be integral")
            lab = raw.astype(np.int64)
        else:
            raise InvalidInputError(f"unknown task {self.task!r}")

        if lab.shape[0] != pts.shape[0]:
            raise InvalidInputError(f"{pts.shape[0]} points but {lab.shape[0]} label rows")

        pts.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class ConvexSubset:
    """Rows retained by a similarity filter around one query.

    ``indices`` are dataset row numbers (ascending), ``rbf_values`` the
    Gaussian similarities that admitted them, ``bandwidth`` the radius used.
    """

    indices: np.ndarray
    rbf_values: np.ndarray
    bandwidth: float

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class WeightSolution:
    """Outcome of the nonnegative interpolation solve.

    ``residual_error`` is the (relative) distance between the query and its
    reconstruction from the neighbors, ``weight_sum_gap`` is ``|1 - sum(u)|``.
    ``converged`` is True when ``residual_error + weight_sum_gap`` fell below
    the convergence tolerance after the minimum iteration count.
    """

    weights: np.ndarray
    residual_error: float
    weight_sum_gap: float
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class Prediction:
    """A label estimate plus the diagnostics of how it was reached.

    ``exit_reason`` is one of ``"converged"``, ``"local_minimum"`` or
    ``"round_cap"``. ``bandwidth`` is the entropy-optimal radius (0.0 when
    the query duplicated a training point and no sweep ran).
    ``neighbor_indices`` are the dataset rows the value was built from;
    ``neighbor_weights`` are the blend weights actually applied (regression)
    or the similarities of the voters (classification, where the weights
    play no role in the value).
    """

    value: object
    exit_reason: str
    bandwidth: float
    n_neighbors: int
    iterations: int
    residual_error: float
    weight_sum_gap: float
    rounds: int
    neighbor_indices: np.ndarray
    neighbor_weights: np.ndarray

    def diagnostics(self) -> dict:
        """The documented diagnostics as a JSON-ready dict."""
        return {
            "exit_reason": self.exit_reason,
            "h_star": self.bandwidth,
            "n_neighbors": self.n_neighbors,
            "iterations": self.iterations,
            "residual_error": self.residual_error,
            "weight_sum_gap": self.weight_sum_gap,
            "rounds": self.rounds,
        }


@dataclass(frozen=True)
class PredictionFailure:
    """Per-query failure marker used by batch prediction."""

    error: str
    message: str


def rbf_value(query, point, h: float) -> float:
    """Gaussian similarity exp(-||point - query||^2 / h^2), in (0, 1]."""
    if not (isinstance(h, (int, float)) and math.isfinite(h) and h > 0):
        raise ParameterError(f"bandwidth must be strictly positive and finite, got {h!r}")
    q = _as_point(query, name="query")
    p = _as_point(point, name="point")
    if p.size != q.size:
        raise InvalidInputError(f"dimension mismatch: point has {p.size}, query has {q.size}")
    d2 = float(np.sum((p - q) ** 2))
    hsq = h * h
    if hsq == 0.0:
        # h underflowed: the h -> 0 limit keeps only exact coincidences
        return 1.0 if d2 == 0.0 else 0.0
    # the ratio may overflow to inf for a subnormal hsq; exp maps that to 0
    return float(np.exp(-(d2 / hsq)))


def _similarities(points: np.ndarray, query: np.ndarray, h: float) -> np.ndarray:
    d2 = np.sum((points - query) ** 2, axis=1)
    hsq = h * h
    if hsq == 0.0:
        # h underflowed: the h -> 0 limit keeps only exact coincidences
        return (d2 == 0.0).astype(float)
    # a subnormal hsq can overflow the ratio to inf; exp maps that to the
    # correct limit 0
    with np.errstate(over="ignore"):
        return np.exp(-d2 / hsq)


def filter_convex(dataset: Dataset, query, h: float, threshold: float) -> ConvexSubset:
    """Keep exactly the rows whose similarity to the query exceeds ``threshold``.

    The comparison is strict, so a row at distance d survives iff
    d < h * sqrt(-ln threshold). An empty result is a legal outcome; the
    caller decides whether to enlarge ``h``.
    """
    if not (isinstance(h, (int, float)) and math.isfinite(h) and h > 0):
        raise ParameterError(f"bandwidth must be strictly positive and finite, got {h!r}")
    if not (0.0 < threshold < 1.0):
        raise ParameterError(f"threshold must lie in (0, 1), got {threshold!r}")
    q = _as_point(query, dataset.n_features)
    vals = _similarities(dataset.points, q, h)
    keep = vals > threshold
    return ConvexSubset(np.flatnonzero(keep), vals[keep], float(h))


def mean_entropy(subset: ConvexSubset) -> float:
    """Mean Gibbs entropy -mean(p * ln p) of the subset's similarities."""
    p = np.asarray(subset.rbf_values, dtype=float)
    if p.size == 0:
        raise DegenerateNeighborhoodError("cannot take the mean entropy of an empty subset")
    if np.any(p <= 0.0) or np.any(p > 1.0):
        raise InvalidInputError("similarities must lie in (0, 1]")
    return float(np.mean(-p * np.log(p)))


def optimize_bandwidth(
    dataset: Dataset,
    query,
    prefilter: ConvexSubset,
    params: MaxEntParams,
) -> tuple[float, ConvexSubset]:
    """Sweep candidate bandwidths and keep the mean-entropy maximizer.

    Candidates are ``params.sweep_points`` values spaced logarithmically
    between 0.25x the smallest nonzero query distance and 4x the largest
    query distance within ``prefilter``. Each candidate re-filters the
    prefiltered rows against ``params.threshold_entropy``; empty candidates
    are skipped. Returns the winning bandwidth and the subset re-filtered
    at it.
    """
    if prefilter.size == 0:
        raise DegenerateNeighborhoodError("prefilter is empty; enlarge the filter radius")
    q = _as_point(query, dataset.n_features)
    pts = dataset.points[prefilter.indices]
    d2 = np.sum((pts - q) ** 2, axis=1)

    d2max = float(d2.max())
    if d2max == 0.0:
        # Every member coincides with the query; any radius keeps them all.
        ones = np.ones_like(d2)
        return 1.0, ConvexSubset(prefilter.indices.copy(), ones, 1.0)
    d2min = float(d2[d2 > 0].min())

    grid = np.geomspace(0.25 * math.sqrt(d2min), 4.0 * math.sqrt(d2max), params.sweep_points)
    # squared grid values can underflow for subnormal distances; the
    # resulting infinite ratios give similarity 0 and are filtered out
    with np.errstate(divide="ignore", over="ignore"):
        ratios = d2[None, :] / (grid * grid)[:, None]
    p = np.exp(-ratios)
    admitted = p > params.threshold_entropy
    counts = admitted.sum(axis=1)
    # -p ln p == p * d^2/h^2 for a Gaussian similarity; this form never
    # evaluates log near 0 for members that underflowed
    contrib = np.zeros_like(p)
    np.multiply(p, ratios, out=contrib, where=admitted)
    entropy = np.where(counts > 0, contrib.sum(axis=1) / np.maximum(counts, 1), -np.inf)

    best = int(np.argmax(entropy))
    if counts[best] == 0:
        raise DegenerateNeighborhoodError("every candidate bandwidth filtered out all neighbors")
    keep = admitted[best]
    subset = ConvexSubset(prefilter.indices[keep], p[best][keep], float(grid[best]))
    return float(grid[best]), subset


def interpolation_error(query, weights, subset_points) -> float:
    """Relative reconstruction error ||X* - sum(u_i X_i)|| / ||X*||.

    Falls back to the absolute error when the query is the zero vector,
    where the relative form is undefined.
    """
    q = _as_point(query, name="query")
    u = np.asarray(weights, dtype=float)
    pts = np.asarray(subset_points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if u.ndim != 1 or u.size != pts.shape[0]:
        raise InvalidInputError("weights must align with subset rows")
    if np.any(u < 0):
        raise InvalidInputError("weights must be nonnegative")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(pts))):
        raise InvalidInputError("non-finite weights or points")
    xhat = u @ pts
    diff = float(np.linalg.norm(q - xhat))
    qn = float(np.linalg.norm(q))
    return diff / qn if qn > 0.0 else diff


def _spectral_bound(kmat: np.ndarray, sweeps: int = 16) -> float:
    """Upper estimate of ||K||_2^2 by power iteration with a safety margin."""
    v = np.ones(kmat.shape[1]) / math.sqrt(kmat.shape[1])
    lam = float(np.sum(kmat * kmat))  # Frobenius fallback
    for _ in range(sweeps):
        w = kmat.T @ (kmat @ v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            break
        lam = norm / float(np.linalg.norm(v))
        v = w / norm
    return 1.05 * lam


def solve_weights(subset_points, query, initial_weights, params: MaxEntParams) -> WeightSolution:
    """Iterate nonnegative weights toward solving [X^T | 1] u = [X* | 1].

    One iteration is an accelerated projected gradient step on
    0.5 * ||K u - b||^2: a gradient step of size 1/L (L estimated by power
    iteration), clamping negatives to zero, plus a momentum extrapolation
    that is dropped whenever the objective rises. Momentum matters: the
    augmented system is ill-conditioned when the retained neighbors cluster
    tightly around the query, and an unaccelerated step cannot reach the
    tolerance within the iteration budget there.

    The loop exits as soon as ``residual_error + weight_sum_gap`` drops
    below ``params.convergence_tolerance`` after more than
    ``params.it_convergence`` iterations, and otherwise hands back an
    unconverged solution after ``params.it_local_min + 1`` iterations.

    ``initial_weights`` are expected to be the similarities at the selected
    bandwidth. A query coinciding exactly with a subset point short-circuits
    to a unit weight on that point.
    """
    pts = np.asarray(subset_points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    k = pts.shape[0]
    if k == 0:
        raise DegenerateNeighborhoodError("cannot solve weights over an empty subset")
    q = _as_point(query, pts.shape[1])
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("subset points contain non-finite coordinates")
    u0 = np.asarray(initial_weights, dtype=float)
    if u0.shape != (k,):
        raise InvalidInputError(f"initial_weights must have shape ({k},), got {u0.shape}")
    if not np.all(np.isfinite(u0)):
        raise InvalidInputError("initial weights contain non-finite values")

    d2 = np.sum((pts - q) ** 2, axis=1)
    exact = np.flatnonzero(d2 == 0.0)
    if exact.size:
        w = np.zeros(k)
        w[exact[0]] = 1.0
        return WeightSolution(w, 0.0, 0.0, 0, True)

    kmat = np.vstack([pts.T, np.ones((1, k))])
    b = np.append(q, 1.0)
    step = 1.0 / _spectral_bound(kmat)
    kt = kmat.T
    q_norm = float(np.linalg.norm(q))

    u = np.maximum(u0, 0.0)
    r = kmat @ u - b
    objective = float(r @ r)
    z = u
    rz = r
    momentum = 1.0
    residual = math.inf
    gap = math.inf
    converged = False
    iterations = 0
    max_iterations = params.it_local_min + 1
    for iterations in range(1, max_iterations + 1):
        candidate = np.maximum(z - step * (kt @ rz), 0.0)
        r_new = kmat @ candidate - b
        obj_new = float(r_new @ r_new)
        if obj_new > objective:
            # restart from the last accepted point without momentum
            momentum = 1.0
            candidate = np.maximum(u - step * (kt @ r), 0.0)
            r_new = kmat @ candidate - b
            obj_new = float(r_new @ r_new)
        momentum_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum * momentum))
        beta = (momentum - 1.0) / momentum_next
        z = candidate + beta * (candidate - u)
        rz = kmat @ z - b
        u, r, objective, momentum = candidate, r_new, obj_new, momentum_next

        head = r[:-1]
        diff = math.sqrt(float(head @ head))
        residual = diff / q_norm if q_norm > 0.0 else diff
        gap = abs(float(r[-1]))
        if residual + gap < params.convergence_tolerance and iterations > params.it_convergence:
            converged = True
            break

    if not (math.isfinite(residual) and math.isfinite(gap) and np.all(np.isfinite(u))):
        raise NumericalFailureError("weight iteration produced non-finite values")
    return WeightSolution(u, residual, gap, iterations, converged)


def predict_regression(weights, labels):
    """Blend label rows with the given weights: y_hat = sum(u_i * y_i)."""
    u = np.asarray(weights, dtype=float)
    lab = np.asarray(labels, dtype=float)
    if lab.shape[0] != u.size:
        raise InvalidInputError("weights must align with label rows")
    out = u @ lab
    return float(out) if np.ndim(out) == 0 else out


def predict_classification(subset_labels, distances=None) -> int:
    """Most frequent class among the subset labels.

    Ties are broken by the class of the nearest member when ``distances``
    are given, then by the smallest class id.
    """
    labels = np.asarray(subset_labels)
    if labels.size == 0:
        raise DegenerateNeighborhoodError("cannot classify from an empty subset")
    values, counts = np.unique(labels, return_counts=True)
    tied = values[counts == counts.max()]
    if tied.size == 1:
        return int(tied[0])
    if distances is not None:
        dist = np.asarray(distances, dtype=float)
        mask = np.isin(labels, tied)
        near = dist[mask].min()
        at_near = labels[mask][dist[mask] == near]
        return int(at_near.min())
    return int(tied.min())


def _initial_filter_radius(distances: np.ndarray) -> float:
    """Distance to the ceil(sqrt(m))-th nearest neighbor (at least the 1st)."""
    m = distances.size
    kth = min(m, max(1, math.ceil(math.sqrt(m))))
    return float(np.partition(distances, kth - 1)[kth - 1])


def predict_point(dataset: Dataset, query, params: MaxEntParams | None = None) -> Prediction:
    """Predict the label of one query point.

    Outer loop: prefilter the dataset at the current filter radius, pick the
    entropy-optimal bandwidth, seed the weights with the similarities and run
    the weight solve. A converged solve exits immediately; otherwise, if the
    total error stalled against the previous round (within
    ``local_min_tolerance``), the current weights are accepted as a local
    minimum; else the filter radius grows and the loop repeats, up to
    ``max_minconvex_rounds`` rounds. A query exactly duplicating a training
    point short-circuits to that point's label.
    """
    if params is None:
        params = MaxEntParams()
    q = _as_point(query, dataset.n_features)

    distances = np.linalg.norm(dataset.points - q, axis=1)
    # Exact coordinate matches win; rows whose squared distance underflowed
    # to zero are numerically indistinguishable from the query and count too.
    duplicates = np.flatnonzero(np.all(dataset.points == q, axis=1))
    if duplicates.size == 0:
        duplicates = np.flatnonzero(distances == 0.0)
    if duplicates.size:
        i = int(duplicates[0])
        if dataset.task == "regression":
            value = dataset.labels[i].copy()
        else:
            value = int(dataset.labels[i])
        return Prediction(value, "converged", 0.0, 1, 0, 0.0, 0.0, 0,
                          np.array([i]), np.array([1.0]))

    h_filter = _initial_filter_radius(distances)
    increment = params.q2_hfilter_increment * h_filter
    error_old = params.q1_initial_error
    last: tuple[WeightSolution, ConvexSubset, float] | None = None
    exit_reason = "round_cap"
    rounds = 0

    for _ in range(params.max_minconvex_rounds):
        rounds += 1
        prefilter = filter_convex(dataset, q, h_filter, params.threshold_filter)
        if prefilter.size == 0:
            h_filter += increment
            continue
        try:
            h_star, subset = optimize_bandwidth(dataset, q, prefilter, params)
        except DegenerateNeighborhoodError:
            h_filter += increment
            continue
        solution = solve_weights(dataset.points[subset.indices], q, subset.rbf_values, params)
        last = (solution, subset, h_star)
        if solution.converged:
            exit_reason = "converged"
            break
        total = solution.residual_error + solution.weight_sum_gap
        if abs(total - error_old) < params.local_min_tolerance:
            exit_reason = "local_minimum"
            break
        error_old = total
        h_filter += increment

    if last is None:
        raise DegenerateNeighborhoodError(
            f"no admissible neighborhood after {rounds} filter expansions"
        )
    solution, subset, h_star = last

    if dataset.task == "regression":
        total_weight = float(solution.weights.sum())
        if total_weight > 0.0:
            blend = solution.weights / total_weight
        else:
            # Solver collapsed to all-zero weights; fall back to the raw
            # similarities, which are strictly positive by construction.
            blend = subset.rbf_values / subset.rbf_values.sum()
        # Unit-sum weights keep every output inside the neighbor label envelope.
        value = predict_regression(blend, dataset.labels[subset.indices])
        applied = blend
    else:
        value = predict_classification(dataset.labels[subset.indices], distances[subset.indices])
        applied = subset.rbf_values

    return Prediction(
        value,
        exit_reason,
        h_star,
        subset.size,
        solution.iterations,
        solution.residual_error,
        solution.weight_sum_gap,
        rounds,
        subset.indices,
        applied,
    )


def _as_query_matrix(queries, n_features: int) -> np.ndarray:
    arr = np.asarray(queries, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, n_features)
    if arr.ndim == 1:
        if n_features == 1:
            arr = arr.reshape(-1, 1)
        elif arr.size == n_features:
            arr = arr.reshape(1, -1)
        else:
            raise InvalidInputError(
                f"1-D query batch of length {arr.size} does not match {n_features} features"
            )
    if arr.ndim != 2 or arr.shape[1] != n_features:
        raise InvalidInputError(f"queries must be (n_queries, {n_features}), got {arr.shape}")
    return arr


def predict_batch(
    dataset: Dataset,
    queries,
    params: MaxEntParams | None = None,
    parallelism: int = 1,
) -> list:
    """Predict every query; failures are reported per element.

    Each element of the result is a :class:`Prediction`, or a
    :class:`PredictionFailure` if that query raised a package error. The
    result order matches the query order and is independent of
    ``parallelism``: queries never share mutable state, so thread count
    cannot change any value.
    """
    if params is None:
        params = MaxEntParams()
    arr = _as_query_matrix(queries, dataset.n_features)

    def run(i: int):
        try:
            return predict_point(dataset, arr[i], params)
        except MaxentError as exc:
            # Package errors become per-element failure markers; anything
            # else is a bug and still propagates.
            return PredictionFailure(type(exc).__name__, str(exc))

    n = arr.shape[0]
    if n == 0:
        return []
    workers = max(1, int(parallelism))
    if workers == 1:
        return [run(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(n)))
