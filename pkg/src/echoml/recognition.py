"""Echo-train recognition: sliding-window classification, k-means post-selection,
bit inference and per-bit fidelity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import neural
from .estimators import EchoClassifier, minmax_normalize
from .simulate import STRIDE, WINDOW_LEN, BitSequence, RawTrace, SequenceTiming, retrieval_windows

METHOD_KMEANS = "ANN + K-means"


@dataclass
class ProbabilityTrace:
    times: np.ndarray  # window start times (ns)
    p_e: np.ndarray
    window_len: int
    stride: int
    dt: float = 1.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.p_e = np.asarray(self.p_e, dtype=float)
        if self.times.shape != self.p_e.shape:
            raise ValueError("times and p_e must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("window start times must be strictly increasing")
        if np.any((self.p_e < 0) | (self.p_e > 1)):
            raise ValueError("echo probabilities must lie in [0, 1]")

    @property
    def centers(self) -> np.ndarray:
        return self.times + self.dt * (self.window_len - 1) / 2

    def __len__(self):
        return self.p_e.size


def _echo_probability(model, windows: np.ndarray) -> np.ndarray:
    if isinstance(model, neural.DenseNetwork):
        if model.head != "classifier":
            raise ValueError("slide_classify needs a classifier-head network")
        return neural.predict_batch(model, minmax_normalize(windows))[:, 0]
    return model.echo_probability(windows)


def slide_classify(model: EchoClassifier | neural.DenseNetwork, trace: RawTrace,
                   window_len: int = WINDOW_LEN, stride: int = STRIDE) -> ProbabilityTrace:
    """Echo probability of every ``window_len`` slice of ``trace``, ``stride`` samples apart."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if len(trace) < window_len:
        raise ValueError(f"trace of {len(trace)} samples is shorter than the "
                         f"{window_len}-sample window")
    windows = sliding_window_view(trace.samples, window_len)[::stride]
    starts = np.arange(0, len(trace) - window_len + 1, stride)
    p_e = np.clip(_echo_probability(model, windows), 0.0, 1.0)
    return ProbabilityTrace(trace.t0 + trace.dt * starts, p_e, window_len, stride, trace.dt)


@dataclass
class ClusterResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    degenerate: bool = False


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int):
    centroids = centroids.astype(float).copy()
    labels = None
    for _ in range(max_iter):
        new = np.argmin(np.abs(x[:, None] - centroids[None, :]), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(len(centroids)):
            members = x[labels == c]
            if members.size:
                centroids[c] = members.mean()
    return labels, centroids


def _plus_plus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centroids)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total == 0:
            centroids.append(x[rng.integers(len(x))])
        else:
            centroids.append(x[rng.choice(len(x), p=d2 / total)])
    return np.array(centroids)


def optimal_partition_centroids(x, k: int) -> np.ndarray:
    """Centroids of the globally optimal contiguous k-partition of sorted ``x``.

    Dynamic programming over the sorted points, O(k n^2).
    """
    xs = np.sort(np.asarray(x, dtype=float))
    n = len(xs)
    s1 = np.concatenate([[0.0], np.cumsum(xs)])
    s2 = np.concatenate([[0.0], np.cumsum(xs ** 2)])

    def sse(lo, hi):  # points lo..hi-1, vectorized over lo
        cnt = hi - lo
        tot = s1[hi] - s1[lo]
        return (s2[hi] - s2[lo]) - tot ** 2 / cnt

    cost = np.full((k + 1, n + 1), np.inf)
    split = np.zeros((k + 1, n + 1), dtype=int)
    cost[0, 0] = 0.0
    for m in range(1, k + 1):
        for hi in range(m, n + 1):
            lo = np.arange(m - 1, hi)
            cand = cost[m - 1, lo] + sse(lo, hi)
            best = int(np.argmin(cand))
            cost[m, hi] = cand[best]
            split[m, hi] = lo[best]
    bounds = []
    hi = n
    for m in range(k, 0, -1):
        lo = split[m, hi]
        bounds.append((lo, hi))
        hi = lo
    return np.array([xs[lo:hi].mean() for lo, hi in reversed(bounds)])


def kmeans_1d(points, k: int = 2, seed: int = 0, n_init: int = 5,
              max_iter: int = 50) -> ClusterResult:
    """Lloyd's k-means on scalars, best of several seeded k-means++ starts.

    The exact dynamic-programming partition is used as one extra start, so the
    result is never worse than the global optimum's basin. Centroids are
    returned in ascending order. Fewer than ``k`` distinct values yield
    repeated centroids with ``degenerate=True``.
    """
    x = np.asarray(points, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("kmeans_1d needs at least one point")
    if k < 1:
        raise ValueError("k must be >= 1")
    distinct = np.unique(x)
    if distinct.size < k:
        centroids = np.concatenate([distinct, np.repeat(distinct[-1], k - distinct.size)])
        labels = np.searchsorted(distinct, x)
        return ClusterResult(labels, centroids, 0.0, degenerate=True)

    rng = np.random.default_rng(seed)
    starts = [_plus_plus_init(x, k, rng) for _ in range(n_init)]
    if x.size <= 2000:
        starts.append(optimal_partition_centroids(x, k))
    best = None
    for init in starts:
        labels, centroids = _lloyd(x, np.sort(init), max_iter)
        inertia = float(np.sum((x - centroids[labels]) ** 2))
        if best is None or inertia < best.inertia:
            order = np.argsort(centroids, kind="stable")
            relabel = np.empty(k, dtype=int)
            relabel[order] = np.arange(k)
            best = ClusterResult(relabel[labels], centroids[order], inertia)
    return best


class KMeans1D(ClusterMixin, BaseEstimator):
    """Estimator front-end for :func:`kmeans_1d`."""

    def __init__(self, n_clusters=2, n_init=5, max_iter=50, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(np.reshape(X, (-1, 1)), dtype=np.float64)
        res = kmeans_1d(X[:, 0], self.n_clusters, self.random_state, self.n_init, self.max_iter)
        self.cluster_centers_ = res.centroids
        self.labels_ = res.assignments
        self.inertia_ = res.inertia
        self.degenerate_ = res.degenerate
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        x = np.asarray(X, dtype=float).ravel()
        return np.argmin(np.abs(x[:, None] - self.cluster_centers_[None, :]), axis=1)


def window_points(ptrace: ProbabilityTrace, windows) -> list[np.ndarray]:
    """p_e values whose window midpoints fall in each ``[lo, hi)`` time window."""
    centers = ptrace.centers
    return [ptrace.p_e[(centers >= lo) & (centers < hi)] for lo, hi in windows]


def majority_centroid(points, seed: int = 0, n_init: int = 5, max_iter: int = 50) -> float:
    """Centroid of the larger of two k-means clusters; ties go to the lower centroid."""
    res = kmeans_1d(points, 2, seed, n_init, max_iter)
    counts = np.bincount(res.assignments, minlength=2)
    # centroids are ascending, so argmax picks the lower one on a tie
    return float(res.centroids[int(np.argmax(counts))])


def post_select(ptrace: ProbabilityTrace, windows, seed: int = 0, n_init: int = 5,
                max_iter: int = 50) -> np.ndarray:
    """One probability per retrieval window (time order) from majority-cluster centroids."""
    out = []
    for k, pts in enumerate(window_points(ptrace, windows)):
        if pts.size < 2:
            raise ValueError(f"window {k + 1} holds {pts.size} probability points; need >= 2")
        out.append(majority_centroid(pts, seed, n_init, max_iter))
    return np.array(out)


def infer_bits(window_probs) -> tuple[BitSequence, np.ndarray]:
    """Map time-ordered window probabilities to stored bits.

    The first retrieved echo belongs to the last stored pulse, so the
    probabilities are reversed into storage order (``p_rev``); a bit is 1 when
    its probability exceeds 0.5.
    """
    p_rev = np.asarray(window_probs, dtype=float)[::-1].copy()
    return BitSequence(tuple(int(p > 0.5) for p in p_rev)), p_rev


def fidelity(a: int, p_rev: float) -> float:
    """Agreement (percent) between nominal bit ``a`` and retrieved probability ``p_rev``."""
    if a not in (0, 1):
        raise ValueError(f"nominal bit must be 0 or 1, got {a}")
    if not 0.0 <= p_rev <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p_rev}")
    return (1.0 - abs(a - p_rev)) * 100.0


@dataclass
class FidelityReport:
    f: np.ndarray  # (n_bits, n_sequences), percent
    f_avg: np.ndarray
    f_std: np.ndarray
    method: str
    p_rev: np.ndarray | None = None

    @property
    def success_percent(self) -> float:
        return 100.0 * float(np.count_nonzero(self.f >= 70.0)) / self.f.size

    @property
    def n_correct(self) -> int:
        return int(np.count_nonzero(self.f > 50.0))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "success_percent": self.success_percent,
            "f_avg": self.f_avg.tolist(),
            "f_std": self.f_std.tolist(),
            "f": self.f.tolist(),
        }

    def to_csv(self) -> str:
        lines = ["i,j,F_percent"]
        n_bits, n_seq = self.f.shape
        for j in range(n_seq):
            for i in range(n_bits):
                lines.append(f"{i + 1},{j},{self.f[i, j]!r}")
        return "\n".join(lines) + "\n"


def fidelity_report(probs_by_seq: Mapping[int, np.ndarray], method: str,
                    n_bits: int = 4) -> FidelityReport:
    """Per-bit fidelities for every sequence from time-ordered window probabilities."""
    n_seq = 2 ** n_bits
    missing = [j for j in range(n_seq) if j not in probs_by_seq]
    if missing:
        raise KeyError(f"no result for sequence(s) {missing}")
    f = np.empty((n_bits, n_seq))
    p_all = np.empty((n_bits, n_seq))
    for j in range(n_seq):
        _, p_rev = infer_bits(probs_by_seq[j])
        nominal = BitSequence.from_decimal(j, n_bits).bits
        p_all[:, j] = p_rev
        f[:, j] = [fidelity(a, float(p)) for a, p in zip(nominal, p_rev)]
    return FidelityReport(f, f.mean(axis=1), f.std(axis=1), method, p_all)


def classify_traces(model, traces: Mapping[int, RawTrace], window_len: int = WINDOW_LEN,
                    stride: int = STRIDE) -> dict[int, ProbabilityTrace]:
    return {j: slide_classify(model, traces[j], window_len, stride) for j in sorted(traces)}


def full_protocol_report(model, traces: Mapping[int, RawTrace],
                         timing: SequenceTiming | None = None, window_len: int = WINDOW_LEN,
                         stride: int = STRIDE, seed: int = 0,
                         selector: Callable | None = None,
                         method: str = METHOD_KMEANS) -> FidelityReport:
    """Classify, post-select and score all sequences."""
    timing = timing or SequenceTiming()
    n_seq = 2 ** timing.n_slots
    missing = [j for j in range(n_seq) if j not in traces]
    if missing:
        raise KeyError(f"missing trace for sequence(s) {missing}")
    windows = retrieval_windows(timing)
    ptraces = classify_traces(model, traces, window_len, stride)
    if selector is None:
        probs = {j: post_select(pt, windows, seed) for j, pt in ptraces.items()}
    else:
        probs = {j: selector(pt, windows) for j, pt in ptraces.items()}
    return fidelity_report(probs, method, timing.n_slots)
