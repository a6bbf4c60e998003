"""Exponential-kernel density estimation and incremental k-means.

The KDE log-density is unnormalized: the kernel's dimension-dependent
normalizing constant is dropped because every consumer uses the values
rank-only (quantile normalization), where an additive constant cancels.

Incremental k-means freezes previously selected points as immutable centers
and runs Lloyd iterations on the free centers only, so each new round
explores regions not already covered by earlier selections.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .core import FeatureVector

__all__ = [
    "KdeModel",
    "fit_kde",
    "kde_logdensity",
    "median_heuristic_bandwidth",
    "ClusterModel",
    "incremental_kmeans",
    "assign_cluster",
    "export_feature_matrix",
]

KMEANS_MAX_ITER = 100
BANDWIDTH_SUBSAMPLE = 256


def _stack(vectors: Sequence[FeatureVector]) -> np.ndarray:
    return np.stack([v.values for v in vectors]).astype(np.float64)


@dataclass
class KdeModel:
    points: tuple[FeatureVector, ...]
    bandwidth: float
    _matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("KDE needs at least one point")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be finite positive, got {self.bandwidth}")


def median_heuristic_bandwidth(
    vectors: Sequence[FeatureVector], seed: int, subsample: int = BANDWIDTH_SUBSAMPLE
) -> float:
    """Median pairwise distance of a seeded subsample; scale-adaptive and
    deterministic. Falls back to 1.0 when all sampled points coincide."""
    mat = _stack(vectors)
    if len(mat) > subsample:
        rng = np.random.default_rng(seed)
        mat = mat[rng.choice(len(mat), size=subsample, replace=False)]
    if len(mat) < 2:
        return 1.0
    d = cdist(mat, mat)
    med = float(np.median(d[np.triu_indices(len(mat), k=1)]))
    return med if med > 0 else 1.0


def fit_kde(
    vectors: Sequence[FeatureVector], bandwidth: float | None = None, seed: int = 0
) -> KdeModel:
    vecs = tuple(vectors)
    if bandwidth is None:
        bandwidth = median_heuristic_bandwidth(vecs, seed=seed)
    return KdeModel(points=vecs, bandwidth=bandwidth, _matrix=_stack(vecs))


def kde_logdensity(model: KdeModel, x: FeatureVector) -> float:
    """log[(1/n) * sum_i exp(-||x - x_i|| / h)], up to the dropped kernel
    normalizing constant."""
    return float(kde_logdensity_batch(model, [x])[0])


def kde_logdensity_batch(model: KdeModel, xs: Sequence[FeatureVector]) -> np.ndarray:
    q = _stack(xs)
    d = cdist(q, model._matrix)
    return logsumexp(-d / model.bandwidth, axis=1) - np.log(len(model.points))


@dataclass
class ClusterModel:
    """Fitted clustering: clusters 0..n_fixed-1 are the frozen centers."""

    fixed_centers: tuple[FeatureVector, ...]
    free_centers: tuple[FeatureVector, ...]
    assignment: dict[str, int]
    objective_history: tuple[float, ...]
    _centers: np.ndarray = field(repr=False)

    @property
    def n_fixed(self) -> int:
        return len(self.fixed_centers)

    @property
    def n_clusters(self) -> int:
        return len(self.fixed_centers) + len(self.free_centers)


def _kmeanspp_init(
    mat: np.ndarray, fixed: np.ndarray, k_free: int, rng: np.random.Generator
) -> np.ndarray:
    """k-means++ seeding for the free centers, conditioned on fixed ones."""
    chosen: list[int] = []
    for _ in range(k_free):
        centers = [fixed] if len(fixed) else []
        if chosen:
            centers.append(mat[chosen])
        if centers:
            d2 = cdist(mat, np.vstack(centers)).min(axis=1) ** 2
            total = d2.sum()
            if total <= 0:
                # all remaining mass at existing centers: pick the first
                # unchosen point deterministically
                remaining = [i for i in range(len(mat)) if i not in set(chosen)]
                chosen.append(remaining[0])
                continue
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            chosen.append(min(idx, len(mat) - 1))  # cumsum rounding guard
        else:
            chosen.append(int(rng.integers(len(mat))))
    return mat[chosen].copy()


def incremental_kmeans(
    points: Sequence[tuple[str, FeatureVector]],
    fixed_centers: Sequence[FeatureVector],
    k_total: int,
    seed: int,
    max_iter: int = KMEANS_MAX_ITER,
) -> ClusterModel:
    """Lloyd iterations that move only the free centers.

    Fixed centers take part in assignment but are never updated. Every free
    cluster is non-empty at convergence: an emptied free center is relocated
    to the point currently farthest from its assigned center, which strictly
    decreases the objective. Converges when assignments stabilize.
    """
    ids = [pid for pid, _ in points]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate point ids")
    mat = _stack([v for _, v in points])
    fixed = (
        _stack(fixed_centers) if fixed_centers else np.empty((0, mat.shape[1]))
    )
    n_fixed = len(fixed)
    if k_total < n_fixed:
        raise ValueError(f"k_total={k_total} below {n_fixed} fixed centers")
    if len(points) < k_total:
        raise ValueError(f"{len(points)} points cannot fill {k_total} clusters")
    n_distinct = len(np.unique(mat, axis=0))
    if n_distinct < k_total:
        raise ValueError(
            f"only {n_distinct} distinct points for k_total={k_total} clusters"
        )
    fixed_before = fixed.copy()

    rng = np.random.default_rng(seed)
    k_free = k_total - n_fixed
    free = _kmeanspp_init(mat, fixed, k_free, rng) if k_free else np.empty(
        (0, mat.shape[1])
    )

    labels = np.full(len(mat), -1, dtype=np.int64)
    history: list[float] = []
    rows = np.arange(len(mat))
    for _ in range(max_iter):
        centers = np.vstack([fixed, free]) if n_fixed else free
        d = cdist(mat, centers)
        new_labels = d.argmin(axis=1)  # argmin takes the lowest index on ties
        history.append(float((d[rows, new_labels] ** 2).sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        assigned_dist = d[rows, labels]
        for j in range(k_free):
            members = labels == n_fixed + j
            if members.any():
                free[j] = mat[members].mean(axis=0)
            else:
                # relocate an emptied center onto the farthest point; its
                # distance becomes 0, so the objective strictly decreases
                far = int(assigned_dist.argmax())
                free[j] = mat[far]
                labels[far] = n_fixed + j
                assigned_dist[far] = 0.0
    else:
        # iteration cap reached: take one final assignment pass so the
        # reported labels match the final centers
        centers = np.vstack([fixed, free]) if n_fixed else free
        d = cdist(mat, centers)
        labels = d.argmin(axis=1)
        history.append(float((d[rows, labels] ** 2).sum()))

    for a, b in zip(history, history[1:]):
        if b > a + 1e-9 * max(1.0, abs(a)):
            raise RuntimeError(f"Lloyd objective increased: {a} -> {b}")
    if not np.array_equal(fixed, fixed_before):
        raise RuntimeError("fixed centers moved during fitting")

    assignment = {pid: int(lbl) for pid, lbl in zip(ids, labels)}
    free_fv = tuple(FeatureVector(values=row) for row in free)
    return ClusterModel(
        fixed_centers=tuple(fixed_centers),
        free_centers=free_fv,
        assignment=assignment,
        objective_history=tuple(history),
        _centers=np.vstack([fixed, free]) if n_fixed else free.copy(),
    )


def assign_cluster(model: ClusterModel, x: FeatureVector) -> int:
    """Nearest center over fixed + free; ties go to the lowest index."""
    d = cdist(x.values[None, :], model._centers)[0]
    return int(d.argmin())


def export_feature_matrix(
    path: str, features: dict[str, FeatureVector]
) -> None:
    """CSV export (one row per utterance id) for external visualization."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for uid, vec in features.items():
            writer.writerow([uid] + [repr(v) for v in vec.values.tolist()])
