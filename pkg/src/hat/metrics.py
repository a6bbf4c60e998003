"""Training-set bias metrics and the back-translation discrepancy rate.

JS divergence is reported in bits (range [0, 1]); published tables usually
show JS x 100, so reporting helpers expose both. The divergence frontier is
a simplified stand-in for embedding-based frontier metrics: features are
quantized with a shared k-means codebook and the frontier is computed between
the two code histograms. Its absolute values are not comparable to neural
variants; its ordering behaviour is.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .core import Example, FeatureVector
from .geometry import incremental_kmeans

__all__ = [
    "ngram_distribution",
    "js_divergence",
    "mtld",
    "bt_discrepancy_rate",
    "divergence_frontier",
]

DEFAULT_TTR_THRESHOLD = 0.72
FRONTIER_SCALING = 5.0
FRONTIER_GRID = 51


def ngram_distribution(
    corpus: Sequence[Sequence[str]], orders: Sequence[int] = (1, 2)
) -> dict[tuple[str, ...], float]:
    """Relative frequencies over the union of the requested n-gram orders."""
    if not corpus or all(len(s) == 0 for s in corpus):
        raise ValueError("empty corpus")
    counts: dict[tuple[str, ...], int] = {}
    for sent in corpus:
        toks = tuple(sent)
        for order in orders:
            for i in range(len(toks) - order + 1):
                g = toks[i : i + order]
                counts[g] = counts.get(g, 0) + 1
    total = sum(counts.values())
    return {g: c / total for g, c in counts.items()}


def js_divergence(
    p: Mapping[tuple[str, ...], float], q: Mapping[tuple[str, ...], float]
) -> float:
    """Jensen-Shannon divergence, log base 2; 0 iff p == q, 1 iff disjoint."""
    support = set(p) | set(q)
    acc = 0.0
    for g in support:
        pi = p.get(g, 0.0)
        qi = q.get(g, 0.0)
        m = 0.5 * (pi + qi)
        if pi > 0:
            acc += 0.5 * pi * np.log2(pi / m)
        if qi > 0:
            acc += 0.5 * qi * np.log2(qi / m)
    return float(min(max(acc, 0.0), 1.0))


def _mtld_directional(tokens: Sequence[str], threshold: float) -> float:
    factors = 0.0
    types: set[str] = set()
    count = 0
    ttr = 1.0
    for tok in tokens:
        count += 1
        types.add(tok)
        ttr = len(types) / count
        if ttr < threshold:
            factors += 1.0
            types.clear()
            count = 0
            ttr = 1.0
    if count > 0 and ttr < 1.0:
        factors += (1.0 - ttr) / (1.0 - threshold)
    if factors == 0.0:
        # never dropped below threshold and ended fully diverse
        return float(len(tokens))
    return len(tokens) / factors


def mtld(tokens: Sequence[str], ttr_threshold: float = DEFAULT_TTR_THRESHOLD) -> float:
    """Bidirectional mean length of token strings keeping TTR >= threshold.

    Forward and backward factor counts are averaged. By convention an
    all-unique sequence scores its own length.
    """
    if not tokens:
        raise ValueError("MTLD of an empty token sequence")
    if not 0.0 < ttr_threshold < 1.0:
        raise ValueError("TTR threshold must lie in (0, 1)")
    fwd = _mtld_directional(tokens, ttr_threshold)
    bwd = _mtld_directional(list(reversed(tokens)), ttr_threshold)
    return 0.5 * (fwd + bwd)


def bt_discrepancy_rate(selected: Sequence[Example], oracles) -> float:
    """Fraction of selected source examples whose machine translation
    back-translates to a different LF (semantic equivalence is LF identity)."""
    if not selected:
        raise ValueError("empty selection")
    wrong = 0
    for ex in selected:
        mt = oracles.mt(ex.utterance)
        bt = oracles.bt(mt)
        realized = oracles.realized_source_lf(bt.tokens)
        if realized is None or realized != ex.lf.template_id:
            wrong += 1
    return wrong / len(selected)


def _kl_nats(p: np.ndarray, r: np.ndarray) -> float:
    """KL(p || r) in nats; +inf when r lacks mass where p has it."""
    mask = p > 0
    if np.any(r[mask] <= 0):
        return float("inf")
    return float(np.sum(p[mask] * np.log(p[mask] / r[mask])))


def divergence_frontier(
    p_features: Sequence[FeatureVector],
    q_features: Sequence[FeatureVector],
    n_bins: int = 16,
    seed: int = 0,
    scaling: float = FRONTIER_SCALING,
    grid_size: int = FRONTIER_GRID,
) -> float:
    """Area under the exp(-c*KL) divergence frontier of quantized features.

    Both feature sets are quantized with one shared k-means codebook of
    ``n_bins`` codes fitted on their union; the frontier traces
    (exp(-c*KL(P||R)), exp(-c*KL(Q||R))) over mixtures R = lam*P + (1-lam)*Q.
    Returns 1.0 iff the histograms are identical; symmetric by construction.
    """
    if not p_features or not q_features:
        raise ValueError("empty feature list")
    if n_bins > min(len(p_features), len(q_features)):
        raise ValueError("n_bins exceeds the smaller feature set")
    union = list(p_features) + list(q_features)
    # quantize in a canonical order so the codebook (and hence the value)
    # does not depend on which argument came first
    order = sorted(range(len(union)), key=lambda i: union[i].values.tobytes())
    points = [(f"u{rank:06d}", union[i]) for rank, i in enumerate(order)]
    try:
        codebook = incremental_kmeans(
            points, fixed_centers=(), k_total=n_bins, seed=seed
        )
    except ValueError as exc:
        raise ValueError(f"degenerate codebook: {exc}") from exc
    codes = np.empty(len(union), dtype=np.int64)
    for rank, i in enumerate(order):
        codes[i] = codebook.assignment[f"u{rank:06d}"]
    p_hist = np.bincount(codes[: len(p_features)], minlength=n_bins).astype(float)
    q_hist = np.bincount(codes[len(p_features) :], minlength=n_bins).astype(float)
    p_hist /= p_hist.sum()
    q_hist /= q_hist.sum()
    return float(
        0.5
        * (
            _frontier_area(p_hist, q_hist, scaling, grid_size)
            + _frontier_area(q_hist, p_hist, scaling, grid_size)
        )
    )


def _frontier_area(
    p: np.ndarray, q: np.ndarray, scaling: float, grid_size: int
) -> float:
    lams = np.linspace(0.0, 1.0, grid_size)
    us, vs = [], []
    for lam in lams:
        r = lam * p + (1.0 - lam) * q
        us.append(np.exp(-scaling * _kl_nats(p, r)))
        vs.append(np.exp(-scaling * _kl_nats(q, r)))
    # polygon under the curve, closed through the axes corners
    xs = [0.0, 0.0] + us + [1.0]
    ys = [0.0, 1.0] + vs + [0.0]
    area = 0.0
    for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
        area += x0 * y1 - x1 * y0
    # close back to (0, 0)
    area += xs[-1] * ys[0] - xs[0] * ys[-1]
    return abs(area) / 2.0
