"""Acquisition scoring: translation bias, translation error, semantic
density, semantic diversity, their quantile-normalized aggregate, and the
baseline strategies.

Sign conventions. Selection always takes the *highest* aggregate scores, so
every term is oriented so that "should be selected" is large:

- bias: the negated entropy of the (renormalized) translation N-best, i.e.
  0 for a one-hot translation distribution (maximally biased) and
  increasingly negative as translations diversify. The max variant is the
  log-probability of the single best translation.
- error: expected parser negative log-likelihood of the utterance's LF given
  back-translations; always >= 0, larger means more erroneous.
- density: KDE log-density of the utterance embedding (up to a constant).
- diversity: 0 for the first candidate in a cluster, -inf afterwards; applied
  as a post-aggregation mask, never quantile-normalized.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import Example, FeatureVector, Utterance
from .geometry import ClusterModel, KdeModel, kde_logdensity_batch
from .parser import SurrogateParser, parser_loglik, perplexity
from .textmodel import (
    BeamHypothesis,
    ConditionalTranslationModel,
    NGramLM,
    beam_nbest,
    lm_loglik,
    renormalize_nbest,
)

__all__ = [
    "AcquisitionConfig",
    "AcquisitionScores",
    "RoundModels",
    "ABE_STRATEGIES",
    "BASELINE_STRATEGIES",
    "ALL_STRATEGIES",
    "score_translation_bias",
    "score_translation_error",
    "score_semantic_density",
    "apply_diversity_mask",
    "quantile_normalize",
    "aggregate_abe",
    "score_pool",
    "score_baseline",
    "sentence_bleu",
    "write_scores_csv",
]

NEG_INF = float("-inf")

ABE_STRATEGIES = {"abe-nbest": "n_best", "abe-max": "max"}
BASELINE_STRATEGIES = (
    "random",
    "cluster",
    "lcs-fw",
    "lcs-bw",
    "traffic",
    "csse",
    "rttl",
)
ALL_STRATEGIES = tuple(ABE_STRATEGIES) + BASELINE_STRATEGIES

TERMS = ("bias", "error", "density", "diversity")


@dataclass(frozen=True)
class AcquisitionConfig:
    variant: str = "n_best"  # "n_best" | "max"
    n: int = 10
    alpha: Mapping[str, float] = None  # type: ignore[assignment]
    beam_width: int = 32
    max_len: int = 16
    k_mult: int = 1
    seed: int = 0
    factorized: bool = True

    def __post_init__(self) -> None:
        if self.variant not in ("n_best", "max"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.beam_width < self.n:
            raise ValueError("beam_width must be >= n")
        if self.k_mult < 1:
            raise ValueError("k_mult must be >= 1")
        alpha = dict(self.alpha) if self.alpha is not None else {}
        for term in TERMS:
            alpha.setdefault(term, 1.0)
        unknown = set(alpha) - set(TERMS)
        if unknown:
            raise ValueError(f"unknown acquisition terms {sorted(unknown)}")
        if any(v < 0 for v in alpha.values()):
            raise ValueError("term coefficients must be >= 0")
        if not any(v > 0 for v in alpha.values()):
            raise ValueError("at least one term coefficient must be positive")
        object.__setattr__(self, "alpha", alpha)


@dataclass
class AcquisitionScores:
    """Per-utterance term scores plus the aggregate. Baselines fill only the
    aggregate."""

    ids: tuple[str, ...]
    bias: dict[str, float]
    error: dict[str, float]
    density: dict[str, float]
    diversity: dict[str, float]
    aggregate: dict[str, float]

    def validate(self) -> None:
        for uid in self.ids:
            if uid in self.bias and self.bias[uid] > 0:
                raise ValueError(f"bias score must be <= 0 ({uid}: {self.bias[uid]})")
            if uid in self.error and self.error[uid] < 0:
                raise ValueError(f"error score must be >= 0 ({uid})")
            if uid in self.diversity and self.diversity[uid] not in (0.0, NEG_INF):
                raise ValueError(f"diversity mask must be 0 or -inf ({uid})")
            if uid in self.diversity:
                finite = math.isfinite(self.aggregate[uid])
                if finite != (self.diversity[uid] == 0.0):
                    raise ValueError(f"aggregate finiteness inconsistent ({uid})")


@dataclass
class RoundModels:
    """Everything a selection round scores with; all fitted on data from the
    previous round, never on the translations about to be acquired."""

    parser: SurrogateParser
    translation: ConditionalTranslationModel
    kde: KdeModel
    clusters: ClusterModel
    embeddings: dict[str, FeatureVector]
    translations_by_lf: dict[int, list[Utterance]]
    bt: Callable[[Utterance], Utterance]
    mt: Callable[[Utterance], Utterance]
    round_budget: int
    rng: np.random.Generator
    lf_counts: dict[int, int]
    source_lm_by_lf: dict[int, NGramLM] | None = None
    _bt_posterior_cache: dict[tuple[str, ...], dict[int, float]] = field(
        default_factory=dict
    )

    def bt_posterior(self, target: Utterance, template_id: int) -> float:
        """log P_parser(lf | back-translation of target), cached per sentence."""
        key = tuple(target.tokens)
        cached = self._bt_posterior_cache.get(key)
        if cached is None or template_id not in cached:
            back = self.bt(target)
            tids, post = self.parser.posterior_logliks(back.tokens)
            cached = dict(zip(tids, (float(v) for v in post)))
            self._bt_posterior_cache[key] = cached
        return cached[template_id]


# --- individual terms --------------------------------------------------------


def _nbest_for(
    model: ConditionalTranslationModel,
    source_id: str,
    cfg: AcquisitionConfig,
    n: int | None = None,
) -> list[BeamHypothesis]:
    lm = model.lm_for_source(source_id)
    return beam_nbest(lm, beam_width=cfg.beam_width, n=n or cfg.n, max_len=cfg.max_len)


def score_translation_bias(
    model: ConditionalTranslationModel, x_s: Example, cfg: AcquisitionConfig
) -> float:
    """Bias term for one source utterance. n_best: negated entropy of the
    renormalized N-best; max: log-probability of the beam argmax."""
    if cfg.variant == "max":
        best = _nbest_for(model, x_s.utterance.id, cfg, n=1)[0]
        return float(best.logprob)
    hyps = _nbest_for(model, x_s.utterance.id, cfg)
    probs = renormalize_nbest(hyps)
    return float(np.sum(probs * np.log(probs)))


def _dedupe(translations: Sequence[Utterance]) -> list[Utterance]:
    seen: set[tuple[str, ...]] = set()
    out = []
    for t in translations:
        key = tuple(t.tokens)
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out


def score_translation_error(
    parser: SurrogateParser,
    bt_oracle: Callable[[Utterance], Utterance],
    model: ConditionalTranslationModel,
    x_s: Example,
    translations_by_lf: Mapping[int, Sequence[Utterance]],
    cfg: AcquisitionConfig,
) -> float:
    """Error term: expected parser NLL of x_s's LF over back-translations.

    n_best: expectation over the distinct training translations sharing the
    LF, weighted by the distilled model renormalized over that set; max: NLL
    at the back-translation of the beam-argmax translation.
    """
    tid = x_s.lf.template_id
    if cfg.variant == "max":
        best = _nbest_for(model, x_s.utterance.id, cfg, n=1)[0]
        target = Utterance(
            id=f"{x_s.utterance.id}__hyp",
            language="tgt",
            raw=" ".join(best.tokens),
            tokens=best.tokens,
        )
        return -parser_loglik(parser, bt_oracle(target), x_s.lf)
    pool = _dedupe(translations_by_lf[tid])
    lm = model.lm_for_source(x_s.utterance.id)
    logw = np.array([lm_loglik(lm, t.tokens) for t in pool])
    w = np.exp(logw - logw.max())
    w /= w.sum()
    nll = np.array(
        [-parser_loglik(parser, bt_oracle(t), x_s.lf) for t in pool]
    )
    return float(np.dot(w, nll))


def score_semantic_density(kde: KdeModel, embedded: FeatureVector) -> float:
    return float(kde_logdensity_batch(kde, [embedded])[0])


def quantile_normalize(scores: Mapping[str, float]) -> dict[str, float]:
    """Rank-based normalization to (0, 1): (rank - 0.5) / n with tied ranks
    averaged. -inf entries are excluded and preserved; the output depends on
    the input only through its ordering."""
    finite_ids = [k for k, v in scores.items() if v != NEG_INF]
    if any(math.isnan(scores[k]) or scores[k] == math.inf for k in scores):
        raise ValueError("scores must be finite or -inf")
    if not finite_ids:
        raise ValueError("all scores are -inf; nothing to normalize")
    vals = np.array([scores[k] for k in finite_ids])
    ranks = rankdata(vals, method="average")
    out = {k: float((r - 0.5) / len(finite_ids)) for k, r in zip(finite_ids, ranks)}
    for k, v in scores.items():
        if v == NEG_INF:
            out[k] = NEG_INF
    return out


def apply_diversity_mask(
    clusters: ClusterModel,
    candidate_order: Sequence[str],
    used_clusters: set[int] | None = None,
) -> dict[str, float]:
    """Greedy one-per-cluster mask over candidates in priority order.

    Clusters of previously selected utterances (the fixed centers, indices
    0..n_fixed-1) start used, so nothing is ever selected from a region an
    earlier round already covered.
    """
    used = set(range(clusters.n_fixed)) if used_clusters is None else set(used_clusters)
    mask: dict[str, float] = {}
    for uid in candidate_order:
        cluster = clusters.assignment[uid]
        if cluster in used:
            mask[uid] = NEG_INF
        else:
            used.add(cluster)
            mask[uid] = 0.0
    return mask


def aggregate_abe(
    term_scores: Mapping[str, Mapping[str, float]],
    clusters: ClusterModel | None,
    cfg: AcquisitionConfig,
    pool_order: Sequence[str],
) -> AcquisitionScores:
    """Quantile-normalize each weighted term, sum, then apply the diversity
    mask additively. Terms with a zero coefficient are skipped entirely, so
    the output cannot depend on their values."""
    partial = {uid: 0.0 for uid in pool_order}
    for term in ("bias", "error", "density"):
        coeff = cfg.alpha[term]
        if coeff == 0:
            continue
        normalized = quantile_normalize(term_scores[term])
        for uid in pool_order:
            partial[uid] += coeff * normalized[uid]
    position = {uid: i for i, uid in enumerate(pool_order)}
    order = sorted(pool_order, key=lambda u: (-partial[u], position[u]))
    if cfg.alpha["diversity"] > 0:
        if clusters is None:
            raise ValueError("diversity term enabled but no cluster model supplied")
        mask = apply_diversity_mask(clusters, order)
    else:
        mask = {uid: 0.0 for uid in pool_order}
    aggregate = {uid: partial[uid] + mask[uid] for uid in pool_order}
    return AcquisitionScores(
        ids=tuple(pool_order),
        bias=dict(term_scores.get("bias", {})),
        error=dict(term_scores.get("error", {})),
        density=dict(term_scores.get("density", {})),
        diversity=mask,
        aggregate=aggregate,
    )


# --- engine entry ------------------------------------------------------------


def score_pool(
    strategy: str,
    pool: Sequence[Example],
    models: RoundModels,
    cfg: AcquisitionConfig,
) -> AcquisitionScores:
    if strategy in ABE_STRATEGIES:
        variant = ABE_STRATEGIES[strategy]
        run_cfg = cfg if cfg.variant == variant else _with_variant(cfg, variant)
        return _score_abe(pool, models, run_cfg)
    if strategy in BASELINE_STRATEGIES:
        agg = score_baseline(strategy, pool, models, cfg)
        return AcquisitionScores(
            ids=tuple(ex.utterance.id for ex in pool),
            bias={},
            error={},
            density={},
            diversity={},
            aggregate=agg,
        )
    raise ValueError(f"unknown acquisition strategy {strategy!r}")


def _with_variant(cfg: AcquisitionConfig, variant: str) -> AcquisitionConfig:
    return AcquisitionConfig(
        variant=variant,
        n=cfg.n,
        alpha=dict(cfg.alpha),
        beam_width=cfg.beam_width,
        max_len=cfg.max_len,
        k_mult=cfg.k_mult,
        seed=cfg.seed,
        factorized=cfg.factorized,
    )


def _score_abe(
    pool: Sequence[Example], models: RoundModels, cfg: AcquisitionConfig
) -> AcquisitionScores:
    pool_order = [ex.utterance.id for ex in pool]
    bias: dict[str, float] = {}
    error: dict[str, float] = {}

    if cfg.factorized:
        # sharing an LF means sharing the translation model, hence the scores
        by_lf: dict[int, Example] = {}
        for ex in pool:
            by_lf.setdefault(ex.lf.template_id, ex)
        bias_by_lf = {
            tid: score_translation_bias(models.translation, ex, cfg)
            for tid, ex in by_lf.items()
        }
        error_by_lf = {
            tid: _error_term(ex, models, cfg) for tid, ex in by_lf.items()
        }
        for ex in pool:
            bias[ex.utterance.id] = bias_by_lf[ex.lf.template_id]
            error[ex.utterance.id] = error_by_lf[ex.lf.template_id]
    else:
        for ex in pool:
            bias[ex.utterance.id] = score_translation_bias(models.translation, ex, cfg)
            error[ex.utterance.id] = _error_term(ex, models, cfg)

    emb = [models.embeddings[uid] for uid in pool_order]
    dens = kde_logdensity_batch(models.kde, emb)
    density = {uid: float(v) for uid, v in zip(pool_order, dens)}

    scores = aggregate_abe(
        {"bias": bias, "error": error, "density": density},
        models.clusters,
        cfg,
        pool_order,
    )
    scores.validate()
    return scores


def _error_term(ex: Example, models: RoundModels, cfg: AcquisitionConfig) -> float:
    """score_translation_error with the round's back-translation cache."""
    tid = ex.lf.template_id
    if cfg.variant == "max":
        best = _nbest_for(models.translation, ex.utterance.id, cfg, n=1)[0]
        target = Utterance(
            id=f"{ex.utterance.id}__hyp",
            language="tgt",
            raw=" ".join(best.tokens),
            tokens=best.tokens,
        )
        return -models.bt_posterior(target, tid)
    pool = _dedupe(models.translations_by_lf[tid])
    lm = models.translation.lm_for_source(ex.utterance.id)
    logw = np.array([lm_loglik(lm, t.tokens) for t in pool])
    w = np.exp(logw - logw.max())
    w /= w.sum()
    nll = np.array([-models.bt_posterior(t, tid) for t in pool])
    return float(np.dot(w, nll))


# --- baselines ---------------------------------------------------------------


def score_baseline(
    strategy: str,
    pool: Sequence[Example],
    models: RoundModels,
    cfg: AcquisitionConfig,
) -> dict[str, float]:
    pool_order = [ex.utterance.id for ex in pool]
    if strategy == "random":
        draws = models.rng.random(len(pool_order))
        return {uid: float(v) for uid, v in zip(pool_order, draws)}

    if strategy == "cluster":
        from .geometry import incremental_kmeans

        k = min(models.round_budget, len(pool_order))
        points = [(uid, models.embeddings[uid]) for uid in pool_order]
        grouping = incremental_kmeans(
            points, fixed_centers=(), k_total=k, seed=int(models.rng.integers(2**31))
        )
        members: dict[int, list[str]] = {}
        for uid in pool_order:
            members.setdefault(grouping.assignment[uid], []).append(uid)
        scores = {uid: 0.0 for uid in pool_order}
        for cluster in sorted(members):
            reps = members[cluster]
            pick = reps[int(models.rng.integers(len(reps)))]
            scores[pick] = 1.0
        return scores

    if strategy == "lcs-fw":
        if models.parser is None:
            raise ValueError("strategy 'lcs-fw' needs a trained parser")
        return {
            ex.utterance.id: -parser_loglik(models.parser, ex.utterance, ex.lf)
            for ex in pool
        }

    if strategy == "lcs-bw":
        if not models.source_lm_by_lf:
            raise ValueError("strategy 'lcs-bw' needs per-LF source text models")
        return {
            ex.utterance.id: -lm_loglik(
                models.source_lm_by_lf[ex.lf.template_id], ex.utterance.tokens
            )
            for ex in pool
        }

    if strategy == "traffic":
        if models.parser is None:
            raise ValueError("strategy 'traffic' needs a trained parser")
        neg_perp = {
            ex.utterance.id: -perplexity(models.parser, ex.utterance, ex.lf)
            for ex in pool
        }
        freq = {
            ex.utterance.id: float(models.lf_counts[ex.lf.template_id]) for ex in pool
        }
        qn_p = quantile_normalize(neg_perp)
        qn_f = quantile_normalize(freq)
        return {uid: qn_p[uid] + qn_f[uid] for uid in pool_order}

    if strategy == "csse":
        emb = [models.embeddings[uid] for uid in pool_order]
        dens = kde_logdensity_batch(models.kde, emb)
        density = {uid: float(v) for uid, v in zip(pool_order, dens)}
        qn = quantile_normalize(density)
        position = {uid: i for i, uid in enumerate(pool_order)}
        order = sorted(pool_order, key=lambda u: (-qn[u], position[u]))
        mask = apply_diversity_mask(models.clusters, order)
        return {uid: qn[uid] + mask[uid] for uid in pool_order}

    if strategy == "rttl":
        out = {}
        for ex in pool:
            translated = models.mt(ex.utterance)
            back = models.bt(translated)
            out[ex.utterance.id] = 1.0 - sentence_bleu(back.tokens, ex.utterance.tokens)
        return out

    raise ValueError(f"unknown baseline strategy {strategy!r}")


# --- sentence BLEU -----------------------------------------------------------


def _ngram_counts(tokens: Sequence[str], order: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - order + 1):
        g = tuple(tokens[i : i + order])
        counts[g] = counts.get(g, 0) + 1
    return counts


def sentence_bleu(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Sentence BLEU with add-1 smoothing on n >= 2 match counts and a
    brevity penalty for short candidates.

    The highest order requires at least two candidate n-grams, so a
    three-token candidate is scored with orders {1, 2}; order never exceeds 4
    and unigram precision stays unsmoothed (zero overlap scores 0).
    """
    if not candidate or not reference:
        raise ValueError("BLEU needs non-empty candidate and reference")
    max_order = max(1, min(4, len(candidate) - 1))
    log_parts = []
    for order in range(1, max_order + 1):
        cand = _ngram_counts(candidate, order)
        ref = _ngram_counts(reference, order)
        matches = sum(min(c, ref.get(g, 0)) for g, c in cand.items())
        total = sum(cand.values())
        if order == 1:
            if matches == 0:
                return 0.0
            log_parts.append(math.log(matches / total))
        else:
            log_parts.append(math.log((matches + 1) / (total + 1)))
    gm = math.exp(sum(log_parts) / len(log_parts))
    if len(candidate) < len(reference):
        bp = math.exp(1.0 - len(reference) / len(candidate))
    else:
        bp = 1.0
    return bp * gm


def write_scores_csv(
    path: str, scores: AcquisitionScores, selected: Sequence[str]
) -> None:
    """Per-round score dump: id, phi_b, phi_e, phi_s, phi_d, phi_A, selected."""
    chosen = set(selected)

    def fmt(d: Mapping[str, float], uid: str) -> str:
        if uid not in d:
            return ""
        v = d[uid]
        return "-inf" if v == NEG_INF else repr(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "phi_b", "phi_e", "phi_s", "phi_d", "phi_A", "selected"])
        for uid in scores.ids:
            writer.writerow(
                [
                    uid,
                    fmt(scores.bias, uid),
                    fmt(scores.error, uid),
                    fmt(scores.density, uid),
                    fmt(scores.diversity, uid),
                    fmt(scores.aggregate, uid),
                    int(uid in chosen),
                ]
            )
