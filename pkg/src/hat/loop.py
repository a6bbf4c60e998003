"""Round-based selection loop: score the pool, pick a batch, acquire its
human translations, retrain, evaluate, report.

Model estimates used for selection in round q are always fitted on the data
available after round q-1; the translations acquired in round q never leak
into their own selection. Every randomized stage draws from its own seed
derived from (run seed, stage, round), so a run resumed from a checkpoint
reproduces the uninterrupted run exactly.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .acquisition import (
    AcquisitionConfig,
    RoundModels,
    score_pool,
    write_scores_csv,
)
from .core import (
    BudgetSchedule,
    DatasetBundle,
    Example,
    FeatureVector,
    RoundState,
    budget_for_round,
    checkpoint_load,
    checkpoint_save,
    merge_training_set,
    stable_seed,
    topk_select,
    write_examples_jsonl,
)
from .geometry import fit_kde, incremental_kmeans
from .metrics import (
    bt_discrepancy_rate,
    divergence_frontier,
    js_divergence,
    mtld,
    ngram_distribution,
)
from .parser import evaluate_accuracy, train_parser
from .simulator import Oracles, simulated_ht
from .textmodel import (
    DEFAULT_ADD_K,
    DEFAULT_INTERPOLATION,
    distill_translation_model,
    hash_embed,
    train_lm,
)

__all__ = [
    "RunConfig",
    "RoundSuspended",
    "HtProvider",
    "SimulatedHt",
    "run_round",
    "run_hat",
    "resume_run",
    "METRIC_COLUMNS",
]

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "round",
    "accuracy_target",
    "accuracy_source",
    "js",
    "mtld",
    "frontier",
    "bt_discrepancy",
    "cumulative_budget",
)

DEFAULT_FRACTIONS = (0.01, 0.02, 0.04, 0.08, 0.16)


class RoundSuspended(RuntimeError):
    """A human-translation round timed out; the run can be resumed later and
    will reproduce the same selection and wait on the same session."""


@dataclass(frozen=True)
class RunConfig:
    strategy: str = "abe-nbest"
    acquisition: AcquisitionConfig = AcquisitionConfig()
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    seed: int = 0
    embed_dim: int = 256
    add_k: float = DEFAULT_ADD_K
    interpolation: float = DEFAULT_INTERPOLATION
    frontier_bins: int = 16
    workers: int = 1
    mode: str = "simulated"  # "simulated" | "human-service"

    def to_json(self) -> dict:
        d = {
            "strategy": self.strategy,
            "fractions": list(self.fractions),
            "seed": self.seed,
            "embed_dim": self.embed_dim,
            "add_k": self.add_k,
            "interpolation": self.interpolation,
            "frontier_bins": self.frontier_bins,
            "workers": self.workers,
            "mode": self.mode,
            "acquisition": {
                "variant": self.acquisition.variant,
                "n": self.acquisition.n,
                "alpha": dict(self.acquisition.alpha),
                "beam_width": self.acquisition.beam_width,
                "max_len": self.acquisition.max_len,
                "k_mult": self.acquisition.k_mult,
                "seed": self.acquisition.seed,
                "factorized": self.acquisition.factorized,
            },
        }
        return d

    @classmethod
    def from_json(cls, d: dict) -> "RunConfig":
        acq = d.get("acquisition", {})
        return cls(
            strategy=d.get("strategy", "abe-nbest"),
            acquisition=AcquisitionConfig(
                variant=acq.get("variant", "n_best"),
                n=acq.get("n", 10),
                alpha=acq.get("alpha"),
                beam_width=acq.get("beam_width", 32),
                max_len=acq.get("max_len", 16),
                k_mult=acq.get("k_mult", 2),
                seed=acq.get("seed", 0),
                factorized=acq.get("factorized", True),
            ),
            fractions=tuple(d.get("fractions", DEFAULT_FRACTIONS)),
            seed=d.get("seed", 0),
            embed_dim=d.get("embed_dim", 256),
            add_k=d.get("add_k", DEFAULT_ADD_K),
            interpolation=d.get("interpolation", DEFAULT_INTERPOLATION),
            frontier_bins=d.get("frontier_bins", 16),
            workers=d.get("workers", 1),
            mode=d.get("mode", "simulated"),
        )


HtProvider = Callable[[int, Sequence[Example]], list[Example]]


class SimulatedHt:
    """Simulated annotators: sample each selected utterance's translation
    from the world's human distribution on a per-round derived stream."""

    def __init__(self, oracles: Oracles, run_seed: int):
        self.oracles = oracles
        self.run_seed = run_seed

    def __call__(self, q: int, chosen: Sequence[Example]) -> list[Example]:
        rng = np.random.default_rng(stable_seed(self.run_seed, "ht", q))
        return [simulated_ht(self.oracles, ex, rng) for ex in chosen]


def _embed_all(
    examples: Sequence[Example], dim: int, workers: int
) -> dict[str, FeatureVector]:
    if workers <= 1 or len(examples) < 64:
        return {ex.utterance.id: hash_embed(ex.utterance.tokens, dim) for ex in examples}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        vecs = list(pool.map(lambda ex: hash_embed(ex.utterance.tokens, dim), examples))
    return {ex.utterance.id: v for ex, v in zip(examples, vecs)}


def _distillation_pairs(
    bundle: DatasetBundle, state: RoundState
) -> list[tuple[Example, Example]]:
    src = bundle.source_by_id()
    mt = bundle.mt_by_id()
    pairs = [(ex, mt[bundle.alignment[ex.utterance.id]]) for ex in bundle.d_source]
    for sid, ht_ex in zip(state.selected_ids, bundle.d_ht):
        pairs.append((src[sid], ht_ex))
    return pairs


def build_round_models(
    bundle: DatasetBundle,
    state: RoundState,
    cfg: RunConfig,
    oracles: Oracles,
    embeddings: dict[str, FeatureVector],
    round_budget: int,
    cumulative_budget: int,
) -> RoundModels:
    """Re-estimate everything selection needs from the current training data."""
    q = state.round_index + 1
    training = merge_training_set(bundle)
    parser = train_parser(training, add_k=cfg.add_k, interpolation=cfg.interpolation)
    translation = distill_translation_model(
        _distillation_pairs(bundle, state),
        add_k=cfg.add_k,
        interpolation=cfg.interpolation,
        factorized=cfg.acquisition.factorized,
    )
    kde = fit_kde(
        [embeddings[ex.utterance.id] for ex in bundle.d_source],
        seed=stable_seed(cfg.seed, "kde", q),
    )
    fixed = [embeddings[sid] for sid in state.selected_ids]
    pool_points = [(sid, embeddings[sid]) for sid in state.remaining_pool]
    clusters = incremental_kmeans(
        pool_points,
        fixed_centers=fixed,
        k_total=min(
            cfg.acquisition.k_mult * cumulative_budget, len(pool_points) + len(fixed)
        ),
        seed=stable_seed(cfg.seed, "kmeans", q),
    )

    translations_by_lf: dict[int, list] = {}
    for ex in list(bundle.d_mt) + list(bundle.d_ht):
        translations_by_lf.setdefault(ex.lf.template_id, []).append(ex.utterance)
    lf_counts: dict[int, int] = {}
    for ex in training:
        lf_counts[ex.lf.template_id] = lf_counts.get(ex.lf.template_id, 0) + 1

    source_lm_by_lf = None
    if cfg.strategy == "lcs-bw":
        corpora: dict[int, list] = {}
        for ex in bundle.d_source:
            corpora.setdefault(ex.lf.template_id, []).append(ex.utterance.tokens)
        source_lm_by_lf = {
            tid: train_lm(c, add_k=cfg.add_k, interpolation=cfg.interpolation)
            for tid, c in sorted(corpora.items())
        }

    return RoundModels(
        parser=parser,
        translation=translation,
        kde=kde,
        clusters=clusters,
        embeddings=embeddings,
        translations_by_lf=translations_by_lf,
        bt=oracles.bt,
        mt=oracles.mt,
        round_budget=round_budget,
        rng=np.random.default_rng(stable_seed(cfg.seed, "round", q)),
        lf_counts=lf_counts,
        source_lm_by_lf=source_lm_by_lf,
    )


def _round_metrics(
    bundle: DatasetBundle,
    oracles: Oracles,
    cfg: RunConfig,
    embeddings_target: dict[str, FeatureVector],
    q: int,
    cumulative: int,
    bt_examples: Sequence[Example],
) -> dict[str, float]:
    parser = train_parser(
        merge_training_set(bundle), add_k=cfg.add_k, interpolation=cfg.interpolation
    )
    acc_t = evaluate_accuracy(parser, bundle.test_target)
    acc_s = evaluate_accuracy(parser, bundle.test_source)

    train_target = list(bundle.d_mt) + list(bundle.d_ht)
    train_tokens = [ex.utterance.tokens for ex in train_target]
    test_tokens = [ex.utterance.tokens for ex in bundle.test_target]
    js = js_divergence(ngram_distribution(train_tokens), ngram_distribution(test_tokens))
    flat = [t for sent in train_tokens for t in sent]
    lexical = mtld(flat)
    p_feats = [embeddings_target[ex.utterance.id] for ex in train_target]
    q_feats = [embeddings_target[ex.utterance.id] for ex in bundle.test_target]
    distinct = len({f.values.tobytes() for f in p_feats + q_feats})
    n_bins = min(cfg.frontier_bins, len(p_feats), len(q_feats), distinct)
    frontier = divergence_frontier(
        p_feats,
        q_feats,
        n_bins=n_bins,
        seed=stable_seed(cfg.seed, "frontier", q),
    )
    discrepancy = bt_discrepancy_rate(bt_examples, oracles)
    return {
        "round": float(q),
        "accuracy_target": acc_t,
        "accuracy_source": acc_s,
        "js": js,
        "mtld": lexical,
        "frontier": frontier,
        "bt_discrepancy": discrepancy,
        "cumulative_budget": float(cumulative),
    }


def _append_metrics_row(run_dir: str, row: dict[str, float]) -> None:
    path = os.path.join(run_dir, "metrics.csv")
    new = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(METRIC_COLUMNS)
        writer.writerow(
            [
                int(row[c]) if c in ("round", "cumulative_budget") else repr(float(row[c]))
                for c in METRIC_COLUMNS
            ]
        )


def run_round(
    state: RoundState,
    bundle: DatasetBundle,
    schedule: BudgetSchedule,
    cfg: RunConfig,
    oracles: Oracles,
    ht_provider: HtProvider,
    run_dir: str,
    embeddings: dict[str, FeatureVector],
    embeddings_target: dict[str, FeatureVector],
    k_override: int | None = None,
) -> tuple[RoundState, DatasetBundle]:
    """One selection round: score, select, translate, retrain, evaluate.

    ``k_override`` replaces the schedule's batch size; 0 makes the round a
    no-op that leaves state, data, and metrics untouched.
    """
    q = state.round_index + 1
    cumulative, k_q = budget_for_round(schedule, q)
    if k_override is not None:
        cumulative, k_q = cumulative - k_q + k_override, k_override
    if k_q == 0:
        return state, bundle
    for sub in ("scores", "ht", "checkpoints"):
        os.makedirs(os.path.join(run_dir, sub), exist_ok=True)
    models = build_round_models(
        bundle, state, cfg, oracles, embeddings, k_q, cumulative
    )
    src_by_id = bundle.source_by_id()
    pool_examples = [src_by_id[sid] for sid in state.remaining_pool]
    scores = score_pool(cfg.strategy, pool_examples, models, cfg.acquisition)
    chosen_ids = topk_select(scores.aggregate, k_q, state.remaining_pool)
    write_scores_csv(
        os.path.join(run_dir, "scores", f"round_{q}.csv"), scores, chosen_ids
    )

    chosen = [src_by_id[sid] for sid in chosen_ids]
    new_ht = ht_provider(q, chosen)
    if len(new_ht) != len(chosen):
        raise RuntimeError(
            f"round {q}: got {len(new_ht)} translations for {len(chosen)} utterances"
        )
    write_examples_jsonl(os.path.join(run_dir, "ht", f"round_{q}.jsonl"), new_ht)

    new_bundle = bundle.with_new_ht(new_ht)
    remaining = tuple(sid for sid in state.remaining_pool if sid not in set(chosen_ids))
    # embeddings for new target-side sentences feed the frontier metric
    for ex in new_ht:
        embeddings_target[ex.utterance.id] = hash_embed(
            ex.utterance.tokens, cfg.embed_dim
        )
    row = _round_metrics(
        new_bundle, oracles, cfg, embeddings_target, q, cumulative, chosen
    )
    new_state = RoundState(
        round_index=q,
        selected_ids=state.selected_ids + tuple(chosen_ids),
        remaining_pool=remaining,
        metrics=row,
        rng_seed=cfg.seed,
    )
    _append_metrics_row(run_dir, row)
    checkpoint_save(
        new_state, new_bundle, os.path.join(run_dir, "checkpoints", f"round_{q}.json")
    )
    return new_state, new_bundle


def _prepare_run_dir(run_dir: str, cfg: RunConfig) -> None:
    for sub in ("scores", "ht", "checkpoints"):
        os.makedirs(os.path.join(run_dir, sub), exist_ok=True)
    with open(os.path.join(run_dir, "run_config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.to_json(), fh, indent=2, sort_keys=True)


def run_hat(
    bundle: DatasetBundle,
    schedule: BudgetSchedule,
    cfg: RunConfig,
    oracles: Oracles,
    run_dir: str,
    ht_provider: HtProvider | None = None,
    start_state: RoundState | None = None,
    start_bundle: DatasetBundle | None = None,
) -> list[RoundState]:
    """Run the full procedure: initial training and evaluation on the
    source + MT data, then Q selection rounds. Returns one state per round,
    index 0 being the MT-only baseline."""
    t0 = time.time()
    _prepare_run_dir(run_dir, cfg)
    if ht_provider is None:
        ht_provider = SimulatedHt(oracles, cfg.seed)
    if start_state is not None and start_bundle is not None:
        bundle = start_bundle

    embeddings = _embed_all(bundle.d_source, cfg.embed_dim, cfg.workers)
    embeddings_target = _embed_all(
        list(bundle.d_mt) + list(bundle.d_ht) + list(bundle.test_target),
        cfg.embed_dim,
        cfg.workers,
    )

    history: list[RoundState] = []
    if start_state is not None:
        state = start_state
        history.append(state)
    else:
        row = _round_metrics(
            bundle, oracles, cfg, embeddings_target, 0, 0, list(bundle.d_source)
        )
        state = RoundState(
            round_index=0,
            selected_ids=(),
            remaining_pool=tuple(ex.utterance.id for ex in bundle.d_source),
            metrics=row,
            rng_seed=cfg.seed,
        )
        _append_metrics_row(run_dir, row)
        checkpoint_save(
            state, bundle, os.path.join(run_dir, "checkpoints", "round_0.json")
        )
        history.append(state)

    for q in range(state.round_index + 1, schedule.num_rounds + 1):
        state, bundle = run_round(
            state,
            bundle,
            schedule,
            cfg,
            oracles,
            ht_provider,
            run_dir,
            embeddings,
            embeddings_target,
        )
        history.append(state)
        log.info(
            "round %d: accuracy_target=%.4f (budget %d) [%.1fs]",
            q,
            state.metrics["accuracy_target"],
            int(state.metrics["cumulative_budget"]),
            time.time() - t0,
        )
    return history


def resume_run(
    run_dir: str,
    schedule: BudgetSchedule,
    cfg: RunConfig,
    oracles: Oracles,
    ht_provider: HtProvider | None = None,
) -> list[RoundState]:
    """Continue a run from its latest checkpoint."""
    ckpt_dir = os.path.join(run_dir, "checkpoints")
    rounds = sorted(
        int(f[len("round_") : -len(".json")])
        for f in os.listdir(ckpt_dir)
        if f.startswith("round_") and f.endswith(".json")
    )
    if not rounds:
        raise FileNotFoundError(f"no checkpoints under {ckpt_dir}")
    state, bundle = checkpoint_load(
        os.path.join(ckpt_dir, f"round_{rounds[-1]}.json")
    )
    return run_hat(
        bundle,
        schedule,
        cfg,
        oracles,
        run_dir,
        ht_provider=ht_provider,
        start_state=state,
        start_bundle=bundle,
    )
