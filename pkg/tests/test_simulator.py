import math

import numpy as np
import pytest

from hat.core import Origin
from hat.simulator import (
    LfBank,
    Oracles,
    WorldConfig,
    back_translate,
    generate_world,
    kl_to_component,
    oracle_full_ht_dataset,
    simulated_ht,
    true_conditional_entropy,
)
from hat.core import LogicalForm, Utterance


def tiny_cfg(**kw):
    defaults = dict(
        n_lfs=4,
        paraphrases_per_lf_source=3,
        paraphrases_per_lf_target=4,
        pool_size=24,
        test_size_source=8,
        test_size_target=8,
        seed=0,
    )
    defaults.update(kw)
    return WorldConfig(**defaults)


def custom_oracles(p_ht, p_mt, n_lfs=2, seed=0):
    """Oracles with hand-specified ground-truth tables for LF 0."""
    cfg = tiny_cfg(n_lfs=n_lfs, paraphrases_per_lf_target=len(p_ht), seed=seed)
    bundle, oracles = generate_world(cfg)
    bank0 = oracles.banks[0]
    oracles.banks[0] = LfBank(
        lf=bank0.lf,
        source_sentences=bank0.source_sentences,
        target_sentences=bank0.target_sentences,
        p_ht=np.array(p_ht, dtype=float),
        p_mt=np.array(p_mt, dtype=float),
    )
    return oracles


class TestGenerateWorld:
    def test_degenerate_knobs_one_hot_and_correct(self):
        bundle, oracles = generate_world(tiny_cfg(bias=1.0, error=0.0))
        for bank in oracles.banks:
            assert bank.p_mt.max() == 1.0 and (bank.p_mt > 0).sum() == 1
        for src, mt in zip(bundle.d_source, bundle.d_mt):
            realized = oracles.realized_target_lf(mt.utterance.tokens)
            assert realized == src.lf.template_id

    def test_full_error_always_wrong(self):
        bundle, oracles = generate_world(tiny_cfg(error=1.0))
        for src, mt in zip(bundle.d_source, bundle.d_mt):
            realized = oracles.realized_target_lf(mt.utterance.tokens)
            assert realized is not None and realized != src.lf.template_id

    def test_same_seed_bit_identical(self):
        b1, _ = generate_world(tiny_cfg(seed=9))
        b2, _ = generate_world(tiny_cfg(seed=9))
        assert b1 == b2

    def test_different_seed_differs(self):
        b1, _ = generate_world(tiny_cfg(seed=1))
        b2, _ = generate_world(tiny_cfg(seed=2))
        assert b1 != b2

    def test_partition_sizes_and_alignment(self):
        cfg = tiny_cfg()
        bundle, _ = generate_world(cfg)
        assert len(bundle.d_source) == cfg.pool_size == len(bundle.d_mt)
        assert len(bundle.test_source) == cfg.test_size_source
        assert len(bundle.test_target) == cfg.test_size_target
        for src in bundle.d_source:
            assert bundle.alignment[src.utterance.id] == f"{src.utterance.id}__mt"
        all_ids = [ex.utterance.id for part in (bundle.d_source, bundle.d_mt, bundle.test_source, bundle.test_target) for ex in part]
        assert len(all_ids) == len(set(all_ids))

    def test_infeasible_counts_rejected(self):
        with pytest.raises(ValueError):
            tiny_cfg(n_lfs=1)
        with pytest.raises(ValueError):
            tiny_cfg(paraphrases_per_lf_target=40)
        with pytest.raises(ValueError):
            tiny_cfg(bias=1.5)


class TestTrueEntropy:
    def test_mt_one_hot_zero_entropy(self):
        oracles = custom_oracles(p_ht=[0.25] * 4, p_mt=[1.0, 0.0, 0.0, 0.0])
        assert true_conditional_entropy(oracles, 0, 0.0) == 0.0

    def test_uniform_ht_is_log4(self):
        oracles = custom_oracles(p_ht=[0.25] * 4, p_mt=[1.0, 0.0, 0.0, 0.0])
        assert math.isclose(true_conditional_entropy(oracles, 0, 1.0), math.log(4), rel_tol=1e-12)

    def test_half_mixture_hand_value(self):
        # 0.5*one-hot + 0.5*uniform4 = (0.625,0.125,0.125,0.125) -> 1.07354
        oracles = custom_oracles(p_ht=[0.25] * 4, p_mt=[1.0, 0.0, 0.0, 0.0])
        assert math.isclose(true_conditional_entropy(oracles, 0, 0.5), 1.07354, abs_tol=1e-5)

    def test_endpoints_equal_component_entropies(self):
        oracles = custom_oracles(p_ht=[0.7, 0.2, 0.1], p_mt=[0.5, 0.5, 0.0])
        h_ht = -sum(p * math.log(p) for p in (0.7, 0.2, 0.1))
        h_mt = -sum(p * math.log(p) for p in (0.5, 0.5))
        assert math.isclose(true_conditional_entropy(oracles, 0, 1.0), h_ht, rel_tol=1e-12)
        assert math.isclose(true_conditional_entropy(oracles, 0, 0.0), h_mt, rel_tol=1e-12)


class TestKlToComponent:
    def test_lambda_one_zero_kl(self):
        oracles = custom_oracles(p_ht=[0.5, 0.5], p_mt=[1.0, 0.0])
        assert kl_to_component(oracles, 0, 1.0) == 0.0

    def test_lambda_zero_hand_value(self):
        oracles = custom_oracles(p_ht=[0.5, 0.5], p_mt=[1.0, 0.0])
        assert math.isclose(kl_to_component(oracles, 0, 0.0), math.log(2), rel_tol=1e-12)

    def test_half_hand_value(self):
        # mixture (0.75, 0.25) vs (0.5, 0.5): KL = 0.13081
        oracles = custom_oracles(p_ht=[0.5, 0.5], p_mt=[1.0, 0.0])
        assert math.isclose(kl_to_component(oracles, 0, 0.5), 0.13081, abs_tol=1e-5)

    def test_support_violation_rejected(self):
        oracles = custom_oracles(p_ht=[1.0, 0.0], p_mt=[0.0, 1.0])
        with pytest.raises(ValueError):
            kl_to_component(oracles, 0, 0.0)

    def test_lemma_monotone_over_lambda_grid(self):
        # KL(lam*P_ht + (1-lam)*P_mt || P_ht) never increases in lam
        rng = np.random.default_rng(0)
        grid = [i / 10 for i in range(11)]
        for trial in range(100):
            n = int(rng.integers(2, 8))
            p_ht = rng.dirichlet(np.ones(n)) + 1e-6
            p_ht /= p_ht.sum()
            p_mt = rng.dirichlet(np.ones(n))
            oracles = custom_oracles(p_ht=list(p_ht), p_mt=list(p_mt), seed=trial % 3)
            vals = [kl_to_component(oracles, 0, lam) for lam in grid]
            for a, b in zip(vals, vals[1:]):
                assert b <= a + 1e-12


class TestBackTranslate:
    def test_zero_bt_error_round_trip_keeps_lf(self):
        bundle, oracles = generate_world(tiny_cfg(error=0.0, error_bt=0.0))
        for src, mt in zip(bundle.d_source, bundle.d_mt):
            back = back_translate(oracles, mt.utterance)
            assert oracles.realized_source_lf(back.tokens) == src.lf.template_id

    def test_full_bt_error_always_wrong(self):
        bundle, oracles = generate_world(tiny_cfg(error=0.0, error_bt=1.0))
        for src, mt in zip(bundle.d_source, bundle.d_mt):
            back = back_translate(oracles, mt.utterance)
            assert oracles.realized_source_lf(back.tokens) != src.lf.template_id

    def test_deterministic_for_fixed_input(self):
        bundle, oracles = generate_world(tiny_cfg(error_bt=0.5))
        mt = bundle.d_mt[0].utterance
        first = back_translate(oracles, mt)
        for _ in range(5):
            assert back_translate(oracles, mt).tokens == first.tokens

    def test_unknown_tokens_become_unk(self):
        from hat.textmodel import UNK

        _, oracles = generate_world(tiny_cfg())
        weird = Utterance("w", "tgt", "zzz qqq", ("zzz", "qqq"))
        back = back_translate(oracles, weird)
        assert back.tokens == (UNK, UNK)


class TestSimulatedHt:
    def test_temperature_zero_is_canonical(self):
        bundle, oracles = generate_world(tiny_cfg(ht_temperature=0.0))
        rng = np.random.default_rng(0)
        src = bundle.d_source[0]
        ht = simulated_ht(oracles, src, rng)
        bank = oracles.banks[src.lf.template_id]
        assert ht.utterance.tokens == bank.target_sentences[0]

    def test_spread_draws_vary(self):
        bundle, oracles = generate_world(tiny_cfg(ht_temperature=float("inf")))
        rng = np.random.default_rng(0)
        src = bundle.d_source[0]
        seen = {simulated_ht(oracles, src, rng).utterance.tokens for _ in range(30)}
        assert len(seen) >= 2

    def test_origin_and_lf(self):
        bundle, oracles = generate_world(tiny_cfg())
        ht = simulated_ht(oracles, bundle.d_source[3], np.random.default_rng(1))
        assert ht.origin is Origin.HUMAN_TRANSLATED
        assert ht.lf == bundle.d_source[3].lf
        assert ht.utterance.language == "tgt"
        realized = oracles.realized_target_lf(ht.utterance.tokens)
        assert realized == bundle.d_source[3].lf.template_id

    def test_full_ht_dataset_covers_pool(self):
        bundle, oracles = generate_world(tiny_cfg())
        full = oracle_full_ht_dataset(oracles, bundle, np.random.default_rng(0))
        assert len(full) == len(bundle.d_source)
        assert all(ex.origin is Origin.HUMAN_TRANSLATED for ex in full)


class TestBiasRealization:
    def test_high_bias_collapses_mt_diversity(self):
        biased, _ = generate_world(tiny_cfg(bias=0.98, seed=4))
        spread, _ = generate_world(tiny_cfg(bias=0.0, seed=4))

        def distinct_targets(bundle):
            return len({ex.utterance.tokens for ex in bundle.d_mt})

        assert distinct_targets(biased) < distinct_targets(spread)

    def test_mt_anchor_rarely_matches_human_preference(self):
        _, oracles = generate_world(tiny_cfg(bias=1.0))
        for bank in oracles.banks:
            assert bank.p_mt.argmax() == len(bank.p_mt) - 1
            assert bank.p_ht.argmax() == 0

    def test_ht_full_support_floor(self):
        _, oracles = generate_world(tiny_cfg(ht_temperature=0.0))
        for bank in oracles.banks:
            assert (bank.p_ht > 0).all()
            assert bank.p_ht.min() >= 1e-6 / len(bank.p_ht) * 0.99
