"""Synthetic bilingual world with known ground truth.

Every logical form owns a bank of source paraphrases and a bank of target
paraphrases built from pseudo-words. Translation oracles are defined on top:

- ``mt``  one fixed machine translation per source utterance, drawn once at
  world generation from a per-LF distribution whose entropy collapses as the
  bias knob rises; with probability ``error`` the draw comes from a uniformly
  random *other* LF's bank (a mistranslation).
- ``ht``  samples a correct-LF target paraphrase from a spread, human-like
  distribution.
- ``bt``  deterministic back-translation: inverse-lexicon token mapping with
  an independent error knob; unknown tokens degrade to UNK.

The exact per-LF distributions are retained, so mixture entropies and KL
divergences can be computed in closed form and used as oracles for the
estimates the selection engine produces.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DatasetBundle, Example, LogicalForm, Origin, Utterance
from .textmodel import UNK

__all__ = [
    "WorldConfig",
    "LfBank",
    "Oracles",
    "generate_world",
    "true_conditional_entropy",
    "kl_to_component",
    "back_translate",
    "simulated_ht",
    "oracle_full_ht_dataset",
]

log = logging.getLogger(__name__)

MAX_PARAPHRASES = 12  # bounded by the function-word pool cycle
HT_SUPPORT_FLOOR = 1e-6

_SYLLABLES = (
    "ba", "de", "ki", "lo", "mu", "na", "po", "ra", "su", "ta",
    "vi", "zo", "fe", "gu", "he", "ja", "ce", "we", "xi", "yo",
)


def _pseudo_word(*key: object, length: int = 4) -> str:
    digest = hashlib.md5("|".join(map(str, key)).encode("utf-8")).digest()
    return "".join(_SYLLABLES[b % len(_SYLLABLES)] for b in digest[:length])


_SOURCE_FW = ("the", "of", "in", "to", "for", "with", "at", "on", "by", "from", "as", "into")
_TARGET_FW = ("der", "von", "im", "zu", "fur", "mit", "an", "auf", "bei", "aus", "als", "nach")


@dataclass(frozen=True)
class WorldConfig:
    n_lfs: int = 60
    paraphrases_per_lf_source: int = 10
    paraphrases_per_lf_target: int = 6
    bias: float = 0.95
    error: float = 0.15
    error_bt: float = 0.0
    ht_temperature: float = 2.0
    pool_size: int = 600
    test_size_source: int = 200
    test_size_target: int = 200
    seed: int = 0
    source_language: str = "src"
    target_language: str = "tgt"

    def __post_init__(self) -> None:
        if self.n_lfs < 2:
            raise ValueError("need at least two LFs (the error mechanism swaps LFs)")
        for name in ("paraphrases_per_lf_source", "paraphrases_per_lf_target"):
            v = getattr(self, name)
            if not 1 <= v <= MAX_PARAPHRASES:
                raise ValueError(f"{name}={v} outside [1, {MAX_PARAPHRASES}]")
        for name in ("bias", "error", "error_bt"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.ht_temperature < 0:
            raise ValueError("ht_temperature must be non-negative")
        if min(self.pool_size, self.test_size_source, self.test_size_target) < 1:
            raise ValueError("pool and test sizes must be positive")


@dataclass(frozen=True)
class LfBank:
    """One logical form with its paraphrase banks and exact distributions."""

    lf: LogicalForm
    source_sentences: tuple[tuple[str, ...], ...]
    target_sentences: tuple[tuple[str, ...], ...]
    p_ht: np.ndarray  # over target_sentences, full support (floored)
    p_mt: np.ndarray  # over target_sentences, entropy-collapsed


def _softmax_bank(n: int, decay: float) -> np.ndarray:
    """Weights exp(-j * decay) over bank indices, normalized. decay=inf is
    one-hot on the first (canonical) item, decay=0 is uniform."""
    if math.isinf(decay):
        out = np.zeros(n)
        out[0] = 1.0
        return out
    w = np.exp(-decay * np.arange(n, dtype=np.float64))
    return w / w.sum()


def _mt_distribution(n: int, bias: float) -> np.ndarray:
    """Softmax over the bank at temperature (1 - bias), anchored at the
    *last* bank item: machine output collapses onto a phrasing humans rarely
    use, which is what makes its lexical distribution drift from the human
    test distribution."""
    if bias >= 1.0:
        return _softmax_bank(n, math.inf)[::-1].copy()
    return _softmax_bank(n, bias / (1.0 - bias))[::-1].copy()


def _ht_distribution(n: int, temperature: float) -> np.ndarray:
    if temperature == 0:
        base = _softmax_bank(n, math.inf)
    else:
        base = _softmax_bank(n, 1.0 / temperature)
    # guarantee full support over the bank for KL computations
    return (1.0 - HT_SUPPORT_FLOOR) * base + HT_SUPPORT_FLOOR / n


def _build_banks(cfg: WorldConfig) -> list[LfBank]:
    banks = []
    used: set[str] = set()

    def fresh_word(*key: object) -> str:
        word = _pseudo_word(cfg.seed, *key)
        salt = 0
        while word in used:
            salt += 1
            word = _pseudo_word(cfg.seed, *key, salt)
        used.add(word)
        return word

    for i in range(cfg.n_lfs):
        canonical = f"answer_{i:04d} ( topic_{i:04d} )"
        lf = LogicalForm(canonical=canonical, template_id=i)
        key_a, key_b = fresh_word("skey", i, 0), fresh_word("skey", i, 1)
        src = []
        # source paraphrases differ in the leading variant token only, so
        # utterances sharing an LF sit close together in feature space and a
        # selected utterance's frozen cluster center absorbs its siblings
        fw1 = _SOURCE_FW[i % len(_SOURCE_FW)]
        fw2 = _SOURCE_FW[(i + 5) % len(_SOURCE_FW)]
        for j in range(cfg.paraphrases_per_lf_source):
            variant = fresh_word("svar", i, j)
            src.append((variant, fw1, key_a, key_b, fw2))
        tgt = []
        for j in range(cfg.paraphrases_per_lf_target):
            w0 = fresh_word("tvar", i, j, 0)
            w1 = fresh_word("tvar", i, j, 1)
            w2 = fresh_word("tvar", i, j, 2)
            fw1 = _TARGET_FW[(i + j) % len(_TARGET_FW)]
            fw2 = _TARGET_FW[(i + 5 * j + 3) % len(_TARGET_FW)]
            tgt.append((w0, fw1, w1, fw2, w2))
        banks.append(
            LfBank(
                lf=lf,
                source_sentences=tuple(src),
                target_sentences=tuple(tgt),
                p_ht=_ht_distribution(cfg.paraphrases_per_lf_target, cfg.ht_temperature),
                p_mt=_mt_distribution(cfg.paraphrases_per_lf_target, cfg.bias),
            )
        )
    return banks


@dataclass
class Oracles:
    """Deterministic translation oracles plus exact ground-truth tables."""

    config: WorldConfig
    banks: list[LfBank]
    mt_by_source: dict[str, Example]
    _target_index: dict[tuple[str, ...], tuple[int, int]] = field(default_factory=dict)
    _source_index: dict[tuple[str, ...], tuple[int, int]] = field(default_factory=dict)
    _token_owner: dict[str, int] = field(default_factory=dict)
    _inverse_lexicon: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for bank in self.banks:
            i = bank.lf.template_id
            for j, sent in enumerate(bank.target_sentences):
                self._target_index[sent] = (i, j)
                # content tokens map back to a source-side rendering of the
                # same LF; function words map positionally
                self._inverse_lexicon[sent[0]] = bank.source_sentences[
                    j % len(bank.source_sentences)
                ][0]
                self._inverse_lexicon[sent[2]] = bank.source_sentences[0][2]
                self._inverse_lexicon[sent[4]] = bank.source_sentences[0][3]
                for tok in sent:
                    self._token_owner.setdefault(tok, i)
            for j, sent in enumerate(bank.source_sentences):
                self._source_index[sent] = (i, j)
                for tok in (sent[0], sent[2], sent[3]):
                    self._token_owner.setdefault(tok, i)
        for fs, ft in zip(_SOURCE_FW, _TARGET_FW):
            self._inverse_lexicon[ft] = fs

    # -- forward machine translation (fixed at world generation) --

    def mt(self, source_utterance: Utterance) -> Utterance:
        try:
            return self.mt_by_source[source_utterance.id].utterance
        except KeyError:
            raise KeyError(f"no machine translation for {source_utterance.id!r}")

    # -- back-translation --

    def bt(self, target_utterance: Utterance) -> Utterance:
        return back_translate(self, target_utterance)

    def realized_target_lf(self, tokens: Sequence[str]) -> int | None:
        hit = self._target_index.get(tuple(tokens))
        return hit[0] if hit else None

    def realized_source_lf(self, tokens: Sequence[str]) -> int | None:
        """LF whose source bank the tokens realize: exact bank match first,
        then a majority vote over content-token ownership."""
        hit = self._source_index.get(tuple(tokens))
        if hit:
            return hit[0]
        votes: dict[int, int] = {}
        for tok in tokens:
            owner = self._token_owner.get(tok)
            if owner is not None:
                votes[owner] = votes.get(owner, 0) + 1
        if not votes:
            return None
        best = max(votes.values())
        winners = sorted(t for t, v in votes.items() if v == best)
        return winners[0]

    def bank(self, template_id: int) -> LfBank:
        return self.banks[template_id]

    def ht(self, source_example: Example, rng: np.random.Generator) -> Example:
        return simulated_ht(self, source_example, rng)


def generate_world(cfg: WorldConfig) -> tuple[DatasetBundle, Oracles]:
    """Build the full world: source pool, its machine translations, and the
    two human-like test sets. Reproducible bit-for-bit from the seed.

    RNG draw order: per source example ascending (error coin, wrong-LF pick
    when erroneous, MT paraphrase pick), then source test draws, then target
    test draws.
    """
    banks = _build_banks(cfg)
    rng = np.random.default_rng(cfg.seed)
    slang, tlang = cfg.source_language, cfg.target_language

    d_source: list[Example] = []
    d_mt: list[Example] = []
    alignment: dict[str, str] = {}
    mt_by_source: dict[str, Example] = {}
    for k in range(cfg.pool_size):
        i = k % cfg.n_lfs
        bank = banks[i]
        j = (k // cfg.n_lfs) % cfg.paraphrases_per_lf_source
        tokens = bank.source_sentences[j]
        src = Example(
            utterance=Utterance(
                id=f"s{k:05d}", language=slang, raw=" ".join(tokens), tokens=tokens
            ),
            lf=bank.lf,
            origin=Origin.SOURCE,
        )
        d_source.append(src)

        erroneous = rng.random() < cfg.error
        if erroneous:
            other = int(rng.integers(cfg.n_lfs - 1))
            realized = banks[other if other < i else other + 1]
        else:
            realized = bank
        mt_j = int(rng.choice(len(realized.p_mt), p=realized.p_mt))
        mt_tokens = realized.target_sentences[mt_j]
        mt_ex = Example(
            utterance=Utterance(
                id=f"s{k:05d}__mt",
                language=tlang,
                raw=" ".join(mt_tokens),
                tokens=mt_tokens,
            ),
            lf=bank.lf,  # the pair keeps the source label even when mistranslated
            origin=Origin.MACHINE_TRANSLATED,
        )
        d_mt.append(mt_ex)
        alignment[src.utterance.id] = mt_ex.utterance.id
        mt_by_source[src.utterance.id] = mt_ex

    test_source: list[Example] = []
    for k in range(cfg.test_size_source):
        i = k % cfg.n_lfs
        bank = banks[i]
        j = int(rng.integers(cfg.paraphrases_per_lf_source))
        tokens = bank.source_sentences[j]
        test_source.append(
            Example(
                utterance=Utterance(
                    id=f"ts{k:05d}", language=slang, raw=" ".join(tokens), tokens=tokens
                ),
                lf=bank.lf,
                origin=Origin.SOURCE,
            )
        )

    test_target: list[Example] = []
    for k in range(cfg.test_size_target):
        i = k % cfg.n_lfs
        bank = banks[i]
        j = int(rng.choice(len(bank.p_ht), p=bank.p_ht))
        tokens = bank.target_sentences[j]
        test_target.append(
            Example(
                utterance=Utterance(
                    id=f"tt{k:05d}", language=tlang, raw=" ".join(tokens), tokens=tokens
                ),
                lf=bank.lf,
                origin=Origin.HUMAN_TRANSLATED,
            )
        )

    bundle = DatasetBundle(
        d_source=tuple(d_source),
        d_mt=tuple(d_mt),
        d_ht=(),
        test_source=tuple(test_source),
        test_target=tuple(test_target),
        alignment=alignment,
    )
    return bundle, Oracles(config=cfg, banks=banks, mt_by_source=mt_by_source)


def true_conditional_entropy(oracles: Oracles, template_id: int, lam: float) -> float:
    """Exact entropy (nats) of lam * P_ht + (1 - lam) * P_mt for one LF."""
    bank = oracles.bank(template_id)
    p = lam * bank.p_ht + (1.0 - lam) * bank.p_mt
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def kl_to_component(oracles: Oracles, template_id: int, lam: float) -> float:
    """Exact KL( lam*P_ht + (1-lam)*P_mt || P_ht ) in nats."""
    bank = oracles.bank(template_id)
    p = lam * bank.p_ht + (1.0 - lam) * bank.p_mt
    if np.any((p > 0) & (bank.p_ht <= 0)):
        raise ValueError("mixture not absolutely continuous w.r.t. the HT side")
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / bank.p_ht[mask])).sum())


def back_translate(oracles: Oracles, target_utterance: Utterance) -> Utterance:
    """Deterministic back-translation of a target-side utterance.

    A recognized bank sentence realizes the correct LF's source phrasing with
    probability 1 - error_bt (the coin is a pure function of the sentence and
    the world seed, so repeated calls agree); otherwise, and for arbitrary
    token sequences, tokens map through the inverse lexicon with UNK for
    anything untranslatable.
    """
    cfg = oracles.config
    tokens = tuple(target_utterance.tokens)
    hit = oracles._target_index.get(tokens)
    if hit is not None and cfg.error_bt > 0:
        digest = hashlib.md5(
            f"{cfg.seed}|bt|{' '.join(tokens)}".encode("utf-8")
        ).digest()
        coin = int.from_bytes(digest[:8], "little") / 2**64
        if coin < cfg.error_bt:
            lf_i = hit[0]
            other = int.from_bytes(digest[8:16], "little") % (cfg.n_lfs - 1)
            wrong = other if other < lf_i else other + 1
            out = oracles.bank(wrong).source_sentences[0]
            return Utterance(
                id=f"bt_{target_utterance.id}",
                language=cfg.source_language,
                raw=" ".join(out),
                tokens=out,
            )
    mapped = []
    for tok in tokens:
        out_tok = oracles._inverse_lexicon.get(tok)
        if out_tok is None:
            log.debug("untranslatable token %r -> UNK", tok)
            out_tok = UNK
        mapped.append(out_tok)
    return Utterance(
        id=f"bt_{target_utterance.id}",
        language=cfg.source_language,
        raw=" ".join(mapped),
        tokens=tuple(mapped),
    )


def simulated_ht(
    oracles: Oracles, source_example: Example, rng: np.random.Generator
) -> Example:
    """Sample a human translation (always the correct LF) from P_ht."""
    cfg = oracles.config
    bank = oracles.bank(source_example.lf.template_id)
    j = int(rng.choice(len(bank.p_ht), p=bank.p_ht))
    tokens = bank.target_sentences[j]
    return Example(
        utterance=Utterance(
            id=f"{source_example.utterance.id}__ht",
            language=cfg.target_language,
            raw=" ".join(tokens),
            tokens=tokens,
        ),
        lf=source_example.lf,
        origin=Origin.HUMAN_TRANSLATED,
    )


def oracle_full_ht_dataset(
    oracles: Oracles, bundle: DatasetBundle, rng: np.random.Generator
) -> list[Example]:
    """Human translations of the entire source pool (the oracle training
    set used by bias-direction checks)."""
    return [simulated_ht(oracles, ex, rng) for ex in bundle.d_source]
