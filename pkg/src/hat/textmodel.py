"""Tokenizer, smoothed n-gram language models, beam N-best decoding, hashed
feature embeddings, and the distilled conditional translation model.

The language model is an add-k smoothed bigram/unigram interpolation over the
event space ``vocab + {UNK, EOS}``. It is small enough to be enumerated
exactly, which is what lets the entropy approximations in
:mod:`hat.acquisition` be checked against brute force. All log values are
natural logs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Example, FeatureVector

__all__ = [
    "DecodeError",
    "tokenize",
    "NGramLM",
    "train_lm",
    "lm_loglik",
    "BeamHypothesis",
    "beam_nbest",
    "renormalize_nbest",
    "hash_embed",
    "embed_examples",
    "ConditionalTranslationModel",
    "distill_translation_model",
]

log = logging.getLogger(__name__)

UNK = "<unk>"
EOS = "</s>"
BOS = "<s>"

DEFAULT_ADD_K = 0.1
DEFAULT_INTERPOLATION = 0.7

_TOKEN_RE = re.compile(r"[\w']+")


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase and split on whitespace/punctuation; punctuation is dropped.

    "Which rivers?" -> ("which", "rivers")
    """
    return tuple(_TOKEN_RE.findall(text.lower()))


class DecodeError(RuntimeError):
    """Raised when beam search cannot produce a complete hypothesis."""


@dataclass
class NGramLM:
    """Interpolated bigram/unigram model with add-k smoothing.

    Conditional distribution for any history h over outcomes
    vocab + {UNK, EOS}:

        P(w|h) = lam * P_bi(w|h) + (1-lam) * P_uni(w)
        P_bi(w|h) = (c(h,w) + k) / (c(h,.) + k*E)
        P_uni(w)  = (c(w) + k) / (T + k*E)

    where E = |vocab| + 2 and T counts corpus tokens only (UNK and EOS carry
    smoothing mass, no observed unigram counts). Histories are BOS, the vocab
    tokens, and UNK; each conditional sums to 1.
    """

    vocab: tuple[str, ...]
    unigram_counts: dict[str, int]
    bigram_counts: dict[tuple[str, str], int]
    add_k: float
    interpolation: float
    # dense natural-log conditional table, histories x outcomes
    _logp: np.ndarray = field(repr=False)
    _hist_index: dict[str, int] = field(repr=False)
    _out_index: dict[str, int] = field(repr=False)

    @property
    def outcomes(self) -> tuple[str, ...]:
        return self.vocab + (UNK, EOS)

    @property
    def histories(self) -> tuple[str, ...]:
        return (BOS,) + self.vocab + (UNK,)

    def history_id(self, token: str) -> int:
        return self._hist_index.get(token, self._hist_index[UNK])

    def outcome_id(self, token: str) -> int:
        return self._out_index.get(token, self._out_index[UNK])

    def cond_logprob(self, token: str, history: str) -> float:
        return float(self._logp[self.history_id(history), self.outcome_id(token)])

    def sequence_ids(self, tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """(history ids, outcome ids) for scoring ``tokens`` + EOS."""
        hist_index = self._hist_index
        out_index = self._out_index
        unk_h = hist_index[UNK]
        unk_o = out_index[UNK]
        hist = [hist_index[BOS]]
        out = []
        for t in tokens:
            out.append(out_index.get(t, unk_o))
            # a scored token becomes the next history; OOV tokens become UNK
            hist.append(hist_index.get(t, unk_h))
        out.append(out_index[EOS])
        return np.asarray(hist, dtype=np.int64), np.asarray(out, dtype=np.int64)

    def loglik(self, tokens: Sequence[str]) -> float:
        hist, out = self.sequence_ids(tokens)
        return float(self._logp[hist, out].sum())

    def batch_loglik(self, sequences: Sequence[Sequence[str]]) -> np.ndarray:
        """log P(seq, EOS) for many sequences in one vectorized pass."""
        hist_index = self._hist_index
        out_index = self._out_index
        unk_h = hist_index[UNK]
        unk_o = out_index[UNK]
        bos = hist_index[BOS]
        eos = out_index[EOS]
        hists: list[int] = []
        outs: list[int] = []
        offsets = [0]
        for seq in sequences:
            hists.append(bos)
            for t in seq:
                outs.append(out_index.get(t, unk_o))
                hists.append(hist_index.get(t, unk_h))
            outs.append(eos)
            offsets.append(len(outs))
        flat = self._logp[np.asarray(hists, dtype=np.int64), np.asarray(outs, dtype=np.int64)]
        sums = np.add.reduceat(flat, np.asarray(offsets[:-1], dtype=np.int64))
        return sums

    def dump_counts(self, path: str) -> None:
        """Debug dump of the raw count tables as JSON."""
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "vocab": list(self.vocab),
                    "add_k": self.add_k,
                    "interpolation": self.interpolation,
                    "unigram_counts": self.unigram_counts,
                    "bigram_counts": {
                        f"{h} {w}": c for (h, w), c in self.bigram_counts.items()
                    },
                },
                fh,
                indent=2,
                sort_keys=True,
            )


def train_lm(
    corpus: Iterable[Sequence[str]],
    add_k: float = DEFAULT_ADD_K,
    interpolation: float = DEFAULT_INTERPOLATION,
) -> NGramLM:
    sentences = [tuple(s) for s in corpus]
    if not sentences or all(len(s) == 0 for s in sentences):
        raise ValueError("cannot train a language model on an empty corpus")
    if add_k <= 0:
        raise ValueError("add_k must be positive")
    if not 0.0 <= interpolation <= 1.0:
        raise ValueError("interpolation weight must lie in [0, 1]")

    unigram: dict[str, int] = {}
    bigram: dict[tuple[str, str], int] = {}
    for sent in sentences:
        if not sent:
            continue
        prev = BOS
        for tok in sent:
            unigram[tok] = unigram.get(tok, 0) + 1
            bigram[(prev, tok)] = bigram.get((prev, tok), 0) + 1
            prev = tok
        bigram[(prev, EOS)] = bigram.get((prev, EOS), 0) + 1

    vocab = tuple(sorted(unigram))
    outcomes = vocab + (UNK, EOS)
    histories = (BOS,) + vocab + (UNK,)
    out_index = {t: i for i, t in enumerate(outcomes)}
    hist_index = {t: i for i, t in enumerate(histories)}

    e = len(outcomes)
    total = sum(unigram.values())
    uni = np.full(e, add_k, dtype=np.float64)
    for tok, c in unigram.items():
        uni[out_index[tok]] += c
    uni /= total + add_k * e

    bi_counts = np.zeros((len(histories), e), dtype=np.float64)
    for (h, w), c in bigram.items():
        bi_counts[hist_index[h], out_index[w]] += c
    row_totals = bi_counts.sum(axis=1, keepdims=True)
    bi = (bi_counts + add_k) / (row_totals + add_k * e)

    lam = interpolation
    logp = np.log(lam * bi + (1.0 - lam) * uni[None, :])

    return NGramLM(
        vocab=vocab,
        unigram_counts=unigram,
        bigram_counts=bigram,
        add_k=add_k,
        interpolation=interpolation,
        _logp=logp,
        _hist_index=hist_index,
        _out_index=out_index,
    )


def lm_loglik(model: NGramLM, tokens: Sequence[str]) -> float:
    """log P(tokens, EOS) under the model; finite and <= 0."""
    return model.loglik(tokens)


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[str, ...]
    logprob: float


def beam_nbest(
    model: NGramLM,
    beam_width: int,
    n: int,
    max_len: int = 16,
) -> list[BeamHypothesis]:
    """Top-n complete sequences by beam search over the model's vocabulary.

    Hypotheses are distinct token sequences sorted by logprob descending,
    ties by token sequence. Expansion ranges over the vocab (UNK is scored
    but never generated). With beam_width at least the number of reachable
    sequences the result equals exhaustive enumeration: extending a prefix
    only lowers its logprob, so pruning is admissible.
    """
    if n < 1 or beam_width < n:
        raise ValueError("require beam_width >= n >= 1")
    vocab_ids = np.arange(len(model.vocab), dtype=np.int64)
    eos_id = model._out_index[EOS]
    # active: parallel lists of (token-id tuple, history id, logprob)
    seqs: list[tuple[int, ...]] = [()]
    hists = np.array([model._hist_index[BOS]], dtype=np.int64)
    logprobs = np.zeros(1, dtype=np.float64)
    finished: dict[tuple[int, ...], float] = {}

    for step in range(max_len + 1):
        rows = model._logp[hists]
        # complete every active hypothesis with EOS; merge duplicate sequences
        for seq, lp in zip(seqs, logprobs + rows[:, eos_id]):
            if seq not in finished or lp > finished[seq]:
                finished[seq] = float(lp)
        if step == max_len:
            break
        cand = logprobs[:, None] + rows[:, vocab_ids]
        flat = cand.ravel()
        if flat.size > beam_width:
            keep = np.argpartition(flat, -beam_width)[-beam_width:]
        else:
            keep = np.arange(flat.size)
        # deterministic order: by score descending, then by candidate index
        keep = keep[np.lexsort((keep, -flat[keep]))]
        nv = len(model.vocab)
        new_seqs, new_hists, new_lps = [], [], []
        for idx in keep:
            parent, tok = divmod(int(idx), nv)
            new_seqs.append(seqs[parent] + (int(tok),))
            new_hists.append(model._hist_index[model.vocab[tok]])
            new_lps.append(float(flat[idx]))
        if n <= len(finished):
            # smoothing makes every completion strictly cheaper than its
            # prefix, so once no active prefix beats the n-th best finished
            # hypothesis the top-n set is final
            nth_best = sorted(finished.values(), reverse=True)[n - 1]
            if not new_lps or max(new_lps) <= nth_best:
                break
        seqs = new_seqs
        hists = np.array(new_hists, dtype=np.int64)
        logprobs = np.array(new_lps, dtype=np.float64)

    complete = [
        (lp, tuple(model.vocab[i] for i in seq))
        for seq, lp in finished.items()
        if seq  # the empty sequence is never a hypothesis
    ]
    if not complete:
        raise DecodeError(f"no complete hypothesis within max_len={max_len}")
    complete.sort(key=lambda item: (-item[0], item[1]))
    return [BeamHypothesis(tokens=toks, logprob=lp) for lp, toks in complete[:n]]


def renormalize_nbest(hyps: Sequence[BeamHypothesis]) -> np.ndarray:
    """Softmax over hypothesis logprobs, with max-subtraction for stability."""
    if not hyps:
        raise ValueError("cannot renormalize an empty hypothesis list")
    lps = np.array([h.logprob for h in hyps], dtype=np.float64)
    shifted = np.exp(lps - lps.max())
    return shifted / shifted.sum()


# --- hashed character-trigram embeddings ------------------------------------

_token_vec_cache: dict[tuple[str, int], np.ndarray] = {}


def _token_vector(token: str, dimension: int) -> np.ndarray:
    key = (token, dimension)
    vec = _token_vec_cache.get(key)
    if vec is not None:
        return vec
    vec = np.zeros(dimension, dtype=np.float64)
    padded = "^" + token + "$"
    for i in range(len(padded) - 2):
        digest = hashlib.md5(padded[i : i + 3].encode("utf-8")).digest()
        idx = int.from_bytes(digest[:8], "little") % dimension
        sign = 1.0 if digest[8] & 1 else -1.0
        vec[idx] += sign
    vec.setflags(write=False)
    _token_vec_cache[key] = vec
    return vec


def hash_embed(tokens: Sequence[str], dimension: int = 256) -> FeatureVector:
    """Signed-hash character-trigram bag embedding, L2-normalized.

    Deterministic across runs and platforms (md5-based hashing, no process
    hash randomization involved). Token order does not matter.
    """
    if not tokens:
        raise ValueError("cannot embed an empty token sequence")
    acc = np.zeros(dimension, dtype=np.float64)
    for tok in tokens:
        acc += _token_vector(tok, dimension)
    acc /= len(tokens)
    norm = np.linalg.norm(acc)
    if norm > 0:
        acc = acc / norm
    return FeatureVector(values=acc)


def embed_examples(
    examples: Sequence[Example], dimension: int = 256
) -> dict[str, FeatureVector]:
    return {
        ex.utterance.id: hash_embed(ex.utterance.tokens, dimension) for ex in examples
    }


# --- distilled conditional translation model --------------------------------


@dataclass
class ConditionalTranslationModel:
    """Estimate of the per-round empirical translation distribution.

    Factorized (the default): one target-side LM per LF template, plus the
    one-hot map from source utterance id to its template, so every source
    utterance sharing an LF shares a model. Non-factorized: one LM per
    source utterance, fitted on just that utterance's own translations (the
    direct, data-starved estimate the factorization exists to avoid).
    """

    per_lf: dict[int, NGramLM]
    lf_of_source: dict[str, int]
    per_source: dict[str, NGramLM]
    factorized: bool = True

    def lm_for_lf(self, template_id: int) -> NGramLM:
        try:
            return self.per_lf[template_id]
        except KeyError:
            raise KeyError(f"no translation model for LF template {template_id}")

    def lm_for_source(self, source_id: str) -> NGramLM:
        if self.factorized:
            return self.lm_for_lf(self.lf_of_source[source_id])
        return self.per_source[source_id]


def distill_translation_model(
    training_pairs: Sequence[tuple[Example, Example]],
    add_k: float = DEFAULT_ADD_K,
    interpolation: float = DEFAULT_INTERPOLATION,
    factorized: bool = True,
) -> ConditionalTranslationModel:
    """Fit the translation model on every bilingual (source, target) pair in
    the current training data. Rebuilt from scratch each selection round.

    Pairs are grouped by the source example's LF template; an LF that ends up
    with no target sentences is excluded with a warning.
    """
    if not training_pairs:
        raise ValueError("no bilingual pairs to distill from")
    by_lf: dict[int, list[tuple[str, ...]]] = {}
    by_source: dict[str, list[tuple[str, ...]]] = {}
    lf_of_source: dict[str, int] = {}
    for src, tgt in training_pairs:
        if src.lf != tgt.lf:
            raise ValueError(
                f"pair {src.utterance.id}/{tgt.utterance.id} does not share an LF"
            )
        tid = src.lf.template_id
        lf_of_source[src.utterance.id] = tid
        if tgt.utterance.tokens:
            by_lf.setdefault(tid, []).append(tgt.utterance.tokens)
            by_source.setdefault(src.utterance.id, []).append(tgt.utterance.tokens)

    per_lf: dict[int, NGramLM] = {}
    for tid in sorted(by_lf):
        per_lf[tid] = train_lm(by_lf[tid], add_k=add_k, interpolation=interpolation)
    missing = sorted(set(lf_of_source.values()) - set(per_lf))
    if missing:
        log.warning("LF templates with no target sentences excluded: %s", missing)
    per_source: dict[str, NGramLM] = {}
    if not factorized:
        per_source = {
            sid: train_lm(sents, add_k=add_k, interpolation=interpolation)
            for sid, sents in by_source.items()
        }
    return ConditionalTranslationModel(
        per_lf=per_lf,
        lf_of_source=lf_of_source,
        per_source=per_source,
        factorized=factorized,
    )
