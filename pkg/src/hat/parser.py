"""Surrogate multilingual semantic parser.

A generative Bayes classifier over per-LF n-gram language models trained on
mixed-language utterances. It exposes exactly the quantities the acquisition
functions need (posterior log-likelihood, argmax parse, perplexity) and
retrains in milliseconds, standing in for a neural encoder-decoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .core import Example, LogicalForm, Utterance
from .textmodel import (
    DEFAULT_ADD_K,
    DEFAULT_INTERPOLATION,
    NGramLM,
    train_lm,
)

__all__ = [
    "SurrogateParser",
    "train_parser",
    "parser_loglik",
    "parse",
    "evaluate_accuracy",
    "perplexity",
]


@dataclass
class SurrogateParser:
    """Class-conditional language models + empirical LF prior."""

    class_models: dict[int, NGramLM]
    lf_prior: dict[int, float]
    lf_by_template: dict[int, LogicalForm]

    def template_ids(self) -> list[int]:
        return sorted(self.class_models)

    def joint_logliks(self, tokens: Sequence[str]) -> tuple[list[int], np.ndarray]:
        """log [P(x|y) * P(y)] for every known template, ascending id order."""
        tids, matrix = self.batch_joint_logliks([tokens])
        return tids, matrix[0]

    def batch_joint_logliks(
        self, sequences: Sequence[Sequence[str]]
    ) -> tuple[list[int], np.ndarray]:
        """Joint log-likelihood matrix, sequences x templates."""
        tids = self.template_ids()
        matrix = np.empty((len(sequences), len(tids)), dtype=np.float64)
        for col, tid in enumerate(tids):
            matrix[:, col] = self.class_models[tid].batch_loglik(sequences)
            matrix[:, col] += np.log(self.lf_prior[tid])
        return tids, matrix

    def posterior_logliks(self, tokens: Sequence[str]) -> tuple[list[int], np.ndarray]:
        tids, joint = self.joint_logliks(tokens)
        return tids, joint - logsumexp(joint)


def train_parser(
    training: Sequence[Example],
    add_k: float = DEFAULT_ADD_K,
    interpolation: float = DEFAULT_INTERPOLATION,
) -> SurrogateParser:
    """Fit one class LM per LF on all utterances mapped to it (source + MT +
    HT together); the prior is the empirical LF frequency."""
    if not training:
        raise ValueError("cannot train a parser on an empty dataset")
    corpora: dict[int, list[tuple[str, ...]]] = {}
    lf_by_template: dict[int, LogicalForm] = {}
    counts: dict[int, int] = {}
    for ex in training:
        tid = ex.lf.template_id
        corpora.setdefault(tid, []).append(ex.utterance.tokens)
        counts[tid] = counts.get(tid, 0) + 1
        lf_by_template.setdefault(tid, ex.lf)
    total = sum(counts.values())
    class_models = {
        tid: train_lm(corpora[tid], add_k=add_k, interpolation=interpolation)
        for tid in sorted(corpora)
    }
    lf_prior = {tid: counts[tid] / total for tid in sorted(counts)}
    return SurrogateParser(
        class_models=class_models, lf_prior=lf_prior, lf_by_template=lf_by_template
    )


def parser_loglik(
    parser: SurrogateParser, utterance: Utterance, lf: LogicalForm
) -> float:
    """Posterior log P(lf | utterance); finite, <= 0."""
    if lf.template_id not in parser.class_models:
        raise KeyError(f"unknown LF template {lf.template_id}")
    tids, post = parser.posterior_logliks(utterance.tokens)
    return float(post[tids.index(lf.template_id)])


def parse(parser: SurrogateParser, utterance: Utterance) -> LogicalForm:
    """Argmax-posterior LF; exact ties break toward the lowest template id."""
    tids, joint = parser.joint_logliks(utterance.tokens)
    best = int(np.argmax(joint))  # first occurrence wins, ids are ascending
    return parser.lf_by_template[tids[best]]


def evaluate_accuracy(parser: SurrogateParser, test: Sequence[Example]) -> float:
    """Fraction of exactly matched LFs (canonical-string equality)."""
    if not test:
        raise ValueError("empty test set")
    tids, matrix = parser.batch_joint_logliks([ex.utterance.tokens for ex in test])
    best = matrix.argmax(axis=1)  # first occurrence wins, ids are ascending
    hits = sum(
        1
        for ex, col in zip(test, best)
        if parser.lf_by_template[tids[col]] == ex.lf
    )
    return hits / len(test)


def perplexity(parser: SurrogateParser, utterance: Utterance, lf: LogicalForm) -> float:
    """exp(-posterior loglik / (#tokens + 1)); 1.0 at full confidence."""
    ll = parser_loglik(parser, utterance, lf)
    return float(np.exp(-ll / (len(utterance.tokens) + 1)))
